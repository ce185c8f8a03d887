"""Command-line interface.

Verbs: encode, estimate, deps, synthesize, eval, e2e, bench. Attribute
indices on the command line and in JSON artifacts are 1-based (matching
the A_1..A_d naming convention); attribute names are accepted wherever a
cluster is given.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from lopub import bench as bench_mod
from lopub.encode import ReportSet, encode_dataset, params_for_schema, privacy_epsilon
from lopub.estimate import em_jd, hybrid_jd, lasso_jd
from lopub.generate import model_from_config
from lopub.metrics import avd, correlation_rates, empirical_joint
from lopub.pipeline import PipelineConfig, empirical_graph, run_pipeline
from lopub.reduce import (build_dependency_graph, deps_from_json_dict, deps_to_json_dict,
                          junction_tree, prune_pairs)
from lopub.schema import Dataset, Schema, dataset_to_csv, load_dataset, load_schema
from lopub.synthesize import synthesize

_ESTIMATORS = {"em": em_jd, "lasso": lasso_jd, "hybrid": hybrid_jd}


def _parse_cluster(spec: str, schema: Schema) -> tuple[int, ...]:
    """Parse '2,3' (1-based indices) or 'Gender,Education' into 0-based indices."""
    out = []
    for tok in spec.split(","):
        tok = tok.strip()
        if tok.isdigit():
            idx = int(tok) - 1
            if not (0 <= idx < schema.d):
                raise SystemExit(f"attribute index {tok} out of range 1..{schema.d}")
            out.append(idx)
        else:
            out.append(schema.attribute_index(tok))
    return tuple(out)


def _read(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _write_json(path: str, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)


def _cmd_encode(args) -> int:
    schema = load_schema(_read(args.schema))
    data = load_dataset(_read(args.data), schema)
    if args.sample_rate < 1.0:
        rng = np.random.default_rng((args.seed, 999))
        keep = max(1, int(round(data.n * args.sample_rate)))
        idx = np.sort(rng.choice(data.n, size=keep, replace=False))
        data = Dataset(schema=schema, rows=data.rows[idx])
    params = params_for_schema(schema, p=args.p, m_max=args.m_max)
    reports = encode_dataset(data, params, args.f, args.seed)
    reports.save(args.out)
    eps = privacy_epsilon(schema.d, params[0].h, args.f)
    print(f"encoded {reports.n} reports, {reports.total_bits} bits each, "
          f"epsilon={eps:.4g} -> {args.out}")
    return 0


def _cmd_estimate(args) -> int:
    reports = ReportSet.load(args.reports)
    cluster = _parse_cluster(args.cluster, reports.schema)
    estimator = _ESTIMATORS[args.method]
    if args.method == "lasso":
        est = estimator(reports, cluster)
    else:
        est = estimator(reports, cluster, delta=args.delta)
    _write_json(args.out, est.to_json_dict(reports.schema))
    print(f"estimated {args.method} joint over cluster {args.cluster} -> {args.out}")
    return 0


def _cmd_deps(args) -> int:
    reports = ReportSet.load(args.reports)
    pruning = None
    pairs = None
    default_edge = False
    if args.prune:
        kind = args.kind
        if kind == "auto":
            kind = ("binary" if all(c == 2 for c in reports.schema.cardinalities)
                    else "non-binary")
        pruning = prune_pairs(reports, args.phi, kind, method=args.method)
        pairs = pruning.pairs
        default_edge = pruning.default_edge
    graph = build_dependency_graph(reports, args.phi, method=args.method,
                                   pairs=pairs, default_edge=default_edge,
                                   threads=args.threads)
    tree = junction_tree(graph)
    _write_json(args.out, deps_to_json_dict(graph, tree, reports.schema, pruning, args.method))
    print(f"{len(graph.edges())} edge(s), {len(tree.cliques)} clique(s) -> {args.out}")
    return 0


def _cmd_synthesize(args) -> int:
    reports = ReportSet.load(args.reports)
    with open(args.deps, "r", encoding="utf-8") as fh:
        _, tree = deps_from_json_dict(json.load(fh))
    synth = synthesize(reports, tree, method=args.method, n_out=args.n, seed=args.seed)
    Path(args.out).write_text(dataset_to_csv(synth.dataset), encoding="utf-8")
    _write_json(str(Path(args.out).with_suffix("")) + ".meta.json", synth.meta)
    print(f"synthesized {synth.dataset.n} rows -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    schema = load_schema(_read(args.schema))
    source = load_dataset(_read(args.source), schema)
    synth = load_dataset(_read(args.synthetic), schema)
    doc: dict = {"n_source": source.n, "n_synthetic": synth.n}
    doc["marginal_avd"] = {
        schema.attributes[j].name: avd(empirical_joint(synth, (j,)),
                                       empirical_joint(source, (j,)))
        for j in range(schema.d)
    }
    if args.deps:
        with open(args.deps, "r", encoding="utf-8") as fh:
            deps_doc = json.load(fh)
        graph, tree = deps_from_json_dict(deps_doc)
        doc["clique_avd"] = [
            {"clique": [j + 1 for j in c],
             "avd": avd(empirical_joint(synth, c), empirical_joint(source, c))}
            for c in tree.cliques
        ]
        truth = empirical_graph(source, deps_doc["phi"])
        acc, fp, tn = correlation_rates(graph, truth)
        doc["correlation"] = {"accuracy": acc, "false_positive": fp, "true_negative": tn}
    _write_json(args.out, doc)
    print(f"evaluation -> {args.out}")
    return 0


def _cmd_e2e(args) -> int:
    cfg = PipelineConfig(
        f=args.f, p=args.p, m_max=args.m_max, phi=args.phi, method=args.method,
        deps_method=args.deps_method, seed=args.seed, n_out=args.n_out,
        sample_rate=args.sample_rate, prune=args.prune, dataset_kind=args.kind,
        delta=args.delta, threads=args.threads, out_dir=args.out_dir,
    )
    if args.generator:
        cfg.generator = model_from_config(_read(args.generator))
        cfg.n_source = args.n
    else:
        if not (args.schema and args.data):
            raise SystemExit("e2e needs either --generator or --schema plus --data")
        schema = load_schema(_read(args.schema))
        cfg.dataset = load_dataset(_read(args.data), schema)
    report = run_pipeline(cfg)
    print(json.dumps(report.to_json_dict(), indent=2))
    return 0


def _cmd_bench(args) -> int:
    out = args.out or f"bench_{args.series}.csv"
    if args.series == "f":
        rows = bench_mod.series_f(out, seed=args.seed, n=args.n)
    elif args.series == "n":
        rows = bench_mod.series_n(out, seed=args.seed)
    elif args.series == "k":
        rows = bench_mod.series_k(out, seed=args.seed, n=args.n, combos=args.combos)
    else:
        rows = bench_mod.kernel_bench(out, seed=args.seed)
    for row in rows:
        print("  ".join(str(x) for x in row))
    print(f"series -> {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lopub",
                                     description="Locally private data collection and "
                                                 "synthetic publication toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="hash, randomize, and write client reports")
    p.add_argument("--schema", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--f", type=float, default=0.5, help="flip probability")
    p.add_argument("--p", type=float, default=1 / 16, help="Bloom false-positive rate")
    p.add_argument("--m-max", type=int, default=None)
    p.add_argument("--sample-rate", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_encode)

    p = sub.add_parser("estimate", help="estimate a cluster's joint distribution")
    p.add_argument("--reports", required=True)
    p.add_argument("--cluster", required=True,
                   help="comma-separated 1-based attribute indices or names")
    p.add_argument("--method", choices=sorted(_ESTIMATORS), default="hybrid")
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("deps", help="learn the dependency graph and junction tree")
    p.add_argument("--reports", required=True)
    p.add_argument("--phi", type=float, default=0.4)
    p.add_argument("--method", choices=sorted(_ESTIMATORS), default="hybrid")
    p.add_argument("--prune", action="store_true")
    p.add_argument("--kind", choices=["auto", "binary", "non-binary"], default="auto")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_deps)

    p = sub.add_parser("synthesize", help="sample a synthetic dataset from cliques")
    p.add_argument("--reports", required=True)
    p.add_argument("--deps", required=True)
    p.add_argument("--method", choices=sorted(_ESTIMATORS), default="hybrid")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synthesize)

    p = sub.add_parser("eval", help="compare a synthetic dataset against its source")
    p.add_argument("--schema", required=True)
    p.add_argument("--source", required=True)
    p.add_argument("--synthetic", required=True)
    p.add_argument("--deps", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("e2e", help="run the full pipeline and print the report")
    p.add_argument("--schema")
    p.add_argument("--data")
    p.add_argument("--generator", help="planted-model config JSON")
    p.add_argument("--n", type=int, default=10_000, help="rows to draw in generator mode")
    p.add_argument("--f", type=float, default=0.5)
    p.add_argument("--p", type=float, default=1 / 16)
    p.add_argument("--m-max", type=int, default=None)
    p.add_argument("--phi", type=float, default=0.4)
    p.add_argument("--method", choices=sorted(_ESTIMATORS), default="hybrid")
    p.add_argument("--deps-method", choices=sorted(_ESTIMATORS), default="hybrid")
    p.add_argument("--n-out", type=int, default=None)
    p.add_argument("--sample-rate", type=float, default=1.0)
    p.add_argument("--prune", action="store_true")
    p.add_argument("--kind", choices=["auto", "binary", "non-binary"], default="auto")
    p.add_argument("--delta", type=float, default=1e-3)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=_cmd_e2e)

    p = sub.add_parser("bench", help="emit benchmark CSV series")
    p.add_argument("--series", choices=["f", "k", "n", "kernels"], required=True)
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--combos", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
