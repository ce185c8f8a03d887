"""Benchmark series: metric-vs-parameter CSV emission and kernel timing.

``series f|k|n`` sweep one knob of the pipeline or estimators on a seeded
planted model and emit flat CSV rows for plotting. ``series kernels``
times the numba kernels against their pure-numpy fallbacks on identical
inputs.
"""

from __future__ import annotations

import csv
import time

import numpy as np

from lopub import _kernels
from lopub.encode import encode_dataset, params_for_schema
from lopub.estimate import em_jd, hybrid_jd, lasso_jd
from lopub.generate import PlantedClique, PlantedModel, coupled_joint, random_joint
from lopub.metrics import avd
from lopub.pipeline import PipelineConfig, run_pipeline
from lopub.schema import AttributeDomain, Schema

_ESTIMATORS = {"em": em_jd, "lasso": lasso_jd, "hybrid": hybrid_jd}


def _demo_model(seed: int = 7) -> PlantedModel:
    """Small planted model with one strong pair and one 3-way clique."""
    rng = np.random.default_rng(seed)
    domains = tuple(
        AttributeDomain(name=f"A{j + 1}", values=tuple(f"v{i}" for i in range(card)))
        for j, card in enumerate((3, 3, 2, 4, 3, 2))
    )
    schema = Schema(attributes=domains)
    cliques = [
        PlantedClique(attrs=(0, 1), probs=coupled_joint(3, 0.85)),
        PlantedClique(attrs=(2, 3, 4), probs=random_joint((2, 4, 3), rng, 0.6)),
    ]
    return PlantedModel(schema=schema, cliques=cliques)


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def series_f(out_csv, f_values=(0.1, 0.3, 0.5, 0.7, 0.9), n: int = 10_000,
             seed: int = 0, method: str = "hybrid") -> list[list]:
    """End-to-end metrics as the flip probability varies."""
    model = _demo_model()
    rows = []
    for f in f_values:
        cfg = PipelineConfig(generator=model, n_source=n, f=f, method=method,
                             seed=seed, phi=0.4)
        rep = run_pipeline(cfg)
        mean_clique = float(np.mean([c["avd"] for c in rep.clique_avd]))
        mean_marginal = float(np.mean(list(rep.marginal_avd.values())))
        rows.append([f, rep.epsilon, mean_clique, mean_marginal,
                     rep.correlation["accuracy"], sum(rep.timings.values())])
    _write_csv(out_csv, ["f", "epsilon", "mean_clique_avd", "mean_marginal_avd",
                         "correlation_accuracy", "total_seconds"], rows)
    return rows


def series_n(out_csv, n_values=(1_000, 5_000, 20_000), f: float = 0.5,
             seed: int = 0, method: str = "hybrid") -> list[list]:
    """End-to-end metrics as the number of users varies."""
    model = _demo_model()
    rows = []
    for n in n_values:
        cfg = PipelineConfig(generator=model, n_source=int(n), f=f, method=method,
                             seed=seed, phi=0.4)
        rep = run_pipeline(cfg)
        mean_clique = float(np.mean([c["avd"] for c in rep.clique_avd]))
        mean_marginal = float(np.mean(list(rep.marginal_avd.values())))
        rows.append([n, mean_clique, mean_marginal,
                     rep.correlation["accuracy"], sum(rep.timings.values())])
    _write_csv(out_csv, ["n", "mean_clique_avd", "mean_marginal_avd",
                         "correlation_accuracy", "total_seconds"], rows)
    return rows


def series_k(out_csv, k_values=(1, 2, 3), n: int = 10_000, f: float = 0.5,
             seed: int = 0, combos: int = 5,
             methods=("em", "lasso", "hybrid")) -> list[list]:
    """Estimator accuracy/time on randomly chosen k-attribute clusters.

    Cluster choices are seeded so runs are reproducible; AVD is measured
    against the raw source frequencies.
    """
    from lopub.metrics import empirical_joint

    model = _demo_model()
    rng = np.random.default_rng(seed)
    source = model.sample(n, np.random.default_rng((seed, 11)))
    params = params_for_schema(source.schema, p=1 / 16)
    reports = encode_dataset(source, params, f, seed)
    _kernels.warmup()
    rows = []
    d = source.schema.d
    for k in k_values:
        clusters = []
        for _ in range(combos):
            clusters.append(tuple(sorted(rng.choice(d, size=k, replace=False).tolist())))
        for method in methods:
            estimator = _ESTIMATORS[method]
            errs, secs = [], []
            for cluster in clusters:
                t0 = time.perf_counter()
                est = estimator(reports, cluster)
                secs.append(time.perf_counter() - t0)
                errs.append(avd(est.probs, empirical_joint(source, cluster)))
            rows.append([k, method, float(np.mean(errs)), float(np.mean(secs))])
    _write_csv(out_csv, ["k", "method", "mean_avd", "mean_seconds"], rows)
    return rows


def _time_call(fn, *args, repeats: int = 3) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_bench(out_csv=None, n: int = 20_000, candidates: int = 64,
                 rows_cd: int = 72, cols_cd: int = 256, seed: int = 0) -> list[list]:
    """Time each hot kernel under the numba backend and the numpy fallback.

    The numba path is skipped (with a note) when numba is unavailable or
    disabled via LOPUB_DISABLE_NUMBA.
    """
    rng = np.random.default_rng(seed)
    L = rng.random((n, candidates))
    L /= L.max(axis=1, keepdims=True)
    p0 = np.full(candidates, 1.0 / candidates)
    scale = np.zeros(n)
    X = rng.integers(0, 2, size=(rows_cd, cols_cd)).astype(np.float64)
    X[0] += 1.0  # no all-zero column (kernel divides by column norms)
    y = X @ rng.dirichlet(np.full(cols_cd, 0.5)) * n + rng.normal(0, 5.0, rows_cd)
    beta0 = np.zeros(cols_cd)
    rows = []
    em_args = (L, p0, scale, 1e-6, 60)
    cd_args = (X, y, 1.0, beta0, 1e-9, 2000)
    rows.append(["em_loop", "numpy", f"{n}x{candidates}",
                 _time_call(_kernels.em_loop_numpy, *em_args)])
    rows.append(["cd_nnlasso", "numpy", f"{rows_cd}x{cols_cd}",
                 _time_call(_kernels.cd_nnlasso_numpy, *cd_args)])
    if _kernels.USING_NUMBA:
        _kernels.warmup()
        rows.append(["em_loop", "numba", f"{n}x{candidates}",
                     _time_call(_kernels.em_loop, *em_args)])
        rows.append(["cd_nnlasso", "numba", f"{rows_cd}x{cols_cd}",
                     _time_call(_kernels.cd_nnlasso, *cd_args)])
    else:
        rows.append(["em_loop", "numba", "unavailable", float("nan")])
        rows.append(["cd_nnlasso", "numba", "unavailable", float("nan")])
    if out_csv is not None:
        _write_csv(out_csv, ["kernel", "backend", "size", "seconds"], rows)
    return rows
