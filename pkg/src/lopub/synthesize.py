"""Synthetic dataset generation from junction-tree cliques.

Each connected component of the junction forest is traversed from a
randomly chosen root clique; the root is sampled from its joint estimate
and every neighbour from its conditional given the separator values
already drawn. Clique joints are estimated once and cached. Rows are
sampled with inverse-CDF lookups under one random stream per row index, so
output is reproducible and row-parallel-safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from lopub.encode import ReportSet
from lopub.estimate import JointDistribution, em_jd, hybrid_jd, lasso_jd
from lopub.reduce import JunctionTree
from lopub.schema import Dataset

_METHODS = {"em": em_jd, "lasso": lasso_jd, "hybrid": hybrid_jd}


class SynthesisError(ValueError):
    pass


@dataclass
class PlanStep:
    clique_index: int
    clique: tuple[int, ...]
    assign: tuple[int, ...]
    given: tuple[int, ...]


@dataclass
class SynthesisPlan:
    """Visit order over cliques; each step assigns `assign` conditioned on
    the already-assigned `given` attributes."""

    steps: list[PlanStep]
    component_starts: list[int]

    def assigned_attributes(self) -> list[int]:
        out = []
        for s in self.steps:
            out.extend(s.assign)
        return out


def plan(tree: JunctionTree, rng: np.random.Generator) -> SynthesisPlan:
    """Breadth-first traversal of the junction forest.

    A random unvisited clique roots each component; traversal follows tree
    edges, and every step conditions on the intersection of the clique with
    everything sampled so far (its separator, by the running intersection
    property).
    """
    n_cliques = len(tree.cliques)
    neighbors: dict[int, list[int]] = {i: [] for i in range(n_cliques)}
    for a, b in tree.tree_edges:
        neighbors[a].append(b)
        neighbors[b].append(a)
    for lst in neighbors.values():
        lst.sort()
    unvisited = list(range(n_cliques))
    assigned: set[int] = set()
    steps: list[PlanStep] = []
    component_starts: list[int] = []
    while unvisited:
        root = unvisited[int(rng.integers(len(unvisited)))]
        component_starts.append(len(steps))
        queue = [root]
        visited_here = {root}
        while queue:
            ci = queue.pop(0)
            clique = tree.cliques[ci]
            given = tuple(a for a in clique if a in assigned)
            assign = tuple(a for a in clique if a not in assigned)
            if assign:
                steps.append(PlanStep(clique_index=ci, clique=clique,
                                      assign=assign, given=given))
                assigned.update(assign)
            for nb in neighbors[ci]:
                if nb not in visited_here:
                    visited_here.add(nb)
                    queue.append(nb)
        unvisited = [c for c in unvisited if c not in visited_here]
    return SynthesisPlan(steps=steps, component_starts=component_starts)


def conditional_from_joint(joint: JointDistribution, given: dict[int, int]) -> np.ndarray:
    """Conditional table over the clique's unassigned attributes.

    Slices the joint at the given values and renormalizes. If the slice
    carries zero mass (a separator combination the estimate never saw),
    falls back to the joint's marginal over the remaining attributes so
    sampling never stalls.
    """
    cluster = joint.cluster
    for a in given:
        if a not in cluster:
            raise SynthesisError(f"conditioning attribute {a} not in cluster {cluster}")
    rest = tuple(a for a in cluster if a not in given)
    if not rest:
        raise SynthesisError("conditioning on every attribute leaves nothing to sample")
    indexer = tuple(given[a] if a in given else slice(None) for a in cluster)
    sl = joint.probs[indexer]
    mass = float(sl.sum())
    if mass <= 0.0:
        marg = joint.marginal(rest)
        return marg / marg.sum()
    return sl / mass


def _step_sampler(joint: JointDistribution, step: PlanStep, cards):
    """Precompute a row of conditional CDFs for one plan step.

    Returns (given_cards, cdf) where cdf[g] is the cumulative distribution
    over the flattened assign-cells for the g-th given-combination.
    """
    cluster = step.clique
    axes_given = [cluster.index(a) for a in step.given]
    axes_assign = [cluster.index(a) for a in step.assign]
    table = np.transpose(joint.probs, axes=axes_given + axes_assign)
    n_given = int(np.prod([cards[a] for a in step.given])) if step.given else 1
    n_assign = int(np.prod([cards[a] for a in step.assign]))
    flat = table.reshape(n_given, n_assign)
    row_mass = flat.sum(axis=1)
    marginal = flat.sum(axis=0)
    total = marginal.sum()
    marginal = (np.full(n_assign, 1.0 / n_assign) if total <= 0 else marginal / total)
    out = np.empty_like(flat)
    for g in range(n_given):
        out[g] = flat[g] / row_mass[g] if row_mass[g] > 0 else marginal
    return np.cumsum(out, axis=1)


@dataclass
class SyntheticDataset:
    """Published dataset plus the provenance needed to reproduce it."""

    dataset: Dataset
    meta: dict = field(default_factory=dict)
    clique_estimates: dict = field(default_factory=dict, repr=False)


def synthesize(reports: ReportSet, tree: JunctionTree, method: str = "hybrid",
               n_out: int | None = None, seed: int = 0,
               delta: float = 1e-3) -> SyntheticDataset:
    """Estimate clique joints and sample a schema-valid synthetic dataset.

    ``n_out`` defaults to the number of reports. Row i draws from its own
    stream seeded by (seed, 1, i); the traversal plan uses (seed, 0).
    """
    if method not in _METHODS:
        raise SynthesisError(f"unknown method {method!r}")
    schema = reports.schema
    n_out = reports.n if n_out is None else int(n_out)
    if n_out < 1:
        raise SynthesisError("n_out must be >= 1")
    cards = schema.cardinalities
    estimator = _METHODS[method]
    cache: dict[tuple[int, ...], JointDistribution] = {}
    for clique in tree.cliques:
        key = tuple(clique)
        if key not in cache:
            try:
                if method == "lasso":
                    cache[key] = estimator(reports, key)
                else:
                    cache[key] = estimator(reports, key, delta=delta)
            except Exception as exc:
                raise SynthesisError(f"estimation failed on clique {key}: {exc}") from exc
    the_plan = plan(tree, np.random.default_rng((seed, 0)))
    samplers = []
    for step in the_plan.steps:
        joint = cache[tuple(step.clique)]
        cdf = _step_sampler(joint, step, cards)
        given_cards = tuple(cards[a] for a in step.given)
        assign_cards = tuple(cards[a] for a in step.assign)
        samplers.append((step, given_cards, assign_cards, cdf))
    rows = np.zeros((n_out, schema.d), dtype=np.int64)
    for i in range(n_out):
        rng = np.random.default_rng((seed, 1, i))
        u = rng.random(len(samplers))
        row = rows[i]
        for t, (step, given_cards, assign_cards, cdf) in enumerate(samplers):
            if step.given:
                g = int(np.ravel_multi_index(tuple(row[a] for a in step.given), given_cards))
            else:
                g = 0
            cell = int(np.searchsorted(cdf[g], u[t], side="right"))
            cell = min(cell, cdf.shape[1] - 1)
            values = np.unravel_index(cell, assign_cards)
            for a, v in zip(step.assign, values):
                row[a] = v
    dataset = Dataset(schema=schema, rows=rows)
    meta = {"f": reports.f, "method": method, "seed": seed, "n": n_out,
            "schema_digest": schema.digest(),
            "cliques": [[j + 1 for j in c] for c in tree.cliques]}
    return SyntheticDataset(dataset=dataset, meta=meta, clique_estimates=cache)
