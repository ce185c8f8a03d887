"""Dependency structure learning and dimension reduction.

Pairwise mutual information is computed from estimated 2-way joints; pairs
whose MI clears a cardinality-aware threshold become edges of an undirected
dependency graph. The graph is triangulated (min-fill elimination, ties by
lowest attribute index) and decomposed into junction-tree cliques, which
are the low-dimensional clusters the synthesizer samples from.

An entropy-based pruning pass can skip most pairwise tests: attributes are
ranked by relative entropy H(A)/|domain| and only the top floor(d*(1-phi))
are tested (for binary data the polarity flips: everything starts
dependent and the lowest-entropy attributes are searched for independence).
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from lopub.encode import ReportSet
from lopub.estimate import EstimationWarning, em_jd, hybrid_jd, lasso_jd

_METHODS = {"em": em_jd, "lasso": lasso_jd, "hybrid": hybrid_jd}


class ReduceError(ValueError):
    pass


@dataclass
class DependencyGraph:
    """Symmetric adjacency over attributes; diagonal entries are stored for
    display parity but ignored by all graph algorithms."""

    adjacency: np.ndarray = field(repr=False)
    phi: float = 0.0
    mi: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=bool)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ReduceError("adjacency must be square")
        if (adj != adj.T).any():
            raise ReduceError("adjacency must be symmetric")
        self.adjacency = adj

    @property
    def d(self) -> int:
        return self.adjacency.shape[0]

    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i, j in combinations(range(self.d), 2) if self.adjacency[i, j]]


@dataclass
class JunctionTree:
    """Cliques of the triangulated graph plus the spanning-forest structure."""

    d: int
    cliques: list[tuple[int, ...]]
    tree_edges: list[tuple[int, int]]
    separators: list[tuple[int, ...]]


def mutual_information(joint) -> float:
    """Natural-log mutual information of a 2-D probability table.

    Marginals are taken from the table itself, which keeps the result
    non-negative up to roundoff; zero cells contribute nothing, and tiny
    negative totals from floating error are clipped to 0.
    """
    p = np.asarray(joint, dtype=np.float64)
    if p.ndim != 2:
        raise ReduceError("mutual information needs a 2-D joint table")
    row = p.sum(axis=1)
    col = p.sum(axis=0)
    mask = p > 0.0
    denom = np.outer(row, col)
    terms = np.zeros_like(p)
    terms[mask] = p[mask] * np.log(p[mask] / denom[mask])
    return max(0.0, float(terms.sum()))


def dependency_threshold(card_m: int, card_n: int, phi: float) -> float:
    """Edge threshold: min(|domain_m|-1, |domain_n|-1) * phi^2 / 2."""
    if not (0.0 <= phi <= 1.0):
        raise ReduceError(f"phi must be in [0,1], got {phi}")
    return min(card_m - 1, card_n - 1) * phi * phi / 2.0


def _estimator(method: str):
    try:
        return _METHODS[method]
    except KeyError:
        raise ReduceError(f"unknown method {method!r}; expected one of {sorted(_METHODS)}") from None


def entropy(probs) -> float:
    p = np.asarray(probs, dtype=np.float64).reshape(-1)
    mask = p > 0
    return float(-(p[mask] * np.log(p[mask])).sum())


@dataclass
class PruningReport:
    """Which attributes were kept, which pairs get tested, and the default
    edge state for everything skipped."""

    kind: str
    kept: tuple[int, ...]
    pairs: list[tuple[int, int]]
    default_edge: bool
    relative_entropy: np.ndarray
    disabled: bool
    total_pairs: int

    @property
    def reduction_ratio(self) -> float:
        if self.total_pairs == 0:
            return 0.0
        return 1.0 - len(self.pairs) / self.total_pairs

    def to_json_dict(self) -> dict:
        return {
            "kind": self.kind,
            "kept": [j + 1 for j in self.kept],
            "pairs_tested": len(self.pairs),
            "total_pairs": self.total_pairs,
            "reduction_ratio": self.reduction_ratio,
            "default_edge": self.default_edge,
            "disabled": self.disabled,
            "relative_entropy": [float(x) for x in self.relative_entropy],
        }


def prune_pairs(reports: ReportSet, phi: float, dataset_kind: str,
                method: str = "lasso") -> PruningReport:
    """Entropy-based pruning of the pairwise MI tests.

    Ranks attributes by relative entropy RH = H(A)/|domain| from 1-way
    estimates and keeps floor(d*(1-phi)) of them: the highest-RH ones for
    non-binary data (untested pairs default to independent), the lowest-RH
    ones for binary data (untested pairs default to dependent). If fewer
    than 2 attributes would be kept, pruning is disabled.
    """
    if dataset_kind not in ("binary", "non-binary"):
        raise ReduceError(f"dataset_kind must be 'binary' or 'non-binary', got {dataset_kind!r}")
    if not (0.0 <= phi <= 1.0):
        raise ReduceError(f"phi must be in [0,1], got {phi}")
    d = reports.schema.d
    estimator = _estimator(method)
    rh = np.empty(d)
    for j in range(d):
        est = estimator(reports, (j,))
        rh[j] = entropy(est.probs) / reports.schema.attributes[j].cardinality
    total_pairs = d * (d - 1) // 2
    keep_count = int(d * (1.0 - phi))
    all_pairs = list(combinations(range(d), 2))
    if keep_count < 2:
        return PruningReport(kind=dataset_kind, kept=tuple(range(d)), pairs=all_pairs,
                             default_edge=False, relative_entropy=rh,
                             disabled=True, total_pairs=total_pairs)
    if keep_count >= d:
        kept = tuple(range(d))
    elif dataset_kind == "non-binary":
        kept = tuple(sorted(sorted(range(d), key=lambda j: (-rh[j], j))[:keep_count]))
    else:
        kept = tuple(sorted(sorted(range(d), key=lambda j: (rh[j], j))[:keep_count]))
    pairs = list(combinations(kept, 2))
    return PruningReport(kind=dataset_kind, kept=kept, pairs=pairs,
                         default_edge=(dataset_kind == "binary" and len(kept) < d),
                         relative_entropy=rh, disabled=False, total_pairs=total_pairs)


def build_dependency_graph(reports: ReportSet, phi: float, method: str = "lasso",
                           pairs: list[tuple[int, int]] | None = None,
                           default_edge: bool = False,
                           threads: int = 1) -> DependencyGraph:
    """Estimate pairwise joints, compare MI against the threshold, and
    return the dependency graph.

    ``pairs`` restricts which pairs are tested (see :func:`prune_pairs`);
    untested pairs take ``default_edge``. A failed pair estimation logs a
    warning and leaves the pair edgeless. Diagonal entries are set (stored
    self-loops) but ignored by everything downstream.
    """
    schema = reports.schema
    d = schema.d
    if not (0.0 <= phi <= 1.0):
        raise ReduceError(f"phi must be in [0,1], got {phi}")
    estimator = _estimator(method)
    if pairs is None:
        pairs = list(combinations(range(d), 2))
        default_edge = False
    adjacency = np.full((d, d), default_edge, dtype=bool)
    np.fill_diagonal(adjacency, True)
    mi = np.full((d, d), np.nan)

    def _job(pair):
        m, n = pair
        try:
            est = estimator(reports, (m, n))
        except Exception as exc:  # propagate estimation failure as a skip
            return pair, None, exc
        return pair, mutual_information(est.probs), None

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_job, pairs))
    else:
        results = [_job(p) for p in pairs]
    for (m, n), value, exc in results:
        if exc is not None:
            warnings.warn(f"pair ({m},{n}) estimation failed ({exc}); edge left unset",
                          EstimationWarning)
            adjacency[m, n] = adjacency[n, m] = False
            continue
        mi[m, n] = mi[n, m] = value
        tau = dependency_threshold(schema.attributes[m].cardinality,
                                   schema.attributes[n].cardinality, phi)
        edge = value >= tau
        adjacency[m, n] = adjacency[n, m] = edge
    return DependencyGraph(adjacency=adjacency, phi=phi, mi=mi)


def triangulate(adjacency) -> tuple[np.ndarray, list[int], list[tuple[int, ...]]]:
    """Min-fill elimination (ties by lowest index).

    Returns the chordal (fill-in) adjacency, the elimination order, and the
    candidate cliques recorded as each vertex was eliminated.
    """
    adj = np.asarray(adjacency, dtype=bool)
    d = adj.shape[0]
    work = {v: {int(x) for x in np.flatnonzero(adj[v])} - {v} for v in range(d)}
    chordal = np.array(adj)
    np.fill_diagonal(chordal, False)
    order: list[int] = []
    cliques: list[tuple[int, ...]] = []
    remaining = set(range(d))
    while remaining:
        best, best_cost = None, None
        for v in sorted(remaining):
            nb = sorted(work[v])
            cost = sum(1 for a, b in combinations(nb, 2) if b not in work[a])
            if best_cost is None or cost < best_cost:
                best, best_cost = v, cost
        nb = sorted(work[best])
        order.append(best)
        cliques.append(tuple(sorted([best, *nb])))
        for a, b in combinations(nb, 2):
            if b not in work[a]:
                work[a].add(b)
                work[b].add(a)
                chordal[a, b] = chordal[b, a] = True
        for a in nb:
            work[a].discard(best)
        remaining.discard(best)
        del work[best]
    return chordal, order, cliques


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


def junction_tree(graph: DependencyGraph) -> JunctionTree:
    """Triangulate the dependency graph and build its junction forest.

    Cliques are the maximal cliques of the chordal graph; tree edges come
    from a maximum-weight spanning forest on separator sizes, which gives
    the running intersection property. Isolated attributes end up as
    singleton cliques.
    """
    _, _, elim_cliques = triangulate(graph.adjacency)
    unique = sorted(set(elim_cliques))
    maximal = [c for c in unique
               if not any(set(c) < set(o) for o in unique if o != c)]
    maximal.sort()
    candidates = []
    for a, b in combinations(range(len(maximal)), 2):
        sep = tuple(sorted(set(maximal[a]) & set(maximal[b])))
        if sep:
            candidates.append((-len(sep), maximal[a], maximal[b], a, b, sep))
    candidates.sort()
    uf = _UnionFind(len(maximal))
    tree_edges, separators = [], []
    for _, _, _, a, b, sep in candidates:
        if uf.union(a, b):
            tree_edges.append((a, b))
            separators.append(sep)
    return JunctionTree(d=graph.d, cliques=maximal,
                        tree_edges=tree_edges, separators=separators)


def deps_to_json_dict(graph: DependencyGraph, tree: JunctionTree,
                      schema, pruning: PruningReport | None = None,
                      method: str | None = None) -> dict:
    mi = None
    if graph.mi is not None:
        mi = [[None if np.isnan(x) else float(x) for x in row] for row in graph.mi]
    return {
        "d": graph.d,
        "phi": graph.phi,
        "method": method,
        "attributes": list(schema.names),
        "adjacency": graph.adjacency.astype(int).tolist(),
        "mi": mi,
        "cliques": [[j + 1 for j in c] for c in tree.cliques],
        "tree_edges": [list(e) for e in tree.tree_edges],
        "separators": [[j + 1 for j in s] for s in tree.separators],
        "pruning": pruning.to_json_dict() if pruning is not None else None,
    }


def deps_from_json_dict(doc: dict) -> tuple[DependencyGraph, JunctionTree]:
    adjacency = np.asarray(doc["adjacency"], dtype=bool)
    mi = None
    if doc.get("mi") is not None:
        mi = np.asarray([[np.nan if x is None else x for x in row] for row in doc["mi"]])
    graph = DependencyGraph(adjacency=adjacency, phi=doc["phi"], mi=mi)
    tree = JunctionTree(
        d=doc["d"],
        cliques=[tuple(j - 1 for j in c) for c in doc["cliques"]],
        tree_edges=[tuple(e) for e in doc["tree_edges"]],
        separators=[tuple(j - 1 for j in s) for s in doc["separators"]],
    )
    return graph, tree
