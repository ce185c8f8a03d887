"""Evaluation metrics: distribution distance and edge-identification rates."""

from __future__ import annotations

import numpy as np

from lopub.schema import Dataset


class MetricError(ValueError):
    pass


def avd(p, q) -> float:
    """Average variant distance: half the l1 distance between two tables."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise MetricError(f"shape mismatch: {p.shape} vs {q.shape}")
    for name, t in (("first", p), ("second", q)):
        if abs(float(t.sum()) - 1.0) > 1e-6:
            raise MetricError(f"{name} table sums to {t.sum()}, not 1")
    return 0.5 * float(np.abs(p - q).sum())


def _adjacency(graph) -> np.ndarray:
    adj = np.asarray(getattr(graph, "adjacency", graph), dtype=bool)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise MetricError("adjacency must be square")
    return adj


def correlation_rates(estimated, truth) -> tuple[float, float, float]:
    """Compare an estimated dependency graph against the true one.

    Over all attribute pairs: accuracy is the fraction classified the same
    way; false_positive the fraction of added edges (present only in the
    estimate); true_negative the fraction of lost edges (present only in
    the truth -- the historical label for what is really a false negative).
    The three always sum to 1.
    """
    est = _adjacency(estimated)
    tru = _adjacency(truth)
    if est.shape != tru.shape:
        raise MetricError(f"dimension mismatch: {est.shape} vs {tru.shape}")
    d = est.shape[0]
    iu = np.triu_indices(d, k=1)
    e, t = est[iu], tru[iu]
    total = e.size
    if total == 0:
        return 1.0, 0.0, 0.0
    fp = float(np.count_nonzero(e & ~t)) / total
    tn = float(np.count_nonzero(~e & t)) / total
    acc = float(np.count_nonzero(e == t)) / total
    return acc, fp, tn


def empirical_joint(dataset: Dataset, cluster) -> np.ndarray:
    """Frequency table of a dataset over a cluster of attribute indices."""
    cluster = tuple(sorted(int(j) for j in cluster))
    if dataset.n == 0:
        raise MetricError("cannot compute frequencies of an empty dataset")
    cards = tuple(dataset.schema.attributes[j].cardinality for j in cluster)
    flat = np.ravel_multi_index(tuple(dataset.rows[:, j] for j in cluster), cards)
    counts = np.bincount(flat, minlength=int(np.prod(cards))).astype(np.float64)
    return (counts / counts.sum()).reshape(cards)
