"""Server-side joint distribution estimation from randomized reports.

Three estimators over an attribute cluster C:

* ``em_jd``   -- EM over the full candidate table. Per-report likelihoods
  against every candidate filter, Bayes posterior, mean-posterior update,
  iterated until the largest cell change is below delta.
* ``lasso_jd`` -- debiased per-bit counts regressed on the candidate
  matrix with a non-negative Lasso; coefficients become frequencies.
* ``hybrid_jd`` -- Lasso estimate first, then EM restricted to the
  candidates the Lasso kept (its support), initialized at the Lasso
  estimate. Faster than plain EM and usually at least as accurate.

A report bit matches a candidate bit with probability 1 - f/2 and differs
with probability f/2, which is the per-bit likelihood factor used both by
EM and by the count debiasing (y - f*N/2) / (1 - f).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from lopub import _kernels
from lopub.encode import ReportSet, attribute_filters
from lopub.schema import Schema
from lopub.solver import RegressionProblem, lambda_select, nn_lasso

PROB_ATOL = 1e-9
DEFAULT_DELTA = 1e-3
DEFAULT_MAX_ITER = 10_000


class EstimationError(ValueError):
    pass


class EstimationWarning(UserWarning):
    pass


def normalize_cluster(cluster, d: int) -> tuple[int, ...]:
    """Validate and sort a cluster of attribute indices (0-based)."""
    out = tuple(sorted(int(j) for j in cluster))
    if not out:
        raise EstimationError("cluster must be non-empty")
    if len(set(out)) != len(out):
        raise EstimationError(f"duplicate attribute in cluster {cluster}")
    if out[0] < 0 or out[-1] >= d:
        raise EstimationError(f"cluster {cluster} out of range for d={d}")
    return out


@dataclass
class CountVector:
    """Per-bit report sums over a cluster, raw and debiased."""

    raw: np.ndarray
    debiased: np.ndarray
    n: int
    f: float


@dataclass
class CandidateMatrix:
    """Concatenated filters of every value combination in a cluster.

    ``matrix`` has one row per bit (sum of m_j over the cluster) and one
    column per candidate tuple, in row-major order over the domains.
    """

    cluster: tuple[int, ...]
    cards: tuple[int, ...]
    matrix: np.ndarray = field(repr=False)

    @property
    def n_candidates(self) -> int:
        return self.matrix.shape[1]


@dataclass
class JointDistribution:
    """Estimated probability table over a cluster's value combinations."""

    cluster: tuple[int, ...]
    probs: np.ndarray = field(repr=False)
    info: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        if (p < 0).any():
            raise EstimationError("joint distribution has negative cells")
        total = p.sum()
        if not math.isclose(total, 1.0, abs_tol=PROB_ATOL):
            raise EstimationError(f"joint distribution sums to {total}, not 1")
        self.probs = p

    def marginal(self, attrs) -> np.ndarray:
        """Marginal table over a subset of this cluster's attributes."""
        keep = [self.cluster.index(a) for a in attrs]
        drop = tuple(ax for ax in range(len(self.cluster)) if ax not in keep)
        marg = self.probs.sum(axis=drop) if drop else self.probs
        # remaining axes follow sorted(keep); permute to the requested order
        order = [sorted(keep).index(k) for k in keep]
        return np.ascontiguousarray(np.transpose(marg, axes=order))

    def to_json_dict(self, schema: Schema) -> dict:
        labels = [schema.attributes[j].values for j in self.cluster]
        cells = [list(combo) for combo in _label_product(labels)]
        return {
            "cluster": [j + 1 for j in self.cluster],
            "attributes": [schema.attributes[j].name for j in self.cluster],
            "cells": cells,
            "probs": [float(x) for x in self.probs.reshape(-1)],
        }


def _label_product(label_lists):
    if not label_lists:
        yield ()
        return
    head, *rest = label_lists
    for v in head:
        for tail in _label_product(rest):
            yield (v,) + tail


def _as_single_reportset(reports) -> ReportSet:
    if isinstance(reports, ReportSet):
        return reports
    merged = reports[0]
    for other in reports[1:]:
        merged = merged.extend(other)
    return merged


def aggregate_counts(reports, cluster) -> CountVector:
    """Bitwise sums over the cluster's segments, then debiased.

    The debiased count of a bit is (raw - f*N/2) / (1 - f); it may be
    negative or exceed N because it is an unbiased but noisy estimate.
    Accepts a list of ReportSets, which must share an identical header.
    """
    rs = _as_single_reportset(reports)
    cluster = normalize_cluster(cluster, rs.schema.d)
    raw = np.concatenate([rs.segments[j].sum(axis=0, dtype=np.int64) for j in cluster])
    f, n = rs.f, rs.n
    if f >= 1.0:
        raise EstimationError("f=1 reports carry no signal; cannot debias")
    debiased = (raw - f * n / 2.0) / (1.0 - f)
    return CountVector(raw=raw, debiased=debiased, n=n, f=f)


def candidate_matrix(cluster, schema: Schema, params) -> CandidateMatrix:
    """Build the bit matrix whose columns are candidate-tuple filters."""
    cluster = normalize_cluster(cluster, schema.d)
    cards = tuple(schema.attributes[j].cardinality for j in cluster)
    filters = [attribute_filters(schema.attributes[j].values, params[j]) for j in cluster]
    grids = np.indices(cards).reshape(len(cluster), -1)
    blocks = [filters[t][grids[t]] for t in range(len(cluster))]
    columns = np.concatenate(blocks, axis=1)  # (n_candidates, total_bits)
    if len(np.unique(columns, axis=0)) != columns.shape[0]:
        raise EstimationError(
            f"candidate matrix for cluster {cluster} has duplicate columns; "
            "re-salt the attribute filters"
        )
    return CandidateMatrix(cluster=cluster, cards=cards,
                           matrix=np.ascontiguousarray(columns.T.astype(np.float64)))


def report_likelihood(report_bits, candidate_bits, f: float) -> float:
    """Probability of observing the randomized bits given a candidate filter.

    Per bit: (1 - f/2) where the observed bit equals the candidate bit,
    (f/2) where it differs; the result is the product over all bits.
    """
    s = np.asarray(report_bits, dtype=np.uint8)
    c = np.asarray(candidate_bits, dtype=np.uint8)
    if s.shape != c.shape:
        raise EstimationError("report and candidate bit lengths differ")
    mismatches = int(np.count_nonzero(s != c))
    matches = s.size - mismatches
    return (f / 2.0) ** mismatches * (1.0 - f / 2.0) ** matches


def _mismatch_counts(segment: np.ndarray, filters: np.ndarray) -> np.ndarray:
    """Hamming distances between every report segment and every filter."""
    S = segment.astype(np.float64)
    F = filters.astype(np.float64)
    # |s xor c| = sum(s) + sum(c) - 2 s.c
    return S.sum(axis=1)[:, None] + F.sum(axis=1)[None, :] - 2.0 * (S @ F.T)


def likelihood_matrix(reports: ReportSet, cluster,
                      candidates: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Row-scaled likelihood of every report against every candidate.

    Returns (L, row_log_scale) where the true likelihood of report i and
    candidate c is L[i, c] * exp(row_log_scale[i]). Each attribute's factor
    table is scaled by its own per-report maximum, which keeps long filters
    away from underflow without changing posteriors. ``candidates``
    optionally restricts the columns to a list of flat candidate indices.
    """
    cluster = normalize_cluster(cluster, reports.schema.d)
    f = reports.f
    cards = [reports.schema.attributes[j].cardinality for j in cluster]
    grids = np.indices(tuple(cards)).reshape(len(cluster), -1)
    if candidates is not None:
        grids = grids[:, candidates]
    n = reports.n
    if f == 0.0:
        L = np.ones((n, grids.shape[1]))
        for t, j in enumerate(cluster):
            filters = attribute_filters(reports.schema.attributes[j].values, reports.params[j])
            exact = (_mismatch_counts(reports.segments[j], filters) == 0).astype(np.float64)
            L *= exact[:, grids[t]]
        return L, np.zeros(n)
    log_match = math.log1p(-f / 2.0)
    log_flip = math.log(f / 2.0)
    L = None
    row_scale = np.zeros(n)
    for t, j in enumerate(cluster):
        filters = attribute_filters(reports.schema.attributes[j].values, reports.params[j])
        mism = _mismatch_counts(reports.segments[j], filters)
        logA = mism * log_flip + (filters.shape[1] - mism) * log_match
        row_max = logA.max(axis=1)
        row_scale += row_max
        A = np.exp(logA - row_max[:, None])
        L = A[:, grids[t]] if L is None else L * A[:, grids[t]]
    return L, row_scale


def _check_estimable(reports: ReportSet) -> None:
    if reports.n < 1:
        raise EstimationError("need at least one report")
    if reports.f >= 1.0:
        raise EstimationError("f=1 reports carry no signal; estimation rejected")


def em_jd(reports: ReportSet, cluster, delta: float = DEFAULT_DELTA,
          max_iter: int = DEFAULT_MAX_ITER, init: np.ndarray | None = None,
          support: np.ndarray | None = None) -> JointDistribution:
    """EM estimate of the cluster's joint distribution.

    Starts from the uniform table (or ``init``), alternates Bayes
    posteriors and mean-posterior updates, and stops when the largest
    cell-probability change is <= delta. Reports with zero likelihood on
    the whole candidate set are skipped (counted in ``info['skipped']``).
    ``support`` restricts the candidate set to a boolean mask over cells.
    """
    _check_estimable(reports)
    if delta <= 0:
        raise EstimationError("delta must be positive")
    cluster = normalize_cluster(cluster, reports.schema.d)
    cards = tuple(reports.schema.attributes[j].cardinality for j in cluster)
    n_cells = int(np.prod(cards))
    if init is None:
        p0 = np.full(n_cells, 1.0 / n_cells)
    else:
        p0 = np.asarray(init, dtype=np.float64).reshape(-1).copy()
        p0 /= p0.sum()
    if support is not None:
        mask = np.asarray(support, dtype=bool).reshape(-1)
        if not mask.any():
            raise EstimationError("empty candidate support")
        keep = np.flatnonzero(mask)
        Ls, row_scale = likelihood_matrix(reports, cluster, candidates=keep)
        p0s = p0[mask] / p0[mask].sum()
        p_sub, iters, logliks, skipped = _kernels.em_loop(Ls, p0s, row_scale, delta, max_iter)
        probs = np.zeros(n_cells)
        probs[mask] = p_sub
    else:
        L, row_scale = likelihood_matrix(reports, cluster)
        probs, iters, logliks, skipped = _kernels.em_loop(L, p0, row_scale, delta, max_iter)
    if skipped:
        warnings.warn(f"{skipped} report(s) had zero likelihood and were skipped",
                      EstimationWarning)
    if iters == 0:
        raise EstimationError("all reports had zero likelihood; nothing to estimate")
    probs = np.clip(probs, 0.0, None)
    probs /= probs.sum()
    return JointDistribution(cluster=cluster, probs=probs.reshape(cards),
                             info={"method": "em", "iterations": iters,
                                   "loglik": logliks, "skipped": skipped})


def _independence_start(reports: ReportSet, cluster, grid_size: int) -> np.ndarray:
    """Outer product of the per-attribute fitted counts.

    The aggregated count vector only pins down per-attribute margins, so
    the full-cluster regression has a flat optimal face; starting descent
    at the independence point makes the landing spot principled and
    reproducible instead of an artifact of the update order.
    """
    factors = []
    for j in cluster:
        one_way = lasso_jd(reports, (j,), grid_size=grid_size)
        factors.append(one_way.probs)
    table = factors[0]
    for t in factors[1:]:
        table = np.multiply.outer(table, t)
    return reports.n * table.reshape(-1)


def lasso_jd(reports: ReportSet, cluster, grid_size: int = 10,
             lam: float | None = None) -> JointDistribution:
    """Lasso estimate: debiased bit counts regressed on the candidate matrix.

    The non-negative coefficients are candidate frequencies; they are
    normalized by their own sum (finite-sample noise keeps the sum away
    from N). A zero coefficient vector falls back to the uniform table.
    """
    _check_estimable(reports)
    cluster = normalize_cluster(cluster, reports.schema.d)
    counts = aggregate_counts(reports, cluster)
    cand = candidate_matrix(cluster, reports.schema, reports.params)
    X, y = cand.matrix, counts.debiased
    if lam is None:
        lam = lambda_select(X, y, grid_size=grid_size)
    beta0 = _independence_start(reports, cluster, grid_size) if len(cluster) > 1 else None
    sol = nn_lasso(RegressionProblem(design=X, response=y, lam=lam), beta0=beta0)
    total = float(sol.beta.sum())
    if total <= 0.0:
        warnings.warn("lasso selected no candidates; falling back to uniform",
                      EstimationWarning)
        probs = np.full(cand.n_candidates, 1.0 / cand.n_candidates)
    else:
        probs = sol.beta / total
    return JointDistribution(cluster=cluster, probs=probs.reshape(cand.cards),
                             info={"method": "lasso", "lambda": lam,
                                   "sweeps": sol.iterations,
                                   "objective": sol.objective,
                                   "converged": sol.converged})


def hybrid_jd(reports: ReportSet, cluster, delta: float = DEFAULT_DELTA,
              max_iter: int = DEFAULT_MAX_ITER, grid_size: int = 10) -> JointDistribution:
    """Lasso-initialized EM restricted to the Lasso's support.

    Candidates the Lasso zeroes out keep probability zero; EM refines the
    rest starting from the Lasso estimate. An empty support falls back to
    plain EM over all candidates.
    """
    _check_estimable(reports)
    cluster = normalize_cluster(cluster, reports.schema.d)
    start = lasso_jd(reports, cluster, grid_size=grid_size)
    flat = start.probs.reshape(-1)
    mask = flat > 0.0
    if not mask.any():
        warnings.warn("empty lasso support; falling back to full EM", EstimationWarning)
        result = em_jd(reports, cluster, delta=delta, max_iter=max_iter)
        result.info["method"] = "hybrid"
        return result
    result = em_jd(reports, cluster, delta=delta, max_iter=max_iter,
                   init=flat, support=mask)
    result.info["method"] = "hybrid"
    result.info["support_size"] = int(mask.sum())
    result.info["lambda"] = start.info["lambda"]
    return result
