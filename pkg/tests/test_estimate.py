import numpy as np
import pytest

import lopub.estimate as estimate
from conftest import count_joint, encoded_pair, make_schema, sample_rows
from lopub.encode import BloomParams, ReportSet, encode_dataset, params_for_schema
from lopub.estimate import (EstimationError, EstimationWarning, JointDistribution,
                            aggregate_counts, candidate_matrix, em_jd, hybrid_jd,
                            lasso_jd, likelihood_matrix, report_likelihood)
from lopub.metrics import avd
from lopub.schema import AttributeDomain, Dataset, Schema


def bits(s):
    return np.array([int(c) for c in s], dtype=np.uint8)


@pytest.fixture()
def four_report_fixture():
    """Gender + Education segments of the four worked-example reports."""
    schema = Schema(attributes=(
        AttributeDomain("Gender", ("M", "F")),
        AttributeDomain("Education", ("college", "master", "phd")),
    ))
    params = (BloomParams(m=2, h=1, p=1 / 16, salt=b"g"),
              BloomParams(m=4, h=2, p=1 / 16, salt=b"e"))
    gender = np.stack([bits("10"), bits("00"), bits("10"), bits("00")])
    education = np.stack([bits("0111"), bits("1110"), bits("0100"), bits("0110")])
    return ReportSet(schema, params, 0.5, [gender, education])


class TestAggregateCounts:
    def test_worked_example_counts(self, four_report_fixture):
        counts = aggregate_counts(four_report_fixture, (0, 1))
        assert counts.raw.tolist() == [2, 0, 1, 4, 3, 1]
        assert counts.debiased.tolist() == [2.0, -2.0, 0.0, 6.0, 4.0, 0.0]

    def test_debias_identity_at_f0(self):
        schema = make_schema((3, 2))
        rng = np.random.default_rng(0)
        rows = np.stack([rng.integers(c, size=40) for c in schema.cardinalities], axis=1)
        ds = Dataset(schema=schema, rows=rows)
        reports = encode_dataset(ds, params_for_schema(schema), 0.0, seed=1)
        counts = aggregate_counts(reports, (0, 1))
        assert np.array_equal(counts.debiased, counts.raw.astype(float))

    def test_debias_unbiasedness(self):
        # over repeated re-encodings, the mean debiased count of every bit is
        # within 4 * sigma/sqrt(R) of the true bit count
        schema = make_schema((3, 2))
        rng = np.random.default_rng(1)
        rows = np.stack([rng.integers(c, size=300) for c in schema.cardinalities], axis=1)
        ds = Dataset(schema=schema, rows=rows)
        params = params_for_schema(schema)
        f = 0.5
        exact = aggregate_counts(encode_dataset(ds, params, 0.0, seed=0), (0, 1)).raw
        R = 500
        acc = np.zeros(exact.shape[0])
        for r in range(R):
            reports = encode_dataset(ds, params, f, seed=1000 + r)
            acc += aggregate_counts(reports, (0, 1)).debiased
        sigma = np.sqrt(ds.n * (f / 2) * (1 - f / 2)) / (1 - f)
        assert np.all(np.abs(acc / R - exact) <= 4 * sigma / np.sqrt(R))

    def test_mixed_headers_rejected(self, four_report_fixture):
        schema = make_schema((3, 2))
        rng = np.random.default_rng(2)
        rows = np.stack([rng.integers(c, size=10) for c in schema.cardinalities], axis=1)
        other = encode_dataset(Dataset(schema=schema, rows=rows),
                               params_for_schema(schema), 0.5, seed=0)
        with pytest.raises(Exception):
            aggregate_counts([four_report_fixture, other], (0, 1))


class TestCandidateMatrix:
    def test_worked_example_matrix(self, four_report_fixture, monkeypatch):
        # value filters fixed to the worked example's tables
        tables = {
            b"g": {"M": bits("01"), "F": bits("10")},
            b"e": {"college": bits("0101"), "master": bits("0110"), "phd": bits("1100")},
        }
        monkeypatch.setattr(
            estimate, "attribute_filters",
            lambda values, prm: np.stack([tables[prm.salt][v] for v in values]),
        )
        cand = candidate_matrix((0, 1), four_report_fixture.schema, four_report_fixture.params)
        expected_columns = ["010101", "010110", "011100", "100101", "100110", "101100"]
        got = ["".join(str(int(b)) for b in col) for col in cand.matrix.T]
        assert got == expected_columns

    def test_single_attribute_cluster_is_filter_table(self):
        schema = make_schema((3,))
        params = params_for_schema(schema)
        cand = candidate_matrix((0,), schema, params)
        filters = estimate.attribute_filters(schema.attributes[0].values, params[0])
        assert np.array_equal(cand.matrix.T, filters.astype(float))

    def test_column_count_is_domain_product(self):
        schema = make_schema((2, 3, 4))
        cand = candidate_matrix((0, 1, 2), schema, params_for_schema(schema))
        assert cand.n_candidates == 24
        assert cand.matrix.shape[0] == sum(p.m for p in params_for_schema(schema))

    def test_duplicate_columns_rejected(self, four_report_fixture, monkeypatch):
        dup = bits("0101")
        monkeypatch.setattr(
            estimate, "attribute_filters",
            lambda values, prm: np.stack([dup[:prm.m] for _ in values]),
        )
        with pytest.raises(EstimationError):
            candidate_matrix((0, 1), four_report_fixture.schema, four_report_fixture.params)


class TestReportLikelihood:
    def test_worked_example_27_over_256(self):
        assert report_likelihood(bits("0111"), bits("0101"), 0.5) == 27 / 256

    def test_noiseless_limit(self):
        assert report_likelihood(bits("0101"), bits("0101"), 0.0) == 1.0
        assert report_likelihood(bits("0111"), bits("0101"), 0.0) == 0.0

    def test_uniform_limit(self):
        assert report_likelihood(bits("0111"), bits("0101"), 1.0) == pytest.approx(0.5 ** 4)

    def test_rejects_length_mismatch(self):
        with pytest.raises(EstimationError):
            report_likelihood(bits("01"), bits("011"), 0.5)


class TestEmJd:
    def test_noiseless_recovers_empirical_joint(self):
        joint = np.array([[0.35, 0.05, 0.10], [0.05, 0.25, 0.20]])
        dataset, reports = encoded_pair(joint, 4000, 0.0, seed=10)
        emp = count_joint(dataset.rows, (0, 1), joint.shape)
        est = em_jd(reports, (0, 1))
        assert avd(est.probs, emp) <= 1e-6

    def test_point_mass_recovery(self):
        # every report encodes the same tuple; the argmax cell must be it
        schema = make_schema((3, 4))
        rows = np.tile([2, 1], (10_000, 1))
        ds = Dataset(schema=schema, rows=rows)
        reports = encode_dataset(ds, params_for_schema(schema), 0.1, seed=3)
        est = em_jd(reports, (0, 1))
        assert np.unravel_index(np.argmax(est.probs), est.probs.shape) == (2, 1)

    def test_loglik_nondecreasing(self):
        joint = np.array([[0.5, 0.2], [0.1, 0.2]])
        _, reports = encoded_pair(joint, 500, 0.5, seed=4)
        est = em_jd(reports, (0, 1), delta=1e-6)
        logliks = est.info["loglik"]
        assert (np.diff(logliks) >= -1e-9).all()

    def test_rejects_f1_and_bad_delta(self):
        joint = np.full((2, 2), 0.25)
        _, reports = encoded_pair(joint, 50, 0.5, seed=5)
        with pytest.raises(EstimationError):
            em_jd(reports, (0, 1), delta=0.0)
        reports.f = 1.0
        with pytest.raises(EstimationError):
            em_jd(reports, (0, 1))

    def test_table_normalized_nonnegative(self):
        joint = np.array([[0.4, 0.1], [0.2, 0.3]])
        _, reports = encoded_pair(joint, 800, 0.6, seed=6)
        est = em_jd(reports, (0, 1))
        assert (est.probs >= 0).all()
        assert est.probs.sum() == pytest.approx(1.0, abs=1e-9)


class TestLassoJd:
    def test_noiseless_product_joint(self):
        # k=2 with |domain|=3 each; margins fully determine a product joint
        joint = np.outer([1 / 3, 1 / 3, 1 / 3], [1 / 3, 1 / 3, 1 / 3])
        dataset, reports = encoded_pair(joint, 10_000, 0.0, seed=7)
        emp = count_joint(dataset.rows, (0, 1), joint.shape)
        est = lasso_jd(reports, (0, 1))
        assert avd(est.probs, emp) <= 0.02

    def test_zero_signal_falls_back_to_uniform(self):
        schema = make_schema((2, 2))
        params = params_for_schema(schema)
        segments = [np.zeros((6, prm.m), dtype=np.uint8) for prm in params]
        reports = ReportSet(schema, params, 0.5, segments)
        with pytest.warns(EstimationWarning):
            est = lasso_jd(reports, (0, 1))
        assert np.allclose(est.probs, 0.25)

    def test_single_attribute_estimates(self):
        joint = np.array([[0.50, 0.15], [0.10, 0.25]])
        dataset, reports = encoded_pair(joint, 20_000, 0.5, seed=8)
        emp = count_joint(dataset.rows, (0,), (2,))
        est = lasso_jd(reports, (0,))
        assert avd(est.probs, emp) <= 0.03

    def test_invalid_cluster_rejected(self):
        joint = np.full((2, 2), 0.25)
        _, reports = encoded_pair(joint, 50, 0.5, seed=9)
        with pytest.raises(EstimationError):
            lasso_jd(reports, ())
        with pytest.raises(EstimationError):
            lasso_jd(reports, (0, 0))
        with pytest.raises(EstimationError):
            lasso_jd(reports, (0, 5))


class TestHybridJd:
    def test_full_support_equals_em_from_lasso_init(self):
        joint = np.outer([0.5, 0.5], [1 / 3, 1 / 3, 1 / 3])
        _, reports = encoded_pair(joint, 3000, 0.5, seed=11)
        start = lasso_jd(reports, (0, 1))
        assert (start.probs > 0).all()  # full support case
        via_hybrid = hybrid_jd(reports, (0, 1))
        via_em = em_jd(reports, (0, 1), init=start.probs.reshape(-1),
                       support=np.ones(6, dtype=bool))
        assert np.allclose(via_hybrid.probs, via_em.probs)

    def test_planted_sparse_support_recall(self):
        rng = np.random.default_rng(12)
        cards = (4, 4, 4)
        joint = np.zeros(cards)
        cells = [(0, 0, 0), (1, 1, 1), (2, 2, 0), (3, 0, 2), (0, 3, 3)]
        for cell, mass in zip(cells, (0.35, 0.25, 0.2, 0.12, 0.08)):
            joint[cell] = mass
        schema = make_schema(cards)
        rows = sample_rows(joint, 50_000, rng)
        ds = Dataset(schema=schema, rows=rows)
        reports = encode_dataset(ds, params_for_schema(schema), 0.5, seed=13)
        est_h = hybrid_jd(reports, (0, 1, 2))
        support_cells = {tuple(idx) for idx in np.argwhere(est_h.probs > 0)}
        recall = len(support_cells & set(cells)) / len(cells)
        assert recall >= 4 / 5
        est_e = em_jd(reports, (0, 1, 2))
        emp = count_joint(rows, (0, 1, 2), cards)
        assert avd(est_h.probs, emp) <= avd(est_e.probs, emp) + 0.05

    def test_empty_support_is_impossible_after_normalization(self):
        joint = np.full((2, 2), 0.25)
        _, reports = encoded_pair(joint, 100, 0.5, seed=14)
        est = lasso_jd(reports, (0, 1))
        assert (est.probs > 0).any()

    def test_em_rejects_all_false_support(self):
        joint = np.full((2, 2), 0.25)
        _, reports = encoded_pair(joint, 100, 0.5, seed=15)
        with pytest.raises(EstimationError):
            em_jd(reports, (0, 1), support=np.zeros(4, dtype=bool))


class TestStatisticalProperties:
    def test_lasso_avd_nonincreasing_in_n(self):
        # product joint so the estimand is identified; means over 20 trials
        joint = np.outer([0.55, 0.45], [0.4, 0.35, 0.25])
        means = []
        for n in (1_000, 10_000, 100_000):
            errs = []
            for t in range(20):
                dataset, reports = encoded_pair(joint, n, 0.5, seed=16_000 + 31 * t + n)
                emp = count_joint(dataset.rows, (0, 1), joint.shape)
                errs.append(avd(lasso_jd(reports, (0, 1)).probs, emp))
            means.append(np.mean(errs))
        assert means[0] >= means[1] >= means[2]

    def test_marginal_of_pair_matches_one_way(self):
        joint = np.array([[0.30, 0.10, 0.05], [0.15, 0.25, 0.15]])
        _, reports = encoded_pair(joint, 20_000, 0.5, seed=17)
        pair = lasso_jd(reports, (0, 1))
        one = lasso_jd(reports, (0,))
        assert avd(pair.marginal((0,)), one.probs) <= 0.1

    def test_skipped_reports_warn(self):
        # f=0 reports that match no candidate: corrupt one report's bits
        joint = np.full((2, 2), 0.25)
        dataset, reports = encoded_pair(joint, 60, 0.0, seed=18)
        reports.segments[0][0] = 1 - reports.segments[0][0]
        with pytest.warns(EstimationWarning):
            est = em_jd(reports, (0, 1))
        assert est.info["skipped"] == 1


class TestJointDistribution:
    def test_marginal_axis_order(self):
        probs = np.arange(24, dtype=float).reshape(2, 3, 4)
        probs /= probs.sum()
        jd = JointDistribution(cluster=(1, 3, 5), probs=probs)
        m = jd.marginal((5, 1))
        assert m.shape == (4, 2)
        assert np.allclose(m, probs.sum(axis=1).T)

    def test_rejects_unnormalized(self):
        with pytest.raises(EstimationError):
            JointDistribution(cluster=(0,), probs=np.array([0.5, 0.6]))
        with pytest.raises(EstimationError):
            JointDistribution(cluster=(0,), probs=np.array([1.5, -0.5]))

    def test_json_dict_natural_order(self, four_report_fixture):
        probs = np.array([[0.1, 0.2, 0.1], [0.3, 0.2, 0.1]])
        jd = JointDistribution(cluster=(0, 1), probs=probs)
        doc = jd.to_json_dict(four_report_fixture.schema)
        assert doc["cluster"] == [1, 2]
        assert doc["cells"][0] == ["M", "college"]
        assert doc["cells"][1] == ["M", "master"]
        assert doc["cells"][3] == ["F", "college"]
        assert doc["probs"] == pytest.approx(list(probs.reshape(-1)))
