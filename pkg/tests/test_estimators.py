import math
from decimal import Decimal, getcontext

import numpy as np
import pytest

from dpope.core import DiscreteDomain, Partition, Prior
from dpope.estimators import (ChannelMatrix, FrequencyEstimate, UndefinedMeanError,
                              analytic_count_variance, build_channel_matrix, estimate_frequencies,
                              estimate_mean, estimate_range, krr_estimate, krr_perturb,
                              laplace_mean, ordinal_accuracy, read_reports, report_histogram,
                              write_estimates_csv)
from dpope.nnls import kkt_violation, nnls
from dpope.opec import build_encoding_model, encode_many


def channel(size, eps, lo=1):
    d = DiscreteDomain(lo, lo + size - 1)
    return build_channel_matrix(build_encoding_model(Partition.identity(d), None, eps))


def sample_reports(ch, counts, rng):
    """Report histogram drawn per value from the channel columns."""
    y = np.zeros(ch.m, dtype=np.int64)
    for k, c in enumerate(counts):
        if c:
            y += rng.multinomial(int(c), ch.matrix[:, k])
    return np.repeat(ch.domain.values(), y)


# -- channel matrix --------------------------------------------------------------

def test_channel_infinite_is_identity():
    assert np.array_equal(channel(6, math.inf).matrix, np.eye(6))


def test_channel_columns_are_distributions():
    ch = channel(9, 0.7)
    assert np.allclose(ch.matrix.sum(axis=0), 1.0, atol=1e-12)


def test_channel_matches_high_precision():
    getcontext().prec = 80
    ch = channel(8, 0.9)
    half = Decimal("0.9") / 2
    for x in range(1, 9):
        w = [(-abs(Decimal(x - o)) * half).exp() for o in range(1, 9)]
        s = sum(w)
        for o in range(1, 9):
            assert abs(ch.probability(x, o) - float(w[o - 1] / s)) < 1e-12


def test_channel_needs_identity_partition():
    m = build_encoding_model(Partition.equi_length(DiscreteDomain(1, 10), 2), None, 1.0)
    with pytest.raises(ValueError):
        build_channel_matrix(m)


# -- frequency estimation ----------------------------------------------------------

def test_infinite_epsilon_returns_histogram():
    ch = channel(5, math.inf)
    reports = [1, 1, 3, 5, 5, 5]
    for method in ("nnls", "exact"):
        est = estimate_frequencies(reports, ch, method=method)
        assert np.array_equal(est.counts, [2, 0, 1, 0, 3])


@pytest.mark.parametrize("eps", [0.5, 1.0])
@pytest.mark.parametrize("m", [3, 7, 12])
def test_expected_histogram_recovers_truth(m, eps):
    ch = channel(m, eps)
    truth = np.random.default_rng(m).integers(1, 500, size=m).astype(float)
    expected = ch.matrix @ truth
    x, _ = nnls(ch.matrix, expected)
    assert np.max(np.abs(x - truth)) < 1e-8
    assert np.allclose(np.linalg.solve(ch.matrix, expected), truth, atol=1e-8)


def test_nnls_equals_exact_when_nonnegative():
    ch = channel(4, 2.0)
    rng = np.random.default_rng(3)
    reports = sample_reports(ch, [4000, 3000, 2000, 1000], rng)
    exact = estimate_frequencies(reports, ch, method="exact")
    assert np.all(exact.counts >= 0)
    nn = estimate_frequencies(reports, ch, method="nnls")
    assert np.allclose(nn.counts, exact.counts, atol=1e-6)
    assert np.isfinite(exact.condition) and exact.condition >= 1.0


def test_nnls_output_nonnegative_and_optimal():
    ch = channel(10, 0.3)
    rng = np.random.default_rng(4)
    reports = sample_reports(ch, [500, 0, 0, 0, 0, 0, 0, 0, 0, 200], rng)
    est = estimate_frequencies(reports, ch)
    assert np.all(est.counts >= 0)
    Y = report_histogram(reports, ch.domain)
    assert kkt_violation(ch.matrix, Y, est.counts) < 1e-8 * np.linalg.norm(Y)


def test_singular_exact_falls_back():
    d = DiscreteDomain(1, 2)
    ch = ChannelMatrix(d, np.array([[0.5, 0.5], [0.5, 0.5]]))
    with pytest.warns(RuntimeWarning):
        est = estimate_frequencies([1, 2, 2], ch, method="exact")
    assert est.fell_back and est.method == "nnls"
    assert np.all(est.counts >= 0)


def test_unknown_method():
    with pytest.raises(ValueError):
        estimate_frequencies([1], channel(2, 1.0), method="magic")


def test_monte_carlo_unbiased_per_bin():
    ch = channel(10, 1.0)
    truth = np.full(10, 10**4)
    # ten bins at 3 SE each: about a 2.6% family-wise false alarm rate per seed
    rng = np.random.default_rng(1)
    ests = np.array([estimate_frequencies(sample_reports(ch, truth, rng), ch, method="exact").counts
                     for _ in range(200)])
    se = ests.std(axis=0, ddof=1) / np.sqrt(len(ests))
    assert np.all(np.abs(ests.mean(axis=0) - truth) < 3 * se + 1e-9)


def test_encoder_reports_feed_estimator():
    # the actual encoder, not the multinomial shortcut
    d = DiscreteDomain(1, 5)
    model = build_encoding_model(Partition.identity(d), None, 1.0)
    ch = build_channel_matrix(model)
    xs = np.repeat(np.arange(1, 6), [40000, 30000, 20000, 10000, 0])
    est = estimate_frequencies(encode_many(model, xs, np.random.default_rng(6)), ch, method="exact")
    assert np.allclose(est.counts, [40000, 30000, 20000, 10000, 0], atol=2000)


# -- mean and range ------------------------------------------------------------------

def test_mean_point_mass_and_symmetric():
    d = DiscreteDomain(1, 5)
    assert estimate_mean(FrequencyEstimate(d, np.array([0, 0, 7.0, 0, 0]), "nnls")) == 3
    assert estimate_mean(FrequencyEstimate(d, np.array([1.0, 2, 0, 2, 1]), "nnls")) == 3


def test_mean_all_zero():
    with pytest.raises(UndefinedMeanError):
        estimate_mean(FrequencyEstimate(DiscreteDomain(1, 3), np.zeros(3), "nnls"))


def test_mean_matches_data():
    ch = channel(20, 1.0)
    truth = np.random.default_rng(7).multinomial(10**5, np.linspace(1, 3, 20) / np.linspace(1, 3, 20).sum())
    est = estimate_frequencies(sample_reports(ch, truth, np.random.default_rng(8)), ch)
    true_mean = np.dot(np.arange(1, 21), truth) / truth.sum()
    assert abs(estimate_mean(est) - true_mean) < 0.1


def test_range_full_and_empty():
    ch = channel(6, math.inf)
    est = estimate_frequencies([1, 2, 2, 6], ch)
    assert estimate_range(est, 1, 6) == 4
    assert estimate_range(est, 3, 5) == 0
    with pytest.raises(ValueError):
        estimate_range(est, 4, 3)


def test_range_error_below_summed_point_errors():
    ch = channel(40, 0.5)
    truth = np.full(40, 2500)
    rng = np.random.default_rng(9)
    range_err, point_err = [], []
    for _ in range(50):
        est = estimate_frequencies(sample_reports(ch, truth, rng), ch)
        range_err.append(abs(estimate_range(est, 11, 30) - truth[10:30].sum()))
        point_err.append(np.abs(est.counts[10:30] - truth[10:30]).sum())
    assert np.mean(range_err) < np.mean(point_err)


# -- analytic variance ---------------------------------------------------------------

def test_variance_zero_when_deterministic():
    ch = channel(4, math.inf)
    for i in range(4):
        assert analytic_count_variance(ch, np.eye(4), [3, 1, 4, 1], i) == 0.0


def test_variance_two_value_hand_expansion():
    # with two outputs p_{k,2} = 1 - p_{k,1}, so the per-user terms collapse
    ch = channel(2, 0.8)
    A_inv = np.linalg.inv(ch.matrix)
    X = np.array([6.0, 4.0])
    for i in range(2):
        a1, a2 = A_inv[i]
        corrected = squared = 0.0
        for k in range(2):
            p1, p2 = ch.matrix[0, k], ch.matrix[1, k]
            corrected += X[k] * p1 * p2 * (a1 - a2) ** 2
            squared += X[k] ** 2 * p1 * p2 * (a1 ** 2 + a2 ** 2 - a1 * a2)
        assert analytic_count_variance(ch, A_inv, X, i) == pytest.approx(corrected, abs=1e-12)
        assert analytic_count_variance(ch, A_inv, X, i, form="squared") == pytest.approx(squared, abs=1e-12)


def test_variance_matches_sampling():
    ch = channel(3, 1.0)
    A_inv = np.linalg.inv(ch.matrix)
    X = np.array([5000, 3000, 2000])
    rng = np.random.default_rng(10)
    Y = sum(rng.multinomial(X[k], ch.matrix[:, k], size=10**4) for k in range(3))
    est = Y @ A_inv.T
    for i in range(3):
        emp = est[:, i].var(ddof=1)
        assert abs(analytic_count_variance(ch, A_inv, X, i) - emp) / emp < 0.10


def test_variance_singular_channel():
    ch = ChannelMatrix(DiscreteDomain(1, 2), np.full((2, 2), 0.5))
    with pytest.raises(np.linalg.LinAlgError):
        analytic_count_variance(ch, np.eye(2), [1, 1], 0)


def test_variance_unknown_form():
    ch = channel(2, 1.0)
    with pytest.raises(ValueError):
        analytic_count_variance(ch, np.linalg.inv(ch.matrix), [1, 1], 0, form="other")


# -- ordinal accuracy ------------------------------------------------------------------

def test_ordinal_accuracy_exact_and_off_by_one():
    p = Partition.equi_length(DiscreteDomain(1, 10), 5)
    truth = [1, 3, 5, 7, 9]
    assert ordinal_accuracy(truth, [1, 2, 3, 4, 5], p)[0] == 100
    sig = ordinal_accuracy(truth, [2, 3, 4, 5, 4], p)
    assert sig[1] == 100 and sig.sum() == pytest.approx(100)


def test_ordinal_accuracy_errors():
    p = Partition.equi_length(DiscreteDomain(1, 10), 5)
    with pytest.raises(ValueError):
        ordinal_accuracy([1, 2], [1], p)
    with pytest.raises(ValueError):
        ordinal_accuracy([1], [9], p)


def test_ordinal_accuracy_profile_decreases():
    d = DiscreteDomain(1, 100)
    p = Partition.equi_length(d, 10)
    model = build_encoding_model(p, None, 1.0)
    xs = Prior.uniform(d).sample(20000, np.random.default_rng(11))
    sig = ordinal_accuracy(xs, encode_many(model, xs, np.random.default_rng(12)), p)
    assert sig[0] > sig[1] > sig[2]
    assert sig.sum() == pytest.approx(100)


# -- baselines and files -----------------------------------------------------------------

def test_krr_unbiased():
    d = DiscreteDomain(1, 4)
    xs = np.repeat([1, 2, 3, 4], [40000, 30000, 20000, 10000])
    est = krr_estimate(krr_perturb(xs, 1.0, d, np.random.default_rng(13)), 1.0, d)
    assert np.allclose(est, [40000, 30000, 20000, 10000], atol=2500)


def test_laplace_mean_close():
    d = DiscreteDomain(0, 10)
    xs = np.full(10**5, 4)
    assert abs(laplace_mean(xs, 1.0, d, np.random.default_rng(14)) - 4) < 0.3


def test_encoder_beats_krr_on_dense_domain():
    d = DiscreteDomain(1, 100)
    ch = channel(100, 0.1)
    truth = np.random.default_rng(15).multinomial(10**5, np.full(100, 0.01))
    rng = np.random.default_rng(16)
    ours = estimate_frequencies(sample_reports(ch, truth, rng), ch).counts
    xs = np.repeat(d.values(), truth)
    krr = krr_estimate(krr_perturb(xs, 0.1, d, rng), 0.1, d)
    assert np.abs(ours - truth).mean() < np.abs(krr - truth).mean()


def test_report_file_round_trip(tmp_path):
    path = tmp_path / "reports.txt"
    path.write_text("1\n3\n\n2\n")
    assert read_reports(path).tolist() == [1, 3, 2]
    path.write_text("1\nx\n")
    with pytest.raises(ValueError, match="line 2"):
        read_reports(path)
    est = FrequencyEstimate(DiscreteDomain(1, 2), np.array([0.5, 2.0]), "nnls")
    out = tmp_path / "est.csv"
    write_estimates_csv(out, est)
    assert out.read_text().splitlines() == ["value,count", "1,0.5", "2,2.0"]
