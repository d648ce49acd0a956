"""LDP statistics built on encoder reports with an identity partition.

Reports are de-biased through the channel matrix

    M[j, i] = Pr[encoder(i) = j]

stored column-stochastic so that ``M @ true_counts = E[report_counts]``.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core import DiscreteDomain, Partition
from .nnls import nnls
from .opec import EncodingModel


class UndefinedMeanError(ValueError):
    """Mean requested from an all-zero histogram."""


@dataclass(frozen=True)
class ChannelMatrix:
    domain: DiscreteDomain
    matrix: np.ndarray

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    def probability(self, x, o) -> float:
        """Pr[encoder(x) = o] for values x, o of the domain."""
        return float(self.matrix[self.domain.index(o), self.domain.index(x)])


@dataclass(frozen=True)
class FrequencyEstimate:
    domain: DiscreteDomain
    counts: np.ndarray
    method: str
    fell_back: bool = False
    condition: float = float("nan")

    def as_rows(self):
        return list(zip(self.domain.values().tolist(), self.counts.tolist()))


def build_channel_matrix(model: EncodingModel) -> ChannelMatrix:
    if not model.partition.is_identity():
        raise ValueError("the channel matrix needs an identity partition")
    return ChannelMatrix(model.domain, np.array(model.table()).T.copy())


def report_histogram(reports, domain: DiscreteDomain) -> np.ndarray:
    r = domain.check_array(reports)
    return np.bincount(r - domain.lo, minlength=domain.size).astype(float)


def estimate_frequencies(reports, channel: ChannelMatrix, method: str = "nnls",
                         rtol: float = 1e-10) -> FrequencyEstimate:
    """Frequency oracle over the encoder's reports.

    ``method="exact"`` solves ``M X = Y`` by LU and falls back to NNLS
    (with a warning) when M is singular. ``method="nnls"`` always solves
    the non-negative problem; when the exact solution is already
    non-negative the two coincide.
    """
    Y = report_histogram(reports, channel.domain)
    cond = float(np.linalg.cond(channel.matrix))
    if method == "exact":
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
                lu = scipy.linalg.lu_factor(channel.matrix, check_finite=True)
            return FrequencyEstimate(channel.domain, scipy.linalg.lu_solve(lu, Y), "exact",
                                     condition=cond)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, scipy.linalg.LinAlgWarning):
            warnings.warn("channel matrix is singular; falling back to NNLS", RuntimeWarning)
            x, _ = nnls(channel.matrix, Y, rtol=rtol)
            return FrequencyEstimate(channel.domain, x, "nnls", fell_back=True, condition=cond)
    if method != "nnls":
        raise ValueError(f"unknown method {method!r}")
    x, _ = nnls(channel.matrix, Y, rtol=rtol)
    return FrequencyEstimate(channel.domain, x, "nnls", condition=cond)


def estimate_mean(freq: FrequencyEstimate) -> float:
    total = float(freq.counts.sum())
    if total <= 0:
        raise UndefinedMeanError("all estimated counts are zero")
    return float(np.dot(freq.domain.values(), freq.counts) / total)


def estimate_range(freq: FrequencyEstimate, a: int, b: int) -> float:
    """Estimated number of records with value in ``[a, b]``."""
    if a > b:
        raise ValueError("need a <= b")
    lo, hi = freq.domain.index(a), freq.domain.index(b)
    return float(freq.counts[lo:hi + 1].sum())


def analytic_count_variance(channel: ChannelMatrix, A_inverse, true_counts, i: int,
                            form: str = "corrected") -> float:
    """Variance of the exact-inverse count estimate for value index ``i``.

    Each of the X'[k] users holding value k reports independently, so their
    indicator vectors are multinomial with variance p(1-p) and covariance
    -p_{k,j1} p_{k,j2}. ``form="corrected"`` sums these per user:

        sum_k X'[k] * ( sum_j a_j^2 p_kj (1 - p_kj)
                        - 2 sum_{j1<j2} a_j1 a_j2 p_kj1 p_kj2 )

    with a_j = A^{-1}[i, j]. ``form="squared"`` evaluates the variant that
    scales each value's term by X'[k]^2 and drops the factor 2 on the
    covariance sum; it is kept for comparison only.
    """
    P = np.asarray(channel.matrix, dtype=float)      # P[j, k] = p_{k,j}
    if np.linalg.cond(P) > 1.0 / np.finfo(float).eps:
        raise np.linalg.LinAlgError("channel matrix is singular")
    a = np.asarray(A_inverse, dtype=float)[i]
    X = np.asarray(true_counts, dtype=float)
    m = P.shape[0]
    total = 0.0
    for k in range(m):
        if X[k] == 0:
            continue
        p = P[:, k]
        var_terms = float(np.sum(p * (1 - p) * a * a))
        cross = 0.0
        for j1 in range(m):
            for j2 in range(j1 + 1, m):
                cross += a[j1] * a[j2] * p[j1] * p[j2]
        if form == "corrected":
            total += X[k] * (var_terms - 2.0 * cross)
        elif form == "squared":
            total += X[k] ** 2 * (var_terms - cross)
        else:
            raise ValueError(f"unknown form {form!r}")
    return total


def ordinal_accuracy(truth, reports, p: Partition) -> np.ndarray:
    """sigma_d: percentage of records whose report is d intervals off.

    Distance is measured in encoding-index units; entry d of the result is
    sigma_d for d = 0 .. k-1.
    """
    truth = np.asarray(getattr(truth, "values", truth))
    reports = np.asarray(reports)
    if len(truth) != len(reports):
        raise ValueError("truth and reports must be aligned")
    if len(truth) == 0:
        return np.zeros(p.k)
    ti = p.interval_indices(truth)
    ri = np.searchsorted(np.asarray(p.encodings), reports)
    if np.any(ri >= p.k) or np.any(np.asarray(p.encodings)[np.minimum(ri, p.k - 1)] != reports):
        raise ValueError("reports must be encodings of the partition")
    d = np.abs(ti - ri)
    return 100.0 * np.bincount(d, minlength=p.k) / len(truth)


# -- baselines (not part of the encoder) ---------------------------------------

def krr_perturb(values, epsilon: float, domain: DiscreteDomain, rng) -> np.ndarray:
    """k-ary randomized response over the whole domain."""
    xs = domain.check_array(values) - domain.lo
    d = domain.size
    keep = rng.random(len(xs)) < np.exp(epsilon) / (np.exp(epsilon) + d - 1)
    other = (xs + rng.integers(1, d, size=len(xs))) % d
    return np.where(keep, xs, other) + domain.lo


def krr_estimate(reports, epsilon: float, domain: DiscreteDomain) -> np.ndarray:
    """Unbiased counts from k-RR reports, clipped at zero."""
    d = domain.size
    n = len(reports)
    p = np.exp(epsilon) / (np.exp(epsilon) + d - 1)
    q = (1 - p) / (d - 1)
    y = report_histogram(reports, domain)
    return np.clip((y - n * q) / (p - q), 0, None)


def laplace_mean(values, epsilon: float, domain: DiscreteDomain, rng) -> float:
    """Each user adds Laplace((hi - lo) / eps) noise; the server averages."""
    xs = domain.check_array(values).astype(float)
    scale = (domain.hi - domain.lo) / epsilon
    return float(np.mean(xs + rng.laplace(0.0, scale, size=len(xs))))


# -- file formats ---------------------------------------------------------------

def read_reports(path) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        vals = []
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                vals.append(int(line))
            except ValueError:
                raise ValueError(f"line {lineno}: not an integer: {line!r}") from None
    return np.asarray(vals, dtype=np.int64)


def write_estimates_csv(path, freq: FrequencyEstimate) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["value", "count"])
        for v, c in freq.as_rows():
            w.writerow([v, repr(float(c))])
