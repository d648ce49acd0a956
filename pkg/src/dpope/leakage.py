"""What an observer of the order learns about plaintext bits.

Order statistics of i.i.d. samples drive two bitwise leakage matrices:
``L[i, j]`` is the probability that an adversary, guessing from an
auxiliary prior D', recovers bit j of the rank-i record under the true
prior D. The module also holds the record-indistinguishability game and its
closed-form advantage bound.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import gammaln, xlogy

from .core import DiscreteDomain, Prior
from .opec import EncodingModel, encode_indices


@dataclass(frozen=True)
class LeakageMatrix:
    n: int
    m: int
    L: np.ndarray

    def mean(self) -> float:
        return float(self.L.mean())


@dataclass(frozen=True)
class GameBound:
    epsilon_star: float
    q: int
    bound: float


@dataclass(frozen=True)
class GameResult:
    trials: int
    q: int
    win_rate: float
    advantage: float
    stderr: float
    bound: GameBound

    @property
    def within_bound(self) -> bool:
        return self.advantage <= self.bound.bound + 3 * self.stderr


# -- order statistics ---------------------------------------------------------------

def order_statistic_table(pmf, n: int) -> np.ndarray:
    """``T[i-1, s]`` = Pr[X(i) = s-th support point] for i.i.d. draws.

    For each s with a = Pr[x < s], c = Pr[x = s], d = Pr[x > s], X(i) = s
    exactly when k-1 draws fall below s, j >= 1 equal s and the remaining
    n-k-j+1 lie above, with k <= i <= k+j-1. The multinomial terms are
    summed in log space; cumulative sums over k give every rank at once.
    When d = 0 (or a = 0) every term with a draw above (below) s vanishes,
    which reproduces the two boundary cases of the closed form.
    """
    pmf = np.asarray(pmf, dtype=float)
    if n < 1:
        raise ValueError("n must be at least 1")
    N = len(pmf)
    cdf = np.cumsum(pmf)
    below = np.concatenate(([0.0], cdf[:-1]))
    above = np.clip(1.0 - cdf, 0.0, None)
    out = np.zeros((n, N))
    j = np.arange(1, n + 1)[:, None]           # copies equal to s
    k = np.arange(1, n + 1)[None, :]           # 1-based rank of the first copy
    rest = n - k - j + 1
    valid = rest >= 0
    restc = np.where(valid, rest, 0)
    log_coef = gammaln(n + 1) - gammaln(k) - gammaln(j + 1) - gammaln(restc + 1)
    ranks = np.arange(1, n + 1)
    for s in range(N):
        if pmf[s] == 0:
            continue
        with np.errstate(divide="ignore"):
            logt = (log_coef + xlogy(k - 1, below[s]) + xlogy(j, pmf[s])
                    + xlogy(restc, above[s]))
        t = np.where(valid, np.exp(logt), 0.0)
        # C[j, k] = sum_{k' <= k} t[j, k'] with C[j, 0] = 0
        C = np.concatenate((np.zeros((n, 1)), np.cumsum(t, axis=1)), axis=1)
        # rank i is covered by k in [max(1, i-j+1), min(i, n-j+1)]
        hi = np.minimum(ranks[None, :], n - j + 1)
        lo = np.maximum(1, ranks[None, :] - j + 1)
        rows = np.broadcast_to(np.arange(n)[:, None], hi.shape)
        contrib = np.where(hi >= lo, C[rows, np.clip(hi, 0, n)] - C[rows, np.clip(lo - 1, 0, n)], 0.0)
        out[:, s] = contrib.sum(axis=0)
    return out


def order_statistic_pmf(prior: Prior, n: int, i: int, s: int) -> float:
    """Pr[X(i) = s] for the i-th smallest of n i.i.d. draws from ``prior``."""
    if not 1 <= i <= n:
        raise ValueError(f"rank {i} outside [1, {n}]")
    prior.domain.check(s)
    return float(order_statistic_table(prior.pmf, n)[i - 1, s - prior.domain.lo])


# -- bits ---------------------------------------------------------------------------

def bit_count(domain: DiscreteDomain) -> int:
    return max(1, (domain.size - 1).bit_length())


def bit_matrix(size: int, m: int) -> np.ndarray:
    """``B[s, j-1]`` = bit j of offset s, with j = 1 the most significant."""
    if size > 2 ** m:
        raise ValueError(f"{size} values do not fit in {m} bits")
    s = np.arange(size)[:, None]
    shifts = np.arange(m - 1, -1, -1)[None, :]
    return ((s >> shifts) & 1).astype(float)


def _guesses(rank_pmf: np.ndarray, B: np.ndarray) -> np.ndarray:
    # ties (exactly 1/2) resolve to 0
    return rank_pmf @ B > 0.5


def _leakage(true_rank_pmf, aux_rank_pmf, m) -> LeakageMatrix:
    B = bit_matrix(true_rank_pmf.shape[1], m)
    guess = _guesses(aux_rank_pmf, B)
    p1 = true_rank_pmf @ B
    L = np.clip(np.where(guess, p1, 1.0 - p1), 0.0, 1.0)
    return LeakageMatrix(true_rank_pmf.shape[0], m, L)


def adversary_bit_guess(aux: Prior, n: int, i: int, j: int, m: Optional[int] = None) -> int:
    """Most likely value of bit j of the rank-i record under ``aux``."""
    m = bit_count(aux.domain) if m is None else m
    if not 1 <= j <= m:
        raise ValueError(f"bit {j} outside [1, {m}]")
    if not 1 <= i <= n:
        raise ValueError(f"rank {i} outside [1, {n}]")
    T = order_statistic_table(aux.pmf, n)
    return int(_guesses(T, bit_matrix(aux.domain.size, m))[i - 1, j - 1])


def leakage_matrix_ope(true_prior: Prior, aux_prior: Prior, n: int,
                       m: Optional[int] = None) -> LeakageMatrix:
    """Leakage when the exact order of the plaintexts is revealed."""
    if true_prior.domain != aux_prior.domain:
        raise ValueError("priors must share a domain")
    m = bit_count(true_prior.domain) if m is None else m
    return _leakage(order_statistic_table(true_prior.pmf, n),
                    order_statistic_table(aux_prior.pmf, n), m)


def _value_given_rank(pmf: np.ndarray, P: np.ndarray, n: int) -> np.ndarray:
    """Pr[rank-i record has value s] when only the encodings are ordered.

    Records are i.i.d. (value, encoding) pairs and the order depends only on
    the encodings, so given its encoding v the rank-i record's value follows
    the posterior pmf(s) P[s, v] / D*(v).
    """
    d_star = pmf @ P
    enc_rank = order_statistic_table(d_star, n)          # n x k
    with np.errstate(divide="ignore", invalid="ignore"):
        post = np.where(d_star[None, :] > 0, pmf[:, None] * P / d_star[None, :], 0.0)
    return enc_rank @ post.T                             # n x N


def leakage_matrix_opeps(true_prior: Prior, aux_prior: Prior, model: EncodingModel, n: int,
                         m: Optional[int] = None) -> LeakageMatrix:
    """Leakage when only the order of noisy encodings is revealed.

    The adversary's guesses push ``aux_prior`` through the same encoder.
    """
    if not (true_prior.domain == aux_prior.domain == model.domain):
        raise ValueError("priors and encoder must share a domain")
    m = bit_count(model.domain) if m is None else m
    P = np.asarray(model.table(), dtype=float)
    return _leakage(_value_given_rank(true_prior.pmf, P, n),
                    _value_given_rank(aux_prior.pmf, P, n), m)


def write_leakage_csv(path, lm: LeakageMatrix) -> None:
    """Rank rows by bit columns, bit 1 the most significant."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank"] + [f"bit{j}" for j in range(1, lm.m + 1)])
        for i, row in enumerate(lm.L, start=1):
            w.writerow([i] + [f"{v:.12g}" for v in row])


# -- record indistinguishability --------------------------------------------------------

def _radius(beta: float, N: int) -> int:
    # round first so that e.g. 0.07 * 100 does not ceil to 8
    return int(math.ceil(round(beta * N, 9)))


def attack_bound(epsilon: float, beta: float, N: int, q: int) -> GameBound:
    """Advantage bound e^{e*}/(q + e^{e*}) - 1/(q+1) with e* = eps * ceil(beta N)."""
    if epsilon < 0 or q < 1 or not 0 < beta <= 1:
        raise ValueError("need epsilon >= 0, q >= 1 and beta in (0, 1]")
    eps_star = epsilon * _radius(beta, N)
    if math.isinf(eps_star):
        bound = 1.0 - 1.0 / (q + 1)
    else:
        # e/(q+e) written as 1/(q e^{-e*} + 1) to stay finite for large e*
        bound = 1.0 / (q * math.exp(-eps_star) + 1.0) - 1.0 / (q + 1)
    return GameBound(eps_star, q, max(0.0, bound))


def candidate_set(domain: DiscreteDomain, x0: int, beta: float) -> list:
    """Values within ceil(beta N) of ``x0``, excluding ``x0``."""
    t = _radius(beta, domain.size)
    return [v for v in range(max(domain.lo, x0 - t), min(domain.hi, x0 + t) + 1) if v != x0]


def simulate_ri_game(model, x0: int, beta: float, trials: int,
                     rng: np.random.Generator) -> GameResult:
    """Monte Carlo run of the game against a maximum-likelihood adversary.

    The challenger picks p uniformly from {0..q}, encodes x_p and hands the
    encoding over; the adversary knows the encoder and answers the
    candidate maximising the likelihood (ties broken uniformly).

    Args:
        model: the encoder, or a scheme whose ``model`` attribute is used.
            The encoder already runs at half the scheme budget, and the
            bound is evaluated at its epsilon.
    """
    model = getattr(model, "model", model)
    Q = candidate_set(model.domain, x0, beta)
    if not Q:
        raise ValueError("candidate set is empty")
    cands = np.array([x0] + Q)
    q = len(Q)
    p = rng.integers(0, q + 1, size=trials)
    obs = encode_indices(model, cands[p], rng)
    like = np.array([model.probabilities(int(v)) for v in cands])   # (q+1) x k
    wins = 0
    for o in np.unique(obs):
        col = like[:, o]
        best = np.flatnonzero(col >= col.max() * (1 - 1e-12))
        sel = obs == o
        guess = best[rng.integers(0, len(best), size=int(sel.sum()))]
        wins += int(np.sum(guess == p[sel]))
    rate = wins / trials
    base = 1.0 / (q + 1)
    return GameResult(trials, q, rate, abs(rate - base),
                      math.sqrt(rate * (1 - rate) / trials),
                      attack_bound(model.epsilon, beta, model.domain.size, q))


def indistinguishability_radius(epsilon: float, threshold: float = 0.1) -> int:
    """Largest distance t at which two values stay within ``threshold`` advantage.

    Uses the two-candidate advantage e^{eps t/2}/(1 + e^{eps t/2}) - 1/2 of
    a scheme whose encoder runs at eps/2.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if math.isinf(epsilon):
        return 0
    # advantage <= threshold  <=>  eps t / 2 <= logit(1/2 + threshold)
    limit = 2.0 * math.log((0.5 + threshold) / (0.5 - threshold)) / epsilon
    t = int(math.floor(limit + 1e-12))
    return max(t, 0)
