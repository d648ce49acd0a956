"""Distance-private order-preserving encoder.

Each interval of a partition gets a central tendency (its weighted median
under a prior). A value x is then mapped to encoding o_i with probability

    p_{x,i} = exp(-|x - d_i| * eps / 2) / sum_j exp(-|x - d_j| * eps / 2)

which is eps-dLDP regardless of the partition. ``eps = math.inf`` is a
sentinel for the deterministic encoder x -> P(x).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (DiscreteDomain, Partition, Prior,
                   weighted_median)

INF = math.inf


def _check_epsilon(epsilon) -> float:
    epsilon = float(epsilon)
    if math.isnan(epsilon) or epsilon <= 0:
        raise ValueError(f"epsilon must be positive or math.inf, got {epsilon}")
    return epsilon


def exp_mech_row(x, tendencies: np.ndarray, epsilon: float) -> np.ndarray:
    """Encoding probabilities for a single value (log-sum-exp stabilised)."""
    dist = np.abs(float(x) - tendencies)
    if math.isinf(epsilon):
        row = np.zeros(len(tendencies))
        row[int(np.argmin(dist))] = 1.0
        return row
    logits = -dist * (epsilon / 2.0)
    logits -= logits.max()
    w = np.exp(logits)
    return w / w.sum()


def exp_mech_table(xs: np.ndarray, tendencies: np.ndarray, epsilon: float) -> np.ndarray:
    logits = -np.abs(xs[:, None].astype(float) - tendencies[None, :]) * (epsilon / 2.0)
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    return w / w.sum(axis=1, keepdims=True)


@dataclass(frozen=True)
class EncodingModel:
    """Tendencies plus per-value encoding distributions for one partition.

    ``prob_table[x - lo, i]`` is the probability that x encodes to
    ``partition.encodings[i]``. The table is ``None`` for lazily evaluated
    models; rows are then computed on demand.
    """

    partition: Partition
    epsilon: float
    tendencies: np.ndarray = field(repr=False)
    prob_table: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def domain(self) -> DiscreteDomain:
        return self.partition.domain

    @property
    def k(self) -> int:
        return self.partition.k

    @property
    def deterministic(self) -> bool:
        return math.isinf(self.epsilon)

    def probabilities(self, x) -> np.ndarray:
        """The vector p_x over interval indices."""
        self.domain.check(x)
        if self.prob_table is not None:
            return self.prob_table[int(x) - self.domain.lo]
        if self.deterministic:
            row = np.zeros(self.k)
            row[self.partition.interval_index(x)] = 1.0
            return row
        return exp_mech_row(x, self.tendencies, self.epsilon)

    def table(self) -> np.ndarray:
        """Full table, computing it if the model is lazy."""
        if self.prob_table is not None:
            return self.prob_table
        return _build_table(self.partition, self.tendencies, self.epsilon)

    def to_json(self) -> str:
        return json.dumps({
            "domain": [self.domain.lo, self.domain.hi],
            "boundaries": list(self.partition.boundaries),
            "encodings": list(self.partition.encodings),
            "epsilon": "inf" if self.deterministic else self.epsilon,
            "tendencies": [float(d) for d in self.tendencies],
        })

    @classmethod
    def from_json(cls, text: str, eager: bool = True) -> "EncodingModel":
        doc = json.loads(text)
        domain = DiscreteDomain(*doc["domain"])
        part = Partition(domain, tuple(doc["boundaries"]), tuple(doc["encodings"]))
        eps = INF if doc["epsilon"] == "inf" else _check_epsilon(doc["epsilon"])
        d = np.asarray(doc["tendencies"], dtype=float)
        if len(d) != part.k:
            raise ValueError("one tendency per interval is required")
        table = _build_table(part, d, eps) if eager else None
        return cls(part, eps, d, table)


def _build_table(p: Partition, tendencies: np.ndarray, epsilon: float) -> np.ndarray:
    xs = p.domain.values()
    if math.isinf(epsilon):
        table = np.zeros((len(xs), p.k))
        table[np.arange(len(xs)), p.interval_indices(xs)] = 1.0
    else:
        table = exp_mech_table(xs, tendencies, epsilon)
    table.setflags(write=False)
    return table


def build_encoding_model(p: Partition, prior: Optional[Prior], epsilon: float,
                         eager: bool = True) -> EncodingModel:
    """Compute tendencies and (optionally) the full probability table.

    Args:
        p: the partition to encode into.
        prior: weights for the per-interval weighted medians; ``None`` means
            uniform.
        epsilon: encoder budget, or ``math.inf``.
        eager: precompute the whole |domain| x k table.
    """
    epsilon = _check_epsilon(epsilon)
    if prior is None:
        prior = Prior.uniform(p.domain)
    if prior.domain != p.domain:
        raise ValueError("prior and partition are over different domains")
    d = np.array([weighted_median(p, i, prior) for i in range(p.k)])
    d.setflags(write=False)
    table = _build_table(p, d, epsilon) if eager else None
    return EncodingModel(p, epsilon, d, table)


def encode_index(model: EncodingModel, x, rng: np.random.Generator) -> int:
    """Sample the interval index of the encoding of ``x``."""
    row = model.probabilities(x)
    if model.deterministic:
        return int(np.argmax(row))
    cdf = np.cumsum(row)
    i = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(i, model.k - 1)


def encode(model: EncodingModel, x, rng: np.random.Generator) -> int:
    """Draw one encoding for ``x`` by inverse-CDF sampling."""
    return model.partition.encodings[encode_index(model, x, rng)]


def encode_indices(model: EncodingModel, xs, rng: np.random.Generator) -> np.ndarray:
    """Vectorised :func:`encode_index` over many values."""
    xs = model.domain.check_array(xs)
    if model.deterministic:
        return model.partition.interval_indices(xs)
    if len(xs) == 0:
        return np.zeros(0, dtype=np.int64)
    u = rng.random(len(xs))
    out = np.empty(len(xs), dtype=np.int64)
    # one searchsorted per distinct value keeps memory at O(n + k)
    order = np.argsort(xs, kind="stable")
    uniq, starts = np.unique(xs[order], return_index=True)
    ends = np.append(starts[1:], len(xs))
    for v, a, b in zip(uniq.tolist(), starts, ends):
        cdf = np.cumsum(model.probabilities(v))
        pos = order[a:b]
        out[pos] = np.searchsorted(cdf, u[pos] * cdf[-1], side="right")
    return np.minimum(out, model.k - 1)


def encode_many(model: EncodingModel, xs, rng: np.random.Generator) -> np.ndarray:
    idx = encode_indices(model, xs, rng)
    return np.asarray(model.partition.encodings, dtype=np.int64)[idx]


def encoding_probability(model: EncodingModel, x, i: int) -> float:
    """Pr[encoder(x) = encodings[i]] for a zero-based interval index."""
    if not 0 <= i < model.k:
        raise IndexError(f"interval index {i} out of range [0, {model.k})")
    return float(model.probabilities(x)[i])


def order_agreement_probability(model: EncodingModel, x, x_prime) -> float:
    """Exact Pr[enc(x) >= enc(x')] for independent encodings, x > x'."""
    if not x > x_prime:
        raise ValueError("need x > x_prime")
    px = model.probabilities(x)
    cdf_prime = np.cumsum(model.probabilities(x_prime))
    return float(np.dot(px, cdf_prime))


def ordinal_targets(p: Partition, x) -> set:
    """Interval indices allowed to dominate p_x: P(x) and its neighbours."""
    m = p.interval_index(x)
    return {i for i in (m - 1, m, m + 1) if 0 <= i < p.k}


def dldp_ratio(model: EncodingModel) -> float:
    """max over (x, x', i) of p_{x,i} / (p_{x',i} * e^{eps |x - x'|}).

    Should never exceed 1 for a correct encoder. Computed in log space.
    """
    if model.deterministic:
        raise ValueError("the deterministic encoder has no finite dLDP bound")
    logp = np.log(model.table())
    xs = model.domain.values().astype(float)
    dist = np.abs(xs[:, None] - xs[None, :])
    worst = -np.inf
    for i in range(model.k):
        col = logp[:, i]
        worst = max(worst, float(np.max(col[:, None] - col[None, :] - model.epsilon * dist)))
    return math.exp(worst)
