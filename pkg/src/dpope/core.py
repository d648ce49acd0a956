"""Discrete domains, partitions, priors and randomized orders.

Everything here is immutable once constructed. Randomness is always drawn
from a ``numpy.random.Generator`` passed in by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np


class DomainError(ValueError):
    """A value falls outside the declared discrete domain."""


class DegeneratePriorError(ValueError):
    """A prior puts zero mass on a region where mass is required."""


@dataclass(frozen=True)
class DiscreteDomain:
    """The integer interval ``[lo, hi]`` (both ends inclusive)."""

    lo: int
    hi: int

    def __post_init__(self):
        if int(self.lo) != self.lo or int(self.hi) != self.hi:
            raise TypeError("domain bounds must be integers")
        object.__setattr__(self, "lo", int(self.lo))
        object.__setattr__(self, "hi", int(self.hi))
        if self.lo > self.hi:
            raise ValueError(f"empty domain [{self.lo}, {self.hi}]")

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    def values(self) -> np.ndarray:
        return np.arange(self.lo, self.hi + 1, dtype=np.int64)

    def __contains__(self, x) -> bool:
        return self.lo <= x <= self.hi

    def index(self, x) -> int:
        """Zero-based position of ``x`` inside the domain."""
        self.check(x)
        return int(x) - self.lo

    def check(self, x) -> None:
        if not (self.lo <= x <= self.hi):
            raise DomainError(f"{x} outside domain [{self.lo}, {self.hi}]")

    def check_array(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.int64)
        if xs.size and (xs.min() < self.lo or xs.max() > self.hi):
            bad = xs[(xs < self.lo) | (xs > self.hi)][0]
            raise DomainError(f"{bad} outside domain [{self.lo}, {self.hi}]")
        return xs


@dataclass(frozen=True)
class Partition:
    """k non-overlapping intervals tiling a domain, each with an encoding.

    ``boundaries`` holds the right ends e_1 < ... < e_k (e_k = domain.hi).
    Interval 0 is ``[lo, e_1]`` and interval i is ``(e_i, e_{i+1}]``.
    Interval indices are zero-based; ``encodings[i]`` is the label of
    interval i.
    """

    domain: DiscreteDomain
    boundaries: tuple
    encodings: tuple = None

    def __post_init__(self):
        b = tuple(int(e) for e in self.boundaries)
        if not b:
            raise ValueError("a partition needs at least one interval")
        if any(b2 <= b1 for b1, b2 in zip(b, b[1:])):
            raise ValueError("boundaries must be strictly ascending")
        if b[0] < self.domain.lo or b[-1] != self.domain.hi:
            raise ValueError("boundaries must lie in the domain and end at domain.hi")
        enc = self.encodings
        if enc is None:
            enc = tuple(range(1, len(b) + 1))
        enc = tuple(int(o) for o in enc)
        if len(enc) != len(b):
            raise ValueError("need exactly one encoding per interval")
        if any(o2 <= o1 for o1, o2 in zip(enc, enc[1:])):
            raise ValueError("encodings must be strictly ascending")
        object.__setattr__(self, "boundaries", b)
        object.__setattr__(self, "encodings", enc)
        object.__setattr__(self, "_bounds", np.asarray(b, dtype=np.int64))
        object.__setattr__(self, "_enc", np.asarray(enc, dtype=np.int64))

    # -- constructors -------------------------------------------------------

    @classmethod
    def identity(cls, domain: DiscreteDomain) -> "Partition":
        """Every value is its own interval and its own encoding."""
        vals = tuple(range(domain.lo, domain.hi + 1))
        return cls(domain, vals, vals)

    @classmethod
    def equi_length(cls, domain: DiscreteDomain, k: int, encodings=None) -> "Partition":
        if not 1 <= k <= domain.size:
            raise ValueError(f"k={k} must be in [1, {domain.size}]")
        ends = [domain.lo - 1 + (i * domain.size) // k for i in range(1, k + 1)]
        return cls(domain, tuple(ends), encodings)

    @classmethod
    def from_starts(cls, domain: DiscreteDomain, starts: Iterable[int], encodings=None) -> "Partition":
        """Build from interval start points; ``domain.lo`` is always a start."""
        s = sorted(set(int(v) for v in starts) | {domain.lo})
        for v in s:
            domain.check(v)
        ends = [v - 1 for v in s[1:]] + [domain.hi]
        return cls(domain, tuple(ends), encodings)

    # -- queries ------------------------------------------------------------

    @property
    def k(self) -> int:
        return len(self.boundaries)

    def __len__(self) -> int:
        return self.k

    def starts(self) -> tuple:
        return (self.domain.lo,) + tuple(e + 1 for e in self.boundaries[:-1])

    def interval(self, i: int) -> tuple:
        """Inclusive bounds ``(first, last)`` of interval ``i``."""
        if not 0 <= i < self.k:
            raise IndexError(f"interval index {i} out of range")
        first = self.domain.lo if i == 0 else self.boundaries[i - 1] + 1
        return first, self.boundaries[i]

    def interval_index(self, x) -> int:
        self.domain.check(x)
        return int(np.searchsorted(self._bounds, x, side="left"))

    def interval_indices(self, xs) -> np.ndarray:
        xs = self.domain.check_array(xs)
        return np.searchsorted(self._bounds, xs, side="left")

    def map(self, x) -> int:
        return self.encodings[self.interval_index(x)]

    def map_array(self, xs) -> np.ndarray:
        return self._enc[self.interval_indices(xs)]

    def encoding_index(self, o) -> int:
        i = int(np.searchsorted(self._enc, o))
        if i >= self.k or self.encodings[i] != o:
            raise DomainError(f"{o} is not an encoding of this partition")
        return i

    def is_identity(self) -> bool:
        return self.k == self.domain.size and self.encodings == tuple(self.domain.values())


def partition_map(p: Partition, x: int) -> int:
    """Encoding of the interval containing ``x``."""
    return p.map(x)


@dataclass(frozen=True)
class Prior:
    """A probability mass function over a discrete domain."""

    domain: DiscreteDomain
    pmf: np.ndarray = field(repr=False)

    def __post_init__(self):
        pmf = np.array(self.pmf, dtype=float)
        if pmf.shape != (self.domain.size,):
            raise ValueError(f"pmf needs {self.domain.size} weights, got {pmf.shape}")
        if np.any(pmf < 0) or not np.all(np.isfinite(pmf)):
            raise ValueError("pmf weights must be finite and non-negative")
        total = pmf.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"pmf sums to {total}, expected 1")
        pmf.setflags(write=False)
        object.__setattr__(self, "pmf", pmf)

    @classmethod
    def uniform(cls, domain: DiscreteDomain) -> "Prior":
        return cls(domain, np.full(domain.size, 1.0 / domain.size))

    @classmethod
    def point_mass(cls, domain: DiscreteDomain, v: int) -> "Prior":
        pmf = np.zeros(domain.size)
        pmf[domain.index(v)] = 1.0
        return cls(domain, pmf)

    @classmethod
    def from_weights(cls, domain: DiscreteDomain, weights) -> "Prior":
        w = np.asarray(weights, dtype=float)
        return cls(domain, w / w.sum())

    @classmethod
    def from_data(cls, domain: DiscreteDomain, values) -> "Prior":
        """Empirical distribution of ``values``."""
        xs = domain.check_array(values)
        if xs.size == 0:
            raise DegeneratePriorError("cannot build an empirical prior from no data")
        counts = np.bincount(xs - domain.lo, minlength=domain.size)
        return cls(domain, counts / counts.sum())

    def prob(self, x) -> float:
        return float(self.pmf[self.domain.index(x)])

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.pmf)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        idx = rng.choice(self.domain.size, size=n, p=self.pmf)
        return idx.astype(np.int64) + self.domain.lo


@dataclass(frozen=True)
class Dataset:
    """A sequence of integers drawn from a declared domain."""

    domain: DiscreteDomain
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        xs = self.domain.check_array(np.array(self.values, dtype=np.int64).ravel())
        xs.setflags(write=False)
        object.__setattr__(self, "values", xs)

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values.tolist())


@dataclass(frozen=True)
class RandomizedOrder:
    """A permutation Γ of ``1..n``; ``perm[i]`` is the rank of record i."""

    perm: tuple

    def __post_init__(self):
        perm = tuple(int(g) for g in self.perm)
        if sorted(perm) != list(range(1, len(perm) + 1)):
            raise ValueError("a randomized order must be a permutation of 1..n")
        object.__setattr__(self, "perm", perm)

    def __len__(self) -> int:
        return len(self.perm)

    def __iter__(self):
        return iter(self.perm)

    def __getitem__(self, i):
        return self.perm[i]

    def inverse(self) -> tuple:
        """Zero-based record indices listed in rank order."""
        inv = [0] * len(self.perm)
        for i, g in enumerate(self.perm):
            inv[g - 1] = i
        return tuple(inv)

    def is_valid_for(self, values: Sequence) -> bool:
        """Check the randomized-order predicate against ``values``.

        Equivalent to: walking records in rank order gives a non-decreasing
        sequence of values.
        """
        xs = np.asarray(values)
        if len(xs) != len(self.perm):
            return False
        ordered = xs[list(self.inverse())]
        return bool(np.all(ordered[1:] >= ordered[:-1]))

    def prefix(self, i: int) -> tuple:
        """Relative order of the first ``i`` ranks (``Γ↓i``)."""
        head = self.perm[:i]
        srt = sorted(head)
        return tuple(srt.index(g) + 1 for g in head)


def _ranks_from_sort_keys(*keys) -> RandomizedOrder:
    # np.lexsort sorts by the last key first
    order = np.lexsort(keys[::-1])
    perm = np.empty(len(order), dtype=np.int64)
    perm[order] = np.arange(1, len(order) + 1)
    return RandomizedOrder(tuple(perm.tolist()))


def stable_randomized_order(x) -> RandomizedOrder:
    """The randomized order that keeps equal values in input order."""
    return _ranks_from_sort_keys(np.asarray(getattr(x, "values", x)))


def sample_randomized_order(x, rng: np.random.Generator) -> RandomizedOrder:
    """Sample a randomized order of ``x`` with ties broken uniformly."""
    xs = np.asarray(x.values if isinstance(x, Dataset) else x)
    return _ranks_from_sort_keys(xs, rng.random(len(xs)))


def has_common_randomized_order(x0, x1) -> bool:
    x0 = np.asarray(x0.values if isinstance(x0, Dataset) else x0)
    x1 = np.asarray(x1.values if isinstance(x1, Dataset) else x1)
    if len(x0) != len(x1):
        raise ValueError("datasets must have equal length")
    # a common order exists iff no pair is ordered oppositely; equivalently
    # x1 is non-decreasing once records are sorted by (x0, x1)
    order = np.lexsort((x1, x0))
    s1 = x1[order]
    return bool(np.all(s1[1:] >= s1[:-1]))


def common_randomized_order(x0, x1, rng: np.random.Generator) -> Optional[RandomizedOrder]:
    """Uniformly sample an order valid for both datasets, or ``None``.

    Records that agree on both (x0, x1) values are the only free ties, so
    a uniform draw shuffles just those.
    """
    if not has_common_randomized_order(x0, x1):
        return None
    x0 = np.asarray(x0.values if isinstance(x0, Dataset) else x0)
    x1 = np.asarray(x1.values if isinstance(x1, Dataset) else x1)
    return _ranks_from_sort_keys(x0, x1, rng.random(len(x0)))


def weighted_median(p: Partition, interval_index: int, prior: Prior) -> float:
    """Weighted median of one interval of ``p`` under ``prior``.

    With L the smallest value whose renormalised CDF reaches 1/2 and U the
    smallest value whose CDF exceeds 1/2, returns (L + U) / 2. A uniform
    prior on [1, 20] gives 10.5.
    """
    first, last = p.interval(interval_index)
    lo = prior.domain.lo
    w = prior.pmf[first - lo:last - lo + 1]
    total = w.sum()
    if total <= 0:
        raise DegeneratePriorError(
            f"prior has no mass on interval [{first}, {last}]")
    cdf = np.cumsum(w) / total
    # guard the exact-half comparison against rounding in the cumulative sum
    tol = 1e-12
    L = int(np.argmax(cdf >= 0.5 - tol))
    U = int(np.argmax(cdf > 0.5 + tol))
    return first + (L + U) / 2.0
