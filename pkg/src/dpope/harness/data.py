"""Datasets for experiments: CSV ingestion, synthetic generators and
data-dependent partitions."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from ..core import Dataset, DiscreteDomain, Partition, Prior

log = logging.getLogger(__name__)


class IngestionError(ValueError):
    """Unreadable input or cells that are not numbers."""


@dataclass(frozen=True)
class IngestReport:
    rows: int
    accepted: int
    rejected: int


def ingest_csv(path, column: str, domain: DiscreteDomain, scale: float = 1.0):
    """Read one numeric column, quantize as ``round(value * scale)``.

    Rows outside the domain are dropped and counted. Returns
    ``(Dataset, IngestReport)``.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            log.warning("%s is empty", path)
            return Dataset(domain, np.zeros(0, dtype=np.int64)), IngestReport(0, 0, 0)
        if column not in reader.fieldnames:
            raise IngestionError(f"column {column!r} not in {reader.fieldnames}")
        values, bad = [], []
        rows = 0
        for rowno, row in enumerate(reader, start=2):
            rows += 1
            cell = (row.get(column) or "").strip()
            try:
                v = float(cell)
                if not math.isfinite(v):
                    raise ValueError
            except ValueError:
                bad.append(rowno)
                continue
            values.append(int(round(v * scale)))
    if bad:
        shown = ", ".join(str(r) for r in bad[:10])
        raise IngestionError(f"non-numeric cells in rows {shown}" + (" ..." if len(bad) > 10 else ""))
    arr = np.asarray(values, dtype=np.int64)
    keep = (arr >= domain.lo) & (arr <= domain.hi)
    report = IngestReport(rows, int(keep.sum()), int((~keep).sum()))
    if rows == 0:
        log.warning("%s has no data rows", path)
    if report.rejected:
        log.warning("rejected %d of %d rows outside [%d, %d]", report.rejected, rows, domain.lo, domain.hi)
    return Dataset(domain, arr[keep]), report


# -- synthetic priors and data ------------------------------------------------

def zipf_prior(domain: DiscreteDomain, s: float = 1.0) -> Prior:
    """pmf proportional to 1 / (v - lo + 1)^s."""
    ranks = np.arange(1, domain.size + 1, dtype=float)
    return Prior.from_weights(domain, ranks ** -float(s))


def binned_gaussian_prior(domain: DiscreteDomain, mean: float = None, std: float = None) -> Prior:
    """Normal mass integrated over unit bins centred on each value."""
    mean = (domain.lo + domain.hi) / 2 if mean is None else mean
    std = domain.size / 6 if std is None else std
    v = domain.values().astype(float)
    w = norm.cdf(v + 0.5, mean, std) - norm.cdf(v - 0.5, mean, std)
    if w.sum() <= 0:
        raise ValueError("gaussian puts no mass on the domain")
    return Prior.from_weights(domain, w)


def synthetic_prior(domain: DiscreteDomain, spec: dict) -> Prior:
    kind = spec.get("kind", "uniform")
    if kind == "uniform":
        return Prior.uniform(domain)
    if kind == "zipf":
        return zipf_prior(domain, spec.get("s", 1.0))
    if kind == "gaussian":
        return binned_gaussian_prior(domain, spec.get("mean"), spec.get("std"))
    if kind == "weights":
        return Prior.from_weights(domain, spec["weights"])
    raise ValueError(f"unknown synthetic kind {kind!r}")


def synthetic_dataset(domain: DiscreteDomain, spec: dict, rng: np.random.Generator) -> Dataset:
    n = int(spec.get("n", 10000))
    return Dataset(domain, synthetic_prior(domain, spec).sample(n, rng))


# -- partitions ---------------------------------------------------------------

def equi_depth_partition(x, k: int, domain: DiscreteDomain = None, encodings=None) -> Partition:
    """k intervals holding (as near as ties allow) n/k records each.

    Each cut is the distinct value whose cumulative count is closest to
    i n / k, so a value's records are never split between intervals.
    """
    domain = domain or x.domain
    vals = np.sort(np.asarray(getattr(x, "values", x), dtype=np.int64))
    if k < 1:
        raise ValueError("k must be at least 1")
    u, counts = np.unique(vals, return_counts=True)
    if k > len(u):
        raise ValueError(f"k={k} exceeds the {len(u)} distinct values")
    cum = np.cumsum(counts)
    n = len(vals)
    ends = []
    prev = -1
    for i in range(1, k):
        lo_idx, hi_idx = prev + 1, len(u) - 1 - (k - i)
        window = cum[lo_idx:hi_idx + 1]
        idx = lo_idx + int(np.argmin(np.abs(window - i * n / k)))
        ends.append(int(u[idx]))
        prev = idx
    ends.append(domain.hi)
    return Partition(domain, tuple(ends), encodings)
