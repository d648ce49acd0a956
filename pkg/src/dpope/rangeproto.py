"""Client/server range queries over records encrypted with the composed scheme.

The querier (who is also the data owner) keeps the smallest and largest
order token issued for each encoding. A range ``[a, b]`` becomes a token
interval covering the encodings of ``a`` and ``b`` widened by ``l``
neighbours; the server returns every record whose token falls inside it and
the client unseals the exact values to drop false positives.
"""

from __future__ import annotations

import csv
import json
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .core import DiscreteDomain, Partition
from .opeps import AugmentedCiphertext, IntegrityError, OpepsScheme, Sealer


@dataclass(frozen=True)
class TokenRange:
    lo: int
    hi: int

    @property
    def empty(self) -> bool:
        return self.lo > self.hi

    @classmethod
    def nothing(cls) -> "TokenRange":
        return cls(1, 0)


@dataclass(frozen=True)
class ClientState:
    """Per-encoding ``(min_token, max_token)`` for encodings with records."""

    bounds: Dict[int, Tuple[int, int]] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.bounds)

    def present(self) -> list:
        return sorted(self.bounds)


class ServerStore:
    """Immutable, token-sorted collection of ``(record_id, ciphertext)``."""

    def __init__(self, records: Iterable[Tuple[int, AugmentedCiphertext]]):
        recs = sorted(records, key=lambda r: r[1].y0)
        tokens = [c.y0 for _, c in recs]
        if any(t2 == t1 for t1, t2 in zip(tokens, tokens[1:])):
            raise ValueError("order tokens must be pairwise distinct")
        self._records = tuple(recs)
        self._tokens = tokens

    def __len__(self) -> int:
        return len(self._records)

    def records(self) -> tuple:
        return self._records

    @classmethod
    def from_ciphertexts(cls, cts: Sequence[AugmentedCiphertext]) -> "ServerStore":
        return cls(enumerate(cts))


@dataclass(frozen=True)
class QueryMetrics:
    rho_M: float
    rho_E: float
    returned: int
    correct: int
    missing: int
    extra: int


def build_client_state(pairs: Iterable[Tuple[int, int]]) -> ClientState:
    """State from ``(token, encoding)`` pairs the querier decrypted at setup."""
    bounds: Dict[int, Tuple[int, int]] = {}
    for token, o in pairs:
        o = int(o)
        if o in bounds:
            lo, hi = bounds[o]
            bounds[o] = (min(lo, token), max(hi, token))
        else:
            bounds[o] = (token, token)
    return ClientState(bounds)


def client_state_for(scheme: OpepsScheme, cts: Sequence[AugmentedCiphertext]) -> ClientState:
    return build_client_state((c.y0, scheme.ope.decrypt(c.y0)) for c in cts)


def transform_query(state: ClientState, p: Partition, a: int, b: int,
                    neighbors: int = 0) -> TokenRange:
    """Token interval for ``[a, b]`` widened by ``neighbors`` encodings.

    The widened encoding range is clamped inward to encodings that have
    records; when none do the range is empty.
    """
    if a > b:
        raise ValueError(f"empty query range [{a}, {b}]")
    if neighbors < 0:
        raise ValueError("neighbors must be non-negative")
    lo_i = max(0, p.interval_index(a) - neighbors)
    hi_i = min(p.k - 1, p.interval_index(b) + neighbors)
    present = [o for o in p.encodings[lo_i:hi_i + 1] if o in state.bounds]
    if not present:
        return TokenRange.nothing()
    return TokenRange(state.bounds[present[0]][0], state.bounds[present[-1]][1])


def server_filter(store: ServerStore, rng: TokenRange) -> list:
    """Records with token in the closed range, in token order."""
    if rng.empty:
        return []
    i = bisect_left(store._tokens, rng.lo)
    j = bisect_right(store._tokens, rng.hi)
    return list(store._records[i:j])


def client_verify(result: Sequence[Tuple[int, AugmentedCiphertext]], sealer: Sealer,
                  a: int, b: int) -> Tuple[list, int]:
    """Unseal returned records; keep ids with value in ``[a, b]``.

    Returns ``(kept_ids, extra)`` where ``extra`` counts the discarded ones.
    """
    kept = []
    for rid, ct in result:
        try:
            v = sealer.unseal(ct.y1)
        except IntegrityError:
            raise IntegrityError(f"record {rid} failed authentication") from None
        if a <= v <= b:
            kept.append(rid)
    return kept, len(result) - len(kept)


def query_metrics(returned: int, kept: int, correct: int, n: int) -> QueryMetrics:
    """Metrics from counts; ``correct`` is the ground-truth answer size."""
    missing = correct - kept
    extra = returned - kept
    rho_m = 100.0 * missing / correct if correct > 0 else 0.0
    rho_e = 100.0 * extra / n if n > 0 else 0.0
    return QueryMetrics(rho_m, rho_e, returned, correct, missing, extra)


# -- transport ---------------------------------------------------------------

class InProcessTransport:
    """Request/response channel to a server handler, optionally recorded.

    Messages are plain dicts that round-trip through JSON, so the recorded
    transcript is exactly what a socket binding would carry.
    """

    def __init__(self, store: ServerStore, record: bool = False):
        self._store = store
        self.transcript: Optional[list] = [] if record else None

    def _handle(self, request: dict) -> tuple:
        q = request["query"]
        rows = server_filter(self._store, TokenRange(int(q["lo_token"], 16), int(q["hi_token"], 16)))
        return {"result": [rid for rid, _ in rows]}, rows

    def send(self, request: dict):
        request = json.loads(json.dumps(request))
        response, rows = self._handle(request)
        if self.transcript is not None:
            self.transcript.append({"request": request, "response": response})
        return rows

    def write_transcript(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for item in self.transcript or []:
                fh.write(json.dumps(item) + "\n")


def query_message(rng: TokenRange) -> dict:
    # 128-bit tokens exceed JSON's safe integer range, so send them as hex
    return {"query": {"lo_token": f"{rng.lo:x}", "hi_token": f"{rng.hi:x}"}}


class RangeClient:
    """Querier holding the state table and the seal key."""

    def __init__(self, scheme: OpepsScheme, state: ClientState, transport: InProcessTransport):
        self.scheme = scheme
        self.state = state
        self.transport = transport

    def query(self, a: int, b: int, neighbors: int = 0) -> Tuple[list, int, int]:
        """Run one query; returns ``(kept_ids, returned, extra)``."""
        rng = transform_query(self.state, self.scheme.partition, a, b, neighbors)
        rows = [] if rng.empty else self.transport.send(query_message(rng))
        kept, extra = client_verify(rows, self.scheme.sealer, a, b)
        return kept, len(rows), extra


# -- workloads ---------------------------------------------------------------

def build_workload_partition(queries: Sequence[Tuple[int, int]], domain: DiscreteDomain,
                             encodings=None) -> Partition:
    """Coarsest partition with no interval straddling any query endpoint.

    Interval starts are ``domain.lo``, every query start ``s`` and every
    ``e + 1`` for a query end ``e`` below ``domain.hi``.
    """
    starts = {domain.lo}
    for s, e in queries:
        domain.check(s)
        domain.check(e)
        if s > e:
            raise ValueError(f"bad query ({s}, {e})")
        starts.add(int(s))
        if e < domain.hi:
            starts.add(int(e) + 1)
    return Partition.from_starts(domain, starts, encodings)


def answer_workload(client: RangeClient, queries: Sequence[Tuple[int, int]],
                    truth, neighbors: int = 0) -> List[QueryMetrics]:
    """Answer every query and score it against the plaintext ``truth``."""
    vals = np.sort(np.asarray(truth))
    n = len(vals)
    out = []
    for a, b in queries:
        kept, returned, _ = client.query(a, b, neighbors)
        correct = int(np.searchsorted(vals, b, side="right") - np.searchsorted(vals, a, side="left"))
        out.append(query_metrics(returned, len(kept), correct, n))
    return out


def write_metrics_csv(path, rows: Iterable[dict]) -> None:
    """CSV with columns epsilon, partition_k, l, rho_M, rho_E (plus extras)."""
    rows = list(rows)
    cols = ["epsilon", "partition_k", "l", "rho_M", "rho_E"]
    extra = [c for c in (rows[0].keys() if rows else []) if c not in cols]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols + extra, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)
