"""A stateful, frequency-hiding order-preserving encryption engine.

This is a stand-in for an IND-FA-OCPA scheme: tokens are 128-bit integers
assigned by splitting the gap between a new entry's neighbours. Equal
plaintexts are ordered by the rank supplied with each insertion, so the
permutation recovered by sorting tokens is exactly that rank sequence, and
every token is unique.

When a gap can no longer be split, the tokens inside the smallest aligned
block of token space that is sparse enough are re-spaced evenly (a list
labeling scheme: block 2^i may hold at most 2^i / 1.5^i tokens), which keeps
the amortized relabeling cost logarithmic even for runs of inserts at one
spot. Each rebalance appends its old->new mapping to ``rebalance_log`` so
stored ciphertexts can be refreshed.

Tokens are plain Python ints. The engine is single-writer: ``encrypt``
mutates the state in place.
"""

from __future__ import annotations

import hashlib
import struct
from typing import Iterable, Iterator, Sequence

from sortedcontainers import SortedList

from .core import RandomizedOrder

TOKEN_MIN = 1
TOKEN_MAX = 2 ** 128 - 2
_LEFT_SENTINEL = TOKEN_MIN - 1
_RIGHT_SENTINEL = TOKEN_MAX + 1

MAGIC = b"OPES"
VERSION = 1
_HEADER = struct.Struct("<4sHQ")
_ENTRY = struct.Struct("<qI16s")

# keyed jitter is at most 1/64 of a gap either side of its midpoint
_JITTER_DIVISOR = 64
# a block of 2^i token values is relabeled only while it holds < (2 / T)^i tokens
_DENSITY_BASE = 1.5
_TOKEN_BITS = 128

OrderToken = int


class UnknownTokenError(LookupError):
    """The token was never issued by this state (or is stale)."""


class CheckpointError(ValueError):
    """A checkpoint blob is malformed."""


def _derive_secret(seed: bytes) -> bytes:
    if not seed:
        raise ValueError("seed must be a non-empty byte string")
    return hashlib.blake2b(seed, digest_size=32, person=b"dpope-ope-key").digest()


class OpeState:
    """Ordered token assignment for (plaintext, rank) entries.

    ``_keys`` and ``_tokens`` are sorted containers kept index-aligned:
    token order always equals (plaintext, rank) order.
    """

    def __init__(self, secret: bytes):
        self._secret = secret
        self._keys = SortedList()    # (plaintext, rank)
        self._tokens = SortedList()  # strictly ascending, aligned with _keys
        self._by_token: dict = {}    # token -> (plaintext, rank)
        self._by_key: dict = {}      # (plaintext, rank) -> token
        self._ranks: set = set()
        self.rebalance_log: list = []

    # -- inspection -----------------------------------------------------------

    def __len__(self) -> int:
        return len(self._keys)

    @property
    def epoch(self) -> int:
        """Number of rebalances so far; tokens are only valid within an epoch."""
        return len(self.rebalance_log)

    def entries(self) -> Iterator[tuple]:
        """(plaintext, rank, token) in token order."""
        for (x, r), t in zip(self._keys, self._tokens):
            yield x, r, t

    def tokens(self) -> list:
        return list(self._tokens)

    # -- core operations --------------------------------------------------------

    def _split(self, left: int, right: int) -> int:
        gap = right - left
        mid = left + gap // 2
        r = gap // _JITTER_DIVISOR
        if r == 0:
            return mid
        h = hashlib.blake2b(left.to_bytes(16, "little") + right.to_bytes(16, "little"),
                            key=self._secret, digest_size=16).digest()
        return mid + int.from_bytes(h, "little") % (2 * r + 1) - r

    def _assign(self, key: tuple, token: int) -> None:
        self._by_token[token] = key
        self._by_key[key] = token

    def encrypt(self, x: int, rank: int) -> OrderToken:
        """Insert plaintext ``x`` with tie-break ``rank`` and return its token."""
        x, rank = int(x), int(rank)
        if rank in self._ranks:
            raise ValueError(f"rank {rank} was already used")
        key = (x, rank)
        pos = self._keys.bisect_left(key)
        left = self._tokens[pos - 1] if pos > 0 else _LEFT_SENTINEL
        right = self._tokens[pos] if pos < len(self._tokens) else _RIGHT_SENTINEL
        self._keys.add(key)
        self._ranks.add(rank)
        if right - left < 2:
            self._relabel_around(left)
            return self._by_key[key]
        token = self._split(left, right)
        self._tokens.add(token)
        self._assign(key, token)
        return token

    def _relabel_around(self, anchor: int) -> None:
        """Re-space the smallest sparse aligned block holding ``anchor``.

        Called after a key was added to ``_keys`` but not yet given a token;
        ``anchor`` is the token of its left neighbour (or the left sentinel).
        """
        for i in range(1, _TOKEN_BITS + 1):
            base = (anchor >> i) << i
            lo = max(base, TOKEN_MIN)
            hi = min(base + (1 << i) - 1, TOKEN_MAX)
            a = self._tokens.bisect_left(lo)
            b = self._tokens.bisect_right(hi)
            count = b - a + 1          # the new key sits among them
            if count * _DENSITY_BASE ** i < (1 << i) and hi - lo + 1 > count:
                self._respace(a, b, lo, hi)
                return
        self._respace(0, len(self._tokens), TOKEN_MIN, TOKEN_MAX)

    def _respace(self, a: int, b: int, lo: int, hi: int) -> None:
        """Spread the entries holding tokens ``a..b-1``, plus the new key,
        evenly over ``[lo, hi]``."""
        keys = list(self._keys.islice(a, b + 1))
        step = (hi - lo + 1) // (len(keys) + 1)
        new = [lo + (j + 1) * step for j in range(len(keys))]
        mapping = {}
        for k in keys:
            old = self._by_key.get(k)
            if old is not None:
                del self._by_token[old]
        for k, t in zip(keys, new):
            old = self._by_key.get(k)
            if old is not None:
                mapping[old] = t
            self._assign(k, t)
        del self._tokens[a:b]
        self._tokens.update(new)
        self.rebalance_log.append(mapping)

    def token_of(self, x: int, rank: int) -> OrderToken:
        """Current token of the entry ``(x, rank)``."""
        return self._by_key[(int(x), int(rank))]

    def decrypt(self, token: OrderToken) -> int:
        try:
            return self._by_token[token][0]
        except KeyError:
            raise UnknownTokenError(f"unknown token {token:#x}") from None

    def rank_of(self, token: OrderToken) -> int:
        try:
            return self._by_token[token][1]
        except KeyError:
            raise UnknownTokenError(f"unknown token {token:#x}") from None

    def remap(self, token: OrderToken, since_epoch: int) -> OrderToken:
        """Translate a token issued at ``since_epoch`` to the current epoch."""
        for mapping in self.rebalance_log[since_epoch:]:
            token = mapping.get(token, token)
        if token not in self._by_token:
            raise UnknownTokenError(f"unknown token {token:#x}")
        return token

    # -- checkpoints ----------------------------------------------------------

    def checkpoint(self) -> bytes:
        parts = [_HEADER.pack(MAGIC, VERSION, len(self._keys))]
        for (x, r), t in zip(self._keys, self._tokens):
            parts.append(_ENTRY.pack(x, r, t.to_bytes(16, "little")))
        return b"".join(parts)

    @classmethod
    def from_checkpoint(cls, blob: bytes, seed: bytes) -> "OpeState":
        if len(blob) < _HEADER.size:
            raise CheckpointError("truncated header")
        magic, version, count = _HEADER.unpack_from(blob)
        if magic != MAGIC:
            raise CheckpointError(f"bad magic {magic!r}")
        if version != VERSION:
            raise CheckpointError(f"unsupported version {version}")
        if len(blob) != _HEADER.size + count * _ENTRY.size:
            raise CheckpointError("entry count does not match blob length")
        state = cls(_derive_secret(seed))
        keys, tokens = [], []
        for i in range(count):
            x, r, raw = _ENTRY.unpack_from(blob, _HEADER.size + i * _ENTRY.size)
            t = int.from_bytes(raw, "little")
            key = (x, r)
            if keys and (key <= keys[-1] or t <= tokens[-1]):
                raise CheckpointError("entries are not strictly ordered")
            if r in state._ranks:
                raise CheckpointError(f"rank {r} appears twice")
            keys.append(key)
            tokens.append(t)
            state._assign(key, t)
            state._ranks.add(r)
        state._keys.update(keys)
        state._tokens.update(tokens)
        return state


def keygen(seed: bytes) -> OpeState:
    """Fresh empty state whose token choices are keyed by ``seed``."""
    return OpeState(_derive_secret(seed))


def encrypt(state: OpeState, x: int, gamma_rank: int):
    """Functional form ``(S', y) <- E(S, x, rank)``; ``S'`` is ``state`` mutated."""
    token = state.encrypt(x, gamma_rank)
    return state, token


def decrypt(state: OpeState, y: OrderToken) -> int:
    return state.decrypt(y)


def encrypt_sequence(state: OpeState, xs: Sequence[int], gamma: RandomizedOrder,
                     rank_offset: int = 0) -> list:
    """Encrypt ``xs`` in order under ``gamma`` and return current-epoch tokens.

    ``rank_offset`` shifts the ranks so several sequences can share one
    state without rank collisions.
    """
    if len(xs) != len(gamma):
        raise ValueError("gamma must have one rank per value")
    ranks = [g + rank_offset for g in gamma]
    for x, r in zip(xs, ranks):
        state.encrypt(x, r)
    return [state.token_of(x, r) for x, r in zip(xs, ranks)]


def leaked_order(tokens: Iterable[OrderToken]) -> RandomizedOrder:
    """The permutation an observer recovers by sorting tokens."""
    tokens = list(tokens)
    order = sorted(range(len(tokens)), key=tokens.__getitem__)
    perm = [0] * len(tokens)
    for rank, i in enumerate(order, start=1):
        perm[i] = rank
    return RandomizedOrder(tuple(perm))
