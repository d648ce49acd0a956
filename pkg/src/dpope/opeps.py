"""The composed scheme: encoder at eps/2 feeding the OPE engine.

The augmented variant also seals each exact plaintext with AES-256-GCM so
a querier can drop false positives after a range query.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
import os
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from . import ope
from .core import (DiscreteDomain, Partition, Prior, RandomizedOrder,
                   common_randomized_order, sample_randomized_order,
                   stable_randomized_order)
from .opec import EncodingModel, build_encoding_model, encode_indices

NONCE_BYTES = 12
FORMAT_VERSION = 1


class IntegrityError(ValueError):
    """A sealed blob failed authentication."""


class Sealer:
    """Authenticated encryption of integer plaintexts.

    ``nonce_source`` defaults to ``os.urandom``; tests may inject a seeded
    source for reproducibility.
    """

    def __init__(self, key: bytes, nonce_source: Optional[Callable[[int], bytes]] = None):
        if len(key) < 32:
            raise ValueError("seal key must be at least 256 bits")
        self._aead = AESGCM(key[:32])
        self._nonce = nonce_source or os.urandom

    def seal(self, x: int) -> bytes:
        nonce = self._nonce(NONCE_BYTES)
        return nonce + self._aead.encrypt(nonce, int(x).to_bytes(8, "little", signed=True), None)

    def unseal(self, blob: bytes) -> int:
        nonce, body = blob[:NONCE_BYTES], blob[NONCE_BYTES:]
        try:
            raw = self._aead.decrypt(nonce, body, None)
        except InvalidTag:
            raise IntegrityError("sealed value failed authentication") from None
        return int.from_bytes(raw, "little", signed=True)


@dataclass(frozen=True)
class AugmentedCiphertext:
    y0: int      # order token
    y1: bytes    # nonce || AES-GCM(x)


class OpepsScheme:
    """One attribute encrypted under the composed scheme.

    ``epsilon`` is the scheme-level budget; the encoder runs at half of it.
    """

    def __init__(self, model: EncodingModel, state: ope.OpeState, sealer: Sealer,
                 epsilon: float):
        self.model = model
        self.ope = state
        self.sealer = sealer
        self.epsilon = epsilon

    @property
    def partition(self) -> Partition:
        return self.model.partition

    def decrypt(self, ct: AugmentedCiphertext) -> tuple:
        """(encoding, exact plaintext) for one ciphertext."""
        return self.ope.decrypt(ct.y0), self.sealer.unseal(ct.y1)


def _seal_key(seed: bytes) -> bytes:
    return hashlib.blake2b(seed, digest_size=32, person=b"dpope-seal-key").digest()


def opeps_keygen(seed: bytes, partition: Partition, prior: Optional[Prior], epsilon: float,
                 nonce_source=None) -> OpepsScheme:
    """Scheme with encoder at ``epsilon / 2``, empty OPE state and a seal key."""
    epsilon = float(epsilon)
    model = build_encoding_model(partition, prior, epsilon / 2)
    return OpepsScheme(model, ope.keygen(seed), Sealer(_seal_key(seed), nonce_source), epsilon)


def encrypt_dataset(s: OpepsScheme, x, rng: np.random.Generator,
                    gamma: Optional[RandomizedOrder] = None,
                    tie_break: str = "random") -> List[AugmentedCiphertext]:
    """Encode, order-encrypt and seal every record of ``x``.

    Without ``gamma`` a randomized order of the encodings is built: equal
    encodings are shuffled (``tie_break="random"``) or kept in record order
    (``"stable"``). Returned tokens are valid for the state's current epoch.
    """
    xs = np.asarray(getattr(x, "values", x), dtype=np.int64)
    idx = encode_indices(s.model, xs, rng)
    encodings = np.asarray(s.partition.encodings, dtype=np.int64)[idx]
    if gamma is None:
        if tie_break == "random":
            gamma = sample_randomized_order(encodings, rng)
        elif tie_break == "stable":
            gamma = stable_randomized_order(encodings)
        else:
            raise ValueError(f"unknown tie_break {tie_break!r}")
    offset = len(s.ope)
    tokens = ope.encrypt_sequence(s.ope, encodings.tolist(), gamma, rank_offset=offset)
    return [AugmentedCiphertext(t, s.sealer.seal(v)) for t, v in zip(tokens, xs.tolist())]


def refresh(s: OpepsScheme, cts: Sequence[AugmentedCiphertext], since_epoch: int):
    """Bring stored ciphertexts up to the state's current epoch."""
    return [AugmentedCiphertext(s.ope.remap(c.y0, since_epoch), c.y1) for c in cts]


def encrypt_record_multi(schemes: Sequence[OpepsScheme], row: Sequence[int],
                         rng: np.random.Generator, rank: Optional[int] = None):
    """Encrypt one multi-attribute record, each column under its own scheme.

    Columns are independent mechanisms, so the released tuple costs the sum
    of the per-column budgets (see :func:`composed_epsilon`).
    """
    if len(schemes) != len(row):
        raise ValueError(f"{len(row)} values for {len(schemes)} column schemes")
    out = []
    for s, v in zip(schemes, row):
        o = s.partition.encodings[int(encode_indices(s.model, [v], rng)[0])]
        r = len(s.ope) + 1 if rank is None else rank
        t = s.ope.encrypt(o, r)
        out.append(AugmentedCiphertext(t, s.sealer.seal(v)))
    return out


def composed_epsilon(schemes: Iterable[OpepsScheme]) -> float:
    """Total budget of releasing all columns of a record."""
    return float(sum(s.epsilon for s in schemes))


def sequence_probability(model: EncodingModel, values, interval_indices) -> float:
    """Exact probability that ``values`` encode to the given interval indices."""
    p = 1.0
    for v, i in zip(values, interval_indices):
        p *= float(model.probabilities(v)[i])
    return p


def fa_ocpa_round(model0: EncodingModel, model1: EncodingModel, x00, x01, x10, x11,
                  b1: int, b2: int, rng: np.random.Generator, seed: bytes = b"game"):
    """One challenger run of the eps-IND-FA-OCPA game.

    Returns the ciphertext tokens for dataset X_{b1 b2}, or ``None`` when the
    two step-3 encodings share no randomized order (the game aborts). The
    models are encoders at half the scheme budget.
    """
    o0 = encode_indices(model0, x00, rng)
    o1 = encode_indices(model1, x10, rng)
    gamma = common_randomized_order(o0, o1, rng)
    if gamma is None:
        return None
    state = ope.keygen(seed)
    if b2 == 0:
        enc = o0 if b1 == 0 else o1
    else:
        model = model0 if b1 == 0 else model1
        enc = encode_indices(model, x01 if b1 == 0 else x11, rng)
    return ope.encrypt_sequence(state, enc.tolist(), gamma)


# -- encrypted dataset files --------------------------------------------------

def write_encrypted_dataset(path, s: OpepsScheme, cts: Sequence[AugmentedCiphertext]) -> None:
    header = {
        "format": "dpope-encrypted",
        "version": FORMAT_VERSION,
        "domain": [s.partition.domain.lo, s.partition.domain.hi],
        "boundaries": list(s.partition.boundaries),
        "encodings": list(s.partition.encodings),
        "epsilon": "inf" if math.isinf(s.epsilon) else s.epsilon,
        "count": len(cts),
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("#" + json.dumps(header, sort_keys=True) + "\n")
        for c in cts:
            fh.write(f"{c.y0:032x},{base64.b64encode(c.y1).decode('ascii')}\n")


def read_encrypted_dataset(path):
    """Return ``(header, ciphertexts)`` from a file written above."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ValueError("missing header line")
        header = json.loads(first[1:])
        if header.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported format version {header.get('version')}")
        cts = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            try:
                tok, blob = line.split(",")
                cts.append(AugmentedCiphertext(int(tok, 16), base64.b64decode(blob, validate=True)))
            except ValueError as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
    return header, cts


def partition_from_header(header) -> Partition:
    return Partition(DiscreteDomain(*header["domain"]), tuple(header["boundaries"]),
                     tuple(header["encodings"]))
