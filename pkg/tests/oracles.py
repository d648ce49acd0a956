"""Independent reference computations shared by the unit and acceptance tests."""

import itertools

import numpy as np

from dpope import ope
from dpope.opeps import OpepsScheme, encrypt_dataset


def pair_order_rate(scheme, x_lo, x_hi, trials, rng, tie_break, batch=1000):
    """Fraction of (x_lo, x_hi) record pairs whose tokens put x_hi above x_lo.

    Pairs are encrypted in batches, each batch a fresh OPE state under the
    scheme's encoder. Every pair's encodings are independent draws, and
    with tie_break="stable" equal encodings keep record order, so the token
    order within a pair is what a 2-record dataset would reveal.
    """
    hits = 0
    done = 0
    b = 0
    while done < trials:
        m = min(batch, trials - done)
        s = OpepsScheme(scheme.model, ope.keygen(b"pair-%d" % b), scheme.sealer, scheme.epsilon)
        cts = encrypt_dataset(s, np.tile([x_lo, x_hi], m), rng, tie_break=tie_break)
        y = [c.y0 for c in cts]
        hits += sum(y[2 * i + 1] > y[2 * i] for i in range(m))
        done += m
        b += 1
    return hits / trials


def order_statistics_brute(pmf, n):
    """Pr[X(i) = s] by enumerating all |support|^n weighted tuples."""
    pmf = np.asarray(pmf, dtype=float)
    out = np.zeros((n, len(pmf)))
    for tup in itertools.product(range(len(pmf)), repeat=n):
        p = float(np.prod(pmf[list(tup)]))
        if p == 0.0:
            continue
        for i, s in enumerate(sorted(tup)):
            out[i, s] += p
    return out


def bits_of(s, m):
    """Bits 1..m of s, bit 1 most significant."""
    return [(s >> (m - j)) & 1 for j in range(1, m + 1)]


def leakage_brute(true_pmf, aux_pmf, n, m, table=None):
    """Bit-recovery probabilities by enumerating every dataset.

    Without ``table`` the adversary sees the sorted plaintexts. With an
    encoding table P[s, v] it sees only the order of the encodings: the
    enumeration runs over datasets, encoding outcomes and the uniformly
    random order among equal encodings, and tracks the plaintext that lands
    at each rank. The guess for (rank, bit) is the bit value with more than
    half the mass under the auxiliary prior (ties give 0).
    """
    def rank_value_mass(pmf):
        N = len(pmf)
        mass = np.zeros((n, N))
        for xs in itertools.product(range(N), repeat=n):
            px = float(np.prod([pmf[x] for x in xs]))
            if px == 0.0:
                continue
            if table is None:
                for i, s in enumerate(sorted(xs)):
                    mass[i, s] += px
                continue
            k = table.shape[1]
            for os in itertools.product(range(k), repeat=n):
                po = float(np.prod([table[x, o] for x, o in zip(xs, os)]))
                if po == 0.0:
                    continue
                perms = [p for p in itertools.permutations(range(n))
                         if all(os[p[a]] <= os[p[a + 1]] for a in range(n - 1))]
                for p in perms:
                    for i, rec in enumerate(p):
                        mass[i, xs[rec]] += px * po / len(perms)
        return mass

    true_mass = rank_value_mass(true_pmf)
    aux_mass = rank_value_mass(aux_pmf)
    N = len(true_pmf)
    L = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            aux1 = sum(aux_mass[i, s] for s in range(N) if bits_of(s, m)[j] == 1)
            guess = 1 if aux1 > 0.5 else 0
            L[i, j] = sum(true_mass[i, s] for s in range(N) if bits_of(s, m)[j] == guess)
    return L
