import math
from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dpope.core import DegeneratePriorError, DiscreteDomain, DomainError, Partition, Prior
from dpope.opec import (EncodingModel, build_encoding_model, dldp_ratio, encode, encode_indices,
                        encode_many, encoding_probability, order_agreement_probability,
                        ordinal_targets)

D100 = DiscreteDomain(1, 100)
D4 = DiscreteDomain(1, 4)

# 1 / (1 + e^-2), evaluated with 80-digit decimal arithmetic
P11_SMALL = 0.8807970779778824
# sum_{i >= j} p_{4,i} p_{1,j} for the same model, 80-digit decimal arithmetic
AGREE_4_1 = 0.985790663381389


@pytest.fixture
def small_model():
    return build_encoding_model(Partition(D4, (2, 4)), None, 2.0)


def test_tendencies_three_intervals():
    m = build_encoding_model(Partition(D100, (20, 80, 100)), Prior.uniform(D100), 1.0)
    assert tuple(m.tendencies) == (10.5, 50.5, 90.5)


def test_infinite_epsilon_is_one_hot():
    p = Partition.equi_length(D100, 10)
    m = build_encoding_model(p, None, math.inf)
    for x in range(1, 101):
        row = m.probabilities(x)
        assert row.sum() == 1.0
        assert row[p.interval_index(x)] == 1.0


def test_small_model_probability(small_model):
    assert tuple(small_model.tendencies) == (1.5, 3.5)
    assert small_model.probabilities(1)[0] == pytest.approx(P11_SMALL, abs=1e-15)


@pytest.mark.parametrize("eps", [0.0, -1.0, float("nan")])
def test_rejects_bad_epsilon(eps):
    with pytest.raises(ValueError):
        build_encoding_model(Partition(D4, (2, 4)), None, eps)


def test_degenerate_prior():
    with pytest.raises(DegeneratePriorError):
        build_encoding_model(Partition(D4, (2, 4)), Prior.point_mass(D4, 1), 1.0)


def test_encode_deterministic_cases():
    rng = np.random.default_rng(0)
    m = build_encoding_model(Partition.equi_length(D100, 10), None, math.inf)
    assert {encode(m, 45, rng) for _ in range(20)} == {5}
    one = build_encoding_model(Partition(D100, (100,), (3,)), None, 0.5)
    assert {encode(one, x, rng) for x in (1, 50, 100)} == {3}


def test_encode_out_of_domain(small_model):
    with pytest.raises(DomainError):
        encode(small_model, 5, np.random.default_rng(0))


def test_encode_frequency_matches_table(small_model):
    rng = np.random.default_rng(11)
    idx = encode_indices(small_model, np.ones(10**6, dtype=np.int64), rng)
    assert abs(np.mean(idx == 0) - P11_SMALL) < 0.002


def test_scalar_and_vector_sampling_agree(small_model):
    xs = np.array([1, 2, 3, 4] * 5000)
    a = encode_many(small_model, xs, np.random.default_rng(3))
    for x in (1, 2, 3, 4):
        emp = np.mean(a[xs == x] == 1)
        assert abs(emp - small_model.probabilities(x)[0]) < 0.02


def test_encoding_probability_symmetry_and_range():
    # tendencies 0 and 2 put x = 1 at equal distance from both
    d2 = DiscreteDomain(0, 2)
    m2 = build_encoding_model(Partition(d2, (0, 2)), Prior(d2, [0.5, 0.0, 0.5]), 1.0)
    assert tuple(m2.tendencies) == (0.0, 2.0)
    assert encoding_probability(m2, 1, 0) == pytest.approx(0.5, abs=1e-15)
    assert encoding_probability(m2, 1, 1) == pytest.approx(0.5, abs=1e-15)
    d = DiscreteDomain(1, 5)
    m = build_encoding_model(Partition(d, (2, 5)), None, 1.0)
    with pytest.raises(IndexError):
        encoding_probability(m, 1, 2)
    for x in d.values():
        assert sum(encoding_probability(m, int(x), i) for i in range(m.k)) == pytest.approx(1.0, abs=1e-12)


def test_table_matches_high_precision():
    getcontext().prec = 80
    d = DiscreteDomain(1, 40)
    m = build_encoding_model(Partition.equi_length(d, 6), None, 0.7)
    half = Decimal("0.7") / 2
    tend = [Decimal(repr(float(t))) for t in m.tendencies]
    for x in range(1, 41):
        w = [(-abs(Decimal(x) - t) * half).exp() for t in tend]
        s = sum(w)
        exact = [float(v / s) for v in w]
        assert np.max(np.abs(np.array(exact) - m.probabilities(x))) < 1e-12


def test_agreement_deterministic():
    p = Partition.equi_length(D100, 10)
    m = build_encoding_model(p, None, math.inf)
    assert order_agreement_probability(m, 45, 12) == 1.0
    assert order_agreement_probability(m, 45, 42) == 1.0
    with pytest.raises(ValueError):
        order_agreement_probability(m, 3, 3)


def test_agreement_small_model(small_model):
    assert order_agreement_probability(small_model, 4, 1) == pytest.approx(AGREE_4_1, abs=1e-14)
    rng = np.random.default_rng(4)
    a = encode_indices(small_model, np.full(10**6, 4), rng)
    b = encode_indices(small_model, np.full(10**6, 1), rng)
    assert abs(np.mean(a >= b) - AGREE_4_1) < 0.002


@st.composite
def models(draw):
    size = draw(st.integers(2, 40))
    d = DiscreteDomain(0, size - 1)
    cuts = sorted(draw(st.sets(st.integers(0, size - 2), max_size=size - 1)))
    eps = draw(st.sampled_from([0.1, 0.5, 1.0, 2.0, 5.0]))
    return build_encoding_model(Partition(d, tuple(cuts) + (d.hi,)), None, eps)


@settings(max_examples=60, deadline=None)
@given(models())
def test_rows_normalised_and_dldp(m):
    t = m.table()
    assert np.allclose(t.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(np.diff(m.tendencies) > 0)
    assert dldp_ratio(m) <= 1 + 1e-9


@settings(max_examples=60, deadline=None)
@given(models())
def test_unimodal_in_distance(m):
    for x in m.domain.values():
        dist = np.abs(x - m.tendencies)
        row = m.probabilities(int(x))
        order = np.argsort(dist, kind="stable")
        assert np.all(np.diff(row[order]) <= 1e-15)


@settings(max_examples=60, deadline=None)
@given(models())
def test_argmax_in_ordinal_targets(m):
    for x in m.domain.values():
        assert int(np.argmax(m.probabilities(int(x)))) in ordinal_targets(m.partition, int(x))


def test_partition_size_effect():
    vals = []
    for k in (2, 5, 10):
        m = build_encoding_model(Partition.equi_length(D100, k), None, 0.1)
        vals.append(m.probabilities(50)[m.partition.interval_index(50)])
    assert vals[0] > vals[1] > vals[2]


def test_privacy_independent_of_partition():
    d = DiscreteDomain(1, 30)
    for k in (2, 5, 10, 30):
        part = Partition.identity(d) if k == 30 else Partition.equi_length(d, k)
        assert dldp_ratio(build_encoding_model(part, None, 1.0)) <= 1 + 1e-9


def test_json_round_trip():
    m = build_encoding_model(Partition(D100, (20, 80, 100), (3, 7, 9)), None, 0.4)
    back = EncodingModel.from_json(m.to_json())
    assert back.partition == m.partition
    assert back.epsilon == m.epsilon
    assert np.array_equal(back.table(), m.table())
    inf = build_encoding_model(Partition(D100, (50, 100)), None, math.inf)
    assert '"inf"' in inf.to_json()
    assert EncodingModel.from_json(inf.to_json()).deterministic


def test_lazy_model_matches_eager():
    p = Partition.equi_length(D100, 7)
    eager = build_encoding_model(p, None, 0.3)
    lazy = build_encoding_model(p, None, 0.3, eager=False)
    assert lazy.prob_table is None
    for x in (1, 33, 100):
        assert np.allclose(lazy.probabilities(x), eager.probabilities(x), atol=1e-15)
