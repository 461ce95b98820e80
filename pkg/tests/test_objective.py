import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from noisy_csit.channel import ChannelSpec, ClosedFormOutage, EmpiricalOutage
from noisy_csit.exceptions import DomainError
from noisy_csit.mapping import BitMapping, quasi_grey_mapping, transition_matrix
from noisy_csit.objective import (
    PowerCodebook,
    QuantizerDesign,
    avg_power_general,
    avg_power_simplified,
    general_gradients,
    index_probabilities,
    outage_general,
    outage_simplified,
    simplified_gradients,
)

SISO = ChannelSpec(1, 1, 4.0)
F = ClosedFormOutage(SISO)

levels_st = st.lists(st.floats(0.1, 1e5), min_size=1, max_size=6).map(sorted)


def brute_outage(design, tm, F):
    """Literal double sum over received/sent index pairs."""
    P, Q, p, K = design.levels, design.boundaries, tm.p, design.K
    Fq = lambda j: 0.0 if j < 0 else F(Q[j])  # noqa: E731
    total = 1 - F(Q[K - 1])
    for i in range(K):
        total += p[i, i] * (F(Q[i]) - F(P[i]))
        for j in range(i + 1, K):
            total += p[j, i] * (Fq(j) - Fq(j - 1))
    return total


def brute_power(design, tm, F):
    P, Q, p, K = design.levels, design.boundaries, tm.p, design.K
    Fq = lambda j: 0.0 if j < 0 else F(Q[j])  # noqa: E731
    return sum(
        ((1 - F(Q[K - 1])) * p[0, i] + sum((Fq(j) - Fq(j - 1)) * p[j, i] for j in range(K))) * P[i]
        for i in range(K)
    )


def test_design_validation():
    with pytest.raises(DomainError):
        QuantizerDesign((10, 5), (20, 30))  # P_1 < Q_0
    with pytest.raises(DomainError):
        QuantizerDesign((10,), (5,))
    with pytest.raises(DomainError):
        PowerCodebook((5.0, 1.0))
    with pytest.raises(DomainError):
        outage_simplified(PowerCodebook((1.0, 2.0)), transition_matrix(BitMapping.identity(4), 0.1), F)


def test_rho_zero_and_single_level():
    tm0 = transition_matrix(BitMapping.identity(3), 0.0)
    cb = PowerCodebook((10.0, 100.0, 1000.0))
    assert outage_simplified(cb, tm0, F) == pytest.approx(1 - F(1000.0), rel=1e-14)
    assert outage_general(cb.as_design(), tm0, F) == pytest.approx(1 - F(1000.0), rel=1e-14)
    tm1 = transition_matrix(BitMapping((0,)), 0.3)
    d = QuantizerDesign((70.0,), (300.0,))
    assert outage_general(d, tm1, F) == pytest.approx(1 - F(70.0), rel=1e-14)
    assert avg_power_general(d, tm1, F) == 70.0
    assert avg_power_simplified(PowerCodebook((70.0,)), tm1, F) == 70.0


def test_uniform_channel_examples():
    tm = transition_matrix(BitMapping((0, 1)), 0.5)
    cb = PowerCodebook((30.0, 500.0))
    assert avg_power_simplified(cb, tm, F) == pytest.approx(265.0, rel=1e-15)
    d = QuantizerDesign((30.0, 500.0), (90.0, 900.0))
    assert avg_power_general(d, tm, F) == pytest.approx(265.0, rel=1e-15)
    want = 1 - F(500.0) + 0.5 * (F(500.0) - F(30.0))
    assert outage_simplified(cb, tm, F) == pytest.approx(want, rel=1e-14)


def test_noiseless_power_hand_expansion():
    tm = transition_matrix(BitMapping((0, 1)), 0.0)
    P0, P1 = 40.0, 400.0
    want = F(P0) * P0 + (F(P1) - F(P0)) * P1 + (1 - F(P1)) * P0
    assert avg_power_simplified(PowerCodebook((P0, P1)), tm, F) == pytest.approx(want, rel=1e-14)


def test_simplified_equals_general_grey_k4():
    tm = transition_matrix(BitMapping((0, 3, 2, 1)), 0.1)
    cb = PowerCodebook((50.0, 200.0, 800.0, 3200.0))
    assert abs(outage_simplified(cb, tm, F) - outage_general(cb.as_design(), tm, F)) <= 1e-14
    assert avg_power_simplified(cb, tm, F) == pytest.approx(avg_power_general(cb.as_design(), tm, F), rel=1e-14)


@given(levels=levels_st, rho=st.floats(0.0, 0.5), data=st.data())
def test_simplified_consistency_random(levels, rho, data):
    K = len(levels)
    m = BitMapping(tuple(data.draw(st.permutations(range(1 << (K - 1).bit_length()))))[:K])
    tm = transition_matrix(m, rho)
    cb = PowerCodebook(tuple(levels))
    assert outage_simplified(cb, tm, F) == pytest.approx(outage_general(cb.as_design(), tm, F), rel=1e-12, abs=1e-14)
    assert avg_power_simplified(cb, tm, F) == pytest.approx(avg_power_general(cb.as_design(), tm, F), rel=1e-14)


@st.composite
def designs(draw):
    chain = sorted(draw(st.lists(st.floats(0.5, 1e4), min_size=2, max_size=8)))
    if len(chain) % 2:
        chain = chain[:-1]
    return QuantizerDesign(tuple(chain[0::2]), tuple(chain[1::2]))


@given(d=designs(), rho=st.floats(0.0, 0.5))
def test_general_matches_literal_double_sum(d, rho):
    tm = transition_matrix(quasi_grey_mapping(d.K, 0.1), rho)
    out = outage_general(d, tm, F)
    assert 0.0 <= out <= 1.0
    assert out == pytest.approx(brute_outage(d, tm, F), rel=1e-10, abs=1e-13)
    assert avg_power_general(d, tm, F) == pytest.approx(brute_power(d, tm, F), rel=1e-12)
    assert index_probabilities(d, tm, F).sum() == pytest.approx(1.0, abs=1e-14)


@given(levels=levels_st, rho=st.floats(0.0, 0.5))
def test_lower_bound_and_range(levels, rho):
    K = len(levels)
    tm = transition_matrix(quasi_grey_mapping(K, 0.1), rho)
    cb = PowerCodebook(tuple(levels))
    out = outage_simplified(cb, tm, F)
    assert 0.0 <= out <= 1.0
    assert out >= (1 - F(levels[-1])) * (1 - 1e-12)


@given(levels=st.lists(st.floats(0.1, 1e5), min_size=2, max_size=4).map(sorted))
def test_monotone_degradation_in_rho(levels):
    K = len(levels)
    cb = PowerCodebook(tuple(levels))
    m = quasi_grey_mapping(K, 0.1)
    outs = [outage_simplified(cb, transition_matrix(m, r), F) for r in np.arange(0, 0.51, 0.05)]
    assert all(b >= a - 1e-15 for a, b in zip(outs, outs[1:]))


@given(p=st.floats(1.0, 1e5), K=st.integers(1, 6), rho=st.floats(0.0, 0.5))
def test_fully_merged_codebook_is_no_csit(p, K, rho):
    tm = transition_matrix(quasi_grey_mapping(K, 0.1), rho)
    cb = PowerCodebook((p,) * K)
    assert outage_simplified(cb, tm, F) == pytest.approx(1 - F(p), rel=1e-12, abs=1e-15)
    assert avg_power_simplified(cb, tm, F) == pytest.approx(p, rel=1e-14)


def test_works_with_empirical_backend():
    F_mc = EmpiricalOutage.from_spec(ChannelSpec(2, 2, 5.0), 50_000, 1)
    tm = transition_matrix(BitMapping((0, 3, 2, 1)), 0.1)
    cb = PowerCodebook((5.0, 20.0, 60.0, 200.0))
    assert outage_simplified(cb, tm, F_mc) == pytest.approx(outage_general(cb.as_design(), tm, F_mc), abs=1e-14)


def _num_grad(fun, x, rel=1e-6):
    g = np.empty(len(x))
    for k in range(len(x)):
        h = rel * x[k]
        a, b = x.copy(), x.copy()
        a[k] += h
        b[k] -= h
        g[k] = (fun(a) - fun(b)) / (2 * h)
    return g


def test_simplified_gradients_match_finite_differences():
    tm = transition_matrix(BitMapping((0, 3, 2, 1)), 0.1)
    x = np.array([50.0, 200.0, 800.0, 3200.0])
    g_out, g_pow = simplified_gradients(x, tm, F, F.density)
    n_out = _num_grad(lambda v: outage_simplified(PowerCodebook(v), tm, F), x)
    n_pow = _num_grad(lambda v: avg_power_simplified(PowerCodebook(v), tm, F), x)
    np.testing.assert_allclose(g_out, n_out, rtol=1e-5, atol=1e-12)
    np.testing.assert_allclose(g_pow, n_pow, rtol=1e-5, atol=1e-9)


def test_general_gradients_match_finite_differences():
    tm = transition_matrix(BitMapping((0, 3, 2, 1)), 0.1)
    d = QuantizerDesign((50.0, 100.0, 300.0, 900.0), (80.0, 200.0, 700.0, 3000.0))
    chain = np.ravel(np.column_stack([d.levels, d.boundaries]))
    mk = lambda c: QuantizerDesign(tuple(c[0::2]), tuple(c[1::2]))  # noqa: E731
    g_out, g_pow = general_gradients(d, tm, F, F.density)
    np.testing.assert_allclose(g_out, _num_grad(lambda c: outage_general(mk(c), tm, F), chain), rtol=1e-5, atol=1e-12)
    np.testing.assert_allclose(g_pow, _num_grad(lambda c: avg_power_general(mk(c), tm, F), chain), rtol=1e-5, atol=1e-9)
