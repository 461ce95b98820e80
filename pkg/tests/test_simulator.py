import json
import math

import numpy as np
import pytest

from noisy_csit.channel import ChannelSpec, ClosedFormOutage
from noisy_csit.exceptions import DomainError
from noisy_csit.mapping import BitMapping, quasi_grey_mapping, transition_matrix
from noisy_csit.objective import (
    PowerCodebook,
    QuantizerDesign,
    avg_power_general,
    avg_power_simplified,
    index_probabilities,
    outage_general,
    outage_simplified,
)
from noisy_csit.simulator import SimReport, _quantize_many, empirical_transition, quantize, simulate

SISO = ChannelSpec(1, 1, 4.0)
F = ClosedFormOutage(SISO)


def within(hat, exact, se, k=3.0):
    return abs(hat - exact) <= k * se


def test_quantize_cells():
    d = QuantizerDesign((10.0, 100.0), (10.0, 100.0))
    assert quantize(10.0, d) == 0
    assert quantize(50.0, d) == 1
    assert quantize(100.0, d) == 1
    assert quantize(500.0, d) == 0
    assert quantize(1e-9, d) == 0
    with pytest.raises(DomainError):
        quantize(0.0, d)


def test_single_level_noiseless():
    spec = ChannelSpec(1, 1, math.log(2))
    rep = simulate(PowerCodebook((1.0,)), BitMapping((0,)), 0.0, spec, 10**6, 1)
    assert within(rep.p_out_hat, 1 - math.exp(-1), rep.p_out_stderr)
    assert rep.p_avg_hat == 1.0


def test_two_level_against_simplified_formulas():
    m = BitMapping((0, 1))
    cb = PowerCodebook((100.0, 2000.0))
    tm = transition_matrix(m, 0.1)
    rep = simulate(cb, m, 0.1, SISO, 10**6, 2)
    assert within(rep.p_out_hat, outage_simplified(cb, tm, F), rep.p_out_stderr)
    assert within(rep.p_avg_hat, avg_power_simplified(cb, tm, F), rep.p_avg_stderr)


def test_general_design_against_formulas():
    m = BitMapping((0, 1))
    d = QuantizerDesign((100.0, 2000.0), (150.0, 2000.0))
    tm = transition_matrix(m, 0.1)
    rep = simulate(d, m, 0.1, SISO, 10**6, 3)
    assert within(rep.p_out_hat, outage_general(d, tm, F), rep.p_out_stderr)
    assert within(rep.p_avg_hat, avg_power_general(d, tm, F), rep.p_avg_stderr)


def test_random_tuples_against_general_formulas():
    rng = np.random.default_rng(20)
    specs = [ChannelSpec(1, 1, 4.0), ChannelSpec(2, 1, 6.0), ChannelSpec(1, 2, 3.0), ChannelSpec(3, 1, 2.0)]
    for case in range(20):
        spec = specs[case % len(specs)]
        K = int(rng.integers(1, 6))
        chain = np.sort(np.exp(rng.uniform(np.log(5.0), np.log(5e4), 2 * K)))
        d = QuantizerDesign(tuple(chain[0::2]), tuple(chain[1::2]))
        rho = float(rng.uniform(0, 0.5))
        m = quasi_grey_mapping(K, 0.1) if case % 2 else BitMapping(tuple(rng.permutation(1 << (K - 1).bit_length())[:K]))
        tm = transition_matrix(m, rho)
        Fs = ClosedFormOutage(spec)
        rep = simulate(d, m, rho, spec, 10**6, 100 + case)
        assert within(rep.p_out_hat, outage_general(d, tm, Fs), rep.p_out_stderr), case
        assert within(rep.p_avg_hat, avg_power_general(d, tm, Fs), rep.p_avg_stderr), case


def test_histograms_and_transition_consistency():
    m = BitMapping((0, 3, 2, 1))
    cb = PowerCodebook((50.0, 200.0, 800.0, 3200.0))
    n = 400_000
    rep = simulate(cb, m, 0.2, SISO, n, 5)
    assert sum(rep.index_histogram_tx) == n and sum(rep.index_histogram_rx) == n
    tx = np.array(rep.index_histogram_tx) / n
    # the sent-index distribution matches the cell masses
    tm = transition_matrix(m, 0.2)
    want_rx = index_probabilities(cb.as_design(), tm, F)
    mass = index_probabilities(cb.as_design(), transition_matrix(m, 0.0), F)
    se = np.sqrt(mass * (1 - mass) / n)
    assert np.all(np.abs(tx - mass) <= 3 * se)
    rx_pred = tx @ tm.p
    rx = np.array(rep.index_histogram_rx) / n
    se_rx = np.sqrt(want_rx * (1 - want_rx) / n)
    assert np.all(np.abs(rx - rx_pred) <= 3 * se_rx)


def test_boundary_tie_is_a_success():
    # a channel needing exactly P_j is served when feedback is clean
    d = QuantizerDesign((2.0,), (2.0,))
    spec = ChannelSpec(1, 1, math.log(2))
    j = _quantize_many(np.array([2.0]), d)
    assert j[0] == 0 and d.levels[j[0]] >= 2.0
    rep = simulate(d, BitMapping((0,)), 0.0, spec, 1000, 0)
    assert 0 <= rep.p_out_hat <= 1


def test_deterministic_and_worker_independent():
    m = BitMapping((0, 3, 2, 1))
    cb = PowerCodebook((50.0, 200.0, 800.0, 3200.0))
    a = simulate(cb, m, 0.1, SISO, 150_000, 9)
    b = simulate(cb, m, 0.1, SISO, 150_000, 9)
    c = simulate(cb, m, 0.1, SISO, 150_000, 9, workers=3)
    assert a == b == c
    assert simulate(cb, m, 0.1, SISO, 150_000, 10) != a


def test_report_json_round_trip():
    rep = simulate(PowerCodebook((10.0, 90.0)), BitMapping((0, 1)), 0.1, SISO, 1000, 4)
    doc = json.loads(rep.to_json())
    assert SimReport.from_dict(doc) == rep


def test_input_checks():
    with pytest.raises(DomainError):
        simulate(PowerCodebook((1.0, 2.0)), BitMapping((0,)), 0.1, SISO, 10, 0)
    with pytest.raises(DomainError):
        simulate(PowerCodebook((1.0,)), BitMapping((0,)), 0.1, SISO, 0, 0)


def test_empirical_transition():
    m = BitMapping((0, 3, 2, 1))
    n = 10**6
    E = empirical_transition(m, 0.1, n, 1)
    P = transition_matrix(m, 0.1).p
    se = np.sqrt(P * (1 - P) / n)
    assert np.all(np.abs(E - P) <= 3 * se)
    assert np.all(E.sum(axis=1) == 1.0)
    np.testing.assert_array_equal(empirical_transition(BitMapping((0, 2, 1)), 0.0, 100, 2), np.eye(3))


def test_empirical_transition_with_demapping():
    m = BitMapping((0, 2, 1))
    E = empirical_transition(m, 0.2, 200_000, 3)
    P = transition_matrix(m, 0.2).p
    se = np.sqrt(P * (1 - P) / 200_000)
    assert np.all(np.abs(E - P) <= 3 * se + 1e-15)
