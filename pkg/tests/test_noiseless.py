import time
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from pbsi_aoi.core import EnergyModel, ParameterError, SensorParams
from pbsi_aoi.ebsi import solve_ebsi_policy
from pbsi_aoi.mdp import bellman_residual, evaluate_policy
from pbsi_aoi.noiseless import (
    NoiselessParams,
    battery_growth_distribution,
    build_noiseless_mdp,
    enumerate_states,
    is_feasible,
    solve_no_policy,
    state_count_formula,
)


def brute_count(B, D, F):
    """Count feasible (r, b_hat, delta, d) by scanning the full box."""
    n = 0
    for _ in (0, 1):
        for b in range(B):
            for delta in range(1, D + 1):
                for d in range(0, F + 1):
                    n += is_feasible(b, delta, d, D)
    return n


def test_reference_counts():
    assert state_count_formula(15, 48, 48) == 3698
    assert len(enumerate_states(15, 48, 48)) == 3698
    assert state_count_formula(1, 2, 1) == 6 == brute_count(1, 2, 1)


@settings(max_examples=60)
@given(B=st.integers(1, 20), D=st.integers(2, 60), F=st.integers(1, 60))
def test_count_formula_matches_enumeration(B, D, F):
    assert len(enumerate_states(B, D, F)) == state_count_formula(B, D, F) == brute_count(B, D, F)


def test_enumeration_is_lexicographic():
    states = enumerate_states(3, 6, 4)
    assert states == sorted(states)


@given(lam=st.floats(0.01, 0.99), b=st.integers(0, 14), age=st.integers(0, 30))
@settings(max_examples=40)
def test_growth_is_clipped_binomial(lam, b, age):
    dist = battery_growth_distribution(b, age, EnergyModel.bernoulli(lam), 15)
    k = np.arange(16)
    expect = np.zeros(16)
    pmf = stats.binom.pmf(np.arange(age + 1), age, lam)
    for n, p in enumerate(pmf):
        expect[min(b + n, 15)] += p
    np.testing.assert_allclose(dist, expect, atol=1e-12)
    assert dist @ k <= b + age * lam + 1e-9


def test_requires_noiseless_channel_and_warns_on_short_ages():
    with pytest.raises(ParameterError):
        NoiselessParams(SensorParams(channel_success=0.7))
    with pytest.warns(RuntimeWarning):
        NoiselessParams(SensorParams(energy=EnergyModel.bernoulli(0.05)))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        NoiselessParams.from_sensor(SensorParams(channel_success=0.4))


def test_free_energy_toy_has_unit_gain():
    sp = SensorParams(battery_capacity=1, max_aocsi=2, request_prob=1.0, energy=EnergyModel.bernoulli(1.0))
    with pytest.warns(RuntimeWarning):
        params = NoiselessParams(sp, 1)
    tab = solve_no_policy(params)
    assert len(tab) == state_count_formula(1, 2, 1) == 6
    assert tab.gain == pytest.approx(1.0, abs=1e-6)


# gains from the RVI solve; cross-checked below against exact policy evaluation
NO_GAINS = {0.1: 3.67366, 0.12: 3.07585, 0.24: 1.60079, 0.3: 1.31363}


@pytest.mark.parametrize("lam", sorted(NO_GAINS))
def test_no_policy_gain_and_residual(lam):
    params = NoiselessParams.from_sensor(SensorParams(energy=EnergyModel.bernoulli(lam)))
    t0 = time.perf_counter()
    tab = solve_no_policy(params)
    assert time.perf_counter() - t0 < 10.0
    assert tab.gain == pytest.approx(NO_GAINS[lam], abs=1e-4)
    mdp = build_noiseless_mdp(params)
    g, _ = evaluate_policy(mdp, tab.actions)
    assert g == pytest.approx(tab.gain, abs=1e-5)
    assert bellman_residual(mdp, tab.gain, tab.bias) < 10 * 1e-6


def test_no_gain_not_below_exact_battery_gain():
    # more information can only help
    for lam in (0.12, 0.24):
        sp = SensorParams(energy=EnergyModel.bernoulli(lam))
        assert solve_ebsi_policy(sp).gain <= solve_no_policy(NoiselessParams.from_sensor(sp)).gain + 1e-6


def test_no_policy_never_updates_without_request():
    tab = solve_no_policy(NoiselessParams.from_sensor(SensorParams()))
    act = tab.actions[tab.states[:, 0] == 0]
    assert not act.any()
