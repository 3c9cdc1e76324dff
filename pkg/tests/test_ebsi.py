import numpy as np
import pytest

from pbsi_aoi.core import EnergyModel, SensorParams
from pbsi_aoi.ebsi import build_ebsi_mdp, enumerate_ebsi_states, solve_ebsi_policy, threshold_violations
from pbsi_aoi.mdp import evaluate_policy

# (xi, lambda) -> optimal gain, from RVI and confirmed by exact policy evaluation
EBSI_GAINS = {
    (1.0, 0.12): 3.068,
    (1.0, 0.3): 1.312,
    (0.7, 0.12): 4.458,
    (0.4, 0.12): 8.136,
}


@pytest.mark.parametrize("xi,lam", sorted(EBSI_GAINS))
def test_gains(xi, lam):
    sp = SensorParams(channel_success=xi, energy=EnergyModel.bernoulli(lam))
    tab = solve_ebsi_policy(sp)
    assert tab.gain == pytest.approx(EBSI_GAINS[(xi, lam)], abs=2e-3)
    g, _ = evaluate_policy(build_ebsi_mdp(sp), tab.actions)
    assert g == pytest.approx(tab.gain, abs=1e-5)
    assert threshold_violations(tab) == []


def test_state_space_and_empty_battery():
    sp = SensorParams(channel_success=0.7)
    assert len(enumerate_ebsi_states(15, 48)) == 2 * 16 * 48
    act = solve_ebsi_policy(sp).as_dict()
    # nothing to send from an empty battery, so the solver never prefers it
    assert all(act[(1, 0, d)] == 0 for d in range(1, 49))
    assert all(act[(0, b, d)] == 0 for b in range(16) for d in range(1, 49))


def test_gain_decreases_with_channel_quality():
    gains = [solve_ebsi_policy(SensorParams(channel_success=x)).gain for x in (0.4, 0.7, 1.0)]
    assert gains[0] > gains[1] > gains[2]


def test_full_energy_is_one():
    sp = SensorParams(request_prob=1.0, energy=EnergyModel.bernoulli(1.0))
    assert solve_ebsi_policy(sp).gain == pytest.approx(1.0, abs=1e-6)


def test_poisson_rows_are_stochastic():
    mdp = build_ebsi_mdp(SensorParams(channel_success=0.3, energy=EnergyModel.poisson(0.3)))
    sums = np.asarray(mdp.transitions.sum(axis=1)).ravel()
    np.testing.assert_allclose(sums, 1.0, atol=1e-12)
