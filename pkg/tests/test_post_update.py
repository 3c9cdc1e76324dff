import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pbsi_aoi.core import EnergyModel, ParameterError, SensorParams
from pbsi_aoi.post_update import (
    allowable_levels,
    block_cost,
    block_energy_distribution,
    default_block_length,
    h_tilde_at,
    solve_post_update_values,
)

REFERENCE_GRID = [
    SensorParams(request_prob=0.7, channel_success=xi, energy=EnergyModel.bernoulli(lam))
    for xi in (1.0, 0.7, 0.4)
    for lam in (0.1, 0.12, 0.14, 0.16, 0.18, 0.2, 0.22, 0.24, 0.26, 0.28, 0.3)
]


@given(lam=st.floats(0.05, 0.95), n=st.integers(20, 400))
def test_three_point_moments(lam, n):
    sigma = math.sqrt(lam * (1 - lam))
    try:
        dist = block_energy_distribution(lam, sigma, n)
    except ParameterError:
        return
    assert sum(dist.probs) == pytest.approx(1.0, abs=1e-12)
    lo, mid, hi = dist.points
    assert lo < mid < hi and mid == pytest.approx(n * lam)
    if lo > 1.0:  # unclipped lower point -> exact moment match
        assert dist.mean == pytest.approx(n * lam, rel=1e-12)
        assert dist.var == pytest.approx(n * sigma**2, rel=1e-9)


def test_degenerate_and_rejected_distributions():
    d = block_energy_distribution(1.0, 0.0, 10)
    assert d.points == (10.0,) and d.probs == (1.0,)
    with pytest.raises(ParameterError):
        block_energy_distribution(0.001, 0.03, 10)  # mean below one unit


def test_allowable_levels():
    assert list(allowable_levels(3, 5.0, 4, 0.5, 15)) == list(range(6, 9))
    assert list(allowable_levels(14, 30.0, 20, 0.7, 15)) == [14]
    assert list(allowable_levels(0, 0.5, 10, 0.7, 15)) == [0]


def test_block_cost_branches():
    # no usable energy: every request pays the cap
    assert block_cost(0, 0.0, 0, 10, 0.7, 1.0, 48) == pytest.approx(48 * 10 * 0.7)
    # ample energy, short gaps
    n, eta, xi, u = 100, 0.7, 1.0, 20
    expect = n * eta - n / 2 + n * n * eta / (2 * xi * u)
    assert block_cost(0, u, 0, n, eta, xi, 48) == pytest.approx(expect)
    # gaps beyond the cap use the saturated form
    su = 1.0
    D = 48
    sat = D * n * eta - (D - 1) * su - (D - 1) * (D - 2) * su * (n * eta - su) / (2 * (n - su))
    assert block_cost(0, 1.0, 0, n, eta, 1.0, D) == pytest.approx(sat)
    with pytest.raises(ParameterError):
        block_cost(3, 5.0, 12, 4, 0.5, 1.0, 48, B=15)


@given(u=st.floats(0.5, 60.0))
def test_block_cost_nonincreasing_in_energy(u):
    c1 = block_cost(0, u, 0, 125, 0.7, 0.7, 48)
    c2 = block_cost(0, u + 0.5, 0, 125, 0.7, 0.7, 48)
    assert c2 <= c1 + 1e-9


@pytest.mark.parametrize("params", REFERENCE_GRID, ids=lambda p: f"xi{p.channel_success}-lam{p.energy.param}")
def test_solver_complexity_and_convergence(params):
    tab = solve_post_update_values(params)
    B = params.battery_capacity
    assert tab.num_states == 3 * B
    assert tab.ops_per_iteration <= 9 * B * B
    assert tab.iterations < 100_000
    assert tab.block_length == default_block_length(params)
    assert np.all(np.diff(tab.values) < 0)  # more stored energy is worth more


def test_gain_estimates():
    g1 = solve_post_update_values(SensorParams(channel_success=1.0)).gain_estimate
    g7 = solve_post_update_values(SensorParams(channel_success=0.7)).gain_estimate
    assert g1 == pytest.approx(3.16822, abs=1e-4)
    assert g7 == pytest.approx(4.44032, abs=1e-4)


def test_deterministic_arrivals():
    sp = SensorParams(request_prob=0.5, energy=EnergyModel.table({1: 1.0}))
    tab = solve_post_update_values(sp)
    assert tab.gain_estimate == pytest.approx(0.5, abs=1e-6)


def test_interpolation_clamps():
    tab = solve_post_update_values(SensorParams())
    v = tab.values
    assert h_tilde_at(tab, -3.0) == v[0]
    assert h_tilde_at(tab, 99.0) == v[-1]
    assert h_tilde_at(tab, 2.25) == pytest.approx(0.75 * v[2] + 0.25 * v[3])
