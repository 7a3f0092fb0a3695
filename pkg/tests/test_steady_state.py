import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freqmpc.netcase import load_case
from freqmpc.steady_state import (
    InconsistentInjectionError,
    energy,
    equilibrium,
    phi_contains,
    potential_term,
    r_bar,
    sync_condition,
    sync_frequency,
)


def test_two_bus_closed_form(two_bus):
    eq = equilibrium(two_bus)
    assert eq.sync_freq == 0.0
    # b sin(lam) = 0.5 with b = 1
    assert eq.angle_diffs[0] == pytest.approx(math.pi / 6, abs=1e-12)
    s = math.sin(math.pi / 6)
    up = math.cos(math.pi / 6) - 0.0 - (math.pi / 2) * s + (math.pi / 6) * s
    assert eq.r_bar == pytest.approx(up, abs=1e-12)
    assert eq.condition_value == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("name", ["ieee9", "ieee39", "two_gen"])
def test_equilibrium_balances_flows(data_dir, name):
    case = load_case(data_dir / f"{name}.case")
    eq = equilibrium(case)
    assert eq.sync_freq == pytest.approx(case.p0.sum() / case.E.sum())
    assert np.max(np.abs(case.DtYb @ np.sin(eq.angle_diffs) - eq.tilde_p)) < 1e-9
    assert np.all(np.abs(eq.angle_diffs) < math.pi / 2)
    assert eq.condition_value < 1.0
    assert eq.r_bar > 0
    # angle differences come from bus angles
    assert np.allclose(case.range_projector @ eq.angle_diffs, eq.angle_diffs, atol=1e-10)


def test_sync_frequency_centres_injection(ieee9):
    p = ieee9.p0 + 0.3
    w, pt = sync_frequency(ieee9, p)
    assert abs(pt.sum()) < 1e-12
    assert w == pytest.approx(p.sum() / ieee9.E.sum())


def test_inconsistent_injection(ieee9):
    with pytest.raises(InconsistentInjectionError):
        sync_condition(ieee9, np.ones(ieee9.n))


def test_energy_zero_at_equilibrium(ieee39):
    eq = equilibrium(ieee39)
    wg = np.full(int(ieee39.inertial.sum()), eq.sync_freq)
    assert energy(ieee39, eq, eq.angle_diffs, wg) == pytest.approx(0.0, abs=1e-12)
    assert phi_contains(ieee39, eq, eq.r_bar, eq.angle_diffs, wg)
    lam = eq.angle_diffs.copy()
    lam[0] = math.pi / 2 + 0.01
    assert not phi_contains(ieee39, eq, eq.r_bar, lam, wg)


def test_r_bar_is_boundary_minimum(two_gen, rng):
    eq = equilibrium(two_gen)
    rb = r_bar(two_gen, eq.angle_diffs)
    # random points on the faces of the closed box never go below r_bar
    for _ in range(2000):
        lam = rng.uniform(-math.pi / 2, math.pi / 2, two_gen.m)
        k = rng.integers(two_gen.m)
        lam[k] = math.copysign(math.pi / 2, rng.normal())
        assert np.sum(two_gen.b * potential_term(lam, eq.angle_diffs)) >= rb - 1e-12


@settings(max_examples=200, deadline=None)
@given(st.floats(-1.4, 1.4), st.floats(-math.pi / 2, math.pi / 2))
def test_potential_nonnegative(lam_inf, lam):
    assert potential_term(lam, lam_inf) >= -1e-12
