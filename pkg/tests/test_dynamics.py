import numpy as np
import pytest
from scipy.integrate import solve_ivp

from freqmpc.dynamics import (
    LinearModel,
    Plant,
    SystemState,
    full_frequencies,
    predict_linear,
    step_nonlinear,
)
from freqmpc.steady_state import equilibrium


def _reduced_rhs(case, u, p):
    """Swing equations written directly from bus angles (independent of Plant)."""
    g = case.inertial
    a = ~g

    def rhs(_t, y):
        theta, wg = y[:case.n], y[case.n:]
        flows = case.DtYb @ np.sin(case.D @ theta)
        omega = np.empty(case.n)
        omega[g] = wg
        omega[a] = (p[a] + u[a] - flows[a]) / case.E[a]
        dwg = (p[g] + u[g] - case.E[g] * wg - flows[g]) / case.M[g]
        return np.concatenate([omega, dwg])

    return rhs


def test_equilibrium_is_fixed_point(ieee39):
    eq = equilibrium(ieee39)
    pl = Plant(ieee39)
    wg = np.full(int(ieee39.inertial.sum()), eq.sync_freq)
    lam, w = pl.advance(eq.angle_diffs, wg, np.zeros(ieee39.n), ieee39.p0, 1e-3, 1000)
    assert np.max(np.abs(lam - eq.angle_diffs)) < 1e-9
    assert np.max(np.abs(w - eq.sync_freq)) < 1e-9


def test_rk4_matches_reference_integrator(ieee9, rng):
    eq = equilibrium(ieee9)
    u = np.zeros(ieee9.n)
    u[ieee9.u_idx] = rng.normal(scale=0.2, size=len(ieee9.u_idx))
    p = ieee9.p0 * 1.2
    theta0 = np.linalg.lstsq(ieee9.D, eq.angle_diffs, rcond=None)[0]
    wg0 = eq.sync_freq + rng.normal(scale=0.1, size=int(ieee9.inertial.sum()))
    tf = 0.5
    ref = solve_ivp(_reduced_rhs(ieee9, u, p), (0, tf), np.concatenate([theta0, wg0]),
                    method="DOP853", rtol=1e-12, atol=1e-12)
    lam_ref = ieee9.D @ ref.y[:ieee9.n, -1]
    wg_ref = ref.y[ieee9.n:, -1]
    errs = []
    for steps in (50, 100):
        lam, wg = Plant(ieee9).advance(ieee9.D @ theta0, wg0, u, p, tf / steps, steps)
        errs.append(max(np.max(np.abs(lam - lam_ref)), np.max(np.abs(wg - wg_ref))))
    assert errs[1] < 1e-8
    # fourth-order convergence
    assert errs[0] / errs[1] > 12


def test_algebraic_rows_hold_after_step(ieee9, rng):
    eq = equilibrium(ieee9)
    omega = np.full(ieee9.n, eq.sync_freq)
    st = SystemState.make(ieee9, eq.angle_diffs, omega)
    u = np.zeros(ieee9.n)
    p = ieee9.p0 + rng.normal(scale=0.1, size=ieee9.n)
    new = step_nonlinear(ieee9, st, u, p, 1e-3)
    a = ~ieee9.inertial
    res = ieee9.E[a] * new.omega[a] - (p[a] + u[a] - ieee9.DtYb[a] @ np.sin(new.lam))
    assert np.max(np.abs(res)) < 1e-12
    assert np.allclose(ieee9.range_projector @ new.lam, new.lam, atol=1e-10)


def test_state_must_lie_in_range_of_incidence(ieee9):
    lam = np.zeros(ieee9.m)
    lam[1] = 0.1      # line 4-5 lies on a cycle, so this difference alone is not realizable
    with pytest.raises(ValueError, match="range"):
        SystemState.make(ieee9, lam, np.zeros(ieee9.n))
    with pytest.raises(ValueError):
        SystemState.make(ieee9, np.zeros(3), np.zeros(ieee9.n))
    with pytest.raises(ValueError):
        step_nonlinear(ieee9, SystemState.make(ieee9, np.zeros(ieee9.m), np.zeros(ieee9.n)),
                       np.zeros(ieee9.n), ieee9.p0, 0.0)


def _euler_oracle(case, lam0, omega0, U, P, T):
    """Forward Euler of the linearized swing model, written out row by row."""
    N = U.shape[1]
    g = case.inertial
    lam = np.sin(lam0)
    wg = omega0[g].copy()
    Lam = [lam]
    Om = []
    for k in range(N + 1):
        w = P[:, min(k, N - 1)] + U[:, min(k, N - 1)]
        om = np.empty(case.n)
        om[g] = wg
        om[~g] = (w[~g] - case.DtYb[~g] @ lam) / case.E[~g]
        Om.append(om)
        if k == N:
            break
        lam = lam + T * case.D @ om
        wg = wg + T / case.M[g] * (w[g] - case.E[g] * wg - case.DtYb[g] @ Lam[-1])
        Lam.append(lam)
    return np.array(Lam).T, np.array(Om).T


@pytest.mark.parametrize("name", ["ieee9", "two_gen"])
def test_linear_model_matches_euler_oracle(request, name, rng):
    case = request.getfixturevalue(name)
    N = 12
    T = case.config.period
    eq = equilibrium(case)
    lam0 = eq.angle_diffs
    omega0 = full_frequencies(case, lam0, eq.sync_freq + rng.normal(scale=0.05, size=int(case.inertial.sum())),
                              np.zeros(case.n), case.p0)
    U = np.zeros((case.n, N))
    U[case.u_idx] = rng.normal(scale=0.3, size=(len(case.u_idx), N))
    P = case.p0[:, None] * (1 + 0.1 * rng.normal(size=(case.n, N)))
    Lam, Om = predict_linear(case, lam0, omega0, U, P)
    Lo, Oo = _euler_oracle(case, lam0, omega0, U, P, T)
    assert np.max(np.abs(Lam - Lo)) < 1e-12
    assert np.max(np.abs(Om - Oo)) < 1e-12


def test_impulse_responses_superpose(ieee9, rng):
    model = LinearModel(ieee9)
    N = 10
    cols = ieee9.u_idx
    R = model.impulse_responses(cols, N)
    x0 = rng.normal(size=model.nx)
    W = rng.normal(size=(ieee9.n, N))
    _, base = model.rollout(x0, W)
    j, k0 = 1, 3
    W2 = W.copy()
    W2[cols[j], k0] += 1.0
    _, bumped = model.rollout(x0, W2)
    diff = bumped - base
    for k in range(N):
        expect = R[k - k0, :, j] if k >= k0 else 0.0
        assert np.allclose(diff[:, k], expect, atol=1e-12)
