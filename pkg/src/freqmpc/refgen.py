"""Reference trajectory from the discretized safety controller.

The reference controller drives each frequency-constrained bus back towards
its threshold band with a gain that blows up as the frequency approaches the
safe bound.  Rolling it through the linear prediction model gives a feasible
point of the convexified MPC problem, and its frequency trajectory fixes which
branch of the convexified stability constraint applies at each step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import DiscreteTrajectory, LinearModel
from .netcase import NetworkCase

__all__ = [
    "InfeasibleReferenceError",
    "ReferenceTrajectory",
    "sat",
    "kappa_vector",
    "reference_input",
    "generate_reference",
    "baseline_input",
]

# Slack allowed when checking that the rollout stays inside hard bounds.
FEAS_TOL = 1e-12


class InfeasibleReferenceError(RuntimeError):
    pass


def sat(a: float, xi: int, a_min: float, a_max: float) -> float:
    """Clip ``a`` to ``[a_min, a_max]`` when ``xi == 0``; identity when ``xi == 1``."""
    if xi == 0:
        if a <= a_min:
            return a_min
        if a >= a_max:
            return a_max
    return a


def reference_input(bc, omega_hat: float, v: float) -> float:
    """Saturated reference input of one frequency-constrained bus.

    Parameters
    ----------
    bc : BusControl
        Parameters of the bus.
    omega_hat : float
        Reference frequency at the current step.
    v : float
        Net nodal power excluding the input: flows plus forecast minus damping.
    """
    if omega_hat > bc.thr_hi:
        assert omega_hat != bc.thr_hi
        raw = min(0.0, bc.gamma_hi * (bc.w_hi - omega_hat) / (omega_hat - bc.thr_hi) - v)
    elif omega_hat < bc.thr_lo:
        raw = max(0.0, bc.gamma_lo * (bc.w_lo - omega_hat) / (bc.thr_lo - omega_hat) - v)
    else:
        raw = 0.0
    return sat(raw, bc.xi, bc.u_min, bc.u_max)


def _algebraic_reference(bc, vartheta: float, E: float) -> tuple[float, float]:
    """Coupled (frequency, input) of a zero-inertia constrained bus.

    Picks the unique solution of ``0 = vartheta - E w + u`` consistent with
    the controller, then re-solves for ``w`` if saturation clipped ``u``.
    """
    w0 = vartheta / E
    if w0 > bc.w_hi:
        w, raw = bc.w_hi, E * bc.w_hi - vartheta
    elif w0 < bc.w_lo:
        w, raw = bc.w_lo, E * bc.w_lo - vartheta
    else:
        return w0, 0.0
    u = sat(raw, bc.xi, bc.u_min, bc.u_max)
    if u != raw:
        w = (vartheta + u) / E
    return w, u


def kappa_vector(case: NetworkCase, omega0) -> np.ndarray:
    """Attraction indicator for every frequency-constrained bus (ascending index)."""
    omega0 = np.asarray(omega0, dtype=float)
    out = np.empty(len(case.w_idx), dtype=int)
    for j, i in enumerate(case.w_idx):
        bc = case.config.params[i + 1]
        out[j] = 0 if (bc.w_lo <= omega0[i] <= bc.w_hi and bc.xi == 1) else 1
    return out


@dataclass
class ReferenceTrajectory:
    """Reference rollout.  ``Omega[:, N]`` of zero-inertia buses uses a virtual
    step-N input so that the last column is physically meaningful."""

    Lam: np.ndarray
    Omega: np.ndarray
    U: np.ndarray
    P: np.ndarray
    kappa: np.ndarray
    T: float
    feasible: bool = True
    message: str = ""
    max_step_rate: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.U.shape[1]

    def require_feasible(self) -> "ReferenceTrajectory":
        if not self.feasible:
            raise InfeasibleReferenceError(self.message)
        return self

    def qualification(self, case: NetworkCase) -> DiscreteTrajectory:
        """Reference plus the minimal slacks that satisfy the soft constraints."""
        N = self.N
        Gam = np.zeros((len(case.w_idx), N))
        for j, i in enumerate(case.w_idx):
            bc = case.config.params[i + 1]
            w = self.Omega[i, 1:]
            Gam[j] = np.maximum(0.0, np.maximum(w - bc.w_hi + bc.delta, bc.w_lo + bc.delta - w))
        Bet = np.zeros((len(case.u_idx), N))
        for j, i in enumerate(case.u_idx):
            bc = case.config.params[i + 1]
            if bc.xi == 1:
                u = self.U[i]
                Bet[j] = np.maximum(0.0, np.maximum(u - bc.u_max, bc.u_min - u))
        return DiscreteTrajectory(self.Lam.copy(), self.Omega.copy(), self.U.copy(), Bet, Gam, self.P.copy())


def _step_inputs(case: NetworkCase, x, p_col, omega_g_idx, w_set, alg_set):
    """Frequencies and reference inputs for one step of the rollout."""
    m = case.m
    E = case.E
    vartheta = -case.DtYb @ x[:m] + p_col
    omega = vartheta / E
    omega[omega_g_idx] = x[m:]
    u = np.zeros(case.n)
    for i in w_set:
        bc = case.config.params[i + 1]
        if i in alg_set:
            omega[i], u[i] = _algebraic_reference(bc, vartheta[i], E[i])
        else:
            u[i] = reference_input(bc, omega[i], vartheta[i] - E[i] * omega[i])
    return omega, u


def _quiet_band(case: NetworkCase) -> tuple[np.ndarray, np.ndarray]:
    """Per constrained bus, the frequency interval on which the reference input is zero."""
    lo = np.empty(len(case.w_idx))
    hi = np.empty(len(case.w_idx))
    for j, i in enumerate(case.w_idx):
        bc = case.config.params[int(i) + 1]
        if case.inertial[i]:
            lo[j], hi[j] = bc.thr_lo, bc.thr_hi
        else:
            lo[j], hi[j] = bc.w_lo, bc.w_hi
    return lo, hi


def generate_reference(case: NetworkCase, lam0, omega0, P_fcst, *,
                       model: LinearModel | None = None) -> ReferenceTrajectory:
    """Roll the reference controller through the linear model.

    Parameters
    ----------
    lam0, omega0 : array_like
        Measured angle differences and frequencies.
    P_fcst : array_like
        Forecast injections, ``n x N``.

    Returns
    -------
    ReferenceTrajectory
        ``feasible`` is False (with a message naming the first violation)
        when a hard frequency bound of an initially safe bus is broken.
        ``extra["free"]`` holds the zero-input frequency rollout.
    """
    model = model or LinearModel(case)
    P = np.asarray(P_fcst, dtype=float)
    N = P.shape[1]
    n, m = case.n, case.m
    gi = np.flatnonzero(case.inertial)
    w_set = [int(i) for i in case.w_idx]
    alg_set = set(int(i) for i in np.flatnonzero(~case.inertial))
    x0 = model.initial_state(lam0, omega0)
    X, free = model.rollout(x0, P)
    Lam = X[:m].copy()
    Om = free.copy()
    U = np.zeros((n, N))
    # the reference input vanishes until a constrained bus leaves its quiet band
    qlo, qhi = _quiet_band(case)
    widx = np.asarray(w_set, dtype=int)
    out = np.any((free[widx] < qlo[:, None]) | (free[widx] > qhi[:, None]), axis=0)
    hits = np.flatnonzero(out)
    if hits.size:
        k0 = int(hits[0])
        Pc = P[:, np.minimum(np.arange(N + 1), N - 1)] if N else np.zeros((n, 1))
        # only constrained buses need the scalar reference law inside the loop
        nw = len(w_set)
        # one product yields both the next state and the constrained-bus flows
        Fz = np.vstack([model.A, np.hstack([case.DtYb[widx], np.zeros((nw, X.shape[0] - m))])])
        Ew = case.E[widx]
        pos = {i: g for g, i in enumerate(gi)}
        alg = [i in alg_set for i in w_set]
        params = [case.config.params[i + 1] for i in w_set]
        BP = model.B @ Pc
        Bw = model.B[:, widx]
        Ww = np.empty((len(w_set), N + 1 - k0))
        x = X[:, k0].copy()
        uw = np.zeros(len(w_set))
        nx = X.shape[0]
        Pw = Pc[widx]
        for k in range(k0, N + 1):
            ax = Fz @ x
            vt = Pw[:, k] - ax[nx:]
            for j, i in enumerate(w_set):
                if alg[j]:
                    Ww[j, k - k0], uw[j] = _algebraic_reference(params[j], vt[j], Ew[j])
                else:
                    w = x[m + pos[i]]
                    Ww[j, k - k0] = w
                    uw[j] = reference_input(params[j], w, vt[j] - Ew[j] * w)
            if k == N:
                break
            U[widx, k] = uw
            x = ax[:nx] + BP[:, k] + Bw @ uw
            X[:, k + 1] = x
        Lam[:, k0:] = X[:m, k0:]
        Xk = X[:, k0:]
        Om_k = (Pc[:, k0:] - case.DtYb @ Xk[:m]) / case.E[:, None]
        Om_k[gi] = Xk[m:]
        Om_k[widx] = Ww
        Om[:, k0:] = Om_k

    kap = kappa_vector(case, omega0)
    ref = ReferenceTrajectory(Lam, Om, U, P, kap, model.T, extra={"free": free})
    if N:
        ref.max_step_rate = float(np.max(np.abs(np.diff(Om, axis=1)))) / model.T
    for j, i in enumerate(w_set):
        if kap[j]:
            continue
        bc = case.config.params[i + 1]
        w = Om[i, 1:]
        bad = np.flatnonzero((w > bc.w_hi + FEAS_TOL) | (w < bc.w_lo - FEAS_TOL))
        if bad.size:
            k = int(bad[0]) + 1
            ref.feasible = False
            ref.message = (f"reference frequency of bus {i + 1} leaves [{bc.w_lo}, {bc.w_hi}] at step {k} "
                           f"(value {w[k - 1]:.6g}); try a smaller period T")
            break
    return ref


def baseline_input(case: NetworkCase, lam, omega, p) -> np.ndarray:
    """Reference controller applied once at the measured state."""
    model_x = np.concatenate([np.sin(np.asarray(lam, dtype=float)),
                              np.asarray(omega, dtype=float)[case.inertial]])
    gi = np.flatnonzero(case.inertial)
    w_set = [int(i) for i in case.w_idx]
    alg_set = set(int(i) for i in np.flatnonzero(~case.inertial))
    _, u = _step_inputs(case, model_x, np.asarray(p, dtype=float), gi, w_set, alg_set)
    return u
