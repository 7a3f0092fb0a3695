"""Swing dynamics: nonlinear plant integration and the linear prediction model.

Zero-inertia buses make the swing equations a semi-explicit index-1 DAE.  Their
algebraic rows are solvable in closed form for the frequency, so the plant is
integrated as a reduced ODE in ``(lambda, omega_g)`` with the zero-inertia
frequencies recomputed at every Runge-Kutta stage.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .netcase import NetworkCase

__all__ = [
    "SystemState",
    "DiscreteTrajectory",
    "SimulationError",
    "algebraic_frequencies",
    "full_frequencies",
    "Plant",
    "step_nonlinear",
    "LinearModel",
    "predict_linear",
]


class SimulationError(FloatingPointError):
    pass


@dataclass(frozen=True)
class SystemState:
    """Angle differences per line and frequencies per bus."""

    lam: np.ndarray
    omega: np.ndarray

    @classmethod
    def make(cls, case: NetworkCase, lam, omega, *, check: bool = True) -> "SystemState":
        lam = np.array(lam, dtype=float)
        omega = np.array(omega, dtype=float)
        if lam.shape != (case.m,) or omega.shape != (case.n,):
            raise ValueError(f"state dimensions {lam.shape}, {omega.shape} do not match case "
                             f"(m={case.m}, n={case.n})")
        if check:
            off = lam - case.range_projector @ lam
            if np.linalg.norm(off) > 1e-9 * max(1.0, np.linalg.norm(lam)):
                raise ValueError("angle differences are not in range(D)")
        return cls(lam, omega)

    @classmethod
    def from_angles(cls, case: NetworkCase, theta, omega) -> "SystemState":
        return cls.make(case, case.D @ np.asarray(theta, dtype=float), omega, check=False)


@dataclass
class DiscreteTrajectory:
    """Stacked prediction trajectories; inputs are kept as full n x N arrays."""

    Lam: np.ndarray      # m x (N+1)
    Omega: np.ndarray    # n x (N+1)
    U: np.ndarray        # n x N
    B: np.ndarray        # |I_u| x N
    Gamma: np.ndarray    # |I_w| x N, columns are steps 1..N
    P: np.ndarray        # n x N

    def check(self, case: NetworkCase) -> None:
        outside = np.setdiff1d(np.arange(case.n), case.u_idx)
        if np.any(self.U[outside] != 0):
            raise ValueError("inputs must vanish on uncontrolled buses")
        if np.any(self.B < 0) or np.any(self.Gamma < 0):
            raise ValueError("slack trajectories must be non-negative")


def algebraic_frequencies(case: NetworkCase, lam, u, p) -> np.ndarray:
    """Frequencies of the zero-inertia buses (in index order) from their algebraic rows."""
    alg = ~case.inertial
    flows = case.DtYb[alg] @ np.sin(np.asarray(lam, dtype=float))
    return (-flows + np.asarray(p)[alg] + np.asarray(u)[alg]) / case.E[alg]


def full_frequencies(case: NetworkCase, lam, omega_g, u, p) -> np.ndarray:
    omega = np.empty(case.n)
    omega[case.inertial] = omega_g
    omega[~case.inertial] = algebraic_frequencies(case, lam, u, p)
    return omega


class Plant:
    """Explicit RK4 integrator of the reduced swing ODE for one case.

    With ``y = (lambda, omega_g)`` and held injections the right-hand side is
    affine in ``(sin(lambda), omega_g)``, so each stage is one matrix product.
    """

    def __init__(self, case: NetworkCase):
        self.case = case
        g = case.inertial
        a = ~g
        self.g, self.a = g, a
        m = case.m
        ng = int(g.sum())
        self.m = m
        Dg, Da = case.D[:, g], case.D[:, a]
        Kg, Ka = case.DtYb[g], case.DtYb[a]
        Mg, Ea = case.M[g], case.E[a]
        self.Ka, self.Ea = Ka, Ea
        J = np.zeros((m + ng, m + ng))
        J[:m, :m] = -(Da / Ea) @ Ka
        J[:m, m:] = Dg
        J[m:, :m] = -Kg / Mg[:, None]
        J[m:, m:] = np.diag(-case.E[g] / Mg)
        self.J = J
        # injection -> constant part of the right-hand side
        Bc = np.zeros((m + ng, case.n))
        Bc[:m, np.flatnonzero(a)] = Da / Ea
        Bc[m + np.arange(ng), np.flatnonzero(g)] = 1.0 / Mg
        self.Bc = Bc

    def advance(self, lam, wg, u, p, h: float, steps: int = 1, *, step_index: int | None = None):
        """Advance ``(lam, omega_g)`` by ``steps`` RK4 steps of size ``h`` under held ``u``, ``p``."""
        m = self.m
        c = self.Bc @ (np.asarray(p, dtype=float) + np.asarray(u, dtype=float))
        J = self.J
        y = np.concatenate([lam, wg])
        v = np.empty_like(y)

        def f(y):
            v[:m] = np.sin(y[:m])
            v[m:] = y[m:]
            return J @ v + c

        h2, h6 = 0.5 * h, h / 6.0
        for _ in range(steps):
            k1 = f(y)
            k2 = f(y + h2 * k1)
            k3 = f(y + h2 * k2)
            k4 = f(y + h * k3)
            y = y + h6 * (k1 + 2.0 * (k2 + k3) + k4)
        if not np.all(np.isfinite(y)):
            where = "" if step_index is None else f" at step {step_index}"
            raise SimulationError(f"non-finite plant state{where}")
        return y[:m], y[m:]

    def frequencies(self, lam, wg, u, p) -> np.ndarray:
        inj = np.asarray(p, dtype=float) + np.asarray(u, dtype=float)
        omega = np.empty(self.case.n)
        omega[self.g] = wg
        omega[self.a] = (inj[self.a] - self.Ka @ np.sin(lam)) / self.Ea
        return omega


def step_nonlinear(case: NetworkCase, state: SystemState, u, p, h: float, *,
                   plant: Plant | None = None, step_index: int | None = None) -> SystemState:
    """One RK4 step of size ``h`` with zero-order-hold ``u`` and ``p``.

    The returned zero-inertia frequencies are evaluated at the new angles with
    the same held ``u`` and ``p``.
    """
    if not h > 0:
        raise ValueError("step size must be positive")
    plant = plant or Plant(case)
    lam, wg = plant.advance(state.lam, state.omega[case.inertial], u, p, h, step_index=step_index)
    return SystemState(lam, plant.frequencies(lam, wg, u, p))


class LinearModel:
    """Forward-Euler linearized model with ``sin(lambda)`` replaced by ``lambda``.

    State ``x = (lambda_hat, omega_hat_g)``; with ``w = p_hat + u_hat``::

        x(k+1)     = A x(k) + B w(k)
        omega_hat(k) = C x(k) + F w(k)

    ``F`` is diagonal with ``1/E_i`` on zero-inertia buses and zero elsewhere.
    """

    def __init__(self, case: NetworkCase, T: float | None = None):
        self.case = case
        self.T = float(case.config.period if T is None else T)
        n, m = case.n, case.m
        g = case.inertial
        ng = int(g.sum())
        self.nx = m + ng
        T = self.T
        C = np.zeros((n, self.nx))
        gi = np.flatnonzero(g)
        ai = np.flatnonzero(~g)
        C[gi, m + np.arange(ng)] = 1.0
        C[ai, :m] = -case.DtYb[ai] / case.E[ai][:, None]
        F = np.zeros(n)
        F[ai] = 1.0 / case.E[ai]
        A = np.eye(self.nx)
        A[:m] += T * (case.D @ C)
        Mg, Eg = case.M[gi], case.E[gi]
        A[m:, :m] -= T * case.DtYb[gi] / Mg[:, None]
        A[m + np.arange(ng), m + np.arange(ng)] -= T * Eg / Mg
        B = np.zeros((self.nx, n))
        B[:m] = T * case.D * F
        B[m + np.arange(ng), gi] = T / Mg
        self.A, self.B, self.C, self.F = A, B, C, F

    def initial_state(self, lam0, omega0) -> np.ndarray:
        omega0 = np.asarray(omega0, dtype=float)
        return np.concatenate([np.sin(np.asarray(lam0, dtype=float)), omega0[self.case.inertial]])

    def rollout(self, x0, W) -> tuple[np.ndarray, np.ndarray]:
        """Return stacked states X (nx x N+1) and frequencies (n x N+1).

        The last zero-inertia frequency column holds the final injection column.
        """
        N = W.shape[1]
        X = np.empty((self.nx, N + 1))
        X[:, 0] = x0
        A = self.A
        BW = self.B @ W
        for k in range(N):
            X[:, k + 1] = A @ X[:, k] + BW[:, k]
        Om = self.C @ X
        Om[:, :N] += self.F[:, None] * W
        Om[:, N] += self.F * W[:, N - 1]
        return X, Om

    def impulse_responses(self, cols, N: int) -> np.ndarray:
        """Frequency response to a unit injection at buses ``cols`` applied at step 0.

        Returns an array of shape ``(N+1, n, len(cols))``; lag 0 is the direct
        algebraic effect.
        """
        cols = np.asarray(cols, dtype=int)
        R = np.empty((N + 1, self.case.n, len(cols)))
        R[0] = 0.0
        R[0][cols, np.arange(len(cols))] = self.F[cols]
        X = self.B[:, cols]
        for L in range(1, N + 1):
            R[L] = self.C @ X
            X = self.A @ X
        return R


def predict_linear(case: NetworkCase, lam0, omega0, U, P, *, model: LinearModel | None = None,
                   T: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Roll out the discrete linear prediction model.

    ``lambda_hat(0) = sin(lam0)``; positive-inertia frequencies start at
    ``omega0``; zero-inertia frequencies solve their algebraic row at every step.
    Returns ``(Lam_hat, Omega_hat)`` of shapes ``(m, N+1)`` and ``(n, N+1)``.
    """
    model = model or LinearModel(case, T)
    U = np.asarray(U, dtype=float)
    P = np.asarray(P, dtype=float)
    if U.shape != P.shape or U.shape[0] != case.n:
        raise ValueError("U and P must both be n x N")
    X, Om = model.rollout(model.initial_state(lam0, omega0), P + U)
    return X[: case.m], Om
