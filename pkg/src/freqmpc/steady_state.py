"""Open-loop equilibrium, synchronization condition and the energy function."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .netcase import NetworkCase, laplacian

__all__ = [
    "Equilibrium",
    "InconsistentInjectionError",
    "EquilibriumError",
    "sync_frequency",
    "sync_condition",
    "equilibrium_angles",
    "equilibrium",
    "potential_term",
    "energy",
    "r_bar",
    "phi_contains",
]

HALF_PI = 0.5 * np.pi


class InconsistentInjectionError(ValueError):
    """The centred injection is not orthogonal to the all-ones vector."""


class EquilibriumError(RuntimeError):
    """Newton failed to find an equilibrium inside the box |lambda| < pi/2."""


@dataclass(frozen=True)
class Equilibrium:
    sync_freq: float
    angle_diffs: np.ndarray
    tilde_p: np.ndarray
    condition_value: float
    r_bar: float

    def as_dict(self) -> dict:
        return {
            "sync_freq": self.sync_freq,
            "angle_diffs": self.angle_diffs.tolist(),
            "tilde_p": self.tilde_p.tolist(),
            "condition_value": self.condition_value,
            "r_bar": self.r_bar,
        }


def sync_frequency(case: NetworkCase, p_star) -> tuple[float, np.ndarray]:
    """Synchronous frequency ``sum(p*) / sum(E)`` and the centred injection."""
    p_star = np.asarray(p_star, dtype=float)
    w_inf = p_star.sum() / case.E.sum()
    return float(w_inf), p_star - w_inf * case.E


def _pinv_apply(L: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    # L + (1/n) 11^T is nonsingular for a connected graph; the mean removal
    # projects the answer back onto range(L).
    n = L.shape[0]
    z = np.linalg.solve(L + np.full((n, n), 1.0 / n), rhs)
    return z - z.mean()


def sync_condition(case: NetworkCase, p_tilde) -> tuple[bool, float]:
    """Evaluate ``max_(i,j) |z_i - z_j|`` with ``z = L^+ p_tilde``.

    Returns ``(value < 1, value)``.
    """
    p_tilde = np.asarray(p_tilde, dtype=float)
    scale = max(np.abs(p_tilde).sum(), 1.0)
    if abs(p_tilde.sum()) > 1e-9 * scale:
        raise InconsistentInjectionError(
            f"centred injection sums to {p_tilde.sum():.3e}, expected 0")
    z = _pinv_apply(laplacian(case), p_tilde)
    value = float(np.max(np.abs(case.D @ z))) if case.m else 0.0
    return value < 1.0, value


def equilibrium_angles(case: NetworkCase, p_tilde, *, tol: float = 1e-10,
                       max_iter: int = 100) -> np.ndarray:
    """Solve ``D^T Y_b sin(D theta) = p_tilde`` by damped Newton from theta = 0.

    The last angle is pinned to zero; the last nodal equation is implied by
    the others because ``p_tilde`` sums to zero.
    """
    p_tilde = np.asarray(p_tilde, dtype=float)
    D, DtYb = case.D, case.DtYb
    n = case.n
    theta = np.zeros(n)

    def residual(th):
        return DtYb @ np.sin(D @ th) - p_tilde

    r = residual(theta)
    rnorm = np.max(np.abs(r))
    for _ in range(max_iter):
        if rnorm <= tol:
            break
        J = DtYb @ (np.cos(D @ theta)[:, None] * D)
        try:
            step = np.linalg.solve(J[:-1, :-1], -r[:-1])
        except np.linalg.LinAlgError as exc:
            raise EquilibriumError(f"singular Newton system: {exc}") from exc
        t = 1.0
        while True:
            trial = theta.copy()
            trial[:-1] += t * step
            r_trial = residual(trial)
            n_trial = np.max(np.abs(r_trial))
            if n_trial < rnorm or t < 1e-6:
                break
            t *= 0.5
        theta, r, rnorm = trial, r_trial, n_trial
    else:
        if rnorm > tol:
            raise EquilibriumError(f"Newton did not converge (residual {rnorm:.3e})")
    if rnorm > tol:
        raise EquilibriumError(f"Newton did not converge (residual {rnorm:.3e})")
    lam = D @ theta
    if np.any(np.abs(lam) >= HALF_PI):
        raise EquilibriumError("equilibrium angle difference outside (-pi/2, pi/2)")
    return lam


def potential_term(lam, lam_inf) -> np.ndarray:
    """Per-line potential ``a(lambda, lambda_inf)``."""
    lam = np.asarray(lam, dtype=float)
    s_inf = np.sin(lam_inf)
    return np.cos(lam_inf) - np.cos(lam) - lam * s_inf + lam_inf * s_inf


def _omega_g(case: NetworkCase, omega) -> np.ndarray:
    omega = np.asarray(omega, dtype=float)
    if omega.shape[-1] == case.n:
        return omega[..., case.inertial]
    return omega


def energy(case: NetworkCase, eq: Equilibrium, lam, omega_g) -> float:
    """Kinetic plus potential energy relative to the equilibrium.

    ``omega_g`` may hold only the positive-inertia frequencies or a full
    n-vector, from which they are extracted.
    """
    wg = _omega_g(case, omega_g)
    Mg = case.M[case.inertial]
    kinetic = 0.5 * np.sum(Mg * (wg - eq.sync_freq) ** 2)
    potential = np.sum(case.b * potential_term(lam, eq.angle_diffs))
    return float(kinetic + potential)


def r_bar(case: NetworkCase, lam_inf) -> float:
    """Smallest energy on the boundary of the closed box |lambda| <= pi/2.

    The potential separates over lines and each term is minimal (zero) at the
    equilibrium, so the minimum is attained with one coordinate on a face.
    """
    lam_inf = np.asarray(lam_inf, dtype=float)
    up = case.b * potential_term(HALF_PI, lam_inf)
    down = case.b * potential_term(-HALF_PI, lam_inf)
    return float(min(up.min(), down.min()))


def equilibrium(case: NetworkCase, p_star=None) -> Equilibrium:
    """Full open-loop equilibrium for injection ``p_star`` (default: base injection)."""
    p_star = case.p0 if p_star is None else np.asarray(p_star, dtype=float)
    w_inf, p_tilde = sync_frequency(case, p_star)
    holds, value = sync_condition(case, p_tilde)
    lam = equilibrium_angles(case, p_tilde)
    return Equilibrium(w_inf, lam, p_tilde, value, r_bar(case, lam))


def phi_contains(case: NetworkCase, eq: Equilibrium, r: float, lam, omega_g) -> bool:
    """Membership in the sublevel set {lambda in closed box, V <= r}."""
    lam = np.asarray(lam, dtype=float)
    if np.any(np.abs(lam) > HALF_PI):
        return False
    return energy(case, eq, lam, omega_g) <= r
