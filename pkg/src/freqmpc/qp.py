"""Operator-splitting solver for convex QPs with diagonal or sparse PSD cost.

Solves::

    minimize    1/2 z^T H z + q^T z
    subject to  l <= A z <= u

with the ADMM splitting of the constraint slab (the scheme popularized by
OSQP): a regularized linear solve followed by a projection onto ``[l, u]``.
Data are Ruiz-equilibrated, ``rho`` adapts every ``adaptive_interval``
iterations and a polishing step (an equality-constrained solve on the guessed
active set) is tried from the warm-start duals and periodically afterwards.

A :class:`QpWorkspace` keeps the scaling and factorizations for a fixed
``(H, A)`` pair so that a sequence of problems differing only in ``q, l, u``
reuses them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "QpProblem",
    "QpSolution",
    "QpSettings",
    "QpWorkspace",
    "KktReport",
    "solve",
    "kkt_check",
    "dump_problem",
    "OPTIMAL",
    "MAX_ITER",
    "PRIMAL_INFEASIBLE",
]

OPTIMAL = "optimal"
MAX_ITER = "max_iter"
PRIMAL_INFEASIBLE = "primal_infeasible"

INF = 1e20          # bounds beyond this are treated as absent
RHO_EQ_SCALE = 1e3  # equality rows get a stiffer penalty
RHO_MIN, RHO_MAX = 1e-6, 1e6


@dataclass
class QpProblem:
    """``min 1/2 z'Hz + q'z  s.t.  l <= Az <= u``.

    ``H`` may be a 1-D array (its diagonal), a dense array or a sparse matrix;
    ``A`` may be dense or sparse.
    """

    H: object
    q: np.ndarray
    A: object
    l: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.l = np.asarray(self.l, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        nz = self.q.size
        if self.A.shape[1] != nz:
            raise ValueError("A has the wrong number of columns")
        if self.l.shape != (self.A.shape[0],) or self.u.shape != self.l.shape:
            raise ValueError("bounds must have one entry per constraint row")
        if np.any(self.l > self.u):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def n_z(self) -> int:
        return self.q.size

    @property
    def n_con(self) -> int:
        return self.l.size

    def hmul(self, z):
        if isinstance(self.H, np.ndarray) and self.H.ndim == 1:
            return self.H * z
        return self.H @ z

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.hmul(z) + self.q @ z)


@dataclass
class QpSolution:
    z: np.ndarray
    y: np.ndarray
    status: str
    primal_residual: float
    dual_residual: float
    iterations: int
    objective: float
    polished: bool = False
    certificate: float = math.nan

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


@dataclass
class QpSettings:
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    eps_infeas: float = 1e-6
    max_iter: int = 20000
    adaptive_interval: int = 50
    check_interval: int = 5
    polish: bool = True
    polish_interval: int = 100
    active_set_rounds: int = 25
    scaling_iter: int = 10


@dataclass
class KktReport:
    stationarity: float
    infeasibility: float
    complementarity: float

    def ok(self, tol: float = 1e-5) -> bool:
        return max(self.stationarity, self.infeasibility, self.complementarity) <= tol


def _to_sparse(M) -> sp.csc_matrix:
    return M.tocsc() if sp.issparse(M) else sp.csc_matrix(M)


class QpWorkspace:
    """Scaled data and cached factorizations for a fixed ``(H, A)``."""

    def __init__(self, H, A, settings: QpSettings | None = None):
        self.settings = settings or QpSettings()
        self.dense = not sp.issparse(A)
        self.n = A.shape[1]
        self.m = A.shape[0]
        if isinstance(H, np.ndarray) and H.ndim == 1:
            self.h_diag = np.asarray(H, dtype=float)
            Hm = None
        elif sp.issparse(H):
            Hm = H.tocsc().astype(float)
            self.h_diag = Hm.diagonal() if _is_diag(Hm) else None
        else:
            Hm = np.asarray(H, dtype=float)
            self.h_diag = np.diag(Hm).copy() if np.count_nonzero(Hm - np.diag(np.diag(Hm))) == 0 else None
        self.H_orig = self.h_diag if self.h_diag is not None else Hm
        self.A_orig = np.asarray(A, dtype=float) if self.dense else _to_sparse(A).astype(float)
        # rows with a single coefficient act as variable bounds in the polishing solve
        self._elim = self.dense and self.h_diag is not None and bool(np.all(self.h_diag > 0))
        if self._elim:
            nz = self.A_orig != 0.0
            self._bvar = np.where(nz.sum(axis=1) == 1, np.argmax(nz, axis=1), -1)
            self._bcoef = np.where(self._bvar >= 0, self.A_orig[np.arange(self.m), np.maximum(self._bvar, 0)], 0.0)
            self._brow = np.flatnonzero(self._bvar >= 0)
            self._grow = np.flatnonzero(self._bvar < 0)
            self._Ag = self.A_orig[self._grow]
        self._scaled = False
        self._factors: dict = {}

    # -- scaling -----------------------------------------------------------------
    def _scale(self):
        if self._scaled:
            return
        self._scaled = True
        n, m = self.n, self.m
        A = self.A_orig
        Dv = np.ones(n)
        Ev = np.ones(m)
        hd = self.h_diag
        Hm = None if hd is not None else self.H_orig
        for _ in range(self.settings.scaling_iter):
            if self.dense:
                As = Ev[:, None] * A * Dv[None, :]
                col = np.abs(As).max(axis=0) if m else np.zeros(n)
                row = np.abs(As).max(axis=1) if m else np.zeros(0)
            else:
                As = sp.diags(Ev) @ A @ sp.diags(Dv)
                absA = abs(As)
                col = absA.max(axis=0).toarray().ravel() if m else np.zeros(n)
                row = absA.max(axis=1).toarray().ravel() if m else np.zeros(0)
            if hd is not None:
                hcol = np.abs(hd) * Dv * Dv
            elif sp.issparse(Hm):
                hcol = abs(sp.diags(Dv) @ Hm @ sp.diags(Dv)).max(axis=0).toarray().ravel()
            else:
                hcol = np.abs(Dv[:, None] * Hm * Dv[None, :]).max(axis=0)
            cn = np.maximum(col, hcol)
            cn = np.where(cn < 1e-4, 1.0, cn)
            rn = np.where(row < 1e-4, 1.0, row)
            Dv = Dv / np.sqrt(cn)
            Ev = Ev / np.sqrt(rn)
        Dv = np.clip(Dv, 1e-4, 1e4)
        Ev = np.clip(Ev, 1e-4, 1e4)
        if self.dense:
            self.As = Ev[:, None] * A * Dv[None, :]
            self.AsT = np.ascontiguousarray(self.As.T)
        else:
            self.As = (sp.diags(Ev) @ A @ sp.diags(Dv)).tocsc()
            self.AsT = self.As.T.tocsc()
        if hd is not None:
            Hsd = hd * Dv * Dv
            cost = float(np.mean(np.abs(Hsd))) if n else 1.0
        elif sp.issparse(Hm):
            Hsc = (sp.diags(Dv) @ Hm @ sp.diags(Dv)).tocsc()
            cost = float(np.mean(np.abs(Hsc.diagonal())))
        else:
            Hsc = Dv[:, None] * Hm * Dv[None, :]
            cost = float(np.mean(np.abs(np.diag(Hsc))))
        c = 1.0 / cost if cost > 1e-4 else 1.0
        c = min(max(c, 1e-4), 1e4)
        self.c = c
        if hd is not None:
            self.Hs_diag = c * hd * Dv * Dv
            self.Hs = None
        else:
            self.Hs_diag = None
            self.Hs = c * Hsc
        self.Dv, self.Ev = Dv, Ev

    def _hs_mul(self, x):
        return self.Hs_diag * x if self.Hs_diag is not None else self.Hs @ x

    def _h_mul(self, x):
        H = self.H_orig
        return H * x if isinstance(H, np.ndarray) and H.ndim == 1 else H @ x

    # -- factorizations ------------------------------------------------------------
    def _factor(self, rho, kinds):
        key = (rho, kinds.tobytes())
        f = self._factors.get(key)
        if f is not None:
            return f
        rv = self._rho_from_kinds(rho, kinds)
        sigma = self.settings.sigma
        if self.dense:
            K = (self.AsT * rv) @ self.As
            if self.Hs_diag is not None:
                K[np.diag_indices_from(K)] += self.Hs_diag + sigma
            else:
                K += np.asarray(self.Hs) if not sp.issparse(self.Hs) else self.Hs.toarray()
                K[np.diag_indices_from(K)] += sigma
            cf = sla.cho_factor(K, lower=False, check_finite=False)
            f = ("dense", cf, rv)
        else:
            K = self.AsT @ sp.diags(rv) @ self.As
            Hpart = sp.diags(self.Hs_diag) if self.Hs_diag is not None else self.Hs
            K = (K + Hpart + sigma * sp.identity(self.n)).tocsc()
            f = ("sparse", spla.splu(K, permc_spec="COLAMD"), rv)
        if len(self._factors) > 16:
            self._factors.clear()
        self._factors[key] = f
        return f

    @staticmethod
    def _kinds(l, u):
        k = np.zeros(l.size, dtype=np.int8)
        k[np.abs(u - l) < 1e-9] = 1
        k[(l <= -INF) & (u >= INF)] = 2
        return k

    def _rho_from_kinds(self, rho, kinds):
        rv = np.full(kinds.size, rho)
        rv[kinds == 1] = rho * RHO_EQ_SCALE
        rv[kinds == 2] = RHO_MIN
        return rv

    @staticmethod
    def _fsolve(f, rhs):
        if f[0] == "dense":
            return sla.cho_solve(f[1], rhs, check_finite=False)
        return f[1].solve(rhs)

    # -- main loop -------------------------------------------------------------------
    def solve(self, q, l, u, warm_start: tuple | None = None) -> QpSolution:
        s = self.settings
        q = np.asarray(q, dtype=float)
        l = np.maximum(np.asarray(l, dtype=float), -INF)
        u = np.minimum(np.asarray(u, dtype=float), INF)
        if s.polish and s.active_set_rounds > 0:
            # active-set iterations from the warm duals (or from no active row)
            y0 = np.zeros(self.m) if warm_start is None or warm_start[1] is None \
                else np.asarray(warm_start[1], float)
            sol = self._polish(q, l, u, None, y0, from_duals=True, rounds=s.active_set_rounds)
            if sol is not None:
                sol.iterations = 0
                return sol
        self._scale()
        Dv, Ev, c = self.Dv, self.Ev, self.c
        qs = c * Dv * q
        ls = np.where(l <= -INF, -INF, Ev * l)
        us = np.where(u >= INF, INF, Ev * u)
        kinds = self._kinds(l, u)
        As, AsT = self.As, self.AsT

        if warm_start is not None:
            z0, y0 = warm_start
            x = np.asarray(z0, dtype=float) / Dv
            y = c * np.asarray(y0, dtype=float) / Ev if y0 is not None else np.zeros(self.m)
        else:
            x = np.zeros(self.n)
            y = np.zeros(self.m)
        z = np.clip(As @ x, ls, us)

        rho = s.rho
        f = self._factor(rho, kinds)
        rv = f[2]
        sigma, alpha = s.sigma, s.alpha
        it = 0
        status = MAX_ITER
        cert = math.nan
        r_p = r_d = math.inf
        for it in range(1, s.max_iter + 1):
            y_prev = y
            rhs = sigma * x - qs + AsT @ (rv * z - y)
            xt = self._fsolve(f, rhs)
            zt = As @ xt
            x = alpha * xt + (1.0 - alpha) * x
            zr = alpha * zt + (1.0 - alpha) * z
            z_new = np.clip(zr + y / rv, ls, us)
            y = y + rv * (zr - z_new)
            z = z_new

            if it % s.check_interval == 0 or it == s.max_iter:
                Ax = As @ x
                Hx = self._hs_mul(x)
                ATy = AsT @ y
                # residuals in the original units
                r_p = float(np.max(np.abs((Ax - z) / Ev))) if self.m else 0.0
                r_d = float(np.max(np.abs((Hx + qs + ATy) / Dv))) / c
                e_p = s.eps_abs + s.eps_rel * max(_ninf(Ax / Ev), _ninf(z / Ev))
                e_d = s.eps_abs + s.eps_rel * max(_ninf(Hx / Dv), _ninf(ATy / Dv), _ninf(qs / Dv)) / c
                if r_p <= e_p and r_d <= e_d:
                    status = OPTIMAL
                    break
                dy = y - y_prev
                cert = self._infeasible(dy, ls, us)
                if cert is not None:
                    status = PRIMAL_INFEASIBLE
                    break
                cert = math.nan
                if s.polish and it % s.polish_interval == 0:
                    sol = self._polish(q, l, u, Dv * x, Ev * y / c, z=z / Ev, rounds=5)
                    if sol is not None:
                        sol.iterations = it
                        return sol
                if it % s.adaptive_interval == 0:
                    pn = r_p / max(_ninf(Ax / Ev), _ninf(z / Ev), 1e-12)
                    dn = r_d / max(max(_ninf(Hx / Dv), _ninf(ATy / Dv), _ninf(qs / Dv)) / c, 1e-12)
                    new_rho = float(np.clip(rho * math.sqrt(pn / max(dn, 1e-30)), RHO_MIN, RHO_MAX))
                    if new_rho > 5.0 * rho or new_rho < 0.2 * rho:
                        # snap to a coarse grid so cached factorizations are reused
                        rho = _snap(new_rho)
                        f = self._factor(rho, kinds)
                        rv = f[2]

        zx = Dv * x
        yy = Ev * y / c
        if status == PRIMAL_INFEASIBLE:
            return QpSolution(zx, yy, status, r_p, r_d, it, math.nan, certificate=cert)
        if status == OPTIMAL and s.polish:
            sol = self._polish(q, l, u, zx, yy, z=z / Ev)
            if sol is not None:
                sol.iterations = it
                return sol
        obj = float(0.5 * zx @ self._h_mul(zx) + q @ zx)
        return QpSolution(zx, yy, status, r_p, r_d, it, obj)

    def _infeasible(self, dy, ls, us):
        nrm = _ninf(dy)
        if nrm < 1e-12:
            return None
        eps = self.settings.eps_infeas
        dyn = dy / nrm
        if _ninf(self.AsT @ dyn) > eps:
            return None
        pos = np.maximum(dyn, 0.0)
        neg = np.minimum(dyn, 0.0)
        # directions pushing against an absent bound cannot certify anything
        if np.any((us >= INF) & (pos > eps)) or np.any((ls <= -INF) & (neg < -eps)):
            return None
        val = float(np.sum(np.where(us >= INF, 0.0, us * pos)) + np.sum(np.where(ls <= -INF, 0.0, ls * neg)))
        if val < -eps:
            return nrm
        return None

    # -- polishing ---------------------------------------------------------------------
    def _polish(self, q, l, u, x, y, z=None, from_duals=False, rounds: int = 1):
        """Solve equality-constrained QPs on a guessed active set and accept the
        result only if it is an (approximate) KKT point of the full problem.

        With ``rounds > 1`` the guess is corrected between solves: rows whose
        multiplier has the wrong sign leave the set, violated rows join it.
        """
        s = self.settings
        A = self.A_orig
        tol = 1e-9
        if from_duals:
            low = y < -tol
            upp = y > tol
        else:
            low = (z - l) < -y
            upp = (u - z) < y
        eq = np.abs(u - l) < 1e-9
        has_l, has_u = l > -INF, u < INF
        low = (low | eq) & has_l
        upp = upp & has_u & ~low
        seen = set()
        for _ in range(rounds):
            act = np.flatnonzero(low | upp)
            key = act.tobytes() + upp[act].tobytes()
            if key in seen:
                return None
            seen.add(key)
            b = np.where(low, l, u)[act]
            try:
                xs, ya = self._eq_qp_elim(q, act, b) if self._elim else \
                    self._eq_qp(q, A[act] if self.dense else A[act, :], b)
            except (np.linalg.LinAlgError, RuntimeError, ValueError):
                return None
            if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ya))):
                return None
            yf = np.zeros(self.m)
            yf[act] = ya
            Ax = self._a_mul(xs)
            # dual signs: lower-active rows carry y <= 0, upper-active y >= 0
            sign_tol = 1e-9 * max(1.0, _ninf(yf))
            bad_l = low & ~eq & (yf > sign_tol)
            bad_u = upp & ~eq & (yf < -sign_tol)
            e_p = s.eps_abs + s.eps_rel * _ninf(Ax)
            add_l = ~(low | upp) & has_l & (Ax < l - e_p)
            add_u = ~(low | upp) & has_u & (Ax > u + e_p)
            if not (bad_l.any() or bad_u.any() or add_l.any() or add_u.any()):
                break
            low = (low & ~bad_l) | add_l
            upp = (upp & ~bad_u) | add_u
        else:
            return None
        viol = float(np.max(np.maximum(np.maximum(l - Ax, Ax - u), 0.0))) if self.m else 0.0
        Hx = self._h_mul(xs)
        ATy = self._at_mul(yf)
        r_d = float(_ninf(Hx + q + ATy))
        e_d = s.eps_abs + s.eps_rel * max(_ninf(Hx), _ninf(ATy), _ninf(q))
        if viol > e_p or r_d > e_d:
            return None
        obj = float(0.5 * xs @ Hx + q @ xs)
        return QpSolution(xs, yf, OPTIMAL, viol, r_d, 0, obj, polished=True)

    def _a_mul(self, x):
        if not self._elim:
            return self.A_orig @ x
        out = np.empty(self.m)
        out[self._grow] = self._Ag @ x
        out[self._brow] = self._bcoef[self._brow] * x[self._bvar[self._brow]]
        return out

    def _at_mul(self, y):
        if not self._elim:
            return self.A_orig.T @ y
        out = self._Ag.T @ y[self._grow]
        np.add.at(out, self._bvar[self._brow], self._bcoef[self._brow] * y[self._brow])
        return out

    def _eq_qp_elim(self, q, act, b):
        """Equality-constrained solve with bound rows eliminated (diagonal positive H)."""
        hd = self.h_diag
        A = self.A_orig
        bv = self._bvar[act]
        isb = bv >= 0
        ya = np.zeros(act.size)
        fixed_val = np.full(self.n, np.nan)
        owner = np.full(self.n, -1)
        for r in np.flatnonzero(isb):
            j = bv[r]
            val = b[r] / self._bcoef[act[r]]
            if owner[j] >= 0:
                if abs(fixed_val[j] - val) > 1e-9 * max(1.0, abs(val)):
                    raise ValueError("inconsistent active bounds")
                continue
            owner[j] = r
            fixed_val[j] = val
        fix = owner >= 0
        free = ~fix
        gi = np.flatnonzero(~isb)
        Ag = A[act[gi]]
        x = np.empty(self.n)
        x[fix] = fixed_val[fix]
        Gf = Ag[:, free]
        hinv = 1.0 / hd[free]
        qf = q[free]
        if gi.size:
            rhs_g = b[gi] - Ag[:, fix] @ x[fix]
            AH = Gf * hinv[None, :]
            S0 = AH @ Gf.T
            S = S0.copy()
            S[np.diag_indices_from(S)] += 1e-10 * max(1.0, float(np.max(np.abs(np.diag(S)))))
            cf = sla.cho_factor(S, check_finite=False)
            rhs = -AH @ qf - rhs_g
            yg = sla.cho_solve(cf, rhs, check_finite=False)
            for _ in range(2):
                yg = yg + sla.cho_solve(cf, rhs - S0 @ yg, check_finite=False)
            x[free] = -hinv * (qf + Gf.T @ yg)
            ya[gi] = yg
            grad = hd * x + q + Ag.T @ yg
        else:
            x[free] = -hinv * qf
            grad = hd * x + q
        rows = owner[fix]
        ya[rows] = -grad[fix] / self._bcoef[act[rows]]
        return x, ya

    def _eq_qp(self, q, Aa, b):
        """``min 1/2 x'Hx + q'x  s.t.  Aa x = b`` with iterative refinement."""
        n = self.n
        k = Aa.shape[0]
        delta = 1e-10
        hd = self.H_orig if (isinstance(self.H_orig, np.ndarray) and self.H_orig.ndim == 1) else None
        if self.dense and hd is not None and np.all(hd > 0):
            # Schur complement on the active rows
            Hinv = 1.0 / hd
            if k == 0:
                return -Hinv * q, np.zeros(0)
            AH = Aa * Hinv[None, :]
            S = AH @ Aa.T
            S[np.diag_indices_from(S)] += delta * max(1.0, float(np.max(np.abs(np.diag(S)))))
            cf = sla.cho_factor(S, check_finite=False)
            rhs = -AH @ q - b
            y = sla.cho_solve(cf, rhs, check_finite=False)
            for _ in range(3):
                y = y + sla.cho_solve(cf, rhs - (AH @ Aa.T) @ y, check_finite=False)
            x = -Hinv * (q + Aa.T @ y)
            return x, y
        Hm = sp.diags(hd) if hd is not None else (self.H_orig if sp.issparse(self.H_orig)
                                                 else sp.csc_matrix(self.H_orig))
        Aas = _to_sparse(Aa)
        K = sp.bmat([[Hm + delta * sp.identity(n), Aas.T], [Aas, -delta * sp.identity(k)]], format="csc")
        K0 = sp.bmat([[Hm, Aas.T], [Aas, None]], format="csc") if k else Hm.tocsc()
        lu = spla.splu(K)
        rhs = np.concatenate([-q, b])
        sol = lu.solve(rhs)
        for _ in range(3):
            sol = sol + lu.solve(rhs - K0 @ sol)
        return sol[:n], sol[n:]


def _is_diag(M) -> bool:
    M = M.tocoo()
    return bool(np.all(M.row == M.col))


def _snap(r: float) -> float:
    # quarter-decade grid
    return float(10.0 ** (round(math.log10(r) * 4) / 4))


def _ninf(v) -> float:
    return float(np.max(np.abs(v))) if np.size(v) else 0.0


def solve(problem: QpProblem, warm_start: tuple | None = None,
          settings: QpSettings | None = None) -> QpSolution:
    """Solve ``problem``; ``warm_start`` is an optional ``(z, y)`` pair (``y`` may be None)."""
    ws = QpWorkspace(problem.H, problem.A, settings)
    return ws.solve(problem.q, problem.l, problem.u, warm_start)


def kkt_check(problem: QpProblem, solution: QpSolution) -> KktReport:
    """Recompute stationarity, feasibility and complementarity from scratch."""
    z, y = solution.z, solution.y
    A = problem.A
    Az = A @ z
    stat = _ninf(problem.hmul(z) + problem.q + A.T @ y)
    infeas = float(np.max(np.maximum(np.maximum(problem.l - Az, Az - problem.u), 0.0))) if problem.n_con else 0.0
    yp = np.maximum(y, 0.0)
    yn = np.minimum(y, 0.0)
    up = yp * (np.where(problem.u >= INF, Az, problem.u) - Az)
    lo = yn * (Az - np.where(problem.l <= -INF, Az, problem.l))
    # a positive multiplier on an absent bound is itself a violation
    bad = np.concatenate([yp[problem.u >= INF], -yn[problem.l <= -INF]])
    comp = max(_ninf(up), _ninf(lo), _ninf(bad))
    return KktReport(stat, infeas, comp)


def dump_problem(problem: QpProblem, path: str | Path) -> Path:
    """Write the problem as text triplets (for cross-checking in other tools)."""
    path = Path(path)
    H = problem.H
    if isinstance(H, np.ndarray) and H.ndim == 1:
        H = sp.diags(H)
    H = sp.coo_matrix(H)
    A = sp.coo_matrix(problem.A)
    lines = [f"n_z {problem.n_z}", f"n_con {problem.n_con}", "H"]
    lines += [f"{i} {j} {v!r}" for i, j, v in zip(H.row, H.col, H.data)]
    lines.append("q")
    lines += [repr(float(v)) for v in problem.q]
    lines.append("A")
    lines += [f"{i} {j} {v!r}" for i, j, v in zip(A.row, A.col, A.data)]
    lines.append("l u")
    lines += [f"{lo!r} {hi!r}" for lo, hi in zip(problem.l.tolist(), problem.u.tolist())]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
