"""Convexified receding-horizon controller.

Two equivalent formulations of the convexified problem are provided:

* :func:`build_qcvx` assembles the full sparse QP over the stacked angle,
  frequency, input and slack trajectories.  It is the reference formulation
  and is used for checking.
* :class:`CentralizedController` eliminates the state trajectories through the
  linear model (prediction matrices from impulse responses) and drops the
  inputs pinned to zero by the branch plan.  This is what runs in closed loop.

Both return the same first input; the condensed controller additionally
short-circuits to ``u = 0`` whenever that is provably optimal.
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .dynamics import DiscreteTrajectory, LinearModel
from .netcase import NetworkCase
from .qp import INF, QpProblem, QpSettings, QpSolution, QpWorkspace, dump_problem, solve
from .refgen import ReferenceTrajectory, generate_reference, kappa_vector

__all__ = [
    "UPPER",
    "LOWER",
    "INACTIVE",
    "ControlError",
    "kappa",
    "classify_branches",
    "QcvxLayout",
    "ConvexifiedProblem",
    "build_qcvx",
    "phi_disc_contains",
    "phi_cvx_contains",
    "CentralizedController",
    "centralized_control",
]

log = logging.getLogger(__name__)

UPPER, LOWER, INACTIVE = 1, -1, 0
# clearance (Hz) kept between a controlled zero-inertia bus and the quiet band
BAND_MARGIN = 1e-10


class ControlError(RuntimeError):
    """Controller failure; ``dump`` points at the written problem if any."""

    def __init__(self, msg: str, dump: Path | None = None):
        super().__init__(msg if dump is None else f"{msg} (problem written to {dump})")
        self.dump = dump


def kappa(omega0: float, xi: int, w_lo: float, w_hi: float) -> int:
    """0 when the initial frequency is safe and the input limit is soft, else 1."""
    return 0 if (w_lo <= omega0 <= w_hi and xi == 1) else 1


def classify_branches(case: NetworkCase, Omega_ref) -> np.ndarray:
    """Branch of every ``(controlled bus, step)`` pair for steps ``0..N-1``.

    Exact threshold equality selects the upper/lower branch.
    """
    Om = np.asarray(Omega_ref, dtype=float)
    N = Om.shape[1] - 1 if Om.shape[1] > 1 else Om.shape[1]
    W = Om[case.u_idx, :N]
    hi = case.control_array("thr_hi")[:, None]
    lo = case.control_array("thr_lo")[:, None]
    plan = np.zeros(W.shape, dtype=np.int8)
    plan[W >= hi] = UPPER
    plan[W <= lo] = LOWER
    return plan


# -- membership oracles ----------------------------------------------------------------

def phi_disc_contains(case: NetworkCase, Omega, U, tol: float = 0.0) -> bool:
    """Non-convex stability set: sign condition outside the threshold band and
    zero input strictly inside it, for every controlled bus and step ``0..N-1``.

    ``U`` is ``n x N`` (full) or ``|I_u| x N``.
    """
    Omega = np.asarray(Omega, dtype=float)
    U = np.asarray(U, dtype=float)
    N = U.shape[1]
    Uc = U[case.u_idx] if U.shape[0] == case.n else U
    W = Omega[case.u_idx, :N]
    hi = case.control_array("thr_hi")[:, None]
    lo = case.control_array("thr_lo")[:, None]
    inside = (W > lo + tol) & (W < hi - tol)
    ok_in = np.abs(Uc) <= tol
    ok_out = W * Uc <= tol * np.abs(W)
    return bool(np.all(np.where(inside, ok_in, ok_out)))


def phi_cvx_contains(plan, Omega, U, case: NetworkCase | None = None, *, thr_lo=None, thr_hi=None,
                     tol: float = 1e-9) -> bool:
    """Convex inner approximation fixed by ``plan``.

    Thresholds come from ``case`` or explicitly as per-controlled-bus arrays.
    ``Omega`` and ``U`` are restricted to the controlled buses when no case
    is given.
    """
    plan = np.asarray(plan)
    Omega = np.asarray(Omega, dtype=float)
    U = np.asarray(U, dtype=float)
    N = plan.shape[1]
    if case is not None:
        W = Omega[case.u_idx, :N]
        Uc = U[case.u_idx] if U.shape[0] == case.n else U
        thr_hi = case.control_array("thr_hi")
        thr_lo = case.control_array("thr_lo")
    else:
        W, Uc = Omega[:, :N], U
    hi = np.asarray(thr_hi, dtype=float)[:, None]
    lo = np.asarray(thr_lo, dtype=float)[:, None]
    up = (W >= hi - tol) & (Uc <= tol)
    dn = (W <= lo + tol) & (Uc >= -tol)
    zero = np.abs(Uc) <= tol
    return bool(np.all(np.where(plan == UPPER, up, np.where(plan == LOWER, dn, zero))))


# -- full sparse formulation ---------------------------------------------------------------

@dataclass
class QcvxLayout:
    """Flat positions of the stacked trajectories.

    Order: ``Lam (m x N+1)``, ``Omega (n x N+1)``, ``U (|I_u| x N)``,
    ``B (|I_u| x N)``, ``Gamma (|I_w| x N, steps 1..N)``, each column-major by step.
    """

    m: int
    n: int
    nu: int
    nw: int
    N: int

    @property
    def n_z(self) -> int:
        return (self.m + self.n) * (self.N + 1) + 2 * self.nu * self.N + self.nw * self.N

    def lam(self, e, k):
        return k * self.m + e

    def omega(self, i, k):
        return (self.N + 1) * self.m + k * self.n + i

    def u(self, j, k):
        return (self.N + 1) * (self.m + self.n) + k * self.nu + j

    def beta(self, j, k):
        return self.u(0, self.N) + k * self.nu + j

    def gamma(self, j, k):
        """``k`` in ``1..N``."""
        return self.beta(0, self.N) + (k - 1) * self.nw + j

    def pack(self, traj: DiscreteTrajectory, u_idx) -> np.ndarray:
        z = np.empty(self.n_z)
        N = self.N
        z[: self.omega(0, 0)] = traj.Lam.T.ravel()
        z[self.omega(0, 0): self.u(0, 0)] = traj.Omega.T.ravel()
        z[self.u(0, 0): self.beta(0, 0)] = traj.U[u_idx].T.ravel()
        z[self.beta(0, 0): self.gamma(0, 1)] = traj.B.T.ravel()
        z[self.gamma(0, 1):] = traj.Gamma.T.ravel()
        assert z.size == self.u(0, N) + self.nu * N + self.nw * N
        return z

    def unpack(self, z, u_idx, n_full, P) -> DiscreteTrajectory:
        N = self.N
        Lam = z[: self.omega(0, 0)].reshape(N + 1, self.m).T
        Om = z[self.omega(0, 0): self.u(0, 0)].reshape(N + 1, self.n).T
        Uc = z[self.u(0, 0): self.beta(0, 0)].reshape(N, self.nu).T
        U = np.zeros((n_full, N))
        U[u_idx] = Uc
        B = z[self.beta(0, 0): self.gamma(0, 1)].reshape(N, self.nu).T
        G = z[self.gamma(0, 1):].reshape(N, self.nw).T
        return DiscreteTrajectory(Lam.copy(), Om.copy(), U, B.copy(), G.copy(), np.asarray(P, float))


@dataclass
class ConvexifiedProblem:
    qp: QpProblem
    layout: QcvxLayout
    plan: np.ndarray
    kappa: np.ndarray
    row_labels: list = field(default_factory=list)

    def violations(self, z) -> tuple[float, str]:
        """Largest constraint violation at ``z`` and the label of that row."""
        Az = self.qp.A @ z
        v = np.maximum(np.maximum(self.qp.l - Az, Az - self.qp.u), 0.0)
        if v.size == 0:
            return 0.0, ""
        k = int(np.argmax(v))
        return float(v[k]), self.row_labels[k]


class _Rows:
    def __init__(self):
        self.r, self.c, self.v = [], [], []
        self.lo, self.hi, self.labels = [], [], []

    def add(self, cols, vals, lo, hi, label):
        k = len(self.lo)
        self.r.extend([k] * len(cols))
        self.c.extend(cols)
        self.v.extend(vals)
        self.lo.append(lo)
        self.hi.append(hi)
        self.labels.append(label)


def build_qcvx(case: NetworkCase, lam0, omega0, P_fcst, reference: ReferenceTrajectory, *,
               guard: bool = True) -> ConvexifiedProblem:
    """Full sparse convexified QP at the measured state ``(lam0, omega0)``.

    With ``guard`` the hard frequency bounds of step 1 are tightened by each
    bus's ``guard`` parameter.
    """
    if not reference.feasible:
        raise ControlError(f"reference is infeasible: {reference.message}")
    P = np.asarray(P_fcst, dtype=float)
    n, m = case.n, case.m
    N = P.shape[1]
    T = reference.T
    u_idx, w_idx = case.u_idx, case.w_idx
    nu, nw = len(u_idx), len(w_idx)
    L = QcvxLayout(m, n, nu, nw, N)
    plan = classify_branches(case, reference.Omega)
    kap = kappa_vector(case, omega0)
    D, K = case.D, case.DtYb
    rows = _Rows()
    ujpos = {int(i): j for j, i in enumerate(u_idx)}

    s0 = np.sin(np.asarray(lam0, dtype=float))
    for e in range(m):
        rows.add([L.lam(e, 0)], [1.0], s0[e], s0[e], f"init lambda[{e + 1}]")
    for i in np.flatnonzero(case.inertial):
        rows.add([L.omega(i, 0)], [1.0], omega0[i], omega0[i], f"init omega[{i + 1}]")
    for k in range(N):
        for e in range(m):
            cols = [L.lam(e, k + 1), L.lam(e, k)]
            vals = [1.0, -1.0]
            for i in np.flatnonzero(D[e]):
                cols.append(L.omega(i, k))
                vals.append(-T * D[e, i])
            rows.add(cols, vals, 0.0, 0.0, f"angle dynamics line {e + 1} step {k}")
        for i in range(n):
            cols, vals = [], []
            if case.M[i] > 0:
                cols += [L.omega(i, k + 1), L.omega(i, k)]
                vals += [case.M[i] / T, -case.M[i] / T + case.E[i]]
            else:
                cols.append(L.omega(i, k))
                vals.append(case.E[i])
            for e in np.flatnonzero(K[i]):
                cols.append(L.lam(e, k))
                vals.append(K[i, e])
            if i in ujpos:
                cols.append(L.u(ujpos[i], k))
                vals.append(-1.0)
            rows.add(cols, vals, P[i, k], P[i, k], f"frequency dynamics bus {i + 1} step {k}")

    for j, i in enumerate(u_idx):
        bc = case.config.params[int(i) + 1]
        for k in range(N):
            if bc.xi == 1:
                if np.isfinite(bc.u_min):
                    rows.add([L.u(j, k), L.beta(j, k)], [1.0, 1.0], bc.u_min, INF, f"input lower bus {i + 1} step {k}")
                if np.isfinite(bc.u_max):
                    rows.add([L.u(j, k), L.beta(j, k)], [1.0, -1.0], -INF, bc.u_max, f"input upper bus {i + 1} step {k}")
            else:
                rows.add([L.u(j, k)], [1.0], bc.u_min, bc.u_max, f"input bounds bus {i + 1} step {k}")
            rows.add([L.beta(j, k)], [1.0], 0.0, INF, f"beta >= 0 bus {i + 1} step {k}")
            br = plan[j, k]
            if br == UPPER:
                rows.add([L.omega(i, k)], [1.0], bc.thr_hi, INF, f"upper branch frequency bus {i + 1} step {k}")
                rows.add([L.u(j, k)], [1.0], -INF, 0.0, f"upper branch input bus {i + 1} step {k}")
            elif br == LOWER:
                rows.add([L.omega(i, k)], [1.0], -INF, bc.thr_lo, f"lower branch frequency bus {i + 1} step {k}")
                rows.add([L.u(j, k)], [1.0], 0.0, INF, f"lower branch input bus {i + 1} step {k}")
            else:
                rows.add([L.u(j, k)], [1.0], 0.0, 0.0, f"inactive branch bus {i + 1} step {k}")

    for j, i in enumerate(w_idx):
        bc = case.config.params[int(i) + 1]
        for k in range(1, N + 1):
            rows.add([L.gamma(j, k)], [1.0], 0.0, INF, f"gamma >= 0 bus {i + 1} step {k}")
            if kap[j] == 0:
                g = bc.guard if guard and k == 1 else 0.0
                rows.add([L.omega(i, k)], [1.0], bc.w_lo + g, bc.w_hi - g, f"frequency bounds bus {i + 1} step {k}")
            else:
                rows.add([L.omega(i, k), L.gamma(j, k)], [1.0, 1.0], bc.w_lo + bc.delta, INF,
                         f"soft lower frequency bus {i + 1} step {k}")
                rows.add([L.omega(i, k), L.gamma(j, k)], [1.0, -1.0], -INF, bc.w_hi - bc.delta,
                         f"soft upper frequency bus {i + 1} step {k}")

    A = sp.csc_matrix((rows.v, (rows.r, rows.c)), shape=(len(rows.lo), L.n_z))
    h = np.zeros(L.n_z)
    c = case.control_array("c")
    d = case.control_array("d")
    e = case.control_array("e", w_idx)
    for k in range(N):
        h[L.u(0, k): L.u(0, k) + nu] = 2.0 * c
        h[L.beta(0, k): L.beta(0, k) + nu] = 2.0 * d
    for k in range(1, N + 1):
        h[L.gamma(0, k): L.gamma(0, k) + nw] = 2.0 * e
    qp = QpProblem(sp.diags(h).tocsc(), np.zeros(L.n_z), A, np.array(rows.lo), np.array(rows.hi))
    return ConvexifiedProblem(qp, L, plan, kap, rows.labels)


def solve_qcvx(case: NetworkCase, lam0, omega0, P_fcst, *, model: LinearModel | None = None,
               settings: QpSettings | None = None, guard: bool = True) -> tuple[ConvexifiedProblem, QpSolution]:
    """Reference, full problem and its solution (checking path)."""
    ref = generate_reference(case, lam0, omega0, P_fcst, model=model).require_feasible()
    conv = build_qcvx(case, lam0, omega0, P_fcst, ref, guard=guard)
    start = conv.layout.pack(ref.qualification(case), case.u_idx)
    sol = solve(conv.qp, warm_start=(start, None), settings=settings)
    return conv, sol


# -- condensed controller ---------------------------------------------------------------------

@dataclass
class ControlInfo:
    """Diagnostics of the last control computation."""

    path: str = ""
    iterations: int = 0
    n_var: int = 0
    objective: float = 0.0
    polished: bool = False


class _Structure:
    """Constraint matrix of the condensed problem for one (plan, kappa) pattern."""

    __slots__ = ("A", "h", "vkeys", "rkeys", "row_src", "row_lo", "row_hi", "ws", "vj", "vk",
                 "free_src", "free_lo", "free_hi", "n_u", "vcode", "rcode")


class CentralizedController:
    """Condensed receding-horizon controller with warm starts.

    Parameters
    ----------
    case : NetworkCase
        Network and controller configuration (horizon and period included).
    settings : QpSettings, optional
        Solver settings.
    dump_dir : path, optional
        Where failing problems are written.
    """

    def __init__(self, case: NetworkCase, settings: QpSettings | None = None, dump_dir=None,
                 cache_size: int = 32):
        self.case = case
        self.N = case.config.horizon
        self.model = LinearModel(case)
        self.settings = settings or QpSettings()
        self.dump_dir = Path(dump_dir) if dump_dir is not None else None
        self.u_idx = case.u_idx
        self.w_idx = case.w_idx
        self.nu = len(self.u_idx)
        self.R = self.model.impulse_responses(self.u_idx, self.N)
        self.thr_hi = case.control_array("thr_hi")
        self.thr_lo = case.control_array("thr_lo")
        self.c = case.control_array("c")
        self._bc = [case.config.params[int(i) + 1] for i in self.u_idx]
        self._wbc = [case.config.params[int(i) + 1] for i in self.w_idx]
        self._has_guard = any(bc.guard > 0 for bc in self._wbc)
        self._cache: OrderedDict = OrderedDict()
        self._cache_size = cache_size
        self._warm: dict | None = None
        self.info = ControlInfo()
        self.last_reference: ReferenceTrajectory | None = None

    def reset(self) -> None:
        self._warm = None

    # -- public ----------------------------------------------------------------------------
    def __call__(self, lam, omega, P_fcst) -> np.ndarray:
        return self.control(lam, omega, P_fcst)

    def control(self, lam, omega, P_fcst) -> np.ndarray:
        case = self.case
        lam = np.asarray(lam, dtype=float)
        omega = np.asarray(omega, dtype=float)
        P = np.asarray(P_fcst, dtype=float)
        if P.shape != (case.n, self.N):
            raise ValueError(f"forecast must be {case.n} x {self.N}")
        ref = generate_reference(case, lam, omega, P, model=self.model)
        self.last_reference = ref
        if not ref.feasible:
            raise ControlError(f"reference is infeasible: {ref.message}")
        plan = classify_branches(case, ref.Omega)
        u = np.zeros(case.n)
        if not plan.any():
            self._warm = None
            self.info = ControlInfo("inactive")
            return u
        kap = ref.kappa
        free = ref.extra["free"]
        for guard in ((True, False) if self._has_guard else (False,)):
            st = self._structure(plan, kap, guard)
            lo, hi, ok = self._bounds(st, free)
            if not ok:
                if guard:
                    continue
                raise ControlError("constant constraint violated although the reference is feasible",
                                   self._dump(st, lo, hi))
            if np.all(lo <= 0.0) and np.all(hi >= 0.0):
                # zero input with zero slacks is feasible and costs nothing
                self._warm = None
                self.info = ControlInfo("zero", n_var=st.A.shape[1])
                return u
            try:
                sol = self._solve(st, lo, hi)
                break
            except ControlError:
                # the tightened first step can be out of reach; the literal problem is not
                if not guard:
                    raise
        z = sol.z
        self._remember(st, sol)
        self.info = ControlInfo("qp", sol.iterations, st.A.shape[1], sol.objective, sol.polished)
        first = st.vk == 0
        u[self.u_idx[st.vj[first]]] = z[: st.n_u][first]
        return self._project_first(u, plan, lam, omega, P[:, 0])

    # -- internals ------------------------------------------------------------------------
    def _project_first(self, u, plan, lam, omega, p):
        """Make the first input satisfy the stability set exactly (solver tolerance aside)."""
        case = self.case
        alg = ~case.inertial
        for j, i in enumerate(self.u_idx):
            if plan[j, 0] == UPPER:
                u[i] = min(u[i], 0.0)
            elif plan[j, 0] == LOWER:
                u[i] = max(u[i], 0.0)
            else:
                u[i] = 0.0
            if alg[i] and u[i] != 0.0:
                # the input moves this bus's own frequency; keep it clear of the
                # band by a margin so rounding in the plant cannot land inside
                theta = p[i] - case.DtYb[i] @ np.sin(lam)
                E = case.E[i]
                if plan[j, 0] == UPPER:
                    u[i] = min(0.0, max(u[i], E * (self.thr_hi[j] + BAND_MARGIN) - theta))
                else:
                    u[i] = max(0.0, min(u[i], E * (self.thr_lo[j] - BAND_MARGIN) - theta))
        return u

    def _structure(self, plan, kap, guard: bool = True) -> _Structure:
        key = (plan.tobytes(), kap.tobytes(), guard)
        st = self._cache.get(key)
        if st is not None:
            self._cache.move_to_end(key)
            return st
        st = self._build_structure(plan, kap, guard)
        self._cache[key] = st
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return st

    def _build_structure(self, plan, kap, guard: bool = True) -> _Structure:
        case, N, R = self.case, self.N, self.R
        alg = ~case.inertial
        vj, vk = np.nonzero(plan)          # input variables: (controlled position, step)
        order = np.lexsort((vj, vk))
        vj, vk = vj[order], vk[order]
        nU = vj.size
        vkeys = [("u", int(self.u_idx[j]), int(k)) for j, k in zip(vj, vk)]
        h = [2.0 * self.c[vj]]
        # soft input bounds with a penalized slack
        bvars = [t for t in range(nU) if self._bc[vj[t]].xi == 1 and self._bc[vj[t]].d > 0]
        nB = len(bvars)
        h.append(np.array([2.0 * self._bc[vj[t]].d for t in bvars]))
        vkeys += [("b", int(self.u_idx[vj[t]]), int(vk[t])) for t in bvars]
        # frequency slacks for buses in the attraction case
        gvars = []
        for jw, i in enumerate(self.w_idx):
            if kap[jw]:
                kmax = N - 1 if alg[i] else N
                gvars += [(jw, k) for k in range(1, kmax + 1)]
        nG = len(gvars)
        h.append(np.array([2.0 * self._wbc[jw].e for jw, _ in gvars]))
        vkeys += [("g", int(self.w_idx[jw]), k) for jw, k in gvars]
        nv = nU + nB + nG

        # frequency expressions omega_i(k) = free_i(k) + G_row . u
        src_i, src_k, lo, hi, rkeys, slack_col, slack_sign = [], [], [], [], [], [], []
        for t in range(nU):
            j, k = vj[t], vk[t]
            i = int(self.u_idx[j])
            if plan[j, k] == UPPER:
                lo.append(self.thr_hi[j]); hi.append(INF)
            else:
                lo.append(-INF); hi.append(self.thr_lo[j])
            src_i.append(i); src_k.append(k); rkeys.append(("phi", i, int(k)))
            slack_col.append(-1); slack_sign.append(0.0)
        gpos = {g: nU + nB + t for t, g in enumerate(gvars)}
        for jw, i in enumerate(self.w_idx):
            bc = self._wbc[jw]
            i = int(i)
            kmax = N - 1 if alg[i] else N
            for k in range(1, kmax + 1):
                if kap[jw] == 0:
                    g = bc.guard if guard and k == 1 else 0.0
                    src_i.append(i); src_k.append(k); lo.append(bc.w_lo + g); hi.append(bc.w_hi - g)
                    rkeys.append(("w", i, k)); slack_col.append(-1); slack_sign.append(0.0)
                else:
                    g = gpos[(jw, k)]
                    src_i.append(i); src_k.append(k); lo.append(bc.w_lo + bc.delta); hi.append(INF)
                    rkeys.append(("wl", i, k)); slack_col.append(g); slack_sign.append(1.0)
                    src_i.append(i); src_k.append(k); lo.append(-INF); hi.append(bc.w_hi - bc.delta)
                    rkeys.append(("wh", i, k)); slack_col.append(g); slack_sign.append(-1.0)
        src_i = np.array(src_i, dtype=int)
        src_k = np.array(src_k, dtype=int)
        lag = src_k[:, None] - vk[None, :]
        G = np.where(lag >= 0, R[np.clip(lag, 0, N), src_i[:, None], vj[None, :]], 0.0)
        Af = np.zeros((len(src_i), nv))
        Af[:, :nU] = G
        sc = np.array(slack_col, dtype=int)
        has = sc >= 0
        Af[np.flatnonzero(has), sc[has]] = np.array(slack_sign)[has]
        dep = np.any(Af != 0.0, axis=1)

        st = _Structure()
        st.free_src = (src_i[~dep], src_k[~dep])
        st.free_lo = np.array(lo)[~dep]
        st.free_hi = np.array(hi)[~dep]
        keep = np.flatnonzero(dep)
        ex_rows = [Af[keep]]
        ex_lo = [np.array(lo)[keep]]
        ex_hi = [np.array(hi)[keep]]
        st.row_src = (src_i[keep], src_k[keep])
        rk = [rkeys[r] for r in keep]
        # variable bound rows
        I = np.eye(nv)
        ulo = np.empty(nU); uhi = np.empty(nU)
        for t in range(nU):
            bc = self._bc[vj[t]]
            up = plan[vj[t], vk[t]] == UPPER
            ulo[t], uhi[t] = (-INF, 0.0) if up else (0.0, INF)
            if bc.xi == 0:
                ulo[t] = max(ulo[t], bc.u_min)
                uhi[t] = min(uhi[t], bc.u_max)
        ex_rows.append(I[:nU]); ex_lo.append(ulo); ex_hi.append(uhi)
        rk += [("ub",) + vkeys[t][1:] for t in range(nU)]
        if nB:
            Bl = np.zeros((2 * nB, nv))
            bl, bh = [], []
            for s_, t in enumerate(bvars):
                bc = self._bc[vj[t]]
                Bl[2 * s_, t] = 1.0; Bl[2 * s_, nU + s_] = 1.0
                Bl[2 * s_ + 1, t] = 1.0; Bl[2 * s_ + 1, nU + s_] = -1.0
                bl += [bc.u_min, -INF]; bh += [INF, bc.u_max]
                rk += [("bl",) + vkeys[t][1:], ("bh",) + vkeys[t][1:]]
            ex_rows += [Bl, I[nU:nU + nB]]
            ex_lo += [np.array(bl), np.zeros(nB)]
            ex_hi += [np.array(bh), np.full(nB, INF)]
            rk += [("bb",) + vkeys[nU + s_][1:] for s_ in range(nB)]
        if nG:
            ex_rows.append(I[nU + nB:])
            ex_lo.append(np.zeros(nG)); ex_hi.append(np.full(nG, INF))
            rk += [("gb",) + vkeys[nU + nB + s_][1:] for s_ in range(nG)]
        st.A = np.vstack(ex_rows)
        st.row_lo = np.concatenate(ex_lo)
        st.row_hi = np.concatenate(ex_hi)
        st.h = np.concatenate(h)
        st.vkeys = vkeys
        st.rkeys = rk
        st.vcode = self._codes(vkeys)
        st.rcode = self._codes(rk)
        st.vj, st.vk = vj, vk
        st.n_u = nU
        st.ws = None
        return st

    def _bounds(self, st, free):
        nf = len(st.row_src[0])
        shift = np.zeros(st.A.shape[0])
        shift[:nf] = free[st.row_src[0], st.row_src[1]]
        lo = st.row_lo - shift
        hi = st.row_hi - shift
        lo[st.row_lo <= -INF] = -INF
        hi[st.row_hi >= INF] = INF
        ok = True
        if st.free_lo.size:
            # rows without a decision variable must hold at the free response
            fv = free[st.free_src]
            ok = bool(np.all(fv >= st.free_lo - 1e-9) and np.all(fv <= st.free_hi + 1e-9))
        return lo, hi, ok

    def _solve(self, st, lo, hi) -> QpSolution:
        if st.ws is None:
            st.ws = QpWorkspace(st.h, st.A, self.settings)
        warm = self._warm_start(st)
        sol = st.ws.solve(np.zeros(st.A.shape[1]), lo, hi, warm)
        if not sol.optimal:
            raise ControlError(f"QP solver returned {sol.status} "
                               f"(primal {sol.primal_residual:.2e}, dual {sol.dual_residual:.2e})",
                               self._dump(st, lo, hi))
        return sol

    _TAGS = {t: c for c, t in enumerate(("u", "b", "g", "phi", "w", "wl", "wh", "ub", "bl", "bh", "bb", "gb"))}

    def _codes(self, keys) -> np.ndarray:
        """Integer codes with ``code(tag, bus, k) + 1 == code(tag, bus, k + 1)``."""
        stride = self.case.config.horizon + 3
        return np.array([(self._TAGS[t] * (self.case.n + 1) + i) * stride + k for t, i, k in keys],
                        dtype=np.int64)

    @staticmethod
    def _lookup(codes, values, want):
        out = np.zeros(want.size)
        if codes.size == 0:
            return out
        pos = np.minimum(np.searchsorted(codes, want), codes.size - 1)
        hit = codes[pos] == want
        out[hit] = values[pos[hit]]
        return out

    def _warm_start(self, st):
        w = self._warm
        if w is None:
            return None
        # the previous plan shifted one step forward
        z = self._lookup(w["zc"], w["z"], st.vcode + 1)
        y = self._lookup(w["yc"], w["y"], st.rcode + 1)
        return z, y

    def _remember(self, st, sol):
        oz = np.argsort(st.vcode)
        oy = np.argsort(st.rcode)
        self._warm = {"zc": st.vcode[oz], "z": sol.z[oz], "yc": st.rcode[oy], "y": sol.y[oy]}

    def _dump(self, st, lo, hi):
        if self.dump_dir is None:
            return None
        self.dump_dir.mkdir(parents=True, exist_ok=True)
        path = self.dump_dir / "failed_qp.txt"
        return dump_problem(QpProblem(st.h, np.zeros(st.A.shape[1]), st.A, lo, hi), path)


def centralized_control(case: NetworkCase, lam, omega, P_fcst, *,
                        controller: CentralizedController | None = None) -> np.ndarray:
    """First input of the convexified problem at the measured state."""
    controller = controller or CentralizedController(case)
    return controller.control(lam, omega, P_fcst)
