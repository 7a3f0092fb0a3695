"""Acceptance suite: one PASS/FAIL line per criterion.

The closed-loop runs are shared through the session ``runs`` cache, so the
39-bus scenarios are simulated once each.
"""

import time

import numpy as np

from freqmpc import harness
from freqmpc.dynamics import full_frequencies
from freqmpc.harness import DATA_DIR, load_scenario, run, summarize
from freqmpc.mpc import LOWER, UPPER, CentralizedController, build_qcvx, classify_branches
from freqmpc.mpc import phi_cvx_contains, phi_disc_contains
from freqmpc.partition import DistributedController, load_partition
from freqmpc.qp import OPTIMAL, PRIMAL_INFEASIBLE, QpProblem, kkt_check, solve
from freqmpc.refgen import generate_reference
from freqmpc.steady_state import equilibrium, phi_contains
from oracles import projected_gradient_qp, random_qp

CLOSED_LOOP = ["ieee39_centralized", "ieee39_distributed", "ieee39_delayed", "ieee39_bound010",
               "ieee39_bound005", "ieee9_centralized", "ieee9_distributed", "ieee9_baseline"]


def verdict(capsys, tag, ok, detail):
    with capsys.disabled():
        print(f"\n{tag} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, detail


# -- convexification soundness ------------------------------------------------

def _candidate(rng, plan, Om_ref, lo, hi):
    """Trajectory pair that mostly follows ``plan``, sometimes breaks it."""
    nu, N = plan.shape
    Om = Om_ref.copy()
    U = np.zeros((nu, N))
    for j in range(nu):
        for k in range(N):
            if rng.random() < 0.05:
                Om[j, k] = rng.uniform(-0.3, 0.3)
                U[j, k] = rng.choice([0.0, rng.normal()])
                continue
            edge = rng.random() < 0.15
            if plan[j, k] == UPPER:
                Om[j, k] = hi[j] if edge else hi[j] + rng.uniform(0, 0.2)
                U[j, k] = 0.0 if rng.random() < 0.15 else -rng.exponential()
            elif plan[j, k] == LOWER:
                Om[j, k] = lo[j] if edge else lo[j] - rng.uniform(0, 0.2)
                U[j, k] = 0.0 if rng.random() < 0.15 else rng.exponential()
            else:
                Om[j, k] = rng.uniform(-0.3, 0.3)
    return Om, U


def test_ac1_convexification_soundness(capsys, two_gen, ieee9, two_bus):
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    pairs = inside = counter = ref_out = 0
    cases = [c.with_horizon(None, 1e-3) for c in (two_bus, two_gen, ieee9)]
    eqs = [equilibrium(c) for c in cases]
    while pairs < 12000:
        ci = int(rng.integers(len(cases)))
        case, eq = cases[ci], eqs[ci]
        N = int(rng.integers(1, 11))
        case = case.with_horizon(N)
        wg = eq.sync_freq + rng.uniform(-0.19, 0.19, int(case.inertial.sum()))
        om = full_frequencies(case, eq.angle_diffs, wg, np.zeros(case.n), case.p0)
        P = case.p0[:, None] * (1 + 0.5 * rng.uniform(-1, 1, (case.n, 1))) * np.ones((1, N))
        ref = generate_reference(case, eq.angle_diffs, om, P)
        if not ref.feasible:
            continue
        plan = classify_branches(case, ref.Omega)
        ref_out += not phi_cvx_contains(plan, ref.Omega, ref.U, case)
        lo, hi = case.control_array("thr_lo"), case.control_array("thr_hi")
        for _ in range(20):
            Om_c, U_c = _candidate(rng, plan, ref.Omega[case.u_idx], lo, hi)
            Om = ref.Omega.copy()
            Om[case.u_idx] = Om_c
            U = np.zeros((case.n, N))
            U[case.u_idx] = U_c
            pairs += 1
            if phi_cvx_contains(plan, Om, U, case, tol=0.0):
                inside += 1
                counter += not phi_disc_contains(case, Om, U)
    elapsed = time.perf_counter() - start
    ok = counter == 0 and ref_out == 0 and inside >= 1000 and elapsed <= 30
    verdict(capsys, "AC1", ok, f"{pairs} pairs, {inside} in the convex set, {counter} counterexamples, "
                               f"{ref_out} references outside, {elapsed:.1f} s")


# -- reference qualification --------------------------------------------------

def _safe_states(case, rng, count):
    eq = equilibrium(case)
    lo, hi = case.control_array("w_lo", case.w_idx), case.control_array("w_hi", case.w_idx)
    r = 0.9 * eq.r_bar
    out = []
    while len(out) < count:
        lam = eq.angle_diffs + case.D @ rng.normal(scale=0.05, size=case.n)
        wg = eq.sync_freq + rng.uniform(-0.2, 0.2, int(case.inertial.sum()))
        om = full_frequencies(case, lam, wg, np.zeros(case.n), case.p0)
        w = om[case.w_idx]
        if np.all((w >= lo) & (w <= hi)) and phi_contains(case, eq, r, lam, wg):
            out.append((lam, om))
    return out


def test_ac2_reference_qualification(capsys, two_gen, ieee9):
    rng = np.random.default_rng(202)
    start = time.perf_counter()
    infeasible, worst, total = 0, 0.0, 0
    for base in (two_gen, ieee9):
        case = base.with_horizon(None, 1e-3)
        N = case.config.horizon
        for lam, om in _safe_states(case, rng, 100):
            P = case.p0[:, None] * (1 + 0.3 * rng.uniform(-1, 1, (case.n, 1))) * np.ones((1, N))
            ref = generate_reference(case, lam, om, P)
            total += 1
            if not ref.feasible:
                infeasible += 1
                continue
            conv = build_qcvx(case, lam, om, P, ref, guard=False)
            z = conv.layout.pack(ref.qualification(case), case.u_idx)
            worst = max(worst, conv.violations(z)[0])
    elapsed = time.perf_counter() - start
    ok = infeasible == 0 and worst <= 1e-9 and elapsed <= 60
    verdict(capsys, "AC2", ok, f"{total} states, {infeasible} infeasible references, "
                               f"worst qualification residual {worst:.2e}, {elapsed:.1f} s")


# -- QP correctness -----------------------------------------------------------

def test_ac3_qp_correctness(capsys):
    rng = np.random.default_rng(303)
    start = time.perf_counter()
    worst_gap = worst_kkt = 0.0
    not_optimal = 0
    for trial in range(200):
        h, q, A, l, u = random_qp(rng, bound_rows=bool(trial % 3 == 0))
        prob = QpProblem(h, q, A, l, u)
        sol = solve(prob)
        not_optimal += sol.status != OPTIMAL
        _, ref, _ = projected_gradient_qp(h, q, A, l, u)
        worst_gap = max(worst_gap, abs(sol.objective - ref))
        rep = kkt_check(prob, sol)
        worst_kkt = max(worst_kkt, rep.stationarity, rep.infeasibility, rep.complementarity)
    missed = 0
    for _ in range(20):
        n = int(rng.integers(2, 31))
        a = rng.normal(size=n)
        A = np.vstack([a, a, rng.normal(size=(3, n))])
        l = np.array([1.0, -np.inf, -np.inf, -np.inf, -np.inf])
        u = np.array([np.inf, 0.5, np.inf, np.inf, np.inf])
        missed += solve(QpProblem(rng.uniform(0.2, 5, n), rng.normal(size=n), A, l, u)).status != PRIMAL_INFEASIBLE
    elapsed = time.perf_counter() - start
    ok = not_optimal == 0 and worst_gap <= 1e-6 and worst_kkt <= 1e-5 and missed == 0 and elapsed <= 60
    verdict(capsys, "AC3", ok, f"gap {worst_gap:.2e}, KKT {worst_kkt:.2e}, {not_optimal} not optimal, "
                               f"{missed} infeasible problems missed, {elapsed:.1f} s")


# -- closed-loop criteria -----------------------------------------------------

def test_ac5_frequency_invariance(capsys, runs):
    details, ok = [], True
    for name in ("ieee39_centralized", "ieee39_distributed"):
        log = runs.get(name)
        s = summarize(log)
        wall = log.meta["wall_time"]
        ok &= s["violations_safe"] == 0 and wall <= 600
        details.append(f"{name}: {s['violations_safe']} violations, "
                       f"min omega {min(s['omega_min'].values()):+.4f} Hz, {wall:.0f} s")
    open_loop = summarize(runs.get("ieee39_open"))
    ok &= open_loop["violations_safe"] > 0
    details.append(f"open loop: {open_loop['violations_safe']} violations")
    verdict(capsys, "AC5", ok, "; ".join(details))


def test_ac6_stability_and_vanishing_input(capsys, runs):
    details, ok = [], True
    for name in ("ieee39_centralized", "ieee39_distributed"):
        log = runs.get(name)
        s = summarize(log)
        late = log.t >= 30.0 - 1e-9
        after = log.t >= log.scenario.cutoff - 1e-9
        rise = float(np.max(np.diff(log.V[after]))) if after.sum() > 1 else 0.0
        quiet = not log.u[late].any()
        ok &= s["final_residual"] <= 1e-3 and quiet and rise <= 1e-6
        details.append(f"{name}: residual {s['final_residual']:.2e}, u zero on [30, 40] {quiet}, "
                       f"largest V increase {rise:.2e}")
    verdict(capsys, "AC6", ok, "; ".join(details))


def test_ac7_attraction_from_outside(capsys, runs):
    log = runs.get("ieee39_delayed")
    s = summarize(log)
    lo = log.case.control_array("w_lo", log.case.w_idx)
    enable = np.searchsorted(log.t, log.scenario.enable_time - 1e-12)
    below = bool(np.all(log.omega[enable, log.case.w_idx] < lo))
    entries = s["first_entry"]
    ok = below and all(v is not None for v in entries.values()) and not any(s["exits_after_entry"].values())
    verdict(capsys, "AC7", ok, f"below bound at enable {below}, first entry {entries}, "
                               f"exits {s['exits_after_entry']}")


def test_ac8_bound_tightness_trend(capsys, runs):
    vals = [(summarize(runs.get(n))["bound"], summarize(runs.get(n))["int_u_total"])
            for n in ("ieee39_centralized", "ieee39_bound010", "ieee39_bound005")]
    ok = vals[0][1] < vals[1][1] < vals[2][1] and [b for b, _ in vals] == [0.2, 0.1, 0.05]
    verdict(capsys, "AC8", ok, ", ".join(f"bound {b} Hz: {v:.4f}" for b, v in vals))


def test_ac9_cost_ranking(capsys, runs):
    costs = {n: summarize(runs.get(f"ieee9_{n}"))["cost"] for n in ("centralized", "distributed", "baseline")}
    ok = costs["centralized"] <= costs["distributed"] <= costs["baseline"]
    verdict(capsys, "AC9", ok, ", ".join(f"{k} {v:.6f}" for k, v in costs.items()))


class _Lockstep:
    """Centralized controller that also evaluates the single-region controller."""

    def __init__(self, case):
        self.cen = CentralizedController(case)
        self.dis = DistributedController(case, load_partition(DATA_DIR / "ieee39_single.part", case))
        self.worst = 0.0
        self.active = 0

    @property
    def info(self):
        return self.cen.info

    def control(self, lam, omega, P):
        u = self.cen.control(lam, omega, P)
        v = self.dis.control(lam, omega, P)
        self.worst = max(self.worst, float(np.max(np.abs(u - v))))
        self.active += bool(u.any())
        return u


def test_ac10_single_region_equivalence(capsys, monkeypatch):
    sc = load_scenario(DATA_DIR / "scenarios" / "ieee39_centralized.scn")
    sc = type(sc)(**{**sc.__dict__, "duration": 5.0, "initial_noise": 0.1, "seed": 7})
    made = []

    def make(case, scenario, dump_dir):
        made.append(_Lockstep(case))
        return made[0]

    monkeypatch.setattr(harness, "_make_controller", make)
    run(sc)
    ls = made[0]
    ok = ls.worst <= 1e-7 and ls.active > 0
    verdict(capsys, "AC10", ok, f"{sc.duration:.0f} s run, {ls.active} steps with "
                                f"nonzero input, largest difference {ls.worst:.2e}")


def test_ac4_zero_band_and_sign_law(capsys, runs):
    bad = {}
    for name in CLOSED_LOOP:
        s = summarize(runs.get(name))
        bad[name] = s["sign_violations"]
    ok = not any(bad.values())
    verdict(capsys, "AC4", ok, f"{len(bad)} runs checked, violations {bad}")
