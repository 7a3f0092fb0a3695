"""Closed-loop scenario runner, metrics and reports.

A scenario file is plain ``key = value`` text; relative paths are resolved
against the scenario file's directory::

    case = ieee39.case
    controller = centralized        # none | centralized | distributed | reference_baseline
    duration = 40
    disturbance = sinusoidal        # or constant
    amplitude = 0.25
    period = 40                     # delta(t) = a sin(2 pi t / period) for t < cutoff
    cutoff = 20
    disturbed_buses = 1-29
    forecast = linear_growth        # or exact
    enable_time = 0
    seed = 0

Frequencies are offsets from nominal in Hz throughout.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import Plant, SimulationError
from .mpc import CentralizedController, ControlError
from .netcase import NetworkCase, load_case
from .partition import DistributedController, load_partition, validate_partition
from .refgen import InfeasibleReferenceError, baseline_input
from .steady_state import energy, equilibrium

__all__ = [
    "DATA_DIR",
    "ScenarioError",
    "RunError",
    "GridMismatchError",
    "Scenario",
    "InjectionSignal",
    "parse_scenario",
    "load_scenario",
    "forecast",
    "RunLog",
    "run",
    "summarize",
    "report",
    "write_run",
    "load_run",
]

DATA_DIR = Path(__file__).resolve().parent / "data"
CONTROLLERS = ("none", "centralized", "distributed", "reference_baseline")
FORECASTS = ("exact", "linear_growth")
SUBSTEPS = 10
NOMINAL_HZ = 60.0


class ScenarioError(ValueError):
    pass


class RunError(RuntimeError):
    def __init__(self, msg: str, step: int, dump=None):
        super().__init__(msg)
        self.step = step
        self.dump = dump


class GridMismatchError(ValueError):
    pass


def _bus_list(text: str) -> tuple[int, ...]:
    out = []
    for tok in text.replace(",", " ").split():
        a, sep, b = tok.partition("-")
        try:
            out.extend(range(int(a), int(b) + 1) if sep else [int(a)])
        except ValueError:
            raise ScenarioError(f"bad bus list entry {tok!r}") from None
    return tuple(out)


@dataclass(frozen=True)
class Scenario:
    case: str
    controller: str = "none"
    duration: float = 40.0
    partition: str | None = None
    disturbance: str = "constant"
    amplitude: float = 0.0
    period: float = 40.0
    cutoff: float = 20.0
    disturbed_buses: tuple[int, ...] = ()
    forecast: str = "exact"
    enable_time: float = 0.0
    seed: int = 0
    initial_noise: float = 0.0
    name: str = "scenario"

    def validate(self) -> None:
        if self.controller not in CONTROLLERS:
            raise ScenarioError(f"controller must be one of {CONTROLLERS}, got {self.controller!r}")
        if self.forecast not in FORECASTS:
            raise ScenarioError(f"forecast must be one of {FORECASTS}, got {self.forecast!r}")
        if self.disturbance not in ("constant", "sinusoidal"):
            raise ScenarioError(f"unknown disturbance {self.disturbance!r}")
        if not self.duration > 0:
            raise ScenarioError("duration must be positive")
        if self.enable_time < 0:
            raise ScenarioError("enable_time must be non-negative")
        if self.controller == "distributed" and not self.partition:
            raise ScenarioError("distributed control needs a partition")
        if self.disturbance == "sinusoidal" and not self.period > 0:
            raise ScenarioError("disturbance period must be positive")
        if self.initial_noise < 0:
            raise ScenarioError("initial_noise must be non-negative")


_FIELDS = {
    "case": str, "controller": str, "duration": float, "partition": str, "disturbance": str,
    "amplitude": float, "period": float, "cutoff": float, "disturbed_buses": _bus_list,
    "forecast": str, "enable_time": float, "seed": int, "initial_noise": float, "name": str,
}


def parse_scenario(text: str, base_dir=None, name: str = "scenario") -> Scenario:
    vals: dict = {"name": name}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or key not in _FIELDS:
            raise ScenarioError(f"line {lineno}: unknown or malformed entry {line!r}")
        try:
            vals[key] = _FIELDS[key](value)
        except ValueError:
            raise ScenarioError(f"line {lineno}: bad value for {key}: {value!r}") from None
    if "case" not in vals:
        raise ScenarioError("scenario must name a case file")
    if base_dir is not None:
        for key in ("case", "partition"):
            if vals.get(key) and not Path(vals[key]).is_absolute():
                vals[key] = str((Path(base_dir) / vals[key]).resolve())
    sc = Scenario(**vals)
    sc.validate()
    return sc


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario file {path}: {exc}") from exc
    return parse_scenario(text, path.parent, name=path.stem)


class InjectionSignal:
    """``p_i(t) = (1 + delta(t)) p_i(0)`` on disturbed buses, ``p_i(0)`` elsewhere."""

    def __init__(self, p0, scenario: Scenario):
        self.p0 = np.asarray(p0, dtype=float)
        n = self.p0.size
        self.mask = np.zeros(n)
        if scenario.disturbance == "sinusoidal":
            bad = [i for i in scenario.disturbed_buses if not 1 <= i <= n]
            if bad:
                raise ScenarioError(f"disturbed buses {bad} not in the case")
            self.mask[np.array(scenario.disturbed_buses, dtype=int) - 1] = 1.0
        self.a = scenario.amplitude if scenario.disturbance == "sinusoidal" else 0.0
        self.omega = 2.0 * np.pi / scenario.period
        self.cutoff = scenario.cutoff

    def delta(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t < self.cutoff, self.a * np.sin(self.omega * t), 0.0)

    def __call__(self, t) -> np.ndarray:
        """Injections at time(s) ``t``: shape ``(n,)`` for scalar, ``(n, K)`` for a vector."""
        d = self.delta(t)
        return self.p0[:, None] * (1.0 + self.mask[:, None] * np.atleast_1d(d)[None, :]) if np.ndim(t) \
            else self.p0 * (1.0 + self.mask * float(d))


def forecast(model: str, signal, t: float, N: int, T: float) -> np.ndarray:
    """Forecast matrix ``n x N``; column ``k`` predicts ``p(t + kT)``."""
    k = np.arange(N)
    P = signal(t + k * T)
    if model == "exact":
        return P
    if model == "linear_growth":
        return P * (1.0 + k * T)[None, :]
    raise ScenarioError(f"unknown forecast model {model!r}")


@dataclass
class RunLog:
    """Closed-loop trajectories sampled at every control instant."""

    t: np.ndarray
    lam: np.ndarray
    omega: np.ndarray
    u: np.ndarray
    V: np.ndarray
    dp_total: np.ndarray
    case: NetworkCase
    scenario: Scenario
    meta: dict = field(default_factory=dict)

    @property
    def flags(self) -> np.ndarray:
        """Per constrained bus, True where the frequency is outside its safe interval."""
        lo = self.case.control_array("w_lo", self.case.w_idx)
        hi = self.case.control_array("w_hi", self.case.w_idx)
        w = self.omega[:, self.case.w_idx]
        return (w < lo) | (w > hi)


def _make_controller(case: NetworkCase, sc: Scenario, dump_dir):
    if sc.controller == "centralized":
        return CentralizedController(case, dump_dir=dump_dir)
    if sc.controller == "distributed":
        part = load_partition(sc.partition, case)
        validate_partition(case, part).raise_if_invalid()
        return DistributedController(case, part, dump_dir=dump_dir)
    return None


def run(scenario: Scenario, *, dump_dir=None, progress=None) -> RunLog:
    """Simulate the closed loop; one log row per control instant including ``t = duration``."""
    scenario.validate()
    case = load_case(scenario.case)
    T, N = case.config.period, case.config.horizon
    K = int(round(scenario.duration / T))
    if abs(K * T - scenario.duration) > 1e-9 * scenario.duration:
        raise ScenarioError("duration must be a multiple of the control period")
    signal = InjectionSignal(case.p0, scenario)
    eq = equilibrium(case)
    plant = Plant(case)
    ctrl = _make_controller(case, scenario, dump_dir)

    lam = eq.angle_diffs.copy()
    wg = np.full(int(case.inertial.sum()), eq.sync_freq)
    if scenario.initial_noise > 0:
        rng = np.random.default_rng(scenario.seed)
        wg = wg + scenario.initial_noise * rng.standard_normal(wg.size)
    u = np.zeros(case.n)
    p = signal(0.0)
    omega = plant.frequencies(lam, wg, u, p)

    t = np.arange(K + 1) * T
    Lam = np.empty((K + 1, case.m))
    Om = np.empty((K + 1, case.n))
    Us = np.zeros((K + 1, case.n))
    V = np.empty(K + 1)
    h = T / SUBSTEPS
    paths: dict[str, int] = {}
    started = time.perf_counter()
    for k in range(K + 1):
        tk = t[k]
        p = signal(tk)
        # measured frequencies: algebraic buses still see the previously held input
        omega = plant.frequencies(lam, wg, u, p)
        if scenario.controller == "none" or tk < scenario.enable_time - 1e-12:
            u = np.zeros(case.n)
        elif scenario.controller == "reference_baseline":
            u = baseline_input(case, lam, omega, p)
        else:
            P = forecast(scenario.forecast, signal, tk, N, T)
            try:
                u = ctrl.control(lam, omega, P)
            except (ControlError, InfeasibleReferenceError) as exc:
                raise RunError(f"control failed at step {k} (t = {tk:.6g} s): {exc}", k,
                               getattr(exc, "dump", None)) from exc
            if scenario.controller == "centralized":
                paths[ctrl.info.path] = paths.get(ctrl.info.path, 0) + 1
        Lam[k] = lam
        Om[k] = plant.frequencies(lam, wg, u, p)
        Us[k] = u
        V[k] = energy(case, eq, lam, wg)
        if k == K:
            break
        try:
            lam, wg = plant.advance(lam, wg, u, p, h, SUBSTEPS, step_index=k)
        except SimulationError as exc:
            raise RunError(str(exc), k) from exc
        if progress is not None:
            progress(k, K)
    dp = (signal(t) - case.p0[:, None]).sum(axis=0)
    meta = {"wall_time": time.perf_counter() - started, "steps": K, "paths": paths,
            "sync_freq": eq.sync_freq}
    return RunLog(t, Lam, Om, Us, V, dp, case, scenario, meta)


def _trapz(y, t) -> float:
    return float(np.trapezoid(y, t)) if hasattr(np, "trapezoid") else float(np.trapz(y, t))


def summarize(log: RunLog) -> dict:
    """Scalar metrics of one run (integrals by the trapezoid rule on the log grid)."""
    case, t = log.case, log.t
    ui, wi = case.u_idx, case.w_idx
    c = case.control_array("c")
    lo = case.control_array("w_lo", wi)
    hi = case.control_array("w_hi", wi)
    tlo = case.control_array("thr_lo")
    thi = case.control_array("thr_hi")
    w = log.omega[:, wi]
    inside = (w >= lo) & (w <= hi)
    on = t >= log.scenario.enable_time - 1e-12
    first_entry, exits = {}, {}
    for j, i in enumerate(wi):
        hits = np.flatnonzero(inside[:, j] & on)
        first_entry[int(i) + 1] = float(t[hits[0]]) if hits.size else None
        if hits.size:
            seg = inside[hits[0]:, j]
            exits[int(i) + 1] = int(np.sum(seg[:-1] & ~seg[1:]))
        else:
            exits[int(i) + 1] = 0
    initially_safe = inside[0]
    viol = log.flags
    wu = log.omega[:, ui]
    uu = log.u[:, ui]
    band = (wu > tlo) & (wu < thi)
    sign_bad = int(np.sum(band & (uu != 0.0)) + np.sum(~band & (wu * uu > 0.0)))
    p_end = InjectionSignal(case.p0, log.scenario)(float(t[-1]))
    w_inf = float(np.sum(p_end) / np.sum(case.E))
    return {
        "name": log.scenario.name,
        "controller": log.scenario.controller,
        "bound": float(np.min(hi)) if wi.size else None,
        "int_abs_u": {int(i) + 1: _trapz(np.abs(log.u[:, i]), t) for i in ui},
        "int_u_total": _trapz(log.u.sum(axis=1), t),
        "int_dp_total": _trapz(log.dp_total, t),
        "cost": _trapz((c * log.u[:, ui] ** 2).sum(axis=1), t),
        "omega_max": {int(i) + 1: float(log.omega[:, i].max()) for i in wi},
        "omega_min": {int(i) + 1: float(log.omega[:, i].min()) for i in wi},
        "violations": {int(i) + 1: int(viol[:, j].sum()) for j, i in enumerate(wi)},
        "violations_safe": int(viol[:, initially_safe].sum()),
        "first_entry": first_entry,
        "exits_after_entry": exits,
        "sign_violations": sign_bad,
        "final_residual": float(np.max(np.abs(log.omega[-1] - w_inf))),
    }


def _fmt(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def report(logs, path=None) -> str:
    """Summary table of one or more runs over a common time grid."""
    logs = list(logs)
    if not logs:
        raise ValueError("no logs to report")
    t0 = logs[0].t
    for lg in logs[1:]:
        if lg.t.shape != t0.shape or not np.allclose(lg.t, t0, rtol=0, atol=1e-12):
            raise GridMismatchError(f"run {lg.scenario.name} uses a different time grid")
    sums = [summarize(lg) for lg in logs]
    lines = []
    head = ["run", "controller", "bound", "int_u_total", "int_dp_total", "cost", "violations",
            "first_entry", "final_residual"]
    lines.append("\t".join(head))
    for s in sums:
        fe = ",".join(f"{b}:{_fmt(v)}" for b, v in s["first_entry"].items())
        vi = ",".join(f"{b}:{v}" for b, v in s["violations"].items())
        lines.append("\t".join([s["name"], s["controller"], _fmt(s["bound"]), _fmt(s["int_u_total"]),
                                _fmt(s["int_dp_total"]), _fmt(s["cost"]), vi, fe, _fmt(s["final_residual"])]))
    for s in sums:
        lines.append(f"{s['name']}: int|u_i| " + ", ".join(f"{b}:{_fmt(v)}" for b, v in s["int_abs_u"].items())
                     + f"; omega range " + ", ".join(
                         f"{b}:[{_fmt(s['omega_min'][b] + NOMINAL_HZ)}, {_fmt(s['omega_max'][b] + NOMINAL_HZ)}] Hz"
                         for b in s["omega_min"]))
    bounded = [s for s in sums if s["bound"] is not None]
    if len({s["bound"] for s in bounded}) > 1:
        order = sorted(bounded, key=lambda s: s["bound"])
        dec = all(a["int_u_total"] > b["int_u_total"] for a, b in zip(order, order[1:]))
        lines.append("int_u_total by bound: " + " > ".join(
            f"{_fmt(s['int_u_total'])} ({_fmt(s['bound'])} Hz)" for s in order)
            + ("  [strictly decreasing in bound width]" if dec else "  [NOT strictly decreasing]"))
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def write_run(log: RunLog, out_dir) -> Path:
    """Write ``trace.csv``, ``summary.txt`` and ``meta.json`` to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    case = log.case
    head = (["t"] + [f"lambda_{k}" for k in range(1, case.m + 1)] + [f"omega_{i}" for i in range(1, case.n + 1)]
            + [f"u_{i}" for i in range(1, case.n + 1)] + ["V"])
    data = np.column_stack([log.t, log.lam, log.omega, log.u, log.V])
    np.savetxt(out / "trace.csv", data, delimiter=",", header=",".join(head), comments="", fmt="%.12g")
    report([log], out / "summary.txt")
    meta = dict(log.meta)
    meta["scenario"] = asdict(log.scenario)
    (out / "meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
    return out


def load_run(path) -> RunLog:
    """Read a run written by :func:`write_run` (directory or its ``trace.csv``)."""
    path = Path(path)
    d = path if path.is_dir() else path.parent
    meta = json.loads((d / "meta.json").read_text(encoding="utf-8"))
    sd = meta.pop("scenario")
    sd["disturbed_buses"] = tuple(sd["disturbed_buses"])
    sc = Scenario(**sd)
    case = load_case(sc.case)
    data = np.loadtxt(d / "trace.csv", delimiter=",", skiprows=1, ndmin=2)
    m, n = case.m, case.n
    t = data[:, 0]
    lam = data[:, 1:1 + m]
    om = data[:, 1 + m:1 + m + n]
    u = data[:, 1 + m + n:1 + m + 2 * n]
    V = data[:, -1]
    dp = (InjectionSignal(case.p0, sc)(t) - case.p0[:, None]).sum(axis=0)
    return RunLog(t, lam, om, u, V, dp, case, sc, meta)
