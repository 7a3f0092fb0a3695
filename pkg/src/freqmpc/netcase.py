"""Network case description: topology, physical parameters, controller setup.

A case is loaded from a small sectioned text format::

    # comment
    [buses]
    # id   M     E     p0
    1      1.0   1.0   0.5
    2      0.0   1.0  -0.5

    [lines]
    # id  from  to   b
    1     1     2    1.0

    [control]
    controlled = 1 2
    freq_constrained = 1
    default thr_lo=-0.1 thr_hi=0.1 c=1 d=0 e=500 xi=1 gamma_hi=1 gamma_lo=1
    bus 1 c=2 w_lo=-0.2 w_hi=0.2 delta=0.05

    [horizon]
    N = 150
    T = 0.001

Bus ids must be ``1..n`` in file order and line ids ``1..m`` in file order, so
that bus ``i`` sits at array index ``i - 1``.  The ``from`` end of every line is
its positive end in the incidence matrix.  ``default`` rows set per-bus
controller parameters for every controlled bus; ``bus`` rows override them.
Frequencies (bounds, thresholds) are offsets from nominal in Hz; everything
else is per-unit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

__all__ = [
    "Bus",
    "Line",
    "BusControl",
    "ControlConfig",
    "NetworkCase",
    "CaseFormatError",
    "CaseValidationError",
    "load_case",
    "parse_case",
    "dump_case",
    "incidence_matrix",
    "laplacian",
    "is_connected",
]

BUS_KEYS = (
    "thr_lo", "thr_hi", "c", "d", "e", "xi", "gamma_hi", "gamma_lo",
    "u_min", "u_max", "w_lo", "w_hi", "delta", "guard",
)


class CaseFormatError(ValueError):
    """Raised when a case file cannot be parsed."""


class CaseValidationError(ValueError):
    """Raised when a parsed case violates a structural invariant."""


@dataclass(frozen=True)
class Bus:
    id: int
    inertia: float
    damping: float
    base_injection: float


@dataclass(frozen=True)
class Line:
    id: int
    from_bus: int
    to_bus: int
    susceptance: float


@dataclass(frozen=True)
class BusControl:
    """Controller parameters of one controlled bus.

    ``w_lo``/``w_hi``/``delta`` are only meaningful for frequency-constrained
    buses; ``u_min``/``u_max`` default to an unbounded input.  ``guard``
    tightens the hard frequency bound of the first predicted step to absorb
    plant/model mismatch (0 keeps the bound literal).
    """

    thr_lo: float
    thr_hi: float
    c: float
    d: float
    e: float
    xi: int
    gamma_hi: float
    gamma_lo: float
    u_min: float = -math.inf
    u_max: float = math.inf
    w_lo: float = math.nan
    w_hi: float = math.nan
    delta: float = math.nan
    guard: float = 0.0


@dataclass(frozen=True)
class ControlConfig:
    controlled: tuple[int, ...]
    freq_constrained: tuple[int, ...]
    params: Mapping[int, BusControl]
    horizon: int
    period: float

    def with_horizon(self, horizon: int | None = None, period: float | None = None) -> "ControlConfig":
        return replace(
            self,
            horizon=self.horizon if horizon is None else int(horizon),
            period=self.period if period is None else float(period),
        )


def _frozen(a) -> np.ndarray:
    a = np.asarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class NetworkCase:
    """Immutable network case.  Construct through :func:`NetworkCase.build`
    (or :func:`load_case`) so that every invariant is checked."""

    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    config: ControlConfig
    name: str = field(default="case", compare=False)

    @classmethod
    def build(cls, buses: Iterable[Bus], lines: Iterable[Line], config: ControlConfig,
              name: str = "case") -> "NetworkCase":
        case = cls(tuple(buses), tuple(lines), config, name)
        case.validate()
        return case

    def with_horizon(self, horizon: int | None = None, period: float | None = None) -> "NetworkCase":
        """Copy of the case with a different horizon and/or period."""
        case = replace(self, config=self.config.with_horizon(horizon, period))
        case.validate()
        return case

    # -- sizes and per-bus arrays -------------------------------------------
    @property
    def n(self) -> int:
        return len(self.buses)

    @property
    def m(self) -> int:
        return len(self.lines)

    @cached_property
    def M(self) -> np.ndarray:
        return _frozen([b.inertia for b in self.buses])

    @cached_property
    def E(self) -> np.ndarray:
        return _frozen([b.damping for b in self.buses])

    @cached_property
    def p0(self) -> np.ndarray:
        return _frozen([b.base_injection for b in self.buses])

    @cached_property
    def b(self) -> np.ndarray:
        return _frozen([ln.susceptance for ln in self.lines])

    @cached_property
    def D(self) -> np.ndarray:
        return _frozen(incidence_matrix(self))

    @cached_property
    def DtYb(self) -> np.ndarray:
        """``D^T Y_b`` (n x m): maps line quantities to nodal sums."""
        return _frozen(self.D.T * self.b)

    @cached_property
    def range_projector(self) -> np.ndarray:
        """Orthogonal projector onto range(D) (angle differences realizable by angles)."""
        return _frozen(self.D @ np.linalg.pinv(self.D))

    @cached_property
    def inertial(self) -> np.ndarray:
        return _frozen(self.M > 0)

    @cached_property
    def u_idx(self) -> np.ndarray:
        """Array indices of the controlled buses, ascending."""
        return _frozen(np.array(sorted(i - 1 for i in self.config.controlled), dtype=int))

    @cached_property
    def w_idx(self) -> np.ndarray:
        """Array indices of the frequency-constrained buses, ascending."""
        return _frozen(np.array(sorted(i - 1 for i in self.config.freq_constrained), dtype=int))

    def control_array(self, key: str, idx: np.ndarray | None = None) -> np.ndarray:
        """Per-bus controller parameter ``key`` for buses ``idx`` (default: all controlled)."""
        idx = self.u_idx if idx is None else idx
        return np.array([getattr(self.config.params[i + 1], key) for i in idx], dtype=float)

    # -- validation ---------------------------------------------------------
    def validate(self) -> None:
        n = self.n
        if n == 0:
            raise CaseValidationError("case has no buses")
        for k, bus in enumerate(self.buses):
            if bus.id != k + 1:
                raise CaseValidationError(f"bus ids must be 1..n in order (got {bus.id} at position {k + 1})")
            if not bus.damping > 0:
                raise CaseValidationError(f"damping must be positive (bus {bus.id})")
            if not bus.inertia >= 0:
                raise CaseValidationError(f"inertia must be non-negative (bus {bus.id})")
            if not math.isfinite(bus.base_injection):
                raise CaseValidationError(f"injection must be finite (bus {bus.id})")
        if not any(bus.inertia > 0 for bus in self.buses):
            raise CaseValidationError("at least one bus must have positive inertia")
        pairs = set()
        for k, ln in enumerate(self.lines):
            if ln.id != k + 1:
                raise CaseValidationError(f"line ids must be 1..m in order (got {ln.id} at position {k + 1})")
            for end in (ln.from_bus, ln.to_bus):
                if not 1 <= end <= n:
                    raise CaseValidationError(f"line {ln.id} references unknown bus {end}")
            if ln.from_bus == ln.to_bus:
                raise CaseValidationError(f"line {ln.id} is a self-loop")
            key = frozenset((ln.from_bus, ln.to_bus))
            if key in pairs:
                raise CaseValidationError(f"line {ln.id} duplicates an existing bus pair")
            pairs.add(key)
            if not ln.susceptance > 0:
                raise CaseValidationError(f"susceptance must be positive (line {ln.id})")
        if not is_connected(n, [(ln.from_bus - 1, ln.to_bus - 1) for ln in self.lines]):
            raise CaseValidationError("network graph must be connected")
        _validate_config(self.config, n)


def _validate_config(cfg: ControlConfig, n: int) -> None:
    ids = set(range(1, n + 1))
    iu, iw = set(cfg.controlled), set(cfg.freq_constrained)
    if not iu <= ids:
        raise CaseValidationError(f"controlled set references unknown buses {sorted(iu - ids)}")
    if not iw <= iu:
        raise CaseValidationError(f"frequency-constrained buses must be controlled: {sorted(iw - iu)}")
    if set(cfg.params) != iu:
        raise CaseValidationError("controller parameters must be given for exactly the controlled buses")
    for i in sorted(iu):
        p = cfg.params[i]
        if not p.thr_lo < 0 < p.thr_hi:
            raise CaseValidationError(f"thresholds must satisfy thr_lo < 0 < thr_hi (bus {i})")
        if not p.c > 0:
            raise CaseValidationError(f"weight c must be positive (bus {i})")
        if not p.d >= 0:
            raise CaseValidationError(f"weight d must be non-negative (bus {i})")
        if not p.e > 0:
            raise CaseValidationError(f"weight e must be positive (bus {i})")
        if p.xi not in (0, 1):
            raise CaseValidationError(f"soft flag xi must be 0 or 1 (bus {i})")
        if not (p.gamma_hi > 0 and p.gamma_lo > 0):
            raise CaseValidationError(f"reference gains must be positive (bus {i})")
        if p.xi == 0 or p.d > 0:
            if not (math.isfinite(p.u_min) and math.isfinite(p.u_max)):
                raise CaseValidationError(f"input bounds required when xi = 0 or d > 0 (bus {i})")
        if not p.u_min < p.u_max:
            raise CaseValidationError(f"input bounds must satisfy u_min < u_max (bus {i})")
        if i in iw:
            if not (math.isfinite(p.w_lo) and math.isfinite(p.w_hi)):
                raise CaseValidationError(f"safe bounds required for frequency-constrained bus {i}")
            if not p.w_lo < p.thr_lo < 0 < p.thr_hi < p.w_hi:
                raise CaseValidationError(
                    f"need w_lo < thr_lo < 0 < thr_hi < w_hi (bus {i})")
            if not 0 < p.delta < p.w_hi - p.w_lo:
                raise CaseValidationError(f"margin delta must lie in (0, w_hi - w_lo) (bus {i})")
            if not 0 <= p.guard < min(p.thr_lo - p.w_lo, p.w_hi - p.thr_hi):
                raise CaseValidationError(f"guard must lie in [0, distance from bound to threshold) (bus {i})")
    if cfg.horizon < 1:
        raise CaseValidationError("horizon N must be at least 1")
    if not cfg.period > 0:
        raise CaseValidationError("period T must be positive")


def is_connected(n: int, edges: Iterable[tuple[int, int]]) -> bool:
    """Connectivity of an undirected graph on nodes ``0..n-1``."""
    edges = list(edges)
    if n <= 1:
        return True
    if not edges:
        return False
    r, c = np.array(edges).T
    adj = csr_matrix((np.ones(len(edges)), (r, c)), shape=(n, n))
    ncomp, _ = connected_components(adj, directed=False)
    return ncomp == 1


def incidence_matrix(case: NetworkCase) -> np.ndarray:
    """Signed m x n incidence matrix: +1 at the from-bus, -1 at the to-bus."""
    D = np.zeros((case.m, case.n))
    for k, ln in enumerate(case.lines):
        D[k, ln.from_bus - 1] = 1.0
        D[k, ln.to_bus - 1] = -1.0
    return D


def laplacian(case: NetworkCase) -> np.ndarray:
    D = case.D
    return D.T @ (case.b[:, None] * D)


# -- text format ---------------------------------------------------------------

def _num(tok: str, where: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise CaseFormatError(f"{where}: expected a number, got {tok!r}") from None


def _int(tok: str, where: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise CaseFormatError(f"{where}: expected an integer, got {tok!r}") from None


def _keyvals(tokens: list[str], where: str) -> dict[str, float]:
    out = {}
    for tok in tokens:
        key, sep, val = tok.partition("=")
        if not sep or key not in BUS_KEYS:
            raise CaseFormatError(f"{where}: bad parameter {tok!r}")
        out[key] = _num(val, where)
    return out


def _sections(text: str) -> dict[str, list[tuple[int, list[str]]]]:
    sections: dict[str, list[tuple[int, list[str]]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise CaseFormatError(f"line {lineno}: malformed section header {raw!r}")
            current = line[1:-1].strip().lower()
            if current in sections:
                raise CaseFormatError(f"line {lineno}: duplicate section [{current}]")
            sections[current] = []
            continue
        if current is None:
            raise CaseFormatError(f"line {lineno}: content before first section")
        sections[current].append((lineno, line.replace("=", " = ").split() if current == "horizon" else line.split()))
    return sections


def parse_case(text: str, name: str = "case") -> NetworkCase:
    secs = _sections(text)
    for required in ("buses", "lines", "control", "horizon"):
        if required not in secs:
            raise CaseFormatError(f"missing section [{required}]")

    buses = []
    for lineno, toks in secs["buses"]:
        where = f"line {lineno}"
        if len(toks) != 4:
            raise CaseFormatError(f"{where}: bus rows need 4 fields (id M E p0)")
        buses.append(Bus(_int(toks[0], where), _num(toks[1], where), _num(toks[2], where), _num(toks[3], where)))

    lines = []
    for lineno, toks in secs["lines"]:
        where = f"line {lineno}"
        if len(toks) != 4:
            raise CaseFormatError(f"{where}: line rows need 4 fields (id from to b)")
        lines.append(Line(_int(toks[0], where), _int(toks[1], where), _int(toks[2], where), _num(toks[3], where)))

    controlled: list[int] | None = None
    constrained: list[int] = []
    defaults: dict[str, float] = {}
    overrides: dict[int, dict[str, float]] = {}
    for lineno, toks in secs["control"]:
        where = f"line {lineno}"
        head = toks[0]
        if head in ("controlled", "freq_constrained"):
            if len(toks) < 2 or toks[1] != "=":
                raise CaseFormatError(f"{where}: expected '{head} = <bus ids>'")
            ids = [_int(t, where) for t in toks[2:]]
            if head == "controlled":
                controlled = ids
            else:
                constrained = ids
        elif head == "default":
            defaults.update(_keyvals(toks[1:], where))
        elif head == "bus":
            if len(toks) < 2:
                raise CaseFormatError(f"{where}: expected 'bus <id> key=value ...'")
            overrides.setdefault(_int(toks[1], where), {}).update(_keyvals(toks[2:], where))
        else:
            raise CaseFormatError(f"{where}: unknown control entry {head!r}")
    if controlled is None:
        raise CaseFormatError("[control] needs a 'controlled = ...' entry")
    unknown = set(overrides) - set(controlled)
    if unknown:
        raise CaseValidationError(f"parameters given for uncontrolled buses {sorted(unknown)}")

    params = {}
    for i in controlled:
        kv = {**defaults, **overrides.get(i, {})}
        missing = [k for k in ("thr_lo", "thr_hi", "c", "d", "e", "xi", "gamma_hi", "gamma_lo") if k not in kv]
        if missing:
            raise CaseValidationError(f"bus {i} is missing controller parameters {missing}")
        xi = kv.pop("xi")
        if xi not in (0.0, 1.0):
            raise CaseValidationError(f"soft flag xi must be 0 or 1 (bus {i})")
        params[i] = BusControl(xi=int(xi), **kv)

    horizon: dict[str, str] = {}
    for lineno, toks in secs["horizon"]:
        if len(toks) != 3 or toks[1] != "=":
            raise CaseFormatError(f"line {lineno}: expected 'key = value'")
        horizon[toks[0]] = toks[2]
    if set(horizon) != {"N", "T"}:
        raise CaseFormatError("[horizon] needs exactly N and T")
    config = ControlConfig(
        controlled=tuple(sorted(controlled)),
        freq_constrained=tuple(sorted(constrained)),
        params=params,
        horizon=_int(horizon["N"], "[horizon]"),
        period=_num(horizon["T"], "[horizon]"),
    )
    if len(set(controlled)) != len(controlled) or len(set(constrained)) != len(constrained):
        raise CaseValidationError("duplicate bus in a control set")
    return NetworkCase.build(buses, lines, config, name=name)


def load_case(path: str | Path) -> NetworkCase:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CaseFormatError(f"cannot read case file {path}: {exc}") from exc
    return parse_case(text, name=path.stem)


def _fmt(x: float) -> str:
    return repr(float(x))


def dump_case(case: NetworkCase) -> str:
    """Serialize a case to the text format; ``parse_case(dump_case(c)) == c``."""
    out = ["[buses]", "# id M E p0"]
    out += [f"{b.id} {_fmt(b.inertia)} {_fmt(b.damping)} {_fmt(b.base_injection)}" for b in case.buses]
    out += ["", "[lines]", "# id from to b"]
    out += [f"{ln.id} {ln.from_bus} {ln.to_bus} {_fmt(ln.susceptance)}" for ln in case.lines]
    cfg = case.config
    out += ["", "[control]", "controlled = " + " ".join(map(str, cfg.controlled)),
            "freq_constrained = " + " ".join(map(str, cfg.freq_constrained))]
    for i in cfg.controlled:
        p = cfg.params[i]
        kv = [f"{k}={_fmt(getattr(p, k))}" for k in BUS_KEYS
              if k != "xi" and not (isinstance(getattr(p, k), float) and math.isnan(getattr(p, k)))]
        out.append(f"bus {i} xi={p.xi} " + " ".join(kv))
    out += ["", "[horizon]", f"N = {cfg.horizon}", f"T = {_fmt(cfg.period)}", ""]
    return "\n".join(out)
