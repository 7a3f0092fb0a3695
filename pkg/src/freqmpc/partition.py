"""Region partitions and the distributed controller.

Each region runs the centralized pipeline on its induced subgraph.  Power
flowing over lines that leave the region is frozen at its measured value and
treated as a constant extra injection over the horizon.

Partition file format: one region per line, ``name = bus ids`` (``a-b`` ranges allowed)::

    # regions around generators 30 and 31
    west = 1 2 3 25 30
    south = 5 6 7 11 31
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .mpc import CentralizedController, ControlError
from .netcase import Bus, ControlConfig, Line, NetworkCase, is_connected
from .qp import QpSettings

__all__ = [
    "PartitionError",
    "Region",
    "RegionPartition",
    "PartitionReport",
    "parse_partition",
    "load_partition",
    "single_region",
    "validate_partition",
    "boundary_flow_forecast",
    "regional_case",
    "DistributedController",
    "distributed_control",
]


class PartitionError(ValueError):
    pass


@dataclass(frozen=True)
class Region:
    """One region with its global index maps (0-based array indices)."""

    name: str
    buses: np.ndarray            # ascending global bus indices
    lines: np.ndarray            # induced lines, ascending global line indices
    boundary: np.ndarray         # lines with exactly one end in the region

    @property
    def bus_ids(self) -> list[int]:
        return [int(i) + 1 for i in self.buses]


@dataclass(frozen=True)
class RegionPartition:
    regions: tuple[Region, ...]

    def __len__(self) -> int:
        return len(self.regions)

    def __iter__(self):
        return iter(self.regions)

    @classmethod
    def from_bus_sets(cls, case: NetworkCase, sets, names=None) -> "RegionPartition":
        names = list(names) if names is not None else [f"region{k + 1}" for k in range(len(sets))]
        regions = []
        for name, ids in zip(names, sets):
            ids = sorted(set(int(i) for i in ids))
            bad = [i for i in ids if not 1 <= i <= case.n]
            if bad:
                raise PartitionError(f"region {name} references unknown buses {bad}")
            inside = np.zeros(case.n, dtype=bool)
            inside[np.array(ids, dtype=int) - 1] = True
            ends = np.array([(ln.from_bus - 1, ln.to_bus - 1) for ln in case.lines], dtype=int).reshape(-1, 2)
            a, b = inside[ends[:, 0]], inside[ends[:, 1]]
            regions.append(Region(name, np.flatnonzero(inside), np.flatnonzero(a & b), np.flatnonzero(a ^ b)))
        return cls(tuple(regions))


@dataclass
class PartitionReport:
    valid: bool
    problems: list[str] = field(default_factory=list)
    offending_buses: list[int] = field(default_factory=list)

    def raise_if_invalid(self) -> None:
        if not self.valid:
            raise PartitionError("; ".join(self.problems))


def parse_partition(text: str) -> tuple[list[str], list[list[int]]]:
    names, sets = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, sep, rest = line.partition("=")
        if not sep:
            raise PartitionError(f"line {lineno}: expected 'name = bus ids'")
        ids = []
        for tok in rest.split():
            a, dash, b = tok.partition("-")
            try:
                ids.extend(range(int(a), int(b) + 1) if dash else [int(a)])
            except ValueError:
                raise PartitionError(f"line {lineno}: bad bus id {tok!r}") from None
        if not ids:
            raise PartitionError(f"line {lineno}: empty region")
        names.append(name.strip())
        sets.append(ids)
    if not sets:
        raise PartitionError("partition file defines no regions")
    return names, sets


def load_partition(path, case: NetworkCase) -> RegionPartition:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise PartitionError(f"cannot read partition file {path}: {exc}") from exc
    names, sets = parse_partition(text)
    return RegionPartition.from_bus_sets(case, sets, names)


def single_region(case: NetworkCase) -> RegionPartition:
    return RegionPartition.from_bus_sets(case, [range(1, case.n + 1)], ["all"])


def validate_partition(case: NetworkCase, partition: RegionPartition) -> PartitionReport:
    """Coverage and disjointness of controlled buses plus per-region sanity.

    Regions may overlap on uncontrolled buses and need not cover every bus.
    Each region must induce a connected subgraph with at least one
    positive-inertia bus.
    """
    problems, offending = [], set()
    controlled = set(int(i) for i in case.u_idx)
    owner: dict[int, list[str]] = {}
    for reg in partition:
        for i in reg.buses:
            if int(i) in controlled:
                owner.setdefault(int(i), []).append(reg.name)
    missing = sorted(controlled - set(owner))
    if missing:
        problems.append(f"controlled buses in no region: {[i + 1 for i in missing]}")
        offending.update(missing)
    shared = sorted(i for i, regs in owner.items() if len(regs) > 1)
    if shared:
        problems.append("controlled buses in more than one region: "
                        + ", ".join(f"{i + 1} ({'/'.join(owner[i])})" for i in shared))
        offending.update(shared)
    for reg in partition:
        local = {int(g): k for k, g in enumerate(reg.buses)}
        edges = [(local[case.lines[e].from_bus - 1], local[case.lines[e].to_bus - 1]) for e in reg.lines]
        if not is_connected(len(reg.buses), edges):
            problems.append(f"region {reg.name} does not induce a connected subgraph")
            offending.update(int(i) for i in reg.buses)
        if not np.any(case.inertial[reg.buses]):
            problems.append(f"region {reg.name} has no bus with positive inertia")
            offending.update(int(i) for i in reg.buses)
    return PartitionReport(not problems, problems, sorted(i + 1 for i in offending))


def boundary_flow_forecast(case: NetworkCase, partition: RegionPartition, beta: int, lam) -> np.ndarray:
    """Constant injection addend for every bus of region ``beta`` (regional order).

    A boundary line ``k`` contributes ``-D[k, i] * b_k * sin(lam_k)`` to its
    end ``i`` inside the region, i.e. the power it currently delivers to ``i``.
    """
    reg = partition.regions[beta]
    lam = np.asarray(lam, dtype=float)
    flows = case.b[reg.boundary] * np.sin(lam[reg.boundary])
    add = -(case.D[np.ix_(reg.boundary, reg.buses)].T @ flows)
    return add


def regional_case(case: NetworkCase, partition: RegionPartition, beta: int) -> NetworkCase:
    """Induced sub-case of region ``beta``; buses and lines keep global order."""
    reg = partition.regions[beta]
    if not np.any(case.inertial[reg.buses]):
        raise PartitionError(f"region {reg.name} has only zero-inertia buses")
    local = {int(g) + 1: k + 1 for k, g in enumerate(reg.buses)}
    buses = [replace(case.buses[int(g)], id=local[int(g) + 1]) for g in reg.buses]
    lines = [Line(k + 1, local[case.lines[e].from_bus], local[case.lines[e].to_bus], case.lines[e].susceptance)
             for k, e in enumerate(reg.lines)]
    cfg = case.config
    ctrl = tuple(local[i] for i in cfg.controlled if i in local)
    cons = tuple(local[i] for i in cfg.freq_constrained if i in local)
    params = {local[i]: cfg.params[i] for i in cfg.controlled if i in local}
    sub = ControlConfig(ctrl, cons, params, cfg.horizon, cfg.period)
    return NetworkCase.build(buses, lines, sub, name=f"{case.name}:{reg.name}")


class DistributedController:
    """One condensed controller per region, each fed its boundary-flow forecast."""

    def __init__(self, case: NetworkCase, partition: RegionPartition, settings: QpSettings | None = None,
                 dump_dir=None):
        validate_partition(case, partition).raise_if_invalid()
        self.case = case
        self.partition = partition
        self.cases = [regional_case(case, partition, b) for b in range(len(partition))]
        self.controllers = [
            CentralizedController(c, settings, None if dump_dir is None else Path(dump_dir) / reg.name)
            for c, reg in zip(self.cases, partition)
        ]

    def reset(self) -> None:
        for c in self.controllers:
            c.reset()

    def region_input(self, beta: int, lam, omega, P_fcst) -> np.ndarray:
        reg = self.partition.regions[beta]
        add = boundary_flow_forecast(self.case, self.partition, beta, lam)
        P = np.asarray(P_fcst, dtype=float)[reg.buses] + add[:, None]
        try:
            return self.controllers[beta].control(np.asarray(lam)[reg.lines], np.asarray(omega)[reg.buses], P)
        except ControlError as exc:
            raise ControlError(f"region {reg.name}: {exc}") from exc

    def control(self, lam, omega, P_fcst, order=None) -> np.ndarray:
        order = range(len(self.partition)) if order is None else order
        parts = {b: self.region_input(b, lam, omega, P_fcst) for b in order}
        u = np.zeros(self.case.n)
        for b in range(len(self.partition)):
            reg = self.partition.regions[b]
            ub = parts[b]
            cu = self.cases[b].u_idx
            u[reg.buses[cu]] = ub[cu]
        return u

    __call__ = control


def distributed_control(case: NetworkCase, partition: RegionPartition, lam, omega, P_fcst, *,
                        controller: DistributedController | None = None) -> np.ndarray:
    controller = controller or DistributedController(case, partition)
    return controller.control(lam, omega, P_fcst)
