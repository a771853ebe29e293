"""Multi-area composition: generating units, area swing dynamics and tie-lines.

Channel naming in assembled systems:

* inputs ``<area>.P_L`` (load deviation) and ``<unit>.<set-point>``;
* outputs ``<area>.omega``, ``<unit>.P`` (on the system base) and
  ``<from>-<to>.P_tie`` (flow leaving ``from``).

A single assembled area additionally exposes the ``<area>.P_tie`` input.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence, Union

import numpy as np
from scipy.linalg import null_space

from .errors import DimensionMismatch, UnknownArea, UnknownChannel, ValidationError
from .lti import MimoTF, RationalTF, SimTrace, StateSpace, balance, lsim, select_inputs, uniform_time
from .plants import (
    BaseQuantities,
    CouplingParams,
    GridFollowingParams,
    GridFormingParams,
    HydroParams,
    OperatingPoint,
    ThermalParams,
    coupling_power_tfs,
    grid_following_ss,
    grid_following_tfs,
    grid_forming_ss,
    grid_forming_tfs,
    hydro_ss,
    hydro_tf,
    thermal_ss,
    thermal_tf,
)


def _check_name(name: str, what: str) -> None:
    if not name or "." in name or "-" in name:
        raise ValidationError(f"{what} name {name!r} must be non-empty without '.' or '-'")


def _check_setpoints(setpoints: Sequence[str], allowed: Sequence[str], kind: str) -> None:
    bad = [s for s in setpoints if s not in allowed]
    if bad or len(set(setpoints)) != len(setpoints):
        raise ValidationError(f"{kind} set-points must be distinct names from {allowed}, got {tuple(setpoints)}")


def _machine_row(g: RationalTF, R: float) -> MimoTF:
    return MimoTF([[g, g * (-1.0 / R)]], input_names=("P_set", "omega"), output_names=("P",))


def _machine_ss(g: StateSpace, R: float) -> StateSpace:
    """Governor-turbine driven by ``P_set - omega / R``."""
    B = np.column_stack([g.B[:, 0], -g.B[:, 0] / R])
    D = np.column_stack([g.D[:, 0], -g.D[:, 0] / R])
    return StateSpace(g.A, B, g.C, D, input_names=("P_set", "omega"), output_names=("P",))


def _select(m: MimoTF, setpoints: Sequence[str], omega_input: str) -> MimoTF:
    cols = [m.input_names.index(s) for s in setpoints] + [m.input_names.index(omega_input)]
    return MimoTF([[m.entries[0][j] for j in cols]],
                  input_names=tuple(setpoints) + ("omega",), output_names=("P",))


@dataclass(frozen=True)
class HydroUnit:
    name: str
    params: HydroParams
    scale: float = 1.0
    kind = "hydro"
    setpoints = ("P_set",)

    def __post_init__(self):
        _check_name(self.name, "unit")
        if not self.scale > 0:
            raise ValidationError(f"unit {self.name}: rating scale must be positive")

    def tf(self, base: BaseQuantities) -> MimoTF:
        """``P`` (unit base) driven by ``P_set`` and the area frequency ``omega``."""
        return _machine_row(hydro_tf(self.params), self.params.R)

    def ss(self, base: BaseQuantities) -> StateSpace:
        return _machine_ss(hydro_ss(self.params), self.params.R)


@dataclass(frozen=True)
class ThermalUnit:
    name: str
    params: ThermalParams
    scale: float = 1.0
    kind = "thermal"
    setpoints = ("P_set",)

    def __post_init__(self):
        _check_name(self.name, "unit")
        if not self.scale > 0:
            raise ValidationError(f"unit {self.name}: rating scale must be positive")

    def tf(self, base: BaseQuantities) -> MimoTF:
        return _machine_row(thermal_tf(self.params), self.params.R)

    def ss(self, base: BaseQuantities) -> StateSpace:
        return _machine_ss(thermal_ss(self.params), self.params.R)


@dataclass(frozen=True)
class GridFormingUnit:
    name: str
    params: GridFormingParams
    op: OperatingPoint
    coupling: CouplingParams = field(default_factory=CouplingParams)
    scale: float = 1.0
    setpoints: tuple[str, ...] = ("P_set", "omega_set")
    kind = "grid_forming"

    def __post_init__(self):
        _check_name(self.name, "unit")
        if not self.scale > 0:
            raise ValidationError(f"unit {self.name}: rating scale must be positive")
        object.__setattr__(self, "setpoints", tuple(self.setpoints))
        _check_setpoints(self.setpoints, ("P_set", "omega_set"), "grid-forming")

    def tf(self, base: BaseQuantities) -> MimoTF:
        t = coupling_power_tfs(self.op, self.coupling, base)["P", "delta"]
        return _select(grid_forming_tfs(self.params, t, base), self.setpoints, "omega_g")

    def ss(self, base: BaseQuantities) -> StateSpace:
        t = coupling_power_tfs(self.op, self.coupling, base)["P", "delta"]
        return select_inputs(grid_forming_ss(self.params, t, base), self.setpoints + ("omega_g",),
                             {"omega_g": "omega"})


@dataclass(frozen=True)
class GridFollowingUnit:
    name: str
    params: GridFollowingParams
    op: OperatingPoint
    coupling: CouplingParams = field(default_factory=CouplingParams)
    scale: float = 1.0
    setpoints: tuple[str, ...] = ("P_set", "Q_set")
    kind = "grid_following"

    def __post_init__(self):
        _check_name(self.name, "unit")
        if not self.scale > 0:
            raise ValidationError(f"unit {self.name}: rating scale must be positive")
        object.__setattr__(self, "setpoints", tuple(self.setpoints))
        _check_setpoints(self.setpoints, ("P_set", "Q_set"), "grid-following")

    def tf(self, base: BaseQuantities) -> MimoTF:
        m = grid_following_tfs(self.params, self.op, self.coupling, base)
        return _select(m, self.setpoints, "omega_g")

    def ss(self, base: BaseQuantities) -> StateSpace:
        m = grid_following_ss(self.params, self.op, self.coupling, base)
        return select_inputs(m, self.setpoints + ("omega_g",), {"omega_g": "omega"})


UnitModel = Union[HydroUnit, ThermalUnit, GridFormingUnit, GridFollowingUnit]


@dataclass(frozen=True)
class AreaSpec:
    id: str
    H: float
    D: float
    units: tuple = ()

    def __post_init__(self):
        _check_name(self.id, "area")
        if not self.H > 0:
            raise ValidationError(f"area {self.id}: H must be positive, got {self.H}")
        if self.D < 0:
            raise ValidationError(f"area {self.id}: D must be non-negative, got {self.D}")
        object.__setattr__(self, "units", tuple(self.units))
        names = [u.name for u in self.units]
        if len(set(names)) != len(names):
            raise ValidationError(f"area {self.id}: duplicate unit names {names}")


@dataclass(frozen=True)
class TieLine:
    from_area: str
    to_area: str
    T_sync: float

    def __post_init__(self):
        if self.from_area == self.to_area:
            raise ValidationError(f"tie-line endpoints must differ, got {self.from_area!r} twice")
        if not self.T_sync > 0:
            raise ValidationError(f"tie-line {self.from_area}-{self.to_area}: T_sync must be positive")

    @property
    def name(self) -> str:
        return f"{self.from_area}-{self.to_area}.P_tie"


def tie_line_coeff(V1: float, V2: float, X12: float, delta1_0: float, delta2_0: float) -> float:
    """Synchronizing coefficient of a lossless line, pu power per rad."""
    if not X12 > 0:
        raise ValidationError(f"X12 must be positive, got {X12}")
    return V1 * V2 / X12 * math.cos(delta1_0 - delta2_0)


@dataclass(frozen=True)
class SystemModel:
    """Continuous state-space model with named input and output channels."""

    ss: StateSpace
    areas: tuple[str, ...]
    unit_area: Mapping[str, str]

    @property
    def inputs(self) -> tuple[str, ...]:
        return self.ss.input_names

    @property
    def outputs(self) -> tuple[str, ...]:
        return self.ss.output_names

    def input_index(self, name: str) -> int:
        try:
            return self.inputs.index(name)
        except ValueError:
            raise UnknownChannel(f"no input channel {name!r}; available: {', '.join(self.inputs)}") from None

    def output_index(self, name: str) -> int:
        try:
            return self.outputs.index(name)
        except ValueError:
            raise UnknownChannel(f"no output channel {name!r}; available: {', '.join(self.outputs)}") from None


def assemble_area(spec: AreaSpec, base: BaseQuantities) -> SystemModel:
    """Single area with its swing block ``1/(2H s + D)`` and a tie-line power port."""
    blocks = []
    for u in spec.units:
        m = u.ss(base)
        if m.input_names != tuple(u.setpoints) + ("omega",) or m.n_outputs != 1:
            raise DimensionMismatch(f"unit {u.name}: model inputs {m.input_names} do not match "
                                    f"set-points {u.setpoints} plus frequency")
        blocks.append((u, m))

    in_names = [f"{spec.id}.P_L", f"{spec.id}.P_tie"]
    for u, _ in blocks:
        in_names += [f"{u.name}.{sp}" for sp in u.setpoints]
    out_names = [f"{spec.id}.omega"] + [f"{u.name}.P" for u, _ in blocks]

    n = sum(b.n_states for _, b in blocks) + 1
    m, p = len(in_names), len(out_names)
    A = np.zeros((n, n))
    B = np.zeros((n, m))
    C = np.zeros((p, n))
    D = np.zeros((p, m))
    w = n - 1  # swing state index
    inv2H = 1.0 / (2.0 * spec.H)
    A[w, w] = -spec.D * inv2H
    B[w, 0] = B[w, 1] = -inv2H
    C[0, w] = 1.0

    k, col = 0, 2
    for i, (u, b) in enumerate(blocks):
        r, nsp = b.n_states, len(u.setpoints)
        sl, cols = slice(k, k + r), slice(col, col + nsp)
        A[sl, sl] = b.A
        A[sl, w] = b.B[:, -1]
        B[sl, cols] = b.B[:, :nsp]
        # scaled unit power enters the swing equation and the output map
        c, d_sp, d_w = u.scale * b.C[0], u.scale * b.D[0, :nsp], u.scale * b.D[0, -1]
        A[w, sl] += c * inv2H
        A[w, w] += d_w * inv2H
        B[w, cols] += d_sp * inv2H
        C[1 + i, sl] = c
        C[1 + i, w] = d_w
        D[1 + i, cols] = d_sp
        k += r
        col += nsp

    ss = StateSpace(A, B, C, D, input_names=in_names, output_names=out_names)
    return SystemModel(ss=ss, areas=(spec.id,), unit_area={u.name: spec.id for u in spec.units})


def assemble_system(areas: Sequence[AreaSpec], ties: Sequence[TieLine], base: BaseQuantities) -> SystemModel:
    """Areas coupled by tie-lines with ``dP_tie = T (w_b / s)(dw_i - dw_j)``."""
    ids = [a.id for a in areas]
    if len(set(ids)) != len(ids):
        raise ValidationError(f"duplicate area ids {ids}")
    for t in ties:
        for end in (t.from_area, t.to_area):
            if end not in ids:
                raise UnknownArea(f"tie-line {t.from_area}-{t.to_area} references unknown area {end!r}")
    unit_names = [u.name for a in areas for u in a.units]
    if len(set(unit_names)) != len(unit_names):
        raise ValidationError("unit names must be unique across areas")

    parts = [assemble_area(a, base) for a in areas]
    ns = [p.ss.n_states for p in parts]
    n = sum(ns) + len(ties)
    in_names, out_names = [], []
    for p in parts:
        in_names += [c for c in p.inputs if not c.endswith(".P_tie")]
        out_names += list(p.outputs)
    out_names += [t.name for t in ties]
    A = np.zeros((n, n))
    B = np.zeros((n, len(in_names)))
    C = np.zeros((len(out_names), n))
    D = np.zeros((len(out_names), len(in_names)))

    offs = np.cumsum([0] + ns)
    omega_state, tie_col = {}, {}
    row = 0
    for a, p, o in zip(areas, parts, offs):
        ss = p.ss
        sl = slice(o, o + ss.n_states)
        A[sl, sl] = ss.A
        for j, c in enumerate(p.inputs):
            if c.endswith(".P_tie"):
                tie_col[a.id] = (sl, ss.B[:, j])
            else:
                B[sl, in_names.index(c)] = ss.B[:, j]
                D[row : row + ss.n_outputs, in_names.index(c)] = ss.D[:, j]
        C[row : row + ss.n_outputs, sl] = ss.C
        omega_state[a.id] = o + int(np.flatnonzero(ss.C[0])[0])
        row += ss.n_outputs

    for k, t in enumerate(ties):
        th = sum(ns) + k
        A[th, omega_state[t.from_area]] = base.omega_b
        A[th, omega_state[t.to_area]] = -base.omega_b
        sl_f, b_f = tie_col[t.from_area]
        sl_t, b_t = tie_col[t.to_area]
        A[sl_f, th] += b_f * t.T_sync
        A[sl_t, th] -= b_t * t.T_sync
        C[row + k, th] = t.T_sync

    ss = StateSpace(A, B, C, D, input_names=in_names, output_names=out_names)
    return SystemModel(ss=ss, areas=tuple(ids), unit_area={u.name: a.id for a in areas for u in a.units})


@dataclass(frozen=True)
class Event:
    time: float
    channel: str
    value: float


@dataclass(frozen=True)
class Scenario:
    duration: float
    dt: float
    events: tuple[Event, ...] = ()

    def __post_init__(self):
        if not self.dt > 0:
            raise ValidationError(f"dt must be positive, got {self.dt}")
        if not self.duration > 0:
            raise ValidationError(f"duration must be positive, got {self.duration}")
        evs = tuple(e if isinstance(e, Event) else Event(*e) for e in self.events)
        for e in evs:
            if not 0 <= e.time <= self.duration:
                raise ValidationError(f"event at t={e.time} lies outside [0, {self.duration}]")
        object.__setattr__(self, "events", evs)


def scenario_inputs(sys: SystemModel, sc: Scenario) -> SimTrace:
    """Piecewise-constant input channels built from the scenario events."""
    t = uniform_time(sc.duration, sc.dt)
    U = {c: np.zeros(t.shape) for c in sys.inputs}
    for e in sc.events:
        if e.channel not in U:
            sys.input_index(e.channel)
        start = int(math.ceil(e.time / sc.dt - 1e-9))
        U[e.channel][start:] += e.value
    return SimTrace(t, U)


def simulate_scenario(sys: SystemModel, sc: Scenario) -> SimTrace:
    """All output channels plus the applied inputs."""
    u = scenario_inputs(sys, sc)
    return lsim(sys.ss, u).merged(u)


def steady_state(sys: SystemModel, inputs: Mapping[str, float]) -> dict[str, float]:
    """Final output values after constant input steps from zero initial state.

    Marginal modes (e.g. the loop flow of a meshed tie-line set) keep their
    zero initial value; the remaining modes are assumed stable.
    """
    ss = balance(sys.ss)
    u = np.zeros(ss.n_inputs)
    for name, v in inputs.items():
        u[sys.input_index(name)] = v
    if ss.n_states == 0:
        return dict(zip(sys.outputs, ss.D @ u))
    rhs = -ss.B @ u
    W = null_space(ss.A.T)  # conserved combinations w'x
    if W.size and np.max(np.abs(W.T @ rhs)) > 1e-9 * max(1.0, np.max(np.abs(rhs))):
        raise ValidationError("inputs excite an integrating mode; no steady state exists")
    M = np.vstack([ss.A, W.T]) if W.size else ss.A
    x = np.linalg.lstsq(M, np.concatenate([rhs, np.zeros(W.shape[1])]), rcond=None)[0]
    return dict(zip(sys.outputs, ss.C @ x + ss.D @ u))


def is_stable(sys: SystemModel, margin: float = 1e-9) -> bool:
    """True if every non-zero pole lies in the open left half-plane.

    Exact zero poles belong to conserved quantities such as meshed tie-line
    loop flows, which are never excited from rest.
    """
    p = balance(sys.ss).poles()
    return all(z.real < -margin for z in p if abs(z) > 1e-8)
