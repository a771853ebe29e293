"""Two-step identification of a configured project from one measured trace.

Step 1 fits every unit with free parameters to its own power channel;
step 2 fits area inertia and damping with the step-1 units in place.
"""
from __future__ import annotations

from dataclasses import fields, replace
from typing import Mapping

import numpy as np

from .assembly import GridFollowingUnit, GridFormingUnit, Scenario, assemble_system, simulate_scenario
from .errors import ValidationError
from .ident import (
    IdentResult,
    MultistartConfig,
    identify_grid,
    identify_grid_following,
    identify_grid_forming,
    identify_hydro,
    identify_thermal,
    r_squared,
    rms_error,
)
from .io import ProjectConfig, UnitConfig
from .lti import SimTrace, StateSpace, lsim, simulate_ss
from .synth import regulating_input


def _channel(trace: SimTrace, name: str) -> np.ndarray:
    return trace[name] if name in trace else np.zeros(len(trace))


def _measured_power(trace: SimTrace, uc: UnitConfig) -> np.ndarray:
    name = f"{uc.unit.name}.P"
    if name not in trace:
        raise ValidationError(f"trace lacks the power channel {name!r}")
    return trace[name] / uc.unit.scale


def unit_trace(trace: SimTrace, area: str, uc: UnitConfig) -> SimTrace:
    """Per-unit identification trace on the unit's own rating.

    Conventional units get ``u`` (taken from ``<unit>.u`` or rebuilt from the
    set-point and the area frequency) and ``P``; converters get their
    set-points, ``omega_g`` (the area frequency) and ``P``.
    """
    u, n = uc.unit, uc.unit.name
    omega = trace[f"{area}.omega"] if f"{area}.omega" in trace else None
    chans = {"P": _measured_power(trace, uc)}
    if isinstance(u, (GridFormingUnit, GridFollowingUnit)):
        if omega is None:
            raise ValidationError(f"trace lacks the area frequency {area}.omega needed by {n}")
        for sp in ("P_set", "Q_set", "omega_set"):
            chans[sp] = _channel(trace, f"{n}.{sp}")
        chans["omega_g"] = omega
    elif f"{n}.u" in trace:
        chans["u"] = trace[f"{n}.u"]
        chans["P_set"] = _channel(trace, f"{n}.P_set")
    else:
        chans["P_set"] = _channel(trace, f"{n}.P_set")
        if omega is None:
            raise ValidationError(f"trace lacks both {n}.u and {area}.omega")
        chans["u"] = regulating_input(_channel(trace, f"{n}.P_set"), omega, u.params.R)
    return SimTrace(trace.t, chans)


def _fixed(uc: UnitConfig) -> dict:
    p = uc.unit.params
    return {f.name: getattr(p, f.name) for f in fields(p)
            if f.name not in uc.bounds.names and getattr(p, f.name) is not None}


def ramp_channels(tr: SimTrace) -> tuple[str, ...]:
    """Channels of a unit trace that are sampled continuous signals.

    The area frequency is continuous; a regulating input is too unless it
    carries set-point steps.
    """
    if "omega_g" in tr:
        return ("omega_g",)
    if "u" in tr and not np.any(tr["P_set"]):
        return ("u",)
    return ()


def identify_unit(trace: SimTrace, area: str, uc: UnitConfig, cfg: MultistartConfig, base) -> IdentResult:
    tr = unit_trace(trace, area, uc)
    ramp = ramp_channels(tr)
    u = uc.unit
    if u.kind == "hydro":
        return identify_hydro(tr, _fixed(uc), uc.bounds, cfg, ramp=ramp)
    if u.kind == "thermal":
        fixed = {k: v for k, v in _fixed(uc).items() if k != "F_lp"}
        return identify_thermal(tr, fixed, uc.bounds, cfg, ramp=ramp)
    if u.kind == "grid_forming":
        return identify_grid_forming(tr, u.params.m_p, u.op, uc.bounds, cfg, u.coupling, base, ramp=ramp)
    return identify_grid_following(tr, u.op, uc.bounds, cfg, u.params.R_p, u.params.zeta, u.coupling, base,
                                   ramp=ramp)


def identify_units(project: ProjectConfig, trace: SimTrace,
                   cfg: MultistartConfig | None = None) -> dict[str, IdentResult]:
    """Step 1 for every unit that has free parameters, in declaration order."""
    cfg = cfg or project.ident
    return {uc.unit.name: identify_unit(trace, area, uc, cfg, project.base)
            for area, uc in project.units() if uc.free}


def with_unit_params(project: ProjectConfig, params: Mapping[str, Mapping[str, float]]) -> ProjectConfig:
    """Copy of ``project`` with unit parameters replaced by identified values."""
    known = {uc.unit.name for _, uc in project.units()}
    unknown = sorted(set(params) - known)
    if unknown:
        raise ValidationError(f"identified parameters given for unknown units {unknown}")
    areas = []
    for a in project.areas:
        units = []
        for uc in a.units:
            p = params.get(uc.unit.name)
            if p:
                extra = {"F_lp": None} if uc.unit.kind == "thermal" else {}
                uc = replace(uc, unit=replace(uc.unit, params=replace(uc.unit.params, **extra, **p)))
            units.append(uc)
        areas.append(replace(a, units=tuple(units)))
    return replace(project, areas=tuple(areas))


def with_area_params(project: ProjectConfig, params: Mapping[str, float]) -> ProjectConfig:
    """Copy of ``project`` with ``H_<area>``/``D_<area>`` values applied."""
    areas = [replace(a, H=params.get(f"H_{a.id}", a.H), D=params.get(f"D_{a.id}", a.D)) for a in project.areas]
    return replace(project, areas=tuple(areas))


def identify_project_grid(project: ProjectConfig, trace: SimTrace,
                          cfg: MultistartConfig | None = None) -> IdentResult:
    """Step 2 with the units as currently configured."""
    return identify_grid(trace, project.area_specs(), project.ties, project.grid_bounds(),
                         cfg or project.ident, project.base)


def model_trace(project: ProjectConfig, measured: SimTrace) -> SimTrace:
    """Project model driven by the input channels found in ``measured``.

    Missing inputs are zero. Returns the model outputs only.
    """
    sys = assemble_system(project.area_specs(), project.ties, project.base)
    u = SimTrace(measured.t, {c: _channel(measured, c) for c in sys.inputs})
    return lsim(sys.ss, u)


def unit_model_traces(project: ProjectConfig, measured: SimTrace) -> SimTrace:
    """Each unit's power (system base) simulated from its own measured inputs."""
    out = {}
    for area, uc in project.units():
        tr = unit_trace(measured, area, uc)
        ss = uc.unit.ss(project.base)
        if isinstance(uc.unit, (GridFormingUnit, GridFollowingUnit)):
            names = ["omega_g" if c == "omega" else c for c in ss.input_names]
            U = np.column_stack([tr[c] for c in names])
            y = simulate_ss(ss, U, tr.dt, [c in ramp_channels(tr) for c in names])[:, 0]
        else:
            # the governor sees only the regulating input
            g = StateSpace(ss.A, ss.B[:, :1], ss.C, ss.D[:, :1])
            y = simulate_ss(g, tr["u"][:, None], tr.dt, ["u" in ramp_channels(tr)])[:, 0]
        out[f"{uc.unit.name}.P"] = y * uc.unit.scale
    return SimTrace(measured.t, out)


def channel_metrics(model: SimTrace, measured: SimTrace) -> dict[str, dict[str, float | None]]:
    """R² and RMS error for every channel present in both traces.

    R² is ``None`` where the measured channel is constant.
    """
    if len(model) != len(measured):
        raise ValidationError(f"model has {len(model)} samples, measurement has {len(measured)}")
    out = {}
    for c in model.names:
        if c not in measured:
            continue
        y, yhat = model[c], measured[c]
        r2 = None if np.all(yhat == yhat[0]) else r_squared(y, yhat)
        out[c] = {"r2": r2, "rms": rms_error(y, yhat)}
    return out


def scenario_trace(project: ProjectConfig, sc: Scenario) -> SimTrace:
    return simulate_scenario(assemble_system(project.area_specs(), project.ties, project.base), sc)
