"""Project configuration, measurement traces and result files.

Configurations are YAML documents checked against ``data/config_schema.json``
and then semantically (area references, bound ordering, operating points).
Traces are CSV files with a ``t`` column in seconds followed by per-unit
deviation channels. Results are JSON with sorted keys.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, fields
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import jsonschema
import numpy as np
import yaml

from .assembly import (
    AreaSpec,
    Event,
    GridFollowingUnit,
    GridFormingUnit,
    HydroUnit,
    Scenario,
    ThermalUnit,
    TieLine,
    UnitModel,
    tie_line_coeff,
)
from .errors import DuplicateChannel, EmptyFile, FreqStabError, IoError, NonuniformSampling, ParseError, ValidationError
from .ident import (
    GFL_FREE,
    GFM_FREE,
    HYDRO_FREE,
    THERMAL_FREE,
    BoundsBox,
    IdentResult,
    MultistartConfig,
    damping_bounds,
    inertia_bounds,
)
from .lti import SimTrace
from .plants import (
    BaseQuantities,
    CouplingParams,
    GridFollowingParams,
    GridFormingParams,
    HydroParams,
    LoadModel,
    OperatingPoint,
    ThermalParams,
)

FAMILIES = {
    "hydro": (HydroUnit, HydroParams, HYDRO_FREE),
    "thermal": (ThermalUnit, ThermalParams, THERMAL_FREE),
    "grid_forming": (GridFormingUnit, GridFormingParams, GFM_FREE),
    "grid_following": (GridFollowingUnit, GridFollowingParams, GFL_FREE),
}
CONVERTERS = ("grid_forming", "grid_following")


@lru_cache(maxsize=None)
def _data_text(name: str) -> str:
    return resources.files("freqstab").joinpath("data", name).read_text(encoding="utf-8")


def default_bounds() -> dict[str, dict[str, tuple[float, float]]]:
    """Shipped identification boxes per unit family."""
    raw = yaml.safe_load(_data_text("default_bounds.yaml"))
    return {fam: {k: (float(v[0]), float(v[1])) for k, v in d.items()} for fam, d in raw.items()}


def _schema() -> dict:
    return json.loads(_data_text("config_schema.json"))


# ---- configuration ------------------------------------------------------------------

@dataclass(frozen=True)
class UnitConfig:
    unit: UnitModel
    rating: float
    free: tuple[str, ...]
    bounds: BoundsBox  # over the family's free parameters; known ones pinned

    @property
    def kind(self) -> str:
        return self.unit.kind


@dataclass(frozen=True)
class AreaConfig:
    id: str
    H: float
    D: float
    units: tuple[UnitConfig, ...]
    H_bounds: tuple[float, float]
    D_bounds: tuple[float, float] | None

    def spec(self, units: Sequence[UnitModel] | None = None) -> AreaSpec:
        return AreaSpec(self.id, self.H, self.D, tuple(units) if units is not None else
                        tuple(u.unit for u in self.units))


@dataclass(frozen=True)
class ScenarioConfig:
    id: str
    scenario: Scenario
    description: str = ""


@dataclass(frozen=True)
class ProjectConfig:
    base: BaseQuantities
    areas: tuple[AreaConfig, ...]
    ties: tuple[TieLine, ...] = ()
    scenarios: tuple[ScenarioConfig, ...] = ()
    ident: MultistartConfig = field(default_factory=MultistartConfig)

    def area_specs(self) -> list[AreaSpec]:
        return [a.spec() for a in self.areas]

    def scenario(self, sid: str) -> Scenario:
        for s in self.scenarios:
            if s.id == sid:
                return s.scenario
        raise ValidationError(f"unknown scenario {sid!r}; known: {[s.id for s in self.scenarios]}")

    def units(self) -> list[tuple[str, UnitConfig]]:
        """``(area id, unit config)`` pairs in declaration order."""
        return [(a.id, u) for a in self.areas for u in a.units]

    def grid_bounds(self) -> BoundsBox:
        names, lb, ub = [], [], []
        for a in self.areas:
            if a.D_bounds is None:
                raise ValidationError(f"area {a.id}: no D_bounds and no loads to derive them from")
            for n, (lo, hi) in ((f"H_{a.id}", a.H_bounds), (f"D_{a.id}", a.D_bounds)):
                names.append(n)
                lb.append(lo)
                ub.append(hi)
        return BoundsBox(tuple(names), tuple(lb), tuple(ub))


def _range(v, where: str) -> tuple[float, float]:
    lo, hi = float(v[0]), float(v[1])
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValidationError(f"{where}: bounds must be finite, got [{lo}, {hi}]")
    if lo > hi:
        raise ValidationError(f"{where}: lower bound {lo} exceeds upper bound {hi}")
    return lo, hi


def _build(cls, kwargs: Mapping, where: str):
    known = {f.name for f in fields(cls)}
    bad = sorted(set(kwargs) - known)
    if bad:
        raise ValidationError(f"{where}: unknown parameters {bad}")
    try:
        return cls(**kwargs)
    except FreqStabError as e:
        raise ValidationError(f"{where}: {e}") from e


def _unit(d: Mapping, base: BaseQuantities, where: str) -> UnitConfig:
    kind = d["type"]
    ucls, pcls, family_free = FAMILIES[kind]
    name = d["name"]
    where = f"{where} ({name})"
    rating = float(d.get("rating", base.S_b))
    params = _build(pcls, d.get("params", {}), f"{where}.params")

    ident = d.get("identify", kind not in CONVERTERS)
    free = family_free if ident is True else () if ident is False else tuple(ident)
    bad = [p for p in free if p not in family_free]
    if bad:
        raise ValidationError(f"{where}.identify: {bad} are not identifiable {kind} parameters {family_free}")
    box = dict(default_bounds()[kind])
    for p, r in d.get("bounds", {}).items():
        if p not in family_free:
            raise ValidationError(f"{where}.bounds: {p!r} is not an identifiable {kind} parameter")
        box[p] = _range(r, f"{where}.bounds.{p}")
    lb, ub = [], []
    for p in family_free:
        if p in free:
            lo, hi = box[p]
        else:
            lo = hi = float(getattr(params, p))
        lb.append(lo)
        ub.append(hi)
    bounds = BoundsBox(family_free, tuple(lb), tuple(ub))

    kw = dict(name=name, params=params, scale=rating / base.S_b)
    if kind in CONVERTERS:
        cp = _build(CouplingParams, d.get("coupling", {}), f"{where}.coupling")
        if "operating_point" in d:
            op = _build(OperatingPoint, d["operating_point"], f"{where}.operating_point")
        elif "injection" in d:
            inj = d["injection"]
            op = OperatingPoint.from_grid_injection(inj["P"], inj["Q"], inj.get("V_g0", 1.0),
                                                    inj.get("theta0", 0.0), cp)
        else:
            raise ValidationError(f"{where}: converter needs an operating_point or injection")
        kw.update(op=op, coupling=cp)
        if "setpoints" in d:
            kw["setpoints"] = tuple(d["setpoints"])
    elif "setpoints" in d and tuple(d["setpoints"]) != ("P_set",):
        raise ValidationError(f"{where}.setpoints: {kind} units expose only P_set")
    for key in ("operating_point", "injection", "coupling"):
        if key in d and kind not in CONVERTERS:
            raise ValidationError(f"{where}.{key}: only converter units take {key}")
    unit = _build(ucls, kw, where)
    return UnitConfig(unit=unit, rating=rating, free=free, bounds=bounds)


def _area(d: Mapping, base: BaseQuantities, where: str) -> AreaConfig:
    aid = d["id"]
    where = f"{where} ({aid})"
    units = tuple(_unit(u, base, f"{where}.units[{i}]") for i, u in enumerate(d.get("units", [])))
    try:
        H_b = _range(d["H_bounds"], f"{where}.H_bounds") if "H_bounds" in d else inertia_bounds(d["H"])
    except ValidationError as e:
        raise ValidationError(f"{where}: {e}") from e
    if "D_bounds" in d:
        D_b = _range(d["D_bounds"], f"{where}.D_bounds")
    elif d.get("loads"):
        loads = [_build(LoadModel, ld, f"{where}.loads[{i}]") for i, ld in enumerate(d["loads"])]
        pv = _range(d.get("k_pv_range", (1.0, 2.0)), f"{where}.k_pv_range")
        pf = _range(d.get("k_pf_range", (1.0, 2.0)), f"{where}.k_pf_range")
        D_b = damping_bounds(loads, pv, pf)
    else:
        D_b = None
    area = AreaConfig(id=aid, H=float(d["H"]), D=float(d["D"]), units=units, H_bounds=H_b, D_bounds=D_b)
    _build(AreaSpec, dict(id=aid, H=area.H, D=area.D, units=tuple(u.unit for u in units)), where)
    return area


def _tie(d: Mapping, where: str) -> TieLine:
    flow = ("V_from", "V_to", "X", "delta_from", "delta_to")
    given = [k for k in flow if k in d]
    if "T_sync" in d:
        if given:
            raise ValidationError(f"{where}: give either T_sync or load-flow inputs, not both")
        T = float(d["T_sync"])
    else:
        if len(given) != len(flow):
            raise ValidationError(f"{where}: T_sync missing and load-flow inputs incomplete, need {list(flow)}")
        T = tie_line_coeff(d["V_from"], d["V_to"], d["X"], d["delta_from"], d["delta_to"])
    return _build(TieLine, dict(from_area=d["from"], to_area=d["to"], T_sync=T), where)


def _schema_error(e: jsonschema.ValidationError) -> ValidationError:
    path = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in e.absolute_path).lstrip(".")
    return ValidationError(f"{path or '<root>'}: {e.message}")


def config_from_dict(d: Mapping) -> ProjectConfig:
    """Validate a configuration mapping and resolve defaults."""
    try:
        jsonschema.validate(d, _schema())
    except jsonschema.ValidationError as e:
        raise _schema_error(e) from None
    base = _build(BaseQuantities, d.get("base", {}), "base")
    ident = _build(MultistartConfig, d.get("identification", {}), "identification")
    areas = tuple(_area(a, base, f"areas[{i}]") for i, a in enumerate(d["areas"]))

    ids = [a.id for a in areas]
    if len(set(ids)) != len(ids):
        raise ValidationError(f"areas: duplicate ids {ids}")
    unames = [u.unit.name for a in areas for u in a.units]
    dup = sorted({n for n in unames if unames.count(n) > 1})
    if dup:
        raise ValidationError(f"areas: unit names {dup} are used more than once")
    clash = sorted(set(ids) & set(unames))
    if clash:
        raise ValidationError(f"areas: names {clash} are used for both an area and a unit")

    ties = tuple(_tie(t, f"ties[{i}]") for i, t in enumerate(d.get("ties", [])))
    for i, t in enumerate(ties):
        for end in (t.from_area, t.to_area):
            if end not in ids:
                raise ValidationError(f"ties[{i}]: unknown area {end!r}")

    channels = {f"{a.id}.P_L" for a in areas} | {f"{u.unit.name}.{s}" for a in areas for u in a.units
                                                 for s in u.unit.setpoints}
    scen = []
    for i, s in enumerate(d.get("scenarios", [])):
        where = f"scenarios[{i}] ({s['id']})"
        events = []
        for j, e in enumerate(s.get("events", [])):
            if e["channel"] not in channels:
                raise ValidationError(f"{where}.events[{j}]: unknown input channel {e['channel']!r}")
            events.append(Event(float(e["time"]), e["channel"], float(e["value"])))
        sc = _build(Scenario, dict(duration=float(s["duration"]), dt=float(s["dt"]), events=tuple(events)), where)
        scen.append(ScenarioConfig(s["id"], sc, s.get("description", "")))
    sids = [s.id for s in scen]
    if len(set(sids)) != len(sids):
        raise ValidationError(f"scenarios: duplicate ids {sids}")
    return ProjectConfig(base=base, areas=areas, ties=ties, scenarios=tuple(scen), ident=ident)


def parse_config(path) -> ProjectConfig:
    """Read, schema-check and validate a YAML project file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"{path}: {e.strerror or e}") from e
    try:
        d = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        loc = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
        raise ParseError(f"{path}: {loc}{getattr(e, 'problem', None) or e}") from None
    if not isinstance(d, dict):
        raise ParseError(f"{path}: top level must be a mapping")
    try:
        return config_from_dict(d)
    except ValidationError as e:
        raise ValidationError(f"{path}: {e}") from None


def _params_dict(p) -> dict:
    return {f.name: getattr(p, f.name) for f in fields(p) if getattr(p, f.name) is not None}


def config_to_dict(cfg: ProjectConfig) -> dict:
    """Fully resolved configuration; ``config_from_dict`` inverts it."""
    areas = []
    for a in cfg.areas:
        units = []
        for uc in a.units:
            u = uc.unit
            fam = FAMILIES[u.kind][2]
            ud = {
                "name": u.name,
                "type": u.kind,
                "rating": uc.rating,
                "params": _params_dict(u.params),
                "identify": list(uc.free),
                "bounds": {p: [lo, hi] for p, lo, hi in zip(fam, uc.bounds.lb, uc.bounds.ub) if p in uc.free},
            }
            if u.kind in CONVERTERS:
                ud["operating_point"] = _params_dict(u.op)
                ud["coupling"] = _params_dict(u.coupling)
                ud["setpoints"] = list(u.setpoints)
            units.append(ud)
        ad = {"id": a.id, "H": a.H, "D": a.D, "H_bounds": list(a.H_bounds), "units": units}
        if a.D_bounds is not None:
            ad["D_bounds"] = list(a.D_bounds)
        areas.append(ad)
    return {
        "base": {"S_b": cfg.base.S_b, "f_b": cfg.base.f_b},
        "identification": _params_dict(cfg.ident),
        "areas": areas,
        "ties": [{"from": t.from_area, "to": t.to_area, "T_sync": t.T_sync} for t in cfg.ties],
        "scenarios": [
            {"id": s.id, "description": s.description, "duration": s.scenario.duration, "dt": s.scenario.dt,
             "events": [{"time": e.time, "channel": e.channel, "value": e.value} for e in s.scenario.events]}
            for s in cfg.scenarios
        ],
    }


def dump_config(cfg: ProjectConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


# ---- traces -------------------------------------------------------------------------

def read_trace_csv(path) -> SimTrace:
    """Read a ``t,<channel>,...`` CSV into a uniformly sampled trace."""
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
    except OSError as e:
        raise IoError(f"{path}: {e.strerror or e}") from e
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise EmptyFile(f"{path}: file is empty")
    header = [c.strip() for c in rows[0]]
    if header[0] != "t":
        raise ParseError(f"{path}: line 1: first column must be 't', got {header[0]!r}")
    seen = set()
    for c in header[1:]:
        if not c:
            raise ParseError(f"{path}: line 1: empty channel name")
        if c in seen or c == "t":
            raise DuplicateChannel(f"{path}: channel {c!r} appears more than once")
        seen.add(c)
    if len(rows) == 1:
        raise EmptyFile(f"{path}: no data rows")
    data = np.empty((len(rows) - 1, len(header)))
    for i, r in enumerate(rows[1:]):
        if len(r) != len(header):
            raise ParseError(f"{path}: line {i + 2}: expected {len(header)} fields, got {len(r)}")
        try:
            data[i] = [float(c) for c in r]
        except ValueError:
            raise ParseError(f"{path}: line {i + 2}: non-numeric field") from None
    t = data[:, 0]
    if np.any(np.diff(t) <= 0):
        raise NonuniformSampling(f"{path}: time column is not strictly increasing")
    try:
        return SimTrace(t, {c: data[:, j + 1] for j, c in enumerate(header[1:])})
    except NonuniformSampling as e:
        raise NonuniformSampling(f"{path}: {e}") from None


def write_trace_csv(trace: SimTrace, path, channels: Sequence[str] | None = None) -> None:
    """Write ``trace`` with full float precision; channels in the given or stored order."""
    names = list(channels) if channels is not None else trace.names
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["t", *names])
            cols = [trace.t] + [trace[n] for n in names]
            for k in range(len(trace)):
                w.writerow([repr(float(c[k])) for c in cols])
    except OSError as e:
        raise IoError(f"{path}: {e.strerror or e}") from e


# ---- results ------------------------------------------------------------------------

@dataclass
class ResultBundle:
    """Identified parameters, fit metrics and simulated traces of one run."""

    units: dict[str, IdentResult] = field(default_factory=dict)
    grid: IdentResult | None = None
    metrics: dict[str, dict[str, float]] = field(default_factory=dict)
    traces: dict[str, SimTrace] = field(default_factory=dict)

    def to_dict(self) -> dict:
        grid = None
        if self.grid is not None:
            g = self.grid.to_dict()
            ids = [n[2:] for n in self.grid.names if n.startswith("H_")]
            g["areas"] = [{"area": a, "H": self.grid.best_params[f"H_{a}"], "D": self.grid.best_params[f"D_{a}"]}
                          for a in ids]
            grid = g
        return {
            "units": {k: v.to_dict() for k, v in self.units.items()},
            "grid": grid,
            "metrics": self.metrics,
            "traces": sorted(f"{k}.csv" for k in self.traces),
        }


def dump_json(obj) -> str:
    """Canonical JSON text used for every result file."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True) + "\n"


def write_results(bundle: ResultBundle, directory, name: str = "results.json") -> list[Path]:
    """Write ``results.json`` plus one CSV per trace; returns the written paths."""
    d = Path(directory)
    try:
        d.mkdir(parents=True, exist_ok=True)
        out = d / name
        out.write_text(dump_json(bundle.to_dict()), encoding="utf-8")
    except OSError as e:
        raise IoError(f"{d}: {e.strerror or e}") from e
    written = [out]
    for k in sorted(bundle.traces):
        p = d / f"{k}.csv"
        write_trace_csv(bundle.traces[k], p)
        written.append(p)
    return written


def read_results(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise IoError(f"{path}: {e.strerror or e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: line {e.lineno}: {e.msg}") from None
