"""Synthetic measurement traces from known-parameter models."""
from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence, Union

import numpy as np
import yaml

from .assembly import (
    AreaSpec,
    GridFollowingUnit,
    GridFormingUnit,
    Scenario,
    SystemModel,
    TieLine,
    UnitModel,
    assemble_system,
    simulate_scenario,
)
from .errors import UnknownChannel, ValidationError
from .lti import SimTrace, simulate_ss, uniform_time
from .plants import BaseQuantities

REFERENCE_CONFIG = "three_area.yaml"


@dataclass(frozen=True)
class SynthSpec:
    """What to simulate and how to corrupt it.

    ``model`` is either one unit, driven by its own input channels
    (``P_set``, ``omega`` and converter set-points), or the areas of a system
    joined by ``ties``. Noise is added to measured channels only, never to the
    scenario inputs.
    """

    model: Union[UnitModel, Sequence[AreaSpec]]
    scenario: Scenario
    ties: tuple[TieLine, ...] = ()
    base: BaseQuantities = field(default_factory=BaseQuantities)
    noise_std: float = 0.0
    seed: int = 0
    channels: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.noise_std >= 0:
            raise ValidationError(f"noise_std must be >= 0, got {self.noise_std}")
        object.__setattr__(self, "ties", tuple(self.ties))
        if self.channels is not None:
            object.__setattr__(self, "channels", tuple(self.channels))


def _is_unit(model) -> bool:
    return hasattr(model, "kind") and hasattr(model, "name")


def regulating_input(p_set: np.ndarray, omega: np.ndarray, R: float) -> np.ndarray:
    """Governor drive ``P_set - omega / R`` of a conventional unit."""
    return p_set - omega / R


def _unit_trace(unit: UnitModel, sc: Scenario, base: BaseQuantities) -> tuple[SimTrace, set[str]]:
    ss = unit.ss(base)
    t = uniform_time(sc.duration, sc.dt)
    U = {c: np.zeros(t.shape) for c in ss.input_names}
    for e in sc.events:
        if e.channel not in U:
            raise UnknownChannel(f"unit {unit.name} has no input {e.channel!r}; inputs are {list(U)}")
        U[e.channel][int(np.ceil(e.time / sc.dt - 1e-9)):] += e.value
    y = simulate_ss(ss, np.column_stack([U[c] for c in ss.input_names]), sc.dt)[:, 0]
    chans = dict(U)
    chans["P"] = y
    if not isinstance(unit, (GridFormingUnit, GridFollowingUnit)):
        chans["u"] = regulating_input(U["P_set"], U["omega"], unit.params.R)
    return SimTrace(t, chans), set(U)


def _system_trace(sys: SystemModel, areas: Sequence[AreaSpec], sc: Scenario) -> tuple[SimTrace, set[str]]:
    tr = simulate_scenario(sys, sc)
    extra = {}
    for a in areas:
        for u in a.units:
            if isinstance(u, (GridFormingUnit, GridFollowingUnit)):
                continue
            p_set = tr[f"{u.name}.P_set"] if f"{u.name}.P_set" in tr else np.zeros(len(tr))
            extra[f"{u.name}.u"] = regulating_input(p_set, tr[f"{a.id}.omega"], u.params.R)
    return tr.merged(SimTrace(tr.t, extra)), set(sys.inputs)


def generate(spec: SynthSpec) -> SimTrace:
    """Simulate the scenario and optionally add seeded white noise.

    Conventional units also get their regulating input exported
    (``u`` for a single unit, ``<unit>.u`` in a system).
    """
    if _is_unit(spec.model):
        tr, inputs = _unit_trace(spec.model, spec.scenario, spec.base)
    else:
        areas = list(spec.model)
        sys = assemble_system(areas, spec.ties, spec.base)
        tr, inputs = _system_trace(sys, areas, spec.scenario)
    if spec.noise_std > 0:
        rng = np.random.default_rng(spec.seed)
        noisy = {}
        for name in tr.names:  # fixed order keeps the draw reproducible
            v = tr[name]
            noisy[name] = v if name in inputs else v + rng.normal(0.0, spec.noise_std, v.shape)
        tr = SimTrace(tr.t, noisy)
    if spec.channels is not None:
        missing = [c for c in spec.channels if c not in tr]
        if missing:
            raise UnknownChannel(f"requested channels {missing} are not produced by the model")
        tr = tr.select(spec.channels)
    return tr


def reference_config_text() -> str:
    return resources.files("freqstab").joinpath("data", REFERENCE_CONFIG).read_text(encoding="utf-8")


def reference_scenarios():
    """``(name, config, scenario)`` for the shipped three-area cases ``a`` to ``d``."""
    from .io import config_from_dict

    cfg = config_from_dict(yaml.safe_load(reference_config_text()))
    return [(s.id, cfg, s.scenario) for s in cfg.scenarios]
