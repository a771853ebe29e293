"""Bounded multistart least-squares identification of unit and area parameters.

Step 1 fits each generating unit's transfer function to its measured power
response; step 2 fits area inertia and damping to the measured area
frequencies with the step-1 unit models held fixed.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import least_squares

from .assembly import AreaSpec, TieLine, assemble_system
from .errors import ConstantReference, DimensionMismatch, EmptyTrace, InfeasibleBounds, UnidentifiableInput, ValidationError
from .lti import SimTrace, StateSpace, select_inputs, simulate_ss
from .plants import (
    BaseQuantities,
    CouplingParams,
    GridFollowingParams,
    GridFormingParams,
    HydroParams,
    LoadModel,
    OperatingPoint,
    ThermalParams,
    coupling_power_tfs,
    grid_following_ss,
    grid_forming_ss,
    hydro_ss,
    load_damping_coeff,
    thermal_ss,
)

#: Input channels with RMS below this carry no excitation.
EXCITATION_FLOOR = 1e-9
#: Finite-difference step relative to max(1, |x|).
FD_STEP = 1e-6


# ---- metrics ------------------------------------------------------------------------

def _pair(y_model, y_measured) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(y_model, dtype=float).ravel()
    b = np.asarray(y_measured, dtype=float).ravel()
    if a.shape != b.shape:
        raise DimensionMismatch(f"model has {a.size} samples, measurement has {b.size}")
    return a, b


def r_squared(y_model, y_measured) -> float:
    """Coefficient of determination ``1 - RSS/TSS`` against the measurement."""
    y, yhat = _pair(y_model, y_measured)
    if y.size < 2:
        raise EmptyTrace("r_squared needs at least two samples")
    tss = float(np.sum((yhat - yhat.mean()) ** 2))
    if tss == 0.0:
        raise ConstantReference("measured signal is constant; R² is undefined")
    return 1.0 - float(np.sum((y - yhat) ** 2)) / tss


def rms_error(y_model, y_measured) -> float:
    y, yhat = _pair(y_model, y_measured)
    if y.size == 0:
        raise EmptyTrace("rms_error needs at least one sample")
    return math.sqrt(float(np.mean((y - yhat) ** 2)))


# ---- bounds -------------------------------------------------------------------------

def inertia_bounds(H_theoretical: float) -> tuple[float, float]:
    """±20 % box around the nameplate inertia constant."""
    if not H_theoretical > 0:
        raise ValidationError(f"theoretical H must be positive, got {H_theoretical}")
    return 0.8 * H_theoretical, 1.2 * H_theoretical


def damping_bounds(loads: Sequence[LoadModel], kpv_range: tuple[float, float],
                   kpf_range: tuple[float, float]) -> tuple[float, float]:
    """Extreme aggregate load damping over the exponent and gain ranges.

    Each load's K grows with ``k_pf``; it grows with ``k_pv`` iff ``V_g0 > V_n``.
    """
    (pv_lo, pv_hi), (pf_lo, pf_hi) = kpv_range, kpf_range
    if pv_lo > pv_hi or pf_lo > pf_hi:
        raise ValidationError(f"ranges must be ordered, got k_pv {kpv_range}, k_pf {kpf_range}")
    d_min = d_max = 0.0
    for lm in loads:
        rising = lm.V_g0 > lm.V_n
        lo = LoadModel(lm.P_l0, pv_lo if rising else pv_hi, pf_lo, lm.V_n, lm.V_g0)
        hi = LoadModel(lm.P_l0, pv_hi if rising else pv_lo, pf_hi, lm.V_n, lm.V_g0)
        d_min += load_damping_coeff(lo)
        d_max += load_damping_coeff(hi)
    return d_min, d_max


@dataclass(frozen=True)
class BoundsBox:
    names: tuple[str, ...]
    lb: tuple[float, ...]
    ub: tuple[float, ...]

    def __post_init__(self):
        names, lb, ub = tuple(self.names), tuple(map(float, self.lb)), tuple(map(float, self.ub))
        if not (len(names) == len(lb) == len(ub)):
            raise InfeasibleBounds(f"{len(names)} names, {len(lb)} lower and {len(ub)} upper bounds")
        if len(set(names)) != len(names):
            raise InfeasibleBounds(f"duplicate parameter names {names}")
        for n, lo, hi in zip(names, lb, ub):
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise InfeasibleBounds(f"bounds of {n} must be finite, got [{lo}, {hi}]")
            if lo > hi:
                raise InfeasibleBounds(f"empty box for {n}: [{lo}, {hi}]")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "ub", ub)

    @classmethod
    def from_dict(cls, d: Mapping[str, Sequence[float]]) -> BoundsBox:
        return cls(tuple(d), tuple(v[0] for v in d.values()), tuple(v[1] for v in d.values()))

    def to_dict(self) -> dict[str, list[float]]:
        return {n: [lo, hi] for n, lo, hi in zip(self.names, self.lb, self.ub)}

    def restricted(self, names: Sequence[str]) -> BoundsBox:
        missing = [n for n in names if n not in self.names]
        if missing:
            raise InfeasibleBounds(f"no bounds given for {missing}")
        idx = [self.names.index(n) for n in names]
        return BoundsBox(tuple(names), tuple(self.lb[i] for i in idx), tuple(self.ub[i] for i in idx))

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= np.array(self.lb)) and np.all(x <= np.array(self.ub)))


@dataclass(frozen=True)
class MultistartConfig:
    n_starts: int = 20
    rng_seed: int = 0
    local_tol: float = 1e-12
    max_evals: int = 2000

    def __post_init__(self):
        if self.n_starts < 1:
            raise ValidationError(f"n_starts must be >= 1, got {self.n_starts}")
        if not self.local_tol > 0:
            raise ValidationError(f"local_tol must be positive, got {self.local_tol}")
        if self.max_evals < 1:
            raise ValidationError(f"max_evals must be >= 1, got {self.max_evals}")


@dataclass(frozen=True)
class StartRecord:
    x0: tuple[float, ...]
    x: tuple[float, ...]
    sse: float
    nfev: int
    status: int


@dataclass(frozen=True)
class IdentResult:
    names: tuple[str, ...]
    best_params: dict
    sse: float
    r2: float
    starts: tuple[StartRecord, ...]
    best_index: int
    sse_scale: float
    fixed: dict = field(default_factory=dict)

    def converged_fraction(self, rel: float = 1e-6) -> float:
        """Share of starts whose SSE is within ``rel`` of the best.

        The gap is measured against ``max(best SSE, sse_scale)``, where
        ``sse_scale`` is the squared norm of the measured signal, so that
        noiseless fits with a best SSE near zero are judged on a fixed scale.
        """
        ref = max(self.sse, self.sse_scale)
        ok = sum(1 for s in self.starts if s.sse - self.sse <= rel * ref)
        return ok / len(self.starts)

    def to_dict(self) -> dict:
        return {
            "params": {n: self.best_params[n] for n in self.names},
            "fixed": dict(self.fixed),
            "sse": self.sse,
            "r2": self.r2,
            "best_start": self.best_index,
            "converged_fraction": self.converged_fraction(),
            "starts": [
                {"x0": list(s.x0), "x": list(s.x), "sse": s.sse, "nfev": s.nfev, "status": s.status}
                for s in self.starts
            ],
        }


# ---- engine -------------------------------------------------------------------------

def multistart_lsq(residual: Callable[[np.ndarray], np.ndarray], bounds: BoundsBox,
                   cfg: MultistartConfig) -> tuple[int, list[StartRecord]]:
    """Bounded trust-region least squares from uniformly sampled starts.

    Parameters with ``lb == ub`` are held at that value. Starts run in index
    order; the best is the lowest SSE, ties going to the lowest index.
    """
    lb, ub = np.array(bounds.lb), np.array(bounds.ub)
    free = lb < ub
    rng = np.random.default_rng(cfg.rng_seed)
    X0 = rng.uniform(lb, ub, size=(cfg.n_starts, lb.size))

    def full(z):
        x = lb.copy()
        x[free] = z
        return x

    def sse_at(x):
        r = residual(x)
        return float(r @ r)

    records = []
    for x0 in X0:
        if free.any():
            sol = least_squares(
                lambda z: residual(full(z)), x0[free], bounds=(lb[free], ub[free]), method="trf",
                jac="2-point", diff_step=FD_STEP, x_scale="jac", ftol=cfg.local_tol, xtol=cfg.local_tol,
                gtol=cfg.local_tol, max_nfev=cfg.max_evals,
            )
            x = np.clip(full(sol.x), lb, ub)
            nfev, status = int(sol.nfev), int(sol.status)
        else:
            x, nfev, status = lb.copy(), 1, 1
        records.append(StartRecord(tuple(x0.tolist()), tuple(x.tolist()), sse_at(x), nfev, status))
    best = min(range(len(records)), key=lambda i: (records[i].sse, i))
    return best, records


def _excited(trace: SimTrace, channels: Sequence[str]) -> dict[str, bool]:
    out = {}
    for c in channels:
        if c not in trace:
            out[c] = False
            continue
        v = trace[c]
        out[c] = bool(np.sqrt(np.mean(v * v)) >= EXCITATION_FLOOR) if v.size else False
    return out


_PROBE_S = 1j * np.logspace(-3, 3, 13) + 0.05


def _check_identifiable(build: Callable[[np.ndarray], StateSpace], bounds: BoundsBox,
                        live: Sequence[str]) -> None:
    """Every free parameter must move the response of some excited channel."""
    if not live:
        raise UnidentifiableInput("no input channel carries excitation")
    lb, ub = np.array(bounds.lb), np.array(bounds.ub)
    mid = 0.5 * (lb + ub)

    def resp(x):
        ss = select_inputs(build(x), live)
        return np.array([ss.evaluate(s)[0] for s in _PROBE_S])

    r0 = resp(mid)
    scale = np.max(np.abs(r0))
    if scale == 0.0:
        raise UnidentifiableInput(f"model response to the excited channels {list(live)} is identically zero")
    for i, name in enumerate(bounds.names):
        if lb[i] == ub[i]:
            continue
        x = mid.copy()
        x[i] += 0.25 * (ub[i] - lb[i])
        if np.max(np.abs(resp(x) - r0)) <= 1e-12 * scale:
            raise UnidentifiableInput(f"parameter {name} does not affect the excited channels {list(live)}")


def _fit_unit(trace: SimTrace, output: str, inputs: Sequence[str], build: Callable[[np.ndarray], StateSpace],
              bounds: BoundsBox, cfg: MultistartConfig, fixed: Mapping, ramp: Sequence[str] = ()) -> IdentResult:
    if len(trace) == 0:
        raise EmptyTrace("measurement trace has no samples")
    if output not in trace:
        raise ValidationError(f"measurement trace lacks output channel {output!r}")
    exc = _excited(trace, inputs)
    live = [c for c in inputs if exc[c]]
    _check_identifiable(build, bounds, live)
    yhat = trace[output]
    U = np.column_stack([trace[c] for c in live])
    dt = trace.dt
    flags = [c in ramp for c in live]

    def simulate(x):
        return simulate_ss(select_inputs(build(x), live), U, dt, flags)[:, 0]

    def residual(x):
        r = simulate(x) - yhat
        return r if np.all(np.isfinite(r)) else np.full_like(r, 1e150)

    best, records = multistart_lsq(residual, bounds, cfg)
    xb = np.array(records[best].x)
    return IdentResult(
        names=bounds.names,
        best_params=dict(zip(bounds.names, xb.tolist())),
        sse=records[best].sse,
        r2=r_squared(simulate(xb), yhat),
        starts=tuple(records),
        best_index=best,
        sse_scale=float(yhat @ yhat),
        fixed=dict(fixed),
    )


HYDRO_FREE = ("T_g", "T_r", "R_t")
THERMAL_FREE = ("T_g1", "T_g2", "T_rh", "T_ch", "F_hp")
GFM_FREE = ("omega_c", "T1", "T2")
GFL_FREE = ("K_i_pll", "K_p_pll", "K_i_c", "K_p_c", "omega_lpf")


def _named(ss: StateSpace, names: Sequence[str]) -> StateSpace:
    return StateSpace(ss.A, ss.B, ss.C, ss.D, input_names=tuple(names), output_names=("P",))


def identify_hydro(trace: SimTrace, fixed: Mapping, bounds: BoundsBox, cfg: MultistartConfig = MultistartConfig(),
                   input: str = "u", output: str = "P", ramp: Sequence[str] = ()) -> IdentResult:
    """Fit ``T_g, T_r, R_t`` of the hydro model driven by the regulating input ``P* - dw/R``.

    ``fixed`` supplies the remaining hydro parameters (``K_g, R, k, P0, T_w``).
    Input channels named in ``ramp`` are interpolated linearly between
    samples instead of held.
    """
    b = bounds.restricted(HYDRO_FREE)
    fx = {k: float(v) for k, v in fixed.items() if k not in HYDRO_FREE}

    def build(x):
        return _named(hydro_ss(HydroParams(**fx, **dict(zip(HYDRO_FREE, x)))), [input])

    return _fit_unit(trace, output, [input], build, b, cfg, fx, ramp)


def identify_thermal(trace: SimTrace, fixed: Mapping, bounds: BoundsBox, cfg: MultistartConfig = MultistartConfig(),
                     input: str = "u", output: str = "P", ramp: Sequence[str] = ()) -> IdentResult:
    """Fit ``T_g1, T_g2, T_rh, T_ch, F_hp``; ``F_lp`` follows as ``1 - F_hp``."""
    b = bounds.restricted(THERMAL_FREE)
    fx = {k: float(v) for k, v in fixed.items() if k not in THERMAL_FREE + ("F_lp",)}

    def build(x):
        return _named(thermal_ss(ThermalParams(**fx, **dict(zip(THERMAL_FREE, x)))), [input])

    return _fit_unit(trace, output, [input], build, b, cfg, fx, ramp)


def identify_grid_forming(trace: SimTrace, m_p: float, op: OperatingPoint, bounds: BoundsBox,
                          cfg: MultistartConfig = MultistartConfig(), cp: CouplingParams = CouplingParams(),
                          base: BaseQuantities = BaseQuantities(), output: str = "P",
                          ramp: Sequence[str] = ()) -> IdentResult:
    """Fit ``omega_c, T1, T2`` of the grid-forming loop to inputs ``P_set, omega_set, omega_g``."""
    b = bounds.restricted(GFM_FREE)
    t_p_delta = coupling_power_tfs(op, cp, base)["P", "delta"]

    def build(x):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # trial points may invert the lead-lag
            gf = GridFormingParams(m_p=m_p, **dict(zip(GFM_FREE, x)))
        return grid_forming_ss(gf, t_p_delta, base)

    return _fit_unit(trace, output, ["P_set", "omega_set", "omega_g"], build, b, cfg, {"m_p": m_p}, ramp)


def identify_grid_following(trace: SimTrace, op: OperatingPoint, bounds: BoundsBox,
                            cfg: MultistartConfig = MultistartConfig(), R_p: float = 0.02, zeta: float = 0.707,
                            cp: CouplingParams = CouplingParams(), base: BaseQuantities = BaseQuantities(),
                            output: str = "P", ramp: Sequence[str] = ()) -> IdentResult:
    """Fit PLL and current-loop gains and the PLL filter bandwidth.

    Inputs are ``P_set, Q_set, omega_g``.
    """
    b = bounds.restricted(GFL_FREE)

    def build(x):
        gfl = GridFollowingParams(R_p=R_p, zeta=zeta, **dict(zip(GFL_FREE, x)))
        return grid_following_ss(gfl, op, cp, base)

    return _fit_unit(trace, output, ["P_set", "Q_set", "omega_g"], build, b, cfg, {"R_p": R_p, "zeta": zeta}, ramp)


# ---- grid step ----------------------------------------------------------------------

class _SwingTemplate:
    """Assembled system whose swing rows are rescaled for trial ``(H, D)`` values."""

    def __init__(self, areas: Sequence[AreaSpec], ties: Sequence[TieLine], base: BaseQuantities):
        unit = [AreaSpec(a.id, 0.5, 0.0, a.units) for a in areas]  # 2H = 1, D = 0
        self.sys = assemble_system(unit, ties, base)
        ss = self.sys.ss
        self.rows = []
        for a in areas:
            c = ss.C[self.sys.output_index(f"{a.id}.omega")]
            self.rows.append(int(np.flatnonzero(c)[0]))

    def state_space(self, H: Sequence[float], D: Sequence[float]) -> StateSpace:
        ss = self.sys.ss
        A, B = ss.A.copy(), ss.B.copy()
        for w, h, d in zip(self.rows, H, D):
            A[w, w] -= d
            A[w] /= 2.0 * h
            B[w] /= 2.0 * h
        return StateSpace(A, B, ss.C, ss.D, input_names=ss.input_names, output_names=ss.output_names)


def identify_grid(trace: SimTrace, areas: Sequence[AreaSpec], ties: Sequence[TieLine], bounds: BoundsBox,
                  cfg: MultistartConfig = MultistartConfig(), base: BaseQuantities = BaseQuantities()) -> IdentResult:
    """Fit ``H_<area>`` and ``D_<area>`` to measured area frequencies ``<area>.omega``.

    Unit models come from ``areas`` and stay fixed; the ``H``/``D`` values in
    ``areas`` are ignored. Input channels of the assembled system missing from
    ``trace`` are taken as zero.
    """
    if len(trace) == 0:
        raise EmptyTrace("measurement trace has no samples")
    names = [n for a in areas for n in (f"H_{a.id}", f"D_{a.id}")]
    b = bounds.restricted(names)
    for a in areas:
        if b.lb[b.names.index(f"H_{a.id}")] <= 0:
            raise InfeasibleBounds(f"H_{a.id} lower bound must be positive")
        if b.lb[b.names.index(f"D_{a.id}")] < 0:
            raise InfeasibleBounds(f"D_{a.id} lower bound must be non-negative")
    tpl = _SwingTemplate(areas, ties, base)
    ss0 = tpl.sys.ss
    present = [c for c in ss0.input_names if c in trace]
    if not present or not any(_excited(trace, present).values()):
        raise UnidentifiableInput("no excited input channel for the grid model")
    U = np.column_stack([trace[c] if c in trace else np.zeros(len(trace)) for c in ss0.input_names])
    outs = [f"{a.id}.omega" for a in areas]
    missing = [o for o in outs if o not in trace]
    if missing:
        raise ValidationError(f"measurement trace lacks area frequency channels {missing}")
    rows = [ss0.output_names.index(o) for o in outs]
    yhat = np.concatenate([trace[o] for o in outs])
    dt = trace.dt

    def simulate(x):
        H, D = x[0::2], x[1::2]
        ss = tpl.state_space(H, D)
        sub = StateSpace(ss.A, ss.B, ss.C[rows], ss.D[rows])
        return simulate_ss(sub, U, dt).T.ravel()

    def residual(x):
        r = simulate(x) - yhat
        return r if np.all(np.isfinite(r)) else np.full_like(r, 1e150)

    best, records = multistart_lsq(residual, b, cfg)
    xb = np.array(records[best].x)
    return IdentResult(
        names=b.names,
        best_params=dict(zip(b.names, xb.tolist())),
        sse=records[best].sse,
        r2=r_squared(simulate(xb), yhat),
        starts=tuple(records),
        best_index=best,
        sse_scale=float(yhat @ yhat),
    )
