"""Unit-level transfer functions: converter coupling, grid-forming and
grid-following controls, hydro and thermal governors/turbines, load damping.

All quantities are per unit on the unit's own rating unless stated
otherwise; frequency deviations are per unit of the base angular speed.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

from .errors import DivisionByZero, ValidationError
from .lti import MimoTF, Polynomial, RationalTF, StateSpace, connect, tf_feedback, tf_to_ss


@dataclass(frozen=True)
class BaseQuantities:
    S_b: float = 100.0  # MVA
    f_b: float = 50.0  # Hz
    V_b: dict = field(default_factory=lambda: {"lv": 22.0, "hv": 345.0}, compare=False, hash=False)

    def __post_init__(self):
        if not (self.S_b > 0 and self.f_b > 0):
            raise ValidationError(f"base quantities must be positive (S_b={self.S_b}, f_b={self.f_b})")
        for level, v in self.V_b.items():
            if not v > 0:
                raise ValidationError(f"base voltage {level!r} must be positive, got {v}")

    @property
    def omega_b(self) -> float:
        return 2.0 * math.pi * self.f_b


@dataclass(frozen=True)
class CouplingParams:
    L_c: float = 0.2
    R_c: float = 0.005
    omega_g: float = 1.0

    def __post_init__(self):
        if not self.L_c > 0:
            raise ValidationError(f"L_c must be positive, got {self.L_c}")
        if self.R_c < 0:
            raise ValidationError(f"R_c must be non-negative, got {self.R_c}")


@dataclass(frozen=True)
class OperatingPoint:
    """Linearization point at the converter terminals.

    ``P0 = i_gd e_gd + i_gq e_gq`` and ``Q0 = i_gq e_gd - i_gd e_gq`` are the
    powers at the converter voltage ``E_g0 / delta0``; the grid voltage is
    ``V_g0 / theta0``. With phasors ``x = x_d + j x_q`` this makes
    ``P0 + j Q0 = conj(e) i``, so ``Q0`` has the opposite sign to ``Im(e conj(i))``.
    """

    P0: float
    Q0: float
    E_g0: float
    delta0: float
    V_g0: float = 1.0
    theta0: float = 0.0

    def __post_init__(self):
        if not self.V_g0 > 0:
            raise ValidationError(f"V_g0 must be positive, got {self.V_g0}")

    @property
    def e_gd0(self) -> float:
        return self.E_g0 * math.cos(self.delta0)

    @property
    def e_gq0(self) -> float:
        return self.E_g0 * math.sin(self.delta0)

    @classmethod
    def from_grid_injection(cls, P: float, Q: float, V_g0: float, theta0: float,
                            cp: CouplingParams) -> OperatingPoint:
        """Operating point of a converter injecting ``P, Q`` into a bus at ``V_g0``.

        ``Q`` uses the same sign convention as ``Q0``.
        """
        v = complex(V_g0 * math.cos(theta0), V_g0 * math.sin(theta0))
        i = complex(P, Q) / v.conjugate()
        e = v + complex(cp.R_c, cp.omega_g * cp.L_c) * i
        s_e = e.conjugate() * i
        return cls(P0=s_e.real, Q0=s_e.imag, E_g0=abs(e), delta0=math.atan2(e.imag, e.real),
                   V_g0=V_g0, theta0=theta0)


@dataclass(frozen=True)
class GridFormingParams:
    m_p: float = 0.02
    omega_c: float = 31.4
    T1: float = 0.033
    T2: float = 0.011

    def __post_init__(self):
        for name in ("m_p", "omega_c", "T1", "T2"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"grid-forming {name} must be positive, got {getattr(self, name)}")
        if self.T1 <= self.T2:
            warnings.warn(f"grid-forming lead-lag has T1={self.T1} <= T2={self.T2}", stacklevel=3)


@dataclass(frozen=True)
class GridFollowingParams:
    K_p_pll: float = 3800.0
    K_i_pll: float = 180.0
    zeta: float = 0.707
    omega_lpf: float = 2 * math.pi * 4.0
    K_p_c: float = 0.73
    K_i_c: float = 1.19
    R_p: float = 0.02

    def __post_init__(self):
        for name in ("K_p_pll", "K_i_pll", "K_p_c", "K_i_c"):
            if getattr(self, name) < 0:
                raise ValidationError(f"grid-following gain {name} must be >= 0, got {getattr(self, name)}")
        if not 0 < self.zeta <= 2:
            raise ValidationError(f"zeta must lie in (0, 2], got {self.zeta}")
        if not self.omega_lpf > 0:
            raise ValidationError(f"omega_lpf must be positive, got {self.omega_lpf}")
        if not self.R_p > 0:
            raise ValidationError(f"R_p must be positive, got {self.R_p}")


@dataclass(frozen=True)
class HydroParams:
    K_g: float = 1.0
    T_g: float = 0.3
    T_r: float = 13.75
    R_t: float = 0.75
    R: float = 0.05
    T_w: float = 1.0
    k: float = 1.0
    P0: float = 0.7

    def __post_init__(self):
        for name in ("T_g", "T_r", "R_t", "T_w", "R"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"hydro {name} must be positive, got {getattr(self, name)}")

    @property
    def alpha(self) -> tuple[float, float, float]:
        a = self.k * self.P0
        return a, a, 1.0


@dataclass(frozen=True)
class ThermalParams:
    k_g: float = 1.0
    T_g1: float = 0.25
    T_g2: float = 0.1
    T_rh: float = 7.0
    T_ch: float = 0.3
    F_hp: float = 0.3
    F_lp: float | None = None
    R: float = 0.05
    k: float = 1.0
    P0: float = 1.0

    def __post_init__(self):
        if self.F_lp is None:
            object.__setattr__(self, "F_lp", 1.0 - self.F_hp)
        if abs(self.F_hp + self.F_lp - 1.0) > 1e-9:
            raise ValidationError(f"F_hp + F_lp must equal 1, got {self.F_hp} + {self.F_lp}")
        for name in ("T_g1", "T_rh", "T_ch", "R"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"thermal {name} must be positive, got {getattr(self, name)}")
        if self.T_g2 < 0:
            raise ValidationError(f"thermal T_g2 must be >= 0, got {self.T_g2}")

    @property
    def beta(self) -> tuple[float, float, float]:
        return 1.0, 1.0, self.k * self.P0


@dataclass(frozen=True)
class LoadModel:
    P_l0: float
    k_pv: float = 1.0
    k_pf: float = 1.0
    V_n: float = 1.0
    V_g0: float = 1.0

    def __post_init__(self):
        if self.P_l0 < 0:
            raise ValidationError(f"P_l0 must be non-negative, got {self.P_l0}")


def _coupling_den(cp: CouplingParams, base: BaseQuantities) -> Polynomial:
    wb, L, R, b = base.omega_b, cp.L_c, cp.R_c, cp.omega_g * cp.L_c
    return Polynomial([R * R + b * b, 2 * R * L / wb, L * L / (wb * wb)])


def coupling_current_tfs(op: OperatingPoint, cp: CouplingParams, base: BaseQuantities) -> MimoTF:
    """Current deviations ``(i_gd, i_gq)`` driven by ``(delta, E_g)``."""
    a = Polynomial([cp.R_c, cp.L_c / base.omega_b])
    b = cp.omega_g * cp.L_c
    sd, cd, E = math.sin(op.delta0), math.cos(op.delta0), op.E_g0
    den = _coupling_den(cp, base)
    one = Polynomial([1.0])
    G_id_delta = RationalTF((a * (-sd) + one * (b * cd)) * E, den)
    G_iq_delta = RationalTF((a * cd + one * (b * sd)) * E, den)
    G_id_E = RationalTF(a * cd + one * (b * sd), den)
    G_iq_E = RationalTF(a * sd - one * (b * cd), den)
    return MimoTF([[G_id_delta, G_id_E], [G_iq_delta, G_iq_E]],
                  input_names=("delta", "E_g"), output_names=("i_gd", "i_gq"))


def coupling_power_tfs(op: OperatingPoint, cp: CouplingParams, base: BaseQuantities) -> MimoTF:
    """Active/reactive power deviations ``(P, Q)`` driven by ``(delta, E_g)``."""
    if op.E_g0 == 0:
        raise DivisionByZero("E_g0 = 0: power transfer coefficients divide by the converter voltage")
    wb, L, R, w = base.omega_b, cp.L_c, cp.R_c, cp.omega_g
    P0, Q0, E = op.P0, op.Q0, op.E_g0
    z2 = R * R + w * w * L * L
    den = _coupling_den(cp, base)

    T_P_delta = RationalTF([Q0 * z2 + E * E * w * L, 2 * Q0 * R * L / wb, Q0 * L * L / wb**2], den)
    # first-order coefficient carries no Laplace variable (typo in the printed form)
    T_Q_delta = RationalTF([E * E * R - P0 * z2, E * E * L / wb - 2 * P0 * L * R / wb, -P0 * L * L / wb**2], den)
    T_P_E = RationalTF([P0 / E * z2 + E * R, P0 / E * 2 * L * R / wb + E * L / wb, P0 / E * L * L / wb**2], den)
    T_Q_E = RationalTF([Q0 / E * z2 - E * w * L, Q0 / E * 2 * L * R / wb, Q0 / E * L * L / wb**2], den)
    return MimoTF([[T_P_delta, T_P_E], [T_Q_delta, T_Q_E]],
                  input_names=("delta", "E_g"), output_names=("P", "Q"))


def grid_forming_tfs(gf: GridFormingParams, t_p_delta: RationalTF, base: BaseQuantities) -> MimoTF:
    """Closed-loop active power of the reverse-droop grid-forming controller.

    Inputs: power set-point, frequency set-point, grid frequency (all pu).
    """
    wb = base.omega_b
    G1 = RationalTF([wb * gf.omega_c], [0.0, gf.omega_c, 1.0])
    G2 = RationalTF([1.0, gf.T2], [1.0, gf.T1])
    loop = gf.m_p * G1 * t_p_delta * G2
    closure = tf_feedback(RationalTF.gain(1.0), loop)
    G_set = gf.m_p * G1 * t_p_delta * closure
    G_wset = G1 * t_p_delta * closure
    G_wg = -(t_p_delta * RationalTF([wb], [0.0, 1.0])) * closure
    return MimoTF([[G_set, G_wset, G_wg]],
                  input_names=("P_set", "omega_set", "omega_g"), output_names=("P",))


def pi_tf(kp: float, ki: float) -> RationalTF:
    return RationalTF([ki, kp], [0.0, 1.0])


def second_order_lpf(omega: float, zeta: float) -> RationalTF:
    return RationalTF([omega * omega], [omega * omega, 2 * zeta * omega, 1.0])


def pll_tfs(gfl: GridFollowingParams, V_g0: float) -> tuple[RationalTF, RationalTF]:
    """PLL angle and filtered-frequency responses to a grid frequency deviation.

    Returns ``(G_delta_omega, G_omegapll_omega)``.
    """
    if not V_g0 > 0:
        raise ValidationError(f"V_g0 must be positive, got {V_g0}")
    pi_v = V_g0 * pi_tf(gfl.K_p_pll, gfl.K_i_pll)
    integrator = RationalTF([1.0], [0.0, 1.0])
    G_delta = tf_feedback(integrator, pi_v)
    G_track = tf_feedback(integrator * pi_v, RationalTF.gain(1.0))
    G_wpll = second_order_lpf(gfl.omega_lpf, gfl.zeta) * G_track
    return G_delta, G_wpll


#: Sign of the loop gain in the q-axis current closure ``PI G / (1 + sign * PI G)``.
Q_LOOP_SIGN = 1.0


def grid_following_tfs(gfl: GridFollowingParams, op: OperatingPoint, cp: CouplingParams,
                       base: BaseQuantities) -> MimoTF:
    """Closed-loop active power of a PLL-synchronized current-controlled converter.

    Inputs: active power set-point, reactive power set-point, grid frequency.
    """
    ed, eq = op.e_gd0, op.e_gq0
    if abs(ed) <= 1e-12 * op.E_g0:
        raise DivisionByZero("e_gd0 = 0: current references divide by the d-axis voltage")
    cur = coupling_current_tfs(op, cp, base)
    G_id_d, G_id_E = cur["i_gd", "delta"], cur["i_gd", "E_g"]
    G_iq_d, G_iq_E = cur["i_gq", "delta"], cur["i_gq", "E_g"]
    pic = pi_tf(gfl.K_p_c, gfl.K_i_c)
    G_delta, G_wpll = pll_tfs(gfl, op.V_g0)

    d_loop = pic * G_id_E
    d_track = tf_feedback(d_loop, RationalTF.gain(1.0))
    d_sens = tf_feedback(RationalTF.gain(1.0), d_loop)

    if eq == 0:
        G_q = RationalTF([0.0])
    else:
        q_loop = pic * G_iq_E
        G_q = (eq / ed) * tf_feedback(q_loop, RationalTF.gain(Q_LOOP_SIGN))

    angle = (G_id_d * ed + G_iq_d * eq) * G_delta * d_sens
    droop = d_track * G_wpll * (1.0 / gfl.R_p)
    G_w = angle - droop
    return MimoTF([[d_track, G_q, G_w]],
                  input_names=("P_set", "Q_set", "omega_g"), output_names=("P",))


def hydro_tf(hp: HydroParams) -> RationalTF:
    """Governor with transient droop compensation and linear turbine; input ``P* - dw/R``."""
    a1, a2, a3 = hp.alpha
    gov = RationalTF([hp.K_g], [1.0, hp.T_g])
    droop = RationalTF([1.0, hp.T_r], [1.0, hp.R_t / hp.R * hp.T_r])
    turbine = RationalTF([a3, -a3 * a2 * hp.T_w], [1.0, a1 * hp.T_w / 2.0])
    return gov * droop * turbine


def thermal_tf(tp: ThermalParams) -> RationalTF:
    """Lead-lag governor with reheat steam turbine; input ``P* - dw/R``."""
    b1, b2, b3 = tp.beta
    gov = RationalTF([tp.k_g, tp.k_g * tp.T_g2], [1.0, tp.T_g1])
    turbine = RationalTF([b3, b3 * tp.F_hp * b1 * tp.T_rh],
                         Polynomial([1.0, b2 * tp.T_rh]) * Polynomial([1.0, tp.T_ch]))
    return gov * turbine


def load_damping_coeff(lm: LoadModel) -> float:
    """Frequency sensitivity ``K`` of an exponential/frequency-proportional load."""
    if not lm.V_n > 0:
        raise ValidationError(f"V_n must be positive, got {lm.V_n}")
    return lm.P_l0 * (lm.V_g0 / lm.V_n) ** lm.k_pv * lm.k_pf


# ---- state-space forms --------------------------------------------------------------
# Built from small blocks whose matrices are polynomial in the parameters, so that
# simulated responses vary smoothly with them (no root finding involved).

def _chain(*tfs: RationalTF) -> StateSpace:
    blocks = {f"b{i}": tf_to_ss(g) for i, g in enumerate(tfs)}
    wiring = {"b0.u": {"u": 1.0}}
    wiring.update({f"b{i}.u": {f"b{i - 1}.y": 1.0} for i in range(1, len(tfs))})
    return connect(blocks, ["u"], wiring, {"P": {f"b{len(tfs) - 1}.y": 1.0}})


def hydro_ss(hp: HydroParams) -> StateSpace:
    """State-space form of :func:`hydro_tf`."""
    a1, a2, a3 = hp.alpha
    return _chain(
        RationalTF([hp.K_g], [1.0, hp.T_g]),
        RationalTF([1.0, hp.T_r], [1.0, hp.R_t / hp.R * hp.T_r]),
        RationalTF([a3, -a3 * a2 * hp.T_w], [1.0, a1 * hp.T_w / 2.0]),
    )


def thermal_ss(tp: ThermalParams) -> StateSpace:
    """State-space form of :func:`thermal_tf`."""
    b1, b2, b3 = tp.beta
    return _chain(
        RationalTF([tp.k_g, tp.k_g * tp.T_g2], [1.0, tp.T_g1]),
        RationalTF([b3, b3 * tp.F_hp * b1 * tp.T_rh], [1.0, b2 * tp.T_rh]),
        RationalTF([1.0], [1.0, tp.T_ch]),
    )


def grid_forming_ss(gf: GridFormingParams, t_p_delta: RationalTF, base: BaseQuantities) -> StateSpace:
    """State-space form of :func:`grid_forming_tfs`."""
    blocks = {
        "lpf": tf_to_ss(RationalTF([gf.omega_c], [gf.omega_c, 1.0])),
        "int": tf_to_ss(RationalTF([base.omega_b], [0.0, 1.0])),
        "T": tf_to_ss(t_p_delta),
        "G2": tf_to_ss(RationalTF([1.0, gf.T2], [1.0, gf.T1])),
    }
    wiring = {
        "lpf.u": {"omega_set": 1.0, "P_set": gf.m_p, "G2.y": -gf.m_p},
        "int.u": {"lpf.y": 1.0, "omega_g": -1.0},
        "T.u": {"int.y": 1.0},
        "G2.u": {"T.y": 1.0},
    }
    return connect(blocks, ["P_set", "omega_set", "omega_g"], wiring, {"P": {"T.y": 1.0}})


def grid_following_ss(gfl: GridFollowingParams, op: OperatingPoint, cp: CouplingParams,
                      base: BaseQuantities) -> StateSpace:
    """State-space form of :func:`grid_following_tfs`."""
    ed, eq = op.e_gd0, op.e_gq0
    if abs(ed) <= 1e-12 * op.E_g0:
        raise DivisionByZero("e_gd0 = 0: current references divide by the d-axis voltage")
    if not op.V_g0 > 0:
        raise ValidationError(f"V_g0 must be positive, got {op.V_g0}")
    cur = coupling_current_tfs(op, cp, base)
    g_dd, g_qd = cur["i_gd", "delta"], cur["i_gq", "delta"]
    dist = RationalTF(g_dd.num + g_qd.num * (eq / ed), g_dd.den)
    V, w = op.V_g0, gfl.omega_lpf
    kp, ki = gfl.K_p_pll * V, gfl.K_i_pll * V
    blocks = {
        "pll_d": tf_to_ss(RationalTF([0.0, 1.0], [ki, kp, 1.0])),
        "lpf": tf_to_ss(RationalTF([w * w], [w * w, 2 * gfl.zeta * w, 1.0])),
        "track": tf_to_ss(RationalTF([ki, kp], [ki, kp, 1.0])),
        "pi_d": tf_to_ss(RationalTF([gfl.K_i_c, gfl.K_p_c], [0.0, 1.0])),
        "Gd": tf_to_ss(cur["i_gd", "E_g"]),
        "dist": tf_to_ss(dist),
    }
    wiring = {
        "pll_d.u": {"omega_g": 1.0},
        "lpf.u": {"omega_g": 1.0},
        "track.u": {"lpf.y": 1.0},
        "pi_d.u": {"P_set": 1.0 / ed, "track.y": -1.0 / (gfl.R_p * ed), "Gd.y": -1.0, "dist.y": -1.0},
        "Gd.u": {"pi_d.y": 1.0},
        "dist.u": {"pll_d.y": 1.0},
    }
    out = {"Gd.y": ed, "dist.y": ed}
    if eq != 0:
        blocks["pi_q"] = tf_to_ss(RationalTF([gfl.K_i_c, gfl.K_p_c], [0.0, 1.0]))
        blocks["Gq"] = tf_to_ss(cur["i_gq", "E_g"])
        wiring["pi_q.u"] = {"Q_set": 1.0, "Gq.y": -Q_LOOP_SIGN}
        wiring["Gq.u"] = {"pi_q.y": 1.0}
        out["Gq.y"] = eq / ed
    return connect(blocks, ["P_set", "Q_set", "omega_g"], wiring, {"P": out})
