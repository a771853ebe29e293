"""Rational transfer-function algebra and sampled-time linear simulation.

Polynomials store coefficients in ascending powers of ``s``. Every
closed-loop model in the package is built from :class:`RationalTF`
objects, realized in controllable canonical form and simulated with an
exact zero-order-hold discretization.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numba
import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.linalg import expm, matrix_balance

from .errors import (
    DegenerateLoop,
    DimensionMismatch,
    EmptyTrace,
    ImproperSystem,
    NonuniformSampling,
    UnknownChannel,
)

#: Roots of numerator and denominator closer than this are cancelled.
CANCEL_TOL = 1e-8

_EPS = np.finfo(float).eps
# highest-order coefficients this far below the largest one are dropped
_TRIM_REL = 1e-30


@dataclass(frozen=True)
class Polynomial:
    """Real polynomial in ``s``; ``coeffs[k]`` multiplies ``s**k``."""

    coeffs: tuple[float, ...]

    def __init__(self, coeffs: Sequence[float] | float = ()):
        if np.isscalar(coeffs):
            coeffs = [coeffs]
        c = [float(v) for v in coeffs]
        if any(not math.isfinite(v) for v in c):
            raise ValueError(f"non-finite polynomial coefficient in {c}")
        floor = _TRIM_REL * max((abs(v) for v in c), default=0.0)
        while c and abs(c[-1]) <= floor:
            c.pop()
        object.__setattr__(self, "coeffs", tuple(c))

    @classmethod
    def from_roots(cls, roots, lead: float = 1.0) -> Polynomial:
        if len(roots) == 0:
            return cls([lead])
        c = npoly.polyfromroots(np.asarray(roots, dtype=complex))
        return cls(lead * np.real(c))

    @property
    def array(self) -> np.ndarray:
        return np.array(self.coeffs if self.coeffs else (0.0,))

    @property
    def degree(self) -> int:
        """Degree; -1 for the zero polynomial."""
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return not self.coeffs

    @property
    def lead(self) -> float:
        return self.coeffs[-1] if self.coeffs else 0.0

    def __call__(self, s):
        return npoly.polyval(s, self.array)

    def __add__(self, other: Polynomial) -> Polynomial:
        return _poly_sum(self, other, 1.0)

    def __sub__(self, other: Polynomial) -> Polynomial:
        return _poly_sum(self, other, -1.0)

    def __mul__(self, other) -> Polynomial:
        if isinstance(other, Polynomial):
            if self.is_zero() or other.is_zero():
                return Polynomial()
            return Polynomial(np.convolve(self.array, other.array))
        return Polynomial(self.array * float(other))

    __rmul__ = __mul__

    def __neg__(self) -> Polynomial:
        return Polynomial(-self.array)

    def origin_multiplicity(self) -> int:
        """Number of leading exact-zero coefficients, i.e. the power of ``s`` factoring out."""
        k = 0
        for c in self.coeffs:
            if c != 0.0:
                break
            k += 1
        return k

    def roots(self) -> np.ndarray:
        """Roots via companion-matrix eigenvalues, exact zeros split off first."""
        if self.degree < 1:
            return np.zeros(0, dtype=complex)
        k = self.origin_multiplicity()
        rest = np.array(self.coeffs[k:])
        r = npoly.polyroots(rest) if len(rest) > 1 else np.zeros(0)
        return np.concatenate([np.zeros(k, dtype=complex), np.asarray(r, dtype=complex)])


def _poly_sum(a: Polynomial, b: Polynomial, sign: float) -> Polynomial:
    n = max(len(a.coeffs), len(b.coeffs))
    x = np.zeros(n)
    y = np.zeros(n)
    x[: len(a.coeffs)] = a.coeffs
    y[: len(b.coeffs)] = b.coeffs
    out = x + sign * y
    # coefficients that cancelled down to rounding noise become exact zeros
    noise = 8 * _EPS * (np.abs(x) + np.abs(y))
    out[np.abs(out) <= noise] = 0.0
    return Polynomial(out)


@dataclass(frozen=True)
class RationalTF:
    """``num(s) / den(s)``, stored with a monic denominator."""

    num: Polynomial
    den: Polynomial

    def __init__(self, num, den=1.0):
        num = num if isinstance(num, Polynomial) else Polynomial(num)
        den = den if isinstance(den, Polynomial) else Polynomial(den)
        if den.is_zero():
            raise ZeroDivisionError("transfer function denominator is identically zero")
        lead = den.lead
        object.__setattr__(self, "num", Polynomial(num.array / lead) if not num.is_zero() else num)
        object.__setattr__(self, "den", Polynomial(den.array / lead))

    @classmethod
    def gain(cls, k: float) -> RationalTF:
        return cls([k], [1.0])

    @classmethod
    def s(cls) -> RationalTF:
        return cls([0.0, 1.0], [1.0])

    def __call__(self, s):
        return self.num(s) / self.den(s)

    def is_zero(self) -> bool:
        return self.num.is_zero()

    @property
    def is_proper(self) -> bool:
        return self.num.degree <= self.den.degree

    @property
    def is_strictly_proper(self) -> bool:
        return self.num.degree < self.den.degree

    @property
    def order(self) -> int:
        return self.den.degree

    def __add__(self, other):
        return tf_add(self, _as_tf(other))

    __radd__ = __add__

    def __sub__(self, other):
        return tf_add(self, -_as_tf(other))

    def __rsub__(self, other):
        return tf_add(_as_tf(other), -self)

    def __mul__(self, other):
        return tf_mul(self, _as_tf(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_tf(other)
        if other.is_zero():
            raise ZeroDivisionError("division by the zero transfer function")
        return tf_mul(self, RationalTF(other.den, other.num))

    def __neg__(self):
        return RationalTF(-self.num, self.den)

    def __repr__(self):
        return f"RationalTF(num={list(self.num.coeffs)}, den={list(self.den.coeffs)})"


def _as_tf(x) -> RationalTF:
    return x if isinstance(x, RationalTF) else RationalTF.gain(float(x))


def minreal(g: RationalTF, tol: float = CANCEL_TOL) -> RationalTF:
    """Cancel numerator/denominator roots closer than ``tol * max(1, |root|)``."""
    if g.num.is_zero():
        return RationalTF([0.0], [1.0])
    if g.num.degree < 1 or g.den.degree < 1:
        return g
    zn = g.num.roots()
    zd = g.den.roots()
    dist = np.abs(zn[:, None] - zd[None, :])
    limit = tol * np.maximum(1.0, np.abs(zd))[None, :]
    cand = np.argwhere(dist <= limit)
    if cand.size == 0:
        return g
    order = np.argsort(dist[cand[:, 0], cand[:, 1]], kind="stable")
    used_n, used_d = set(), set()
    for i, j in cand[order]:
        if i in used_n or j in used_d:
            continue
        used_n.add(int(i))
        used_d.add(int(j))
    common = [zd[j] for j in sorted(used_d)]
    return RationalTF(
        _divide_out(g.num, common, [z for i, z in enumerate(zn) if i not in used_n]),
        _divide_out(g.den, common, [z for j, z in enumerate(zd) if j not in used_d]),
    )


def tf_add(a: RationalTF, b: RationalTF) -> RationalTF:
    if a.is_zero():
        return b
    if b.is_zero():
        return a
    if a.den == b.den:
        return minreal(RationalTF(a.num + b.num, a.den))
    da, db = _strip_common_factor(a.den, b.den)
    return minreal(RationalTF(a.num * db + b.num * da, a.den * db))


def _strip_common_factor(p: Polynomial, q: Polynomial, tol: float = 1e-5):
    """Return ``(p / c, q / c)`` for the common factor ``c`` found by root matching.

    Candidate pairs are matched loosely so that clustered roots, which are only
    located to about the square root of machine precision, still pair up; the
    factor is accepted only if it divides both polynomials.
    """
    if p.degree < 1 or q.degree < 1:
        return p, q
    rp, rq = p.roots(), q.roots()
    dist = np.abs(rp[:, None] - rq[None, :])
    cand = np.argwhere(dist <= tol * np.maximum(1.0, np.abs(rq))[None, :])
    if cand.size == 0:
        return p, q
    order = np.argsort(dist[cand[:, 0], cand[:, 1]], kind="stable")
    used_p, used_q = set(), set()
    for i, j in cand[order]:
        if int(i) in used_p or int(j) in used_q:
            continue
        used_p.add(int(i))
        used_q.add(int(j))
    # roots of the lower-degree polynomial are usually the better conditioned
    common = [rp[i] for i in sorted(used_p)] if p.degree <= q.degree else [rq[j] for j in sorted(used_q)]
    pc, qc = _exact_quotient(p, common), _exact_quotient(q, common)
    if pc is None or qc is None:
        return p, q
    return pc, qc


def _exact_quotient(p: Polynomial, common) -> Polynomial | None:
    c = np.real(npoly.polyfromroots(np.asarray(common, dtype=complex)))
    quo, rem = npoly.polydiv(p.array, c)
    if np.max(np.abs(rem), initial=0.0) <= 1e-9 * np.max(np.abs(p.array)):
        return Polynomial(quo)
    return None


def _divide_out(p: Polynomial, common, remaining) -> Polynomial:
    """``p`` divided by the monic factor with roots ``common``.

    Long division keeps clustered roots accurate; when the remainder is not
    negligible the quotient is rebuilt from the ``remaining`` roots instead.
    """
    quo = _exact_quotient(p, common)
    return quo if quo is not None else Polynomial.from_roots(remaining, p.lead)


def tf_mul(a: RationalTF, b: RationalTF) -> RationalTF:
    if a.is_zero() or b.is_zero():
        return RationalTF([0.0], [1.0])
    return minreal(RationalTF(a.num * b.num, a.den * b.den))


def tf_feedback(g: RationalTF, h: RationalTF) -> RationalTF:
    """Negative-feedback closure ``g / (1 + g h)``."""
    den = g.den * h.den + g.num * h.num
    if den.is_zero():
        raise DegenerateLoop("1 + g*h is identically zero")
    return minreal(RationalTF(g.num * h.den, den))


def poles(g: RationalTF) -> np.ndarray:
    return minreal(g).den.roots()


def zeros(g: RationalTF) -> np.ndarray:
    return minreal(g).num.roots()


def dcgain(g: RationalTF) -> float:
    """Steady-state gain ``g(0)``; ``inf`` (signed) for an uncancelled pole at the origin."""
    num = np.array(g.num.coeffs, dtype=float)
    den = np.array(g.den.coeffs, dtype=float)
    if num.size == 0:
        return 0.0
    # L'Hopital: drop common factors of s while both constant terms vanish
    while num.size > 1 and den.size > 1 and _vanishes(num) and _vanishes(den):
        num = num[1:]
        den = den[1:]
    if _vanishes(den):
        if _vanishes(num):
            return 0.0
        return math.copysign(math.inf, num[0] * (den[1] if den.size > 1 else 1.0))
    return float(num[0] / den[0])


def _vanishes(c: np.ndarray) -> bool:
    return abs(c[0]) <= 1e-12 * np.max(np.abs(c))


@dataclass(frozen=True)
class MimoTF:
    """Grid of transfer functions indexed ``(output, input)``."""

    entries: tuple[tuple[RationalTF, ...], ...]
    input_names: tuple[str, ...]
    output_names: tuple[str, ...]

    def __init__(self, entries, input_names, output_names):
        rows = tuple(tuple(_as_tf(e) for e in row) for row in entries)
        if not rows or any(len(r) != len(rows[0]) for r in rows):
            raise DimensionMismatch("MIMO transfer grid must be rectangular and non-empty")
        if len(output_names) != len(rows) or len(input_names) != len(rows[0]):
            raise DimensionMismatch(
                f"labels ({len(output_names)} outputs, {len(input_names)} inputs) "
                f"do not match grid {len(rows)}x{len(rows[0])}"
            )
        object.__setattr__(self, "entries", rows)
        object.__setattr__(self, "input_names", tuple(input_names))
        object.__setattr__(self, "output_names", tuple(output_names))

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.entries), len(self.entries[0])

    def __getitem__(self, key) -> RationalTF:
        i, j = key
        if isinstance(i, str):
            i = self.output_names.index(i)
        if isinstance(j, str):
            j = self.input_names.index(j)
        return self.entries[i][j]

    def __call__(self, s) -> np.ndarray:
        return np.array([[e(s) for e in row] for row in self.entries])


@dataclass(frozen=True, eq=False)
class StateSpace:
    """``x' = A x + B u``, ``y = C x + D u``; ``dt`` set for discrete systems."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    dt: float | None = None
    input_names: tuple[str, ...] = field(default=())
    output_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        n = A.shape[0] if A.size else 0
        A = A.reshape(n, n)
        p, m = D.shape
        B = np.asarray(self.B, dtype=float).reshape(n, m)
        C = np.asarray(self.C, dtype=float).reshape(p, n)
        for name, arr in (("A", A), ("B", B), ("C", C), ("D", D)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.input_names and len(self.input_names) != m:
            raise DimensionMismatch(f"{len(self.input_names)} input names for {m} inputs")
        if self.output_names and len(self.output_names) != p:
            raise DimensionMismatch(f"{len(self.output_names)} output names for {p} outputs")
        object.__setattr__(self, "input_names", tuple(self.input_names))
        object.__setattr__(self, "output_names", tuple(self.output_names))

    @property
    def n_states(self) -> int:
        return self.A.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.D.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.D.shape[0]

    def poles(self) -> np.ndarray:
        return np.linalg.eigvals(self.A) if self.n_states else np.zeros(0, dtype=complex)

    def evaluate(self, s: complex) -> np.ndarray:
        n = self.n_states
        if n == 0:
            return self.D.astype(complex)
        return self.C @ np.linalg.solve(s * np.eye(n) - self.A, self.B) + self.D


def tf_to_ss(g: RationalTF) -> StateSpace:
    """Controllable canonical realization."""
    if not g.is_proper:
        raise ImproperSystem(f"numerator degree {g.num.degree} > denominator degree {g.den.degree}")
    n = g.den.degree
    den = g.den.array  # monic
    num = np.zeros(n + 1)
    num[: len(g.num.coeffs)] = g.num.coeffs
    d = num[n]
    resid = num[:n] - d * den[:n]
    A = np.zeros((n, n))
    if n:
        A[:-1, 1:] = np.eye(n - 1)
        A[-1, :] = -den[:n]
    B = np.zeros((n, 1))
    if n:
        B[-1, 0] = 1.0
    C = resid.reshape(1, n)
    return StateSpace(A, B, C, [[d]])


def _match_roots(pool: np.ndarray, roots: np.ndarray, tol: float = 1e-5) -> tuple[list[int], list[int]]:
    """Greedy nearest pairing; returns (matched pool indices, unmatched root indices)."""
    used_pool, unmatched = [], []
    for k, r in enumerate(roots):
        free = [i for i in range(len(pool)) if i not in used_pool]
        if free:
            d = np.abs(pool[free] - r)
            best = int(np.argmin(d))
            if d[best] <= tol * max(1.0, abs(r)):
                used_pool.append(free[best])
                continue
        unmatched.append(k)
    return used_pool, unmatched


def _realize_row(row: Sequence[RationalTF], m: int):
    pool = np.zeros(0, dtype=complex)
    for e in row:
        if not e.is_zero():
            r = e.den.roots()
            _, extra = _match_roots(pool, r)
            pool = np.concatenate([pool, r[extra]])
    lcd = Polynomial.from_roots(pool).array
    n = len(pool)
    B = np.zeros((n, m))
    D = np.zeros(m)
    for j, e in enumerate(row):
        if e.is_zero():
            continue
        used, _ = _match_roots(pool, e.den.roots())
        cof = Polynomial.from_roots([z for i, z in enumerate(pool) if i not in used])
        num = np.zeros(n + 1)
        full = (e.num * cof).array
        num[: len(full)] = full
        D[j] = num[n]
        B[:, j] = num[:n] - D[j] * lcd[:n]
    A = np.zeros((n, n))
    if n:
        A[1:, :-1] = np.eye(n - 1)
        A[:, -1] = -lcd[:n]
    return A, B, D


def mimo_to_ss(g: MimoTF) -> StateSpace:
    """Observable-form realization per output row over the row's common denominator."""
    p, m = g.shape
    for row in g.entries:
        for e in row:
            if not e.is_proper:
                raise ImproperSystem(f"entry {e!r} is improper")
    blocks = [_realize_row(row, m) for row in g.entries]
    n = sum(b[0].shape[0] for b in blocks)
    A = np.zeros((n, n))
    B = np.zeros((n, m))
    C = np.zeros((p, n))
    D = np.zeros((p, m))
    k = 0
    for i, (Ai, Bi, Di) in enumerate(blocks):
        r = Ai.shape[0]
        A[k : k + r, k : k + r] = Ai
        B[k : k + r] = Bi
        if r:
            C[i, k + r - 1] = 1.0
        D[i] = Di
        k += r
    return StateSpace(A, B, C, D, input_names=g.input_names, output_names=g.output_names)


def as_ss(g) -> StateSpace:
    if isinstance(g, StateSpace):
        return g
    if isinstance(g, MimoTF):
        return mimo_to_ss(g)
    if isinstance(g, RationalTF):
        return tf_to_ss(g)
    return tf_to_ss(_as_tf(g))


def _port_names(ss: StateSpace) -> tuple[tuple[str, ...], tuple[str, ...]]:
    ins = ss.input_names or (("u",) if ss.n_inputs == 1 else tuple(f"u{i}" for i in range(ss.n_inputs)))
    outs = ss.output_names or (("y",) if ss.n_outputs == 1 else tuple(f"y{i}" for i in range(ss.n_outputs)))
    return ins, outs


def connect(blocks: Mapping[str, StateSpace], inputs: Sequence[str],
            wiring: Mapping[str, Mapping[str, float]], outputs: Mapping[str, Mapping[str, float]]) -> StateSpace:
    """Interconnect named blocks into one continuous system.

    Block ports are addressed as ``"<block>.<port>"`` (unnamed SISO ports are
    ``u`` and ``y``). ``wiring`` maps each driven block input to a weighted sum
    of external inputs and block outputs; unlisted block inputs are zero.
    ``outputs`` defines each external output the same way.
    """
    bi, bo = [], []
    for b, ss in blocks.items():
        ins, outs = _port_names(ss)
        bi += [f"{b}.{n}" for n in ins]
        bo += [f"{b}.{n}" for n in outs]
    n_bi, n_bo, n_w = len(bi), len(bo), len(inputs)
    K = np.zeros((n_bi, n_bo))
    E = np.zeros((n_bi, n_w))
    F = np.zeros((len(outputs), n_bo))
    G = np.zeros((len(outputs), n_w))

    def fill(row_k, row_e, srcs):
        for src, c in srcs.items():
            if src in inputs:
                row_e[list(inputs).index(src)] += c
            elif src in bo:
                row_k[bo.index(src)] += c
            else:
                raise UnknownChannel(f"unknown signal {src!r}")

    for dst, srcs in wiring.items():
        if dst not in bi:
            raise UnknownChannel(f"unknown block input {dst!r}")
        i = bi.index(dst)
        fill(K[i], E[i], srcs)
    for i, srcs in enumerate(outputs.values()):
        fill(F[i], G[i], srcs)

    mats = list(blocks.values())
    n = sum(m.n_states for m in mats)
    Ab, Bb, Cb, Db = np.zeros((n, n)), np.zeros((n, n_bi)), np.zeros((n_bo, n)), np.zeros((n_bo, n_bi))
    k = i = o = 0
    for m in mats:
        r, p, q = m.n_states, m.n_inputs, m.n_outputs
        Ab[k:k + r, k:k + r] = m.A
        Bb[k:k + r, i:i + p] = m.B
        Cb[o:o + q, k:k + r] = m.C
        Db[o:o + q, i:i + p] = m.D
        k, i, o = k + r, i + p, o + q
    L = np.eye(n_bo) - Db @ K
    if np.linalg.cond(L) > 1e12:
        raise DegenerateLoop("algebraic loop through direct feedthrough is singular")
    M = np.linalg.inv(L)
    A = Ab + Bb @ K @ M @ Cb
    B = Bb @ (E + K @ M @ Db @ E)
    C = F @ M @ Cb
    D = F @ M @ Db @ E + G
    return StateSpace(A, B, C, D, input_names=tuple(inputs), output_names=tuple(outputs))


def select_inputs(ss: StateSpace, names: Sequence[str], rename: Mapping[str, str] | None = None) -> StateSpace:
    """Keep the named input columns (in the given order), dropping unreachable states."""
    try:
        cols = [ss.input_names.index(n) for n in names]
    except ValueError:
        raise UnknownChannel(f"inputs {list(names)} not all in {ss.input_names}") from None
    rename = rename or {}
    out = StateSpace(ss.A, ss.B[:, cols], ss.C, ss.D[:, cols], dt=ss.dt,
                     input_names=tuple(rename.get(n, n) for n in names), output_names=ss.output_names)
    return prune_unreachable(out)


def prune_unreachable(ss: StateSpace) -> StateSpace:
    """Remove states that no input can reach through the sparsity pattern of ``A`` and ``B``."""
    n = ss.n_states
    if n == 0:
        return ss
    reach = np.any(ss.B != 0.0, axis=1)
    frontier = reach.copy()
    nz = ss.A != 0.0
    while frontier.any():
        new = np.any(nz[:, frontier], axis=1) & ~reach
        reach |= new
        frontier = new
    if reach.all():
        return ss
    k = np.flatnonzero(reach)
    return StateSpace(ss.A[np.ix_(k, k)], ss.B[k], ss.C[:, k], ss.D, dt=ss.dt,
                      input_names=ss.input_names, output_names=ss.output_names)


def discretize_zoh(ss: StateSpace, dt: float) -> StateSpace:
    """Exact zero-order-hold discretization from the augmented matrix exponential."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    n, m = ss.n_states, ss.n_inputs
    M = np.zeros((n + m, n + m))
    M[:n, :n] = ss.A
    M[:n, n:] = ss.B
    E = expm(M * dt)
    return StateSpace(
        E[:n, :n], E[:n, n:], ss.C, ss.D, dt=dt,
        input_names=ss.input_names, output_names=ss.output_names,
    )


def balance(ss: StateSpace) -> StateSpace:
    """Diagonal similarity scaling of ``A``; the input/output map is unchanged."""
    if ss.n_states == 0:
        return ss
    _, (scale, _) = matrix_balance(ss.A, permute=False, separate=True)
    inv = 1.0 / scale
    return StateSpace(
        inv[:, None] * ss.A * scale[None, :], inv[:, None] * ss.B, ss.C * scale[None, :], ss.D,
        dt=ss.dt, input_names=ss.input_names, output_names=ss.output_names,
    )


@dataclass(frozen=True, eq=False)
class SimTrace:
    """Uniformly sampled named signals sharing one time axis."""

    t: np.ndarray
    channels: Mapping[str, np.ndarray]

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).ravel()
        chans = {}
        for name, v in self.channels.items():
            v = np.asarray(v, dtype=float).ravel()
            if v.shape != t.shape:
                raise DimensionMismatch(f"channel {name!r} has {v.size} samples, time axis has {t.size}")
            chans[str(name)] = v
        if t.size >= 2:
            steps = np.diff(t)
            h = (t[-1] - t[0]) / (t.size - 1)
            if not h > 0 or np.max(np.abs(steps - h)) > 1e-9 * h:
                raise NonuniformSampling("time samples are not uniformly spaced")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "channels", chans)

    @property
    def dt(self) -> float:
        if self.t.size < 2:
            raise EmptyTrace("at least two samples are needed to define dt")
        return float((self.t[-1] - self.t[0]) / (self.t.size - 1))

    @property
    def names(self) -> list[str]:
        return list(self.channels)

    def __len__(self) -> int:
        return self.t.size

    def __getitem__(self, name: str) -> np.ndarray:
        return self.channels[name]

    def __contains__(self, name: str) -> bool:
        return name in self.channels

    def select(self, names: Sequence[str]) -> SimTrace:
        return SimTrace(self.t, {n: self.channels[n] for n in names})

    def merged(self, other: SimTrace) -> SimTrace:
        return SimTrace(self.t, {**self.channels, **other.channels})


def uniform_time(duration: float, dt: float) -> np.ndarray:
    n = int(round(duration / dt))
    return np.arange(n + 1) * dt


@numba.njit(cache=True)
def _propagate(Ad, BU):
    N = BU.shape[0]
    n = Ad.shape[0]
    X = np.zeros((N, n))
    x = np.zeros(n)
    for k in range(N):
        for i in range(n):
            X[k, i] = x[i]
        xn = BU[k].copy()
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += Ad[i, j] * x[j]
            xn[i] += acc
        x = xn
    return X


def _foh_matrices(ss: StateSpace, dt: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``Phi, G0, G1`` with ``x+ = Phi x + G0 u_k + G1 (u_k+1 - u_k)`` for linear interpolation."""
    n, m = ss.n_states, ss.n_inputs
    M = np.zeros((n + 2 * m, n + 2 * m))
    M[:n, :n] = ss.A * dt
    M[:n, n:n + m] = ss.B * dt
    M[n:n + m, n + m:] = np.eye(m)
    E = expm(M)
    return E[:n, :n], E[:n, n:n + m], E[:n, n + m:]


def simulate_ss(ss: StateSpace, U: np.ndarray, dt: float, ramp: Sequence[bool] | None = None) -> np.ndarray:
    """Zero-state response of a continuous system to sampled inputs (rows = samples).

    Inputs are held constant between samples, except those flagged in ``ramp``,
    which are interpolated linearly (suited to sampled continuous signals).
    """
    U = np.ascontiguousarray(U, dtype=float).reshape(-1, ss.n_inputs)
    if U.shape[0] == 0:
        raise EmptyTrace("input trace has no samples")
    if ss.n_states == 0:
        return U @ ss.D.T
    bs = balance(ss)
    if ramp is None or not any(ramp):
        sd = discretize_zoh(bs, dt)
        BU = U @ sd.B.T
        Ad = sd.A
    else:
        r = np.asarray(ramp, dtype=bool)
        if r.size != ss.n_inputs:
            raise DimensionMismatch(f"ramp flags {r.size} inputs, system has {ss.n_inputs}")
        Ad, G0, G1 = _foh_matrices(bs, dt)
        dU = np.zeros_like(U)
        dU[:-1, r] = np.diff(U[:, r], axis=0)
        BU = U @ G0.T + dU @ G1.T
    X = _propagate(np.ascontiguousarray(Ad), np.ascontiguousarray(BU))
    return X @ bs.C.T + U @ bs.D.T


def lsim(g, u: SimTrace) -> SimTrace:
    """Simulate a deviation model from zero initial state.

    ``u`` supplies one channel per system input; for named MIMO systems the
    channels are matched by name, otherwise taken in order.
    """
    if len(u) == 0:
        raise EmptyTrace("input trace has no samples")
    if isinstance(g, MimoTF) and all(n in u for n in g.input_names):
        # identically zero inputs are dropped before realization so that modes
        # reachable only through them (possibly unstable) never enter
        keep = [j for j, n in enumerate(g.input_names) if np.any(u[n] != 0.0)]
        if len(keep) < len(g.input_names):
            out_names = g.output_names
            if not keep:
                names = out_names or (("y",) if g.shape[0] == 1 else tuple(f"y{i}" for i in range(g.shape[0])))
                return SimTrace(u.t, {n: np.zeros(len(u)) for n in names})
            g = MimoTF([[row[j] for j in keep] for row in g.entries],
                       input_names=tuple(g.input_names[j] for j in keep), output_names=out_names)
    ss = as_ss(g)
    if ss.input_names and all(n in u for n in ss.input_names):
        cols = [u[n] for n in ss.input_names]
    else:
        cols = list(u.channels.values())
    if len(cols) != ss.n_inputs:
        raise DimensionMismatch(f"system has {ss.n_inputs} inputs, trace provides {len(cols)} channels")
    U = np.column_stack(cols) if cols else np.zeros((len(u), 0))
    dt = u.dt if len(u) > 1 else 1.0
    Y = simulate_ss(ss, U, dt)
    names = ss.output_names or (("y",) if ss.n_outputs == 1 else tuple(f"y{i}" for i in range(ss.n_outputs)))
    return SimTrace(u.t, {n: Y[:, i] for i, n in enumerate(names)})
