"""Pointwise A, B0, C0, B, C, E1, E2, F1, F2 and residuals of their identities.

For ``q > 0``, a weight ``phi`` and a mean profile ``M``:

    A  = (q phi')' phi - q phi'^2          B0 = (q phi')' phi^2
    C0 = q phi^2 phi'^2                    B  = (q phi' M)' phi^2
    C  = q phi^2 phi'^2 M^2                E1 = A^2 phi + E2
    E2 = A q phi phi'^2 - B0' q phi phi' + (q phi')' phi q (phi^2 phi')'

and ``F1 <= F2`` (for ``A > 0``) are the roots of ``A F^2 - B F + C``.
Every first derivative of a named composite is expanded by the product rule
from ``q, q', q'', phi'..phi''', M, M', M''``.  Only two things are
differentiated numerically: the root branches ``F_i`` and the outer
derivative in the ``E1`` identity.

Each ``residual_*`` returns a :class:`Residual` holding both sides and the
size of the largest summand that went into either; compare ``residual.value``
against ``tol * residual.scale``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .functions import MeanProfile
from .numerics import Degenerate, derivative_estimate
from .weights import Anchor, Weight

__all__ = [
    "QFunction",
    "Context",
    "Jet",
    "AbcFrame",
    "Residual",
    "RootsUndefined",
    "PreconditionFailed",
    "jet",
    "abc_frame",
    "abc_frame_extended",
    "residual_E2",
    "residual_E1",
    "residual_rootF2_system",
    "residual_B_derivative",
    "residual_C_derivative",
    "residual_hF",
    "residual_hCB",
    "residual_quadratic_at_phiM",
    "locate_sign_change",
    "locate_A_sign_change",
]

# relative size below which A counts as zero, and the near-double-root band
A_ZERO_RTOL = 1e-12
DOUBLE_ROOT_RTOL = 1e-14


class RootsUndefined(ArithmeticError):
    """A == 0 or B^2 - 4AC < 0 (or a numerically double root)."""


class PreconditionFailed(ValueError):
    pass


@dataclass(frozen=True)
class QFunction:
    q: Callable[[float], float]
    dq: Callable[[float], float]
    d2q: Callable[[float], float]

    @classmethod
    def one(cls) -> "QFunction":
        return cls(lambda y: 1.0, lambda y: 0.0, lambda y: 0.0)


@dataclass(frozen=True)
class Context:
    """Inputs of every pointwise quantity: q, the weight and the mean profile.

    ``h`` is optional; when present it must satisfy ``h' = phi' M``.  The
    residuals use ``phi' M`` for ``h'`` directly.
    """

    w: Weight
    prof: MeanProfile
    q: QFunction = field(default_factory=QFunction.one)
    h: Optional[Callable[[float], float]] = None


@dataclass(frozen=True)
class Jet:
    y: float
    q: float
    q1: float
    q2: float
    f: float  # phi
    f1: float
    f2: float
    f3: float
    M: float
    M1: float
    M2: float


def jet(ctx: Context, y: float) -> Jet:
    f, f1, f2, f3 = (float(v) for v in ctx.w.derivatives(y))
    p = ctx.prof
    return Jet(
        y=float(y),
        q=float(ctx.q.q(y)), q1=float(ctx.q.dq(y)), q2=float(ctx.q.d2q(y)),
        f=f, f1=f1, f2=f2, f3=f3,
        M=float(p.M(y)), M1=float(p.M1(y)), M2=float(p.M2(y)),
    )


@dataclass(frozen=True)
class _Pieces:
    """All pointwise quantities, including the expanded derivatives."""

    A: float
    A1: float
    B0: float
    B01: float
    C0: float
    B: float
    B1: float
    C: float
    C1: float
    E1: float
    E2: float
    Q1: float  # (q phi')'
    P: float  # phi^2 phi'
    P1: float  # (phi^2 phi')'
    L1: float  # (q M'/M)'
    a_scale: float


def _pieces(j: Jet) -> _Pieces:
    q, q1, q2 = j.q, j.q1, j.q2
    f, f1, f2, f3 = j.f, j.f1, j.f2, j.f3
    M, M1, M2 = j.M, j.M1, j.M2

    Q = q * f1
    Q1 = q1 * f1 + q * f2
    Q2 = q2 * f1 + 2.0 * q1 * f2 + q * f3

    A = Q1 * f - q * f1 * f1
    A1 = Q2 * f + Q1 * f1 - q1 * f1 * f1 - 2.0 * q * f1 * f2
    B0 = Q1 * f * f
    B01 = Q2 * f * f + 2.0 * Q1 * f * f1
    C0 = q * f * f * f1 * f1
    P = f * f * f1
    P1 = 2.0 * f * f1 * f1 + f * f * f2

    R1 = Q1 * M + Q * M1  # (q phi' M)'
    R2 = Q2 * M + 2.0 * Q1 * M1 + Q * M2
    B = R1 * f * f
    B1 = R2 * f * f + 2.0 * R1 * f * f1
    C = q * f * f * f1 * f1 * M * M
    C1 = (
        q1 * f * f * f1 * f1 * M * M
        + q * (2.0 * f * f1**3 * M * M + 2.0 * f * f * f1 * f2 * M * M + 2.0 * f * f * f1 * f1 * M * M1)
    )
    E2 = A * q * f * f1 * f1 - B01 * q * f * f1 + Q1 * f * q * P1
    E1 = A * A * f + E2
    L1 = q1 * M1 / M + q * (M2 / M - (M1 / M) ** 2)
    return _Pieces(
        A=A, A1=A1, B0=B0, B01=B01, C0=C0, B=B, B1=B1, C=C, C1=C1, E1=E1, E2=E2,
        Q1=Q1, P=P, P1=P1, L1=L1, a_scale=abs(Q1 * f) + abs(q * f1 * f1),
    )


@dataclass(frozen=True)
class AbcFrame:
    y: float
    A: float
    B0: float
    C0: float
    B: float
    C: float
    E1: float
    E2: float
    discriminant: float
    F1: Optional[float] = None
    F2: Optional[float] = None
    double_root: bool = False
    # largest summands behind A and E1: their rounding floor in binary64
    A_scale: float = 0.0
    E1_scale: float = 0.0

    @property
    def roots_defined(self) -> bool:
        return self.F1 is not None


def _roots(A, B, C, a_scale):
    """Cancellation-free ``(F1, F2, double_root)``, or ``None`` if undefined."""
    if abs(A) <= A_ZERO_RTOL * a_scale:
        return None
    disc = B * B - 4.0 * A * C
    if disc < 0:
        return None
    if disc <= DOUBLE_ROOT_RTOL * B * B:
        r = B / (2.0 * A)
        return r, r, True
    s = math.sqrt(disc)
    if B > 0:
        return 2.0 * C / (B + s), (B + s) / (2.0 * A), False
    return (B - s) / (2.0 * A), 2.0 * C / (B - s), False


def _frame_from(j: Jet, pc: _Pieces) -> AbcFrame:
    disc = pc.B * pc.B - 4.0 * pc.A * pc.C
    r = _roots(pc.A, pc.B, pc.C, pc.a_scale)
    F1, F2, dbl = (None, None, False) if r is None else r
    return AbcFrame(
        y=j.y, A=pc.A, B0=pc.B0, C0=pc.C0, B=pc.B, C=pc.C, E1=pc.E1, E2=pc.E2,
        discriminant=disc, F1=F1, F2=F2, double_root=dbl,
        A_scale=pc.a_scale, E1_scale=_mag(*_e_terms(j, pc)),
    )


def abc_frame(ctx: Context, y: float) -> AbcFrame:
    """All frame quantities at ``y``; ``F1``/``F2`` are ``None`` where undefined."""
    j = jet(ctx, y)
    return _frame_from(j, _pieces(j))


def abc_frame_extended(w: Weight, y: float, dps: int = 50) -> AbcFrame:
    """The frame for ``q = 1`` and ``M = 1`` evaluated in ``dps``-digit arithmetic.

    ``A`` and ``E1`` do not depend on ``M``.  For power weights ``E1`` is an
    exact cancellation of terms of size ``y^(-3a-1) phi^2``; from binary64
    inputs no evaluation order gets it below ``eps`` times that, so golden
    comparisons at small ``y`` need the weight's closed forms in extended
    precision.  Fields are rounded to binary64 at the end.
    """
    if w.mp_derivatives is None:
        raise PreconditionFailed(f"{w.id} has no extended-precision closed form")
    import mpmath as mp

    with mp.workdps(dps):
        f, f1, f2, f3 = w.mp_derivatives(mp.mpf(y))
        one, zero = mp.mpf(1), mp.mpf(0)
        j = Jet(y=float(y), q=one, q1=zero, q2=zero, f=f, f1=f1, f2=f2, f3=f3, M=one, M1=zero, M2=zero)
        pc = _pieces(j)
        vals = {k: float(getattr(pc, k)) for k in ("A", "B0", "C0", "B", "C", "E1", "E2")}
        disc = float(pc.B * pc.B - 4 * pc.A * pc.C)
        scales = float(pc.a_scale), float(_mag(*_e_terms(j, pc)))
    r = _roots(vals["A"], vals["B"], vals["C"], scales[0])
    F1, F2, dbl = (None, None, False) if r is None else r
    return AbcFrame(y=float(y), discriminant=disc, F1=F1, F2=F2, double_root=dbl,
                    A_scale=scales[0], E1_scale=scales[1], **vals)


@dataclass(frozen=True)
class Residual:
    """Two sides of an identity.

    ``magnitude`` is the largest absolute summand used to form either side.
    Where an identity says ``0 = 0`` through terms of size 1e11 (power
    weights at small y), the rounding floor is set by the summands, not by
    the sides, so the scale takes it into account.
    """

    lhs: float
    rhs: float
    magnitude: float = 0.0

    @property
    def value(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def scale(self) -> float:
        return max(1.0, abs(self.lhs), abs(self.rhs), self.magnitude)

    @property
    def normalized(self) -> float:
        return self.value / self.scale

    def within(self, tol: float) -> bool:
        return self.value <= tol * self.scale


def _mag(*terms) -> float:
    return max(abs(t) for t in terms)


def _e_terms(j: Jet, pc: _Pieces):
    """Summands of ``E2`` and of ``A^2 phi``."""
    q = j.q
    return (
        pc.A * q * j.f * j.f1 * j.f1,
        pc.B01 * q * j.f * j.f1,
        pc.Q1 * j.f * q * pc.P1,
        pc.A * pc.A * j.f,
    )


def _derivative(g, y: float, step: float, vectorized: bool = False) -> float:
    """First derivative, keeping the best of three starting steps.

    Ridders' tableau occasionally stops on its first rows when the widest
    step is too coarse; its own error estimate tells which start to trust.
    """
    best = None
    for s in (step, 0.25 * step, 0.0625 * step):
        v, err = derivative_estimate(g, y, 1, step=s, lower=0.0, vectorized=vectorized)
        if best is None or err < best[1]:
            best = (v, err)
    return best[0]


def _require_phi_prime(j: Jet):
    # phi' > 0 in exact arithmetic, but phi'^2 can underflow (double-exponential decay)
    if not abs(j.f1) ** 3 * j.f * j.f > np.finfo(float).tiny:
        raise PreconditionFailed(f"phi' underflows at y={j.y}")


def residual_E2(ctx: Context, y: float) -> Residual:
    j = jet(ctx, y)
    pc = _pieces(j)
    right = (pc.A * pc.B0, pc.A * j.q * pc.P1, pc.A1 * j.q * pc.P)
    rhs = pc.A * pc.A * j.f - (right[0] - right[1] + right[2])
    return Residual(pc.E2, rhs, _mag(*_e_terms(j, pc), *right))


def residual_E1(ctx: Context, y: float) -> Residual:
    j = jet(ctx, y)
    _require_phi_prime(j)
    pc = _pieces(j)
    q = ctx.q

    def ratio(t):
        f, f1, f2, _ = ctx.w.derivatives(t)
        Q1 = q.dq(t) * f1 + q.q(t) * f2
        return float(Q1 * f / (q.q(t) * f1 * f1))

    # the ratio can vary on the scale of y itself near 0
    try:
        d = _derivative(ratio, y, min(0.1 * max(1.0, y), 0.5 * y))
    except Degenerate as exc:
        raise PreconditionFailed(f"phi' underflows near y={y}") from exc
    rhs = -j.q * j.q * j.f * j.f * j.f1**3 * d
    return Residual(pc.E1, rhs, _mag(*_e_terms(j, pc)))


def residual_rootF2_system(ctx: Context, y: float) -> tuple[Residual, Residual]:
    """Both lines of the system tying ``A^2 phi - E2`` and ``phi (-E2)`` together."""
    j = jet(ctx, y)
    pc = _pieces(j)
    q = j.q
    t1 = (pc.A * pc.B0, pc.A * q * pc.P1, pc.A1 * q * pc.P)
    first = Residual(pc.A * pc.A * j.f - pc.E2, t1[0] - t1[1] + t1[2], _mag(*_e_terms(j, pc), *t1))
    t2 = (pc.A * pc.C0, pc.B01 * q * pc.P, pc.B0 * q * pc.P1)
    second = Residual(
        -j.f * pc.E2,
        -(t2[0] - t2[1] + t2[2]),
        _mag(*(j.f * t for t in _e_terms(j, pc)[:3]), *t2),
    )
    return first, second


def residual_B_derivative(ctx: Context, y: float) -> Residual:
    j = jet(ctx, y)
    pc = _pieces(j)
    q, M = j.q, j.M
    lhs = pc.B1 * q * pc.P * M
    terms = (
        pc.B * (pc.B - pc.B0 * M),
        pc.B01 * q * pc.P * M * M,
        pc.P1 * q * M * (pc.B - pc.B0 * M),
        pc.C * j.f * j.f * pc.L1,
    )
    return Residual(lhs, sum(terms), _mag(*terms))


def residual_C_derivative(ctx: Context, y: float) -> Residual:
    j = jet(ctx, y)
    pc = _pieces(j)
    q, M = j.q, j.M
    lhs = pc.C1 * q * pc.P * M
    terms = (pc.C * q * pc.P1 * M, 2.0 * pc.B * pc.C, -pc.B0 * pc.C * M)
    return Residual(lhs, sum(terms), _mag(*terms))


def residual_quadratic_at_phiM(ctx: Context, y: float) -> Residual:
    """``A (phi M)^2 - B phi M + C`` against ``-q phi^3 phi' M M'``."""
    j = jet(ctx, y)
    pc = _pieces(j)
    F = j.f * j.M
    terms = (pc.A * F * F, pc.B * F, pc.C)
    return Residual(terms[0] - terms[1] + terms[2], -j.q * j.f**3 * j.f1 * j.M * j.M1, _mag(*terms))


def _root_array(ctx: Context, t: np.ndarray, branch: int) -> np.ndarray:
    """Root branch ``F_i`` at many points at once; nan where undefined."""
    f, f1, f2, f3 = (np.asarray(v, dtype=float) for v in ctx.w.derivatives(t))
    p = ctx.prof
    qf = ctx.q
    j = Jet(
        y=t, q=np.broadcast_to(qf.q(t), t.shape), q1=np.broadcast_to(qf.dq(t), t.shape),
        q2=np.broadcast_to(qf.d2q(t), t.shape), f=f, f1=f1, f2=f2, f3=f3,
        M=np.asarray(p.M(t), dtype=float), M1=np.asarray(p.M1(t), dtype=float), M2=np.zeros(t.shape),
    )
    with np.errstate(all="ignore"):
        pc = _pieces(j)
        A, B, C = pc.A, pc.B, pc.C
        disc = B * B - 4.0 * A * C
        s = np.sqrt(disc)
        big = B + np.where(B > 0, s, -s)  # B + sign(B) sqrt(disc), no cancellation
        small_root, large_root = 2.0 * C / big, big / (2.0 * A)
        # F1 = (B - s)/2A, F2 = (B + s)/2A; which formula is cancellation-free
        # depends on the sign of B
        F1 = np.where(B > 0, small_root, large_root)
        F2 = np.where(B > 0, large_root, small_root)
        ok = (np.abs(A) > A_ZERO_RTOL * pc.a_scale) & (disc > DOUBLE_ROOT_RTOL * B * B)
    return np.where(ok, F1 if branch == 1 else F2, np.nan)


def _branch_step(ctx: Context, y: float, pc: _Pieces) -> float:
    step = 0.1 * min(max(1.0, y), y)
    if ctx.w.anchor is Anchor.UNIT:
        # the roots collapse to a double root at the anchor
        step = min(step, 0.25 * abs(y - 1.0))
    if pc.A1 != 0.0:
        # one branch has a pole where A vanishes; |A/A'| estimates the distance
        step = min(step, 0.25 * abs(pc.A / pc.A1))
    return step


def residual_hF(ctx: Context, y: float, branch: int) -> Residual:
    """``(h - F_i)' A (F_j - F_i) q phi^2 phi' M`` against the factored right side."""
    if branch not in (1, 2):
        raise ValueError("branch must be 1 or 2")
    j = jet(ctx, y)
    pc = _pieces(j)
    r = _roots(pc.A, pc.B, pc.C, pc.a_scale)
    if r is None or r[2]:
        raise RootsUndefined(f"A == 0, negative discriminant or double root at y={y}")
    Fi, Fj = (r[0], r[1]) if branch == 1 else (r[1], r[0])
    try:
        dFi = _derivative(lambda t: _root_array(ctx, t, branch), y, _branch_step(ctx, y, pc), vectorized=True)
    except Degenerate as exc:
        raise RootsUndefined(f"root branch not smooth around y={y}") from exc
    q, f, f1, M = j.q, j.f, j.f1, j.M
    lhs = (f1 * M - dFi) * pc.A * (Fj - Fi) * q * f * f * f1 * M
    G = Fi - f * M
    terms = (Fi * G * pc.A * pc.A * G, Fi * G * pc.E1 * M, Fi * pc.C * f * f * pc.L1)
    return Residual(lhs, sum(terms), _mag(*terms))


def residual_hCB(ctx: Context, y: float) -> Residual:
    """``(h - C/B)' B^2 q phi' M`` against ``C^2 (q M'/M)'`` where ``A == 0``."""
    j = jet(ctx, y)
    pc = _pieces(j)
    if abs(pc.A) > A_ZERO_RTOL * max(pc.a_scale, 1e-300):
        raise PreconditionFailed(f"A = {pc.A} is not zero at y={y}")
    if not j.f1 > 0:
        raise PreconditionFailed("phi' must be positive")
    if pc.B == 0:
        raise PreconditionFailed("B vanishes")
    dh = j.f1 * j.M
    k = j.q * j.f1 * j.M
    terms = (dh * pc.B * pc.B * k, pc.C1 * pc.B * k, pc.C * pc.B1 * k)
    lhs = terms[0] - (terms[1] - terms[2])
    return Residual(lhs, pc.C * pc.C * pc.L1, _mag(*terms))


def locate_sign_change(func: Callable[[float], float], lo: float, hi: float,
                       samples: int = 200, xtol: float = 1e-13) -> Optional[float]:
    """First sign change of ``func`` on ``[lo, hi]`` refined by bisection.

    The bracket is found on a geometric grid when ``lo > 0``.
    """
    if not lo < hi:
        raise ValueError("need lo < hi")
    xs = np.geomspace(lo, hi, samples) if lo > 0 else np.linspace(lo, hi, samples)
    vals = [float(func(x)) for x in xs]
    for a, b, fa, fb in zip(xs[:-1], xs[1:], vals[:-1], vals[1:]):
        if fa == 0.0:
            return float(a)
        if fa * fb < 0:
            a, b = float(a), float(b)
            while b - a > xtol * max(1.0, abs(a)):
                m = 0.5 * (a + b)
                fm = float(func(m))
                if fm == 0.0:
                    return m
                if (fm < 0) == (fa < 0):
                    a, fa = m, fm
                else:
                    b = m
            return 0.5 * (a + b)
    if vals[-1] == 0.0:
        return float(xs[-1])
    return None


def locate_A_sign_change(ctx: Context, lo: float, hi: float) -> Optional[float]:
    """Diagnostic: where ``A`` changes sign on ``[lo, hi]``, if it does."""

    def A(t):
        f, f1, f2, _ = ctx.w.derivatives(t)
        return (ctx.q.dq(t) * f1 + ctx.q.q(t) * f2) * f - ctx.q.q(t) * f1 * f1

    return locate_sign_change(A, lo, hi)
