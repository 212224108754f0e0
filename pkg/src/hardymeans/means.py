"""Weighted area integral means ``h / phi`` and their convexity diagnostics.

With ``h' = phi' M`` and ``h`` anchored where ``phi`` is (at 1, at 0 or at
+inf), the mean is ``h / phi``.  Integrating by parts, the gap

    D = h - phi M = -int_anchor^y phi M'        (all three anchors)

has a fixed sign whenever ``M' < 0``, and everything else follows from it:

    h / phi          = M + D / phi
    (h / phi)'       = -(phi' / phi^2) D
    (h / phi)''      = phi' M' / phi + D (2 phi'^2 / phi^3 - phi'' / phi^2)

``D`` is computed by its own quadrature instead of as ``h - phi M`` so the
diagnostics keep their relative accuracy where ``h`` and ``phi M`` nearly
agree (large y for tail anchors, both sides of the unit anchor).  At the unit
anchor ``h / phi`` is 0/0; inside ``ANCHOR_CUTOFF`` a Taylor patch is used.

Every function accepts a scalar or an array of heights.  Arrays are
evaluated with one outer quadrature over a shared node set, which is what
keeps grid sweeps with quadrature-backed means affordable.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .calculus import A_ZERO_RTOL, Context, Jet, _pieces, _roots
from .functions import MeanProfile, synthetic_profile
from .numerics import OUTER_TOL, Tolerance, derivative, integrate_interval
from .weights import Anchor, Weight, make_weight, phi

__all__ = [
    "ANCHOR_CUTOFF",
    "Flag",
    "WeightedMean",
    "ConvexityDiagnostics",
    "AnchorPatch",
    "tail_truncation",
    "h_value",
    "phi_M_gap",
    "ratio",
    "ratio_first_derivative",
    "log_ratio_second",
    "unit_anchor_patch",
    "anchor_limit",
    "diagnostics",
    "auxiliary_profile",
    "auxiliary_example_check",
]

ANCHOR_CUTOFF = 1e-3
TAIL_RTOL = 1e-13
TAIL_LADDER = 56  # 4**56 ~ 5e33


class Flag(str, enum.Enum):
    NEAR_ANCHOR = "NearAnchor"
    ROOTS_UNDEFINED = "RootsUndefined"
    DEGENERATE = "Degenerate"


@dataclass(frozen=True, eq=False)
class WeightedMean:
    """``h / phi`` for one weight and one mean profile (``q = 1``)."""

    w: Weight
    prof: MeanProfile
    p: Optional[float] = None
    tol: Tolerance = OUTER_TOL

    @property
    def anchor(self) -> Anchor:
        return self.w.anchor

    def context(self) -> Context:
        return Context(self.w, self.prof, h=lambda y: h_value(self, y))


def _mul(a, b):
    # 0 * inf -> 0: a double-exponentially small weight times a growing M
    with np.errstate(over="ignore", invalid="ignore"):
        out = a * b
    return np.where((a == 0) | (b == 0), 0.0, out)


def tail_truncation(wm: WeightedMean, y) -> np.ndarray:
    """Where the tail integrals of ``h`` and ``h - phi M`` are cut off.

    The first ``T = y 4^k`` with ``|phi(T)| M(T) <= TAIL_RTOL |phi(y)| M(y)``.
    For decreasing ``M`` both discarded tails are bounded by
    ``|phi(T)| M(T)``, since ``|phi|`` decreases to 0.  Past about 1e35 the
    mean itself underflows, so the ladder is never allowed to get there.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    ref = np.abs(_mul(phi(wm.w, y), wm.prof.M(y)))
    T = np.full(y.shape, np.nan)
    for k in range(1, TAIL_LADDER + 1):
        open_ = np.isnan(T)
        if not np.any(open_):
            break
        t = y[open_] * 4.0**k
        val = np.abs(_mul(phi(wm.w, t), wm.prof.M(t)))
        done = val <= TAIL_RTOL * ref[open_]
        idx = np.flatnonzero(open_)
        T[idx[done]] = t[done]
    T[np.isnan(T)] = y[np.isnan(T)] * 4.0**TAIL_LADDER
    return T


def _anchored(wm: WeightedMean, g, y, T=None) -> np.ndarray:
    """``int_anchor^y g`` (``-int_y^T g`` for tail anchors) for an array ``y``.

    Each interval is mapped onto a fixed reference interval so all heights
    share one node set.  ``g`` is only called at points inside the
    (truncated) range, as one flat array.
    """
    y = np.asarray(y, dtype=float)
    if wm.anchor is Anchor.TAIL:
        if T is None:
            T = tail_truncation(wm, y)
        col, top = y[:, None], T[:, None]

        def tail(u):
            t = col * u
            keep = t <= top
            out = np.zeros(t.shape)
            out[keep] = g(t[keep])
            return out

        return -y * integrate_interval(tail, 1.0, math.inf, wm.tol).value
    a = wm.anchor.point
    span = y - a
    col = span[:, None]

    def body(u):
        t = a + col * u
        return np.reshape(g(t.ravel()), t.shape)

    return span * integrate_interval(body, 0.0, 1.0, wm.tol).value


def _as_array(y):
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if np.any(y <= 0):
        raise ValueError("heights must be positive")
    return y


def _out(y, v):
    return float(v[0]) if np.ndim(y) == 0 else np.reshape(v, np.shape(y))


def _h_array(wm, y, T=None):
    return _anchored(wm, lambda t: _mul(wm.w.phi_prime(t), wm.prof.M(t)), y, T)


def _gap_array(wm, y, T=None):
    return -_anchored(wm, lambda t: _mul(phi(wm.w, t), wm.prof.M1(t)), y, T)


def h_value(wm: WeightedMean, y):
    """``h(y)``: the anchored integral of ``phi' M``."""
    return _out(y, _h_array(wm, _as_array(y)))


def phi_M_gap(wm: WeightedMean, y):
    """``h - phi M``, computed as ``-int_anchor^y phi M'``."""
    return _out(y, _gap_array(wm, _as_array(y)))


# ---------------------------------------------------------------------------
# unit anchor


@dataclass(frozen=True)
class AnchorPatch:
    """Taylor data of ``h / phi`` at ``y = 1`` (unit anchor).

    ``beta[k]`` are the coefficients of ``(y - 1)^k`` in ``h / phi``;
    ``(log h/phi)''`` is approximated by ``L0 + L1 (y - 1)``.
    """

    beta: tuple
    L0: float
    L1: float

    def ratio(self, y):
        s = np.asarray(y, dtype=float) - 1.0
        b0, b1, b2, b3 = self.beta
        return b0 + s * (b1 + s * (b2 + s * b3))

    def ratio_d1(self, y):
        s = np.asarray(y, dtype=float) - 1.0
        _, b1, b2, b3 = self.beta
        return b1 + s * (2.0 * b2 + 3.0 * s * b3)

    def log_ratio_d2(self, y):
        s = np.asarray(y, dtype=float) - 1.0
        return self.L0 + self.L1 * s


def unit_anchor_patch(wm: WeightedMean) -> AnchorPatch:
    """Expansion of ``h / phi`` at the unit anchor.

    With ``h(1) = phi(1) = 0`` both numerator and denominator start at the
    first order; dividing the two Taylor series gives ``beta``.  The first
    three coefficients are ``M(1)``, ``M'(1)/2`` and
    ``(M''(1) + phi''(1) M'(1) / (2 phi'(1))) / 6``.
    """
    if wm.anchor is not Anchor.UNIT:
        raise ValueError("the Taylor patch only exists at the unit anchor")
    w, prof = wm.w, wm.prof
    d1, d2, d3 = (float(g(1.0)) for g in (w.phi_prime, w.phi_second, w.phi_third))
    d4 = derivative(lambda t: float(w.phi_third(t)), 1.0, 1, lower=0.0)
    M0, M1, M2 = float(prof.M(1.0)), float(prof.M1(1.0)), float(prof.M2(1.0))
    M3 = prof.third(1.0)

    # Taylor coefficients of h and phi (both vanish at 1)
    h1 = d1 * M0
    h2 = (d2 * M0 + d1 * M1) / 2.0
    h3 = (d3 * M0 + 2.0 * d2 * M1 + d1 * M2) / 6.0
    h4 = (d4 * M0 + 3.0 * d3 * M1 + 3.0 * d2 * M2 + d1 * M3) / 24.0
    f1, f2, f3, f4 = d1, d2 / 2.0, d3 / 6.0, d4 / 24.0

    b0 = h1 / f1
    b1 = (h2 - b0 * f2) / f1
    b2 = (h3 - b1 * f2 - b0 * f3) / f1
    b3 = (h4 - b2 * f2 - b1 * f3 - b0 * f4) / f1

    # derivatives of r = h/phi at 1, then of log r
    r0, r1, r2, r3 = b0, b1, 2.0 * b2, 6.0 * b3
    L0 = r2 / r0 - (r1 / r0) ** 2
    L1 = r3 / r0 - 3.0 * r1 * r2 / r0**2 + 2.0 * r1**3 / r0**3
    return AnchorPatch(beta=(b0, b1, b2, b3), L0=L0, L1=L1)


def anchor_limit(wm: WeightedMean) -> float:
    """Limit of ``(log h/phi)''`` at the unit anchor, in its closed form.

    ``(M'/M * phi''/phi' + (4 M M'' - 3 M'^2) / (2 M^2)) / 6`` at ``y = 1``.
    """
    w, prof = wm.w, wm.prof
    M, M1, M2 = float(prof.M(1.0)), float(prof.M1(1.0)), float(prof.M2(1.0))
    d1, d2 = float(w.phi_prime(1.0)), float(w.phi_second(1.0))
    return (M1 / M * d2 / d1 + (4.0 * M * M2 - 3.0 * M1 * M1) / (2.0 * M * M)) / 6.0


def _near_anchor(wm, y):
    return (wm.anchor is Anchor.UNIT) & (np.abs(np.asarray(y) - 1.0) < ANCHOR_CUTOFF)


# ---------------------------------------------------------------------------
# ratio and its derivatives


@dataclass(frozen=True)
class _Core:
    y: np.ndarray
    f: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    M: np.ndarray
    M1: np.ndarray
    D: np.ndarray

    @property
    def ratio(self):
        return self.M + self.D / self.f

    @property
    def ratio_d1(self):
        return -self.f1 / (self.f * self.f) * self.D

    @property
    def ratio_d2(self):
        f, f1 = self.f, self.f1
        return f1 * self.M1 / f + self.D * (2.0 * f1 * f1 / f**3 - self.f2 / (f * f))

    @property
    def log_ratio_d2(self):
        r = self.ratio
        return self.ratio_d2 / r - (self.ratio_d1 / r) ** 2


def _core(wm: WeightedMean, y: np.ndarray, T=None) -> _Core:
    w = wm.w
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        return _Core(
            y=y,
            f=np.asarray(phi(w, y), dtype=float),
            f1=np.asarray(w.phi_prime(y), dtype=float),
            f2=np.asarray(w.phi_second(y), dtype=float),
            M=np.asarray(wm.prof.M(y), dtype=float),
            M1=np.asarray(wm.prof.M1(y), dtype=float),
            D=_gap_array(wm, y, T),
        )


def _patched(wm, y, core_value, patch_name):
    near = _near_anchor(wm, y)
    if not np.any(near):
        return core_value
    patch = unit_anchor_patch(wm)
    return np.where(near, getattr(patch, patch_name)(y), core_value)


def _eval(wm, y, attr, patch_name):
    yy = _as_array(y)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        vals = getattr(_core(wm, yy), attr)
    return _out(y, _patched(wm, yy, vals, patch_name))


def ratio(wm: WeightedMean, y):
    """The weighted mean ``h / phi``; the Taylor patch within the unit-anchor cutoff."""
    return _eval(wm, y, "ratio", "ratio")


def ratio_first_derivative(wm: WeightedMean, y):
    """``(h / phi)' = -(phi' / phi^2) (h - phi M)``."""
    return _eval(wm, y, "ratio_d1", "ratio_d1")


def log_ratio_second(wm: WeightedMean, y):
    """``(log h/phi)''``; the limit expansion within the unit-anchor cutoff."""
    return _eval(wm, y, "log_ratio_d2", "log_ratio_d2")


# ---------------------------------------------------------------------------
# diagnostics


@dataclass(frozen=True)
class ConvexityDiagnostics:
    """Everything the sign program needs at one height.

    ``quadratic`` is ``A h^2 - B h + C``; ``quotient`` is
    ``-quadratic / (phi^2 h^2)``, the second route to ``log_ratio_d2``.
    ``h_minus_CB`` is only set where ``A`` vanishes; ``truncation`` is the
    cut-off of the tail integrals (tail anchors only).
    """

    y: float
    ratio: float
    ratio_d1: float
    log_ratio_d2: float
    quadratic: float
    quotient: float
    h: float
    gap: float
    A: float
    B: float
    C: float
    E1: float
    h_minus_CB: Optional[float] = None
    truncation: Optional[float] = None
    flags: frozenset = field(default_factory=frozenset)


def diagnostics(wm: WeightedMean, y_grid) -> list[ConvexityDiagnostics]:
    """Diagnostics on a grid of heights (one outer quadrature per quantity).

    ``quadratic`` is evaluated from the expansion around ``F = phi M``:

        A h^2 - B h + C = -phi^3 phi' M M' + (2 A phi M - B) D + A D^2

    which avoids cancelling terms that are individually far larger than the
    result.  ``h`` itself is integrated separately and reported as is.
    """
    y = _as_array(y_grid)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        T = tail_truncation(wm, y) if wm.anchor is Anchor.TAIL else None
        core = _core(wm, y, T)
        h = _h_array(wm, y, T)
        ratio_v = core.ratio
        d1_v = core.ratio_d1
        d2_v = core.log_ratio_d2
    near = _near_anchor(wm, y)
    if np.any(near):
        patch = unit_anchor_patch(wm)
        ratio_v = np.where(near, patch.ratio(y), ratio_v)
        d1_v = np.where(near, patch.ratio_d1(y), d1_v)
        d2_v = np.where(near, patch.log_ratio_d2(y), d2_v)

    M2 = np.asarray(wm.prof.M2(y), dtype=float)
    f3 = np.asarray(wm.w.phi_third(y), dtype=float)
    out = []
    for i, yi in enumerate(y):
        flags = set()
        j = Jet(
            y=float(yi), q=1.0, q1=0.0, q2=0.0,
            f=float(core.f[i]), f1=float(core.f1[i]), f2=float(core.f2[i]), f3=float(f3[i]),
            M=float(core.M[i]), M1=float(core.M1[i]), M2=float(M2[i]),
        )
        with np.errstate(all="ignore"):
            pc = _pieces(j)
            fM, D = j.f * j.M, float(core.D[i])
            quad = -(j.f**3) * j.f1 * j.M * j.M1 + (2.0 * pc.A * fM - pc.B) * D + pc.A * D * D
            hh = fM + D
            den = j.f * j.f * hh * hh
            # at phi = 0 the quotient is 0/0; the patch carries the same quantity
            quotient = float(d2_v[i]) if near[i] or den == 0.0 else -quad / den
        hcb = None
        if abs(pc.A) <= A_ZERO_RTOL * pc.a_scale and pc.B != 0:
            hcb = hh - pc.C / pc.B
        if near[i]:
            flags.add(Flag.NEAR_ANCHOR)
        frame = _frame_roots(pc)
        if not frame:
            flags.add(Flag.ROOTS_UNDEFINED)
        values = (ratio_v[i], d1_v[i], d2_v[i], quad)
        if not all(np.isfinite(v) for v in values):
            flags.add(Flag.DEGENERATE)
        out.append(ConvexityDiagnostics(
            y=float(yi), ratio=float(ratio_v[i]), ratio_d1=float(d1_v[i]),
            log_ratio_d2=float(d2_v[i]), quadratic=float(quad), quotient=float(quotient),
            h=float(h[i]), gap=D, A=pc.A, B=pc.B, C=pc.C, E1=pc.E1,
            h_minus_CB=hcb, truncation=None if T is None else float(T[i]),
            flags=frozenset(flags),
        ))
    return out


def _frame_roots(pc) -> bool:
    r = _roots(pc.A, pc.B, pc.C, pc.a_scale)
    return r is not None and not r[2]


# ---------------------------------------------------------------------------
# closing example


def auxiliary_profile() -> MeanProfile:
    """``M(y) = e^{y^2}``: increasing, so not a Hardy mean."""

    def M(y):
        with np.errstate(over="ignore"):
            return np.exp(np.asarray(y, dtype=float) ** 2)

    def M1(y):
        y = np.asarray(y, dtype=float)
        return _mul(2.0 * y, M(y))

    def M2(y):
        y = np.asarray(y, dtype=float)
        return _mul(2.0 + 4.0 * y * y, M(y))

    def M3(y):
        y = np.asarray(y, dtype=float)
        return _mul(12.0 * y + 8.0 * y**3, M(y))

    return synthetic_profile(M, M1, M2, M3)


def auxiliary_example_check(y_grid) -> list[ConvexityDiagnostics]:
    """Diagnostics for the double-exponential tail weight with ``M = e^{y^2}``.

    Here ``(h/phi)' > 0`` and ``(log h/phi)'' > 0`` are expected (the mean
    increases), while ``E1 = A^2 phi < 0``.
    """
    wm = WeightedMean(make_weight("tail-doubleexp"), auxiliary_profile())
    return diagnostics(wm, y_grid)

