"""Hardy-space test functions and the classical integral mean.

For ``f = u + i v`` holomorphic on the upper half-plane,

    M(y)   = int |f(x + iy)|^p dx
    M'(y)  = p   int |f|^(p-2) (u u_y + v v_y) dx
    M''(y) = p^2 int |f|^(p-2) (u_y^2 + v_y^2) dx

with ``u_y = -v_x = -Im f'`` and ``v_y = u_x = Re f'`` (Cauchy-Riemann).
Means are evaluated for a whole vector of heights on one shared node set, so
the nested integrals in :mod:`hardymeans.means` stay cheap.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .numerics import Tolerance, derivative, integrate_interval
from .weights import UnknownId

__all__ = [
    "PlaneFunction",
    "MeanProfile",
    "MEAN_TOL",
    "mean_M",
    "mean_M_prime",
    "mean_M_second",
    "mean_profile",
    "closed_form_profile",
    "synthetic_profile",
    "make_function",
    "make_function_catalogue",
    "FUNCTION_IDS",
]

# Means are strictly positive (or strictly signed) so the absolute floor is
# only there to keep the Tolerance invariant; accuracy is relative.
MEAN_TOL = Tolerance(rel=1e-10, abs=1e-300)


@dataclass(frozen=True, eq=False)
class PlaneFunction:
    id: str
    eval: Callable[[np.ndarray], np.ndarray]
    eval_deriv: Callable[[np.ndarray], np.ndarray]
    hardy_p_range: tuple[float, float]
    # closed forms of (M, M', M'') as functions of (p, y); None where unknown
    closed_form_M: Optional[Callable[[float, np.ndarray], tuple]] = None
    # width of the |f(x+iy)| peak in x; all catalogue functions have their
    # only singularity at z = -i
    width: Callable[[np.ndarray], np.ndarray] = lambda y: 1.0 + y

    def __repr__(self):
        return f"PlaneFunction({self.id!r})"

    def __call__(self, z):
        return self.eval(z)

    def scaled(self, c: complex) -> "PlaneFunction":
        return PlaneFunction(
            id=f"{c}*{self.id}",
            eval=lambda z: c * self.eval(z),
            eval_deriv=lambda z: c * self.eval_deriv(z),
            hardy_p_range=self.hardy_p_range,
            width=self.width,
        )


@dataclass(frozen=True)
class MeanProfile:
    """``y -> M(y)`` with first and second (optionally third) derivatives."""

    M: Callable
    M1: Callable
    M2: Callable
    source: str = "quadrature"
    M3: Optional[Callable] = None

    def third(self, y: float) -> float:
        if self.M3 is not None:
            return float(self.M3(y))
        return derivative(lambda t: float(self.M2(t)), y, 1, lower=0.0)


def _check(p, y):
    if p < 2:
        raise ValueError(f"p must be >= 2, got {p}")
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("quadrature means need y > 0")
    return y


def _pow_abs(r, e):
    """``r**e`` for ``r >= 0`` via exp(e log r), with 0 where r == 0 and e > 0."""
    if e == 0:
        return np.ones_like(r)
    with np.errstate(divide="ignore"):
        out = np.exp(e * np.log(r))
    return np.where(r > 0, out, 0.0) if e > 0 else out


_FAR = 1e100
_CHUNK = 512


def _integrate_in_x(f: PlaneFunction, y, integrand, tol):
    """``int integrand(f, f', z) dx`` at each height in ``y`` (x = width * s)."""
    y = np.atleast_1d(y)
    c = np.asarray(f.width(y), dtype=float)[:, None]

    def g(s):
        z = c * s[None, :] + 1j * y[:, None]
        with np.errstate(over="ignore", invalid="ignore"):
            v = c * integrand(z)
        # far out in the plane powers of z overflow and inf/inf gives nan where
        # the decaying integrand has long since underflowed to 0
        return np.where(np.isfinite(v) | (np.abs(z) < _FAR), v, 0.0)

    # folded at x = 0, where the catalogue functions peak and have their zeros:
    # |f|^(p-2) has a kink there for non-even p, which is harmless at an endpoint
    return integrate_interval(lambda s: g(s) + g(-s), 0.0, math.inf, tol).value


def _integrate_chunked(f: PlaneFunction, y, integrand, tol):
    # bounded memory: heights x inner nodes complex arrays per call
    y = np.atleast_1d(y)
    if y.size <= _CHUNK:
        return np.atleast_1d(_integrate_in_x(f, y, integrand, tol))
    parts = [np.atleast_1d(_integrate_in_x(f, y[i:i + _CHUNK], integrand, tol))
             for i in range(0, y.size, _CHUNK)]
    return np.concatenate(parts)


def _shape(y, vals):
    return float(vals[0]) if np.ndim(y) == 0 else np.reshape(vals, np.shape(y))


def mean_M(f: PlaneFunction, p: float, y, tol: Tolerance = MEAN_TOL):
    """``int |f(x+iy)|^p dx`` by quadrature, scalar or vectorized in ``y``."""
    yy = _check(p, y)

    def integrand(z):
        return _pow_abs(np.abs(f.eval(z)), p)

    return _shape(y, _integrate_chunked(f, yy.ravel(), integrand, tol))


def mean_M_prime(f: PlaneFunction, p: float, y, tol: Tolerance = MEAN_TOL):
    yy = _check(p, y)

    def integrand(z):
        w = f.eval(z)
        d = f.eval_deriv(z)
        u, v = w.real, w.imag
        u_y, v_y = -d.imag, d.real
        return p * _pow_abs(np.abs(w), p - 2.0) * (u * u_y + v * v_y)

    return _shape(y, _integrate_chunked(f, yy.ravel(), integrand, tol))


def mean_M_second(f: PlaneFunction, p: float, y, tol: Tolerance = MEAN_TOL):
    yy = _check(p, y)

    def integrand(z):
        w = f.eval(z)
        d = f.eval_deriv(z)
        u_y, v_y = -d.imag, d.real
        return p * p * _pow_abs(np.abs(w), p - 2.0) * (u_y * u_y + v_y * v_y)

    return _shape(y, _integrate_chunked(f, yy.ravel(), integrand, tol))


def _memo_scalar(fn):
    """Cache scalar calls (pointwise frames ask for the same heights often)."""
    cached = functools.lru_cache(maxsize=8192)(lambda y: fn(y))

    def wrapped(y):
        if np.ndim(y) == 0:
            return cached(float(y))
        return fn(y)

    return wrapped


def mean_profile(f: PlaneFunction, p: float, source: str = "quadrature", tol: Tolerance = MEAN_TOL):
    if source == "closed-form":
        return closed_form_profile(f, p)
    if source != "quadrature":
        raise ValueError(f"unknown profile source {source!r}")
    _check(p, 1.0)
    return MeanProfile(
        M=_memo_scalar(lambda y: mean_M(f, p, y, tol)),
        M1=_memo_scalar(lambda y: mean_M_prime(f, p, y, tol)),
        M2=_memo_scalar(lambda y: mean_M_second(f, p, y, tol)),
        source="quadrature",
    )


def closed_form_profile(f: PlaneFunction, p: float) -> MeanProfile:
    if f.closed_form_M is None or f.closed_form_M(p, 1.0) is None:
        raise ValueError(f"no closed-form mean for {f.id} at p={p}")
    cf = f.closed_form_M
    return MeanProfile(
        M=lambda y: cf(p, y)[0],
        M1=lambda y: cf(p, y)[1],
        M2=lambda y: cf(p, y)[2],
        source="closed-form",
        M3=lambda y: cf(p, y)[3],
    )


def synthetic_profile(M, M1, M2, M3=None) -> MeanProfile:
    """A profile that is not a Hardy mean (constant M, M = e^{y^2}, ...)."""
    return MeanProfile(M=M, M1=M1, M2=M2, source="synthetic", M3=M3)


# ---------------------------------------------------------------------------
# catalogue
#
# Closed forms at p = 2 with c = 1 + y, from int dx/(x^2+c^2) = pi/c and
# int dx/(x^2+c^2)^2 = pi/(2c^3).  Each returns (M, M', M'', M''').


def _cayley1_p2(p, y):
    if p != 2:
        return None
    c = 1.0 + np.asarray(y, dtype=float)
    return math.pi / c, -math.pi / c**2, 2 * math.pi / c**3, -6 * math.pi / c**4


def _cayley2_p2(p, y):
    if p != 2:
        return None
    c = 1.0 + np.asarray(y, dtype=float)
    k = 0.5 * math.pi
    return k / c**3, -3 * k / c**4, 12 * k / c**5, -60 * k / c**6


def _exp_cayley_p2(p, y):
    # e^{-2y} pi / c
    if p != 2:
        return None
    y = np.asarray(y, dtype=float)
    c = 1.0 + y
    e = math.pi * np.exp(-2.0 * y)
    m0 = e / c
    m1 = e * (-2.0 / c - 1.0 / c**2)
    m2 = e * (4.0 / c + 4.0 / c**2 + 2.0 / c**3)
    m3 = e * (-8.0 / c - 12.0 / c**2 - 12.0 / c**3 - 6.0 / c**4)
    return m0, m1, m2, m3


def _blaschke_p2(p, y):
    # pi (y^2 + 1) / c^3  =  pi (1/c - 2/c^2 + 2/c^3)
    if p != 2:
        return None
    c = 1.0 + np.asarray(y, dtype=float)
    m0 = math.pi * (1 / c - 2 / c**2 + 2 / c**3)
    m1 = math.pi * (-1 / c**2 + 4 / c**3 - 6 / c**4)
    m2 = math.pi * (2 / c**3 - 12 / c**4 + 24 / c**5)
    m3 = math.pi * (-6 / c**4 + 48 / c**5 - 120 / c**6)
    return m0, m1, m2, m3


def _cayley1():
    return PlaneFunction(
        id="cayley-1",
        eval=lambda z: 1.0 / (z + 1j),
        eval_deriv=lambda z: -1.0 / (z + 1j) ** 2,
        hardy_p_range=(1.0, math.inf),
        closed_form_M=_cayley1_p2,
    )


def _cayley2():
    return PlaneFunction(
        id="cayley-2",
        eval=lambda z: 1.0 / (z + 1j) ** 2,
        eval_deriv=lambda z: -2.0 / (z + 1j) ** 3,
        hardy_p_range=(0.5, math.inf),
        closed_form_M=_cayley2_p2,
    )


def _exp_cayley():
    def f(z):
        return np.exp(1j * z) / (z + 1j)

    def df(z):
        w = z + 1j
        return np.exp(1j * z) * (1j / w - 1.0 / (w * w))

    return PlaneFunction(
        id="exp-cayley",
        eval=f,
        eval_deriv=df,
        hardy_p_range=(1.0, math.inf),
        closed_form_M=_exp_cayley_p2,
    )


def _blaschke_cayley():
    # (z - i)/(z + i)^2
    def f(z):
        return (z - 1j) / (z + 1j) ** 2

    def df(z):
        w = z + 1j
        # d/dz (z - i) w^{-2} = w^{-2} - 2 (z - i) w^{-3} = (w - 2(z - i)) / w^3
        return (3j - z) / w**3

    return PlaneFunction(
        id="blaschke-cayley",
        eval=f,
        eval_deriv=df,
        hardy_p_range=(1.0, math.inf),
        closed_form_M=_blaschke_p2,
    )


_BUILDERS = {
    "cayley-1": _cayley1,
    "cayley-2": _cayley2,
    "exp-cayley": _exp_cayley,
    "blaschke-cayley": _blaschke_cayley,
}
FUNCTION_IDS = tuple(_BUILDERS)


@functools.lru_cache(maxsize=None)
def make_function(function_id: str) -> PlaneFunction:
    if function_id not in _BUILDERS:
        raise UnknownId(f"unknown function id {function_id!r}")
    return _BUILDERS[function_id]()


def make_function_catalogue() -> list[PlaneFunction]:
    return [make_function(k) for k in FUNCTION_IDS]
