"""Weight functions phi with their first three derivatives.

A weight is given through its derivative ``phi'(t) > 0`` and an anchor that
fixes the additive constant:

* ``Anchor.UNIT``   -- ``phi(x) = int_1^x phi'``      (zero at x = 1)
* ``Anchor.ORIGIN`` -- ``phi(x) = int_0^x phi'``      (non-negative)
* ``Anchor.TAIL``   -- ``phi(x) = -int_x^inf phi'``   (negative)

All callables are numpy-vectorized.  ``phi`` uses the closed form when the
weight carries one and anchored quadrature of ``phi'`` otherwise.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from .numerics import INNER_TOL, Tolerance, integrate_interval

__all__ = [
    "Anchor",
    "Weight",
    "InvalidParameter",
    "UnknownId",
    "phi",
    "theorem_condition_residual",
    "make_weight",
    "make_catalogue",
    "WEIGHT_IDS",
    "DEFAULT_PARAMS",
]

Func = Callable[[np.ndarray], np.ndarray]


class InvalidParameter(ValueError):
    pass


class UnknownId(KeyError):
    pass


class Anchor(enum.Enum):
    UNIT = "unit"
    ORIGIN = "origin"
    TAIL = "tail"

    @property
    def point(self) -> float:
        return {"unit": 1.0, "origin": 0.0, "tail": math.inf}[self.value]


@dataclass(frozen=True, eq=False)
class Weight:
    """A catalogue weight.

    ``golden_A`` / ``golden_E1`` / ``golden_E2`` are closed forms of the
    quantities ``A = phi'' phi - phi'^2`` etc. (with ``q = 1``) where they are
    known; ``golden_signs`` holds sign-only facts (``{"A": 1, "E1": 1}``).
    ``family`` names which convexity result the weight is used with:
    ``"unit"``, ``"origin"``, ``"tail"``, ``"tail-flat"`` (``A == 0``
    identically) or ``None`` for the auxiliary weight.
    """

    id: str
    anchor: Anchor
    phi_prime: Func
    phi_second: Func
    phi_third: Func
    phi_closed_form: Optional[Func] = None
    golden_A: Optional[Func] = None
    golden_E1: Optional[Func] = None
    golden_E2: Optional[Func] = None
    golden_signs: Mapping[str, int] = field(default_factory=dict)
    params: Mapping[str, float] = field(default_factory=dict)
    family: Optional[str] = None
    # right limit of phi'' phi / phi'^2 at 0, fixed per weight (origin family)
    origin_ratio_limit: Optional[float] = None
    # phi and its first three derivatives at an mpmath number (extended precision)
    mp_derivatives: Optional[Callable] = None

    def __repr__(self):
        return f"Weight({self.id!r}, anchor={self.anchor.value})"

    def __call__(self, y):
        return phi(self, y)

    def derivatives(self, y):
        """``(phi, phi', phi'', phi''')`` at ``y``."""
        return phi(self, y), self.phi_prime(y), self.phi_second(y), self.phi_third(y)


@functools.lru_cache(maxsize=65536)
def _phi_quadrature(w: Weight, y: float, tol: Tolerance) -> float:
    if w.anchor is not Anchor.TAIL and y == w.anchor.point:
        return 0.0
    return float(_phi_quadrature_array(w, np.array([y]), tol)[0])


def _phi_quadrature_array(w: Weight, y: np.ndarray, tol: Tolerance) -> np.ndarray:
    """All heights at once, each anchored interval mapped onto a fixed one."""
    flat = np.ravel(np.asarray(y, dtype=float))
    col = flat[:, None]
    with np.errstate(over="ignore", under="ignore", invalid="ignore"):
        if w.anchor is Anchor.TAIL:
            # -int_y^inf phi' = -y int_1^inf phi'(y u) du
            val = -flat * integrate_interval(lambda u: w.phi_prime(col * u), 1.0, math.inf, tol).value
        else:
            a = w.anchor.point
            span = flat - a
            val = span * integrate_interval(lambda u: w.phi_prime(a + span[:, None] * u), 0.0, 1.0, tol).value
    return np.reshape(val, np.shape(y))


def phi(w: Weight, y, tol: Tolerance = INNER_TOL, *, quadrature: bool = False):
    """Value of the weight at ``y > 0`` (scalar or array).

    ``quadrature=True`` forces the anchored-integral route even when a closed
    form exists; tests use it to cross-check the two.
    """
    if w.phi_closed_form is not None and not quadrature:
        return w.phi_closed_form(y)
    if np.ndim(y) == 0:
        return _phi_quadrature(w, float(y), tol)
    if np.size(y) == 0:
        return np.zeros(np.shape(y))
    return _phi_quadrature_array(w, y, tol)


def theorem_condition_residual(w: Weight, y):
    """``phi'^2 phi'' + phi phi' phi''' - 2 phi phi''^2``; must be ``<= 0``."""
    f, f1, f2, f3 = w.derivatives(y)
    return f1 * f1 * f2 + f * f1 * f3 - 2.0 * f * f2 * f2


# ---------------------------------------------------------------------------
# extended-precision closed forms (mpmath is imported lazily; x is an mpf)


def _mp_power(a, anchor, x):
    import mpmath as mp

    a = mp.mpf(a)
    d1 = x**-a
    if anchor == "unit":
        f = mp.log(x) if a == 1 else (x ** (1 - a) - 1) / (1 - a)
    elif anchor == "origin":
        f = x ** (1 - a) / (1 - a)
    else:
        f = -(x ** (1 - a)) / (a - 1)
    return f, d1, -a * d1 / x, a * (a + 1) * d1 / (x * x)


def _mp_exp(anchor, x):
    import mpmath as mp

    e = mp.exp(-x)
    f = {"unit": mp.exp(-1) - e, "origin": -mp.expm1(-x), "tail": -e}[anchor]
    return f, e, -e, e


def _mp_tail_gamma(a, x):
    import mpmath as mp

    a = mp.mpf(a)
    d1 = x**a * mp.exp(-x)
    u = a / x - 1
    return -mp.gammainc(a + 1, x), d1, u * d1, (u * u - a / (x * x)) * d1


def _mp_doubleexp(x):
    import mpmath as mp

    ex = mp.exp(x)
    d1 = mp.exp(x - ex)
    return -mp.exp(-ex), d1, -(ex - 1) * d1, ((ex - 1) ** 2 - ex) * d1


# ---------------------------------------------------------------------------
# catalogue


def _unit_power(a: float) -> Weight:
    if not a > 0:
        raise InvalidParameter(f"unit-power needs a > 0, got {a}")

    def closed(x):
        lx = np.log(x)
        if a == 1.0:
            return lx
        return np.expm1((1.0 - a) * lx) / (1.0 - a)

    return Weight(
        id=f"unit-power:{a:g}",
        anchor=Anchor.UNIT,
        phi_prime=lambda t: np.power(t, -a),
        phi_second=lambda t: -a * np.power(t, -a - 1.0),
        phi_third=lambda t: a * (a + 1.0) * np.power(t, -a - 2.0),
        phi_closed_form=closed,
        golden_A=lambda x: -np.power(x, -a - 1.0) * (closed(x) + 1.0),
        golden_E1=lambda x: a * np.power(x, -2.0 * a - 2.0) * closed(x) ** 2,
        params={"a": a},
        family="unit",
        mp_derivatives=functools.partial(_mp_power, a, "unit"),
    )


def _unit_exp() -> Weight:
    closed = lambda x: math.exp(-1.0) - np.exp(-x)  # noqa: E731
    return Weight(
        id="unit-exp",
        anchor=Anchor.UNIT,
        phi_prime=lambda t: np.exp(-t),
        phi_second=lambda t: -np.exp(-t),
        phi_third=lambda t: np.exp(-t),
        phi_closed_form=closed,
        golden_A=lambda x: -np.exp(-x - 1.0),
        golden_E1=lambda x: np.exp(-2.0 * x - 1.0) * closed(x) ** 2,
        family="unit",
        mp_derivatives=functools.partial(_mp_exp, "unit"),
    )


def _origin_power(a: float) -> Weight:
    if not a < 1:
        raise InvalidParameter(f"origin-power needs a < 1, got {a}")
    return Weight(
        id=f"origin-power:{a:g}",
        anchor=Anchor.ORIGIN,
        phi_prime=lambda t: np.power(t, -a),
        phi_second=lambda t: -a * np.power(t, -a - 1.0),
        phi_third=lambda t: a * (a + 1.0) * np.power(t, -a - 2.0),
        phi_closed_form=lambda x: np.power(x, 1.0 - a) / (1.0 - a),
        golden_A=lambda x: np.power(x, -2.0 * a) / (a - 1.0),
        golden_E1=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        params={"a": a},
        family="origin",
        origin_ratio_limit=-a / (1.0 - a),
        mp_derivatives=functools.partial(_mp_power, a, "origin"),
    )


def _origin_exp() -> Weight:
    closed = lambda x: -np.expm1(-x)  # noqa: E731
    return Weight(
        id="origin-exp",
        anchor=Anchor.ORIGIN,
        phi_prime=lambda t: np.exp(-t),
        phi_second=lambda t: -np.exp(-t),
        phi_third=lambda t: np.exp(-t),
        phi_closed_form=closed,
        golden_A=lambda x: -np.exp(-x),
        golden_E1=lambda x: np.exp(-2.0 * x) * closed(x) ** 2,
        family="origin",
        origin_ratio_limit=0.0,
        mp_derivatives=functools.partial(_mp_exp, "origin"),
    )


def _tail_power(a: float) -> Weight:
    if not a > 1:
        raise InvalidParameter(f"tail-power needs a > 1, got {a}")
    return Weight(
        id=f"tail-power:{a:g}",
        anchor=Anchor.TAIL,
        phi_prime=lambda t: np.power(t, -a),
        phi_second=lambda t: -a * np.power(t, -a - 1.0),
        phi_third=lambda t: a * (a + 1.0) * np.power(t, -a - 2.0),
        phi_closed_form=lambda x: -np.power(x, 1.0 - a) / (a - 1.0),
        golden_A=lambda x: np.power(x, -2.0 * a) / (a - 1.0),
        golden_E1=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        params={"a": a},
        family="tail",
        mp_derivatives=functools.partial(_mp_power, a, "tail"),
    )


def _tail_exp() -> Weight:
    zero = lambda x: np.zeros_like(np.asarray(x, dtype=float))  # noqa: E731
    return Weight(
        id="tail-exp",
        anchor=Anchor.TAIL,
        phi_prime=lambda t: np.exp(-t),
        phi_second=lambda t: -np.exp(-t),
        phi_third=lambda t: np.exp(-t),
        phi_closed_form=lambda x: -np.exp(-x),
        golden_A=zero,
        golden_E1=zero,
        family="tail-flat",
        mp_derivatives=functools.partial(_mp_exp, "tail"),
    )


def _tail_gamma(a: float) -> Weight:
    # phi' = t^a e^{-t}; phi is an upper incomplete gamma with a + 1 possibly <= 0,
    # so it is left to quadrature.
    if not a < 0:
        raise InvalidParameter(f"tail-gamma needs a < 0, got {a}")

    def d1(t):
        return np.power(t, a) * np.exp(-t)

    def d2(t):
        return (a / t - 1.0) * d1(t)

    def d3(t):
        return ((a / t - 1.0) ** 2 - a / (t * t)) * d1(t)

    return Weight(
        id=f"tail-gamma:{a:g}",
        anchor=Anchor.TAIL,
        phi_prime=d1,
        phi_second=d2,
        phi_third=d3,
        golden_signs={"A": 1, "E1": 1},
        params={"a": a},
        family="tail",
        mp_derivatives=functools.partial(_mp_tail_gamma, a),
    )


def _tail_doubleexp() -> Weight:
    # phi' = exp(t - e^t), phi = -exp(-e^x)

    def d1(t):
        return np.exp(t - np.exp(t))

    def closed(x):
        return -np.exp(-np.exp(x))

    def golden_A(x):
        return -np.exp(x - 2.0 * np.exp(x))

    return Weight(
        id="tail-doubleexp",
        anchor=Anchor.TAIL,
        phi_prime=d1,
        phi_second=lambda t: -np.expm1(t) * d1(t),
        phi_third=lambda t: (np.expm1(t) ** 2 - np.exp(t)) * d1(t),
        phi_closed_form=closed,
        golden_A=golden_A,
        golden_E1=lambda x: golden_A(x) ** 2 * closed(x),
        golden_E2=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        golden_signs={"A": -1, "E1": -1},
        family=None,
        mp_derivatives=_mp_doubleexp,
    )


_BUILDERS: dict[str, Callable[..., Weight]] = {
    "unit-power": _unit_power,
    "unit-exp": _unit_exp,
    "origin-power": _origin_power,
    "origin-exp": _origin_exp,
    "tail-power": _tail_power,
    "tail-exp": _tail_exp,
    "tail-gamma": _tail_gamma,
    "tail-doubleexp": _tail_doubleexp,
}

DEFAULT_PARAMS = {"unit-power": 1.0, "origin-power": 0.5, "tail-power": 2.0, "tail-gamma": -1.0}

WEIGHT_IDS = tuple(
    f"{name}:{DEFAULT_PARAMS[name]:g}" if name in DEFAULT_PARAMS else name for name in _BUILDERS
)


@functools.lru_cache(maxsize=None)
def make_weight(weight_id: str) -> Weight:
    """Build a weight from its id, e.g. ``"unit-power:1"`` or ``"tail-exp"``.

    A parametrized family given without ``:a`` gets its default parameter.
    Instances are cached, so equal ids give the same object.
    """
    name, _, arg = weight_id.partition(":")
    if name not in _BUILDERS:
        raise UnknownId(f"unknown weight id {weight_id!r}")
    if name in DEFAULT_PARAMS:
        try:
            a = float(arg) if arg else DEFAULT_PARAMS[name]
        except ValueError as exc:
            raise InvalidParameter(f"bad parameter in {weight_id!r}") from exc
        return _BUILDERS[name](a)
    if arg:
        raise InvalidParameter(f"{name} takes no parameter")
    return _BUILDERS[name]()


def make_catalogue(params: Optional[Mapping[str, float]] = None) -> list[Weight]:
    """The seven catalogue weights followed by the auxiliary double-exponential one."""
    params = {**DEFAULT_PARAMS, **(params or {})}
    out = []
    for name in _BUILDERS:
        out.append(make_weight(f"{name}:{params[name]:g}" if name in DEFAULT_PARAMS else name))
    return out
