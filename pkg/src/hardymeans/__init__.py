"""Weighted area integral means of Hardy-space functions on the upper half-plane.

Modules
-------
numerics   double-exponential quadrature and Ridders differentiation
weights    the weight catalogue (phi and its derivatives, closed-form goldens)
functions  test functions f and the classical mean M(y) = int |f(x+iy)|^p dx
calculus   pointwise A, B, C, E1, E2 frames and residuals of the identities
means      the ratio h/phi, its derivatives and convexity diagnostics
report     verification runs and their CSV / JSON / SVG artifacts
cli        the ``hardymeans`` command
"""

__version__ = "0.1.0"

from .numerics import Tolerance, derivative, integrate_interval, integrate_real_line  # noqa: E402
from .weights import Anchor, Weight, make_catalogue, make_weight, phi  # noqa: E402
from .functions import make_function, make_function_catalogue, mean_profile  # noqa: E402
from .calculus import Context, QFunction, abc_frame  # noqa: E402
from .means import WeightedMean, diagnostics, log_ratio_second, ratio, ratio_first_derivative  # noqa: E402

__all__ = [
    "__version__",
    "Tolerance",
    "derivative",
    "integrate_interval",
    "integrate_real_line",
    "Anchor",
    "Weight",
    "make_catalogue",
    "make_weight",
    "phi",
    "make_function",
    "make_function_catalogue",
    "mean_profile",
    "Context",
    "QFunction",
    "abc_frame",
    "WeightedMean",
    "diagnostics",
    "log_ratio_second",
    "ratio",
    "ratio_first_derivative",
]
