import math

import numpy as np
import pytest
import sympy as sp

from hardymeans.calculus import (
    AbcFrame,
    Context,
    PreconditionFailed,
    QFunction,
    Residual,
    RootsUndefined,
    abc_frame,
    jet,
    locate_A_sign_change,
    residual_B_derivative,
    residual_C_derivative,
    residual_E1,
    residual_E2,
    residual_hCB,
    residual_hF,
    residual_quadratic_at_phiM,
    residual_rootF2_system,
)
from hardymeans.functions import make_function, mean_profile, synthetic_profile
from hardymeans.weights import make_weight

Y = sp.Symbol("y", positive=True)


def _synthetic_q_context():
    q = QFunction(lambda y: 1.0 + y * y, lambda y: 2.0 * y, lambda y: 2.0 + 0.0 * y)
    prof = synthetic_profile(lambda y: 2.0 + np.exp(-y), lambda y: -np.exp(-y), lambda y: np.exp(-y),
                             lambda y: -np.exp(-y))
    return Context(make_weight("unit-exp"), prof, q)


def _symbolic_frame():
    """The frame quantities straight from sympy for q = 1 + y^2, phi' = e^-y (unit anchor), M = 2 + e^-y."""
    q = 1 + Y**2
    phi = sp.exp(-1) - sp.exp(-Y)
    d1 = sp.diff(phi, Y)
    M = 2 + sp.exp(-Y)
    A = sp.diff(q * d1, Y) * phi - q * d1**2
    B0 = sp.diff(q * d1, Y) * phi**2
    C0 = q * phi**2 * d1**2
    B = sp.diff(q * d1 * M, Y) * phi**2
    C = q * phi**2 * d1**2 * M**2
    E2 = A * q * phi * d1**2 - sp.diff(B0, Y) * q * phi * d1 + sp.diff(q * d1, Y) * phi * q * sp.diff(phi**2 * d1, Y)
    E1 = A**2 * phi + E2
    return {"A": A, "B0": B0, "C0": C0, "B": B, "C": C, "E1": E1, "E2": E2,
            "B'": sp.diff(B, Y), "C'": sp.diff(C, Y)}


SYM = _symbolic_frame()


@pytest.mark.parametrize("y", [0.1, 0.5, 2.0, 7.0])
def test_frame_against_sympy_general_q(y):
    fr = abc_frame(_synthetic_q_context(), y)
    for name in ("A", "B0", "C0", "B", "C", "E1", "E2"):
        exact = float(SYM[name].subs(Y, y).evalf(30))
        assert getattr(fr, name) == pytest.approx(exact, rel=1e-12, abs=1e-14), name
    assert fr.discriminant == pytest.approx(fr.B**2 - 4 * fr.A * fr.C, rel=1e-12)


@pytest.mark.parametrize("y", [0.2, 1.5, 6.0])
def test_expanded_derivatives_against_sympy(y):
    ctx = _synthetic_q_context()
    rB, rC = residual_B_derivative(ctx, y), residual_C_derivative(ctx, y)
    assert rB.normalized <= 1e-12 and rC.normalized <= 1e-12
    # and the B', C' in the residuals are the true derivatives
    from hardymeans.calculus import _pieces

    pc = _pieces(jet(ctx, y))
    assert pc.B1 == pytest.approx(float(SYM["B'"].subs(Y, y).evalf(30)), rel=1e-12, abs=1e-14)
    assert pc.C1 == pytest.approx(float(SYM["C'"].subs(Y, y).evalf(30)), rel=1e-12, abs=1e-14)


def test_roots_are_roots_and_cancellation_free():
    ctx = Context(make_weight("unit-power:1"), mean_profile(make_function("cayley-1"), 2.0))
    for y in np.geomspace(0.05, 20, 25):
        fr = abc_frame(ctx, float(y))
        if not fr.roots_defined:
            continue
        for F in (fr.F1, fr.F2):
            scale = max(abs(fr.A) * F * F, abs(fr.B * F), abs(fr.C))
            assert abs(fr.A * F * F - fr.B * F + fr.C) <= 1e-9 * scale
        # the textbook formulas, where they do not cancel, agree
        s = math.sqrt(fr.discriminant)
        assert fr.F1 == pytest.approx((fr.B - s) / (2 * fr.A), rel=1e-6)
        assert fr.F2 == pytest.approx((fr.B + s) / (2 * fr.A), rel=1e-6)


def test_frame_roots_undefined_when_A_zero():
    ctx = Context(make_weight("tail-exp"), mean_profile(make_function("cayley-1"), 2.0))
    fr = abc_frame(ctx, 1.0)
    assert fr.A == 0.0 and fr.F1 is None and fr.F2 is None and not fr.roots_defined
    with pytest.raises(RootsUndefined):
        residual_hF(ctx, 1.0, 1)


def test_residual_scale():
    r = Residual(3.0, 3.0 + 1e-9)
    assert r.scale == 3.0 + 1e-9 and r.within(1e-9)
    assert Residual(0.0, 1e-9).scale == 1.0
    # a cancellation of large summands sets the floor
    assert Residual(0.0, 1e-5, magnitude=1e12).normalized == pytest.approx(1e-17)


def test_worked_E1_value():
    ctx = Context(make_weight("unit-power:1"), mean_profile(make_function("cayley-1"), 2.0))
    assert abc_frame(ctx, 2.0).E1 == pytest.approx(math.log(2) ** 2 / 16, rel=1e-13)


def test_auxiliary_E2_vanishes():
    ctx = Context(make_weight("tail-doubleexp"), mean_profile(make_function("cayley-1"), 2.0))
    for y in (0.2, 1.0, 2.5):
        fr = abc_frame(ctx, y)
        assert abs(fr.E2) <= 1e-12 * max(1.0, fr.E1_scale)
        assert fr.E1 < 0


def test_A_sign_change_of_unit_power():
    # A = -x^-2 (ln x + 1) vanishes at 1/e
    ctx = Context(make_weight("unit-power:1"), synthetic_profile(lambda y: 1.0, lambda y: 0.0, lambda y: 0.0))
    assert locate_A_sign_change(ctx, 0.1, 3.0) == pytest.approx(math.exp(-1), rel=1e-12)
    assert locate_A_sign_change(ctx, 0.5, 3.0) is None


# ---------------------------------------------------------------------------
# lemma residual families (subset; the full sweep is the acceptance suite)


LEMMA_WEIGHTS = ["unit-power:1", "origin-exp", "tail-power:2", "tail-gamma:-1"]
YS = [0.07, 0.4, 1.3, 3.0, 11.0]


def _lemma_values(ctx, y):
    out = {
        "E2": residual_E2(ctx, y),
        "B'": residual_B_derivative(ctx, y),
        "C'": residual_C_derivative(ctx, y),
        "quadratic_at_phiM": residual_quadratic_at_phiM(ctx, y),
    }
    l1, l2 = residual_rootF2_system(ctx, y)
    out["rootF2_1"], out["rootF2_2"] = l1, l2
    return out


@pytest.mark.parametrize("wid", LEMMA_WEIGHTS)
@pytest.mark.parametrize("fid", ["cayley-1", "cayley-2"])
def test_algebraic_residuals(wid, fid):
    ctx = Context(make_weight(wid), mean_profile(make_function(fid), 2.0))
    for y in YS:
        for name, r in _lemma_values(ctx, y).items():
            assert r.normalized <= 1e-8, (name, y, r)


@pytest.mark.parametrize("wid", LEMMA_WEIGHTS)
def test_numerical_derivative_residuals(wid):
    ctx = Context(make_weight(wid), mean_profile(make_function("cayley-1"), 4.0))
    for y in YS:
        try:
            assert residual_E1(ctx, y).normalized <= 1e-7
        except PreconditionFailed:
            pass
        for branch in (1, 2):
            try:
                assert residual_hF(ctx, y, branch).normalized <= 1e-7
            except RootsUndefined:
                pass


def test_general_q_residuals():
    ctx = _synthetic_q_context()
    for y in np.geomspace(0.05, 20, 12):
        y = float(y)
        for name, r in _lemma_values(ctx, y).items():
            assert r.normalized <= 1e-8, name
        assert residual_E1(ctx, y).normalized <= 1e-7
        for branch in (1, 2):
            assert residual_hF(ctx, y, branch).normalized <= 1e-7


def test_hCB_for_flat_weight_and_precondition():
    ctx = Context(make_weight("tail-exp"), mean_profile(make_function("cayley-2"), 2.0))
    for y in YS:
        assert residual_hCB(ctx, y).normalized <= 1e-8
    with pytest.raises(PreconditionFailed):
        residual_hCB(Context(make_weight("tail-power:2"), ctx.prof), 1.0)


def test_frame_is_pure():
    ctx = Context(make_weight("origin-power:0.5"), mean_profile(make_function("exp-cayley"), 3.0))
    a, b = abc_frame(ctx, 0.8), abc_frame(ctx, 0.8)
    assert a == b and isinstance(a, AbcFrame)
