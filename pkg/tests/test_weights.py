import math

import mpmath
import numpy as np
import pytest
from scipy import special

from hardymeans.calculus import Context, abc_frame, abc_frame_extended
from hardymeans.functions import synthetic_profile
from hardymeans.numerics import derivative
from hardymeans.weights import (
    DEFAULT_PARAMS,
    WEIGHT_IDS,
    Anchor,
    InvalidParameter,
    UnknownId,
    make_catalogue,
    make_weight,
    phi,
    theorem_condition_residual,
)

GRID = np.geomspace(0.05, 20.0, 60)
CONST = synthetic_profile(lambda y: 1.0 + 0.0 * y, lambda y: 0.0 * y, lambda y: 0.0 * y)


def test_catalogue_ids():
    assert WEIGHT_IDS == (
        "unit-power:1", "unit-exp", "origin-power:0.5", "origin-exp",
        "tail-power:2", "tail-exp", "tail-gamma:-1", "tail-doubleexp",
    )
    assert [w.id for w in make_catalogue()] == list(WEIGHT_IDS)


def test_make_weight_defaults_and_cache():
    assert make_weight("unit-power") is make_weight("unit-power")
    assert make_weight("unit-power").params["a"] == DEFAULT_PARAMS["unit-power"]
    assert make_weight("tail-power:3").params["a"] == 3.0


@pytest.mark.parametrize("bad", ["origin-power:1", "origin-power:2", "tail-power:1", "tail-power:0.5",
                                 "tail-gamma:0", "unit-power:0", "unit-power:-1", "tail-power:x",
                                 "tail-exp:2"])
def test_strict_parameter_validation(bad):
    with pytest.raises(InvalidParameter):
        make_weight(bad)


def test_unknown_id():
    with pytest.raises(UnknownId):
        make_weight("no-such-weight")


@pytest.mark.parametrize("wid", WEIGHT_IDS)
def test_closed_form_matches_quadrature(wid):
    w = make_weight(wid)
    if w.phi_closed_form is None:
        pytest.skip("quadrature only")
    ys = np.geomspace(0.05, 20.0, 15)
    closed = w.phi_closed_form(ys)
    quad = phi(w, ys, quadrature=True)
    np.testing.assert_allclose(quad, closed, rtol=1e-9, atol=1e-300)


def test_tail_gamma_phi_against_scipy():
    w = make_weight("tail-gamma:-1")
    ys = np.geomspace(0.05, 20.0, 30)
    # -int_y^inf e^{-t}/t dt = -E1(y)
    np.testing.assert_allclose(phi(w, ys), -special.exp1(ys), rtol=1e-12)
    assert phi(w, 2.0) == pytest.approx(-special.exp1(2.0), rel=1e-12)


@pytest.mark.parametrize("wid", WEIGHT_IDS)
def test_derivative_handles_consistent(wid):
    # compared through log-derivatives, so tiny doubly-exponential values are fine
    w = make_weight(wid)
    for y in (0.3, 1.7, 4.0):
        f, d1, d2, d3 = (float(v) for v in w.derivatives(y))
        if f != 0.0:
            assert derivative(lambda t: math.log(abs(float(phi(w, t)))), y, lower=0.0) == pytest.approx(
                d1 / f, rel=1e-7)
        assert derivative(lambda t: math.log(float(w.phi_prime(t))), y, lower=0.0) == pytest.approx(d2 / d1, rel=1e-8)
        assert derivative(lambda t: math.log(abs(float(w.phi_second(t)))), y, lower=0.0) == pytest.approx(
            d3 / d2, rel=1e-8)


@pytest.mark.parametrize("wid", WEIGHT_IDS)
def test_mp_closed_forms_agree_with_binary64(wid):
    w = make_weight(wid)
    for y in (0.1, 1.3, 5.0):
        with mpmath.workdps(30):
            mp_vals = [float(v) for v in w.mp_derivatives(mpmath.mpf(y))]
        np.testing.assert_allclose(mp_vals, [float(v) for v in w.derivatives(y)], rtol=1e-12, atol=1e-300)


def test_anchor_sign_conventions():
    for w in make_catalogue():
        v = np.asarray(phi(w, GRID), dtype=float)
        if w.anchor is Anchor.UNIT:
            assert np.all(v[GRID < 1] < 0) and np.all(v[GRID > 1] > 0)
            assert phi(w, 1.0) == 0.0
        elif w.anchor is Anchor.ORIGIN:
            assert np.all(v > 0)
        else:
            assert np.all(v <= 0)
            assert np.all(v[GRID < 5] < 0)


def test_unit_weight_changes_sign_once_at_one():
    for wid in ("unit-power:1", "unit-exp", "unit-power:2.5"):
        w = make_weight(wid)
        lo, hi = 0.2, 7.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if float(phi(w, mid)) < 0 else (lo, mid)
        assert abs(lo - 1.0) < 1e-12


# ---------------------------------------------------------------------------
# goldens, criterion-1 style, in extended precision and in binary64


@pytest.mark.parametrize("wid", [w for w in WEIGHT_IDS if w != "tail-gamma:-1"])
def test_golden_A_E1_extended(wid):
    w = make_weight(wid)
    for y in GRID:
        fr = abc_frame_extended(w, float(y))
        for comp, gold in ((fr.A, w.golden_A), (fr.E1, w.golden_E1)):
            g = float(gold(float(y)))
            assert abs(comp - g) <= 1e-9 * max(1.0, abs(g))


@pytest.mark.parametrize("wid", [w for w in WEIGHT_IDS if w != "tail-gamma:-1"])
def test_golden_binary64_within_rounding_floor(wid):
    w = make_weight(wid)
    ctx = Context(w, CONST)
    for y in GRID:
        fr = abc_frame(ctx, float(y))
        gA, gE = float(w.golden_A(float(y))), float(w.golden_E1(float(y)))
        assert abs(fr.A - gA) <= 1e-9 * max(1.0, abs(gA), fr.A_scale)
        assert abs(fr.E1 - gE) <= 1e-9 * max(1.0, abs(gE), fr.E1_scale)


def test_golden_A_against_definition_binary64():
    # A = phi'' phi - phi'^2 straight from the closed-form derivatives
    for w in make_catalogue():
        if w.golden_A is None:
            continue
        f, f1, f2, _ = (np.asarray(v, dtype=float) for v in w.derivatives(GRID))
        A = f2 * f - f1 * f1
        g = w.golden_A(GRID)
        assert np.all(np.abs(A - g) <= 1e-9 * np.maximum(1.0, np.abs(g)))


def test_tail_gamma_sign_only():
    w = make_weight("tail-gamma:-1")
    assert w.golden_A is None and w.golden_E1 is None
    for y in GRID:
        fr = abc_frame_extended(w, float(y))
        assert fr.A > 0 and fr.E1 > 0


def test_auxiliary_weight_goldens():
    w = make_weight("tail-doubleexp")
    for y in np.linspace(0.1, 3.0, 20):
        fr = abc_frame_extended(w, float(y))
        assert fr.E2 == pytest.approx(0.0, abs=1e-12)
        assert fr.A < 0 and fr.E1 < 0
        assert fr.E1 == pytest.approx(fr.A**2 * float(phi(w, y)), rel=1e-12)


def test_worked_E1_example():
    # unit-power a = 1 at y = 2: E1 = 2^-4 ln(2)^2
    fr = abc_frame_extended(make_weight("unit-power:1"), 2.0)
    assert fr.E1 == pytest.approx(math.log(2.0) ** 2 / 16.0, rel=1e-14)
    assert fr.E1 == pytest.approx(0.0300283133698876, rel=1e-14)


@pytest.mark.parametrize("wid", ["unit-power:1", "unit-exp", "origin-power:0.5", "origin-exp",
                                 "tail-power:2", "tail-exp", "tail-gamma:-1"])
def test_theorem_condition_holds(wid):
    w = make_weight(wid)
    for y in GRID:
        f, f1, f2, f3 = (float(v) for v in w.derivatives(float(y)))
        terms = max(abs(f1 * f1 * f2), abs(f * f1 * f3), abs(2 * f * f2 * f2))
        assert theorem_condition_residual(w, float(y)) <= 1e-12 * terms


def test_auxiliary_weight_violates_condition():
    # the auxiliary weight has no theorem pairing: the curvature condition fails
    w = make_weight("tail-doubleexp")
    assert theorem_condition_residual(w, 1.0) > 0


def test_origin_ratio_limits():
    assert make_weight("origin-power:0.5").origin_ratio_limit == pytest.approx(-1.0)
    assert make_weight("origin-exp").origin_ratio_limit == 0.0
    for y in (1e-6, 1e-8):
        w = make_weight("origin-power:0.5")
        f, f1, f2, _ = w.derivatives(y)
        assert f2 * f / f1**2 == pytest.approx(w.origin_ratio_limit, rel=1e-9)
