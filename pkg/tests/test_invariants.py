import math
import warnings

import numpy as np
import pytest

from vortexforms import expr as ex
from vortexforms.dynamics import VortexDynamics
from vortexforms.exterior import Form, exterior_derivative
from vortexforms.invariants import (DegreeOverflowWarning, ExpressionChain, MapChain, advect_chain,
                                    check_absolute_invariant, check_liouville,
                                    check_relative_invariant, gauss_legendre, integrate_over_chain,
                                    invariant_power, solution_tube)
from vortexforms.systems import HamiltonianSpec, NambuSpec, hamiltonian_sigma, nambu_sigma

CIRCLE = ["cos(2*pi*u1)", "sin(2*pi*u1)"]


def osc_sigma(H="(p^2 + q^2)/2"):
    return hamiltonian_sigma(HamiltonianSpec.build(1, H))


def test_gauss_legendre_exactness():
    x, w = gauss_legendre(5, 1)
    assert w.sum() == pytest.approx(1.0)
    assert np.dot(w, x[:, 0] ** 9) == pytest.approx(0.1, rel=1e-14)
    X, W = gauss_legendre(4, 2)
    assert X.shape == (16, 2)
    assert np.dot(W, X[:, 0] ** 3 * X[:, 1] ** 2) == pytest.approx(1 / 12, rel=1e-14)


def test_circle_integral_of_p_dq():
    sigma = osc_sigma()
    chain = ExpressionChain.spatial(sigma.space, 1, CIRCLE, cycle=True)
    r_hat = invariant_power(sigma, 0, "relative", spatial=True)
    assert integrate_over_chain(r_hat, chain) == pytest.approx(-math.pi, abs=1e-12)


def test_area_of_square_and_orientation():
    sp = HamiltonianSpec.build(1, "0").space
    chain = ExpressionChain.spatial(sp, 2, ["2*u1", "3*u2"])
    area = Form(sp, 2, {("q", "p"): 1.0})
    assert integrate_over_chain(area, chain) == pytest.approx(6.0)
    assert integrate_over_chain(-area, chain) == pytest.approx(-6.0)


def test_map_chain_matches_expression_chain():
    sp = HamiltonianSpec.build(1, "0").space
    r = Form(sp, 1, {("q",): ex.Var("p")})
    expr_chain = ExpressionChain.spatial(sp, 1, CIRCLE, cycle=True)

    def curve(U):
        u = U[:, 0]
        return np.column_stack([np.zeros_like(u), np.cos(2 * np.pi * u), np.sin(2 * np.pi * u)])

    map_chain = MapChain(sp, 1, curve, cycle=True)
    assert integrate_over_chain(r, map_chain) == pytest.approx(integrate_over_chain(r, expr_chain), abs=1e-8)


def test_chain_validation():
    sp = HamiltonianSpec.build(1, "0").space
    with pytest.raises(ValueError, match="cycle"):
        ExpressionChain.spatial(sp, 1, ["u1", "0"], cycle=True)
    with pytest.raises(ValueError):
        ExpressionChain(sp, 1, ["u1", "0"])
    chain = ExpressionChain.spatial(sp, 1, CIRCLE, cycle=True)
    with pytest.raises(ValueError):
        integrate_over_chain(Form(sp, 2, {(1, 2): 1.0}), chain)


def test_invariant_power_degrees():
    sigma = hamiltonian_sigma(HamiltonianSpec.build(2, "(p1^2+p2^2+q1^2+q2^2)/2"))
    assert invariant_power(sigma, 1, "relative").degree == 3
    assert invariant_power(sigma, 1, "absolute").degree == 4
    assert invariant_power(sigma, 1, "absolute", spatial=True).keys() == ((1, 2, 3, 4),)
    with pytest.warns(DegreeOverflowWarning):
        assert invariant_power(osc_sigma(), 2, "relative", spatial=True).is_zero()
    with pytest.raises(ValueError):
        invariant_power(sigma, 0, "bogus")


def test_relative_invariant_oscillator():
    sigma = osc_sigma()
    chain = ExpressionChain.spatial(sigma.space, 1, CIRCLE, cycle=True)
    rep = check_relative_invariant(sigma, chain, 0.0, 1.0)
    assert rep.value_t0 == pytest.approx(-math.pi, abs=1e-12)
    assert rep.drift_abs <= 1e-6
    same = check_relative_invariant(sigma, chain, 0.0, 0.0)
    assert same.drift_abs == 0.0


def test_relative_invariant_with_time_dependent_hamiltonian():
    sigma = osc_sigma("(p^2 + q^2)/2 + q*cos(3*t)")
    chain = ExpressionChain.spatial(sigma.space, 1, ["0.5*cos(2*pi*u1)", "0.3*sin(2*pi*u1) + 0.2"], cycle=True)
    rep = check_relative_invariant(sigma, chain, 0.0, 2.0)
    assert rep.drift_rel <= 1e-6


def test_open_chain_integral_is_not_invariant():
    sigma = osc_sigma()
    chain = ExpressionChain.spatial(sigma.space, 1, ["u1", "1"])
    rep = check_absolute_invariant(osc_sigma(), ExpressionChain.spatial(sigma.space, 2, ["u1", "u2"]), 0.0, 1.0)
    assert rep.drift_abs <= 1e-8
    with pytest.raises(ValueError, match="cycle"):
        check_relative_invariant(sigma, chain, 0.0, 1.0)
    r_hat = invariant_power(sigma, 0, spatial=True)
    dyn = VortexDynamics.from_sigma(sigma)
    moved = advect_chain(chain, dyn, 0.0, 1.0)
    assert abs(integrate_over_chain(r_hat, moved) - integrate_over_chain(r_hat, chain)) > 1e-2


def test_absolute_invariant_m2():
    sigma = hamiltonian_sigma(HamiltonianSpec.build(2, "(p1^2+p2^2+q1^2+q2^2)/2 + q1^2*q2 - q2^3/3"))
    chain = ExpressionChain.spatial(sigma.space, 2, ["0.3*u1", "0.1", "0.2*u2", "0.1*u1"])
    rep = check_absolute_invariant(sigma, chain, 0.0, 1.0)
    assert abs(rep.value_t0) > 1e-3
    assert rep.drift_abs <= 1e-8


def test_relative_invariant_nambu_torus():
    spec = NambuSpec.build(3, ["(x^2+y^2+z^2)/2", "x^2/2 + y^2/4 + z^2/6"])
    sigma = nambu_sigma(spec)
    R, r = 0.6, 0.25
    comps = [f"({R} + {r}*cos(2*pi*u2))*cos(2*pi*u1)", f"({R} + {r}*cos(2*pi*u2))*sin(2*pi*u1)",
             f"{r}*sin(2*pi*u2)"]
    chain = ExpressionChain.spatial(sigma.space, 2, comps, cycle=True)
    rep = check_relative_invariant(sigma, chain, 0.0, 1.0, order=24)
    # ∮ x dy∧dz over the torus is its (signed) volume 2π² R r²
    assert abs(rep.value_t0) == pytest.approx(2 * math.pi ** 2 * R * r ** 2, rel=1e-10)
    assert rep.drift_rel <= 1e-6


def test_solution_tube_integral_vanishes():
    sigma = osc_sigma()
    dyn = VortexDynamics.from_sigma(sigma)
    chain = ExpressionChain.spatial(sigma.space, 1, CIRCLE, cycle=True)
    tube = solution_tube(chain, dyn, 0.0, 1.0)
    assert tube.k == 2 and tube.points.shape == (256, 3)
    dsigma = exterior_derivative(sigma)
    assert abs(integrate_over_chain(dsigma, tube)) <= 1e-8
    # q dt∧dp is not closed; on the unit-circle tube it pulls back to -2π cos²θ du∧ds
    control = Form(sigma.space, 2, {("t", "p"): ex.Var("q")})
    assert integrate_over_chain(control, tube) == pytest.approx(-math.pi, rel=1e-6)


def test_advect_chain_requires_slice():
    sigma = osc_sigma()
    dyn = VortexDynamics.from_sigma(sigma)
    chain = ExpressionChain.spatial(sigma.space, 1, CIRCLE, t=0.5, cycle=True)
    with pytest.raises(ValueError, match="slice"):
        advect_chain(chain, dyn, 0.0, 1.0)


@pytest.mark.parametrize("sigma, box", [
    (osc_sigma(), [(-1, 1)] * 2),
    (hamiltonian_sigma(HamiltonianSpec.build(2, "(p1^2+p2^2+q1^2+q2^2)/2 + q1^2*q2 - q2^3/3")),
     [(-0.5, 0.5)] * 4),
    (nambu_sigma(NambuSpec.build(3, ["(x^2+y^2+z^2)/2", "x^2/2 + y^2/4 + z^2/6"])), [(-1, 1)] * 3),
])
def test_liouville(sigma, box):
    dyn = VortexDynamics.from_sigma(sigma)
    rep = check_liouville(dyn, box, 1.0, 16)
    assert rep.kind == "liouville"
    assert rep.max_abs_det_minus_one <= 1e-5
    assert rep.meta["failures"] == []


def test_liouville_detects_non_volume_preserving_map():
    # adding a damping term -x/2 contracts areas by exp(-t)
    sigma = osc_sigma()
    dyn = VortexDynamics.from_sigma(sigma)
    original = dyn.velocity
    dyn.velocity = lambda t, X: original(t, X) - 0.5 * np.asarray(X)
    rep = check_liouville(dyn, [(-1, 1)] * 2, 1.0, 4)
    assert rep.max_abs_det_minus_one == pytest.approx(1 - math.exp(-1.0), rel=1e-4)


def test_report_to_dict():
    sigma = osc_sigma()
    chain = ExpressionChain.spatial(sigma.space, 1, CIRCLE, cycle=True)
    d = check_relative_invariant(sigma, chain, 0.0, 0.5).to_dict()
    assert {"kind", "k", "value_t0", "value_t1", "drift_abs", "drift_rel", "order"} <= set(d)


def test_no_warnings_for_regular_use():
    sigma = osc_sigma()
    chain = ExpressionChain.spatial(sigma.space, 1, CIRCLE, cycle=True)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        check_relative_invariant(sigma, chain, 0.0, 0.5)
