import numpy as np
import pytest

from vortexforms import expr as ex
from vortexforms.expr import SpaceSpec, evaluate
from vortexforms.exterior import (Form, SpatialVector, compose, contraction_matrices, decompose,
                                  exterior_derivative, form_rank_at, interior_product,
                                  numerical_rank, sort_sign, wedge)

from oracles import (dense, dense_d_fd, dense_interior, dense_wedge, form_components,
                     max_difference, random_form, random_point, random_vector, sorted_components)


def space(n):
    return SpaceSpec(tuple(f"x{i}" for i in range(1, n + 1)))


def test_sort_sign():
    assert sort_sign((3, 1, 2)) == ((1, 2, 3), 1)
    assert sort_sign((2, 1)) == ((1, 2), -1)
    assert sort_sign((1, 1))[1] == 0


def test_form_normalises_keys():
    sp = SpaceSpec(("q", "p"))
    a = Form(sp, 2, {("p", "q"): 1.0})
    b = Form(sp, 2, {(1, 2): -1.0})
    assert a == b
    assert Form(sp, 2, {("q", "q"): 5.0}).is_zero()
    assert Form(sp, 1, [((1,), 1.0), ((1,), -1.0)]).is_zero()
    assert str(Form.differential(sp, "t")) == "dt"
    assert a.coefficient(("p", "q")) == ex.ONE


def test_form_rejects_bad_keys():
    sp = SpaceSpec(("q", "p"))
    with pytest.raises(ValueError):
        Form(sp, 1, {(3,): 1.0})
    with pytest.raises(ValueError):
        Form(sp, 2, {(1,): 1.0})
    with pytest.raises(ValueError):
        Form(sp, -1)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_wedge_matches_dense_oracle(n):
    rng = np.random.default_rng(10 + n)
    sp = space(n)
    for _ in range(12):
        p = int(rng.integers(0, 3))
        q = int(rng.integers(0, n + 2 - p))
        a, b = random_form(rng, sp, p), random_form(rng, sp, q)
        point = random_point(rng, sp)
        ref = sorted_components(dense_wedge(dense(a, point), dense(b, point)))
        got = form_components(wedge(a, b), point)
        for k in ref:
            assert got[k] == pytest.approx(ref[k], abs=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_interior_product_matches_dense_oracle(n):
    rng = np.random.default_rng(20 + n)
    sp = space(n)
    for _ in range(12):
        p = int(rng.integers(1, n + 2))
        a = random_form(rng, sp, p)
        v = random_vector(rng, sp)
        point = random_point(rng, sp)
        v_ext = np.array([0.0] + [evaluate(c, point) for c in v.components])
        ref = sorted_components(dense_interior(v_ext, dense(a, point)))
        got = form_components(interior_product(v, a), point)
        for k in ref:
            assert got[k] == pytest.approx(ref[k], abs=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_exterior_derivative_matches_finite_differences(n):
    rng = np.random.default_rng(30 + n)
    sp = space(n)
    for _ in range(10):
        p = int(rng.integers(0, n + 1))
        a = random_form(rng, sp, p)
        point = random_point(rng, sp)
        ref = sorted_components(dense_d_fd(a, point))
        got = form_components(exterior_derivative(a), point)
        for k in ref:
            assert got[k] == pytest.approx(ref[k], abs=1e-6)


def test_d_squared_vanishes_and_top_degree():
    rng = np.random.default_rng(4)
    sp = space(3)
    pts = [random_point(rng, sp) for _ in range(3)]
    for p in range(4):
        a = random_form(rng, sp, p)
        dda = exterior_derivative(exterior_derivative(a))
        assert max_difference(dda, Form.zero(sp, p + 2), pts) <= 1e-10
    top = random_form(rng, sp, 4)
    assert exterior_derivative(top).is_zero()


def test_split_identity_for_spatial_forms():
    rng = np.random.default_rng(5)
    sp = space(3)
    pts = [random_point(rng, sp) for _ in range(3)]
    dt = Form.differential(sp, "t")
    for p in range(4):
        a = random_form(rng, sp, p, spatial=True)
        lhs = exterior_derivative(a)
        rhs = wedge(dt, exterior_derivative(a, "time")) + exterior_derivative(a, "spatial")
        assert max_difference(lhs, rhs, pts) <= 1e-10


def test_leibniz_rules():
    rng = np.random.default_rng(6)
    sp = space(4)
    pts = [random_point(rng, sp) for _ in range(3)]
    for _ in range(10):
        p, q = int(rng.integers(0, 3)), int(rng.integers(0, 3))
        a, b = random_form(rng, sp, p), random_form(rng, sp, q)
        lhs = exterior_derivative(wedge(a, b))
        rhs = wedge(exterior_derivative(a), b) + wedge(a, exterior_derivative(b)) * (-1) ** p
        assert max_difference(lhs, rhs, pts) <= 1e-10
        if p >= 1 and q >= 1:
            v = random_vector(rng, sp)
            lhs = interior_product(v, wedge(a, b))
            rhs = wedge(interior_product(v, a), b) + wedge(a, interior_product(v, b)) * (-1) ** p
            assert max_difference(lhs, rhs, pts) <= 1e-10


def test_interior_product_twice_vanishes():
    rng = np.random.default_rng(7)
    sp = space(4)
    pts = [random_point(rng, sp) for _ in range(3)]
    a = random_form(rng, sp, 3, max_terms=6)
    v = random_vector(rng, sp)
    assert max_difference(interior_product(v, interior_product(v, a)), Form.zero(sp, 1), pts) <= 1e-10


def test_decompose_compose_roundtrip():
    rng = np.random.default_rng(8)
    for n in range(1, 6):
        sp = space(n)
        for p in range(1, n + 2):
            sigma = random_form(rng, sp, p, max_terms=5)
            s_hat, r_hat = decompose(sigma)
            assert s_hat.is_spatial() and r_hat.is_spatial()
            assert compose(s_hat, r_hat) == sigma


def test_compose_and_spatial_errors():
    sp = space(2)
    with pytest.raises(ValueError):
        compose(Form(sp, 0, {(): 1.0}), Form(sp, 2, {(1, 2): 1.0}))
    with pytest.raises(ValueError):
        exterior_derivative(Form.differential(sp, "t"), "spatial")
    with pytest.raises(ValueError):
        exterior_derivative(Form.differential(sp, "t"), "time")
    with pytest.raises(ValueError):
        interior_product(SpatialVector(sp, (1.0, 0.0)), Form.function(sp, 1.0))
    with pytest.raises(ValueError):
        wedge(Form.differential(sp, "x1"), Form.differential(space(3), "x1"))


def test_closed_two_forms_have_even_rank():
    rng = np.random.default_rng(9)
    for n in (3, 4, 5):
        sp = space(n)
        for _ in range(10):
            omega = exterior_derivative(random_form(rng, sp, 1, spatial=True, max_terms=n), "spatial")
            point = random_point(rng, sp)
            assert form_rank_at(omega, point) % 2 == 0


def test_symplectic_square_coefficient_for_two_degrees_of_freedom():
    sp = SpaceSpec(("q1", "q2", "p1", "p2"))
    r_hat = Form(sp, 1, {("q1",): ex.Var("p1"), ("q2",): ex.Var("p2")})
    R = exterior_derivative(r_hat, "spatial")
    square = wedge(R, R)
    assert square.keys() == ((1, 2, 3, 4),)
    assert evaluate(square.coefficient((1, 2, 3, 4)), {}) == -2.0
    oracle = dense_wedge(dense(R, {n: 0.0 for n in sp.names}), dense(R, {n: 0.0 for n in sp.names}))
    assert oracle[1, 2, 3, 4] == -2.0


def test_contraction_matrix_agrees_with_interior_product():
    rng = np.random.default_rng(11)
    sp = space(4)
    a = random_form(rng, sp, 2, spatial=True, max_terms=6)
    point = random_point(rng, sp)
    M = contraction_matrices(a, point["t"], [[point[n] for n in sp.names[1:]]])[0]
    v = rng.uniform(-1, 1, size=4)
    got = form_components(interior_product(SpatialVector(sp, tuple(v)), a), point)
    spatial_keys = [k for k in sorted(got) if 0 not in k]
    assert np.allclose(M @ v, [got[k] for k in spatial_keys], atol=1e-12)


def test_numerical_rank():
    rng = np.random.default_rng(12)
    B = rng.normal(size=(6, 3))
    assert numerical_rank(B @ B.T) == 3
    assert numerical_rank(np.eye(4)) == 4
    assert numerical_rank(np.zeros((3, 3))) == 0
    assert numerical_rank(np.diag([1.0, 1e-12])) == 1
    assert numerical_rank(np.diag([1.0, 1e-6])) == 2


def test_scalar_multiplication_and_printing():
    sp = SpaceSpec(("q", "p"))
    a = Form(sp, 1, {("p",): ex.Var("q")})
    assert str(a * 2) == "(2*q) dp"
    assert str(Form(sp, 1, {("p",): ex.Var("q")})) == "q dp"
    assert str(Form.zero(sp, 1)) == "0"
    assert (a - a).is_zero()


def test_negative_terms_print_with_minus():
    sp = SpaceSpec(("q", "p"))
    a = Form(sp, 2, {("p", "q"): 1.0})
    assert str(a) == "-dq∧dp"
    b = Form(sp, 1, {("t",): ex.Var("q"), ("p",): ex.neg(ex.Var("q"))})
    assert str(b) == "q dt - q dp"
