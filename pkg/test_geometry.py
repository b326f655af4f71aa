"""
Tests for surface models, bounds, rotation, transport and distance.
"""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from errors import DomainError, ModelError, PreconditionError
from geometry import (Bump, build_model, certify_bounds, distance, gauss_curvature,
                      geodesic_shoot, hyperbolic_direction, hyperbolic_distance, inner,
                      inverse_exponential, parallel_transport, rotate_n, transport_angle,
                      unit_tangent)
from models import TangentVector, UnitVector

coordinate = st.floats(min_value=-3.0, max_value=3.0, allow_nan=False)
height = st.floats(min_value=0.2, max_value=5.0, allow_nan=False)
component = st.floats(min_value=-10.0, max_value=10.0, allow_nan=False)


def test_hyperbolic_curvature_is_minus_one(hyperbolic):
    for p in [(0.0, 1.0), (2.5, 0.3), (-1.0, 4.0)]:
        assert gauss_curvature(hyperbolic, p) == pytest.approx(-1.0, abs=1e-14)


def test_perturbed_curvature_negative_and_exact_outside_support(perturbed):
    xs = np.linspace(-2.0, 2.0, 9)
    ys = np.geomspace(0.3, 4.0, 9)
    assert max(gauss_curvature(perturbed, (x, y)) for x in xs for y in ys) < 0.0
    assert gauss_curvature(perturbed, (0.0, 60.0)) == pytest.approx(-1.0, abs=1e-14)


def test_bump_jet_matches_finite_differences():
    bump = Bump((0.2, 1.4), 1.5, 0.07)
    x, y, h = 0.5, 1.1, 1e-5
    value, gx, gy, lap = bump.jet(x, y)
    assert value > 0.0
    fx = (bump.jet(x + h, y)[0] - bump.jet(x - h, y)[0]) / (2 * h)
    fy = (bump.jet(x, y + h)[0] - bump.jet(x, y - h)[0]) / (2 * h)
    assert gx == pytest.approx(fx, abs=1e-8)
    assert gy == pytest.approx(fy, abs=1e-8)
    h = 1e-3
    second = (bump.jet(x + h, y)[0] + bump.jet(x - h, y)[0] + bump.jet(x, y + h)[0]
              + bump.jet(x, y - h)[0] - 4.0 * value) / (h * h)
    assert lap == pytest.approx(second, abs=1e-5)


def test_bump_vanishes_outside_its_radius():
    bump = Bump((0.0, 1.0), 1.0, 0.5)
    far = (0.0, math.exp(1.2))
    assert bump.jet(*far) == (0.0, 0.0, 0.0, 0.0)


def test_bump_rejects_invalid_shape():
    with pytest.raises(ModelError):
        Bump((0.0, -1.0), 1.0, 0.1)
    with pytest.raises(ModelError):
        Bump((0.0, 1.0), 0.0, 0.1)


def test_constant_field_bounds(constant):
    bounds = certify_bounds(constant)
    assert bounds.q1 == pytest.approx(0.8 / 1.1, abs=1e-12)
    assert bounds.q0 == pytest.approx(0.88, abs=1e-12)
    assert bounds.k0 == pytest.approx(1.1, abs=1e-12)
    assert bounds.grad_kappa_sup == 0.0


def test_strong_field_is_rejected():
    with pytest.raises(ModelError):
        build_model("too-strong", kappa_base=1.2)


def test_check_rejects_points_off_the_chart(hyperbolic):
    with pytest.raises(DomainError):
        hyperbolic.check(0.0, 0.0)
    with pytest.raises(DomainError):
        gauss_curvature(hyperbolic, (0.0, -1.0))


def test_transformed_model_is_the_image(perturbed):
    image = perturbed.transformed(2.0, 0.5)
    for x, y in [(0.1, 1.3), (-0.4, 2.0), (0.7, 0.9)]:
        assert image.kappa(2 * x + 0.5, 2 * y) == pytest.approx(perturbed.kappa(x, y), abs=1e-13)
        rho_image = image.rho_gradient(2 * x + 0.5, 2 * y)[0]
        assert rho_image + math.log(2.0) == pytest.approx(perturbed.rho_gradient(x, y)[0], abs=1e-13)


def test_time_reversed_negates_the_field(perturbed):
    reversed_model = perturbed.time_reversed()
    assert reversed_model.kappa(0.2, 1.4) == pytest.approx(-perturbed.kappa(0.2, 1.4))
    assert reversed_model.rho_bumps == perturbed.rho_bumps


@settings(max_examples=50, deadline=None)
@given(coordinate, height, component, component)
def test_rotation_is_a_quarter_turn(x, y, a, b):
    model = build_model("hyperbolic")
    xi = TangentVector((x, y), (a, b))
    n = rotate_n(model, xi)
    nn = rotate_n(model, n)
    assert nn.components[0] == pytest.approx(-a)
    assert nn.components[1] == pytest.approx(-b)
    assert inner(model, xi, n) == pytest.approx(0.0, abs=1e-9 * (1 + a * a + b * b) / (y * y))


@settings(max_examples=50, deadline=None)
@given(coordinate, height, coordinate, height)
def test_hyperbolic_distance_is_symmetric(x1, y1, x2, y2):
    assert hyperbolic_distance((x1, y1), (x2, y2)) == pytest.approx(
        hyperbolic_distance((x2, y2), (x1, y1)), rel=1e-12, abs=1e-12)


def test_vertical_distance_is_log_ratio():
    assert hyperbolic_distance((0.0, 1.0), (0.0, math.e)) == pytest.approx(1.0, abs=1e-14)


def test_hyperbolic_direction():
    assert hyperbolic_direction((0.0, 1.0), (0.0, 2.0)) == pytest.approx(0.5 * math.pi)
    assert hyperbolic_direction((0.0, 1.0), (1.0, 1.0)) == pytest.approx(math.atan(0.5))


def test_unit_tangent_has_unit_length(perturbed):
    v = UnitVector((0.3, 1.2), 1.1)
    xi = unit_tangent(perturbed, v)
    assert inner(perturbed, xi, xi) == pytest.approx(1.0, abs=1e-14)


def test_transport_along_horizontal_segment(hyperbolic):
    segment = np.column_stack((np.linspace(0.0, 1.0, 50), np.ones(50)))
    assert transport_angle(hyperbolic, segment) == pytest.approx(-1.0, abs=1e-10)


def test_transport_along_vertical_geodesic(hyperbolic):
    segment = np.column_stack((np.zeros(30), np.linspace(1.0, 2.0, 30)))
    assert transport_angle(hyperbolic, segment) == pytest.approx(0.0, abs=1e-14)
    moved = parallel_transport(hyperbolic, segment, TangentVector((0.0, 1.0), (0.3, 0.4)))
    assert moved.base == (0.0, 2.0)
    assert moved.components == pytest.approx((0.6, 0.8), abs=1e-12)


def test_holonomy_of_a_rectangle_is_minus_its_area(hyperbolic):
    n = 400
    edges = [
        np.column_stack((np.linspace(0.0, 1.0, n), np.full(n, 1.0))),
        np.column_stack((np.full(n, 1.0), np.linspace(1.0, 2.0, n))),
        np.column_stack((np.linspace(1.0, 0.0, n), np.full(n, 2.0))),
        np.column_stack((np.full(n, 0.0), np.linspace(2.0, 1.0, n))),
    ]
    total = sum(transport_angle(hyperbolic, edge) for edge in edges)
    assert total == pytest.approx(-0.5, abs=1e-10)


def test_transport_there_and_back_is_the_identity(perturbed):
    s = np.linspace(0.0, 1.0, 200)
    arc = np.column_stack((0.8 * s - 0.3, 1.0 + 0.6 * s * s))
    xi = TangentVector(tuple(arc[0]), (0.3, -0.7))
    there = parallel_transport(perturbed, arc, xi)
    back = parallel_transport(perturbed, arc[::-1], there)
    assert back.base == pytest.approx(xi.base, abs=1e-15)
    assert back.components == pytest.approx(xi.components, abs=1e-9)
    assert inner(perturbed, there, there) == pytest.approx(inner(perturbed, xi, xi), rel=1e-12)


def test_parallel_transport_checks_the_start(hyperbolic):
    segment = np.column_stack((np.zeros(5), np.linspace(1.0, 2.0, 5)))
    with pytest.raises(PreconditionError):
        parallel_transport(hyperbolic, segment, TangentVector((0.5, 1.0), (1.0, 0.0)))


def test_zero_bump_distance_uses_shooting_and_agrees():
    model = build_model("flat-bump", epsilon=0.0, bump_center=(0.0, 1.5), bump_radius=2.0)
    assert not model.is_hyperbolic
    p, q = (0.0, 1.0), (0.8, 1.9)
    assert distance(model, p, q) == pytest.approx(hyperbolic_distance(p, q), abs=1e-7)


@pytest.mark.parametrize("p, q", [((0.0, 1.0), (0.8, 1.9)), ((-0.4, 1.6), (0.3, 0.9))])
def test_distance_is_symmetric_on_a_perturbed_model(perturbed, p, q):
    there = distance(perturbed, p, q)
    assert there == pytest.approx(distance(perturbed, q, p), abs=1e-6)
    assert there > 0.0


def test_seeded_shooting_finds_the_same_geodesic(perturbed):
    p, q = (0.1, 1.2), (0.4, 6.0)
    angle, length = geodesic_shoot(perturbed, p, q)
    seeded = geodesic_shoot(perturbed, p, q, seed_angle=angle + 1e-3)
    assert seeded == pytest.approx((angle, length), abs=1e-8)


def test_inverse_exponential_length(hyperbolic):
    p, q = (0.0, 1.0), (0.5, 1.5)
    arrow = inverse_exponential(hyperbolic, p, q)
    length = math.sqrt(inner(hyperbolic, arrow, arrow))
    assert length == pytest.approx(hyperbolic_distance(p, q), abs=1e-12)
