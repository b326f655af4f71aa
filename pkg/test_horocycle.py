"""
Tests for asymptotic vectors, Busemann functions, horocycles and horocyclic transport.
"""
import math

import numpy as np
import pytest

from errors import ConvergenceError, PreconditionError
from geometry import bounds_of
from horocycle import (asymptotic_vector, busemann, busemann_distance_limit, busemann_with_vector,
                       curvature_bound_report, horocycle_curvature, horocyclic_transport,
                       parametrization_check, stable_push, trace_horocycle,
                       transport_decay_bound, transport_derivative, transport_derivative_bound,
                       unstable_asymptotic_vector)
from models import UnitVector


@pytest.fixture(scope="module")
def ray_horocycle(constant, ray_vector):
    return trace_horocycle(constant, ray_vector, 0.5)


@pytest.fixture(scope="module")
def vertical_horocycle(hyperbolic, vertical):
    return trace_horocycle(hyperbolic, vertical, 0.6)


@pytest.fixture(scope="module")
def perturbed_horocycle(perturbed, vertical):
    return trace_horocycle(perturbed, vertical, 0.3)


def test_asymptotic_vector_without_field(hyperbolic, vertical):
    vector = asymptotic_vector(hyperbolic, (0.7, 1.3), vertical)
    assert vector.angle == pytest.approx(0.5 * math.pi, abs=1e-8)


def test_asymptotic_vector_is_translation_and_dilation_invariant(constant, closed_form,
                                                                 ray_vector):
    for p in [(0.5, 1.0), (0.0, 2.0), (-0.3, 0.7)]:
        vector = asymptotic_vector(constant, p, ray_vector)
        assert vector.angle == pytest.approx(closed_form["ray_angle"], abs=1e-8)
        assert vector.base == p


def test_unstable_asymptotic_vector_leaves_the_origin(hyperbolic, vertical):
    # backward asymptotic to the vertical geodesic means coming out of 0
    vector = unstable_asymptotic_vector(hyperbolic, (0.3, 0.9), vertical)
    assert vector.angle == pytest.approx(math.atan2(1.2, 0.9), abs=1e-7)


def test_busemann_without_field(hyperbolic, vertical):
    assert busemann(hyperbolic, vertical, (0.0, 1.0)) == 0.0
    assert busemann(hyperbolic, vertical, (0.3, 2.0)) == pytest.approx(math.log(2.0), abs=1e-6)
    assert busemann(hyperbolic, vertical, (-0.4, 0.5)) == pytest.approx(math.log(0.5), abs=1e-6)


def test_busemann_constant_field(constant, ray_vector):
    # along the ray orbits ln y grows at rate 0.8
    assert busemann(constant, ray_vector, (0.3, 2.0)) == pytest.approx(math.log(2.0) / 0.8,
                                                                       abs=1e-6)
    assert busemann(constant, ray_vector, (0.6, 1.0)) == pytest.approx(0.0, abs=1e-6)


def test_stable_push_without_field(hyperbolic, vertical):
    x, y = stable_push(hyperbolic, vertical, (0.4, 1.0), 1.0)
    assert x == pytest.approx(0.4, abs=1e-8)
    assert y == pytest.approx(math.e, rel=1e-8)
    assert stable_push(hyperbolic, vertical, (0.4, 1.0), 0.0) == (0.4, 1.0)


def test_horocycle_without_field_is_horizontal(vertical_horocycle):
    curve = vertical_horocycle
    assert curve.s[0] == pytest.approx(-0.6)
    assert curve.s[-1] == pytest.approx(0.6)
    assert np.allclose(curve.y, 1.0, atol=1e-9)
    assert np.allclose(curve.x, -curve.s, atol=1e-9)
    assert np.allclose(curve.w_minus, 0.0)


def test_constant_field_horocycle(ray_horocycle, closed_form):
    curve = ray_horocycle
    assert np.allclose(curve.y, 1.0, atol=1e-8)
    assert np.allclose(curve.x, -1.25 * curve.s, atol=1e-8)
    assert np.allclose(curve.angle, closed_form["ray_angle"], atol=1e-8)
    assert np.allclose(curve.w_minus, closed_form["w_minus"], atol=1e-6)
    assert np.allclose(curve.arc_length, 1.25 * curve.s, atol=1e-6)


def test_constant_field_horocycle_curvature(ray_horocycle):
    interior = ray_horocycle.kappa_minus[3:-3]
    assert np.allclose(interior, -1.0, atol=1e-4)
    assert not ray_horocycle.flagged[3:-3].any()


def test_curvature_identity_at_a_parameter(ray_horocycle, constant):
    sample = horocycle_curvature(ray_horocycle, 0.1, constant)
    assert sample.value == pytest.approx(sample.identity, abs=1e-4)
    with pytest.raises(PreconditionError):
        horocycle_curvature(ray_horocycle, 2.0, constant)


def test_curvature_bound_report(ray_horocycle, constant):
    report = curvature_bound_report(constant, ray_horocycle)
    assert report["observed"] == pytest.approx(1.0, abs=1e-3)
    assert report["slack"] < 0.0


def test_horocyclic_transport_without_field(hyperbolic, vertical_horocycle):
    transport = horocyclic_transport(hyperbolic, vertical_horocycle, 0.5, 1.0)
    assert transport.start == pytest.approx((-0.5, math.e), abs=1e-7)
    assert transport.end == pytest.approx((0.0, math.e), abs=1e-7)
    assert transport.transport_angle == pytest.approx(-0.5 / math.e, abs=1e-6)
    assert transport.rotation == pytest.approx(0.5 / math.e, abs=1e-6)
    assert transport.scale == pytest.approx(1.0, abs=1e-7)


def test_horocyclic_transport_identity_at_zero(hyperbolic, vertical_horocycle):
    transport = horocyclic_transport(hyperbolic, vertical_horocycle, 0.0, 2.0)
    assert transport.rotation == pytest.approx(0.0, abs=1e-12)
    assert transport.apply((0.3, 0.4)) == pytest.approx((0.3, 0.4))


def test_transport_discrepancy_decays_within_the_bound(hyperbolic, vertical_horocycle):
    s = 0.5
    times = [0.0, 1.0, 2.0, 4.0]
    rotations = [horocyclic_transport(hyperbolic, vertical_horocycle, s, t).rotation
                 for t in times]
    for t, zeta in zip(times, rotations):
        assert abs(zeta - rotations[-1]) <= 2.0 * transport_decay_bound(hyperbolic, s, t, times[-1])
    assert abs(rotations[1]) < abs(rotations[0])


def test_trace_rejects_points_off_the_chart(hyperbolic):
    with pytest.raises(Exception):
        trace_horocycle(hyperbolic, UnitVector((0.0, -1.0), 0.0), 0.5)


def test_busemann_from_distance_differences(hyperbolic, vertical):
    assert busemann_distance_limit(hyperbolic, vertical, (0.0, 1.0)) == 0.0
    assert busemann_distance_limit(hyperbolic, vertical, (0.3, 2.0)) == pytest.approx(
        math.log(2.0), abs=1e-6)
    assert busemann_distance_limit(hyperbolic, vertical, (2.0, 1.0)) == pytest.approx(0.0,
                                                                                     abs=1e-6)


def test_distance_differences_need_a_vanishing_field(constant, ray_vector):
    with pytest.raises(PreconditionError):
        busemann_distance_limit(constant, ray_vector, (0.3, 2.0))


def test_busemann_methods_agree_on_a_bumped_metric(bumped, vertical):
    z = (0.3, 1.4)
    direct = busemann_distance_limit(bumped, vertical, z)
    shifted, _ = busemann_with_vector(bumped, vertical, z)
    assert direct == pytest.approx(shifted, abs=1e-6)
    assert busemann(bumped, vertical, z) == direct


def test_busemann_failure_reports_the_last_difference(constant, vertical):
    with pytest.raises(ConvergenceError) as info:
        busemann_with_vector(constant, vertical, (0.45, 1.38), tol=0.0)
    assert 0.0 < info.value.residual < 1e-3


def test_horocycle_parametrization_constant_field(constant, ray_horocycle):
    normal, speed = parametrization_check(constant, ray_horocycle)
    assert np.allclose(normal, 1.0, atol=1e-7)
    assert np.allclose(speed, 1.25, atol=1e-7)


def test_horocycle_parametrization_perturbed(perturbed, perturbed_horocycle):
    normal, speed = parametrization_check(perturbed, perturbed_horocycle)
    assert np.max(np.abs(normal - 1.0)) < 1e-5
    assert np.all(speed >= 1.0 - 1e-5)
    assert np.all(speed <= bounds_of(perturbed).c1)


@pytest.mark.parametrize("t", [0.0, 2.0, 4.0])
def test_transport_derivative_without_field(hyperbolic, vertical_horocycle, t):
    measured = transport_derivative(hyperbolic, vertical_horocycle, 0.3, t)
    assert measured == pytest.approx(math.exp(-t), abs=1e-6)
    assert measured <= transport_derivative_bound(hyperbolic, t)


@pytest.mark.parametrize("t", [0.0, 2.0, 4.0])
def test_transport_derivative_bound_perturbed(perturbed, perturbed_horocycle, t):
    measured = transport_derivative(perturbed, perturbed_horocycle, 0.2, t)
    assert measured <= transport_derivative_bound(perturbed, t)
