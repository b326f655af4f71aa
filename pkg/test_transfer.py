"""
Tests for transfer functions and the stable-manifold linearization.
"""
import math

import numpy as np
import pytest

from errors import PreconditionError
from geometry import unit_tangent
from horocycle import asymptotic_vector
from models import LinearizationSample, TangentVector, UnitVector
from transfer import (HorocycleChart, chart_for, check_asymptotic, extended_stable_transfer,
                      extended_unstable_transfer, finite_time_linearization,
                      linearization_derivative, linearization_determinant,
                      linearization_equivariance, linearization_injectivity,
                      linearization_limit_check, linearization_match, linearize, stable_transfer,
                      synchronized_transfer, transverse_blowup, unstable_transfer)


@pytest.fixture(scope="module")
def ray_pair(constant, ray_vector):
    return ray_vector, asymptotic_vector(constant, (0.5, 1.3), ray_vector)


@pytest.fixture(scope="module")
def perturbed_pair(perturbed):
    v = UnitVector((0.1, 1.2), 1.2)
    return v, asymptotic_vector(perturbed, (0.4, 1.5), v)


def test_transfer_is_one_for_constant_field(constant, ray_pair):
    v, w = ray_pair
    result = stable_transfer(constant, v, w)
    assert result.value == pytest.approx(1.0, abs=1e-8)
    assert result.horizon <= 30.0


def test_transfer_is_one_without_field(hyperbolic, vertical):
    w = UnitVector((0.4, 2.0), 0.5 * math.pi)
    assert stable_transfer(hyperbolic, vertical, w).value == pytest.approx(1.0, abs=1e-8)


def test_transfer_rejects_separating_vectors(constant, ray_vector, closed_form):
    reversed_vector = UnitVector((0.5, 1.3), closed_form["ray_angle"] + math.pi)
    with pytest.raises(PreconditionError):
        stable_transfer(constant, ray_vector, reversed_vector)


def test_asymptotic_pair_passes_the_gate(perturbed, perturbed_pair):
    v, w = perturbed_pair
    assert check_asymptotic(perturbed, v, w) < 1e-6


def test_transfer_reciprocity(perturbed, perturbed_pair):
    v, w = perturbed_pair
    forward = stable_transfer(perturbed, v, w).value
    backward = stable_transfer(perturbed, w, v).value
    assert forward > 0.0
    assert forward * backward == pytest.approx(1.0, abs=1e-6)


def test_synchronized_transfer_constant_field(constant, ray_pair):
    v, w = ray_pair
    assert synchronized_transfer(constant, v, w, 0.5).value == pytest.approx(math.exp(0.4),
                                                                              rel=1e-7)


def test_unstable_transfer_constant_field(constant, ray_pair):
    v, w = ray_pair
    result = unstable_transfer(constant, v, w)
    assert result.value == pytest.approx(1.0, abs=1e-7)
    assert not result.flagged
    assert result.to_dict()["crossCheck"] == pytest.approx(1.0, abs=1e-6)


def test_extended_transfer_keeps_the_flow_direction(hyperbolic, vertical):
    w = UnitVector((0.4, 2.0), 0.5 * math.pi)
    xi = unit_tangent(hyperbolic, w)
    moved = extended_stable_transfer(hyperbolic, vertical, w, xi)
    assert moved.base == vertical.base
    assert moved.components == pytest.approx(unit_tangent(hyperbolic, vertical).components)


def test_linearization_without_field(hyperbolic, vertical):
    sample = linearize(hyperbolic, vertical, (0.3, 2.0))
    assert sample.longitudinal == pytest.approx(math.log(2.0), abs=1e-6)
    assert sample.transverse == pytest.approx(-0.3, abs=1e-6)
    origin = linearize(hyperbolic, vertical, (0.0, 1.0))
    assert (origin.longitudinal, origin.transverse) == pytest.approx((0.0, 0.0), abs=1e-12)


@pytest.mark.parametrize("p", [(0.2, 1.5), (-0.3, 0.8), (0.5, 1.1)])
def test_linearization_constant_field(constant, ray_vector, p):
    x0, y0 = p
    sample = linearize(constant, ray_vector, p)
    assert sample.longitudinal == pytest.approx(math.log(y0) / 0.8, abs=1e-6)
    assert sample.transverse == pytest.approx(-(x0 - 0.75 * (y0 - 1.0)) / 1.25, abs=1e-6)


def test_linearization_derivative_constant_field(constant, ray_vector):
    derivative = linearization_derivative(constant, ray_vector, (0.2, 1.5))
    assert np.allclose(derivative.matrix, [[1.0, 0.75], [0.0, 1.5]], atol=1e-6)
    assert derivative.relative_error < 1e-3
    assert not derivative.flagged
    assert derivative.determinant == pytest.approx(1.5, rel=1e-6)


def test_linearization_determinant(constant, ray_vector):
    assert linearization_determinant(constant, ray_vector, (0.2, 1.5)) == pytest.approx(1.5,
                                                                                        rel=1e-6)


def test_linearization_flow_equivariance(constant, ray_vector):
    assert linearization_equivariance(constant, ray_vector, (0.2, 1.5), 1.0) < 1e-5


def test_linearizations_match_across_an_isometry(hyperbolic, vertical):
    image = hyperbolic.transformed(2.0, 0.5)
    v2 = UnitVector((0.5, 2.0), 0.5 * math.pi)
    grid = [(0.3, 1.5), (-0.2, 0.8), (0.1, 1.0)]
    report = linearization_match(hyperbolic, image, lambda p: (2.0 * p[0] + 0.5, 2.0 * p[1]),
                                 vertical, v2, grid)
    assert report.sup_residual < 1e-4
    assert len(report.residuals) == len(grid)
    assert report.argmax in report.grid


def test_finite_time_linearization_converges(hyperbolic, vertical):
    chart = chart_for(hyperbolic, vertical)
    s = float(chart.curve.s[chart.curve.index_of(0.5)])
    result = linearization_limit_check(hyperbolic, vertical, chart, s, [2.0, 4.0, 6.0])
    assert result["limit"] == pytest.approx(s, abs=1e-9)
    assert result["values"][-1] == pytest.approx(s, abs=1e-4)
    assert result["differences"][1] < result["differences"][0]


def test_finite_time_linearization_needs_a_node(hyperbolic, vertical):
    chart = chart_for(hyperbolic, vertical)
    with pytest.raises(PreconditionError):
        finite_time_linearization(hyperbolic, vertical, chart, 0.0123, 1.0)


def test_transverse_blowup_in_the_past(hyperbolic, vertical):
    rows = transverse_blowup(hyperbolic, vertical, (0.1, 1.0), [0.0, -1.0, -2.0, -3.0])
    magnitudes = [abs(value) for _, value in rows]
    assert magnitudes[0] > 0.0
    assert all(b > a for a, b in zip(magnitudes, magnitudes[1:]))
    assert magnitudes[-1] / magnitudes[0] == pytest.approx(math.exp(3.0), rel=1e-6)


def test_tangent_vector_frames_are_unit(constant, ray_vector):
    xi = TangentVector((0.5, 1.3), (0.0, 1.3))
    moved = extended_stable_transfer(constant, ray_vector,
                                     UnitVector((0.5, 1.3), ray_vector.angle), xi, transfer=1.0)
    # an isometric frame change preserves the hyperbolic length
    length = math.hypot(*moved.components) / ray_vector.y
    assert length == pytest.approx(1.0, abs=1e-12)


def test_extended_unstable_transfer_maps_normals(constant, ray_pair):
    v, w = ray_pair
    moved = extended_unstable_transfer(constant, v, w, unit_tangent(constant, w.normal()))
    assert moved.base == v.base
    assert moved.components == pytest.approx(unit_tangent(constant, v.normal()).components,
                                             abs=1e-6)


def test_linearization_extends_a_short_chart(hyperbolic, vertical):
    chart = HorocycleChart(hyperbolic, vertical, half_width=0.5)
    sample = linearize(hyperbolic, vertical, (1.2, 1.5), chart=chart)
    assert sample.longitudinal == pytest.approx(math.log(1.5), abs=1e-6)
    assert sample.transverse == pytest.approx(-1.2, abs=1e-6)
    assert chart.half_width == 2.0
    far = linearize(hyperbolic, vertical, (2.0, 1.0), chart=chart)
    assert far.transverse == pytest.approx(-2.0, abs=1e-6)


def test_linearization_is_injective_without_field(hyperbolic, vertical):
    grid = [(x, y) for y in np.geomspace(0.8, 1.25, 4) for x in np.linspace(-0.3, 0.3, 4)]
    report = linearization_injectivity(hyperbolic, vertical, grid)
    assert report.injective
    assert report.nearest_image_gap == pytest.approx(math.log(1.5625) / 3.0, abs=1e-5)
    assert len(report.points) == 16


def test_injectivity_reports_colliding_images(hyperbolic, vertical):
    grid = [(0.0, 1.0), (0.5, 1.0), (0.501, 1.0)]
    samples = [LinearizationSample(p, 0.0, 0.0, 0.0) for p in grid[:2]]
    samples.append(LinearizationSample(grid[2], 0.0, 3.0, 0.0))
    report = linearization_injectivity(hyperbolic, vertical, grid, samples=samples)
    assert not report.injective
    assert report.collisions == [(0, 1)]
    assert report.nearest_image_gap == 0.0


def test_injectivity_ignores_nearby_sources(hyperbolic, vertical):
    grid = [(0.0, 1.0), (0.001, 1.0)]
    samples = [LinearizationSample(p, 0.0, 0.0, 0.0) for p in grid]
    report = linearization_injectivity(hyperbolic, vertical, grid, samples=samples)
    assert report.injective
    assert report.nearest_image_gap == math.inf


def test_injectivity_needs_one_sample_per_point(hyperbolic, vertical):
    with pytest.raises(PreconditionError):
        linearization_injectivity(hyperbolic, vertical, [(0.0, 1.0), (0.5, 1.0)],
                                  samples=[LinearizationSample((0.0, 1.0), 0.0, 0.0, 0.0)])


def test_linearization_derivative_perturbed(perturbed, vertical):
    derivative = linearization_derivative(perturbed, vertical, (0.2, 1.5))
    assert derivative.relative_error < 1e-3
    assert not derivative.flagged
    assert derivative.determinant > 0.0
    assert derivative.determinant == pytest.approx(
        linearization_determinant(perturbed, vertical, (0.2, 1.5)), rel=1e-6)


def test_linearization_flow_equivariance_perturbed(perturbed, vertical):
    assert linearization_equivariance(perturbed, vertical, (0.2, 1.5), 1.0) < 1e-4
