"""
Tests for the magnetic flow, Jacobi fields and Riccati data.
"""
import math

import numpy as np
import pytest

from dynamics import (evolve_jacobi, integrate_flow, jacobi_endomorphism, riccati_stable,
                      riccati_unstable, stability_data, stable_jacobi_norms,
                      symplectic_residual, w_minus, wronskian)
from errors import PreconditionError
from geometry import bounds_of
from models import JacobiComponents, UnitVector

PERTURBED_VECTORS = [
    UnitVector((0.2, 1.3), 0.4),
    UnitVector((-0.5, 0.9), 2.2),
    UnitVector((0.1, 2.0), -1.3),
]


def test_vertical_geodesic_reaches_e(hyperbolic, vertical):
    orbit = integrate_flow(hyperbolic, vertical, (0.0, 1.0))
    x, y = orbit.point(1.0)
    assert x == pytest.approx(0.0, abs=1e-10)
    assert y == pytest.approx(math.e, abs=1e-8)
    assert not orbit.exited


def test_backward_and_forward_pieces(hyperbolic, vertical):
    orbit = integrate_flow(hyperbolic, vertical, (1.0, -1.0))
    assert orbit.t_start == pytest.approx(-1.0)
    assert orbit.t_end == pytest.approx(1.0)
    assert orbit.point(-1.0)[1] == pytest.approx(1.0 / math.e, abs=1e-9)
    assert np.all(np.diff(orbit.t) > 0.0)
    with pytest.raises(PreconditionError):
        orbit.state(2.0)


def test_constant_field_orbit_has_constant_curvature(constant):
    orbit = integrate_flow(constant, UnitVector((0.0, 1.0), 0.3), (0.0, 4.0))
    for t in (0.5, 2.0, 3.5):
        assert orbit.geodesic_curvature(t) == pytest.approx(0.6, abs=1e-6)


def test_jacobi_endomorphism_constant(constant, hyperbolic):
    assert jacobi_endomorphism(constant, UnitVector((0.4, 2.0), 1.0)) == pytest.approx(-0.64)
    assert jacobi_endomorphism(hyperbolic, UnitVector((0.4, 2.0), 1.0)) == pytest.approx(-1.0)


def test_constant_field_riccati_values(constant, closed_form):
    v = UnitVector((0.3, 1.7), 2.0)
    assert riccati_stable(constant, v).u(0.0) == pytest.approx(closed_form["u_minus"], abs=1e-8)
    assert riccati_unstable(constant, v).u(0.0) == pytest.approx(closed_form["u_plus"], abs=1e-8)


def test_constant_field_stability_data(constant, closed_form, ray_vector):
    data = stability_data(constant, ray_vector)
    assert data.u_minus == pytest.approx(closed_form["u_minus"], abs=1e-8)
    assert data.u_plus == pytest.approx(closed_form["u_plus"], abs=1e-8)
    assert data.w_minus == pytest.approx(closed_form["w_minus"], abs=1e-6)
    assert data.w_plus == pytest.approx(closed_form["w_plus"], abs=1e-6)
    assert data.error_estimate < 1e-6
    assert set(data.to_dict()) == {"uMinus", "uPlus", "wMinus", "wPlus", "horizon",
                                   "errorEstimate"}


def test_no_field_has_no_tangential_part(hyperbolic, vertical):
    data = stability_data(hyperbolic, vertical)
    assert data.u_minus == pytest.approx(-1.0, abs=1e-8)
    assert data.u_plus == pytest.approx(1.0, abs=1e-8)
    assert data.w_minus == 0.0
    assert data.w_plus == 0.0


def test_stable_profile_decays_like_the_exponent(constant):
    profile = riccati_stable(constant, UnitVector((0.0, 1.0), 1.0), t_max=5.0)
    assert profile.y(5.0) == pytest.approx(math.exp(-4.0), rel=1e-7)
    with pytest.raises(PreconditionError):
        profile.log_y(6.0)


@pytest.mark.parametrize("v", PERTURBED_VECTORS)
@pytest.mark.parametrize("t", [1.0, 3.0, 6.0])
def test_symplectic_identity(perturbed, v, t):
    assert symplectic_residual(perturbed, v, t) < 1e-6


def test_symplectic_gap_band(perturbed):
    bounds = bounds_of(perturbed)
    for v in PERTURBED_VECTORS:
        data = stability_data(perturbed, v)
        gap = data.u_plus - data.u_minus
        assert 2.0 * bounds.q1 <= gap <= 2.0 * bounds.q0


def test_wronskian_is_conserved(perturbed):
    v = PERTURBED_VECTORS[0]
    orbit = integrate_flow(perturbed, v, (-1.0, 2.0))
    first = evolve_jacobi(orbit, JacobiComponents(0.0, 1.0, 0.3))
    second = evolve_jacobi(orbit, JacobiComponents(0.5, -0.2, 1.0))
    w0 = wronskian(first.at(0.0), second.at(0.0))
    for t in (-1.0, 1.0, 2.0):
        assert wronskian(first.at(t), second.at(t)) == pytest.approx(w0, rel=1e-8)


def test_jacobi_evolution_is_linear(perturbed):
    orbit = integrate_flow(perturbed, PERTURBED_VECTORS[1], (-1.0, 2.0))
    a, b = JacobiComponents(0.0, 1.0, 0.3), JacobiComponents(0.5, -0.2, 1.0)
    first, second = evolve_jacobi(orbit, a), evolve_jacobi(orbit, b)
    combined = evolve_jacobi(orbit, a.scaled(2.0) + b.scaled(-0.5))
    for t in (-1.0, 0.5, 2.0):
        expected = first.at(t).scaled(2.0) + second.at(t).scaled(-0.5)
        got = combined.at(t)
        assert (got.x, got.y, got.y_prime) == pytest.approx(
            (expected.x, expected.y, expected.y_prime), abs=1e-8)


def test_stable_jacobi_field_matches_riccati(constant, closed_form):
    v = UnitVector((0.0, 1.0), 0.5)
    orbit = integrate_flow(constant, v, (0.0, 3.0))
    init = JacobiComponents(closed_form["w_minus"], 1.0, closed_form["u_minus"])
    field = evolve_jacobi(orbit, init)
    end = field.at(3.0)
    assert end.y == pytest.approx(math.exp(-2.4), rel=1e-8)
    assert end.x == pytest.approx(closed_form["w_minus"] * math.exp(-2.4), rel=1e-8)


def test_stable_jacobi_norms_respect_the_bound(perturbed):
    times = np.linspace(0.0, 10.0, 11)
    for v in PERTURBED_VECTORS:
        ratios, c1 = stable_jacobi_norms(perturbed, v, times)
        assert np.all(ratios <= c1)


def test_w_minus_reuses_a_short_profile(constant, closed_form):
    v = UnitVector((0.2, 1.1), 0.7)
    profile = riccati_stable(constant, v, t_max=1.0)
    assert w_minus(constant, v, profile=profile) == pytest.approx(closed_form["w_minus"], abs=1e-6)
