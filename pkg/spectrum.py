"""
Cyclic quotients, closed orbits and Lyapunov exponents.

The quotient is generated by the dilation z -> e^ell z whose axis is the
imaginary axis; a model descends to it when its bumps are periodized with
period ell.
"""
import logging
import math
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from dynamics import q_value, integrate_flow, riccati_stable
from errors import ConvergenceError, IntegrationError, ModelError
from geometry import SurfaceModel, bounds_of
from horocycle import wrap_angle
from models import PeriodicOrbit, Point, ScalingCheck, UnitVector
from transfer import DEFAULT_HALF_WIDTH, chart_for, linearize, stable_transfer

logger = logging.getLogger(__name__)

ORBIT_RTOL = 1e-12
NEWTON_STEP = 1e-7
INVARIANCE_TOL = 1e-10


class CyclicQuotient:
    """Quotient of a model by the dilation generator z -> e^ell z."""

    def __init__(self, model: SurfaceModel, ell: float):
        self.model = model
        self.ell = ell
        self.factor = math.exp(ell)

    def generator(self, p: Point) -> Point:
        return self.factor * p[0], self.factor * p[1]

    def generator_inverse(self, p: Point) -> Point:
        return p[0] / self.factor, p[1] / self.factor

    def push_vector(self, v: UnitVector) -> UnitVector:
        """d(gamma) v; dilations keep chart angles."""
        return UnitVector(self.generator(v.base), v.angle)

    @staticmethod
    def axis_point(d: float) -> Point:
        """Point at signed distance d from i on the geodesic orthogonal to the axis."""
        return math.tanh(d), 1.0 / math.cosh(d)


def build_quotient(model: SurfaceModel, ell: float, samples: int = 9) -> CyclicQuotient:
    """
    Validate generator invariance of rho and kappa and build the quotient.

    Raises:
        ModelError: If the model is not invariant under z -> e^ell z
    """
    if ell <= 0.0:
        raise ModelError("Translation length must be positive")
    if model.period is not None and abs(model.period - ell) > 1e-12:
        raise ModelError(f"Model is periodized with {model.period}, not {ell}")
    quotient = CyclicQuotient(model, ell)
    x0, x1, y0, y1 = model.box
    worst = 0.0
    for x in np.linspace(x0, x1, samples):
        for y in np.geomspace(y0, y1, samples):
            gx, gy = quotient.generator((x, y))
            rho_gap = model.rho_gradient(gx, gy)[0] - (model.rho_gradient(x, y)[0] - ell)
            kappa_gap = model.kappa(gx, gy) - model.kappa(x, y)
            worst = max(worst, abs(rho_gap), abs(kappa_gap))
    if worst > INVARIANCE_TOL:
        raise ModelError(f"Model is not invariant under the generator (defect {worst:.3e})",
                         residual=worst)
    return quotient


def _start(d: float, tilt: float) -> UnitVector:
    x, y = CyclicQuotient.axis_point(d)
    return UnitVector((x, y), math.atan2(y, x) + tilt)


def _closing_defect(quotient: CyclicQuotient, unknowns: np.ndarray) -> np.ndarray:
    d, tilt, period = unknowns
    v = _start(d, tilt)
    end = integrate_flow(quotient.model, v, (0.0, period), tol=ORBIT_RTOL).state(period)
    target = quotient.push_vector(v)
    return np.array([(end[0] - target.x) / target.y,
                     (end[1] - target.y) / target.y,
                     wrap_angle(end[2] - target.angle)])


def find_periodic_orbit(quotient: CyclicQuotient, tol: float = 1e-10,
                        max_iterations: int = 40) -> PeriodicOrbit:
    """
    Closed orbit homotopic to the generator.

    Starts on the geodesic through i orthogonal to the axis, initially in the
    radial direction, and solves for (offset, tilt, period) by Newton's method
    with a finite-difference Jacobian and backtracking.

    Raises:
        ConvergenceError: If the closing defect stays above tol
    """
    model = quotient.model
    kappa = max(-0.95, min(0.95, model.kappa(0.0, 1.0)))
    d0 = math.atanh(kappa)
    unknowns = np.array([d0, 0.0, quotient.ell * math.cosh(d0)])
    defect = _closing_defect(quotient, unknowns)
    norm = float(np.max(np.abs(defect)))

    for iteration in range(max_iterations):
        if norm < tol:
            break
        jacobian = np.empty((3, 3))
        for j in range(3):
            shifted = unknowns.copy()
            shifted[j] += NEWTON_STEP
            jacobian[:, j] = (_closing_defect(quotient, shifted) - defect) / NEWTON_STEP
        try:
            step = np.linalg.solve(jacobian, -defect)
        except np.linalg.LinAlgError:
            raise ConvergenceError("Singular closing Jacobian", residual=norm)

        damping = 1.0
        for _ in range(20):
            trial = unknowns + damping * step
            try:
                trial_defect = _closing_defect(quotient, trial)
            except IntegrationError:
                trial_defect = None
            if trial_defect is not None and np.max(np.abs(trial_defect)) < norm:
                break
            damping *= 0.5
        else:
            raise ConvergenceError("Backtracking failed to reduce the closing defect",
                                   residual=norm)
        unknowns, defect = trial, trial_defect
        norm = float(np.max(np.abs(defect)))
        logger.debug(f"Newton iteration {iteration}: defect {norm:.3e}, damping {damping}")

    if norm >= tol:
        raise ConvergenceError("Periodic orbit shooting did not converge", residual=norm)
    d, tilt, period = map(float, unknowns)
    logger.info(f"Periodic orbit: offset {d:.12f}, period {period:.12f}")
    return PeriodicOrbit(v=_start(d, tilt), period=period, offset=d, tilt=tilt, residual=norm)


def _periodic_riccati(model: SurfaceModel, orbit, period: float, seed: float, backward: bool,
                      tol: float, max_periods: int = 400) -> Tuple[float, float]:
    """Iterate the Riccati equation one period at a time until u is periodic."""
    def rhs(t, state):
        x, y, phi = orbit.state(t)
        u = state[0]
        return [-u * u - q_value(model, x, y, phi), u]

    span = (period, 0.0) if backward else (0.0, period)
    for _ in range(max_periods):
        sol = solve_ivp(rhs, span, [seed, 0.0], method="DOP853", rtol=1e-12, atol=1e-13)
        if sol.status < 0:
            raise IntegrationError(f"Periodic Riccati integration failed: {sol.message}")
        u_end, ell_end = sol.y[0, -1], sol.y[1, -1]
        if abs(u_end - seed) < tol:
            integral = -ell_end if backward else ell_end
            return float(u_end), float(integral)
        seed = u_end
    raise ConvergenceError("Periodic Riccati solution did not settle", residual=abs(u_end - seed))


def periodic_lyapunov(quotient: CyclicQuotient, orbit: PeriodicOrbit,
                      tol: float = 1e-10) -> PeriodicOrbit:
    """
    Lyapunov exponents of a closed orbit.

    lambda_- = ln y_-(v, T) / T from the periodic solution of the Riccati
    equation; lambda_+ = -lambda_- with the forward periodic solution kept as
    a cross-check.
    """
    model = quotient.model
    bounds = bounds_of(model)
    segment = integrate_flow(model, orbit.v, (0.0, orbit.period), tol=ORBIT_RTOL)
    _, stable_integral = _periodic_riccati(model, segment, orbit.period, -bounds.q1, True, tol)
    _, unstable_integral = _periodic_riccati(model, segment, orbit.period, bounds.q1, False, tol)
    lambda_minus = stable_integral / orbit.period
    lambda_plus_direct = unstable_integral / orbit.period
    if abs(lambda_plus_direct + lambda_minus) > 1e-6:
        logger.warning(f"Forward exponent {lambda_plus_direct:.10g} does not mirror "
                       f"{lambda_minus:.10g}")
    return replace(orbit, lambda_minus=lambda_minus, lambda_plus=-lambda_minus,
                   multiplier=math.exp(stable_integral), lambda_plus_direct=lambda_plus_direct)


def multiplier_power(model: SurfaceModel, orbit: PeriodicOrbit, n: int,
                     tol: float = 1e-8) -> Tuple[float, float]:
    """(y_-(v, nT) along the unrolled orbit, multiplier^n)."""
    profile = riccati_stable(model, orbit.v, tol, t_max=n * orbit.period)
    return profile.y(n * orbit.period), orbit.multiplier ** n


def scaling_identity_check(quotient: CyclicQuotient, orbit: PeriodicOrbit, samples: int = 20,
                           tol: Optional[float] = None,
                           half_width: float = DEFAULT_HALF_WIDTH) -> ScalingCheck:
    """
    Check E_{psi_T v} = y_-(v, T) E_v on the horocycle H_v(0).

    E_{psi_T v}(z) is evaluated as E_v(gamma^{-1} z) through the generator; its
    longitudinal part must equal -T and its transverse part y_-(v, T) e_v(s).
    """
    if orbit.multiplier is None:
        orbit = periodic_lyapunov(quotient, orbit)
    model = quotient.model
    chart = chart_for(model, orbit.v, half_width)
    reach = 0.8 * min(-chart.curve.s[0], chart.curve.s[-1])
    points, transverse, longitudinal = [], [], []
    for s in np.linspace(-reach, reach, samples):
        z = chart.point(float(s))
        sample = linearize(model, orbit.v, quotient.generator_inverse(z), tol, chart)
        points.append(z)
        transverse.append(abs(sample.transverse - orbit.multiplier * chart.transverse(float(s))))
        longitudinal.append(abs(sample.longitudinal + orbit.period))
    return ScalingCheck(samples=points, transverse_residuals=transverse,
                        longitudinal_residuals=longitudinal, multiplier=orbit.multiplier)


def lyapunov_constancy_wcs(model: SurfaceModel, v: UnitVector, v_prime: UnitVector,
                           horizon: float, tol: float = 1e-8) -> Dict[str, float]:
    """
    Finite-time exponents chi_T = -ln y_-(., T) / T of two vectors on one stable manifold.

    Their gap is |ln(y_-(v', T) / y_-(v, T))| / T; T times the gap tends to
    |ln X(v, v')|, reported as ``limitGap`` after division by T.
    """
    first = riccati_stable(model, v, tol, t_max=horizon)
    second = riccati_stable(model, v_prime, tol, t_max=horizon)
    chi_v = -first.log_y(horizon) / horizon
    chi_v_prime = -second.log_y(horizon) / horizon
    transfer = stable_transfer(model, v, v_prime, tol).value
    return {
        "chiV": chi_v,
        "chiVPrime": chi_v_prime,
        "gap": abs(chi_v - chi_v_prime),
        "limitGap": abs(math.log(transfer)) / horizon,
    }


def lyapunov_convergence(model: SurfaceModel, v: UnitVector, v_prime: UnitVector,
                         horizons: Sequence[float], tol: float = 1e-8) -> List[Tuple[float, float]]:
    """(T, T * |chi_T(v) - chi_T(v')|) for each horizon; the second entry stays bounded."""
    rows = []
    for horizon in horizons:
        result = lyapunov_constancy_wcs(model, v, v_prime, horizon, tol)
        rows.append((float(horizon), horizon * result["gap"]))
    return rows
