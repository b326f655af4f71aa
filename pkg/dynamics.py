"""
Magnetic flow, Jacobi fields and Riccati stability data.

Orbits are integrated in the state (x, ln y, angle); the angle representation
keeps the speed exactly one. Riccati solutions are integrated against the dense
output of the orbit they live on.
"""
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad, solve_ivp

from errors import ConvergenceError, DomainError, IntegrationError, PreconditionError
from geometry import SurfaceModel, bounds_of, geodesic_rhs
from models import DEFAULT_TOLERANCES, JacobiComponents, PinchingBounds, StabilityData, UnitVector

logger = logging.getLogger(__name__)

LOG_Y_FLOOR = math.log(1e-250)
MAX_HORIZON = 400.0
RICCATI_RTOL = 1e-11
RICCATI_ATOL = 1e-12


def jacobi_endomorphism(model: SurfaceModel, v: UnitVector) -> float:
    """q(v) = K + kappa^2 - <N(v), grad kappa>."""
    model.check(v.x, v.y)
    return q_value(model, v.x, v.y, v.angle)


def q_value(model: SurfaceModel, x: float, y: float, phi: float) -> float:
    rho, _, _, lap = model.rho_jet(x, y)
    scale = math.exp(-rho)
    kappa, kx, ky = model.kappa_jet(x, y)
    return -scale * scale * lap + kappa * kappa - scale * (ky * math.cos(phi) - kx * math.sin(phi))


def _exit_event(t, state):
    return state[1] - LOG_Y_FLOOR


_exit_event.terminal = True


class OrbitSegment:
    """A magnetic orbit with dense interpolation.

    ``t`` and ``states`` hold the integrator nodes, states as (x, y, angle).
    """

    def __init__(self, model: SurfaceModel, v: UnitVector, pieces: List, exited: bool):
        self.model = model
        self.v = v
        self.exited = exited
        self._forward = next((p for p in pieces if p.t[-1] > 0.0), None)
        self._backward = next((p for p in pieces if p.t[-1] < 0.0), None)

        times, rows = [], []
        if self._backward is not None:
            times.append(self._backward.t[::-1])
            rows.append(self._backward.y[:, ::-1])
        if self._forward is not None:
            start = 1 if self._backward is not None else 0
            times.append(self._forward.t[start:])
            rows.append(self._forward.y[:, start:])
        if not times:
            times, rows = [np.array([0.0])], [np.array([[v.x], [math.log(v.y)], [v.angle]])]
        self.t = np.concatenate(times)
        raw = np.concatenate(rows, axis=1)
        self.states = np.column_stack((raw[0], np.exp(raw[1]), raw[2]))

    @property
    def t_start(self) -> float:
        return float(self.t[0])

    @property
    def t_end(self) -> float:
        return float(self.t[-1])

    def _raw(self, t: float) -> np.ndarray:
        if t > self.t_end + 1e-9 or t < self.t_start - 1e-9:
            raise PreconditionError(f"Time {t} is outside the integrated span "
                                    f"[{self.t_start}, {self.t_end}]")
        if t >= 0.0 and self._forward is not None:
            return self._forward.sol(t)
        if t <= 0.0 and self._backward is not None:
            return self._backward.sol(t)
        if t == 0.0:
            return np.array([self.v.x, math.log(self.v.y), self.v.angle])
        raise PreconditionError(f"Time {t} is outside the integrated span")

    def state(self, t: float) -> Tuple[float, float, float]:
        x, eta, phi = self._raw(t)
        return float(x), math.exp(eta), float(phi)

    def point(self, t: float) -> Tuple[float, float]:
        x, y, _ = self.state(t)
        return x, y

    def unit_vector(self, t: float) -> UnitVector:
        x, y, phi = self.state(t)
        return UnitVector((x, y), phi)

    @property
    def end(self) -> UnitVector:
        return self.unit_vector(self.t_end)

    def sample(self, times: Sequence[float]) -> np.ndarray:
        """States (x, y, angle) at the requested times, one row per time."""
        return np.array([self.state(float(t)) for t in times])

    def geodesic_curvature(self, t: float, h: float = 0.1) -> float:
        """
        Geodesic curvature measured from three sampled positions.

        The chart curvature of the circle through the points at t - h, t, t + h
        is converted with k_g = e^{-rho}(k_chart - d rho / d n).
        """
        a = np.array(self.point(t - h))
        b = np.array(self.point(t))
        c = np.array(self.point(t + h))
        ab, bc, ac = b - a, c - b, c - a
        cross = ab[0] * bc[1] - ab[1] * bc[0]
        chart = 2.0 * cross / (np.linalg.norm(ab) * np.linalg.norm(bc) * np.linalg.norm(ac))
        x, y, phi = self.state(t)
        rho, rx, ry = self.model.rho_gradient(x, y)
        normal_derivative = -math.sin(phi) * rx + math.cos(phi) * ry
        return math.exp(-rho) * (chart - normal_derivative)


def _integrate(rhs, state0, t_end, rtol, atol, dense=True):
    sol = solve_ivp(rhs, (0.0, t_end), state0, method="DOP853", rtol=rtol, atol=atol,
                    dense_output=dense, events=_exit_event)
    if sol.status == -1:
        raise IntegrationError(f"Flow integration failed: {sol.message}")
    if not np.all(np.isfinite(sol.y)):
        raise IntegrationError("Flow integration produced a non-finite state")
    return sol


def integrate_flow(model: SurfaceModel, v: UnitVector, t_span: Tuple[float, float],
                   tol: Optional[float] = None, magnetic: bool = True) -> OrbitSegment:
    """
    Integrate the magnetic flow through v.

    Args:
        model: Surface model
        v: State at time zero
        t_span: (t_a, t_b); the span is widened to contain zero
        tol: Relative tolerance (defaults to the flow tolerance)
        magnetic: False integrates the geodesic flow

    Returns:
        OrbitSegment; ``exited`` is set when the orbit left the chart early

    Raises:
        IntegrationError: On step-size underflow or non-finite states
    """
    model.check(v.x, v.y)
    rtol = tol if tol is not None else DEFAULT_TOLERANCES.flow
    atol = min(rtol * 1e-2, DEFAULT_TOLERANCES.flow_atol)
    t_a, t_b = min(t_span), max(t_span)
    rhs = geodesic_rhs(model, magnetic=magnetic)
    state0 = [v.x, math.log(v.y), v.angle]

    pieces, exited = [], False
    for t_end in (t_b, t_a):
        if t_end == 0.0:
            continue
        sol = _integrate(rhs, state0, t_end, rtol, atol)
        exited = exited or sol.status == 1
        pieces.append(sol)
    if exited:
        logger.warning(f"Orbit of {v} left the chart before the end of {t_span}")
    return OrbitSegment(model, v, pieces, exited)


class JacobiField:
    """Frame components (x, y, y') of a Jacobi field along an orbit."""

    def __init__(self, orbit: OrbitSegment, pieces: List, init: JacobiComponents):
        self.orbit = orbit
        self.init = init
        self._forward = next((p for p in pieces if p.t[-1] > 0.0), None)
        self._backward = next((p for p in pieces if p.t[-1] < 0.0), None)

    def at(self, t: float) -> JacobiComponents:
        if t == 0.0:
            return self.init
        piece = self._forward if t > 0.0 else self._backward
        if piece is None:
            raise PreconditionError(f"Time {t} is outside the integrated span")
        values = piece.sol(t)
        return JacobiComponents(float(values[3]), float(values[4]), float(values[5]))

    def components(self) -> np.ndarray:
        """Rows (x, y, y') at the orbit nodes."""
        return np.array([[c.x, c.y, c.y_prime] for c in map(self.at, self.orbit.t)])


def evolve_jacobi(orbit: OrbitSegment, init: JacobiComponents,
                  tol: Optional[float] = None) -> JacobiField:
    """
    Evolve y'' + q y = 0, x' = kappa y jointly with the orbit.

    Args:
        orbit: Orbit that fixes the model, start vector and time span
        init: Components at time zero
        tol: Relative tolerance of the joint integration
    """
    model = orbit.model
    flow = geodesic_rhs(model)
    rtol = tol if tol is not None else DEFAULT_TOLERANCES.flow
    atol = min(rtol * 1e-2, DEFAULT_TOLERANCES.flow_atol)

    def rhs(t, state):
        x, eta, phi, jx, jy, jyp = state
        y = math.exp(eta)
        return flow(t, state[:3]) + [model.kappa(x, y) * jy, jyp, -q_value(model, x, y, phi) * jy]

    v = orbit.v
    state0 = [v.x, math.log(v.y), v.angle, init.x, init.y, init.y_prime]
    pieces = []
    for t_end in (orbit.t_end, orbit.t_start):
        if t_end != 0.0:
            pieces.append(_integrate(rhs, state0, t_end, rtol, atol))
    return JacobiField(orbit, pieces, init)


def wronskian(j1: JacobiComponents, j2: JacobiComponents) -> float:
    """Symplectic form y1 y2' - y2 y1'; constant along orbits."""
    return j1.y * j2.y_prime - j2.y * j1.y_prime


class StabilityProfile:
    """Riccati solution u along one orbit, with y(t) = exp(int_0^t u).

    Accurate on [t_lo, t_hi]; ``kind`` is ``"stable"`` (u_-) or
    ``"unstable"`` (u_+).
    """

    def __init__(self, model: SurfaceModel, v: UnitVector, orbit: OrbitSegment,
                 riccati, t_lo: float, t_hi: float, kind: str, seed_error: float):
        self.model = model
        self.v = v
        self.orbit = orbit
        self.kind = kind
        self.t_lo = t_lo
        self.t_hi = t_hi
        self.seed_error = seed_error
        self._riccati = riccati
        self._ell0 = float(riccati(0.0)[1])

    def u(self, t: float = 0.0) -> float:
        """u at psi_t v."""
        return float(self._riccati(t)[0])

    def log_y(self, t: float) -> float:
        if t < self.t_lo - 1e-12 or t > self.t_hi + 1e-12:
            raise PreconditionError(f"Time {t} is outside the accurate range "
                                    f"[{self.t_lo}, {self.t_hi}]")
        return float(self._riccati(t)[1]) - self._ell0

    def y(self, t: float) -> float:
        return math.exp(self.log_y(t))

    def kappa_y(self, t: float) -> float:
        x, y = self.orbit.point(t)
        return self.model.kappa(x, y) * self.y(t)


def _riccati_profile(model: SurfaceModel, v: UnitVector, tol: float,
                     t_lo: float, t_hi: float, kind: str) -> StabilityProfile:
    bounds = bounds_of(model)
    horizon = bounds.riccati_horizon(tol)
    if kind == "stable":
        orbit = integrate_flow(model, v, (t_lo, t_hi + horizon))
        span, seed = (t_hi + horizon, t_lo), -bounds.q1
    else:
        orbit = integrate_flow(model, v, (t_lo - horizon, t_hi))
        span, seed = (t_lo - horizon, t_hi), bounds.q1
    if orbit.exited:
        raise DomainError(f"Orbit of {v} leaves the chart within the Riccati horizon")

    def rhs(t, state):
        x, y, phi = orbit.state(t)
        u = state[0]
        return [-u * u - q_value(model, x, y, phi), u]

    sol = solve_ivp(rhs, span, [seed, 0.0], method="DOP853", rtol=RICCATI_RTOL,
                    atol=RICCATI_ATOL, dense_output=True)
    if sol.status < 0 or not np.all(np.isfinite(sol.y)):
        raise IntegrationError(f"Riccati integration failed: {sol.message}")
    seed_error = 2.0 * bounds.q0 * math.exp(-2.0 * bounds.q1 * horizon)
    logger.debug(f"{kind} Riccati profile for {v}: horizon {horizon:.3f}, "
                 f"{len(sol.t)} steps")
    return StabilityProfile(model, v, orbit, sol.sol, t_lo, t_hi, kind, seed_error)


def riccati_stable(model: SurfaceModel, v: UnitVector, tol: Optional[float] = None,
                   t_max: float = 0.0, t_min: float = 0.0) -> StabilityProfile:
    """u_- along the orbit of v on [t_min, t_max], integrated backward from the horizon."""
    tol = tol if tol is not None else DEFAULT_TOLERANCES.riccati
    return _riccati_profile(model, v, tol, min(t_min, 0.0), max(t_max, 0.0), "stable")


def riccati_unstable(model: SurfaceModel, v: UnitVector, tol: Optional[float] = None,
                     t_max: float = 0.0, t_min: float = 0.0) -> StabilityProfile:
    """u_+ along the orbit of v on [t_min, t_max], integrated forward from -horizon."""
    tol = tol if tol is not None else DEFAULT_TOLERANCES.riccati
    return _riccati_profile(model, v, tol, min(t_min, 0.0), max(t_max, 0.0), "unstable")


def tangential_horizon(bounds: PinchingBounds, tol: float) -> float:
    """Length after which the tail of the tangential integral is below tol."""
    if bounds.kappa_sup == 0.0:
        return 0.0
    horizon = max(1.0, math.log(bounds.kappa_sup / (bounds.q1 * tol)) / bounds.q1)
    if horizon > MAX_HORIZON:
        raise ConvergenceError(f"Tail bound needs a horizon of {horizon:.1f}")
    return horizon


def _tangential_integral(model: SurfaceModel, v: UnitVector, tol: float,
                         profile: Optional[StabilityProfile], kind: str) -> Tuple[float, float]:
    if model.kappa_vanishes:
        return 0.0, 0.0
    bounds = bounds_of(model)
    horizon = tangential_horizon(bounds, tol)
    if kind == "stable":
        if profile is None or profile.t_hi < horizon:
            profile = riccati_stable(model, v, tol, t_max=horizon)
        lo, hi = 0.0, horizon
    else:
        if profile is None or profile.t_lo > -horizon:
            profile = riccati_unstable(model, v, tol, t_min=-horizon)
        lo, hi = -horizon, 0.0
    value, abserr = quad(profile.kappa_y, lo, hi, epsabs=0.1 * tol, epsrel=1e-10, limit=200)
    tail = bounds.kappa_sup * math.exp(-bounds.q1 * horizon) / bounds.q1
    return value, abserr + tail


def w_minus(model: SurfaceModel, v: UnitVector, tol: Optional[float] = None,
            profile: Optional[StabilityProfile] = None) -> float:
    """
    Tangential coefficient of the stable Jacobi field, w_-(v) = -int_0^inf kappa y_- dt.

    Args:
        model: Surface model
        v: Unit vector
        tol: Accuracy target of the quadrature and of the tail bound
        profile: Reusable stable profile of v (extended when too short)
    """
    tol = tol if tol is not None else DEFAULT_TOLERANCES.riccati
    value, _ = _tangential_integral(model, v, tol, profile, "stable")
    return -value


def w_plus(model: SurfaceModel, v: UnitVector, tol: Optional[float] = None,
           profile: Optional[StabilityProfile] = None) -> float:
    """w_+(v) = int_{-inf}^0 kappa y_+ dt."""
    tol = tol if tol is not None else DEFAULT_TOLERANCES.riccati
    value, _ = _tangential_integral(model, v, tol, profile, "unstable")
    return value


def stability_data(model: SurfaceModel, v: UnitVector, tol: Optional[float] = None) -> StabilityData:
    """u_-, u_+, w_-, w_+ at v with the horizon and a combined error estimate."""
    tol = tol if tol is not None else DEFAULT_TOLERANCES.riccati
    bounds = bounds_of(model)
    horizon = max(bounds.riccati_horizon(tol), tangential_horizon(bounds, tol))
    t_w = tangential_horizon(bounds, tol)
    stable = riccati_stable(model, v, tol, t_max=t_w)
    unstable = riccati_unstable(model, v, tol, t_min=-t_w)
    wm, err_m = _tangential_integral(model, v, tol, stable, "stable")
    wp, err_p = _tangential_integral(model, v, tol, unstable, "unstable")
    error = max(stable.seed_error, unstable.seed_error) + err_m + err_p
    return StabilityData(u_minus=stable.u(0.0), u_plus=unstable.u(0.0), w_minus=-wm,
                         w_plus=wp, horizon=horizon, error_estimate=error)


def stable_jacobi_norms(model: SurfaceModel, v: UnitVector, times: Sequence[float],
                        tol: Optional[float] = None) -> Tuple[np.ndarray, float]:
    """
    Measured (|j_-| + |j_-'|)/y_- along the orbit of v and the constant C1 bounding it.

    Returns:
        Ratios at ``times`` and C1
    """
    tol = tol if tol is not None else DEFAULT_TOLERANCES.riccati
    bounds = bounds_of(model)
    t_max = max(max(times), tangential_horizon(bounds, tol))
    profile = riccati_stable(model, v, tol, t_max=t_max)
    w0 = w_minus(model, v, tol, profile)
    ratios = []
    for t in times:
        if model.kappa_vanishes or t == 0.0:
            drift = 0.0
        else:
            drift = quad(profile.kappa_y, 0.0, t, epsabs=0.1 * tol, limit=200)[0]
        x = w0 + drift
        y = profile.y(t)
        px, py = profile.orbit.point(t)
        jp = profile.u(t) * y + model.kappa(px, py) * x
        ratios.append((math.hypot(x, y) + abs(jp)) / y)
    return np.array(ratios), bounds.c1


def symplectic_residual(model: SurfaceModel, v: UnitVector, t: float,
                        tol: Optional[float] = None) -> float:
    """Relative residual of (u+ - u-)(v) = y_-(v,t) (u+ - u-)(psi_t v) y_+(v,t)."""
    tol = tol if tol is not None else DEFAULT_TOLERANCES.riccati
    stable = riccati_stable(model, v, tol, t_max=t)
    unstable = riccati_unstable(model, v, tol, t_max=t)
    gap0 = unstable.u(0.0) - stable.u(0.0)
    gap_t = unstable.u(t) - stable.u(t)
    rhs = stable.y(t) * gap_t * unstable.y(t)
    return abs(gap0 - rhs) / abs(gap0)
