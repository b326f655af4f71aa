"""
Stable horocycles, asymptotic vectors and Busemann functions.

All constructions start from the asymptotic shooter: for a reference vector v
it keeps the orbit of v and measures signed transverse offsets of other
orbits from it, which is the quantity every root solve in this module
drives to zero.
"""
import logging
import math
from functools import lru_cache
from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import make_interp_spline
from scipy.optimize import brentq, minimize_scalar

from dynamics import (StabilityProfile, integrate_flow, riccati_stable, tangential_horizon,
                      w_minus)
from errors import ConvergenceError, PreconditionError
from geometry import (SurfaceModel, bounds_of, geodesic_shoot, hyperbolic_direction,
                      hyperbolic_distance, transport_angle)
from models import DEFAULT_TOLERANCES, HorocycleCurve, HorocyclicTransport, Point, UnitVector

logger = logging.getLogger(__name__)

REFERENCE_MARGIN = 12.0
GRID_DENSITY = 40
BUSEMANN_START = 4.0
BUSEMANN_STEP = 2.0
DISTANCE_SPAN = 20.0
DISTANCE_MARGIN = 6.0
CORRECTION_TOL = 1e-6
CURVATURE_FLAG = 1e-3
PROFILE_SPAN = 20.0


def wrap_angle(angle: float) -> float:
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


class AsymptoticShooter:
    """Reference orbit of v with closest-point and signed-offset queries."""

    def __init__(self, model: SurfaceModel, v: UnitVector, tol: float):
        self.model = model
        self.v = v
        self.tol = tol
        self.shoot_time = bounds_of(model).shooting_time(tol)
        self._hint = None
        self._build(self.shoot_time + REFERENCE_MARGIN)

    def _build(self, length: float) -> None:
        self.reference = integrate_flow(self.model, self.v, (0.0, length))
        end = self.reference.t_end
        self._grid = np.linspace(0.0, end, int(end * GRID_DENSITY) + 2)
        states = self.reference.sample(self._grid)
        self._grid_x, self._grid_y = states[:, 0], states[:, 1]
        logger.debug(f"Reference orbit of {self.v} built to t = {end:.2f}")

    def _distance_to(self, point: Point):
        return lambda tau: hyperbolic_distance(point, self.reference.point(tau))

    def _global_bracket(self, point: Point) -> Tuple[float, float]:
        px, py = point
        chord = np.hypot(self._grid_x - px, self._grid_y - py)
        dists = 2.0 * np.arcsinh(chord / (2.0 * np.sqrt(py * self._grid_y)))
        i = int(np.argmin(dists))
        return self._grid[max(i - 1, 0)], self._grid[min(i + 1, len(self._grid) - 1)]

    def nearest(self, point: Point, hint: Optional[float] = None) -> Tuple[float, float]:
        """
        Closest orbit time to ``point`` and the signed transverse offset.

        The offset is positive on the N(v) side of the orbit.
        """
        objective = self._distance_to(point)
        end = self.reference.t_end
        bracket = None
        if hint is not None:
            bracket = (max(hint - 1.0, 0.0), min(hint + 1.0, end))
        else:
            bracket = self._global_bracket(point)
        res = minimize_scalar(objective, bounds=bracket, method="bounded",
                              options={"xatol": 1e-13})
        tau = float(res.x)
        interior = (bracket[0], bracket[1])
        if hint is not None and (tau - interior[0] < 1e-6 and interior[0] > 0.0
                                 or interior[1] - tau < 1e-6 and interior[1] < end):
            return self.nearest(point)
        if end - tau < 0.5:
            self._build(2.0 * end)
            return self.nearest(point)

        x, y, phi = self.reference.state(tau)
        side = math.cos(phi) * (point[1] - y) - math.sin(phi) * (point[0] - x)
        return tau, math.copysign(float(res.fun), side)

    def offset(self, p: Point, angle: float) -> float:
        """Signed offset of the orbit of (p, angle) after the shooting time."""
        orbit = integrate_flow(self.model, UnitVector(p, angle), (0.0, self.shoot_time))
        tau, delta = self.nearest(orbit.end.base, self._hint)
        self._hint = tau
        return delta

    def solve(self, p: Point) -> Tuple[UnitVector, float]:
        """Asymptotic vector at p and the offset residual at the root."""
        if p == self.v.base:
            return self.v, 0.0
        far = self.reference.point(self.reference.t_end)
        kappa = max(-0.99, min(0.99, self.model.kappa(*p)))
        guess = hyperbolic_direction(p, far) - math.asin(kappa)
        self._hint = None
        f0 = self.offset(p, guess)
        best = abs(f0)
        if f0 == 0.0:
            return UnitVector(p, guess), 0.0

        # the offset increases with the angle: turning left moves the end point left
        direction = -1.0 if f0 > 0.0 else 1.0
        step, near, f_near = 1e-4, guess, f0
        bracket = None
        while step <= 2.0:
            trial = guess + direction * step
            f_trial = self.offset(p, trial)
            best = min(best, abs(f_trial))
            if f_trial == 0.0:
                return UnitVector(p, trial), 0.0
            if f_trial * f0 < 0.0:
                bracket = tuple(sorted((near, trial)))
                break
            near, f_near = trial, f_trial
            step *= 4.0
        if bracket is None:
            raise ConvergenceError(f"Could not bracket the asymptotic direction at {p}",
                                   residual=best)

        self._hint = None
        angle = brentq(lambda a: self.offset(p, a), *bracket, xtol=1e-14, rtol=1e-15,
                       maxiter=200)
        residual = abs(self.offset(p, angle))
        return UnitVector(p, angle), residual


@lru_cache(maxsize=32)
def shooter_for(model: SurfaceModel, v: UnitVector, tol: float) -> AsymptoticShooter:
    return AsymptoticShooter(model, v, tol)


def asymptotic_vector(model: SurfaceModel, p: Point, v: UnitVector,
                      tol: Optional[float] = None) -> UnitVector:
    """
    The unit vector at p forward asymptotic to v.

    Raises:
        ConvergenceError: If the direction cannot be bracketed; carries the best offset
    """
    tol = tol if tol is not None else DEFAULT_TOLERANCES.shooting
    model.check(*p)
    vector, residual = shooter_for(model, v, tol).solve(tuple(map(float, p)))
    logger.debug(f"Asymptotic vector at {p}: angle {vector.angle:.12f}, residual {residual:.2e}")
    return vector


def unstable_asymptotic_vector(model: SurfaceModel, p: Point, v: UnitVector,
                               tol: Optional[float] = None) -> UnitVector:
    """The unit vector at p backward asymptotic to v, by reversing time."""
    reversed_vector = asymptotic_vector(model.time_reversed(), p, v.reversed(), tol)
    return reversed_vector.reversed()


def _w_on_reference(shooter: AsymptoticShooter, tau: float) -> float:
    return w_minus(shooter.model, shooter.reference.unit_vector(tau), CORRECTION_TOL)


def busemann_with_vector(model: SurfaceModel, v: UnitVector, z: Point,
                         tol: Optional[float] = None,
                         shooting_tol: Optional[float] = None) -> Tuple[float, UnitVector]:
    """
    Busemann value B_v(z) together with the asymptotic vector at z.

    B_v is normalized by B_v(H_v(t)) = t. It is the limit of the time shift
    between the orbit of the asymptotic vector at z and the orbit of v,
    measured by closest points and corrected along the stable direction.
    Closest points agree for conformal metrics up to the square of the
    offset, so the chart distance of the exact plane locates them.
    """
    tol = tol if tol is not None else DEFAULT_TOLERANCES.busemann
    shooting_tol = shooting_tol if shooting_tol is not None else DEFAULT_TOLERANCES.shooting
    shooter = shooter_for(model, v, shooting_tol)
    vz = asymptotic_vector(model, z, v, shooting_tol)
    if vz == v:
        return 0.0, v

    sigma_max = shooter.shoot_time - 2.0
    orbit = integrate_flow(model, vz, (0.0, sigma_max))
    sigma, hint, previous = BUSEMANN_START, None, None
    difference = float("inf")
    while sigma <= sigma_max:
        tau, delta = shooter.nearest(orbit.point(sigma), hint)
        hint = tau
        correction = 0.0 if model.kappa_vanishes else _w_on_reference(shooter, tau) * delta
        estimate = tau - correction - sigma
        if previous is not None:
            difference = abs(estimate - previous)
            if difference < tol:
                return estimate, vz
        previous = estimate
        sigma += BUSEMANN_STEP
    raise ConvergenceError(f"Busemann limit at {z} did not settle", residual=difference)


def busemann_distance_limit(model: SurfaceModel, v: UnitVector, z: Point,
                            tol: Optional[float] = None) -> float:
    """
    B_v(z) = lim (t - d(z, pi psi_t v)) with the model's own distance.

    Only defined for the geodesic flow: along a magnetic orbit the distance
    grows slower than t and the difference has no limit.

    Raises:
        PreconditionError: If the magnetic field does not vanish
        ConvergenceError: If the differences do not settle before the horizon
    """
    tol = tol if tol is not None else DEFAULT_TOLERANCES.busemann
    if not model.kappa_vanishes:
        raise PreconditionError("Distance differences only have a limit without a magnetic field")
    model.check(*z)
    if tuple(map(float, z)) == v.base:
        return 0.0

    t_max = max(DISTANCE_SPAN, math.log(1.0 / tol) / bounds_of(model).k1 + DISTANCE_MARGIN)
    orbit = integrate_flow(model, v, (0.0, t_max))
    t, previous, deflection = BUSEMANN_START, None, 0.0
    difference = float("inf")
    while t <= orbit.t_end:
        q = orbit.point(t)
        if model.is_hyperbolic:
            length = hyperbolic_distance(z, q)
        else:
            # the bump deflection of the shot changes little from one t to the next
            heading = hyperbolic_direction(z, q)
            angle, length = geodesic_shoot(model, z, q, DEFAULT_TOLERANCES.distance,
                                           seed_angle=heading + deflection)
            deflection = wrap_angle(angle - heading)
        estimate = t - length
        if previous is not None:
            difference = abs(estimate - previous)
            if difference < tol:
                logger.debug(f"Distance Busemann limit at {z} settled at t = {t:.1f}")
                return estimate
        previous = estimate
        t += BUSEMANN_STEP
    raise ConvergenceError(f"Distance differences at {z} did not settle", residual=difference)


def busemann(model: SurfaceModel, v: UnitVector, z: Point, tol: Optional[float] = None) -> float:
    """
    B_v(z), with B_v(pi v) = 0 and B_v(H_v(t)) = t.

    Field-free models use the distance limit; magnetic models the time shift
    of closest points, whose limit exists for every field.
    """
    if model.kappa_vanishes:
        return busemann_distance_limit(model, v, z, tol)
    return busemann_with_vector(model, v, z, tol)[0]


def stable_push(model: SurfaceModel, v: UnitVector, p: Point, t: float,
                tol: Optional[float] = None) -> Point:
    """Phi_t(p) = pi psi_t(asymptotic vector at p)."""
    if t == 0.0:
        return p
    vp = asymptotic_vector(model, p, v, tol)
    return integrate_flow(model, vp, (0.0, t)).point(t)


class _Node(NamedTuple):
    s: float
    x: float
    y: float
    angle: float
    u: float
    w: float
    kappa: float
    profile: StabilityProfile


def _horocycle_field(model: SurfaceModel, tol: float, t_w: float):
    """Right-hand side of the horocycle equations and the Riccati data it used."""
    def field(x, y, phi):
        vec = UnitVector((x, y), phi)
        profile = riccati_stable(model, vec, tol, t_max=t_w)
        u = profile.u(0.0)
        w = w_minus(model, vec, tol, profile)
        kappa = model.kappa(x, y)
        rho, rx, ry = model.rho_gradient(x, y)
        scale = math.exp(-rho)
        c, s = math.cos(phi), math.sin(phi)
        dx = scale * (w * c - s)
        dy = scale * (w * s + c)
        dphi = u + kappa * w + (ry * dx - rx * dy)
        return np.array([dx, dy, dphi]), (u, w, kappa, profile)
    return field


def _march(model, v, field, h, steps, reproject_every, drift_tol, shooting_tol):
    state = np.array([v.x, v.y, v.angle])
    nodes = []
    for k in range(steps + 1):
        if k and reproject_every and k % reproject_every == 0:
            p = (float(state[0]), float(state[1]))
            fixed = asymptotic_vector(model, p, v, shooting_tol).angle
            drift = abs(wrap_angle(fixed - state[2]))
            if drift > drift_tol:
                raise ConvergenceError(f"Horocycle drifted {drift:.2e} rad at s = {k * h:.4f}",
                                       residual=drift)
            state[2] = state[2] + wrap_angle(fixed - state[2])
        k1, data = field(*state)
        nodes.append(_Node(k * h, float(state[0]), float(state[1]), float(state[2]), *data))
        if k == steps:
            break
        k2, _ = field(*(state + 0.5 * h * k1))
        k3, _ = field(*(state + 0.5 * h * k2))
        k4, _ = field(*(state + h * k3))
        state = state + h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        if state[1] <= 0.0:
            raise ConvergenceError("Horocycle left the chart")
    return nodes


def trace_horocycle(model: SurfaceModel, v: UnitVector, half_width: float,
                    tol: Optional[float] = None, ds: float = 0.05,
                    reproject_every: int = 25, drift_tol: float = 1e-3) -> HorocycleCurve:
    """
    Trace the stable horocycle through pi v for s in [-half_width, half_width].

    Fixed-step RK4 in s on c' = w_- v_s + N(v_s), D v_s/ds = (u_- + kappa w_-) N(v_s),
    re-projecting the angle onto the asymptotic vector every ``reproject_every`` steps.

    Args:
        model: Surface model
        v: Vector fixing the horocycle H_v(0)
        half_width: Parameter range on each side of s = 0
        tol: Riccati tolerance used for u_- and w_-
        ds: Nominal step
        reproject_every: Re-projection period in steps (0 disables it)
        drift_tol: Largest angle correction accepted at a re-projection

    Returns:
        HorocycleCurve with per-node Riccati profiles attached
    """
    tol = tol if tol is not None else DEFAULT_TOLERANCES.riccati
    model.check(v.x, v.y)
    t_w = max(tangential_horizon(bounds_of(model), tol), PROFILE_SPAN)
    field = _horocycle_field(model, tol, t_w)
    steps = max(1, int(math.ceil(half_width / ds))) if half_width > 0 else 0
    h = half_width / steps if steps else 0.0
    shooting_tol = DEFAULT_TOLERANCES.shooting

    forward = _march(model, v, field, h, steps, reproject_every, drift_tol, shooting_tol)
    nodes = forward
    if steps:
        backward = _march(model, v, field, -h, steps, reproject_every, drift_tol, shooting_tol)
        nodes = backward[:0:-1] + forward

    columns = list(zip(*[node[:7] for node in nodes]))
    s, x, y, angle, u, w, kappa = (np.array(c, dtype=float) for c in columns)
    speed = np.sqrt(1.0 + w * w)
    arc = cumulative_trapezoid(speed, s, initial=0.0) if len(s) > 1 else np.zeros(1)
    arc = arc - arc[len(s) // 2]
    curve = HorocycleCurve(v=v, s=s, x=x, y=y, angle=angle, w_minus=w, u_minus=u,
                           kappa=kappa, arc_length=arc, profiles=[n.profile for n in nodes])

    if len(s) >= 3:
        for i, si in enumerate(s):
            sample = horocycle_curvature(curve, float(si), model)
            curve.kappa_minus[i] = sample.value
            curve.flagged[i] = sample.flagged
        if np.any(curve.flagged):
            logger.warning(f"{int(curve.flagged.sum())} horocycle nodes disagree with the "
                           f"curvature identity beyond {CURVATURE_FLAG}")
    return curve


class CurvatureSample(NamedTuple):
    value: float
    identity: float
    flagged: bool


def _spline(s, values):
    return make_interp_spline(s, values, k=min(5, len(s) - 1), axis=0)


def horocycle_curvature(curve: HorocycleCurve, s: float,
                        model: Optional[SurfaceModel] = None) -> CurvatureSample:
    """
    Geodesic curvature of the traced horocycle at parameter s.

    The value is measured from the sampled chart curve; the identity
    k (1 + w^2)^{3/2} = (1 + w^2)(u + kappa w) - dw/ds is evaluated alongside
    and the sample is flagged when both differ by more than 1e-3.
    """
    if model is None:
        model = curve.profiles[0].model
    if len(curve.s) < 3:
        raise PreconditionError("Curvature needs at least three horocycle nodes")
    if not curve.s[0] - 1e-12 <= s <= curve.s[-1] + 1e-12:
        raise PreconditionError(f"s = {s} is outside the traced range")

    position = _spline(curve.s, np.column_stack((curve.x, curve.y)))
    d1 = position.derivative(1)(s)
    d2 = position.derivative(2)(s)
    x, y = position(s)
    norm = math.hypot(d1[0], d1[1])
    chart = (d1[0] * d2[1] - d1[1] * d2[0]) / norm ** 3
    rho, rx, ry = model.rho_gradient(x, y)
    normal_derivative = (-d1[1] * rx + d1[0] * ry) / norm
    measured = math.exp(-rho) * (chart - normal_derivative)

    h = 1e-3
    lo, hi = max(s - h, curve.s[0]), min(s + h, curve.s[-1])
    w_spline = _spline(curve.s, curve.w_minus)
    dw = float(w_spline(hi) - w_spline(lo)) / (hi - lo)
    w = float(w_spline(s))
    u = float(_spline(curve.s, curve.u_minus)(s))
    kappa = float(_spline(curve.s, curve.kappa)(s))
    one_w2 = 1.0 + w * w
    identity = (one_w2 * (u + kappa * w) - dw) / one_w2 ** 1.5
    return CurvatureSample(measured, identity, abs(measured - identity) > CURVATURE_FLAG)


def curvature_bound_report(model: SurfaceModel, curve: HorocycleCurve) -> dict:
    """Largest measured horocycle curvature against q0 + ||kappa|| max|w_-|, slack reported."""
    bounds = bounds_of(model)
    observed = float(np.nanmax(np.abs(curve.kappa_minus)))
    reference = bounds.q0 + bounds.kappa_sup * float(np.max(np.abs(curve.w_minus)))
    return {"observed": observed, "reference": reference, "slack": observed - reference}


def horocyclic_transport(model: SurfaceModel, curve: HorocycleCurve, s: float, t: float,
                         samples: int = 41) -> HorocyclicTransport:
    """
    The isometry chi(theta, s, t) from the frame at p(s, t) to the frame at p(0, t).

    Parallel transport runs along the pushed horocycle sigma -> Phi_t(c(sigma)) from
    sigma = s back to 0 and is followed by the rotation taking the transported
    flow direction onto the flow direction at p(0, t).
    """
    if not curve.s[0] - 1e-12 <= s <= curve.s[-1] + 1e-12:
        raise PreconditionError(f"s = {s} is outside the traced range")
    sigmas = np.linspace(s, 0.0, samples)
    position = _spline(curve.s, np.column_stack((curve.x, curve.y, curve.angle)))
    pushed = []
    for sigma in sigmas:
        x, y, phi = position(sigma)
        vec = UnitVector((float(x), float(y)), float(phi))
        if t != 0.0:
            vec = integrate_flow(model, vec, (0.0, t)).unit_vector(t)
        pushed.append((vec.x, vec.y, vec.angle))
    pushed = np.array(pushed)

    start, end = pushed[0], pushed[-1]
    if s == 0.0:
        angle = 0.0
    else:
        angle = transport_angle(model, pushed[:, :2])
    rotation = wrap_angle(end[2] - (start[2] + angle))
    scale = math.exp(model.rho_gradient(start[0], start[1])[0]
                     - model.rho_gradient(end[0], end[1])[0])
    return HorocyclicTransport(s=s, t=t, start=(start[0], start[1]), end=(end[0], end[1]),
                               transport_angle=angle, rotation=rotation, scale=scale)


def transport_decay_bound(model: SurfaceModel, s: float, t: float, t_later: float) -> float:
    """Bound on |zeta(s, t) - zeta(s, t_later)| from the exponential decay of its t-derivative."""
    b = bounds_of(model)
    rate = (2.0 * b.k0 ** 2 + b.grad_kappa_sup) * b.c1 * abs(s)
    return rate * abs(math.exp(-b.q1 * t) - math.exp(-b.q1 * t_later)) / b.q1


def transport_derivative(model: SurfaceModel, curve: HorocycleCurve, s: float, t: float,
                         h: float = 1e-3) -> float:
    """
    Norm of (D/ds) chi(s, t), i.e. |d zeta / ds|, by central differences in s.

    Differences turn one-sided at the ends of the traced range.
    """
    lo, hi = max(s - h, float(curve.s[0])), min(s + h, float(curve.s[-1]))
    if hi <= lo:
        raise PreconditionError(f"s = {s} leaves no room for a difference quotient")
    first = horocyclic_transport(model, curve, lo, t).rotation
    second = horocyclic_transport(model, curve, hi, t).rotation
    return abs(wrap_angle(second - first)) / (hi - lo)


def transport_derivative_bound(model: SurfaceModel, t: float) -> float:
    """C1 e^{-q1 t}."""
    b = bounds_of(model)
    return b.c1 * math.exp(-b.q1 * t)


def parametrization_check(model: SurfaceModel,
                          curve: HorocycleCurve) -> Tuple[np.ndarray, np.ndarray]:
    """
    <c'(s), N(v_s)> and |c'(s)| at every node.

    c' is measured from the spline through the traced points, so both arrays
    test the trace rather than the field it was integrated from.
    """
    if len(curve.s) < 2:
        raise PreconditionError("Parametrization check needs at least two horocycle nodes")
    velocity = _spline(curve.s, np.column_stack((curve.x, curve.y))).derivative(1)(curve.s)
    scale = np.exp([model.rho_gradient(x, y)[0] for x, y in zip(curve.x, curve.y)])
    normal = scale * (-np.sin(curve.angle) * velocity[:, 0] + np.cos(curve.angle) * velocity[:, 1])
    speed = scale * np.hypot(velocity[:, 0], velocity[:, 1])
    return normal, speed
