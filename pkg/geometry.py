"""
Conformal surface models of the hyperbolic plane.

A model lives on the upper half-plane chart with metric e^{2 rho}(dx^2 + dy^2),
rho = -ln y + sum of bumps, and carries a magnetic field
kappa = kappa_base + sum of bumps. Bumps are C^3 polynomial profiles of the
hyperbolic distance to their centre, so their supports are compact hyperbolic
discs and the family is preserved by half-plane isometries.
"""
import logging
import math
from functools import lru_cache
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.interpolate import CubicSpline, make_interp_spline
from scipy.optimize import root

from errors import ConvergenceError, DomainError, ModelError, PreconditionError
from models import PinchingBounds, Point, TangentVector, UnitVector

logger = logging.getLogger(__name__)

BOUND_MARGIN = 1.1


@dataclass(frozen=True)
class Bump:
    """Compactly supported profile a * (1 - s)^4, s = (cosh d - 1)/(cosh R - 1)."""
    center: Point
    radius: float
    amplitude: float

    def __post_init__(self):
        if self.center[1] <= 0.0:
            raise ModelError(f"Bump centre must lie in the half-plane: {self.center}")
        if self.radius <= 0.0:
            raise ModelError(f"Bump radius must be positive: {self.radius}")

    def jet(self, x: float, y: float) -> Tuple[float, float, float, float]:
        """Value, chart gradient and flat Laplacian at (x, y)."""
        cx, cy = self.center
        dx, dy = x - cx, y - cy
        dist2 = dx * dx + dy * dy
        ycy = y * cy
        cosh_d = 1.0 + dist2 / (2.0 * ycy)
        sigma = math.cosh(self.radius) - 1.0
        s = (cosh_d - 1.0) / sigma
        if s >= 1.0:
            return 0.0, 0.0, 0.0, 0.0

        one = 1.0 - s
        f0 = one ** 4
        f1 = -4.0 * one ** 3
        f2 = 12.0 * one * one

        ax = dx / ycy
        ay = dy / ycy - dist2 / (2.0 * y * ycy)
        lap_a = 1.0 / ycy + 1.0 / (y * y) - dy / (y * ycy) + dist2 / (y * y * ycy)

        a = self.amplitude
        gx = a * f1 * ax / sigma
        gy = a * f1 * ay / sigma
        lap = a * (f2 * (ax * ax + ay * ay) / (sigma * sigma) + f1 * lap_a / sigma)
        return a * f0, gx, gy, lap

    def moved(self, scale: float, shift: float) -> "Bump":
        """Image of the bump under z -> scale * z + shift."""
        cx, cy = self.center
        return Bump((scale * cx + shift, scale * cy), self.radius, self.amplitude)


def _copies(bump: Bump, period: Optional[float], x: float, y: float):
    """Dilation copies of a bump whose support can contain (x, y)."""
    if period is None:
        yield bump
        return
    # ln|z| is 1-Lipschitz for the hyperbolic metric
    offset = math.log(math.hypot(x, y)) - math.log(math.hypot(*bump.center))
    k_lo = math.ceil((offset - bump.radius) / period)
    k_hi = math.floor((offset + bump.radius) / period)
    for k in range(k_lo, k_hi + 1):
        yield bump.moved(math.exp(k * period), 0.0) if k else bump


def _bump_sum(bumps, period, x, y):
    value = gx = gy = lap = 0.0
    for bump in bumps:
        for copy in _copies(bump, period, x, y):
            b0, bx, by, bl = copy.jet(x, y)
            value += b0
            gx += bx
            gy += by
            lap += bl
    return value, gx, gy, lap


@dataclass(frozen=True)
class SurfaceModel:
    """Upper half-plane chart with a perturbed hyperbolic metric and a magnetic field.

    Attributes:
        label: Free-form name used in reports
        rho_bumps: Bumps added to the log factor rho = -ln y
        kappa_base: Constant background value of the magnetic field
        kappa_bumps: Bumps added to kappa
        period: Translation length ell of the generator z -> e^ell z, or None
        box: Working box (x0, x1, y0, y1) on which bounds are certified
        bounds: Certified pinching bounds (filled by ``build_model``)
    """
    label: str = "hyperbolic"
    rho_bumps: Tuple[Bump, ...] = ()
    kappa_base: float = 0.0
    kappa_bumps: Tuple[Bump, ...] = ()
    period: Optional[float] = None
    box: Tuple[float, float, float, float] = (-3.0, 3.0, 0.2, 5.0)
    bounds: Optional[PinchingBounds] = field(default=None, compare=False, repr=False)

    @property
    def is_hyperbolic(self) -> bool:
        """True when the metric is the exact hyperbolic metric (no perturbation object)."""
        return not self.rho_bumps

    @property
    def has_constant_kappa(self) -> bool:
        return not self.kappa_bumps

    @property
    def kappa_vanishes(self) -> bool:
        return self.kappa_base == 0.0 and all(b.amplitude == 0.0 for b in self.kappa_bumps)

    @property
    def is_constant(self) -> bool:
        """Exact hyperbolic metric with constant magnetic field."""
        return self.is_hyperbolic and self.has_constant_kappa

    def check(self, x: float, y: float) -> None:
        if not (math.isfinite(x) and math.isfinite(y)) or y <= 0.0:
            raise DomainError(f"Point ({x}, {y}) is outside the half-plane chart")

    def rho_gradient(self, x: float, y: float) -> Tuple[float, float, float]:
        """(rho, rho_x, rho_y) at (x, y)."""
        if not self.rho_bumps:
            return -math.log(y), 0.0, -1.0 / y
        b0, bx, by, _ = _bump_sum(self.rho_bumps, self.period, x, y)
        return -math.log(y) + b0, bx, by - 1.0 / y

    def rho_jet(self, x: float, y: float) -> Tuple[float, float, float, float]:
        """(rho, rho_x, rho_y, Laplacian of rho) at (x, y)."""
        b0, bx, by, bl = _bump_sum(self.rho_bumps, self.period, x, y)
        return -math.log(y) + b0, bx, by - 1.0 / y, bl + 1.0 / (y * y)

    def frame_scale(self, x: float, y: float) -> float:
        """Chart length of a unit vector, e^{-rho}."""
        return math.exp(-self.rho_gradient(x, y)[0])

    def kappa_jet(self, x: float, y: float) -> Tuple[float, float, float]:
        """(kappa, kappa_x, kappa_y) at (x, y)."""
        if not self.kappa_bumps:
            return self.kappa_base, 0.0, 0.0
        b0, bx, by, _ = _bump_sum(self.kappa_bumps, self.period, x, y)
        return self.kappa_base + b0, bx, by

    def kappa(self, x: float, y: float) -> float:
        return self.kappa_jet(x, y)[0]

    def transformed(self, scale: float, shift: float) -> "SurfaceModel":
        """Model f_* of this one under the isometry f(z) = scale * z + shift."""
        if scale <= 0.0:
            raise ModelError("Similarity scale must be positive")
        if self.period is not None and shift != 0.0:
            raise ModelError("Translations do not commute with the dilation generator")
        x0, x1, y0, y1 = self.box
        return replace(
            self,
            label=f"{self.label}@{scale:g},{shift:g}",
            rho_bumps=tuple(b.moved(scale, shift) for b in self.rho_bumps),
            kappa_bumps=tuple(b.moved(scale, shift) for b in self.kappa_bumps),
            box=(scale * x0 + shift, scale * x1 + shift, scale * y0, scale * y1),
        )

    def time_reversed(self) -> "SurfaceModel":
        """Same metric, field -kappa: orbits of this model run backwards."""
        return replace(
            self,
            label=f"{self.label}(reversed)",
            kappa_base=-self.kappa_base,
            kappa_bumps=tuple(replace(b, amplitude=-b.amplitude) for b in self.kappa_bumps),
        )


def certify_bounds(model: SurfaceModel, nx: int = 41, ny: int = 41) -> PinchingBounds:
    """
    Sample K, kappa and grad kappa on the working box and derive pinching bounds.

    Args:
        model: Model to certify
        nx, ny: Grid resolution (y is sampled geometrically)

    Returns:
        PinchingBounds widened by a 10% margin

    Raises:
        ModelError: If K or q is not negative somewhere on the grid
    """
    x0, x1, y0, y1 = model.box
    xs = np.linspace(x0, x1, nx)
    ys = np.geomspace(y0, y1, ny)
    extra = [b.center for b in model.rho_bumps + model.kappa_bumps]

    k_lo = k_hi = -1.0
    q_lo = q_hi = -1.0 + model.kappa_base ** 2
    kappa_max = abs(model.kappa_base)
    grad_max = 0.0
    points = [(x, y) for x in xs for y in ys] + list(extra)
    for x, y in points:
        rho, _, _, lap = model.rho_jet(x, y)
        scale = math.exp(-rho)
        curvature = -scale * scale * lap
        kappa, kx, ky = model.kappa_jet(x, y)
        grad = scale * math.hypot(kx, ky)
        base = curvature + kappa * kappa
        k_lo, k_hi = min(k_lo, curvature), max(k_hi, curvature)
        q_lo, q_hi = min(q_lo, base - grad), max(q_hi, base + grad)
        kappa_max = max(kappa_max, abs(kappa))
        grad_max = max(grad_max, grad)

    if k_hi >= 0.0:
        raise ModelError(f"Curvature is not negative on the working box (max K = {k_hi:.6g})")
    if q_hi >= 0.0:
        raise ModelError(f"Jacobi endomorphism is not negative (max q = {q_hi:.6g}); "
                         f"reduce the perturbation or the magnetic field")

    bounds = PinchingBounds(
        k0=BOUND_MARGIN * math.sqrt(-k_lo),
        k1=math.sqrt(-k_hi) / BOUND_MARGIN,
        q0=BOUND_MARGIN * math.sqrt(-q_lo),
        q1=math.sqrt(-q_hi) / BOUND_MARGIN,
        kappa_sup=BOUND_MARGIN * kappa_max,
        grad_kappa_sup=BOUND_MARGIN * grad_max,
    )
    logger.debug(f"Certified bounds for {model.label}: {bounds}")
    return bounds


def build_model(label: str = "hyperbolic", epsilon: float = 0.0,
                bump_center: Optional[Point] = None, bump_radius: float = 2.0,
                kappa_base: float = 0.0, kappa_bumps: Sequence[Bump] = (),
                period: Optional[float] = None,
                box: Tuple[float, float, float, float] = (-3.0, 3.0, 0.2, 5.0)) -> SurfaceModel:
    """
    Assemble a model and certify its bounds.

    A metric bump is attached whenever ``bump_center`` is given, even with
    ``epsilon = 0``; such a model is treated as perturbed.
    """
    rho_bumps = ()
    if bump_center is not None:
        rho_bumps = (Bump(tuple(bump_center), bump_radius, epsilon),)
    if period is not None and period <= 0.0:
        raise ModelError("Generator period must be positive")
    model = SurfaceModel(label=label, rho_bumps=rho_bumps, kappa_base=kappa_base,
                         kappa_bumps=tuple(kappa_bumps), period=period, box=box)
    return with_bounds(model)


def with_bounds(model: SurfaceModel) -> SurfaceModel:
    return replace(model, bounds=certify_bounds(model))


@lru_cache(maxsize=64)
def _certified(model: SurfaceModel) -> PinchingBounds:
    return certify_bounds(model)


def bounds_of(model: SurfaceModel) -> PinchingBounds:
    """Certified bounds of a model, computed once when the model carries none."""
    return model.bounds if model.bounds is not None else _certified(model)


def gauss_curvature(model: SurfaceModel, p: Point) -> float:
    """K(p) = -e^{-2 rho} Laplacian(rho)."""
    x, y = p
    model.check(x, y)
    rho, _, _, lap = model.rho_jet(x, y)
    return -math.exp(-2.0 * rho) * lap


def unit_tangent(model: SurfaceModel, v: UnitVector) -> TangentVector:
    """Chart components of a unit vector."""
    model.check(v.x, v.y)
    scale = model.frame_scale(v.x, v.y)
    return TangentVector(v.base, (scale * math.cos(v.angle), scale * math.sin(v.angle)))


def rotate_n(model: SurfaceModel, xi: TangentVector) -> TangentVector:
    """N(xi): rotation by +pi/2, which is the flat rotation in a conformal chart."""
    model.check(*xi.base)
    a, b = xi.components
    return TangentVector(xi.base, (-b, a))


def inner(model: SurfaceModel, xi: TangentVector, eta: TangentVector) -> float:
    x, y = xi.base
    rho = model.rho_gradient(x, y)[0]
    return math.exp(2.0 * rho) * (xi.components[0] * eta.components[0]
                                  + xi.components[1] * eta.components[1])


def metric_norm(model: SurfaceModel, xi: TangentVector) -> float:
    return math.sqrt(max(inner(model, xi, xi), 0.0))


def transport_angle(model: SurfaceModel, curve) -> float:
    """
    Rotation angle of parallel transport along a sampled chart path.

    In a conformal chart transported vectors keep their metric length and turn
    by the line integral of rho_y dx - rho_x dy.
    """
    pts = np.asarray(curve, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise PreconditionError("Curve must be an (n, 2) array of chart points")
    if not np.all(np.isfinite(pts)) or np.any(pts[:, 1] <= 0.0):
        raise DomainError("Curve leaves the half-plane chart")
    seg = np.hypot(*np.diff(pts, axis=0).T)
    keep = np.concatenate(([True], seg > 0.0))
    pts = pts[keep]
    if len(pts) < 2:
        return 0.0
    param = np.concatenate(([0.0], np.cumsum(seg[seg > 0.0])))
    if len(pts) >= 4:
        path = CubicSpline(param, pts, axis=0)
    else:
        path = make_interp_spline(param, pts, k=1, axis=0)
    velocity = path.derivative()

    def integrand(u):
        x, y = path(u)
        dx, dy = velocity(u)
        _, rx, ry = model.rho_gradient(x, y)
        return ry * dx - rx * dy

    total = 0.0
    # one quad call per chunk of knots
    edges = param[::max(1, len(param) // 32)]
    if edges[-1] != param[-1]:
        edges = np.append(edges, param[-1])
    for lo, hi in zip(edges[:-1], edges[1:]):
        value, _ = quad(integrand, lo, hi, epsabs=1e-14, epsrel=1e-12, limit=200)
        total += value
    return total


def parallel_transport(model: SurfaceModel, curve, xi: TangentVector) -> TangentVector:
    """
    Parallel transport of xi along a sampled chart path starting at its base point.

    Args:
        model: Surface model
        curve: (n, 2) chart points, curve[0] = base point of xi
        xi: Vector to transport

    Returns:
        Transported vector based at curve[-1]
    """
    pts = np.asarray(curve, dtype=float)
    start = pts[0]
    if math.hypot(start[0] - xi.base[0], start[1] - xi.base[1]) > 1e-9 * max(1.0, start[1]):
        raise PreconditionError("Curve does not start at the base point of the vector")
    angle = transport_angle(model, pts)
    end = pts[-1]
    scale = math.exp(model.rho_gradient(*start)[0] - model.rho_gradient(*end)[0])
    c, s = math.cos(angle), math.sin(angle)
    a, b = xi.components
    return TangentVector((end[0], end[1]), (scale * (c * a - s * b), scale * (s * a + c * b)))


def hyperbolic_distance(p: Point, q: Point) -> float:
    """Closed-form distance of the exact hyperbolic plane."""
    chord = math.hypot(q[0] - p[0], q[1] - p[1])
    return 2.0 * math.asinh(chord / (2.0 * math.sqrt(p[1] * q[1])))


def hyperbolic_direction(p: Point, q: Point) -> float:
    """Chart angle at p of the hyperbolic geodesic running to q."""
    px, py = p
    qx, qy = q
    dx, dy = qx - px, qy - py
    if abs(dx) <= 1e-13 * max(math.hypot(dx, dy), 1e-300):
        return 0.5 * math.pi if dy >= 0.0 else -0.5 * math.pi
    centre = 0.5 * (qx + px) + dy * (qy + py) / (2.0 * dx)
    tx, ty = -py, px - centre
    if tx * dx + ty * dy < 0.0:
        tx, ty = -tx, -ty
    return math.atan2(ty, tx)


def geodesic_rhs(model: SurfaceModel, magnetic: bool = True):
    """Right-hand side of the flow in the state (x, ln y, angle)."""
    def rhs(t, state):
        x, eta, phi = state
        y = math.exp(eta)
        rho, rx, ry = model.rho_gradient(x, y)
        scale = math.exp(-rho)
        c, s = math.cos(phi), math.sin(phi)
        turn = scale * (ry * c - rx * s)
        if magnetic:
            turn += model.kappa(x, y)
        return [scale * c, scale * s / y, turn]
    return rhs


def _geodesic_endpoint(model: SurfaceModel, p: Point, angle: float, length: float) -> Point:
    if length == 0.0:
        return p
    sol = solve_ivp(geodesic_rhs(model, magnetic=False), (0.0, length),
                    [p[0], math.log(p[1]), angle], method="DOP853", rtol=1e-11, atol=1e-13)
    if sol.status < 0:
        raise ConvergenceError(f"Geodesic integration failed: {sol.message}")
    return float(sol.y[0, -1]), math.exp(sol.y[1, -1])


def geodesic_shoot(model: SurfaceModel, p: Point, q: Point, tol: float = 1e-6,
                   seed_angle: Optional[float] = None) -> Tuple[float, float]:
    """
    Initial angle and length of the geodesic from p to q.

    Seeded by the hyperbolic closed form, or by ``seed_angle`` when given, and
    refined by a two-unknown root solve. Distant endpoints need a seed close
    to the answer.

    Raises:
        ConvergenceError: If the endpoint mismatch stays above tol
    """
    model.check(*p)
    model.check(*q)
    angle0 = hyperbolic_direction(p, q) if seed_angle is None else seed_angle
    length0 = hyperbolic_distance(p, q)
    if length0 < 1e-14:
        return angle0, 0.0

    def mismatch(z):
        x, y = _geodesic_endpoint(model, p, z[0], abs(z[1]))
        return [(x - q[0]) / q[1], math.log(y / q[1])]

    sol = root(mismatch, [angle0, length0], method="hybr", options={"xtol": 1e-13})
    residual = float(np.max(np.abs(mismatch(sol.x))))
    if residual > 0.01 * tol:
        raise ConvergenceError(f"Geodesic shooting from {p} to {q} did not converge",
                               residual=residual)
    return float(sol.x[0]), abs(float(sol.x[1]))


def distance(model: SurfaceModel, p: Point, q: Point, tol: float = 1e-6) -> float:
    """Riemannian distance between two chart points."""
    model.check(*p)
    model.check(*q)
    if model.is_hyperbolic:
        return hyperbolic_distance(p, q)
    return geodesic_shoot(model, p, q, tol)[1]


def inverse_exponential(model: SurfaceModel, p: Point, q: Point,
                        tol: float = 1e-6) -> TangentVector:
    """Tangent vector at p whose geodesic reaches q at time one."""
    if model.is_hyperbolic:
        model.check(*p)
        model.check(*q)
        angle, length = hyperbolic_direction(p, q), hyperbolic_distance(p, q)
    else:
        angle, length = geodesic_shoot(model, p, q, tol)
    scale = length * model.frame_scale(*p)
    return TangentVector(p, (scale * math.cos(angle), scale * math.sin(angle)))
