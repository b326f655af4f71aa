"""
Stable and unstable transfer functions and the linearization E_v.

The linearization of the stable manifold of v sends a point p to
B_v(p) v + e_v(s) N(v), where s locates the point of H_v(0) on the orbit
through p and e_v integrates the stable transfer along the horocycle.
"""
import logging
import math
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import make_interp_spline
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from dynamics import StabilityProfile, integrate_flow, riccati_stable, riccati_unstable, w_minus
from errors import ConvergenceError, PreconditionError
from geometry import (SurfaceModel, bounds_of, hyperbolic_distance, inner, inverse_exponential,
                      unit_tangent)
from horocycle import (busemann_with_vector, shooter_for, trace_horocycle,
                       unstable_asymptotic_vector)
from models import (DEFAULT_TOLERANCES, HorocycleCurve, InjectivityReport,
                    LinearizationDerivative, LinearizationSample, MatchReport, Point,
                    TangentVector, TransferValue, UnitVector)

logger = logging.getLogger(__name__)

TRANSFER_HORIZON = 30.0
HORIZON_START = 5.0
HORIZON_STEP = 5.0
ASYMPTOTIC_GATE = 1e-3
CROSS_CHECK_TIME = 10.0
DEFAULT_HALF_WIDTH = 1.0
MAX_HALF_WIDTH = 16.0
DERIVATIVE_STEP = 1e-4
DERIVATIVE_FLAG = 1e-3
INJECTIVITY_SEPARATION = 1e-2
INJECTIVITY_CLOSENESS = 1e-6


def _cauchy_ratio(numerator: StabilityProfile, denominator: StabilityProfile, tol: float,
                  lag: float = 0.0) -> TransferValue:
    """lim y_num(t - lag) / y_den(t) with Cauchy stopping over horizons 5, 10, 15, ..."""
    t_cap = min(numerator.t_hi + lag, denominator.t_hi)
    t = HORIZON_START + max(lag, 0.0)
    previous = None
    while t <= t_cap + 1e-9:
        value = math.exp(numerator.log_y(t - lag) - denominator.log_y(t))
        if previous is not None and abs(value - previous) < tol:
            return TransferValue(value=value, horizon=t, error_estimate=abs(value - previous))
        previous = value
        t += HORIZON_STEP
    raise ConvergenceError(f"Transfer ratio did not settle before t = {t_cap:.1f}",
                           residual=abs(value - previous) if previous is not None else None)


def transfer_from_profiles(numerator: StabilityProfile, denominator: StabilityProfile,
                           tol: Optional[float] = None) -> TransferValue:
    """X = lim y(numerator) / y(denominator) for two precomputed stable profiles."""
    tol = tol if tol is not None else DEFAULT_TOLERANCES.transfer
    return _cauchy_ratio(numerator, denominator, tol)


def check_asymptotic(model: SurfaceModel, v: UnitVector, v_prime: UnitVector) -> float:
    """
    Offset of the orbit of v' from the orbit of v after the shooting time.

    Raises:
        PreconditionError: If the orbits separate, i.e. v' is not on W^S(v)
    """
    shooter = shooter_for(model, v, DEFAULT_TOLERANCES.shooting)
    offset = abs(shooter.offset(v_prime.base, v_prime.angle))
    if offset > ASYMPTOTIC_GATE:
        raise PreconditionError(f"{v_prime} is not forward asymptotic to {v} "
                                f"(offset {offset:.3e})", residual=offset)
    return offset


def stable_transfer(model: SurfaceModel, v: UnitVector, v_prime: UnitVector,
                    tol: Optional[float] = None, check: bool = True) -> TransferValue:
    """
    Stable transfer X(v, v') = lim y_-(v', t) / y_-(v, t).

    Args:
        model: Surface model
        v, v_prime: Vectors on one stable manifold
        tol: Cauchy stopping tolerance
        check: Verify the forward asymptotics first

    Raises:
        PreconditionError: If v' is not forward asymptotic to v
        ConvergenceError: If the ratio does not settle within the transfer horizon
    """
    tol = tol if tol is not None else DEFAULT_TOLERANCES.transfer
    if check:
        check_asymptotic(model, v, v_prime)
    base = riccati_stable(model, v, tol, t_max=TRANSFER_HORIZON)
    other = riccati_stable(model, v_prime, tol, t_max=TRANSFER_HORIZON)
    return _cauchy_ratio(other, base, tol)


def synchronized_transfer(model: SurfaceModel, v: UnitVector, v_prime: UnitVector, lag: float,
                          tol: Optional[float] = None) -> TransferValue:
    """lim y_-(v', t - lag) / y_-(v, t): the transfer to a vector lagging ``lag`` behind v."""
    tol = tol if tol is not None else DEFAULT_TOLERANCES.transfer
    base = riccati_stable(model, v, tol, t_max=TRANSFER_HORIZON + max(lag, 0.0))
    other = riccati_stable(model, v_prime, tol, t_max=TRANSFER_HORIZON + max(-lag, 0.0))
    return _cauchy_ratio(other, base, tol, lag=lag)


def _frame_transfer(model: SurfaceModel, v: UnitVector, v_prime: UnitVector,
                    xi: TangentVector, factor: float) -> TangentVector:
    tangent, normal = unit_tangent(model, v_prime), unit_tangent(model, v_prime.normal())
    along = inner(model, xi, tangent)
    across = inner(model, xi, normal)
    t_v, n_v = unit_tangent(model, v), unit_tangent(model, v.normal())
    return TangentVector(v.base, (along * t_v.components[0] + factor * across * n_v.components[0],
                                  along * t_v.components[1] + factor * across * n_v.components[1]))


def extended_stable_transfer(model: SurfaceModel, v: UnitVector, v_prime: UnitVector,
                             xi: TangentVector, transfer: Optional[float] = None,
                             tol: Optional[float] = None) -> TangentVector:
    """X~(v, v') xi = X <xi, N(v')> N(v) + <xi, v'> v."""
    if transfer is None:
        transfer = stable_transfer(model, v, v_prime, tol).value
    return _frame_transfer(model, v, v_prime, xi, transfer)


def unstable_transfer(model: SurfaceModel, v: UnitVector, v_prime: UnitVector,
                      tol: Optional[float] = None) -> TransferValue:
    """
    Unstable transfer through the symplectic gap.

    The value gap(v') / gap(v) * X(v', v), gap = u_+ - u_-, is cross-checked
    against the direct ratio y_+(v', 10) / y_+(v, 10); disagreement beyond the
    expected decay is flagged.
    """
    tol = tol if tol is not None else DEFAULT_TOLERANCES.transfer
    check_asymptotic(model, v, v_prime)
    stable_v = riccati_stable(model, v, tol, t_max=TRANSFER_HORIZON)
    stable_w = riccati_stable(model, v_prime, tol, t_max=TRANSFER_HORIZON)
    unstable_v = riccati_unstable(model, v, tol, t_max=CROSS_CHECK_TIME)
    unstable_w = riccati_unstable(model, v_prime, tol, t_max=CROSS_CHECK_TIME)

    reverse = _cauchy_ratio(stable_v, stable_w, tol)
    gap_v = unstable_v.u(0.0) - stable_v.u(0.0)
    gap_w = unstable_w.u(0.0) - stable_w.u(0.0)
    value = gap_w / gap_v * reverse.value

    direct = math.exp(unstable_w.log_y(CROSS_CHECK_TIME) - unstable_v.log_y(CROSS_CHECK_TIME))
    threshold = max(1e-6, math.exp(-bounds_of(model).q1 * CROSS_CHECK_TIME))
    flagged = abs(direct - value) > threshold * abs(value)
    if flagged:
        logger.warning(f"Unstable transfer {value:.10g} disagrees with direct ratio {direct:.10g}")
    return TransferValue(value=value, horizon=reverse.horizon,
                         error_estimate=reverse.error_estimate * abs(gap_w / gap_v),
                         cross_check=direct, flagged=flagged)


def extended_unstable_transfer(model: SurfaceModel, v: UnitVector, v_prime: UnitVector,
                               xi: TangentVector, tol: Optional[float] = None) -> TangentVector:
    """Unstable counterpart of the extended transfer."""
    factor = unstable_transfer(model, v, v_prime, tol).value
    return _frame_transfer(model, v, v_prime, xi, factor)


class HorocycleChart:
    """H_v(0) traced once, with the transfer integral e_v(s) along it.

    The trace is doubled in width whenever a point projects beyond its ends.
    """

    def __init__(self, model: SurfaceModel, v: UnitVector,
                 half_width: float = DEFAULT_HALF_WIDTH, tol: Optional[float] = None,
                 ds: float = 0.05):
        self.model = model
        self.v = v
        self.ds = ds
        self.tol = tol if tol is not None else DEFAULT_TOLERANCES.transfer
        self._trace(half_width)

    def _trace(self, half_width: float) -> None:
        self.half_width = half_width
        self.curve: HorocycleCurve = trace_horocycle(self.model, self.v, half_width, self.tol,
                                                     ds=self.ds, reproject_every=1)
        s = self.curve.s
        base = self.curve.profiles[int(np.argmin(np.abs(s)))]
        self.transfer_nodes = np.array([
            transfer_from_profiles(profile, base, self.tol).value
            for profile in self.curve.profiles
        ])
        k = min(5, len(s) - 1)
        self._transfer = make_interp_spline(s, self.transfer_nodes, k=k)
        self._integral = self._transfer.antiderivative()
        self._integral_at_zero = float(self._integral(0.0))
        self._position = make_interp_spline(s, np.column_stack((self.curve.x, self.curve.y)), k=k)
        self._velocity = self._position.derivative()
        logger.info(f"Horocycle chart for {self.v}: {len(s)} nodes on [{s[0]:.3f}, {s[-1]:.3f}]")

    def extend(self) -> None:
        """Retrace with twice the half-width."""
        if 2.0 * self.half_width > MAX_HALF_WIDTH:
            raise ConvergenceError(f"Horocycle chart of {self.v} cannot grow beyond "
                                   f"half-width {MAX_HALF_WIDTH:g}")
        logger.info(f"Extending the horocycle chart of {self.v} to half-width "
                    f"{2.0 * self.half_width:g}")
        self._trace(2.0 * self.half_width)

    def transfer(self, s: float) -> float:
        return float(self._transfer(s))

    def transverse(self, s: float) -> float:
        """e_v(s) = integral of X(v, v_sigma) from 0 to s."""
        return float(self._integral(s)) - self._integral_at_zero

    def point(self, s: float) -> Point:
        x, y = self._position(s)
        return float(x), float(y)

    def locate(self, point: Point) -> Tuple[float, float]:
        """
        Parameter of the horocycle point closest to ``point``.

        Returns:
            (s, hyperbolic distance from the point to c(s))
        """
        s_nodes = self.curve.s

        def foot(sigma):
            c = self._position(sigma)
            d = self._velocity(sigma)
            return float((point[0] - c[0]) * d[0] + (point[1] - c[1]) * d[1])

        dists = [hyperbolic_distance(point, (x, y)) for x, y in zip(self.curve.x, self.curve.y)]
        i = int(np.argmin(dists))
        candidates = [(max(i - 1, 0), i), (i, min(i + 1, len(s_nodes) - 1))]
        for lo, hi in candidates:
            if lo == hi:
                continue
            f_lo, f_hi = foot(s_nodes[lo]), foot(s_nodes[hi])
            if f_lo == 0.0:
                return float(s_nodes[lo]), hyperbolic_distance(point, self.point(s_nodes[lo]))
            if f_lo * f_hi <= 0.0:
                s = brentq(foot, s_nodes[lo], s_nodes[hi], xtol=1e-15)
                return float(s), hyperbolic_distance(point, self.point(s))
        raise ConvergenceError(f"{point} projects outside the traced horocycle",
                               residual=float(min(dists)))

    def locate_extending(self, point: Point) -> Tuple[float, float]:
        """``locate``, extending the trace until the point projects inside it."""
        while True:
            try:
                return self.locate(point)
            except ConvergenceError:
                if 2.0 * self.half_width > MAX_HALF_WIDTH:
                    raise
                self.extend()


@lru_cache(maxsize=16)
def chart_for(model: SurfaceModel, v: UnitVector, half_width: float = DEFAULT_HALF_WIDTH,
              tol: Optional[float] = None) -> HorocycleChart:
    return HorocycleChart(model, v, half_width, tol)


def _linearize(model: SurfaceModel, v: UnitVector, p: Point, tol: Optional[float],
               chart: Optional[HorocycleChart]) -> Tuple[LinearizationSample, UnitVector]:
    busemann_tol = tol if tol is not None else DEFAULT_TOLERANCES.busemann
    chart = chart if chart is not None else chart_for(model, v)
    r, vp = busemann_with_vector(model, v, p, busemann_tol)
    foot = p if r == 0.0 else integrate_flow(model, vp, (0.0, -r)).point(-r)
    s, residual = chart.locate_extending(foot)
    if residual > 1e-5:
        raise ConvergenceError(f"Pushed point {foot} is not on the horocycle chart",
                               residual=residual)
    sample = LinearizationSample(point=tuple(p), longitudinal=r, transverse=chart.transverse(s),
                                 error_estimate=residual + busemann_tol, horocycle_parameter=s)
    return sample, vp


def linearize(model: SurfaceModel, v: UnitVector, p: Point, tol: Optional[float] = None,
              chart: Optional[HorocycleChart] = None) -> LinearizationSample:
    """
    E_v(p) = B_v(p) v + e_v(s) N(v).

    Args:
        model: Surface model
        v: Vector whose stable manifold is linearized
        p: Chart point
        tol: Busemann tolerance
        chart: Precomputed horocycle chart of v (cached per model and v otherwise)

    Raises:
        ConvergenceError: If p cannot be located on the chart of H_v(0)
    """
    return _linearize(model, v, p, tol, chart)[0]


def linearization_equivariance(model: SurfaceModel, v: UnitVector, p: Point, t: float,
                               tol: Optional[float] = None,
                               half_width: float = DEFAULT_HALF_WIDTH) -> float:
    """
    Residual of E_{psi_t v}(p) = E_v(p) - t v with N(v) scaled by y_-(v, t).

    Components are compared in the frames of v and psi_t v.
    """
    first = linearize(model, v, p, tol, chart_for(model, v, half_width))
    v_t = integrate_flow(model, v, (0.0, t)).unit_vector(t)
    second = linearize(model, v_t, p, tol, chart_for(model, v_t, half_width))
    y_t = riccati_stable(model, v, t_max=max(t, 0.0), t_min=min(t, 0.0)).y(t)
    return math.hypot(second.longitudinal - (first.longitudinal - t),
                      second.transverse - y_t * first.transverse)


def linearization_derivative(model: SurfaceModel, v: UnitVector, p: Point,
                             tol: Optional[float] = None,
                             chart: Optional[HorocycleChart] = None,
                             step: float = DERIVATIVE_STEP) -> LinearizationDerivative:
    """
    Derivative of E_v at p in the frames (v', N(v')) -> (v, N(v)), v' asymptotic at p.

    The analytic matrix is [[1, -w_-(v')], [0, X_r]] where X_r is the stable
    transfer synchronized by r = B_v(p). On H_v(0) it is X~(v, v') up to the
    shear by w_-(v'), which vanishes without a magnetic field. A central finite
    difference of ``linearize`` is compared against it.

    Args:
        tol: Busemann tolerance of the linearize calls; the transfer keeps its own
    """
    busemann_tol = tol if tol is not None else DEFAULT_TOLERANCES.busemann
    chart = chart if chart is not None else chart_for(model, v)
    sample, vp = _linearize(model, v, p, busemann_tol, chart)
    transfer = synchronized_transfer(model, v, vp, sample.longitudinal,
                                     DEFAULT_TOLERANCES.transfer).value
    shear = w_minus(model, vp)
    analytic = np.array([[1.0, -shear], [0.0, transfer]])

    columns = []
    for dx, dy in ((step, 0.0), (0.0, step)):
        plus = linearize(model, v, (p[0] + dx, p[1] + dy), busemann_tol, chart)
        minus = linearize(model, v, (p[0] - dx, p[1] - dy), busemann_tol, chart)
        columns.append([(plus.longitudinal - minus.longitudinal) / (2.0 * step),
                        (plus.transverse - minus.transverse) / (2.0 * step)])
    jacobian = np.array(columns).T
    frame = np.column_stack((unit_tangent(model, vp).components,
                             unit_tangent(model, vp.normal()).components))
    finite = jacobian @ frame
    relative = float(np.linalg.norm(finite - analytic) / np.linalg.norm(analytic))
    flagged = relative > DERIVATIVE_FLAG
    if flagged:
        logger.warning(f"Derivative of E_v at {p} disagrees with finite differences ({relative:.2e})")
    return LinearizationDerivative(point=tuple(p), matrix=analytic, finite_difference=finite,
                                   relative_error=relative, transfer=transfer, flagged=flagged)


def linearization_determinant(model: SurfaceModel, v: UnitVector, p: Point,
                              tol: Optional[float] = None) -> float:
    """det dE_v(p), the synchronized stable transfer at p."""
    r, vp = busemann_with_vector(model, v, p, tol)
    return synchronized_transfer(model, v, vp, r).value


def linearization_match(model1: SurfaceModel, model2: SurfaceModel,
                        f: Callable[[Point], Point], v1: UnitVector, v2: UnitVector,
                        grid: Sequence[Point], tol: Optional[float] = None,
                        half_width: float = DEFAULT_HALF_WIDTH) -> MatchReport:
    """
    Supremum over the grid of |E2_{v2}(f(p)) - E1_{v1}(p)| in frame components.
    """
    chart1 = chart_for(model1, v1, half_width)
    chart2 = chart_for(model2, v2, half_width)
    residuals = []
    for p in grid:
        first = linearize(model1, v1, p, tol, chart1)
        second = linearize(model2, v2, f(p), tol, chart2)
        residuals.append(math.hypot(second.longitudinal - first.longitudinal,
                                    second.transverse - first.transverse))
    worst = int(np.argmax(residuals))
    return MatchReport(grid=[tuple(p) for p in grid], residuals=residuals,
                       sup_residual=float(residuals[worst]), argmax=tuple(grid[worst]))


def finite_time_linearization(model: SurfaceModel, v: UnitVector, chart: HorocycleChart,
                              s: float, t: float, tol: Optional[float] = None) -> float:
    """
    e_t = <exp^{-1}_{pi psi_t v} Phi_t(c(s)), N(psi_t v)> / y_-(v, t).

    Tends to e_v(s) as t grows.
    """
    index = chart.curve.index_of(s)
    if abs(chart.curve.s[index] - s) > 1e-12:
        raise PreconditionError("Finite-time linearization is evaluated at horocycle nodes")
    vz = chart.curve.node_vector(index)
    pushed = integrate_flow(model, vz, (0.0, t)).point(t)
    v_t = integrate_flow(model, v, (0.0, t)).unit_vector(t)
    profile = chart.curve.profiles[int(np.argmin(np.abs(chart.curve.s)))]
    if profile.t_hi < t:
        profile = riccati_stable(model, v, tol, t_max=t)
    arrow = inverse_exponential(model, v_t.base, pushed)
    return inner(model, arrow, unit_tangent(model, v_t.normal())) / profile.y(t)


def linearization_limit_check(model: SurfaceModel, v: UnitVector, chart: HorocycleChart, s: float,
                              times: Sequence[float]) -> dict:
    """Finite-time values, their Cauchy differences and successive decay ratios."""
    values = [finite_time_linearization(model, v, chart, s, t) for t in times]
    differences = [abs(b - a) for a, b in zip(values, values[1:])]
    ratios = [a / b for a, b in zip(differences, differences[1:]) if b > 0.0]
    return {"times": list(times), "values": values, "differences": differences,
            "ratios": ratios, "limit": chart.transverse(s)}


def transverse_blowup(model: SurfaceModel, v: UnitVector, q: Point, times: Sequence[float],
                      tol: Optional[float] = None,
                      half_width: float = DEFAULT_HALF_WIDTH) -> List[Tuple[float, float]]:
    """
    Transverse part of E_{psi_t w}(pi v) for w at q on the unstable manifold of v.

    For t -> -inf the values grow without bound although w and v share their past.
    """
    w = unstable_asymptotic_vector(model, q, v)
    sample = linearize(model, w, v.base, tol, chart_for(model, w, half_width))
    t_min = min(min(times), 0.0)
    profile = riccati_stable(model, w, t_max=max(max(times), 0.0), t_min=t_min)
    return [(float(t), profile.y(t) * sample.transverse) for t in times]


def linearization_injectivity(model: SurfaceModel, v: UnitVector, grid: Sequence[Point],
                              tol: Optional[float] = None,
                              samples: Optional[Sequence[LinearizationSample]] = None,
                              separation: float = INJECTIVITY_SEPARATION,
                              closeness: float = INJECTIVITY_CLOSENESS) -> InjectivityReport:
    """
    Pairs of grid points at least ``separation`` apart whose images lie within ``closeness``.

    Args:
        model: Surface model
        v: Vector whose stable manifold is linearized
        grid: Chart points
        tol: Busemann tolerance of linearize
        samples: Precomputed E_v over the grid (evaluated here otherwise)
        separation: Chart distance from which sources count as distinct
        closeness: Image distance below which two images collide

    Returns:
        InjectivityReport listing the colliding pairs and the smallest image gap
    """
    points = np.array([tuple(p) for p in grid], dtype=float)
    if samples is None:
        chart = chart_for(model, v)
        samples = [linearize(model, v, tuple(p), tol, chart) for p in points]
    if len(samples) != len(points):
        raise PreconditionError("One linearization sample is needed per grid point")
    images = np.array([(s.longitudinal, s.transverse) for s in samples], dtype=float)
    tree = cKDTree(images)
    collisions = [(i, j) for i, j in sorted(tree.query_pairs(closeness))
                  if np.hypot(*(points[i] - points[j])) >= separation]

    nearest = math.inf
    if len(images) > 1:
        gaps, neighbours = tree.query(images, k=min(len(images), 8))
        for i in range(len(images)):
            for gap, j in zip(gaps[i], neighbours[i]):
                if np.hypot(*(points[i] - points[j])) >= separation:
                    nearest = min(nearest, float(gap))
                    break
    if collisions:
        logger.warning(f"E_v maps {len(collisions)} separated pairs within {closeness:g}")
    return InjectivityReport(points=[tuple(p) for p in points], collisions=collisions,
                             nearest_image_gap=nearest)
