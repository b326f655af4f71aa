"""
Invariant suite: executable identities and bounds of the magnetic flow.

Each check produces a SuiteRow with the measured residual, the threshold it
is held to and a pass flag. Closed-form rows only run on exact hyperbolic
models with a constant field; quotient rows only when a generator period is
available.
"""
import logging
import math
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from dynamics import stable_jacobi_norms, stability_data, symplectic_residual, riccati_stable
from errors import MagflowError
from exporter import to_json
from geometry import SurfaceModel, bounds_of
from gridrunner import determinant_grid, linearization_grid
from horocycle import (asymptotic_vector, busemann_distance_limit, busemann_with_vector,
                       horocyclic_transport, parametrization_check, stable_push,
                       transport_decay_bound, transport_derivative, transport_derivative_bound)
from models import SuiteRow, UnitVector
from sampler import VectorSampler
from spectrum import (build_quotient, find_periodic_orbit, lyapunov_constancy_wcs,
                      periodic_lyapunov, scaling_identity_check)
from transfer import (TRANSFER_HORIZON, chart_for, linearization_derivative,
                      linearization_equivariance, linearization_injectivity,
                      linearization_limit_check, linearize, stable_transfer,
                      transfer_from_profiles)

logger = logging.getLogger(__name__)

SYMPLECTIC_TIMES = (1.0, 3.0, 6.0)
PUSH_TIMES = (-2.0, -1.0, 1.0, 2.0)
HOROCYCLE_PARAMETERS = (-0.4, 0.3)
TRANSPORT_TIMES = (0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
LIMIT_TIMES = (1.0, 2.0, 3.0, 4.0)
LIMIT_NOISE = 1e-9
DERIVATIVE_PUSHES = (-0.5, 0.0, 0.5)
DERIVATIVE_TIMES = (0.0, 2.0, 4.0)
GRID_REACH = 0.5
PARAMETRIZATION_TOL = 1e-5
CROSS_CHECK_OFFSETS = ((0.3, 1.4), (-0.4, 0.8), (0.1, 2.2))
DEFAULT_ELL = 2.0


class InvariantSuite:
    """Runs the identity and bound checks on one model."""

    def __init__(self, model: SurfaceModel, tol: float = 1e-8):
        """Initialize the suite with default sample counts."""
        self.model = model
        self.tol = tol
        self.samples = 20
        self.grid_size = 50
        self.threads: Optional[int] = None
        self.ell: Optional[float] = model.period
        self.seed = 7
        self.reference = UnitVector((0.0, 1.0), 0.5 * math.pi)
        self.rows: List[SuiteRow] = []

    def set_sample_count(self, samples: int) -> None:
        """
        Set the number of random vectors per sampled check.

        Args:
            samples: Vectors (or pairs) drawn per check
        """
        self.samples = max(1, samples)

    def set_grid_size(self, grid_size: int) -> None:
        """Points per axis of the determinant and injectivity grids."""
        self.grid_size = max(1, grid_size)

    def set_translation_length(self, ell: Optional[float]) -> None:
        self.ell = ell

    def set_threads(self, threads: Optional[int]) -> None:
        """Worker processes for the grid checks (capped by MAGFLOW_THREADS)."""
        self.threads = threads

    def checks(self) -> List[Callable[[], List[SuiteRow]]]:
        selected = []
        if self.model.is_constant and abs(self.model.kappa_base) < 1.0:
            selected.append(self.check_closed_forms)
        selected += [
            self.check_symplectic,
            self.check_jacobi_bound,
            self.check_transfer,
            self.check_linearization_contract,
            self.check_derivative,
            self.check_injectivity,
        ]
        if self.model.kappa_vanishes:
            selected.append(self.check_busemann_distance)
        if self._quotient_length() is not None:
            selected.append(self.check_scaling_identity)
        selected += [self.check_lyapunov_constancy, self.check_horocycle_parametrization,
                     self.check_transport_decay, self.check_determinism]
        return selected

    def run(self) -> List[SuiteRow]:
        """
        Run every applicable check.

        A numerical failure inside a check becomes a failing row carrying the
        error message and residual.

        Returns:
            All rows in a fixed order
        """
        self.rows = []
        for check in self.checks():
            name = check.__name__.replace('check_', '')
            try:
                rows = check()
            except MagflowError as e:
                residual = e.residual if e.residual is not None else float('inf')
                rows = [SuiteRow(name, residual, 0.0, False, f"{type(e).__name__}: {e.message}")]
            for row in rows:
                level = logging.INFO if row.passed else logging.WARNING
                logger.log(level, f"{row.name}: {row.measured:.3e} (threshold {row.threshold:.1e})")
            self.rows.extend(rows)
        return self.rows

    def _row(self, name: str, measured: float, threshold: float, detail: str = "") -> SuiteRow:
        return SuiteRow(name, float(measured), threshold, bool(measured <= threshold), detail)

    def _vectors(self) -> List[UnitVector]:
        return VectorSampler(self.seed).random_vectors(self.model, self.samples)

    def _quotient_length(self) -> Optional[float]:
        if self.ell is not None:
            return self.ell
        if self.model.is_constant and abs(self.model.kappa_base) < 1.0:
            return DEFAULT_ELL
        return None

    def check_closed_forms(self) -> List[SuiteRow]:
        """Constant-field closed forms: u, w, horocycle curvature, transfer, closed orbit."""
        kappa = self.model.kappa_base
        a = math.sqrt(1.0 - kappa * kappa)
        data = stability_data(self.model, self.reference, self.tol)
        chart = chart_for(self.model, self.reference)
        interior = chart.curve.kappa_minus[3:-3]
        ell = self._quotient_length()
        quotient = build_quotient(self.model, ell)
        orbit = periodic_lyapunov(quotient, find_periodic_orbit(quotient))
        return [
            self._row("closed form uMinus", abs(data.u_minus + a), 1e-8),
            self._row("closed form wMinus", abs(data.w_minus + kappa / a), 1e-6),
            self._row("horocycle curvature", float(np.max(np.abs(np.abs(interior) - 1.0))), 1e-4),
            self._row("transfer identically one", float(np.max(np.abs(chart.transfer_nodes - 1.0))),
                      1e-6),
            self._row("closed orbit period", abs(orbit.period - ell / a), 1e-6),
            self._row("closed orbit exponent", abs(orbit.lambda_minus + a), 1e-6),
            self._row("closed orbit multiplier", abs(orbit.multiplier - math.exp(-ell)), 1e-6),
        ]

    def check_symplectic(self) -> List[SuiteRow]:
        """Symplectic identity at several times and the 2 q1 <= u+ - u- <= 2 q0 band."""
        bounds = bounds_of(self.model)
        worst, band = 0.0, 0.0
        for v in self._vectors():
            for t in SYMPLECTIC_TIMES:
                worst = max(worst, symplectic_residual(self.model, v, t, self.tol))
            data = stability_data(self.model, v, self.tol)
            gap = data.u_plus - data.u_minus
            band = max(band, 2.0 * bounds.q1 - gap, gap - 2.0 * bounds.q0)
        return [self._row("symplectic identity", worst, 1e-6),
                self._row("symplectic gap band", max(band, 0.0), 0.0,
                          f"[{2 * bounds.q1:.6g}, {2 * bounds.q0:.6g}]")]

    def check_jacobi_bound(self) -> List[SuiteRow]:
        """(|j_-| + |j_-'|) / y_- <= C1 on [0, 10]."""
        times = np.linspace(0.0, 10.0, 21)
        excess = -math.inf
        violations = 0
        for v in self._vectors():
            ratios, c1 = stable_jacobi_norms(self.model, v, times, self.tol)
            excess = max(excess, float(np.max(ratios - c1)))
            violations += int(np.sum(ratios > c1))
        return [self._row("stable Jacobi bound", float(violations), 0.0,
                          f"largest ratio minus C1: {excess:.6g}")]

    def check_transfer(self) -> List[SuiteRow]:
        """Reciprocity, cocycle and horizon stability of the stable transfer."""
        sampler = VectorSampler(self.seed)
        reciprocity = cocycle = doubling = 0.0
        for v, v_prime in sampler.asymptotic_pairs(self.model, self.samples):
            forward = stable_transfer(self.model, v, v_prime, self.tol)
            backward = stable_transfer(self.model, v_prime, v, self.tol, check=False)
            reciprocity = max(reciprocity, abs(forward.value * backward.value - 1.0))

            third = sampler.nearby_point(v.base, 0.5)
            v_third = asymptotic_vector(self.model, third, v)
            profiles = [riccati_stable(self.model, w, self.tol, t_max=TRANSFER_HORIZON)
                        for w in (v, v_prime, v_third)]
            x01 = transfer_from_profiles(profiles[1], profiles[0], self.tol).value
            x12 = transfer_from_profiles(profiles[2], profiles[1], self.tol).value
            x02 = transfer_from_profiles(profiles[2], profiles[0], self.tol).value
            cocycle = max(cocycle, abs(x01 * x12 - x02))

            if 2.0 * forward.horizon <= TRANSFER_HORIZON:
                late = 2.0 * forward.horizon
                doubled = math.exp(profiles[1].log_y(late) - profiles[0].log_y(late))
                band = max(forward.error_estimate, self.tol)
                doubling = max(doubling, abs(doubled - forward.value) / band)
        return [self._row("transfer reciprocity", reciprocity, 1e-6),
                self._row("transfer cocycle", cocycle, 1e-5),
                self._row("transfer horizon doubling", doubling, 10.0,
                          "in units of the reported error band")]

    def check_linearization_contract(self) -> List[SuiteRow]:
        """Busemann coordinate, push-equivariance, flow-equivariance and the finite-time limit."""
        model, v = self.model, self.reference
        chart = chart_for(model, v)
        level = push = 0.0
        for s in HOROCYCLE_PARAMETERS:
            z = chart.point(s)
            base = chart.transverse(s)
            for t in PUSH_TIMES:
                sample = linearize(model, v, stable_push(model, v, z, t), chart=chart)
                level = max(level, abs(sample.longitudinal - t))
                push = max(push, math.hypot(sample.longitudinal - t, sample.transverse - base))
        flow = linearization_equivariance(model, v, chart.point(HOROCYCLE_PARAMETERS[1]), 1.0)

        index = chart.curve.index_of(HOROCYCLE_PARAMETERS[1])
        node = float(chart.curve.s[index])
        limit = linearization_limit_check(model, v, chart, node, LIMIT_TIMES)
        factor = math.exp(bounds_of(model).q1) / 2.0
        shortfall = 0.0
        differences = limit["differences"]
        for a, b in zip(differences, differences[1:]):
            if b > LIMIT_NOISE:
                shortfall = max(shortfall, factor - a / b)
        return [self._row("linearization Busemann coordinate", level, 1e-5),
                self._row("linearization push equivariance", push, 1e-5),
                self._row("linearization flow equivariance", flow, 1e-4),
                self._row("finite-time limit decay", shortfall, 0.0,
                          f"ratios {', '.join(f'{r:.4g}' for r in limit['ratios'])}")]

    def _chart_grid(self) -> List[Tuple[float, float]]:
        """grid_size x grid_size chart points around the reference, scanned row by row in y."""
        x0, y0 = self.reference.base
        xs = np.linspace(x0 - GRID_REACH, x0 + GRID_REACH, self.grid_size)
        ys = np.geomspace(y0 * math.exp(-GRID_REACH), y0 * math.exp(GRID_REACH), self.grid_size)
        return [(float(x), float(y)) for y in ys for x in xs]

    def check_derivative(self) -> List[SuiteRow]:
        """Analytic derivative against finite differences, positive determinant on a grid."""
        model, v = self.model, self.reference
        chart = chart_for(model, v)
        worst = 0.0
        for i, s in enumerate(np.linspace(-GRID_REACH, GRID_REACH, self.samples)):
            t = DERIVATIVE_PUSHES[i % len(DERIVATIVE_PUSHES)]
            p = stable_push(model, v, chart.point(float(s)), t)
            worst = max(worst, linearization_derivative(model, v, p, chart=chart).relative_error)
        determinants = determinant_grid(model, v, self._chart_grid(), threads=self.threads)
        lowest = min(determinants)
        return [self._row("derivative identity", worst, 1e-3, f"{self.samples} points"),
                SuiteRow("determinant positive", lowest, 0.0, bool(lowest > 0.0),
                         f"{self.grid_size}x{self.grid_size} grid minimum")]

    def check_injectivity(self) -> List[SuiteRow]:
        """No two separated grid points share a linearization image."""
        grid = self._chart_grid()
        samples = linearization_grid(self.model, self.reference, grid, threads=self.threads)
        report = linearization_injectivity(self.model, self.reference, grid, samples=samples)
        return [self._row("linearization injectivity", float(len(report.collisions)), 0.0,
                          f"smallest image gap {report.nearest_image_gap:.6g}")]

    def check_busemann_distance(self) -> List[SuiteRow]:
        """Distance-difference Busemann values against the closest-point time shift."""
        x0, y0 = self.reference.base
        worst = 0.0
        for dx, scale in CROSS_CHECK_OFFSETS:
            z = (x0 + dx * y0, y0 * scale)
            direct = busemann_distance_limit(self.model, self.reference, z)
            shifted = busemann_with_vector(self.model, self.reference, z)[0]
            worst = max(worst, abs(direct - shifted))
        return [self._row("Busemann distance cross-check", worst, 1e-6)]

    def check_scaling_identity(self) -> List[SuiteRow]:
        """E_{psi_T v} = y_-(v, T) E_v on the quotient generated by the dilation."""
        quotient = build_quotient(self.model, self._quotient_length())
        orbit = periodic_lyapunov(quotient, find_periodic_orbit(quotient))
        report = scaling_identity_check(quotient, orbit, samples=self.samples)
        threshold = 1e-5 if self.model.is_constant else 1e-4
        return [self._row("scaling identity", report.max_residual, threshold,
                          f"multiplier {orbit.multiplier:.12g}")]

    def check_lyapunov_constancy(self) -> List[SuiteRow]:
        """Finite-horizon exponent gaps at T = 20 against |ln X| / T."""
        excess = 0.0
        for v, v_prime in VectorSampler(self.seed).asymptotic_pairs(self.model, self.samples):
            result = lyapunov_constancy_wcs(self.model, v, v_prime, 20.0, self.tol)
            excess = max(excess, result["gap"] - result["limitGap"])
        return [self._row("Lyapunov constancy", excess, 1e-6)]

    def check_horocycle_parametrization(self) -> List[SuiteRow]:
        """<c', N(v_s)> = 1 and 1 <= |c'| <= C1 at every node of the traced horocycle."""
        curve = chart_for(self.model, self.reference).curve
        normal, speed = parametrization_check(self.model, curve)
        c1 = bounds_of(self.model).c1
        excess = max(float(np.max(1.0 - speed)), float(np.max(speed - c1)), 0.0)
        return [self._row("horocycle normal component", float(np.max(np.abs(normal - 1.0))),
                          PARAMETRIZATION_TOL),
                self._row("horocycle speed band", excess, PARAMETRIZATION_TOL,
                          f"[1, {c1:.6g}]")]

    def check_transport_decay(self) -> List[SuiteRow]:
        """Frame discrepancy of horocyclic transport and its s-derivative against their decay bounds."""
        model = self.model
        chart = chart_for(model, self.reference)
        s = HOROCYCLE_PARAMETERS[1]
        rotations = [horocyclic_transport(model, chart.curve, s, t).rotation
                     for t in TRANSPORT_TIMES]
        last = TRANSPORT_TIMES[-1]
        excess = 0.0
        for t, zeta in zip(TRANSPORT_TIMES, rotations):
            allowed = 2.0 * transport_decay_bound(model, s, t, last)
            excess = max(excess, abs(zeta - rotations[-1]) - allowed)
        derivative_excess = 0.0
        for t in DERIVATIVE_TIMES:
            measured = transport_derivative(model, chart.curve, s, t)
            derivative_excess = max(derivative_excess,
                                    measured - transport_derivative_bound(model, t))
        return [self._row("horocyclic transport decay", max(excess, 0.0), 1e-8),
                self._row("horocyclic transport derivative", derivative_excess, 0.0)]

    def check_determinism(self) -> List[SuiteRow]:
        """Repeated evaluation produces byte-identical records."""
        vectors = self._vectors()[:2]
        first = [to_json(stability_data(self.model, v, self.tol).to_dict()) for v in vectors]
        second = [to_json(stability_data(self.model, v, self.tol).to_dict()) for v in vectors]
        mismatches = sum(a != b for a, b in zip(first, second))
        return [self._row("determinism", float(mismatches), 0.0)]

    def get_summary(self) -> Dict[str, object]:
        """
        Summary of the last run.

        Returns:
            Dictionary with row counts and the names of failing checks
        """
        failed = [row.name for row in self.rows if not row.passed]
        return {
            'model': self.model.label,
            'checks': len(self.rows),
            'passed': len(self.rows) - len(failed),
            'failed': failed,
        }

    @property
    def all_passed(self) -> bool:
        return bool(self.rows) and all(row.passed for row in self.rows)
