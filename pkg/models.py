"""
Data models for the magnetic flow laboratory.

Records shared between the numerical modules, the exporter and the command
line. Points are chart coordinates ``(x, y)`` of the upper half-plane.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

Point = Tuple[float, float]


@dataclass(frozen=True)
class Tolerances:
    """Default accuracy targets used when an operation is called without ``tol``."""
    flow: float = 1e-11
    flow_atol: float = 1e-13
    riccati: float = 1e-8
    shooting: float = 1e-10
    busemann: float = 1e-7
    transfer: float = 1e-8
    distance: float = 1e-6


DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True)
class PinchingBounds:
    """Certified curvature and Jacobi-endomorphism bounds of a surface model.

    -k0^2 <= K <= -k1^2 and -q0^2 <= q <= -q1^2 on the working box.
    """
    k0: float
    k1: float
    q0: float
    q1: float
    kappa_sup: float
    grad_kappa_sup: float

    @property
    def c1(self) -> float:
        """Constant bounding (|j| + |j'|)/y along stable Jacobi fields."""
        return 1.0 + (self.kappa_sup + self.kappa_sup ** 2) / self.q1 + self.q0

    def riccati_horizon(self, tol: float) -> float:
        """Backward/forward integration length that makes the seed error below tol."""
        return math.log(1.0 / tol) / (2.0 * self.q1) + 5.0 / self.q1

    def shooting_time(self, tol: float) -> float:
        return max(8.0, math.log(1.0 / tol) / (2.0 * self.q1) + 2.0 / self.q1)


@dataclass(frozen=True)
class UnitVector:
    """A unit tangent vector: base point plus chart angle of its direction."""
    base: Point
    angle: float

    def __post_init__(self):
        object.__setattr__(self, "base", (float(self.base[0]), float(self.base[1])))
        object.__setattr__(self, "angle", float(self.angle))

    @property
    def x(self) -> float:
        return self.base[0]

    @property
    def y(self) -> float:
        return self.base[1]

    def reversed(self) -> "UnitVector":
        """The vector -v at the same point."""
        return UnitVector(self.base, self.angle + math.pi)

    def normal(self) -> "UnitVector":
        """N(v), the rotation by +pi/2."""
        return UnitVector(self.base, self.angle + 0.5 * math.pi)


@dataclass(frozen=True)
class TangentVector:
    """A tangent vector in chart components at a base point."""
    base: Point
    components: Tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "base", (float(self.base[0]), float(self.base[1])))
        object.__setattr__(self, "components",
                           (float(self.components[0]), float(self.components[1])))


@dataclass(frozen=True)
class JacobiComponents:
    """Frame components of a Jacobi field: J = x T + y N, J' = (y' + kappa x) N."""
    x: float
    y: float
    y_prime: float

    def __add__(self, other: "JacobiComponents") -> "JacobiComponents":
        return JacobiComponents(self.x + other.x, self.y + other.y,
                                self.y_prime + other.y_prime)

    def scaled(self, factor: float) -> "JacobiComponents":
        return JacobiComponents(factor * self.x, factor * self.y, factor * self.y_prime)


@dataclass
class StabilityData:
    """Riccati data at one unit vector."""
    u_minus: float
    u_plus: float
    w_minus: float
    w_plus: float
    horizon: float
    error_estimate: float

    def to_dict(self) -> Dict[str, float]:
        return {
            "uMinus": self.u_minus,
            "uPlus": self.u_plus,
            "wMinus": self.w_minus,
            "wPlus": self.w_plus,
            "horizon": self.horizon,
            "errorEstimate": self.error_estimate,
        }


@dataclass
class TransferValue:
    """Value of a transfer function with the horizon where it stopped."""
    value: float
    horizon: float
    error_estimate: float
    cross_check: Optional[float] = None
    flagged: bool = False

    def to_dict(self) -> Dict[str, object]:
        record = {
            "value": self.value,
            "horizon": self.horizon,
            "errorEstimate": self.error_estimate,
        }
        if self.cross_check is not None:
            record["crossCheck"] = self.cross_check
            record["flagged"] = self.flagged
        return record


@dataclass
class LinearizationSample:
    """E_v(p) = longitudinal * v + transverse * N(v)."""
    point: Point
    longitudinal: float
    transverse: float
    error_estimate: float
    horocycle_parameter: float = 0.0


@dataclass
class LinearizationDerivative:
    """Derivative of E_v at p in the frames (v', N(v')) -> (v, N(v))."""
    point: Point
    matrix: np.ndarray
    finite_difference: np.ndarray
    relative_error: float
    transfer: float
    flagged: bool = False

    @property
    def determinant(self) -> float:
        return float(np.linalg.det(self.matrix))


@dataclass
class MatchReport:
    """Supremum of the linearization mismatch over a grid."""
    grid: List[Point]
    residuals: List[float]
    sup_residual: float
    argmax: Point

    def to_dict(self) -> Dict[str, object]:
        return {
            "grid": [list(p) for p in self.grid],
            "supResidual": self.sup_residual,
            "argmaxPoint": list(self.argmax),
        }


@dataclass
class InjectivityReport:
    """Separated grid pairs whose linearization images collide."""
    points: List[Point]
    collisions: List[Tuple[int, int]]
    nearest_image_gap: float

    @property
    def injective(self) -> bool:
        return not self.collisions


@dataclass
class HorocycleCurve:
    """Sampled stable horocycle through the base point of v.

    Node arrays are indexed by the horocycle parameter ``s`` with
    <c'(s), N(v_s)> = 1.
    """
    v: UnitVector
    s: np.ndarray
    x: np.ndarray
    y: np.ndarray
    angle: np.ndarray
    w_minus: np.ndarray
    u_minus: np.ndarray
    kappa: np.ndarray
    arc_length: np.ndarray = None
    kappa_minus: np.ndarray = None
    flagged: np.ndarray = None
    profiles: list = field(default=None, repr=False)

    def __post_init__(self):
        n = len(self.s)
        if self.kappa_minus is None:
            self.kappa_minus = np.full(n, np.nan)
        if self.flagged is None:
            self.flagged = np.zeros(n, dtype=bool)
        if self.arc_length is None:
            self.arc_length = np.zeros(n)

    def node_vector(self, index: int) -> UnitVector:
        return UnitVector((self.x[index], self.y[index]), self.angle[index])

    def index_of(self, s: float) -> int:
        return int(np.argmin(np.abs(self.s - s)))


@dataclass
class HorocyclicTransport:
    """The isometry chi(theta, s, t) between frames of the pushed horocycle.

    ``transport_angle`` is the chart rotation of parallel transport from
    sigma = s to sigma = 0; ``rotation`` is zeta, the angle taking the
    transported frame onto the frame at sigma = 0.
    """
    s: float
    t: float
    start: Point
    end: Point
    transport_angle: float
    rotation: float
    scale: float

    @property
    def isometry_angle(self) -> float:
        return self.transport_angle + self.rotation

    def apply(self, components: Tuple[float, float]) -> Tuple[float, float]:
        """Apply chi to chart components at the start point."""
        c, s = math.cos(self.isometry_angle), math.sin(self.isometry_angle)
        a, b = components
        return (self.scale * (c * a - s * b), self.scale * (s * a + c * b))


@dataclass
class PeriodicOrbit:
    """Closed orbit on a cyclic quotient: psi_T v = d(gamma) v."""
    v: UnitVector
    period: float
    offset: float
    tilt: float
    residual: float
    lambda_minus: Optional[float] = None
    lambda_plus: Optional[float] = None
    multiplier: Optional[float] = None
    lambda_plus_direct: Optional[float] = None

    def to_dict(self) -> Dict[str, object]:
        return {
            "v": [self.v.x, self.v.y, self.v.angle],
            "T": self.period,
            "offset": self.offset,
            "tilt": self.tilt,
            "lambdaMinus": self.lambda_minus,
            "lambdaPlus": self.lambda_plus,
            "multiplier": self.multiplier,
            "residual": self.residual,
        }


@dataclass
class ScalingCheck:
    """Residuals of E_{psi_T v} = y_-(v, T) E_v on the stable manifold."""
    samples: List[Point]
    transverse_residuals: List[float]
    longitudinal_residuals: List[float]
    multiplier: float

    @property
    def max_residual(self) -> float:
        values = list(self.transverse_residuals) + list(self.longitudinal_residuals)
        return max(values) if values else 0.0


@dataclass
class SuiteRow:
    """One line of the invariant suite report."""
    name: str
    measured: float
    threshold: float
    passed: bool
    detail: str = ""


@dataclass
class RunConfig:
    """Settings assembled by the command line for one invocation.

    Vectors, maps and grids stay in their string form until the command runs.
    """
    command: str = ""
    model_path: str = ""
    model2_path: Optional[str] = None
    v: Optional[str] = None
    vprime: Optional[str] = None
    map: Optional[str] = None
    ell: Optional[float] = None
    half_width: float = 1.0
    grid_size: int = 50
    tol: Optional[float] = None
    t: float = 1.0
    horizon: float = 10.0
    out: Optional[str] = None
    output_format: str = "csv"
    samples: int = 20
    grid: Optional[str] = None
    threads: Optional[int] = None
    verbose: bool = False
