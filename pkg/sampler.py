"""
Seeded random sampling of unit vectors, points and asymptotic pairs.
"""
import logging
import math
from typing import List, Optional, Tuple

import numpy as np

from errors import ConfigError
from geometry import SurfaceModel
from horocycle import asymptotic_vector
from models import Point, UnitVector

logger = logging.getLogger(__name__)

DEFAULT_SEED = 20240601


class VectorSampler:
    """Draws reproducible samples from the working box of a model."""

    def __init__(self, seed: Optional[int] = DEFAULT_SEED):
        """Initialize the sampler with a seed for reproducibility."""
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def random_points(self, model: SurfaceModel, count: int, shrink: float = 0.5) -> List[Point]:
        """
        Points in the central part of the working box, log-uniform in y.

        Args:
            model: Model whose box is sampled
            count: Number of points
            shrink: Fraction of the box kept around its centre

        Raises:
            ConfigError: If count is negative or shrink is outside (0, 1]
        """
        if count < 0:
            raise ConfigError(f"Cannot draw {count} samples")
        if not 0.0 < shrink <= 1.0:
            raise ConfigError(f"Shrink factor must lie in (0, 1], got {shrink}")
        x0, x1, y0, y1 = model.box
        xc, half_x = 0.5 * (x0 + x1), 0.5 * shrink * (x1 - x0)
        lc, half_l = 0.5 * math.log(y0 * y1), 0.5 * shrink * math.log(y1 / y0)
        xs = self.rng.uniform(xc - half_x, xc + half_x, count)
        ys = np.exp(self.rng.uniform(lc - half_l, lc + half_l, count))
        return [(float(x), float(y)) for x, y in zip(xs, ys)]

    def random_vectors(self, model: SurfaceModel, count: int, shrink: float = 0.5) -> List[UnitVector]:
        """Unit vectors with uniformly distributed angles at random points."""
        points = self.random_points(model, count, shrink)
        angles = self.rng.uniform(-math.pi, math.pi, count)
        return [UnitVector(p, float(a)) for p, a in zip(points, angles)]

    def nearby_point(self, p: Point, spread: float) -> Point:
        """A point within roughly ``spread`` hyperbolic units of p."""
        a, b = self.rng.uniform(-1.0, 1.0, 2)
        return float(p[0] + spread * p[1] * a), float(p[1] * math.exp(spread * b))

    def asymptotic_pairs(self, model: SurfaceModel, count: int,
                         spread: float = 0.5) -> List[Tuple[UnitVector, UnitVector]]:
        """
        Pairs (v, v') with v' the vector forward asymptotic to v at a nearby point.
        """
        pairs = []
        for v in self.random_vectors(model, count):
            q = self.nearby_point(v.base, spread)
            pairs.append((v, asymptotic_vector(model, q, v)))
        logger.debug(f"Drew {len(pairs)} asymptotic pairs with seed {self.seed}")
        return pairs

    def set_seed(self, seed: int) -> None:
        """Reset the generator to a new seed."""
        self.seed = seed
        self.rng = np.random.default_rng(seed)
