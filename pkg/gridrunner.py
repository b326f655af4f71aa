"""
Ordered evaluation of a function over grid points, optionally in parallel.
"""
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from functools import partial
from typing import Callable, List, Optional, Sequence

from errors import ConfigError
from geometry import SurfaceModel
from horocycle import busemann
from models import LinearizationSample, Point, UnitVector
from transfer import chart_for, linearization_determinant, linearize

logger = logging.getLogger(__name__)

THREADS_VARIABLE = 'MAGFLOW_THREADS'


def thread_cap(requested: Optional[int] = None) -> int:
    """
    Number of worker processes: ``requested`` limited by MAGFLOW_THREADS.

    Raises:
        ConfigError: If MAGFLOW_THREADS is not a positive integer
    """
    raw = os.environ.get(THREADS_VARIABLE)
    cap = None
    if raw is not None and raw.strip():
        try:
            cap = int(raw)
        except ValueError:
            raise ConfigError(f"{THREADS_VARIABLE} must be an integer, got '{raw}'")
        if cap < 1:
            raise ConfigError(f"{THREADS_VARIABLE} must be positive, got {cap}")
    wanted = requested if requested is not None else (cap or 1)
    return max(1, min(wanted, cap) if cap is not None else wanted)


class GridRunner:
    """Maps a picklable function over points and returns results in input order."""

    def __init__(self, threads: Optional[int] = None):
        """Initialize the runner; the worker count honours MAGFLOW_THREADS."""
        self.threads = thread_cap(threads)

    def run(self, func: Callable, items: Sequence) -> List:
        if self.threads == 1 or len(items) < 2:
            results = [func(item) for item in items]
        else:
            logger.info(f"Evaluating {len(items)} grid points on {self.threads} workers")
            with ProcessPoolExecutor(max_workers=self.threads) as pool:
                results = list(pool.map(func, items, chunksize=max(1, len(items) // (4 * self.threads))))
        logger.debug(f"Grid evaluation finished: {len(results)} results")
        return results


def _busemann_row(model: SurfaceModel, v: UnitVector, tol: Optional[float], p: Point):
    return p[0], p[1], busemann(model, v, p, tol)


def _linearize_point(model: SurfaceModel, v: UnitVector, tol: Optional[float],
                     half_width: float, p: Point) -> LinearizationSample:
    return linearize(model, v, p, tol, chart_for(model, v, half_width))


def _determinant_point(model: SurfaceModel, v: UnitVector, tol: Optional[float], p: Point) -> float:
    return linearization_determinant(model, v, p, tol)


def busemann_grid(model: SurfaceModel, v: UnitVector, grid: Sequence[Point],
                  tol: Optional[float] = None, threads: Optional[int] = None):
    """Rows (px, py, B_v(p)) over the grid."""
    return GridRunner(threads).run(partial(_busemann_row, model, v, tol), list(grid))


def linearization_grid(model: SurfaceModel, v: UnitVector, grid: Sequence[Point],
                       tol: Optional[float] = None, half_width: float = 1.0,
                       threads: Optional[int] = None) -> List[LinearizationSample]:
    """E_v(p) over the grid; each worker traces the horocycle chart of v once."""
    return GridRunner(threads).run(partial(_linearize_point, model, v, tol, half_width),
                                   list(grid))


def determinant_grid(model: SurfaceModel, v: UnitVector, grid: Sequence[Point],
                     tol: Optional[float] = None, threads: Optional[int] = None) -> List[float]:
    """det dE_v(p) over the grid."""
    return GridRunner(threads).run(partial(_determinant_point, model, v, tol), list(grid))
