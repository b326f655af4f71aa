"""
Magnetic flow laboratory
Command-line entry point: runs one pipeline and writes its CSV/JSON data.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

# Add current directory to path to ensure local imports work
sys.path.insert(0, str(Path(__file__).parent))

from dynamics import integrate_flow, stability_data
from errors import ConfigError, ExportError, MagflowError
from exporter import ResultExporter
from geometry import SurfaceModel
from gridrunner import busemann_grid, linearization_grid
from horocycle import trace_horocycle
from invariants import InvariantSuite
from model_parser import ModelSpecParser, parse_grid, parse_map, parse_point, parse_vector
from models import RunConfig, UnitVector
from spectrum import build_quotient, find_periodic_orbit, periodic_lyapunov
from transfer import linearization_match, stable_transfer, transverse_blowup, unstable_transfer

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_NUMERIC = 3
EXIT_SUITE = 4

COMMANDS = ('orbit', 'stability', 'horocycle', 'busemann', 'transfer', 'linearize', 'match',
            'periodic', 'verify', 'blowup')


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='magflow',
        description='Magnetic flows on perturbed hyperbolic planes: orbits, horocycles, '
                    'transfer functions, linearizations and closed-orbit exponents.')
    parser.add_argument('command', choices=COMMANDS)
    parser.add_argument('--model', required=True, help='model specification file')
    parser.add_argument('--model2', help='second model for match (default: image under --map)')
    parser.add_argument('--map', help="similarity 'scale,shift' for match")
    parser.add_argument('--v', help="unit vector 'x,y,angle'")
    parser.add_argument('--vprime', help="second vector 'x,y,angle' (point 'x,y' for blowup)")
    parser.add_argument('--t', type=float, default=1.0, help='flow time')
    parser.add_argument('--tol', type=float, help='accuracy target overriding the defaults')
    parser.add_argument('--horizon', type=float, default=10.0, help='time horizon')
    parser.add_argument('--grid', help="grid 'x0:x1:nx,y0:y1:ny'")
    parser.add_argument('--ell', type=float, help='translation length of the quotient generator')
    parser.add_argument('--half-width', type=float, default=1.0,
                        help='horocycle parameter range on each side of s = 0')
    parser.add_argument('--samples', type=int, default=20, help='random samples per check')
    parser.add_argument('--grid-size', type=int, default=50,
                        help='points per axis of the verify determinant and injectivity grids')
    parser.add_argument('--threads', type=int, help='worker processes (capped by MAGFLOW_THREADS)')
    parser.add_argument('--out', help='output file (default: standard output)')
    parser.add_argument('--format', dest='output_format', choices=('csv', 'json'), default='csv')
    parser.add_argument('--verbose', action='store_true', help='debug logging on standard error')
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """Assemble a RunConfig and validate the numeric flags."""
    if args.tol is not None and not 0.0 < args.tol < 1.0:
        raise ConfigError(f"--tol must lie in (0, 1), got {args.tol}")
    if args.samples < 1:
        raise ConfigError("--samples must be positive")
    if args.half_width <= 0.0:
        raise ConfigError("--half-width must be positive")
    return RunConfig(command=args.command, model_path=args.model, model2_path=args.model2,
                     v=args.v, vprime=args.vprime, map=args.map, ell=args.ell,
                     half_width=args.half_width, grid_size=args.grid_size, tol=args.tol,
                     t=args.t, horizon=args.horizon, out=args.out,
                     output_format=args.output_format, samples=args.samples, grid=args.grid,
                     threads=args.threads, verbose=args.verbose)


class Runner:
    """Executes one subcommand for a RunConfig."""

    def __init__(self, config: RunConfig):
        """Initialize the runner and load the model."""
        self.config = config
        self.parser = ModelSpecParser()
        self.model = self._load(config.model_path)
        self.exporter = ResultExporter(config.output_format)
        self.handlers: Dict[str, Callable[[], int]] = {
            'orbit': self.orbit,
            'stability': self.stability,
            'horocycle': self.horocycle,
            'busemann': self.busemann,
            'transfer': self.transfer,
            'linearize': self.linearize,
            'match': self.match,
            'periodic': self.periodic,
            'verify': self.verify,
            'blowup': self.blowup,
        }

    def _load(self, path: str) -> SurfaceModel:
        try:
            return self.parser.parse_file(path)
        except FileNotFoundError as e:
            raise ConfigError(str(e))

    def _vector(self, text: Optional[str], flag: str) -> UnitVector:
        if text is None:
            raise ConfigError(f"{self.config.command} needs {flag}")
        return parse_vector(text)

    def _grid(self):
        if self.config.grid is None:
            raise ConfigError(f"{self.config.command} needs --grid")
        return parse_grid(self.config.grid)

    def _done(self, ok: bool) -> int:
        if not ok:
            raise ExportError(f"Could not write {self.config.command} results to "
                              f"{self.config.out or 'standard output'}")
        return EXIT_OK

    def run(self) -> int:
        if self.config.out is not None:
            valid, message = self.exporter.validate_export_path(self.config.out)
            if not valid:
                raise ConfigError(message)
        return self.handlers[self.config.command]()

    def orbit(self) -> int:
        v = self._vector(self.config.v, '--v')
        segment = integrate_flow(self.model, v, (0.0, self.config.t), tol=self.config.tol)
        return self._done(self.exporter.export_orbit(self.model, segment, self.config.out))

    def stability(self) -> int:
        v = self._vector(self.config.v, '--v')
        return self._done(self.exporter.export_stability(
            stability_data(self.model, v, self.config.tol), self.config.out))

    def horocycle(self) -> int:
        v = self._vector(self.config.v, '--v')
        curve = trace_horocycle(self.model, v, self.config.half_width, self.config.tol)
        nodes = list(zip(map(float, curve.x), map(float, curve.y)))
        rows = busemann_grid(self.model, v, nodes, threads=self.config.threads)
        residuals = [abs(row[2]) for row in rows]
        return self._done(self.exporter.export_horocycle(curve, residuals, self.config.out))

    def busemann(self) -> int:
        v = self._vector(self.config.v, '--v')
        rows = busemann_grid(self.model, v, self._grid(), self.config.tol, self.config.threads)
        return self._done(self.exporter.export_busemann_grid(rows, self.config.out))

    def transfer(self) -> int:
        v = self._vector(self.config.v, '--v')
        v_prime = self._vector(self.config.vprime, '--vprime')
        record = {
            'stable': stable_transfer(self.model, v, v_prime, self.config.tol).to_dict(),
            'unstable': unstable_transfer(self.model, v, v_prime, self.config.tol).to_dict(),
        }
        return self._done(self.exporter.export_record(record, self.config.out))

    def linearize(self) -> int:
        v = self._vector(self.config.v, '--v')
        samples = linearization_grid(self.model, v, self._grid(), self.config.tol,
                                     self.config.half_width, self.config.threads)
        return self._done(self.exporter.export_linearization(samples, self.config.out))

    def match(self) -> int:
        v1 = self._vector(self.config.v, '--v')
        scale, shift = parse_map(self.config.map) if self.config.map else (1.0, 0.0)
        if self.config.model2_path:
            model2 = self._load(self.config.model2_path)
        else:
            model2 = self.model.transformed(scale, shift)
        if self.config.vprime:
            v2 = parse_vector(self.config.vprime)
        else:
            v2 = UnitVector((scale * v1.x + shift, scale * v1.y), v1.angle)
        report = linearization_match(self.model, model2,
                                     lambda p: (scale * p[0] + shift, scale * p[1]),
                                     v1, v2, self._grid(), self.config.tol,
                                     self.config.half_width)
        if report.sup_residual > 1e-4:
            logger.warning(f"Linearizations differ by up to {report.sup_residual:.3e} "
                           f"at {report.argmax}")
        return self._done(self.exporter.export_record(report.to_dict(), self.config.out))

    def periodic(self) -> int:
        ell = self.config.ell if self.config.ell is not None else self.model.period
        if ell is None:
            raise ConfigError("periodic needs --ell or a model with a period")
        quotient = build_quotient(self.model, ell)
        orbit = find_periodic_orbit(quotient, self.config.tol or 1e-10)
        orbit = periodic_lyapunov(quotient, orbit)
        record = {
            'ell': ell,
            'kappaSpec': kappa_spec(self.model),
            'T': orbit.period,
            'offset': orbit.offset,
            'lambdaMinus': orbit.lambda_minus,
            'lambdaPlus': orbit.lambda_plus,
            'multiplier': orbit.multiplier,
            'residual': orbit.residual,
        }
        return self._done(self.exporter.export_record(record, self.config.out))

    def verify(self) -> int:
        suite = InvariantSuite(self.model, self.config.tol or 1e-8)
        suite.set_sample_count(self.config.samples)
        suite.set_grid_size(self.config.grid_size)
        suite.set_threads(self.config.threads)
        if self.config.ell is not None:
            suite.set_translation_length(self.config.ell)
        rows = suite.run()
        self._done(self.exporter.export_suite(rows, self.config.out))
        summary = suite.get_summary()
        logger.info(f"{summary['passed']}/{summary['checks']} checks passed")
        return EXIT_OK if suite.all_passed else EXIT_SUITE

    def blowup(self) -> int:
        v = self._vector(self.config.v, '--v')
        if self.config.vprime is None:
            raise ConfigError("blowup needs --vprime with the point 'x,y' on the unstable side")
        q = parse_point(','.join(self.config.vprime.split(',')[:2]))
        times = [float(t) for t in np.linspace(0.0, -abs(self.config.horizon), self.config.samples)]
        rows = transverse_blowup(self.model, v, q, times, self.config.tol, self.config.half_width)
        return self._done(self.exporter.export_table(['t', 'E_trans'], rows, self.config.out))


def kappa_spec(model: SurfaceModel) -> str:
    """Short description of the magnetic field used in reports."""
    if model.has_constant_kappa:
        return f"constant:{model.kappa_base:g}"
    parts: List[str] = []
    for bump in model.kappa_bumps:
        parts.append(f"bump:{bump.amplitude:g},{bump.center[0]:g},{bump.center[1]:g},"
                     f"{bump.radius:g}")
    base = f"constant:{model.kappa_base:g}+" if model.kappa_base else ""
    return base + "+".join(parts)


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format='%(levelname)s %(name)s: %(message)s', stream=sys.stderr)
    try:
        return Runner(config_from_args(args)).run()
    except MagflowError as e:
        print(json.dumps(e.to_record()), file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        print(json.dumps({"error": "Interrupted", "message": "Interrupted by user"}),
              file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
