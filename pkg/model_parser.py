"""
Parser for model specification files and command-line value strings.

A model file holds ``key = value`` lines; ``#`` starts a comment. Example::

    chart = halfplane
    label = perturbed
    epsilon = 0.05
    bump_center = 0,1.5
    bump_radius = 2
    kappa = bump:0.3,0,1.5,2
"""
import re
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from errors import ConfigError, MagflowError
from geometry import Bump, SurfaceModel, build_model
from models import Point, UnitVector

LINE_PATTERN = re.compile(r'^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*?)\s*$')
GRID_PATTERN = re.compile(r'^\s*([^:]+):([^:]+):(\d+)\s*$')

KNOWN_KEYS = {'chart', 'label', 'epsilon', 'bump_center', 'bump_radius', 'kappa',
              'kappa_base', 'period', 'box'}


def _floats(text: str, count: Optional[int], what: str) -> List[float]:
    parts = [part.strip() for part in text.split(',')]
    if count is not None and len(parts) != count:
        raise ConfigError(f"{what} needs {count} comma-separated numbers, got '{text}'")
    try:
        values = [float(part) for part in parts]
    except ValueError:
        raise ConfigError(f"{what} is not numeric: '{text}'")
    if not all(np.isfinite(values)):
        raise ConfigError(f"{what} must be finite: '{text}'")
    return values


def parse_vector(text: str) -> UnitVector:
    """Parse ``"x,y,angle"`` into a unit vector."""
    x, y, angle = _floats(text, 3, "Vector")
    if y <= 0.0:
        raise ConfigError(f"Vector base point must have y > 0: '{text}'")
    return UnitVector((x, y), angle)


def parse_point(text: str) -> Point:
    x, y = _floats(text, 2, "Point")
    if y <= 0.0:
        raise ConfigError(f"Point must have y > 0: '{text}'")
    return x, y


def parse_grid(text: str) -> List[Point]:
    """
    Parse ``"x0:x1:nx,y0:y1:ny"`` into grid points, rows ordered by y then x.

    Raises:
        ConfigError: If the string is malformed or a count is zero
    """
    axes = text.split(',')
    if len(axes) != 2:
        raise ConfigError(f"Grid must look like 'x0:x1:nx,y0:y1:ny', got '{text}'")
    ranges = []
    for axis in axes:
        match = GRID_PATTERN.match(axis)
        if not match:
            raise ConfigError(f"Malformed grid axis '{axis}'")
        lo, hi = _floats(f"{match.group(1)},{match.group(2)}", 2, "Grid range")
        count = int(match.group(3))
        if count < 1:
            raise ConfigError(f"Grid axis '{axis}' has no points")
        ranges.append(np.linspace(lo, hi, count))
    xs, ys = ranges
    if np.any(ys <= 0.0):
        raise ConfigError("Grid rows must have y > 0")
    return [(float(x), float(y)) for y in ys for x in xs]


def parse_map(text: str) -> Tuple[float, float]:
    """Parse ``"scale,shift"`` for the similarity z -> scale * z + shift."""
    scale, shift = _floats(text, 2, "Map")
    if scale <= 0.0:
        raise ConfigError(f"Map scale must be positive: '{text}'")
    return scale, shift


class ModelSpecParser:
    """Reads surface models from key/value specification files."""

    def __init__(self):
        """Initialize the parser."""
        self.supported_extensions = {'.cfg', '.txt', '.ini'}

    def parse_file(self, file_path: str) -> SurfaceModel:
        """
        Parse a model file and build the certified model.

        Args:
            file_path: Path to the model specification

        Returns:
            SurfaceModel with certified pinching bounds

        Raises:
            FileNotFoundError: If the file doesn't exist
            ConfigError: If the file is malformed
            ModelError: If the model fails pinching validation
        """
        path = Path(file_path)

        if not path.exists():
            raise FileNotFoundError(f"Model file not found: {file_path}")

        if path.suffix.lower() not in self.supported_extensions:
            raise ConfigError(f"Unsupported model file extension: {path.suffix}")

        with open(file_path, 'r', encoding='utf-8') as file:
            entries = self.parse_lines(file.read().splitlines())
        entries.setdefault('label', path.stem)
        return self.build(entries)

    def parse_lines(self, lines: List[str]) -> Dict[str, str]:
        """Collect ``key = value`` entries; later entries win."""
        entries = {}
        for line_num, raw in enumerate(lines, 1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            match = LINE_PATTERN.match(line)
            if not match:
                raise ConfigError(f"Line {line_num}: expected 'key = value', got '{raw.strip()}'")
            key, value = match.group(1).lower(), match.group(2)
            if key not in KNOWN_KEYS:
                raise ConfigError(f"Line {line_num}: unknown key '{key}'")
            entries[key] = value
        return entries

    def build(self, entries: Dict[str, str]) -> SurfaceModel:
        """Turn parsed entries into a model."""
        chart = entries.get('chart', 'halfplane').lower()
        if chart != 'halfplane':
            raise ConfigError(f"Unsupported chart '{chart}'; only 'halfplane' is available")

        epsilon = self._number(entries, 'epsilon', 0.0)
        bump_center = parse_point(entries['bump_center']) if 'bump_center' in entries else None
        bump_radius = self._number(entries, 'bump_radius', 2.0)
        if epsilon != 0.0 and bump_center is None:
            raise ConfigError("'epsilon' needs a 'bump_center'")

        kappa_base = self._number(entries, 'kappa_base', 0.0)
        kappa_bumps: Tuple[Bump, ...] = ()
        if 'kappa' in entries:
            kind, _, rest = entries['kappa'].partition(':')
            kind = kind.strip().lower()
            if kind == 'constant':
                kappa_base = _floats(rest, 1, "kappa constant")[0]
            elif kind == 'bump':
                amplitude, cx, cy, radius = _floats(rest, 4, "kappa bump")
                kappa_bumps = (self._bump((cx, cy), radius, amplitude),)
            else:
                raise ConfigError(f"kappa must be 'constant:<v>' or 'bump:<a>,<cx>,<cy>,<R>', "
                                  f"got '{entries['kappa']}'")

        period = self._number(entries, 'period', None)
        box = tuple(_floats(entries['box'], 4, "box")) if 'box' in entries else None
        if box is not None and (box[0] >= box[1] or not 0.0 < box[2] < box[3]):
            raise ConfigError(f"box must satisfy x0 < x1 and 0 < y0 < y1: {box}")

        options = {'box': box} if box is not None else {}
        try:
            return build_model(label=entries.get('label', 'model'), epsilon=epsilon,
                               bump_center=bump_center, bump_radius=bump_radius,
                               kappa_base=kappa_base, kappa_bumps=kappa_bumps,
                               period=period, **options)
        except MagflowError:
            raise
        except ValueError as e:
            raise ConfigError(f"Invalid model: {e}")

    @staticmethod
    def _bump(center: Point, radius: float, amplitude: float) -> Bump:
        if center[1] <= 0.0 or radius <= 0.0:
            raise ConfigError(f"Invalid kappa bump centre {center} or radius {radius}")
        return Bump(center, radius, amplitude)

    @staticmethod
    def _number(entries: Dict[str, str], key: str, default):
        if key not in entries:
            return default
        return _floats(entries[key], 1, key)[0]

    def validate_file_format(self, file_path: str) -> Tuple[bool, str]:
        """
        Validate if a model file can be parsed and certified.

        Args:
            file_path: Path to file to validate

        Returns:
            Tuple of (is_valid, message)
        """
        try:
            model = self.parse_file(file_path)
            bounds = model.bounds
            return True, (f"Model '{model.label}' certified: q1 = {bounds.q1:.6g}, "
                          f"q0 = {bounds.q0:.6g}")
        except (FileNotFoundError, MagflowError) as e:
            return False, str(e)
