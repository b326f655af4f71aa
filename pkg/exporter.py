"""
CSV and JSON export of orbits, stability data, horocycles and reports.

Numbers are written with 17 significant digits and files carry no
timestamps, so identical runs produce identical files.
"""
import csv
import json
import logging
import math
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from dynamics import OrbitSegment, q_value
from geometry import SurfaceModel
from models import HorocycleCurve, LinearizationSample, StabilityData, SuiteRow

logger = logging.getLogger(__name__)


def format_number(value) -> str:
    """17 significant digits, '.' decimal; non-finite values are rejected."""
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"Refusing to export non-finite value {value}")
    return format(value, '.17g')


def to_json(value) -> str:
    """Serialize nested dicts/lists with every float in 17-digit form."""
    if value is None:
        return 'null'
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, dict):
        items = (f"{json.dumps(str(k))}: {to_json(v)}" for k, v in value.items())
        return '{' + ', '.join(items) + '}'
    if isinstance(value, (list, tuple, np.ndarray)):
        return '[' + ', '.join(to_json(v) for v in value) + ']'
    return format_number(value)


class ResultExporter:
    """Writes laboratory results to CSV or JSON files (or standard output)."""

    def __init__(self, output_format: str = 'csv'):
        """Initialize the exporter with the format used for tabular results."""
        if output_format not in ('csv', 'json'):
            raise ValueError(f"Unsupported output format: {output_format}")
        self.output_format = output_format

    @contextmanager
    def _open(self, file_path: Optional[str]):
        if file_path is None:
            yield sys.stdout
            return
        with open(file_path, 'w', newline='', encoding='utf-8') as file:
            yield file

    def export_table(self, headers: Sequence[str], rows: Iterable[Sequence],
                     file_path: Optional[str]) -> bool:
        """
        Export rows under ``headers`` in the configured format.

        JSON output is a list of records keyed by the headers.

        Returns:
            True if export successful, False otherwise
        """
        try:
            formatted = [[format_number(v) if not isinstance(v, str) else v for v in row]
                         for row in rows]
            with self._open(file_path) as file:
                if self.output_format == 'csv':
                    writer = csv.writer(file, lineterminator='\n')
                    writer.writerow(headers)
                    writer.writerows(formatted)
                else:
                    records = [dict(zip(headers, row)) for row in rows]
                    file.write(to_json(records) + '\n')
            return True
        except (OSError, ValueError) as e:
            logger.error(f"Error exporting table to {file_path or 'stdout'}: {e}")
            return False

    def export_record(self, record: Dict, file_path: Optional[str]) -> bool:
        """Export one JSON record."""
        try:
            text = to_json(record)
            with self._open(file_path) as file:
                file.write(text + '\n')
            return True
        except (OSError, ValueError) as e:
            logger.error(f"Error exporting record to {file_path or 'stdout'}: {e}")
            return False

    def export_orbit(self, model: SurfaceModel, orbit: OrbitSegment,
                     file_path: Optional[str]) -> bool:
        """Orbit nodes with columns t, x, y, angle, kappa, q."""
        rows = []
        for t, (x, y, phi) in zip(orbit.t, orbit.states):
            rows.append([t, x, y, phi, model.kappa(x, y), q_value(model, x, y, phi)])
        return self.export_table(['t', 'x', 'y', 'angle', 'kappa', 'q'], rows, file_path)

    def export_stability(self, data: StabilityData, file_path: Optional[str]) -> bool:
        return self.export_record(data.to_dict(), file_path)

    def export_horocycle(self, curve: HorocycleCurve, busemann_residuals: Sequence[float],
                         file_path: Optional[str]) -> bool:
        """Horocycle nodes with the Busemann level residual |B_v(c(s))| of each node."""
        headers = ['s', 'x', 'y', 'angle', 'wMinus', 'kappaMinus', 'busemannResidual',
                   'arcLength']
        rows = zip(curve.s, curve.x, curve.y, curve.angle, curve.w_minus, curve.kappa_minus,
                   busemann_residuals, curve.arc_length)
        return self.export_table(headers, list(rows), file_path)

    def export_busemann_grid(self, values: List[Tuple[float, float, float]],
                             file_path: Optional[str]) -> bool:
        return self.export_table(['px', 'py', 'busemann'], values, file_path)

    def export_linearization(self, samples: Sequence[LinearizationSample],
                             file_path: Optional[str]) -> bool:
        rows = [[s.point[0], s.point[1], s.longitudinal, s.transverse, s.error_estimate]
                for s in samples]
        return self.export_table(['px', 'py', 'E_long', 'E_trans', 'err'], rows, file_path)

    def export_suite(self, rows: Sequence[SuiteRow], file_path: Optional[str]) -> bool:
        """Invariant suite report, one line per check."""
        table = [[row.name, row.measured if math.isfinite(row.measured) else str(row.measured),
                  row.threshold, 'pass' if row.passed else 'FAIL', row.detail] for row in rows]
        return self.export_table(['check', 'measured', 'threshold', 'status', 'detail'],
                                 table, file_path)

    def validate_export_path(self, file_path: str) -> Tuple[bool, str]:
        """
        Validate that the export path is writable.

        Args:
            file_path: Path to validate

        Returns:
            Tuple of (is_valid, error_message)
        """
        path = Path(file_path)
        if path.is_dir():
            return False, f"Export path is a directory: {path}"
        if not path.parent.exists():
            return False, f"Directory does not exist: {path.parent}"
        marker = path.parent / f".{path.name}.marker"
        try:
            marker.touch()
            marker.unlink()
            return True, "Path is valid and writable"
        except PermissionError:
            return False, f"No write permission for directory: {path.parent}"
        except OSError as e:
            return False, f"Invalid path: {e}"
