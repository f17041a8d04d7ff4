"""
Report Service
CSV/JSON writers confined to one output directory, plus the compare report
"""

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

from .errors import ConfigurationError, _jsonable

logger = logging.getLogger(__name__)

CSV_DIGITS = 17


def format_number(value: Any) -> str:
    """17 significant digits for floats; empty cell for missing values"""
    if value is None:
        return ''
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, int):
        return str(value)
    value = float(value)
    if math.isnan(value):
        return ''
    return f"{value:.{CSV_DIGITS}g}"


def _clean(value: Any) -> Any:
    """JSON-safe copy; NaN and infinities become null"""
    value = _jsonable(value)
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_clean(v) for v in value]
    return value


class OutputDirectory:
    """
    Tracks every file a command writes so a failed run can remove them

    All paths resolve inside the configured directory; a name escaping it is
    rejected.
    """

    def __init__(self, root):
        self.root = Path(root).resolve()
        self.written: List[Path] = []
        self._created_root = False

    def path(self, name: str) -> Path:
        target = (self.root / name).resolve()
        if target.parent != self.root:
            raise ConfigurationError(f"output name {name!r} escapes {self.root}", [f"output: {name} outside directory"])
        return target

    def _prepare(self, name: str) -> Path:
        if not self.root.exists():
            self.root.mkdir(parents=True)
            self._created_root = True
        target = self.path(name)
        self.written.append(target)
        return target

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        target = self._prepare(name)
        count = 0
        with open(target, 'w', encoding='utf-8', newline='') as handle:
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_number(v) if not isinstance(v, str) else v for v in row])
                count += 1
        logger.info(f"Wrote {count} rows to {target}")
        return target

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        target = self._prepare(name)
        with open(target, 'w', encoding='utf-8', newline='\n') as handle:
            json.dump(_clean(payload), handle, indent=2, allow_nan=False)
            handle.write('\n')
        logger.info(f"Wrote {target}")
        return target

    def cleanup(self):
        """Remove every file written so far (and the directory if this run created it)"""
        for target in reversed(self.written):
            try:
                target.unlink()
                logger.warning(f"Removed partial output {target}")
            except FileNotFoundError:
                pass
        self.written.clear()
        if self._created_root:
            try:
                self.root.rmdir()
            except OSError:
                pass


def read_csv(path) -> List[Dict[str, str]]:
    with open(path, encoding='utf-8', newline='') as handle:
        return list(csv.DictReader(handle))


@dataclass
class CompareReport:
    """Everything one compare run produced, self-contained"""

    bounds: Dict[str, float]
    table: List[Dict[str, Optional[float]]]
    metrics: Dict[str, Optional[float]]
    routes: Dict[str, Dict[str, Any]]
    provenance: Dict[str, Any] = field(default_factory=dict)

    TABLE_COLUMNS = ('r', 'y_asymptotic', 'rho_s', 'nu_area', 'y_exact', 'y_empirical')

    def table_rows(self):
        for row in self.table:
            yield [row.get(column) for column in self.TABLE_COLUMNS]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)
