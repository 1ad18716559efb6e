"""
Report emission for CLI runs.
Owns the output directory and stamps every document with the run header.
"""
import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Sequence

import numpy as np

from lib import TOOL_NAME, __version__

logger = logging.getLogger(__name__)


def _plain(value: Any) -> Any:
    """Convert numpy scalars and arrays for json.dumps."""
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


class ReportWriter:
    """
    Writes JSON and CSV reports into one output directory.

    Output is a pure function of the payload and run header: keys are
    sorted and nothing time-dependent is written.
    """

    def __init__(self, out_dir: str, config_hash: str, seed: int, report_format: str = "json"):
        """
        Initialize the writer.

        Args:
            out_dir: Directory receiving the reports (created on first write)
            config_hash: Hash of the run configuration
            seed: Root seed of the run
            report_format: json or csv for tabular reports
        """
        self.out_dir = Path(out_dir)
        self.config_hash = config_hash
        self.seed = seed
        self.report_format = report_format
        self.written = []

    @property
    def header(self) -> Dict[str, Any]:
        return {
            'tool': TOOL_NAME,
            'version': __version__,
            'config_hash': self.config_hash,
            'seed': self.seed,
        }

    def _path(self, filename: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / filename
        self.written.append(path)
        return path

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        """Write {"meta": header, "data": payload} to <name>.json."""
        path = self._path(f"{name}.json")
        document = {'meta': self.header, 'data': payload}
        with open(path, 'w') as f:
            f.write(json.dumps(document, sort_keys=True, indent=2, default=_plain))
            f.write("\n")
        logger.debug(f"Wrote {path}")
        return path

    def write_csv(self, name: str, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        """Write <name>.csv with a commented header line carrying the run header."""
        path = self._path(f"{name}.csv")
        meta = " ".join(f"{key}={value}" for key, value in sorted(self.header.items()))
        with open(path, 'w', newline='') as f:
            f.write(f"# {meta}\n")
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow(["" if v is None else v for v in row])
        logger.debug(f"Wrote {path}")
        return path

    def emit(self, name: str, payload: Dict[str, Any],
             columns: Optional[Sequence[str]] = None,
             rows: Optional[Iterable[Sequence[Any]]] = None) -> Path:
        """Write the report in the configured format; CSV only when a table is given."""
        if self.report_format == "csv" and columns is not None and rows is not None:
            return self.write_csv(name, columns, rows)
        return self.write_json(name, payload)

    def __repr__(self) -> str:
        return f"ReportWriter(out_dir='{self.out_dir}', format='{self.report_format}')"


def read_payload(path: str) -> Dict[str, Any]:
    """
    Load a document written by write_json (or a bare JSON object).

    Raises:
        FileNotFoundError: If the file doesn't exist
        json.JSONDecodeError: If the file is not valid JSON
    """
    with open(path, 'r') as f:
        document = json.load(f)
    if isinstance(document, dict) and 'data' in document and 'meta' in document:
        return document['data']
    return document
