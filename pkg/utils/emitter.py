"""
Artifact emitter.

All CSV and JSON outputs of a run go through one ArtifactEmitter so that writes
are serialized and byte-stable: CSV with 17 significant digits and CRLF line
endings, JSON with sorted keys and a schema_version field.
"""

import json
import logging
import math
import threading
from pathlib import Path
from typing import Any, Dict, List, Mapping, Sequence, Union

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
FLOAT_FORMAT = "%.17g"


def canonical(obj: Any) -> Any:
    """
    Convert an object into plain JSON types.

    numpy scalars and arrays become Python numbers and lists, paths become
    POSIX strings, non-finite floats become "inf", "-inf" or "nan".
    """
    if isinstance(obj, Mapping):
        return {str(k): canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [canonical(x) for x in obj]
    if isinstance(obj, np.ndarray):
        return [canonical(x) for x in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(obj, Path):
        return obj.as_posix()
    return obj


class ArtifactEmitter:
    """Writes run artifacts under one output directory."""

    def __init__(self, output_dir: Union[str, Path]) -> None:
        """
        Initialize the emitter.

        Args:
            output_dir: Directory for artifacts; created if missing.
        """
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self.written: List[Path] = []

    def path(self, name: str) -> Path:
        return self.output_dir / name

    def write_frame(self, name: str, frame: pd.DataFrame) -> Path:
        """Write a DataFrame as RFC-4180 CSV with 17 significant digits."""
        target = self.path(name)
        with self._lock:
            frame.to_csv(target, index=False, float_format=FLOAT_FORMAT, lineterminator="\r\n")
            self.written.append(target)
        logger.info(f"Wrote {target} ({len(frame)} rows)")
        return target

    def write_table(self, name: str, columns: Mapping[str, Sequence[Any]]) -> Path:
        """Write named columns (kept in the given order) as CSV."""
        return self.write_frame(name, pd.DataFrame({key: list(values) for key, values in columns.items()}))

    def write_json(self, name: str, payload: Dict[str, Any]) -> Path:
        """Write a JSON report; schema_version is added when absent."""
        document = canonical(payload)
        document.setdefault("schema_version", SCHEMA_VERSION)
        text = json.dumps(document, sort_keys=True, indent=2, ensure_ascii=True) + "\n"
        target = self.path(name)
        with self._lock:
            target.write_text(text, encoding="utf-8")
            self.written.append(target)
        logger.info(f"Wrote {target}")
        return target
