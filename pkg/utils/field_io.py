#!/usr/bin/env python3
"""
utils/field_io.py - Snapshot and artifact files

Binary field snapshots (little-endian header + row-major float64 payload)
with a JSON sidecar, and the CSV / JSON writers used by every experiment.
"""

import csv
import json
import logging
import math
import os
import struct
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from axifield import AxiGrid, AxiScalarField
from config import AppConstants
from utils.errors import SnapshotFormatError

logger = logging.getLogger(__name__)

# r_min, r_max, z_min, z_max as <f8 then n_r, n_z as <i8
HEADER_FORMAT = "<4d2q"
HEADER_SIZE = struct.calcsize(HEADER_FORMAT)
SIDECAR_SUFFIX = ".json"


@dataclass
class FieldSnapshot:
    """A field plus the metadata stored in its sidecar"""
    field: AxiScalarField
    metadata: Dict[str, Any] = field(default_factory=dict)


def write_snapshot(path: str, scalar: AxiScalarField, metadata: Optional[Dict[str, Any]] = None) -> None:
    """Write the binary snapshot and its JSON sidecar"""
    g = scalar.grid
    header = struct.pack(HEADER_FORMAT, g.r_min, g.r_max, g.z_min, g.z_max, g.n_r, g.n_z)
    payload = np.ascontiguousarray(scalar.values, dtype="<f8").tobytes(order="C")

    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)

    sidecar = {"grid": g.to_dict(), "dtype": "<f8", "order": "row-major (r, z)"}
    sidecar.update(metadata or {})
    write_json(path + SIDECAR_SUFFIX, sidecar)
    logger.debug(f"Snapshot written to {path}")


def read_snapshot(path: str) -> FieldSnapshot:
    """Load a snapshot, rejecting payloads whose length disagrees with the header"""
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise SnapshotFormatError(f"cannot read snapshot {path}: {e}", path=path)

    if len(blob) < HEADER_SIZE:
        raise SnapshotFormatError("snapshot shorter than its header", path=path, size=len(blob))
    r_min, r_max, z_min, z_max, n_r, n_z = struct.unpack(HEADER_FORMAT, blob[:HEADER_SIZE])
    expected = n_r * n_z * 8
    payload = blob[HEADER_SIZE:]
    if n_r < 2 or n_z < 2 or len(payload) != expected:
        raise SnapshotFormatError("payload length does not match header",
                                  path=path, expected=expected, actual=len(payload))

    values = np.frombuffer(payload, dtype="<f8").reshape(n_r, n_z).astype(np.float64)
    grid = AxiGrid(r_min, r_max, z_min, z_max, int(n_r), int(n_z))

    metadata: Dict[str, Any] = {}
    sidecar_path = path + SIDECAR_SUFFIX
    if os.path.exists(sidecar_path):
        try:
            with open(sidecar_path, "r", encoding="utf-8") as f:
                metadata = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise SnapshotFormatError(f"unreadable sidecar: {e}", path=sidecar_path)
        if metadata.get("grid") and metadata["grid"] != grid.to_dict():
            raise SnapshotFormatError("sidecar grid disagrees with header", path=sidecar_path)

    return FieldSnapshot(field=AxiScalarField(grid, values), metadata=metadata)


def format_float(value: Any) -> str:
    """17 significant digits so CSV round-trips bit for bit"""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return AppConstants.CSV_FLOAT_FORMAT.format(value)


class CsvLog:
    """Fixed-column CSV writer for per-step series"""

    def __init__(self, path: str, columns: Sequence[str]):
        self.path = path
        self.columns = list(columns)
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        self._file = open(path, "w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._file, lineterminator="\n")
        self._writer.writerow(self.columns)

    def write(self, row: Dict[str, Any]) -> None:
        self._writer.writerow([format_float(row.get(column)) for column in self.columns])

    def close(self) -> None:
        if not self._file.closed:
            self._file.close()

    def __enter__(self) -> "CsvLog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_json(path: str, document: Dict[str, Any]) -> None:
    """Write a JSON document with sorted keys and non-finite floats as strings"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(to_jsonable(document), f, indent=2, sort_keys=True)


def to_jsonable(value: Any) -> Any:
    """Convert numpy scalars / arrays and non-finite floats for JSON output"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isfinite(value):
            return value
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    return value


def read_csv_columns(path: str) -> Dict[str, List[float]]:
    """Read a CSV written by CsvLog back into float columns"""
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        columns: Dict[str, List[float]] = {name: [] for name in header}
        for row in reader:
            for name, cell in zip(header, row):
                columns[name].append(float(cell) if cell else float("nan"))
    return columns
