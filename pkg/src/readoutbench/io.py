"""Atomic file output: CSV tables, deterministic JSON archives, run manifests."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

CSV_DIGITS = 12


def atomic_write(path: str | Path, data: bytes) -> Path:
    """Write to a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), f".{CSV_DIGITS}g")
    return str(v)


def csv_text(records: Sequence[dict], columns: Sequence[str]) -> str:
    """Header row then one row per record; every record must have exactly ``columns``."""
    cols = list(columns)
    for i, r in enumerate(records):
        if set(r) != set(cols):
            raise ValueError(f"record {i} has keys {sorted(r)}, expected {sorted(cols)}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in records:
        w.writerow([_cell(r[c]) for c in cols])
    return buf.getvalue()


def emit_csv(path: str | Path, records: Sequence[dict], columns: Sequence[str]) -> Path:
    return atomic_write(path, csv_text(records, columns).encode("utf-8"))


def read_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def to_plain(obj: Any) -> Any:
    """JSON-safe copy: numpy scalars unwrapped, complex as [re, im], NaN as null."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def json_bytes(obj: Any) -> bytes:
    return (json.dumps(to_plain(obj), sort_keys=True, indent=2, allow_nan=False)
            + "\n").encode("utf-8")


def emit_json(path: str | Path, obj: Any) -> Path:
    return atomic_write(path, json_bytes(obj))


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    config: dict
    version: str
    seed: int
    started: str
    finished: str = ""
    files: list[dict] = field(default_factory=list)

    def add(self, path: Path, root: Path, role: str) -> None:
        self.files.append({"path": str(path.relative_to(root)), "role": role,
                           "sha256": sha256_file(path), "bytes": path.stat().st_size})

    def paths(self) -> list[str]:
        return [f["path"] for f in self.files]

    def to_json(self) -> dict:
        return {"config": self.config, "version": self.version, "seed": self.seed,
                "started": self.started, "finished": self.finished, "files": self.files}

    def verify(self, root: str | Path) -> list[str]:
        """Paths whose current digest differs from the recorded one."""
        root = Path(root)
        return [f["path"] for f in self.files
                if not (root / f["path"]).is_file()
                or sha256_file(root / f["path"]) != f["sha256"]]


def append_line(path: Path, obj: Any) -> None:
    """Append one JSON line; earlier lines are never rewritten."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(to_plain(obj), sort_keys=True) + "\n")
