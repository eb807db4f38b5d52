"""Deterministic CSV / JSON output and run manifests."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import platform
from pathlib import Path
from typing import Iterable, Mapping, Sequence


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def csv_text(rows: Sequence[Mapping], columns: Sequence[str] | None = None) -> str:
    """Comma-separated text with a header row and LF line endings.

    Floats are written with ``repr`` so the text round-trips exactly and is
    byte-identical across runs.
    """
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


def write_csv(path, rows: Sequence[Mapping], columns: Sequence[str] | None = None) -> Path:
    p = Path(path)
    p.write_text(csv_text(rows, columns), newline="")
    return p


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, Mapping):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _jsonable(obj.tolist())
    return obj


def json_text(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> Path:
    p = Path(path)
    p.write_text(json_text(obj), newline="")
    return p


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    return sha256_bytes(Path(path).read_bytes())


def versions() -> dict:
    import numpy
    import scipy

    from . import __version__

    return {
        "galton_dnp": __version__,
        "python": platform.python_version(),
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
    }


def write_manifest(out_dir, command: str, inputs: Mapping, seed: int, outputs: Iterable) -> Path:
    """Record what produced the files in ``out_dir``.

    No timestamps, so identical runs give identical manifests.
    """
    out_dir = Path(out_dir)
    manifest = {
        "command": command,
        "seed": seed,
        "inputs": _jsonable(inputs),
        "inputs_sha256": sha256_bytes(json_text(inputs).encode()),
        "versions": versions(),
        "outputs": {Path(p).name: sha256_file(p) for p in sorted(map(str, outputs))},
    }
    return write_json(out_dir / "manifest.json", manifest)
