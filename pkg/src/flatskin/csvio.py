"""Deterministic CSV and manifest writers.

Floats are written with ``%.17g`` (round-trip exact), NaN as ``nan``, and no
timestamps anywhere, so reruns with the same configuration are byte-identical.
"""
from __future__ import annotations

import hashlib
import json
import math
import platform
from pathlib import Path

import numpy as np

MANIFEST = "manifest.json"


def _fmt(x):
    if isinstance(x, str):
        return x
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    return "nan" if math.isnan(x) else "%.17g" % x


def format_row(row):
    return ",".join(_fmt(x) for x in row)


def write_csv(path, header, rows, meta=None):
    """``meta`` items become leading ``# key: value`` lines, in sorted order."""
    path = Path(path)
    lines = [f"# {k}: {meta[k]}" for k in sorted(meta)] if meta else []
    lines.append(",".join(header))
    lines.extend(format_row(r) for r in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return path


def read_csv(path):
    """Return ``(meta, header, rows)`` with rows as lists of strings."""
    meta, header, rows = {}, None, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(":")
            meta[key.strip()] = value.strip()
        elif header is None:
            header = line.split(",")
        elif line:
            rows.append(line.split(","))
    return meta, header, rows


def sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def versions():
    import numpy
    import scipy

    from . import __version__
    from ._accel import backend

    return {"flatskin": __version__, "numpy": numpy.__version__, "scipy": scipy.__version__,
            "python": platform.python_version(), "kernels": backend()}


def write_manifest(out_dir, config, files, command):
    out_dir = Path(out_dir)
    doc = {
        "command": command,
        "config": config,
        "versions": versions(),
        "files": {Path(f).name: sha256(f) for f in sorted(files, key=lambda f: Path(f).name)},
    }
    path = out_dir / MANIFEST
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def verify_manifest(out_dir):
    """Map of file name to ``ok`` / ``changed`` / ``missing``."""
    out_dir = Path(out_dir)
    doc = json.loads((out_dir / MANIFEST).read_text(encoding="utf-8"))
    status = {}
    for name, digest in doc["files"].items():
        f = out_dir / name
        if not f.exists():
            status[name] = "missing"
        else:
            status[name] = "ok" if sha256(f) == digest else "changed"
    return status
