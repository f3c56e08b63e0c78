"""Plain-text persistence: grid files, mask files and result CSVs.

Grid file::

    nside=61
    spacing=0.016666666666666666
    model=gaussian
    seed=7
    <n*n values, row-major, 17 significant digits>

Mask files carry the same header plus ``threshold=`` and then one line of
``0``/``1`` characters per grid row.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .exceptions import DomainError
from .geometry import ExcursionMask
from .randfield import GridField, GridSpec

_GRID_KEYS = ("nside", "spacing", "model", "seed")


def _fmt(v):
    """Shortest decimal text that reads back to the same double."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _header(lines, keys, path):
    head = {}
    for k, line in zip(keys, lines):
        name, sep, val = line.partition("=")
        if not sep or name.strip() != k:
            raise DomainError(f"{path}: expected header '{k}=...', got {line.strip()!r}")
        head[k] = val.strip()
    if len(head) != len(keys):
        raise DomainError(f"{path}: truncated header")
    return head


def _spec_from(head, path):
    try:
        return GridSpec(int(head["nside"]), float(head["spacing"]))
    except ValueError as exc:
        raise DomainError(f"{path}: bad grid header ({exc})") from exc


def write_grid(path, field):
    path = Path(path)
    spec = field.spec
    lines = [f"nside={spec.n_side}", f"spacing={spec.spacing!r}", f"model={field.model}",
             f"seed={int(field.seed)}"]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in field.values]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_grid(path):
    path = Path(path)
    lines = path.read_text().splitlines()
    head = _header(lines[:4], _GRID_KEYS, path)
    spec = _spec_from(head, path)
    try:
        vals = np.array(" ".join(lines[4:]).split(), dtype=float)
    except ValueError as exc:
        raise DomainError(f"{path}: non-numeric grid value") from exc
    if vals.size != spec.n_points:
        raise DomainError(f"{path}: expected {spec.n_points} values, found {vals.size}")
    return GridField(spec, vals.reshape(spec.n_side, spec.n_side), head["model"], int(head["seed"]))


def write_mask(path, mask, model="gaussian", seed=0):
    path = Path(path)
    spec = mask.spec
    lines = [f"nside={spec.n_side}", f"spacing={spec.spacing!r}", f"model={model}",
             f"seed={int(seed)}", f"threshold={float(mask.threshold)!r}"]
    lines += ["".join("1" if b else "0" for b in row) for row in mask.bits]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_mask(path):
    """Returns ``(mask, header)``."""
    path = Path(path)
    lines = path.read_text().splitlines()
    head = _header(lines[:5], _GRID_KEYS + ("threshold",), path)
    spec = _spec_from(head, path)
    rows = [ln.strip() for ln in lines[5:] if ln.strip()]
    if len(rows) != spec.n_side or any(len(r) != spec.n_side for r in rows):
        raise DomainError(f"{path}: expected {spec.n_side} rows of {spec.n_side} characters")
    if any(set(r) - {"0", "1"} for r in rows):
        raise DomainError(f"{path}: mask rows may contain only 0 and 1")
    bits = np.array([[c == "1" for c in r] for r in rows])
    return ExcursionMask(spec, bits, float(head["threshold"])), head


def write_distance(path, dmap):
    """Distance map as whitespace-separated rows (``inf`` where unbounded)."""
    path = Path(path)
    path.write_text("\n".join(" ".join(_fmt(v) if math.isfinite(v) else "inf" for v in row)
                              for row in dmap.dist) + "\n")
    return path


def write_table(path, table):
    """CSV with a header row; floats in shortest round-trip form."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.columns)
        for row in table.rows:
            w.writerow([_fmt(v) for v in row])
    return path


def read_table(path):
    """Rows of a CSV written by :func:`write_table`, as dicts of strings."""
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
