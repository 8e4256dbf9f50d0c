"""File formats: time-series CSV, model text files, result CSVs and the
flat key=value run manifest.

All numeric output uses 17 significant digits so values round-trip
exactly through text.
"""

from __future__ import annotations

import csv
import os
import tempfile
from pathlib import Path

import numpy as np

from .kernels import DC2, HyperParams
from .model import Theta
from .signals import Dataset


def fmt(v) -> str:
    """Exact-round-trip decimal formatting."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


class DataError(Exception):
    """Malformed or inconsistent input files."""


def _atomic_write(path, text: str):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_timeseries_csv(path, u, y):
    lines = ["t,u,y"]
    for t, (ui, yi) in enumerate(zip(u, y), start=1):
        lines.append(f"{t},{fmt(ui)},{fmt(yi)}")
    _atomic_write(path, "\n".join(lines) + "\n")


def read_timeseries_csv(path) -> Dataset:
    """Read a `t,u,y` CSV; t must ascend from 1 and values be finite."""
    us, ys = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "u", "y"]:
            raise DataError(f"{path}: expected header 't,u,y', "
                            f"got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 fields")
            try:
                t = int(row[0])
                u = float(row[1])
                y = float(row[2])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
            if t != len(us) + 1:
                raise DataError(
                    f"{path}:{lineno}: t = {t}, expected {len(us) + 1}")
            if not (np.isfinite(u) and np.isfinite(y)):
                raise DataError(f"{path}:{lineno}: non-finite value")
            us.append(u)
            ys.append(y)
    if not us:
        raise DataError(f"{path}: no data rows")
    return Dataset(u=np.array(us), y=np.array(ys))


def write_model_text(path, theta: Theta, sigma2: float):
    """Line-oriented model file: T=, sigma2=, then tap lines."""
    lines = [f"T={theta.T}", f"sigma2={fmt(sigma2)}"]
    for k, v in enumerate(theta.b):
        lines.append(f"b {k} {fmt(v)}")
    for k, v in enumerate(theta.c, start=1):
        lines.append(f"c {k} {fmt(v)}")
    _atomic_write(path, "\n".join(lines) + "\n")


def read_model_text(path):
    """Read a model file; returns (Theta, sigma2)."""
    T = None
    sigma2 = None
    b = {}
    c = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                if line.startswith("T="):
                    T = int(line[2:])
                elif line.startswith("sigma2="):
                    sigma2 = float(line[7:])
                elif line[0] in "bc":
                    name, k, v = line.split()
                    {"b": b, "c": c}[name][int(k)] = float(v)
                else:
                    raise ValueError(f"unrecognized line {line!r}")
            except (ValueError, KeyError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if T is None:
        raise DataError(f"{path}: missing T= line")
    bv = np.zeros(T)
    cv = np.zeros(T)
    for k, v in b.items():
        if not 0 <= k < T:
            raise DataError(f"{path}: b index {k} out of range")
        bv[k] = v
    for k, v in c.items():
        if not 1 <= k <= T:
            raise DataError(f"{path}: c index {k} out of range")
        cv[k - 1] = v
    return Theta(bv, cv), sigma2


def eta_fields(eta: HyperParams) -> dict:
    d = {"kind": eta.kind, "lambda_b": eta.lambda_b,
         "lambda_c": eta.lambda_c, "beta_b": eta.beta_b,
         "beta_c": eta.beta_c}
    if eta.kind == DC2:
        d["alpha_b"] = eta.alpha_b
        d["alpha_c"] = eta.alpha_c
    return d


def write_csv(path, fieldnames, rows):
    """Write dict rows with 17-digit numeric formatting."""
    lines = [",".join(fieldnames)]
    for row in rows:
        cells = []
        for name in fieldnames:
            v = row.get(name, "")
            if isinstance(v, str):
                cells.append(v)
            elif v is None:
                cells.append("")
            else:
                cells.append(fmt(v))
        lines.append(",".join(cells))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_manifest(path, entries: dict):
    """Flat key=value manifest, written atomically next to the outputs."""
    lines = []
    for key, v in entries.items():
        if isinstance(v, float):
            v = fmt(v)
        lines.append(f"{key}={v}")
    _atomic_write(path, "\n".join(lines) + "\n")


def read_manifest(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, v = line.partition("=")
            out[key] = v
    return out
