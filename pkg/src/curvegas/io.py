"""Deterministic, atomic persistence of artifacts.

Floats are written with ``repr`` (shortest round-trip form) and JSON keys are
sorted, so equal results give byte-identical files. Each file is written to
a temporary name in the target directory and renamed into place.
"""

import csv
import io as _io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1


def atomic_write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _plain(obj):
    """JSON-safe copy: numpy scalars and arrays unwrapped, non-finite floats as null."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dumps_json(obj):
    return json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj):
    return atomic_write_text(path, dumps_json(obj))


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def csv_text(header, rows):
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows):
    return atomic_write_text(path, csv_text(header, rows))


def read_csv_matrix(path):
    """Header and float matrix of a CSV written by :func:`write_csv`."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader], dtype=np.float64)
    return header, data.reshape(-1, len(header))


def write_trajectory(record, outdir, fmt, stem="trajectory"):
    outdir = Path(outdir)
    if fmt == "csv":
        rows = ([t, *x] for t, x in zip(record.times, record.states))
        return [write_csv(outdir / f"{stem}.csv", record.csv_header(), rows),
                write_json(outdir / f"{stem}.meta.json",
                           {"schema": "curvegas.trajectory/1", "meta": record.meta})]
    return [write_json(outdir / f"{stem}.json", record.to_json_dict())]


def write_samples(batch, outdir, fmt, stem="samples"):
    outdir = Path(outdir)
    meta = {"schema": "curvegas.samples/1", "beta": batch.beta, "n_samples": len(batch),
            "curve": batch.curve.spec.to_dict(), "chain_meta": batch.chain_meta}
    if fmt == "csv":
        rows = ([int(c), *x] for c, x in zip(batch.chains, batch.samples))
        return [write_csv(outdir / f"{stem}.csv", batch.csv_header(), rows),
                write_json(outdir / f"{stem}.meta.json", meta)]
    meta["chains"] = batch.chains.tolist()
    meta["samples"] = batch.samples.tolist()
    return [write_json(outdir / f"{stem}.json", meta)]
