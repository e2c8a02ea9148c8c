"""JSON / CSV output with round-trip-exact floats and run manifests."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__

# differ between otherwise identical runs (clock, scheduling, output paths)
VOLATILE_MANIFEST_KEYS = ("started", "finished", "threads", "command")


def _normalize(o):
    if isinstance(o, dict):
        return {str(k): _normalize(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_normalize(v) for v in o]
    if isinstance(o, np.ndarray):
        return [_normalize(v) for v in o.tolist()]
    if isinstance(o, (np.floating, float)):
        return float(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    return o


def format_float(x) -> str:
    """17 significant digits; non-finite values become null in JSON."""
    x = float(x)
    if not math.isfinite(x):
        return "null"
    return f"{x:.17g}"


def dumps(obj) -> str:
    """Serialize with every float written at 17 significant digits."""
    return _dump(_normalize(obj), 0) + "\n"


def _dump(o, level):
    pad, inner = "  " * level, "  " * (level + 1)
    if isinstance(o, dict):
        if not o:
            return "{}"
        items = [f"{inner}{json.dumps(k)}: {_dump(v, level + 1)}" for k, v in o.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(o, list):
        if not o:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in o):
            return "[" + ", ".join(_dump(v, level + 1) for v in o) + "]"
        return "[\n" + ",\n".join(inner + _dump(v, level + 1) for v in o) + "\n" + pad + "]"
    if isinstance(o, bool) or o is None:
        return json.dumps(o)
    if isinstance(o, float):
        return format_float(o)
    if isinstance(o, int):
        return str(o)
    return json.dumps(o)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow(["" if v is None else f"{float(v):.17g}" if isinstance(v, (float, np.floating))
                    else v for v in row])
    return buf.getvalue()


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def now_iso():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def make_manifest(argv, config, seed=None, input_path=None, threads=None, started=None):
    return {
        "command": list(argv if argv is not None else sys.argv),
        "config": config,
        "seed": seed,
        "version": __version__,
        "input_sha256": sha256_file(input_path) if input_path else None,
        "threads": threads,
        "started": started or now_iso(),
        "finished": now_iso(),
    }


def strip_volatile(doc: dict) -> dict:
    """Copy of an output document without the volatile manifest entries."""
    out = dict(doc)
    if "manifest" in out:
        out["manifest"] = {k: v for k, v in out["manifest"].items() if k not in VOLATILE_MANIFEST_KEYS}
    return out
