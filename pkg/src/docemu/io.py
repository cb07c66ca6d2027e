"""CSV and JSON persistence.

Floats are written with ``repr`` (shortest round-trip form) so files are
exact and byte-stable across runs.
"""
import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .design import Design


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(canonical_json(obj))


def read_json(path):
    return json.loads(Path(path).read_text())


def config_hash(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


def load_json_arg(value):
    """Accept either inline JSON or a path to a JSON file."""
    text = value.strip()
    if text.startswith("{") or text.startswith("["):
        return json.loads(text)
    return read_json(value)


# --- schema-specific helpers ---------------------------------------------

def write_points(path, P):
    P = np.atleast_2d(P)
    write_csv(path, [f"p{i + 1}" for i in range(P.shape[1])], P.tolist())


def read_points(path):
    rows = read_csv(path)
    if not rows:
        return np.empty((0, 0))
    cols = [c for c in rows[0] if c.startswith("p")]
    return np.array([[float(r[c]) for c in cols] for r in rows])


def write_design(path, design):
    rows = [list(pt.p) + [pt.odds_ratio, design.kind] for pt in design.points]
    write_csv(path, design.columns + ["kind"], rows)


def read_design(path):
    rows = read_csv(path)
    if not rows:
        with open(path, newline="") as fh:
            header = next(csv.reader(fh), None)
        if not header or header[-1] != "kind":
            raise ValueError(f"design file {path} has no header")
        return Design([], "test", {"columns": header[:-1]})
    cols = [c for c in rows[0] if c not in ("kind",)]
    if cols[-1] != "or":
        raise ValueError("design CSV must end with an 'or' column before 'kind'")
    X = np.array([[float(r[c]) for c in cols] for r in rows])
    kinds = {r.get("kind", "training") for r in rows}
    if len(kinds) != 1:
        raise ValueError("design CSV mixes kinds")
    return Design.from_array(X, kinds.pop())


def write_pi_samples(path, samples):
    rows = [(i, r, float(v)) for i, s in enumerate(samples) for r, v in enumerate(s.draws)]
    write_csv(path, ["theta_id", "replicate", "pi"], rows)


def read_pi_samples(path):
    rows = read_csv(path)
    by_theta = {}
    for r in rows:
        by_theta.setdefault(int(r["theta_id"]), []).append((int(r["replicate"]), float(r["pi"])))
    out = []
    for tid in range(len(by_theta)):
        if tid not in by_theta:
            raise ValueError(f"pi samples missing theta_id {tid}")
        out.append(np.array([v for _, v in sorted(by_theta[tid])]))
    return out
