"""Problem, plan and path files.

All files are JSON documents with a ``format`` tag and an integer ``version``.
Floats are written with ``repr`` so every value round-trips bit for bit; the
balanced limit ``lambda_hi = inf`` is written as the string ``"inf"``.
Matrices are written one row per line to keep fixtures diffable.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import as_cost_matrix, as_histogram
from .errors import DimensionError, DomainError, FormatError
from .regpath import PathSegment, RegularizationPath

__all__ = [
    "FORMAT_VERSION",
    "ProblemFile",
    "cost_from_points",
    "problem_hash",
    "read_problem",
    "load_problem",
    "save_problem",
    "save_plan",
    "load_plan",
    "export_path",
    "import_path",
    "write_csv",
]

FORMAT_VERSION = 1
PROBLEM_TAG = "uotpath.problem"
PLAN_TAG = "uotpath.plan"
PATH_TAG = "uotpath.path"
METRICS = ("sqeuclidean", "euclidean")


def cost_from_points(X, Y, metric="sqeuclidean"):
    """Pairwise cost between point clouds ``X (n, d)`` and ``Y (m, d)``.

    Examples
    --------
    >>> cost_from_points([[0.0], [1.0]], [[0.0], [1.0]])
    array([[0., 1.],
           [1., 0.]])
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
    if X.shape[1] != Y.shape[1]:
        raise DimensionError(f"point dimensions differ: {X.shape[1]} vs {Y.shape[1]}")
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")
    diff = X[:, None, :] - Y[None, :, :]
    D2 = np.einsum("ijk,ijk->ij", diff, diff)
    return D2 if metric == "sqeuclidean" else np.sqrt(D2)


@dataclass
class ProblemFile:
    """In-memory problem: either an explicit cost matrix or two point clouds."""

    a: np.ndarray
    b: np.ndarray
    C: np.ndarray | None = None
    X: np.ndarray | None = None
    Y: np.ndarray | None = None
    metric: str | None = None
    meta: dict = field(default_factory=dict)

    def cost(self):
        if self.C is not None:
            return self.C
        return cost_from_points(self.X, self.Y, self.metric)

    def arrays(self):
        return self.cost(), self.a, self.b


def problem_hash(C, a, b):
    """SHA-256 over the float64 bytes of ``C``, ``a`` and ``b``."""
    h = hashlib.sha256()
    for arr in (C, a, b):
        arr = np.ascontiguousarray(arr, dtype="<f8")
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


# -- low level ---------------------------------------------------------------

def _dump_value(value):
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, list) and value and isinstance(value[0], list):
        rows = ",\n    ".join(json.dumps(r, allow_nan=False) for r in value)
        return "[\n    " + rows + "\n  ]"
    return json.dumps(value, allow_nan=False)


def _dumps(doc):
    parts = [f"  {json.dumps(k)}: {_dump_value(v)}" for k, v in doc.items()]
    return "{\n" + ",\n".join(parts) + "\n}\n"


def _write(path, doc):
    try:
        text = _dumps(doc)
    except ValueError as exc:
        raise DomainError(f"cannot serialize non-finite values: {exc}") from exc
    Path(path).write_text(text, encoding="utf-8")


def _line_of(text, key):
    needle = json.dumps(key) + ":"
    pos = text.find(needle)
    return None if pos < 0 else text.count("\n", 0, pos) + 1


def _read(path, tag):
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise FormatError(exc.msg, line=exc.lineno) from None
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    if not isinstance(doc, dict):
        raise FormatError("top level must be an object", line=1)
    if doc.get("format") != tag:
        raise FormatError(f"expected format {tag!r}, got {doc.get('format')!r}",
                          field="format", line=_line_of(text, "format"))
    version = doc.get("version")
    if not isinstance(version, int) or version < 1:
        raise FormatError(f"invalid version {version!r}", field="version", line=_line_of(text, "version"))
    if version > FORMAT_VERSION:
        raise FormatError(f"version {version} is newer than supported version {FORMAT_VERSION}",
                          field="version", line=_line_of(text, "version"))
    return doc, text


def _reject_constant(name):
    raise ValueError(f"non-finite literal {name} is not allowed")


def _require(doc, text, key):
    if key not in doc:
        raise FormatError("missing field", field=key)
    return doc[key]


def _array(doc, text, key, ndim):
    raw = _require(doc, text, key)
    line = _line_of(text, key)
    try:
        arr = np.asarray(raw, dtype=np.float64)
    except (TypeError, ValueError):
        raise FormatError("not a numeric array", field=key, line=line) from None
    if arr.ndim != ndim:
        raise FormatError(f"expected a {ndim}-d array, got shape {arr.shape}", field=key, line=line)
    return arr


def _validated(fn, key, text, *args):
    try:
        return fn(*args)
    except (DomainError, DimensionError) as exc:
        raise FormatError(str(exc), field=key, line=_line_of(text, key)) from None


# -- problems ----------------------------------------------------------------

def read_problem(path):
    """Parse and validate a problem file into a :class:`ProblemFile`."""
    doc, text = _read(path, PROBLEM_TAG)
    a = _validated(as_histogram, "a", text, _array(doc, text, "a", 1), "a")
    b = _validated(as_histogram, "b", text, _array(doc, text, "b", 1), "b")
    has_C = "C" in doc
    has_pts = any(k in doc for k in ("X", "Y", "metric"))
    if has_C == has_pts:
        raise FormatError("exactly one of {C} or {X, Y, metric} must be given")
    meta = doc.get("meta", {})
    if has_C:
        C = _validated(as_cost_matrix, "C", text, _array(doc, text, "C", 2), (a.size, b.size))
        return ProblemFile(a=a, b=b, C=C, meta=meta)
    X = _array(doc, text, "X", 2)
    Y = _array(doc, text, "Y", 2)
    metric = _require(doc, text, "metric")
    if metric not in METRICS:
        raise FormatError(f"unknown metric {metric!r}", field="metric", line=_line_of(text, "metric"))
    for key, arr, size in (("X", X, a.size), ("Y", Y, b.size)):
        if arr.shape[0] != size:
            raise FormatError(f"{arr.shape[0]} points but {size} masses", field=key, line=_line_of(text, key))
        if not np.all(np.isfinite(arr)):
            raise FormatError("non-finite coordinate", field=key, line=_line_of(text, key))
    if X.shape[1] != Y.shape[1]:
        raise FormatError(f"point dimensions differ: {X.shape[1]} vs {Y.shape[1]}", field="Y",
                          line=_line_of(text, "Y"))
    return ProblemFile(a=a, b=b, X=X, Y=Y, metric=metric, meta=meta)


def load_problem(path):
    """Return ``(C, a, b)`` from a problem file."""
    return read_problem(path).arrays()


def save_problem(path, a, b, C=None, X=None, Y=None, metric=None, meta=None):
    """Write a problem file; give either ``C`` or ``X, Y, metric``."""
    a = as_histogram(a, "a")
    b = as_histogram(b, "b")
    doc = {"format": PROBLEM_TAG, "version": FORMAT_VERSION, "n": a.size, "m": b.size,
           "a": a, "b": b}
    if (C is None) == (X is None):
        raise ValueError("give exactly one of C or (X, Y, metric)")
    if C is not None:
        doc["C"] = as_cost_matrix(C, (a.size, b.size))
    else:
        if metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        doc["metric"] = metric
        doc["X"] = np.asarray(X, dtype=np.float64)
        doc["Y"] = np.asarray(Y, dtype=np.float64)
    if meta:
        doc["meta"] = meta
    _write(path, doc)


# -- plans -------------------------------------------------------------------

def save_plan(path, plan, report=None):
    doc = {"format": PLAN_TAG, "version": FORMAT_VERSION, "plan": np.asarray(plan, dtype=np.float64)}
    if report:
        doc["report"] = report
    _write(path, doc)


def load_plan(path):
    doc, text = _read(path, PLAN_TAG)
    T = _array(doc, text, "plan", 2)
    if not np.all(np.isfinite(T)) or np.any(T < 0):
        raise FormatError("plan entries must be finite and >= 0", field="plan", line=_line_of(text, "plan"))
    return T


# -- paths -------------------------------------------------------------------

def _lam_out(x):
    return "inf" if math.isinf(x) else float(x)


def _lam_in(x, key):
    if x == "inf":
        return math.inf
    if isinstance(x, (int, float)) and not isinstance(x, bool):
        return float(x)
    raise FormatError(f"expected a number or 'inf', got {x!r}", field=key)


def export_path(file, path, problem=None):
    """Write a :class:`RegularizationPath`; ``problem=(C, a, b)`` records its hash."""
    segs = []
    for s in path.segments:
        d = {
            "lambda_lo": _lam_out(s.lambda_lo),
            "lambda_hi": _lam_out(s.lambda_hi),
            "active": [list(divmod(int(q), path.m)) for q in s.active],
            "m_tilde": s.m_tilde.tolist(),
            "c_tilde": s.c_tilde.tolist(),
        }
        if s.u_m_tilde is not None:
            d["u_m_tilde"] = s.u_m_tilde.tolist()
            d["u_c_tilde"] = s.u_c_tilde.tolist()
        segs.append(d)
    doc = {
        "format": PATH_TAG,
        "version": FORMAT_VERSION,
        "kind": "semi-relaxed" if path.semi_relaxed else "full",
        "problem_hash": problem_hash(*problem) if problem is not None else None,
        "n": path.n,
        "m": path.m,
        "terminal_balanced": path.terminal_balanced,
        "truncated": path.truncated,
    }
    body = ",\n".join("    " + json.dumps(s, allow_nan=False) for s in segs)
    text = _dumps(doc).rstrip().rstrip("}").rstrip()
    text += ',\n  "segments": [\n' + body + "\n  ]\n}\n"
    Path(file).write_text(text, encoding="utf-8")


def import_path(file):
    """Read a path file back into a :class:`RegularizationPath`."""
    doc, text = _read(file, PATH_TAG)
    kind = _require(doc, text, "kind")
    if kind not in ("full", "semi-relaxed"):
        raise FormatError(f"unknown kind {kind!r}", field="kind", line=_line_of(text, "kind"))
    n, m = int(_require(doc, text, "n")), int(_require(doc, text, "m"))
    segments = []
    for k, s in enumerate(_require(doc, text, "segments")):
        key = f"segments[{k}]"
        try:
            active = tuple(int(i) * m + int(j) for i, j in s["active"])
            mt = np.asarray(s["m_tilde"], dtype=np.float64)
            ct = np.asarray(s["c_tilde"], dtype=np.float64)
            umt = np.asarray(s["u_m_tilde"], dtype=np.float64) if "u_m_tilde" in s else None
            uct = np.asarray(s["u_c_tilde"], dtype=np.float64) if "u_c_tilde" in s else None
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"malformed segment: {exc}", field=key) from None
        if mt.shape != (len(active),) or ct.shape != (len(active),):
            raise FormatError("coefficient length does not match the active set", field=key)
        segments.append(PathSegment(_lam_in(s["lambda_lo"], key + ".lambda_lo"),
                                    _lam_in(s["lambda_hi"], key + ".lambda_hi"),
                                    active, mt, ct, umt, uct))
    return RegularizationPath(n, m, tuple(segments), bool(doc.get("terminal_balanced", False)),
                              semi_relaxed=kind == "semi-relaxed",
                              truncated=bool(doc.get("truncated", False)))


def write_csv(file, header, rows):
    """Header-first CSV with ``repr`` floats (locale independent)."""
    with open(file, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
