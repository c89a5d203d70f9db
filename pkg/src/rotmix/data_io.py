"""CSV ingestion, synthetic sampling and model documents."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, DomainError, ModelFormatError
from .estimator import Dataset, FitTrace, MixtureModel
from .exponential_family import FAMILIES, get_family

FORMAT_NAME = "rotmix-model"
FORMAT_VERSION = 1


def fmt_float(x: float) -> str:
    """17 significant digits: enough for an exact float64 round trip."""
    return format(float(x), ".17g")


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------- #
# CSV observations
# --------------------------------------------------------------------------- #

def _parse_float(cell):
    try:
        return float(cell)
    except ValueError:
        return None


def load_csv(path, family, has_header: bool | None = None, weight_column=None) -> Dataset:
    """Read observations (one per row) into a :class:`Dataset`.

    ``has_header=None`` treats the first row as a header when any of its cells
    is not a number.  ``weight_column`` selects a column of positive
    observation weights, by header name or 0-based index; weights are
    normalized to sum to one, otherwise every row gets ``1/n``.  ``family``
    may be a family name, in which case its dimension is taken from the file.
    Row and column numbers in errors are 1-based and count the header.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [(lineno, row) for lineno, row in enumerate(csv.reader(fh), start=1)
                if any(cell.strip() for cell in row)]
    if not rows:
        raise DataError("file contains no rows", path=path)

    header = None
    first = rows[0][1]
    if has_header is None:
        has_header = any(_parse_float(c) is None for c in first)
    if has_header:
        header = [c.strip() for c in first]
        rows = rows[1:]
    if not rows:
        raise DataError("file contains a header but no observations", path=path)

    ncols = len(header) if header is not None else len(rows[0][1])
    wcol = _resolve_weight_column(weight_column, header, ncols, path)

    values = np.empty((len(rows), ncols))
    for r, (lineno, row) in enumerate(rows):
        if len(row) != ncols:
            raise DataError(f"expected {ncols} columns, found {len(row)}", row=lineno, path=path)
        for c, cell in enumerate(row):
            v = _parse_float(cell.strip())
            if v is None or not math.isfinite(v):
                raise DataError(f"cannot parse {cell!r} as a finite number",
                                row=lineno, column=c + 1, path=path)
            values[r, c] = v

    data_cols = [c for c in range(ncols) if c != wcol]
    points = values[:, data_cols]
    if isinstance(family, str):
        family = get_family(family, len(data_cols))
    if points.shape[1] != family.dim:
        raise DataError(f"found {points.shape[1]} data column(s), family {family.name} "
                        f"has dimension {family.dim}", path=path)
    ok = np.atleast_1d(family.data_domain(points))
    if not ok.all():
        r = int(np.flatnonzero(~ok)[0])
        bad = [c for c in range(points.shape[1]) if not family.data_domain(points[r, c:c + 1])]
        column = data_cols[bad[0]] + 1 if bad else None
        raise DataError(f"value {points[r].tolist()} outside the {family.name} data domain",
                        row=rows[r][0], column=column, path=path)

    if wcol is None:
        return Dataset.uniform(points)
    weights = values[:, wcol]
    if np.any(weights <= 0):
        r = int(np.flatnonzero(weights <= 0)[0])
        raise DataError("observation weights must be positive", row=rows[r][0],
                        column=wcol + 1, path=path)
    return Dataset.weighted(points, weights)


def _resolve_weight_column(weight_column, header, ncols, path):
    if weight_column is None:
        return None
    if isinstance(weight_column, str) and not weight_column.lstrip("-").isdigit():
        if header is None or weight_column not in header:
            raise DataError(f"weight column {weight_column!r} not found in header", path=path)
        return header.index(weight_column)
    idx = int(weight_column)
    if not 0 <= idx < ncols:
        raise DataError(f"weight column index {idx} out of range for {ncols} columns", path=path)
    return idx


def points_to_csv(points, labels=None, dim=None) -> str:
    points = np.asarray(points, dtype=float)
    dim = points.shape[1] if points.ndim == 2 and points.size else dim
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{j + 1}" for j in range(dim)] + (["label"] if labels is not None else []))
    for i, row in enumerate(points.reshape(-1, dim)):
        cells = [fmt_float(v) for v in row]
        if labels is not None:
            cells.append(str(int(labels[i])))
        w.writerow(cells)
    return buf.getvalue()


def plan_to_csv(plan, upsilon) -> str:
    plan = np.asarray(plan, dtype=float)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["upsilon"] + [f"pi_{j + 1}" for j in range(plan.shape[1])])
    for u, row in zip(upsilon, plan):
        w.writerow([fmt_float(u)] + [fmt_float(v) for v in row])
    return buf.getvalue()


def trace_to_csv(trace: FitTrace, k: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "objective", "k_active", "mean_row_entropy"]
               + [f"omega_{j + 1}" for j in range(k)])
    for rec in trace.records:
        omegas = [fmt_float(v) for v in rec.omega]
        omegas += [""] * (k - len(omegas))
        w.writerow([rec.iteration, fmt_float(rec.objective), rec.k_active,
                    fmt_float(rec.mean_entropy)] + omegas)
    return buf.getvalue()


# --------------------------------------------------------------------------- #
# Synthetic samples
# --------------------------------------------------------------------------- #

def sample_points(model: MixtureModel, n: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` observations: a component from ``omega``, then a point from it.

    Returns ``(points, labels)`` with 0-based component labels.
    """
    if n < 0:
        raise DomainError(f"sample size must be nonnegative, got {n}", predicate="n")
    rng = np.random.default_rng(seed)
    labels = rng.choice(model.k, size=n, p=model.omega)
    means = model.xis[labels]
    name = model.family.name
    shape = (n, model.family.dim)
    if name == "gaussian_spherical":
        points = means + rng.standard_normal(shape)
    elif name == "poisson":
        points = rng.poisson(means).astype(float)
    elif name == "bernoulli":
        points = (rng.random(shape) < means).astype(float)
    elif name == "exponential":
        points = rng.exponential(means)
    else:
        raise DomainError(f"no sampler for family {name!r}", predicate="family_name")
    return points.reshape(shape), labels


def sample_mixture(model: MixtureModel, n: int, seed) -> tuple[Dataset, np.ndarray]:
    points, labels = sample_points(model, n, seed)
    return Dataset.uniform(points), labels


# --------------------------------------------------------------------------- #
# Model documents
# --------------------------------------------------------------------------- #

@dataclass
class ModelDocument:
    family: str
    dim: int
    k: int
    omega: np.ndarray
    xis: np.ndarray
    lam: float
    regularizer: str = "entropic"
    config: dict = field(default_factory=dict)
    trace: dict = field(default_factory=dict)

    def model(self) -> MixtureModel:
        try:
            return MixtureModel(get_family(self.family, self.dim), self.omega, self.xis)
        except DomainError as exc:
            raise ModelFormatError(f"invalid model: {exc}") from exc


def _encode(value, indent=0) -> str:
    pad = "  " * (indent + 1)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent + 1)}" for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, (list, tuple)):
        if value and isinstance(value[0], (list, tuple)):
            inner = [pad + _encode(v, indent + 1) for v in value]
            return "[\n" + ",\n".join(inner) + "\n" + "  " * indent + "]"
        return "[" + ", ".join(_encode(v, indent + 1) for v in value) + "]"
    if isinstance(value, (bool, np.bool_)) or value is None or isinstance(value, str):
        return json.dumps(value if not isinstance(value, np.bool_) else bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise ModelFormatError(f"cannot serialize non-finite value {value!r}")
        return fmt_float(value)
    raise ModelFormatError(f"cannot serialize {type(value).__name__}")


def dumps_document(doc: ModelDocument) -> str:
    body = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "family": doc.family,
        "dim": int(doc.dim),
        "k": int(doc.k),
        "lambda": float(doc.lam),
        "regularizer": doc.regularizer,
        "omega": [float(v) for v in doc.omega],
        "xis": [[float(v) for v in row] for row in np.asarray(doc.xis).reshape(doc.k, doc.dim)],
        "config": doc.config,
        "trace": doc.trace,
    }
    return _encode(body) + "\n"


def loads_document(text: str) -> ModelDocument:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"not a model document: {exc}") from exc
    if not isinstance(raw, dict) or raw.get("format") != FORMAT_NAME:
        raise ModelFormatError("not a model document (missing format tag)")
    if raw.get("version") != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model document version {raw.get('version')!r}")
    missing = [key for key in ("family", "dim", "k", "lambda", "omega", "xis") if key not in raw]
    if missing:
        raise ModelFormatError(f"model document lacks field(s): {', '.join(missing)}")
    if raw["family"] not in FAMILIES:
        raise ModelFormatError(f"unknown family {raw['family']!r}")
    dim, k = raw["dim"], raw["k"]
    if not (isinstance(dim, int) and isinstance(k, int) and dim >= 1 and k >= 1):
        raise ModelFormatError("dim and k must be positive integers")
    omega = np.asarray(raw["omega"], dtype=float)
    xis = np.asarray(raw["xis"], dtype=float)
    if omega.shape != (k,):
        raise ModelFormatError(f"omega has {omega.size} entries, k = {k}")
    if xis.shape != (k, dim):
        raise ModelFormatError(f"xis has shape {xis.shape}, expected ({k}, {dim})")
    doc = ModelDocument(
        family=raw["family"], dim=dim, k=k, omega=omega, xis=xis,
        lam=float(raw["lambda"]), regularizer=raw.get("regularizer", "entropic"),
        config=_floatify(raw.get("config", {})), trace=_floatify(raw.get("trace", {})))
    doc.model()  # invariant check
    return doc


# Keys whose values are reals even when written without a decimal point.
_REAL_KEYS = {"lambda", "rel_tol", "prune_threshold", "final_objective", "last_objective"}


def _floatify(d):
    return {k: float(v) if k in _REAL_KEYS and isinstance(v, (int, float)) else v
            for k, v in d.items()}


def document_from_fit(model: MixtureModel, trace: FitTrace | None = None, config=None) -> ModelDocument:
    cfg = {}
    lam, reg = 0.0, "entropic"
    if config is not None:
        lam, reg = float(config.lam), config.regularizer
        cfg = {"lambda": lam, "regularizer": reg, "max_iters": int(config.max_iters),
               "rel_tol": float(config.rel_tol), "seed": int(config.seed), "init": config.init,
               "prune_threshold": float(config.prune_threshold)}
    summary = {}
    if trace is not None:
        summary = {"status": trace.status, "iterations": trace.iterations,
                   "final_objective": float(trace.final_objective)}
        if trace.records:
            summary["last_objective"] = float(trace.records[-1].objective)
    return ModelDocument(family=model.family.name, dim=model.family.dim, k=model.k,
                         omega=model.omega.copy(), xis=model.xis.copy(), lam=lam,
                         regularizer=reg, config=cfg, trace=summary)


def save_document(doc: ModelDocument, path) -> None:
    atomic_write_text(path, dumps_document(doc))


def save_model(model: MixtureModel, trace: FitTrace | None, path, config=None) -> ModelDocument:
    doc = document_from_fit(model, trace, config)
    save_document(doc, path)
    return doc


def load_model(path) -> ModelDocument:
    with open(path, encoding="utf-8") as fh:
        return loads_document(fh.read())
