"""JSON problem files: loading, validation and canonical saving.

A problem file looks like::

    {
      "schema": 1,
      "header": {"name": "log_cost", "mode": "continuous", "n": 1, "m": 1, "degree": 4},
      "dynamics": [{"component": 0, "alpha": [1], "beta": [1], "value": 1.0}, ...],
      "cost": [{"component": 0, "alpha": [2], "beta": [0], "value": 1.0}, ...],
      "affine1d": {"g0": "0", "g1": "x+1", "l0": "ln(1+x)^2", "l1": "0", "l2": "1",
                   "domain": [-1, 4]},
      "exact": {"pi": "ln(1+x)^2", "kappa": "-ln(1+x)"}
    }

Cost coefficients are plain monomial coefficients, so ``l = x^2 + u^2``
means ``Q = 2`` and ``R = 2`` under ``l = x'Qx/2 + x'Su + u'Ru/2``.  When
only ``affine1d`` is given, the series sections are derived from jets at 0
through ``header.degree``; when both are given they must agree to 1e-8.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .exceptions import HJBSeriesError, ProblemFileError
from .patch import AffineProblem1D
from .problem import ControlProblem
from .riccati import CONTINUOUS, DISCRETE

logger = logging.getLogger(__name__)

SCHEMA_VERSIONS = (1,)
CONSISTENCY_TOL = 1e-8
DEFAULT_DEGREE = 4


@dataclass
class LoadedProblem:
    """Everything read from a problem file."""

    name: str
    mode: str
    degree: int
    control: ControlProblem | None
    affine: AffineProblem1D | None
    raw: dict
    notes: list = field(default_factory=list)


def _entries(raw_list, n, m, min_degree, section):
    if not isinstance(raw_list, list):
        raise ProblemFileError(f"{section}: expected a list of entries")
    terms = []
    for i, e in enumerate(raw_list):
        where = f"{section}[{i}]"
        try:
            comp = int(e.get("component", 0))
            alpha = [int(a) for a in e["alpha"]]
            beta = [int(b) for b in e.get("beta", [0] * m)]
            value = float(e["value"])
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise ProblemFileError(f"{where}: malformed entry ({exc})") from exc
        if len(alpha) != n or len(beta) != m:
            raise ProblemFileError(f"{where}: alpha needs {n} and beta {m} exponents")
        if min(alpha + beta, default=0) < 0:
            raise ProblemFileError(f"{where}: negative exponent")
        if sum(alpha) + sum(beta) < min_degree:
            raise ProblemFileError(f"{where}: total degree must be at least {min_degree}")
        terms.append((comp, tuple(alpha + beta), value))
    return terms


def _terms_to_entries(series, n, m):
    out = []
    for comp, exps, val in series.terms():
        out.append({"component": int(comp), "alpha": list(exps[:n]), "beta": list(exps[n:]),
                    "value": float(val)})
    return out


def parse_problem(doc: dict, source: str = "<dict>") -> LoadedProblem:
    if not isinstance(doc, dict):
        raise ProblemFileError(f"{source}: top level must be an object")
    schema = doc.get("schema", 1)
    if schema not in SCHEMA_VERSIONS:
        raise ProblemFileError(f"{source}: unsupported schema version {schema}")
    hdr = doc.get("header")
    if not isinstance(hdr, dict):
        raise ProblemFileError(f"{source}: missing header")
    try:
        name = str(hdr.get("name", "problem"))
        mode = str(hdr["mode"])
        n = int(hdr.get("n", 1))
        m = int(hdr.get("m", 1))
        degree = int(hdr.get("degree", DEFAULT_DEGREE))
    except (KeyError, TypeError, ValueError) as exc:
        raise ProblemFileError(f"{source}: header field {exc}") from exc
    if mode not in (DISCRETE, CONTINUOUS):
        raise ProblemFileError(f"{source}: header.mode must be {DISCRETE!r} or {CONTINUOUS!r}")
    notes = []

    affine = None
    if "affine1d" in doc:
        if mode != CONTINUOUS or n != 1 or m != 1:
            raise ProblemFileError(f"{source}: affine1d needs a continuous problem with n = m = 1")
        a = doc["affine1d"]
        ex = doc.get("exact", {}) or {}
        try:
            affine = AffineProblem1D(
                a["g0"], a["g1"], a["l0"], a["l1"], a["l2"],
                domain=tuple(a.get("domain", (-1.0, 1.0))), name=name,
                pi_exact=ex.get("pi"), kappa_exact=ex.get("kappa"),
            )
        except KeyError as exc:
            raise ProblemFileError(f"{source}: affine1d is missing {exc}") from exc

    has_series = "dynamics" in doc or "cost" in doc
    control = None
    if has_series:
        f_terms = _entries(doc.get("dynamics", []), n, m, 1, "dynamics")
        l_terms = _entries(doc.get("cost", []), n, m, 2, "cost")
        for comp, _, _ in f_terms:
            if not 0 <= comp < n:
                raise ProblemFileError(f"dynamics: component {comp} out of range")
        for comp, _, _ in l_terms:
            if comp != 0:
                raise ProblemFileError("cost: component must be 0")
        top = max([sum(t[1]) for t in f_terms + l_terms] + [degree])
        kw = {}
        if affine is not None:
            kw = {"f_exact": affine.eval_f, "l_exact": affine.eval_l}
        control = ControlProblem.from_terms(mode, n, m, f_terms, l_terms, f_order=top,
                                            l_order=top, name=name, **kw)
        if affine is not None:
            derived = affine.to_control_problem(degree)
            gap = max(_coeff_gap(control.f, derived.f, degree), _coeff_gap(control.l, derived.l, degree))
            if gap > CONSISTENCY_TOL:
                raise ProblemFileError(f"{source}: series and affine1d sections disagree by {gap:.3e}")
            notes.append(f"series and affine1d sections agree to {gap:.1e}")
    elif affine is not None:
        control = affine.to_control_problem(degree)
        notes.append(f"series derived from affine1d jets through degree {degree}")
    else:
        raise ProblemFileError(f"{source}: no dynamics/cost and no affine1d section")

    Q, R, S = control.quadratic_part()
    notes.append(
        "quadratic cost read as x'Qx/2 + x'Su + u'Ru/2: "
        f"Q={np.array2string(Q, precision=6)}, R={np.array2string(R, precision=6)}, "
        f"S={np.array2string(S, precision=6)}"
    )
    for note in notes:
        logger.info(note)
    return LoadedProblem(name, mode, degree, control, affine, doc, notes)


def _coeff_gap(a, b, degree):
    gap = 0.0
    for d in range(0, degree + 1):
        gap = max(gap, float(np.abs(a.part(d) - b.part(d)).max(initial=0.0)))
    return gap


def load_problem(path) -> LoadedProblem:
    """Read and validate a problem file.

    Raises
    ------
    ProblemFileError
        On JSON syntax errors (with line and column) or schema violations.
    PreconditionError
        When the problem violates convexity or admissibility.
    """
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ProblemFileError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_problem(doc, str(path))


def canonical(doc: dict) -> dict:
    """Normalized copy of a problem document (sorted entries, float values)."""
    out = {"schema": int(doc.get("schema", 1))}
    hdr = dict(doc["header"])
    out["header"] = {k: hdr[k] for k in sorted(hdr)}
    for sec in ("dynamics", "cost"):
        if sec in doc:
            ents = [
                {"alpha": [int(a) for a in e["alpha"]], "beta": [int(b) for b in e.get("beta", [])],
                 "component": int(e.get("component", 0)), "value": float(e["value"])}
                for e in doc[sec]
            ]
            ents.sort(key=lambda e: (e["component"], sum(e["alpha"]) + sum(e["beta"]),
                                     [-v for v in e["alpha"] + e["beta"]]))
            out[sec] = ents
    if "affine1d" in doc:
        a = dict(doc["affine1d"])
        if "domain" in a:
            a["domain"] = [float(v) for v in a["domain"]]
        out["affine1d"] = a
    if doc.get("exact"):
        out["exact"] = dict(doc["exact"])
    return out


def dumps_problem(doc: dict) -> str:
    return json.dumps(canonical(doc), indent=2, sort_keys=True) + "\n"


def save_problem(path, problem) -> None:
    """Write the canonical form of a loaded problem (or raw document)."""
    doc = problem.raw if isinstance(problem, LoadedProblem) else problem
    with open(path, "w", newline="\n") as fh:
        fh.write(dumps_problem(doc))


def problem_to_doc(cp: ControlProblem, degree: int | None = None) -> dict:
    """Series-only document for a :class:`ControlProblem`."""
    return {
        "schema": 1,
        "header": {"name": cp.name, "mode": cp.mode, "n": cp.n, "m": cp.m,
                   "degree": int(degree or max(cp.f.max_degree or 1, cp.l.max_degree or 2))},
        "dynamics": _terms_to_entries(cp.f, cp.n, cp.m),
        "cost": _terms_to_entries(cp.l, cp.n, cp.m),
    }


__all__ = [
    "LoadedProblem", "load_problem", "parse_problem", "save_problem", "dumps_problem",
    "canonical", "problem_to_doc", "HJBSeriesError",
]
