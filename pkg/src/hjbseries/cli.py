"""Command-line driver: ``hjbseries <command> PROBLEM.json [options]``.

Commands
--------
series          power-series solution; coefficient tables and CSV samples
patch1d         1-D Taylor patching across the domain (affine1d problems)
lyap            largest validated sublevel set of the series solution
pencil          eigenvalues of the state/costate pencil, pairing, symplectic check
oracle-compare  series cost against value iteration or closed-loop rollouts

Log verbosity follows the ``HJBSERIES_LOG`` environment variable
(``DEBUG``, ``INFO``, ``WARNING``; default ``WARNING``).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .albrecht import solve_hjb_series
from .dpe import solve_dpe_series
from .exceptions import (
    CharacteristicPointError,
    ConvergenceError,
    DimensionError,
    DomainError,
    HJBSeriesError,
    NotHyperbolicError,
    PreconditionError,
    ProblemFileError,
    SeriesInvalidError,
    SingularOperatorError,
)
from .hamiltonian import (
    HamiltonianBlocks,
    SymplecticPencil,
    check_symplectic,
    forward_matrix,
    pencil_eigenvalues,
)
from .io import load_problem
from .lyapunov import DEFAULT_EPS, largest_sublevel
from .oracle import rollout_costs, value_iteration
from .patch import march, write_csv
from .polyalg import enumerate_monomials
from .riccati import DISCRETE, solve_lqr

logger = logging.getLogger("hjbseries")

EXIT_CODES = {
    ProblemFileError: 3,
    DimensionError: 4,
    PreconditionError: 5,
    ConvergenceError: 6,
    SingularOperatorError: 7,
    NotHyperbolicError: 8,
    DomainError: 9,
    CharacteristicPointError: 10,
    SeriesInvalidError: 11,
    HJBSeriesError: 12,
}


def exit_code_for(exc: BaseException) -> int:
    for cls in type(exc).__mro__:
        if cls in EXIT_CODES:
            return EXIT_CODES[cls]
    if isinstance(exc, ValueError):
        return 13
    if isinstance(exc, OSError):
        return 14
    return 1


def _box(text, default):
    if text is None:
        return default
    lo, hi = (float(v) for v in text.split(","))
    return lo, hi


def _eps(args):
    e1 = args.eps1 if args.eps1 is not None else args.eps
    e2 = args.eps2 if args.eps2 is not None else args.eps
    return e1, e2


def _solve(lp, degree):
    if lp.mode == DISCRETE:
        return solve_dpe_series(lp.control, degree)
    return solve_hjb_series(lp.control, degree)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _setup_logging(out: Path | None):
    level = os.environ.get("HJBSERIES_LOG", "WARNING").upper()
    logger.setLevel(logging.DEBUG)
    logger.handlers.clear()
    h = logging.StreamHandler(sys.stderr)
    h.setLevel(getattr(logging, level, logging.WARNING))
    h.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logger.addHandler(h)
    if out is not None:
        fh = logging.FileHandler(out / "run.log", mode="w")
        fh.setLevel(logging.INFO)
        fh.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        logger.addHandler(fh)


def _monomial_label(exps, n):
    names = [f"x{i + 1}" for i in range(n)] if n > 1 else ["x"]
    parts = []
    for name, e in zip(names, exps):
        if e == 1:
            parts.append(name)
        elif e > 1:
            parts.append(f"{name}^{e}")
    return "*".join(parts) or "1"


# --------------------------------------------------------------------------
def cmd_series(args, lp, out):
    r = args.degree or lp.degree
    sol = _solve(lp, r)
    n = sol.n
    table = sol.coefficient_table()
    print(f"# {lp.name}: {lp.mode} series through degree {r}")
    rows = []
    for d, coeffs in table["pi"].items():
        mons = [_monomial_label(a, n) for a in enumerate_monomials(n, d)]
        print(f"pi[{d}]     " + "  ".join(f"{c:+.12g} {m}" for c, m in zip(coeffs, mons)))
        rows += [("pi", d, 0, m, c) for c, m in zip(coeffs, mons)]
    for d, comps in table["kappa"].items():
        mons = [_monomial_label(a, n) for a in enumerate_monomials(n, d)]
        for j, coeffs in enumerate(comps):
            print(f"kappa{j}[{d}] " + "  ".join(f"{c:+.12g} {m}" for c, m in zip(coeffs, mons)))
            rows += [("kappa", d, j, m, c) for c, m in zip(coeffs, mons)]
    write_csv(out / "series_coefficients.csv", {
        "kind": np.array([r_[0] for r_ in rows], dtype=object),
        "degree": np.array([r_[1] for r_ in rows]),
        "component": np.array([r_[2] for r_ in rows]),
        "monomial": np.array([r_[3] for r_ in rows], dtype=object),
        "value": np.array([r_[4] for r_ in rows], dtype=float),
    })
    if n == 1:
        lo, hi = _box(args.box, (-0.5, 0.5))
        x = np.linspace(lo, hi, args.mesh + 1)
        cols = {"x": x, "pi": sol.cost(x), "kappa": sol.feedback(x)[:, 0]}
        if lp.affine is not None and lp.affine.pi_exact is not None:
            ok = lp.affine.in_domain(x)
            cols["pi_exact"] = np.where(ok, lp.affine.pi_exact(np.where(ok, x, 0.0)), np.nan)
        write_csv(out / "series_samples.csv", cols)
    return 0


def cmd_patch1d(args, lp, out):
    if lp.affine is None:
        raise ProblemFileError("patch1d needs an affine1d section")
    p = lp.affine
    d = args.degree or 3
    e1, e2 = _eps(args)
    dirs = {"+1": [1], "-1": [-1], "both": [1, -1]}[args.direction]
    tables = []
    for sgn in dirs:
        ps = march(p, d, e1, e2, args.mesh, sgn, args.max_patches)
        print(f"direction {sgn:+d}: centers {', '.join(f'{c:.6g}' for c in ps.centers)}; stop: {ps.stop_reason}")
        logger.info("direction %+d centers %s stop %s", sgn, ps.centers, ps.stop_reason)
        edge = p.domain[1] if sgn > 0 else p.domain[0]
        x = np.linspace(0.0, edge, args.mesh + 1)
        x = x[p.in_domain(x)]
        if sgn < 0 and 1 in dirs:
            x = x[x < 0]
        x = np.sort(x)
        t = ps.table(p, x)
        t["patch_id"] = np.asarray(t["patch_id"])
        tables.append(t)
        with open(out / f"patches_{'pos' if sgn > 0 else 'neg'}.json", "w") as fh:
            json.dump({"centers": ps.centers, "intervals": [q.interval for q in ps.patches],
                       "stop_reason": ps.stop_reason, "seam_jumps": ps.seam_jumps}, fh, indent=2)
    merged = {k: np.concatenate([t[k] for t in tables]) for k in tables[0]}
    order = np.argsort(merged["x"], kind="stable")
    merged = {k: v[order] for k, v in merged.items()}
    write_csv(out / "patch1d.csv", merged)
    return 0


def cmd_lyap(args, lp, out):
    r = args.degree or lp.degree
    sol = _solve(lp, r)
    e1, e2 = _eps(args)
    n = lp.control.n
    lo, hi = _box(args.box, (-1.0, 1.0))
    problem = lp.affine if lp.affine is not None else lp.control
    rep = largest_sublevel(sol.pi, sol.kappa, problem, e1, e2, box=([lo] * n, [hi] * n),
                           mesh=args.mesh, seed=args.seed)
    d = rep.to_dict()
    print(json.dumps(d, indent=2))
    with open(out / "lyap.json", "w") as fh:
        json.dump(d, fh, indent=2)
    return 0


def cmd_pencil(args, lp, out):
    lqr = lp.control.lqr
    blocks = HamiltonianBlocks.from_lqr(lqr)
    spec = pencil_eigenvalues(SymplecticPencil.from_blocks(blocks))
    print("eigenvalue                         |mu|")
    for mu in spec.finite:
        print(f"{complex(mu).real:+.12g}{complex(mu).imag:+.12g}j   {abs(mu):.12g}")
    print(f"zero eigenvalues: {spec.n_zero}")
    print(f"infinite eigenvalues: {spec.n_infinite}")
    print(f"reciprocal pairing error: {spec.pairing_error:.3e}")
    print(f"hyperbolic: {'yes' if spec.hyperbolic else 'no'} (distance to unit circle {spec.min_unit_circle_distance:.3e})")
    try:
        HF = forward_matrix(blocks)
        sym = check_symplectic(HF)
        print(f"symplectic residual of forward matrix: {sym:.3e}")
    except SingularOperatorError as exc:
        sym = None
        print(f"forward matrix: {exc}")
    mu = np.asarray(spec.finite, dtype=complex)
    write_csv(out / "pencil.csv", {"real": mu.real, "imag": mu.imag, "modulus": np.abs(mu)})
    with open(out / "pencil.json", "w") as fh:
        json.dump({"n_infinite": spec.n_infinite, "n_zero": spec.n_zero,
                   "pairing_error": spec.pairing_error, "hyperbolic": spec.hyperbolic,
                   "symplectic_residual": sym}, fh, indent=2)
    return 0


def cmd_oracle_compare(args, lp, out):
    r = args.degree or lp.degree
    sol = _solve(lp, r)
    cp = lp.control
    if cp.n != 1:
        raise DimensionError("oracle-compare supports scalar problems")
    lo, hi = _box(args.box, (-0.2, 0.2))
    if lp.mode == DISCRETE:
        V = value_iteration(cp, (lo, hi), args.mesh + 1, u_box=(lo, hi), u_mesh=81)
        x = V.axes[0]
        ref = V.values
        label = "value iteration"
    else:
        x = np.linspace(lo, hi, min(args.mesh, 16) + 1)
        problem = lp.affine if lp.affine is not None else cp
        P = solve_lqr(cp.lqr, cp.mode).P
        ref = rollout_costs(problem, sol.kappa, x[:, None], P=P)
        label = "closed-loop rollout of the series feedback"
    gap = np.abs(sol.cost(x) - ref)
    print(f"oracle: {label} on [{lo}, {hi}]")
    print(f"max |gap| = {gap.max():.6e}")
    print(f"mean |gap| = {gap.mean():.6e}")
    write_csv(out / "oracle_compare.csv", {"x": x, "series": sol.cost(x), "oracle": ref, "gap": gap})
    return 0


COMMANDS = {
    "series": cmd_series,
    "patch1d": cmd_patch1d,
    "lyap": cmd_lyap,
    "pencil": cmd_pencil,
    "oracle-compare": cmd_oracle_compare,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hjbseries", description=__doc__.split("\n\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("problem", help="problem file (JSON)")
    ap.add_argument("--degree", type=int, default=None, help="truncation degree")
    ap.add_argument("--mesh", type=int, default=256, help="cells per axis")
    ap.add_argument("--eps", type=float, default=DEFAULT_EPS, help="sets both eps1 and eps2")
    ap.add_argument("--eps1", type=float, default=None)
    ap.add_argument("--eps2", type=float, default=None)
    ap.add_argument("--box", default=None, help="lo,hi")
    ap.add_argument("--direction", choices=["+1", "-1", "both"], default="both")
    ap.add_argument("--max-patches", type=int, default=6)
    ap.add_argument("--seed", type=int, default=0, help="seed for sampled sublevel checks")
    ap.add_argument("--out", default=".", help="output directory")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = _outdir(args)
    _setup_logging(out)
    e1, e2 = _eps(args)
    logger.info("hjbseries %s %s %s", __version__, args.command, args.problem)
    logger.info("degree=%s mesh=%d eps1=%g eps2=%g box=%s seed=%d",
                args.degree, args.mesh, e1, e2, args.box, args.seed)
    try:
        lp = load_problem(args.problem)
        return COMMANDS[args.command](args, lp, out)
    except (HJBSeriesError, ValueError, OSError) as exc:
        code = exit_code_for(exc)
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        logger.info("exit %d", code)
        return code


if __name__ == "__main__":
    sys.exit(main())
