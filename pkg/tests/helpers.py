"""Random problem builders shared by the tests."""
import numpy as np

from hjbseries.polyalg import enumerate_monomials
from hjbseries.problem import ControlProblem
from hjbseries.riccati import CONTINUOUS, DISCRETE


def random_problem(seed, mode=DISCRETE, n=2, m=1, top=3, scale=0.3, sv=None):
    """Polynomial problem with a stable-ish linear part and small higher terms.

    ``sv=(lo, hi)`` draws the singular values of ``A`` from that range, which
    keeps the forward Hamiltonian map well conditioned.
    """
    rng = np.random.default_rng(seed)
    nv = n + m
    if mode == DISCRETE:
        A = 0.6 * rng.normal(size=(n, n)) / np.sqrt(n)
    else:
        A = rng.normal(size=(n, n)) - np.eye(n)
    if sv is not None:
        U, _, Vt = np.linalg.svd(A)
        A = U @ np.diag(rng.uniform(sv[0], sv[1], size=n)) @ Vt
    B = rng.normal(size=(n, m))
    f_terms, l_terms = [], []
    for i in range(n):
        for j in range(n):
            f_terms.append((i, tuple(int(k == j) for k in range(nv)), A[i, j]))
        for j in range(m):
            f_terms.append((i, tuple(int(k == n + j) for k in range(nv)), B[i, j]))
        for d in range(2, top + 1):
            for a in enumerate_monomials(nv, d):
                f_terms.append((i, a, scale * rng.normal()))
    G = rng.normal(size=(nv, nv))
    W = G @ G.T + 0.5 * np.eye(nv)
    for a in enumerate_monomials(nv, 2):
        idx = [k for k, e in enumerate(a) for _ in range(e)]
        c = W[idx[0], idx[1]] * (0.5 if idx[0] == idx[1] else 1.0)
        l_terms.append((0, a, c))
    for d in range(3, top + 1):
        for a in enumerate_monomials(nv, d):
            l_terms.append((0, a, scale * rng.normal()))
    return ControlProblem.from_terms(mode, n, m, f_terms, l_terms, name=f"random-{seed}")


def permute_problem(p, perm):
    """Same problem with the state variables reordered by ``perm``."""
    n, m = p.n, p.m
    full = list(perm) + list(range(n, n + m))

    def remap(series, rows):
        out = []
        for comp, exps, val in series.terms():
            new = [0] * len(exps)
            for k, e in enumerate(exps):
                new[full.index(k)] = e
            out.append((rows(comp), tuple(new), val))
        return out

    f_terms = remap(p.f, lambda c: list(perm).index(c))
    l_terms = remap(p.l, lambda c: c)
    return ControlProblem.from_terms(p.mode, n, m, f_terms, l_terms, f_order=p.f.order,
                                     l_order=p.l.order)
