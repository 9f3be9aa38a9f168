import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from hjbseries.dpe import solve_dpe_series
from hjbseries.exceptions import DimensionError, SingularOperatorError
from hjbseries.hamiltonian import (
    HamiltonianBlocks, HamiltonianSystem, SymplecticPencil, check_symplectic, closedness_check,
    forward_matrix, forward_step, invariance_check, manifold_level_solve, pencil_eigenvalues,
    solve_phi_taylor, stable_manifold_from_series, symplectic_J, two_form_defect,
)
from hjbseries.polyalg import PolySeries, grad
from hjbseries.problem import ControlProblem
from hjbseries.problems import discrete_exact, scalar_lq
from hjbseries.riccati import DISCRETE, LqrData, solve_dtare

from helpers import random_problem

GOLD = (1 + np.sqrt(5)) / 2


def blocks(A, B, Q, R, S=None):
    return HamiltonianBlocks.from_lqr(LqrData(A, B, Q, R, S))


def random_data(seed, n=3, m=2):
    rng = np.random.default_rng(seed)
    G = rng.normal(size=(n, n))
    H = rng.normal(size=(m, m))
    return LqrData(rng.normal(size=(n, n)), rng.normal(size=(n, m)), G @ G.T + 0.1 * np.eye(n),
                   H @ H.T + 0.5 * np.eye(m))


def test_forward_matrix_scalar():
    HF = forward_matrix(blocks(1, 1, 1, 1))
    np.testing.assert_allclose(HF, [[2, -1], [-1, 1]], atol=1e-14)
    eig = np.sort(np.linalg.eigvals(HF).real)
    np.testing.assert_allclose(eig, [2 - GOLD, GOLD + 1], atol=1e-6)
    assert eig[0] == pytest.approx(solve_dtare(LqrData(1, 1, 1, 1)).closed_loop_radius, abs=1e-10)
    assert check_symplectic(HF) <= 1e-15


def test_forward_matrix_decoupled():
    A = np.array([[0.5, 0.2], [0.0, -0.3]])
    HF = forward_matrix(blocks(A, np.eye(2), np.zeros((2, 2)), np.eye(2)))
    np.testing.assert_allclose(HF[:2, :2], A)
    np.testing.assert_allclose(HF[2:, :2], 0.0)
    np.testing.assert_allclose(HF[2:, 2:], np.linalg.inv(A.T))


def test_forward_matrix_singular():
    with pytest.raises(SingularOperatorError, match="pencil"):
        forward_matrix(blocks(0, 1, 1, 1))


def test_check_symplectic_examples():
    J = symplectic_J(2)
    assert check_symplectic(J) == 0.0
    assert check_symplectic(np.eye(4)) == 0.0
    with pytest.raises(DimensionError):
        check_symplectic(np.eye(3))


def test_pencil_examples():
    s = pencil_eigenvalues(SymplecticPencil.from_blocks(blocks(1, 1, 1, 1)))
    np.testing.assert_allclose(s.finite, [2 - GOLD, GOLD + 1], atol=1e-9)
    assert s.n_infinite == 0
    s = pencil_eigenvalues(SymplecticPencil.from_blocks(blocks(0, 1, 1, 1)))
    np.testing.assert_allclose(s.finite, [0.0], atol=1e-12)
    assert s.n_infinite == 1 and s.pairing_error == 0.0
    b = blocks(0.5 * np.eye(2), np.eye(2), np.zeros((2, 2)), np.eye(2))
    s = pencil_eigenvalues(SymplecticPencil.from_blocks(b))
    np.testing.assert_allclose(np.sort(s.finite.real), [0.5, 0.5, 2, 2], atol=1e-9)


@given(st.integers(0, 2**31))
def test_random_structure(seed):
    d = random_data(seed)
    b = HamiltonianBlocks.from_lqr(d)
    assert np.allclose(b.H12, b.H12.T) and np.allclose(b.H21, b.H21.T)
    s = pencil_eigenvalues(SymplecticPencil.from_blocks(b))
    assert s.pairing_error <= 1e-6
    assert s.hyperbolic
    K = solve_dtare(d).K
    closed = np.linalg.eigvals(d.A + d.B @ K)
    stable = s.stable.astype(complex)
    assert len(stable) == len(closed)
    for mu in closed:
        assert np.abs(stable - mu).min() <= 1e-8
    if np.linalg.cond(b.H22) < 1e8:
        HF = forward_matrix(b)
        assert check_symplectic(HF) <= 1e-10 * max(1.0, np.linalg.norm(HF) ** 2)


def test_hundred_systems():
    worst = 0.0
    for seed in range(100):
        HF = forward_matrix(HamiltonianBlocks.from_lqr(random_data(seed)))
        worst = max(worst, check_symplectic(HF) / max(1.0, np.linalg.norm(HF) ** 2))
    assert worst <= 1e-10


def test_forward_step_linear():
    b = blocks([[0.9, 0.2], [0.1, 0.5]], [[1.0], [0.3]], np.eye(2), [[1.0]])
    p = scalar_lq()
    x, lam = np.array([0.3, -0.2]), np.array([0.1, 0.4])
    HF = forward_matrix(b)
    xp, lp = forward_step(b, x, lam)
    np.testing.assert_allclose(np.concatenate([xp, lp]), HF @ np.concatenate([x, lam]), atol=1e-14)
    # the Newton path on a purely linear problem gives the same map
    xq, lq = forward_step(p, [0.2], [0.1])
    HF1 = forward_matrix(HamiltonianBlocks.from_lqr(p.lqr))
    np.testing.assert_allclose(np.concatenate([xq, lq]), HF1 @ [0.2, 0.1], atol=1e-12)
    x0, l0 = forward_step(p, [0.0], [0.0])
    assert np.all(x0 == 0) and np.all(l0 == 0)


CUBIC = ControlProblem.from_terms(
    DISCRETE, 1, 1,
    [(0, (1, 0), 0.9), (0, (0, 1), 1.0), (0, (2, 0), 0.3), (0, (1, 1), 0.2)],
    [(0, (2, 0), 0.5), (0, (0, 2), 0.5), (0, (3, 0), 0.1)],
)


def test_forward_step_series_order():
    # scalar cubic perturbation: Newton step against the degree-2 composed series
    p = CUBIC
    sysm = HamiltonianSystem(p)
    G = sysm.forward_series(2)
    scales = 10.0 ** -np.linspace(1, 2.5, 5)
    d = np.array([0.6, -0.8])
    errs = []
    for s in scales:
        xp, lp = sysm.step(s * d[:1], s * d[1:])
        errs.append(np.abs(np.concatenate([xp, lp]) - G(s * d)).max())
    slope = np.polyfit(np.log(scales), np.log(errs), 1)[0]
    assert slope >= 2.5


def test_stable_manifold_examples():
    lq = scalar_lq(1.2, 1.0, 2.0, 1.0)
    sol = solve_dpe_series(lq, 4)
    m = stable_manifold_from_series(sol)
    assert m.phi(np.array([0.3]))[0] == pytest.approx(sol.P[0, 0] * 0.3)
    m = stable_manifold_from_series(solve_dpe_series(discrete_exact(), 4))
    np.testing.assert_allclose([m.phi.part(1)[0, 0], m.phi.part(2)[0, 0]], [1.0, 3.0], atol=1e-13)
    from hjbseries.albrecht import solve_hjb_series
    from hjbseries.problems import log_cost
    m = stable_manifold_from_series(solve_hjb_series(log_cost(), 4))
    np.testing.assert_allclose([m.phi.part(k)[0, 0] for k in (1, 2, 3)], [2, -3, 11 / 3], atol=1e-12)


def test_invariance_exact_cases():
    lq = scalar_lq(1.2, 1.0, 2.0, 1.0)
    res = invariance_check(stable_manifold_from_series(solve_dpe_series(lq, 4)), lq)
    assert res.defects.max() <= 1e-12
    p = discrete_exact()
    res = invariance_check(stable_manifold_from_series(solve_dpe_series(p, 4)), p)
    assert res.defects.max() <= 1e-10


def test_invariance_slope_truncated():
    p = random_problem(1, DISCRETE, n=2, top=6, scale=0.2, sv=(0.4, 0.9))
    res = invariance_check(stable_manifold_from_series(solve_dpe_series(p, 4)), p)
    assert res.slope >= 3.5


def test_phi_taylor_linear_is_zero():
    res = solve_phi_taylor(scalar_lq(1.2, 1.0, 2.0, 1.0), 5)
    assert all(np.abs(res.phi_z.part(d)).max() == 0.0 for d in range(2, 5))


def test_manifold_level_scalar():
    Phi = manifold_level_solve([[0.4]], [[2.0]], [[-1.0]], 2)
    assert Phi[0, 0] == pytest.approx(-1 / (2 - 0.16))
    assert Phi[0, 0] == pytest.approx(-0.54348, abs=1e-5)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_phi_taylor_matches_gradient(seed):
    p = random_problem(seed, DISCRETE, n=2, top=4, sv=(0.4, 0.9))
    r = 5
    res = solve_phi_taylor(p, r)
    phi = res.to_xlambda()
    ref = grad(solve_dpe_series(p, r).pi)
    for d in range(1, r):
        assert np.abs(phi.part(d) - ref.part(d)).max() <= 1e-8 * (1 + np.abs(ref.part(d)).max())
    X = np.random.default_rng(seed).uniform(-0.5, 0.5, size=(50, 2))
    assert closedness_check(phi, X) <= 1e-8


def test_closedness_controls():
    rng = np.random.default_rng(0)
    from hjbseries.polyalg import n_monomials
    s = PolySeries(2, 1, 5, {d: rng.normal(size=(1, n_monomials(2, d))) for d in range(2, 6)})
    X = rng.normal(size=(30, 2))
    assert closedness_check(grad(s), X) <= 1e-14 * (1 + np.abs(X).max() ** 4) * 100
    bad = grad(s) + PolySeries.linear([[0.0, 1.0], [-1.0, 0.0]], 4)
    assert closedness_check(bad, X) > 0.1


@given(st.integers(0, 2**31))
def test_two_form(seed):
    p = random_problem(seed % 50, DISCRETE, n=2, top=3, scale=0.2, sv=(0.4, 0.9))
    sysm = HamiltonianSystem(p)
    # the forward step only exists where H22 is safely invertible
    assume(np.linalg.cond(sysm.blocks.H22) < 20)
    rng = np.random.default_rng(seed)
    x, lam = rng.uniform(-1e-3, 1e-3, 2), rng.uniform(-1e-3, 1e-3, 2)
    v, w = rng.normal(size=4), rng.normal(size=4)
    assert two_form_defect(sysm, x, lam, v, w) <= 1e-10 * (1 + np.linalg.norm(v) * np.linalg.norm(w))
