import csv
import logging

import numpy as np
import pytest

from hjbseries.exceptions import CharacteristicPointError, DomainError, PreconditionError
from hjbseries.patch import (
    AffineProblem1D, Patch, PatchedSolution, glue, march, origin_patch, patch_defect,
    taylor_at_point,
)

LOG_COST = AffineProblem1D("0", "x+1", "ln(1+x)^2", "0", "1", domain=(-1, 4), name="log_cost",
                         pi_exact="ln(1+x)^2", kappa_exact="-ln(1+x)")
LQ = AffineProblem1D("0", "1", "x^2", "0", "1", domain=(-2, 2), pi_exact="x^2")


def exact_data(x):
    L = np.log1p(x)
    return L * L, 2 * L / (1 + x), -L


@pytest.mark.parametrize("xbar", [0.7, 2.5, -0.5])
def test_exact_cauchy_data(xbar):
    q = taylor_at_point(LOG_COST, xbar, *exact_data(xbar), d=5)
    np.testing.assert_allclose(q.pi_jet, LOG_COST.pi_exact.jet(xbar, 6), atol=1e-9)
    np.testing.assert_allclose(q.kappa_jet, LOG_COST.kappa_exact.jet(xbar, 5), atol=1e-9)
    assert q.hjb_defect <= 1e-10


def test_second_order_formula():
    # pi'' = -(pi' g1' kappa + l0') / f for arbitrary consistent Cauchy data
    x, pi1 = 0.4, 0.3
    k0 = -pi1 * (1 + x) / 2
    q = taylor_at_point(LOG_COST, x, 0.1, pi1, k0, d=2)
    f = (1 + x) * k0
    expected = -(pi1 * k0 + 2 * np.log1p(x) / (1 + x)) / f
    assert 2 * q.pi_jet[2] == pytest.approx(expected, rel=1e-13)


def test_characteristic_and_inconsistent():
    with pytest.raises(CharacteristicPointError, match="characteristic"):
        taylor_at_point(LOG_COST, 0.0, 0.0, 0.0, 0.0, 3)
    with pytest.raises(PreconditionError):
        taylor_at_point(LOG_COST, 0.5, 0.1, 0.3, -0.1, 3)
    with pytest.raises(DomainError):
        taylor_at_point(LOG_COST, 5.0, 0.1, 0.3, -0.9, 3)


def test_problem_validation():
    with pytest.raises(PreconditionError):
        AffineProblem1D("1+x", "1", "x^2", "0", "1")
    with pytest.raises(PreconditionError):
        AffineProblem1D("x", "1", "x", "0", "1")
    with pytest.raises(PreconditionError, match="l2"):
        AffineProblem1D("x", "1", "x^2", "0", "x", domain=(-1, 1))


def test_self_consistency_of_march_patches():
    ps = march(LOG_COST, 3, direction=1, max_patches=4)
    for q in ps.patches[1:]:
        res = patch_defect(LOG_COST, q)
        assert np.abs(res["cost"][1:]).max() <= 1e-10
        assert np.abs(res["gradient"]).max() <= 1e-10


def test_glue_rules():
    base, _ = origin_patch(LOG_COST, 3, 1.0)
    ps = PatchedSolution([base.with_interval((0.0, 0.5))])
    x = np.linspace(0.3, 0.5, 9)
    same = glue(ps, base.with_interval((0.3, 0.8)))
    np.testing.assert_allclose(same.pi(x), ps.pi(x))
    up = Patch(base.center, base.pi_jet + np.r_[1.0, np.zeros(len(base.pi_jet) - 1)],
               base.kappa_jet, (0.3, 0.8))
    glued = glue(ps, up)
    np.testing.assert_allclose(glued.pi(x), ps.pi(x))
    assert np.all(glued.evaluate(x)[3] == 0)
    with pytest.raises(ValueError, match="disjoint"):
        glue(ps, base.with_interval((0.7, 0.9)))


def test_glue_overlap_coincidence():
    ps = march(LOG_COST, 3, direction=1, max_patches=3)
    q0, q1 = ps.patches[1], ps.patches[2]
    x = q1.center + np.linspace(-1e-3, 1e-3, 5)
    assert np.abs(q0.pi(x) - q1.pi(x)).max() <= 1e-6


def test_march_lq_single_patch():
    ps = march(LQ, 3, direction=1)
    assert len(ps.patches) == 1 and ps.stop_reason == "domain edge"
    ps = march(LQ, 3, direction=-1)
    assert len(ps.patches) == 1


def test_march_deterministic(caplog):
    with caplog.at_level(logging.WARNING):
        a = march(LOG_COST, 3, direction=-1, max_patches=4)
    b = march(LOG_COST, 3, direction=-1, max_patches=4)
    assert a.centers == b.centers
    for p, q in zip(a.patches, b.patches):
        assert np.array_equal(p.pi_jet, q.pi_jet) and p.interval == q.interval
    assert a.stop_reason == "max patches"
    assert all(c < 0 for c in a.centers[1:])


@pytest.mark.parametrize("direction", [1, -1])
def test_patched_residual_beats_origin_series(direction):
    ps = march(LOG_COST, 3, direction=direction, max_patches=20)
    x = LOG_COST.mesh_points(256)
    x = x[x * direction >= 0]
    _, dpi, ka, pid = ps.evaluate(x)
    assert np.all(pid >= 0)
    origin, _ = origin_patch(LOG_COST, 3, 1.0)
    rp = np.abs(LOG_COST.hjb_residual(x, dpi, ka))
    ro = np.abs(LOG_COST.hjb_residual(x, origin.dpi(x), origin.kappa(x)))
    lo, hi = ps.patches[0].interval
    outside = (x < lo) | (x > hi)
    assert np.all(rp[outside] <= ro[outside])
    edge = -1 if direction > 0 else 0
    assert rp[edge] < ro[edge]


def test_csv_columns(tmp_path):
    ps = march(LOG_COST, 3, direction=1, max_patches=2)
    path = tmp_path / "p.csv"
    x = LOG_COST.mesh_points(64)
    ps.to_csv(path, LOG_COST, x[x >= 0])
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["x", "pi", "kappa", "pi_exact", "residual", "patch_id"]
    assert rows[1][-1] == "0" and len(rows) == 1 + len(x[x >= 0])
    assert open(path, "rb").read().count(b"\r") == 0
