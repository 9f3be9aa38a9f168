import json
from pathlib import Path

import numpy as np
import pytest

from hjbseries.exceptions import PreconditionError, ProblemFileError
from hjbseries.io import dumps_problem, load_problem, parse_problem, problem_to_doc, save_problem

PROBLEMS = Path(__file__).resolve().parents[1] / "problems"


def _doc(**over):
    doc = {
        "schema": 1,
        "header": {"name": "t", "mode": "discrete", "n": 1, "m": 1, "degree": 3},
        "dynamics": [{"component": 0, "alpha": [1], "beta": [0], "value": 0.5},
                     {"component": 0, "alpha": [0], "beta": [1], "value": 1.0}],
        "cost": [{"component": 0, "alpha": [2], "beta": [0], "value": 0.5},
                 {"component": 0, "alpha": [0], "beta": [2], "value": 0.5}],
    }
    doc.update(over)
    return doc


def test_log_cost_from_affine_section():
    lp = load_problem(PROBLEMS / "log_cost.json")
    Q, R, S = lp.control.quadratic_part()
    # l = ln(1+x)^2 + u^2 has monomial coefficients 1, so Q = R = 2
    assert Q[0, 0] == pytest.approx(2.0)
    assert R[0, 0] == pytest.approx(2.0)
    assert S[0, 0] == 0.0
    assert lp.control.l.part(3)[0, 0] == pytest.approx(-1.0)
    assert lp.control.l.part(4)[0, 0] == pytest.approx(11 / 12)
    assert lp.affine is not None
    assert any("Q=" in note for note in lp.notes)


@pytest.mark.parametrize("name", ["log_cost", "discrete_exact", "singular_a", "scalar_lq"])
def test_shipped_problems_load(name):
    lp = load_problem(PROBLEMS / f"{name}.json")
    assert lp.control.n == 1 and lp.degree >= 3


def test_no_linear_part_is_rejected():
    doc = _doc(dynamics=[{"component": 0, "alpha": [2], "beta": [0], "value": 1.0}])
    with pytest.raises(PreconditionError, match="A,B missing"):
        parse_problem(doc)


def test_indefinite_r_names_eigenvalue():
    doc = _doc(cost=[{"component": 0, "alpha": [2], "beta": [0], "value": 0.5},
                     {"component": 0, "alpha": [0], "beta": [2], "value": -0.5}])
    with pytest.raises(PreconditionError, match="eigenvalue -1"):
        parse_problem(doc)


def test_syntax_error_reports_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "schema": 1,\n  "header": {"mode": }\n}\n')
    with pytest.raises(ProblemFileError, match=r"line 3, column 22"):
        load_problem(path)


def test_missing_file(tmp_path):
    with pytest.raises(ProblemFileError, match="cannot read"):
        load_problem(tmp_path / "nope.json")


@pytest.mark.parametrize("over, msg", [
    ({"schema": 7}, "schema version"),
    ({"header": {"mode": "hybrid"}}, "header.mode"),
    ({"header": None}, "missing header"),
    ({"dynamics": [{"component": 3, "alpha": [1], "beta": [0], "value": 1.0}]}, "out of range"),
    ({"dynamics": [{"alpha": [1, 0], "beta": [0], "value": 1.0}]}, "exponents"),
    ({"dynamics": [{"alpha": [0], "beta": [0], "value": 1.0}]}, "at least 1"),
    ({"cost": [{"alpha": [1], "beta": [0], "value": 1.0}]}, "at least 2"),
    ({"cost": [{"alpha": [-1], "beta": [3], "value": 1.0}]}, "negative"),
    ({"cost": [{"alpha": [2], "value": "lots"}]}, "malformed"),
    ({"dynamics": {"a": 1}}, "list"),
])
def test_schema_violations(over, msg):
    with pytest.raises(ProblemFileError, match=msg):
        parse_problem(_doc(**over))


def test_nothing_to_solve():
    doc = _doc()
    del doc["dynamics"], doc["cost"]
    with pytest.raises(ProblemFileError, match="no dynamics"):
        parse_problem(doc)


def test_affine_needs_scalar_continuous():
    doc = _doc(affine1d={"g0": "0", "g1": "1", "l0": "x^2", "l1": "0", "l2": "1"})
    with pytest.raises(ProblemFileError, match="affine1d needs"):
        parse_problem(doc)


def _log_cost_with_series(l3):
    raw = json.loads((PROBLEMS / "log_cost.json").read_text())
    raw["dynamics"] = [{"component": 0, "alpha": [1], "beta": [1], "value": 1.0},
                       {"component": 0, "alpha": [0], "beta": [1], "value": 1.0}]
    raw["cost"] = [{"component": 0, "alpha": [2], "beta": [0], "value": 1.0},
                   {"component": 0, "alpha": [3], "beta": [0], "value": l3},
                   {"component": 0, "alpha": [4], "beta": [0], "value": 11 / 12},
                   {"component": 0, "alpha": [0], "beta": [2], "value": 1.0}]
    return raw


def test_series_and_affine_must_agree():
    lp = parse_problem(_log_cost_with_series(-1.0))
    assert any("agree" in n for n in lp.notes)
    with pytest.raises(ProblemFileError, match="disagree"):
        parse_problem(_log_cost_with_series(-0.9))


def test_round_trip_is_byte_stable(tmp_path):
    for src in sorted(PROBLEMS.glob("*.json")):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        save_problem(a, load_problem(src))
        save_problem(b, load_problem(a))
        assert a.read_bytes() == b.read_bytes()


def test_canonical_ignores_entry_order():
    doc = _doc()
    shuffled = _doc(dynamics=list(reversed(doc["dynamics"])), cost=list(reversed(doc["cost"])))
    assert dumps_problem(doc) == dumps_problem(shuffled)


def test_problem_to_doc_reloads():
    lp = parse_problem(_doc())
    again = parse_problem(problem_to_doc(lp.control, 3))
    for d in range(4):
        np.testing.assert_array_equal(again.control.f.part(d), lp.control.f.part(d))
        np.testing.assert_array_equal(again.control.l.part(d), lp.control.l.part(d))
