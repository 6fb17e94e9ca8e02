import argparse
import csv
import json
import math

import numpy as np
import pytest

from ifcompact.cli import main, parse_levels
from ifcompact.geometry import GridSpec, classify_points
from ifcompact.harness import (
    FIELD_COLUMNS, HarnessError, convergence_order, emit_csv, emit_fields, emit_json,
    emit_stencil_debug, exact_error_norms, load_json, node_masks, refinement_study,
    richardson_norms, run_case, weighted_l2,
)
from ifcompact.problem import builtin
from ifcompact.solver import FieldGrid


def test_weighted_norm_single_node():
    mask = np.zeros((3, 3), bool)
    mask[1, 1] = True
    v = np.zeros((3, 3))
    v[1, 1] = -2.0
    assert weighted_l2(v, mask, 1.0) == 2.0
    assert weighted_l2(v, mask, 0.5) == 1.0


def test_vector_norm_sums_components():
    mask = np.ones((2, 2), bool)
    v = np.zeros((2, 2, 2))
    v[0, 0] = [3.0, 4.0]
    assert weighted_l2(v, mask, 1.0) == pytest.approx(5.0)


def test_order_formula():
    assert convergence_order(1e-2, 6.25e-4) == pytest.approx(4.0)
    assert convergence_order(None, 1.0) is None
    assert convergence_order(0.0, 1.0) is None


def test_node_sets_partition():
    p = builtin(1)
    cls = classify_points(GridSpec(*p.rect, 32), p.psi)
    m = node_masks(cls)
    assert np.array_equal(m["R"] | m["I"], m["Omega"]) and not np.any(m["R"] & m["I"])
    v = np.random.default_rng(0).normal(size=m["Omega"].shape)
    h = 0.1
    total = weighted_l2(v, m["Omega"], h) ** 2
    assert weighted_l2(v, m["R"], h) ** 2 + weighted_l2(v, m["I"], h) ** 2 == pytest.approx(total)


def _exact_fields(p, grid):
    X, Y = np.meshgrid(grid.xs(), grid.ys(), indexing="ij")
    cls = classify_points(grid, p.psi)
    side = np.where(cls.plus, 1, -1)
    ux, uy = p.exact_gradient_on(side[1:-1, 1:-1], X[1:-1, 1:-1], Y[1:-1, 1:-1])
    return FieldGrid(grid, p.exact(X, Y), ux, uy), cls


def test_exact_fields_have_zero_error():
    p = builtin(2)
    fields, cls = _exact_fields(p, GridSpec(*p.rect, 16))
    errs = exact_error_norms(p, fields, cls)
    assert len(errs) == 9 and max(errs.values()) == 0.0


def test_relative_error_scaling():
    p = builtin(2)
    fields, cls = _exact_fields(p, GridSpec(*p.rect, 16))
    fields.u[1:-1, 1:-1] *= 1.01
    errs = exact_error_norms(p, fields, cls)
    assert errs["L2_Omega"] == pytest.approx(0.01)
    assert errs["H1_Omega"] == 0.0


def test_richardson_norms():
    p = builtin(6)
    coarse = GridSpec(*p.rect, 8)
    fine = coarse.refine()
    cls = classify_points(coarse, p.psi)
    c = FieldGrid(coarse, np.ones((9, 9)), np.zeros((7, 7)), np.zeros((7, 7)))
    f = FieldGrid(fine, np.zeros((17, 17)), np.ones((15, 15)), np.zeros((15, 15)))
    out = richardson_norms(p, c, f, cls)
    assert out["L2_Omega"] == pytest.approx(coarse.h * 7)
    assert out["H1_Omega"] == pytest.approx(coarse.h * 7)
    with pytest.raises(HarnessError):
        richardson_norms(p, c, c, cls)


def test_refinement_study_orders():
    p = builtin(1)
    rep = refinement_study(p, [3, 4, 5], condition=False)
    assert rep.kind == "relative" and [lv.J for lv in rep.levels] == [3, 4, 5]
    assert rep.levels[1].orders == {}
    assert set(rep.levels[2].orders) == set(rep.error_keys())
    full = refinement_study(p, [3, 4, 5], include_coarse=True, condition=False)
    assert full.levels[1].orders["L2_Omega"] == pytest.approx(
        math.log2(full.levels[0].errors["L2_Omega"] / full.levels[1].errors["L2_Omega"]))
    with pytest.raises(HarnessError):
        rep.mean_order("L2_Omega", pairs=2)
    assert rep.mean_order("L2_Omega", pairs=1) == rep.levels[2].orders["L2_Omega"]


def test_unknown_solution_study_uses_finer_companion():
    rep = refinement_study(builtin(9), [4], condition=False)
    assert rep.kind == "richardson"
    assert rep.error_keys() == ["L2_Omega", "H1_Omega", "V_Omega"]
    assert rep.levels[0].errors["L2_Omega"] > 0


def test_run_case_limits():
    with pytest.raises(HarnessError):
        run_case(builtin(1), 11)


def test_outputs(tmp_path):
    rep = refinement_study(builtin(1), [3, 4], include_coarse=True, condition=True, debug=True)
    path = emit_csv([rep], tmp_path / "r.csv")
    rows = list(csv.DictReader(path.open()))
    assert len(rows) == 2 and rows[1]["J"] == "4"
    assert float(rows[1]["order_L2_Omega"]) == pytest.approx(rep.levels[1].orders["L2_Omega"])
    doc = load_json(emit_json([rep], tmp_path / "r.json"))
    lv = doc["studies"][0]["levels"][1]
    assert doc["studies"][0]["example"] == "builtin:1"
    assert lv["L2_Omega"] == rep.levels[1].errors["L2_Omega"]
    assert lv["kappa"] == rep.levels[1].kappa

    fpath = emit_fields(rep.levels[0], tmp_path / "f.csv")
    frows = list(csv.reader(fpath.open()))
    assert tuple(frows[0]) == FIELD_COLUMNS
    assert len(frows) == 1 + 7 * 7
    assert {r[-1] for r in frows[1:]} <= {"R+", "R-", "I"}
    assert sum(r[-1] == "I" for r in frows[1:]) == rep.levels[0].n_irregular

    dpath = emit_stencil_debug(rep.levels[1], tmp_path / "s.json")
    recs = json.loads(dpath.read_text())["nodes"]
    assert len(recs) == rep.levels[1].n_irregular
    assert len(recs[0]["weights"]) == 9 and len(recs[0]["singular_values"]) == 9


def test_parse_levels():
    assert parse_levels("3..5") == [3, 4, 5]
    assert parse_levels("6") == [6]
    assert parse_levels("3,5") == [3, 5]
    with pytest.raises(argparse.ArgumentTypeError):
        parse_levels("5..3")


def test_cli_run(tmp_path, capsys):
    out = tmp_path / "out"
    rc = main(["--case", "builtin:1", "--levels", "3..4", "--out", str(out), "--emit-fields",
               "--debug-stencils", "--no-condition"])
    assert rc == 0
    for name in ("results.csv", "results.json", "fields_J3.csv", "fields_J4.csv",
                 "stencils_J3.json"):
        assert (out / name).exists()
    assert "builtin:1" in capsys.readouterr().out


def test_cli_problem_file(tmp_path):
    path = tmp_path / "p.txt"
    path.write_text(builtin(2).to_text())
    assert main(["--problem", str(path), "--levels", "3", "--out", str(tmp_path)]) == 0


def test_cli_errors(tmp_path, capsys):
    assert main(["--case", "builtin:99", "--out", str(tmp_path)]) == 2
    assert main(["--case", "example:1", "--out", str(tmp_path)]) == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("rect = 0, 1, 0, 1\npsi = x +\n")
    assert main(["--problem", str(bad), "--out", str(tmp_path)]) == 2
    assert "error:" in capsys.readouterr().err
