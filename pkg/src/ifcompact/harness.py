"""Refinement studies, error norms, convergence orders and result files."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Classification, GridSpec
from .problem import ProblemSpec
from .solver import FieldGrid, solve_problem

log = logging.getLogger(__name__)

NODE_SETS = ("Omega", "R", "I")
NORMS = ("L2", "H1", "V")


class HarnessError(ValueError):
    pass


@dataclass
class LevelResult:
    J: int
    h: float
    N: int
    n_irregular: int
    kappa: float | None
    residual: float
    wall_time: float
    errors: dict = field(default_factory=dict)
    orders: dict = field(default_factory=dict)
    fields: FieldGrid | None = None
    cls: Classification | None = None
    debug: dict | None = None


@dataclass
class StudyReport:
    name: str
    kind: str                     # "relative" or "richardson"
    solver: str
    levels: list[LevelResult]

    def error_keys(self) -> list[str]:
        if self.kind == "relative":
            return [f"{n}_{s}" for s in NODE_SETS for n in NORMS]
        return [f"{n}_Omega" for n in NORMS]

    def table(self) -> list[dict]:
        rows = []
        for lv in self.levels:
            row = {"example": self.name, "kind": self.kind, "solver": self.solver, "J": lv.J,
                   "h": lv.h, "N": lv.N, "n_irregular": lv.n_irregular}
            for k in self.error_keys():
                row[k] = lv.errors.get(k)
                row[f"order_{k}"] = lv.orders.get(k)
            row.update(kappa=lv.kappa, residual=lv.residual, wall_time=lv.wall_time)
            rows.append(row)
        return rows

    def mean_order(self, key: str, pairs: int = 2) -> float:
        """Average of the last ``pairs`` reported orders for ``key``."""
        vals = [lv.orders[key] for lv in self.levels if lv.orders.get(key) is not None]
        if len(vals) < pairs:
            raise HarnessError(f"only {len(vals)} orders available for {key}")
        return float(np.mean(vals[-pairs:]))


# --------------------------------------------------------------------------
# node sets and norms

def node_masks(cls: Classification) -> dict[str, np.ndarray]:
    """Interior masks, indexed [i-1, j-1]."""
    irr = cls.irregular
    return {"Omega": np.ones_like(irr), "R": ~irr, "I": irr.copy()}


def node_sides(cls: Classification) -> np.ndarray:
    return np.where(cls.plus[1:-1, 1:-1], 1, -1)


def weighted_l2(values: np.ndarray, mask: np.ndarray, h: float) -> float:
    """sqrt(h^2 * sum over the mask of values^2); trailing axes are summed too."""
    v = np.asarray(values, dtype=float)
    v = v.reshape(mask.shape + (-1,))
    return float(h * math.sqrt(np.sum(v[mask] ** 2)))


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else (0.0 if num == 0 else math.inf)


def exact_error_norms(problem: ProblemSpec, fields: FieldGrid, cls: Classification) -> dict:
    """Relative L2, H1 and V errors on the three node sets."""
    if not problem.has_exact:
        raise HarnessError(f"{problem.name} has no exact solution")
    grid = fields.grid
    h = grid.h
    X, Y = np.meshgrid(grid.xs()[1:-1], grid.ys()[1:-1], indexing="ij")
    side = node_sides(cls)
    u = problem.exact(X, Y)
    ux, uy = problem.exact_gradient_on(side, X, Y)
    a = problem.coefficient_on(side, X, Y)
    du = fields.interior_u() - u
    dg = np.stack([fields.ux - ux, fields.uy - uy], axis=-1)
    g = np.stack([ux, uy], axis=-1)
    out = {}
    for s, mask in node_masks(cls).items():
        out[f"L2_{s}"] = _ratio(weighted_l2(du, mask, h), weighted_l2(u, mask, h))
        out[f"H1_{s}"] = _ratio(weighted_l2(dg, mask, h), weighted_l2(g, mask, h))
        out[f"V_{s}"] = _ratio(weighted_l2(a[..., None] * dg, mask, h),
                               weighted_l2(a[..., None] * g, mask, h))
    return out


def richardson_norms(problem: ProblemSpec, coarse: FieldGrid, fine: FieldGrid,
                     cls: Classification) -> dict:
    """Absolute differences between a grid and its refinement at shared nodes."""
    gc, gf = coarse.grid, fine.grid
    if (gc.l1, gc.l2, gc.l3, gc.l4) != (gf.l1, gf.l2, gf.l3, gf.l4) or gf.N1 != 2 * gc.N1:
        raise HarnessError("grids are not nested")
    h = gc.h
    X, Y = np.meshgrid(gc.xs()[1:-1], gc.ys()[1:-1], indexing="ij")
    a = problem.coefficient_on(node_sides(cls), X, Y)
    du = coarse.interior_u() - fine.u[2:-2:2, 2:-2:2]
    # fine gradient arrays are interior-indexed [i-1, j-1]; node 2i sits at 2i-1
    dg = np.stack([coarse.ux - fine.ux[1::2, 1::2], coarse.uy - fine.uy[1::2, 1::2]], axis=-1)
    mask = node_masks(cls)["Omega"]
    return {"L2_Omega": weighted_l2(du, mask, h),
            "H1_Omega": weighted_l2(dg, mask, h),
            "V_Omega": weighted_l2(a[..., None] * dg, mask, h)}


def convergence_order(err_coarse: float | None, err_fine: float | None) -> float | None:
    if err_coarse is None or err_fine is None or err_coarse <= 0 or err_fine <= 0:
        return None
    return math.log2(err_coarse / err_fine)


# --------------------------------------------------------------------------
# runs

def run_case(problem: ProblemSpec, J: int, solver: str = "direct", condition: bool = True,
             debug: bool = False) -> LevelResult:
    if not 1 <= J <= 10:
        raise HarnessError(f"level J={J} out of range")
    grid = GridSpec(*problem.rect, 2 ** J)
    t0 = time.perf_counter()
    fields, disc, info = solve_problem(problem, grid, method=solver, condition=condition,
                                       debug=debug)
    elapsed = time.perf_counter() - t0
    lv = LevelResult(J, grid.h, info["N"], info["n_irregular"], info["kappa"],
                     info["residual"], elapsed, fields=fields, cls=disc.cls,
                     debug=disc.debug if debug else None)
    if problem.has_exact:
        lv.errors = exact_error_norms(problem, fields, disc.cls)
    return lv


def refinement_study(problem: ProblemSpec, levels, solver: str = "direct",
                     include_coarse: bool = False, condition: bool = True,
                     debug: bool = False) -> StudyReport:
    """Run every level; unknown-solution problems also solve one finer grid.

    Orders are attached to the finer level of each pair.  The coarsest pair is
    left without an order unless ``include_coarse`` is set.
    """
    levels = sorted(set(levels))
    if not levels:
        raise HarnessError("no levels requested")
    known = problem.has_exact
    runs = levels if known else levels + [levels[-1] + 1]
    results = {}
    for J in runs:
        log.info("%s: J=%d", problem.name, J)
        results[J] = run_case(problem, J, solver, condition, debug)
    if not known:
        for J in levels:
            if J + 1 in results:
                results[J].errors = richardson_norms(problem, results[J].fields,
                                                     results[J + 1].fields, results[J].cls)
    out = [results[J] for J in levels]
    for k, lv in enumerate(out[1:], start=1):
        if k == 1 and not include_coarse:
            continue
        prev = out[k - 1]
        if prev.J + 1 != lv.J:
            continue
        lv.orders = {key: convergence_order(prev.errors.get(key), lv.errors.get(key))
                     for key in lv.errors}
    kind = "relative" if known else "richardson"
    return StudyReport(problem.name, kind, solver, out)


# --------------------------------------------------------------------------
# output

def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        v = v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def emit_csv(reports: list[StudyReport], path) -> Path:
    path = Path(path)
    rows = [r for rep in reports for r in rep.table()]
    columns: list[str] = []
    for r in rows:
        columns.extend(k for k in r if k not in columns)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if r.get(k) is None else r[k]) for k in columns})
    return path


def emit_json(reports: list[StudyReport], path) -> Path:
    path = Path(path)
    doc = {"studies": [{"example": rep.name, "kind": rep.kind, "solver": rep.solver,
                        "levels": [{k: _jsonable(v) for k, v in row.items()
                                    if k not in ("example", "kind", "solver")}
                                   for row in rep.table()]}
                       for rep in reports]}
    path.write_text(json.dumps(doc, indent=2))
    return path


def load_json(path) -> dict:
    return json.loads(Path(path).read_text())


FIELD_COLUMNS = ("i", "j", "x", "y", "u_h", "ux", "uy", "class")


def emit_fields(level: LevelResult, path) -> Path:
    """Per-node dump: class is R+ / R- for regular nodes and I for irregular ones."""
    if level.fields is None or level.cls is None:
        raise HarnessError("level has no stored fields")
    f = level.fields
    g = f.grid
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(FIELD_COLUMNS)
        for i in range(1, g.N1):
            for j in range(1, g.N2):
                irr = level.cls.irregular[i - 1, j - 1]
                tag = "I" if irr else ("R+" if level.cls.side[i - 1, j - 1] > 0 else "R-")
                x, y = g.node(i, j)
                w.writerow([i, j, repr(float(x)), repr(float(y)), repr(float(f.u[i, j])),
                            repr(float(f.ux[i - 1, j - 1])), repr(float(f.uy[i - 1, j - 1])), tag])
    return path


def emit_stencil_debug(level: LevelResult, path) -> Path:
    """Per-node JSON records of the irregular solution rows."""
    path = Path(path)
    d = (level.debug or {}).get("irregular")
    records = []
    if d:
        for n in range(len(d["i"])):
            records.append({
                "i": int(d["i"][n]), "j": int(d["j"][n]),
                "base": [float(d["base_x"][n]), float(d["base_y"][n])],
                "v0": float(d["v0"][n]), "w0": float(d["w0"][n]),
                "weights": d["weights"][n].tolist(),
                "rhs_coefficients": d["rhs_coefficients"][n].tolist(),
                "singular_values": d["singular_values"][n].tolist(),
            })
    path.write_text(json.dumps({"J": level.J, "nodes": records}, indent=1))
    return path
