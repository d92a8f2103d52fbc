"""Batch front end.

A run is described by a YAML document::

    problem: poisson-benchmark      # see PROBLEMS
    seed: 0
    output: runs/bench
    schedule: {n_min: 10, n_max: 20, max_bond: 30, max_sweeps: 10, tol: 1.0e-6}
    restriction: avg                # avg | cst
    prolongation: linear            # constant | linear | cubic | four_point
    physics: {c: 0.25}              # problem parameters
    slices: [{dim: 0}]              # 1D cuts written as TSV

``qttmg validate spec.yaml`` checks a document without running it.
Exit codes: 0 converged, 2 finished but not converged, 1 error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import core
from .core import DENSE_CAP_ENV, TruncationPolicy, load_qtt, save_qtt
from .grid import FunctionAdaptor, Ordering, QuanticsGrid, interleaved, slice_values
from .problems import h2plus, poisson
from .scale_ops import ProlongationKind, RestrictionKind
from .solvers import CycleSchedule, EigenProblem, SolveReport, SweepConfig, vcycle_eigen, vcycle_linear
from .tci import pivot_error_sweep

log = logging.getLogger("qttmg")

PROBLEMS = ("poisson-benchmark", "poisson-density", "schrodinger-3d", "schrodinger-4d",
            "vibrational-1d", "ha-3d")
DIMS = {"poisson-benchmark": 2, "poisson-density": 2, "schrodinger-3d": 3, "schrodinger-4d": 4,
        "vibrational-1d": 1, "ha-3d": 3}
PROLONGATIONS = ("constant", "linear", "cubic", "four_point")

# physics keys accepted per problem, with defaults
PHYSICS = {
    "poisson-benchmark": {"h": 1.0, "c": 0.25, "v_t": 1.0, "v_sc": -1.0, "half_width": 8.0},
    "poisson-density": {"h": 100.0, "w": 50.0, "half_width": 256.0, "gates": False, "c": 25.0,
                        "v_t": 1.0, "v_sc": -1.0, "tci_bond": 80},
    "schrodinger-3d": {"bond_length": 2.0, "half_box": 25.0, "field": 0.0, "n_states": 1,
                       "tci_bond": 120, "penalty": None},
    "schrodinger-4d": {"half_box": 10.0, "r_interval": [1.2, 3.2], "n_states": 1, "tci_bond": 120},
    "vibrational-1d": {"electron_bits": 7, "half_box": 24.0, "r_lo": 1.2, "r_step": 0.15, "r_bits": 4,
                       "electron_bond": 64, "mass": h2plus.PROTON_MASS, "n_states": 2,
                       "tci_bond": 120},
    "ha-3d": {"r_min": 2.0, "omega_cm": h2plus.OMEGA_REFERENCE_CM, "half_box": 25.0,
              "mass": h2plus.PROTON_MASS, "quadrature": 40, "n_states": 1, "tci_bond": 120},
}
SCHEDULE = {"n_min": None, "n_max": None, "step": None, "max_bond": 32, "max_sweeps": 10,
            "tol": 1e-8, "rel_tol": 1e-16, "min_sweeps": 1, "static": False, "ordering": None}
TOP = {"problem", "seed", "output", "schedule", "restriction", "prolongation", "physics", "slices"}


class SpecError(ValueError):
    def __init__(self, field: str, line: int | None, message: str):
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{field}{where}: {message}")
        self.field = field
        self.line = line


# ---------------------------------------------------------------------------
# spec parsing


def _lines(node, prefix="") -> dict[str, int]:
    """Map dotted key paths to 1-based line numbers from a YAML node tree."""
    out = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[path] = k.start_mark.line + 1
            out.update(_lines(v, path))
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            path = f"{prefix}[{i}]"
            out[path] = v.start_mark.line + 1
            out.update(_lines(v, path))
    return out


def load_spec(path) -> dict:
    """Parse and validate a spec file; returns the normalized spec dict."""
    text = Path(path).read_text()
    try:
        node = yaml.compose(text)
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise SpecError("<document>", mark.line + 1 if mark else None, str(exc)) from None
    return validate_spec(raw, _lines(node) if node is not None else {})


def validate_spec(raw, lines: dict[str, int] | None = None) -> dict:
    lines = lines or {}

    def fail(field, msg):
        raise SpecError(field, lines.get(field), msg)

    if not isinstance(raw, dict):
        fail("<document>", "expected a mapping at the top level")
    for k in raw:
        if k not in TOP:
            fail(k, f"unknown field (allowed: {', '.join(sorted(TOP))})")
    kind = raw.get("problem")
    if kind not in PROBLEMS:
        fail("problem", f"must be one of {', '.join(PROBLEMS)}, got {kind!r}")
    dims = DIMS[kind]
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        fail("seed", "must be a non-negative integer")
    out = {"problem": kind, "seed": seed, "output": str(raw.get("output", "qttmg-out"))}

    sched = dict(SCHEDULE)
    given = raw.get("schedule")
    if not isinstance(given, dict):
        fail("schedule", "required mapping with at least n_min and n_max")
    for k, v in given.items():
        if k not in SCHEDULE:
            fail(f"schedule.{k}", "unknown field")
        sched[k] = v
    for k in ("n_min", "n_max"):
        if not isinstance(sched[k], int) or sched[k] < dims:
            fail(f"schedule.{k}", f"must be an integer >= {dims}")
    if sched["step"] is None:
        sched["step"] = dims
    if sched["step"] != dims:
        fail("schedule.step", f"must equal the number of dimensions ({dims})")
    if sched["n_min"] > sched["n_max"]:
        fail("schedule.n_min", f"n_min {sched['n_min']} exceeds n_max {sched['n_max']}")
    for k in ("n_min", "n_max"):
        if sched[k] % dims:
            fail(f"schedule.{k}", f"must be a multiple of {dims}")
    n_levels = (sched["n_max"] - sched["n_min"]) // dims + 1
    for k in ("max_bond", "max_sweeps"):
        v = sched[k]
        vals = v if isinstance(v, list) else [v]
        if isinstance(v, list) and len(v) != n_levels:
            fail(f"schedule.{k}", f"needs one entry per level ({n_levels})")
        if not all(isinstance(x, int) and x > 0 for x in vals):
            fail(f"schedule.{k}", "must be positive integers")
    tols = sched["tol"] if isinstance(sched["tol"], list) else [sched["tol"]]
    if isinstance(sched["tol"], list) and len(tols) != n_levels:
        fail("schedule.tol", f"needs one entry per level ({n_levels})")
    if not all(isinstance(t, (int, float)) and t > 0 for t in tols):
        fail("schedule.tol", "must be positive numbers")
    if not isinstance(sched["rel_tol"], (int, float)) or not 0 <= sched["rel_tol"] < 1:
        fail("schedule.rel_tol", "must be a number in [0, 1)")
    if not isinstance(sched["static"], bool):
        fail("schedule.static", "must be true or false")
    if sched["ordering"] is None:
        sched["ordering"] = [[0, 1]] if kind == "schrodinger-4d" else "sequential"
    if sched["ordering"] not in ("scale", "sequential") and not isinstance(sched["ordering"], list):
        fail("schedule.ordering", "scale, sequential or a list of dimension groups")
    out["schedule"] = sched

    rk = str(raw.get("restriction", "avg")).lower()
    if rk not in ("avg", "cst"):
        fail("restriction", "must be avg or cst")
    out["restriction"] = rk
    pk = str(raw.get("prolongation", "linear")).lower()
    if pk not in PROLONGATIONS:
        fail("prolongation", f"must be one of {', '.join(PROLONGATIONS)}")
    out["prolongation"] = pk

    phys = dict(PHYSICS[kind])
    given = raw.get("physics") or {}
    if not isinstance(given, dict):
        fail("physics", "must be a mapping")
    for k, v in given.items():
        if k not in phys:
            fail(f"physics.{k}", f"unknown for {kind} (allowed: {', '.join(sorted(phys))})")
        phys[k] = v
    for k, v in phys.items():
        ref = PHYSICS[kind][k]
        if isinstance(ref, bool):
            if not isinstance(v, bool):
                fail(f"physics.{k}", "must be true or false")
        elif isinstance(ref, (int, float)) and not isinstance(v, (int, float)):
            fail(f"physics.{k}", "must be a number")
        elif isinstance(v, float) and not np.isfinite(v):
            fail(f"physics.{k}", "must be finite")
    out["physics"] = phys

    slices = raw.get("slices", [])
    if not isinstance(slices, list):
        fail("slices", "must be a list")
    for i, s in enumerate(slices):
        if not isinstance(s, dict) or not isinstance(s.get("dim"), int) or not 0 <= s["dim"] < dims:
            fail(f"slices[{i}]", f"needs an integer dim in [0, {dims})")
    out["slices"] = slices
    return out


def _ordering(value) -> Ordering:
    if value == "scale":
        return Ordering("scale")
    if value == "sequential":
        return Ordering("sequential")
    return interleaved(*value)


def build_schedule(spec: dict) -> CycleSchedule:
    s = spec["schedule"]
    levels = tuple(range(s["n_min"], s["n_max"] + 1, s["step"]))
    n = len(levels)

    def per_level(v):
        return v if isinstance(v, list) else [v] * n

    cfgs = tuple(SweepConfig(max_sweeps=ms, tol=float(t), min_sweeps=min(s["min_sweeps"], ms),
                             truncation=TruncationPolicy(chi, float(s["rel_tol"])))
                 for ms, t, chi in zip(per_level(s["max_sweeps"]), per_level(s["tol"]),
                                       per_level(s["max_bond"])))
    return CycleSchedule(levels, sweep=cfgs, max_bond=tuple(per_level(s["max_bond"])),
                         prolongation=ProlongationKind.named(spec["prolongation"]),
                         restriction=RestrictionKind(spec["restriction"]),
                         static=s["static"], seed=spec["seed"])


# ---------------------------------------------------------------------------
# outputs


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v) if np.isfinite(v) else str(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def grid_meta(grid: QuanticsGrid) -> dict:
    return {"domain": [list(d) for d in grid.domain], "bits": list(grid.bits),
            "ordering": {"kind": grid.ordering.kind, "groups": [list(g) for g in grid.ordering.groups]},
            "names": list(grid.names), "centering": list(grid.centering)}


def grid_from_meta(meta: dict) -> QuanticsGrid:
    o = meta["ordering"]
    return QuanticsGrid(tuple(tuple(d) for d in meta["domain"]), tuple(meta["bits"]),
                        Ordering(o["kind"], tuple(tuple(g) for g in o["groups"])),
                        tuple(meta["names"]), tuple(meta["centering"]))


def save_state(tt, grid: QuanticsGrid, path: Path) -> None:
    """Write a train as QTT1 plus a ``.grid.json`` sidecar describing its grid."""
    save_qtt(tt, path)
    path.with_suffix(".grid.json").write_text(json.dumps(grid_meta(grid), indent=1) + "\n")


def load_state(path: Path):
    path = Path(path)
    tt = load_qtt(path)
    side = path.with_suffix(".grid.json")
    grid = grid_from_meta(json.loads(side.read_text())) if side.exists() else None
    return tt, grid


def write_tsv(path: Path, header: dict, columns: list[str], rows) -> None:
    """Tab-separated table; ``#`` lines carry ``key: value`` metadata."""
    with open(path, "w") as fh:
        for k, v in header.items():
            fh.write(f"# {k}: {json.dumps(_jsonable(v))}\n")
        fh.write("\t".join(columns) + "\n")
        for row in rows:
            fh.write("\t".join(repr(float(x)) for x in row) + "\n")


def read_tsv(path: Path) -> tuple[dict, list[str], np.ndarray]:
    header, columns, rows = {}, None, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition(": ")
            header[k] = json.loads(v)
        elif columns is None:
            columns = line.split("\t")
        elif line:
            rows.append([float(x) for x in line.split("\t")])
    return header, columns or [], np.array(rows).reshape(len(rows), len(columns or []))


def write_log(path: Path, report: SolveReport, t0: float, problem: str) -> None:
    """One JSON record per local update, ``t`` seconds since the run start."""
    with open(path, "w") as fh:
        for step, rec in enumerate(report.records):
            row = {"problem": problem, "step": step}
            row.update({k: v for k, v in rec.items() if k != "clock"})
            row["t"] = rec["clock"] - t0 if "clock" in rec else None
            fh.write(json.dumps(_jsonable(row), sort_keys=True) + "\n")


def read_log(path: Path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def write_summary(path: Path, summary: dict) -> None:
    path.write_text(json.dumps(_jsonable(summary), indent=1, sort_keys=True) + "\n")


def _slices(out: Path, name: str, tt, grid: QuanticsGrid, spec: dict, quantity: str, level: int) -> list[str]:
    files = []
    for s in spec["slices"]:
        d = s["dim"]
        fixed = {k: int(s.get("at", {}).get(str(k), 2 ** grid.bits[k] // 2))
                 for k in range(grid.dims) if k != d}
        coords, vals = slice_values(tt, grid, d, fixed)
        fname = f"{name}_slice_{grid.names[d]}.tsv"
        write_tsv(out / fname, {"grid": grid_meta(grid), "level": level, "quantity": quantity,
                                "dim": d, "fixed": fixed}, [grid.names[d], quantity],
                  zip(coords, vals))
        files.append(fname)
    return files


# ---------------------------------------------------------------------------
# problem runners; each returns (summary dict, report, [(name, train, grid)])


def _run_poisson_benchmark(spec, sched):
    p = poisson.PoissonBenchmark(**{k: float(v) for k, v in spec["physics"].items()})
    bits = spec["schedule"]["n_max"] // 2
    prob = poisson.benchmark_problem(p, bits, _ordering(spec["schedule"]["ordering"]))
    errors = []

    def on_level(i, x, g):
        errors.append({"level": i, "n_sites": g.n_sites, "error": poisson.benchmark_error(x, p, g)})

    x, rep = vcycle_linear(prob, sched, on_level)
    return {"errors": errors, "error": errors[-1]["error"]}, rep, [("solution", x, prob.grid)]


def _run_poisson_density(spec, sched):
    ph = spec["physics"]
    p = poisson.OscillatingCharge(h=ph["h"], w=ph["w"], half_width=ph["half_width"], gates=ph["gates"],
                                  c=ph["c"], v_t=ph["v_t"], v_sc=ph["v_sc"])
    bits = spec["schedule"]["n_max"] // 2
    grid = poisson.density_grid(p, bits, _ordering(spec["schedule"]["ordering"]))
    rho, eps = poisson.density_train(grid, p, max_bond=int(ph["tci_bond"]))
    x, rep = vcycle_linear(poisson.density_problem(p, rho, grid), sched)
    return ({"tci_error": eps, "density_mean": poisson.grid_mean(rho)}, rep,
            [("solution", x, grid), ("density", rho, grid)])


def _eigen_summary(states, prob: EigenProblem, parity: bool):
    out = []
    for e, psi in states:
        obs = h2plus.observables(psi, prob)
        row = {"energy": e, "kinetic": obs.kinetic, "potential": obs.potential, "virial": obs.virial}
        if parity:
            row["parity"] = h2plus.parity(psi, prob.grid)
        out.append(row)
    return out


def _run_schrodinger_3d(spec, sched):
    ph = spec["physics"]
    hs = h2plus.H2PlusSpec(bond_length=ph["bond_length"], half_box=ph["half_box"], field=ph["field"])
    bits = spec["schedule"]["n_max"] // 3
    prob = h2plus.problem_3d(hs, bits, _ordering(spec["schedule"]["ordering"]), max_bond=int(ph["tci_bond"]))
    states, rep = vcycle_eigen(prob, sched, int(ph["n_states"]), penalty=ph["penalty"])
    out = [(f"state{m}", psi, prob.grid) for m, (_, psi) in enumerate(states)]
    n_e, sub = h2plus.density(states[0][1], prob.grid, [0])
    out.append(("density_x", n_e, sub))
    return {"states": _eigen_summary(states, prob, ph["field"] == 0)}, rep, out


def _run_schrodinger_4d(spec, sched):
    ph = spec["physics"]
    hs = h2plus.H2PlusSpec(half_box=ph["half_box"], r_interval=tuple(ph["r_interval"]))
    bits = spec["schedule"]["n_max"] // 4
    prob = h2plus.problem_4d(hs, bits, _ordering(spec["schedule"]["ordering"]), max_bond=int(ph["tci_bond"]))
    states, rep = vcycle_eigen(prob, sched, int(ph["n_states"]))
    out = [(f"state{m}", psi, prob.grid) for m, (_, psi) in enumerate(states)]
    rows = _eigen_summary(states, prob, False)
    for m, (_, psi) in enumerate(states):
        n_n, g_n = h2plus.density(psi, prob.grid, [0])
        n_e, g_e = h2plus.density(psi, prob.grid, [1, 2, 3])
        rows[m]["nuclear_norm"] = h2plus.integrate(n_n, g_n)
        rows[m]["electron_norm"] = h2plus.integrate(n_e, g_e)
        out += [(f"nuclear_density{m}", n_n, g_n)]
    return {"states": rows}, rep, out


def _run_vibrational(spec, sched, jobs=1):
    ph = spec["physics"]
    hs = h2plus.H2PlusSpec(half_box=ph["half_box"], mass=ph["mass"])
    coarse = h2plus.curve_grid(ph["r_lo"], ph["r_step"], int(ph["r_bits"]))
    r = coarse.points(0)
    energies = h2plus.bo_curve(hs, r, int(ph["electron_bits"]), int(ph["electron_bond"]),
                               tci_bond=int(ph["tci_bond"]), jobs=jobs,
                               progress=lambda R, e: log.info("E(%.4f) = %.9f", R, e))
    extra = spec["schedule"]["n_max"] - coarse.n_sites
    if extra < 1:
        raise SpecError("schedule.n_max", None, f"must exceed the coarse curve bits ({coarse.n_sites})")
    mu = hs.reduced_mass
    res = h2plus.vibrational_1d(energies, coarse, mu, extra, int(ph["n_states"]),
                                max_bond=int(spec["schedule"]["max_bond"] if not isinstance(
                                    spec["schedule"]["max_bond"], list) else spec["schedule"]["max_bond"][-1]),
                                seed=spec["seed"])
    fit = res.fit
    summary = {"curve": [{"R": float(a), "E": float(b)} for a, b in zip(r, energies)],
               "levels": res.energies, "zero_point": res.zero_point, "curve_min": res.curve_min,
               "harmonic": {"omega_cm": fit.omega_cm, "r_min": fit.r_min, "e_min": fit.e_min,
                            "energy": fit.energy, "window": list(fit.window)}}
    if len(res.energies) > 1:
        summary["fundamental_cm"] = (res.energies[1] - res.energies[0]) * h2plus.HARTREE_TO_CM
    rep = SolveReport(converged=True)
    out = [(f"vib{m}", psi, res.grid) for m, psi in enumerate(res.states)] + [("curve", res.curve, res.grid)]
    return summary, rep, out


def _run_ha_3d(spec, sched):
    ph = spec["physics"]
    hs = h2plus.H2PlusSpec(half_box=ph["half_box"], mass=ph["mass"])
    omega = ph["omega_cm"] / h2plus.HARTREE_TO_CM
    nodes, weights = h2plus.harmonic_nodes(ph["r_min"], omega, hs.reduced_mass, int(ph["quadrature"]))
    bits = spec["schedule"]["n_max"] // 3
    prob = h2plus.problem_ha_3d(hs, bits, nodes, weights, _ordering(spec["schedule"]["ordering"]),
                                max_bond=int(ph["tci_bond"]))
    states, rep = vcycle_eigen(prob, sched, int(ph["n_states"]))
    rows = _eigen_summary(states, prob, True)
    for row in rows:
        row["total"] = row["energy"] + omega / 2
    return {"states": rows}, rep, [(f"state{m}", psi, prob.grid) for m, (_, psi) in enumerate(states)]


RUNNERS = {"poisson-benchmark": _run_poisson_benchmark, "poisson-density": _run_poisson_density,
           "schrodinger-3d": _run_schrodinger_3d, "schrodinger-4d": _run_schrodinger_4d,
           "vibrational-1d": _run_vibrational, "ha-3d": _run_ha_3d}


def run(spec_path, output: str | None = None, jobs: int = 1) -> int:
    spec = load_spec(spec_path)
    out = Path(output or spec["output"])
    out.mkdir(parents=True, exist_ok=True)
    sched = build_schedule(spec)
    t0 = time.perf_counter()
    runner = RUNNERS[spec["problem"]]
    if spec["problem"] == "vibrational-1d":
        summary, rep, trains = runner(spec, sched, jobs)
    else:
        summary, rep, trains = runner(spec, sched)
    files = []
    for name, tt, grid in trains:
        save_state(tt, grid, out / f"{name}.qtt")
        files.append(f"{name}.qtt")
        files += _slices(out, name, tt, grid, spec, name, len(sched.levels) - 1)
    write_log(out / "log.jsonl", rep, t0, spec["problem"])
    full = {"problem": spec["problem"], "spec": spec, "result": summary, "solve": rep.summary(),
            "converged": bool(rep.converged), "files": sorted(files + ["log.jsonl"])}
    write_summary(out / "summary.json", full)
    return 0 if rep.converged else 2


# ---------------------------------------------------------------------------
# other subcommands


def _log_path(p) -> Path:
    p = Path(p)
    return p / "log.jsonl" if p.is_dir() else p


def compare(report_a, report_b) -> tuple[list[str], list[list[float]]]:
    """Per-update table ``step, a, b, b - a`` of energies (eigen runs) or
    local costs (linear runs); the shorter log is padded with its last value."""
    a, b = read_log(_log_path(report_a)), read_log(_log_path(report_b))
    if not a or not b:
        raise ValueError("empty log")
    if a[0]["problem"] != b[0]["problem"]:
        raise ValueError(f"incompatible problems: {a[0]['problem']} vs {b[0]['problem']}")
    key = "energy" if "energy" in a[0] else "cost"
    if key not in b[0]:
        raise ValueError("logs record different quantities")
    va = [r[key] for r in a]
    vb = [r[key] for r in b]
    n = max(len(va), len(vb))
    va += [va[-1]] * (n - len(va))
    vb += [vb[-1]] * (n - len(vb))
    return ["step", f"{key}_a", f"{key}_b", "diff"], [[i, x, y, y - x] for i, (x, y) in enumerate(zip(va, vb))]


def export_slice(qtt_path, dim: int, fixed: dict[int, int], out_path) -> None:
    tt, grid = load_state(qtt_path)
    if grid is None:
        raise ValueError(f"no grid sidecar next to {qtt_path}")
    if not 0 <= dim < grid.dims:
        raise ValueError(f"dim must be in [0, {grid.dims})")
    fixed = {d: fixed.get(d, 2 ** grid.bits[d] // 2) for d in range(grid.dims) if d != dim}
    coords, vals = slice_values(tt, grid, dim, fixed)
    write_tsv(Path(out_path), {"grid": grid_meta(grid), "source": str(qtt_path), "dim": dim,
                               "fixed": fixed, "quantity": Path(qtt_path).stem},
              [grid.names[dim], Path(qtt_path).stem], zip(coords, vals))


def tci_sweep(bits: int, bonds, out_path, bond_length: float = 2.0, half_box: float = 25.0,
              ordering: str = "sequential") -> list[tuple[int, float]]:
    """Pivot error of the 3D Coulomb kernel for each bond cap."""
    grid = h2plus.grid_3d(bits, half_box, _ordering(ordering))
    f = FunctionAdaptor(lambda x, y, z: h2plus.coulomb_kernel(bond_length, x, y, z), "coulomb")
    rows = pivot_error_sweep(f, grid, bonds)
    write_tsv(Path(out_path), {"grid": grid_meta(grid), "quantity": "pivot_error",
                               "function": "coulomb", "bond_length": bond_length}, ["chi", "eps"], rows)
    return rows


def _parse_fixed(items) -> dict[int, int]:
    out = {}
    for it in items or []:
        d, _, i = it.partition("=")
        out[int(d)] = int(i)
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="qttmg", description="Quantics tensor-train multigrid solvers")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("run", help="execute a problem spec")
    p.add_argument("spec")
    p.add_argument("-o", "--output", help="output directory (overrides the spec)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for independent sub-solves")
    p.add_argument("--dense-cap", type=int, help=f"override {DENSE_CAP_ENV}")
    p = sub.add_parser("validate", help="check a problem spec")
    p.add_argument("spec")
    p = sub.add_parser("compare", help="align two run logs")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.add_argument("-o", "--output", help="TSV file (default: stdout)")
    p = sub.add_parser("export-slice", help="1D cut of a saved train")
    p.add_argument("qtt")
    p.add_argument("--dim", type=int, default=0)
    p.add_argument("--at", nargs="*", metavar="DIM=INDEX", help="indices of the other dimensions")
    p.add_argument("-o", "--output", required=True)
    p = sub.add_parser("tci-sweep", help="Coulomb-kernel pivot error versus bond cap")
    p.add_argument("--bits", type=int, default=8, help="bits per dimension")
    p.add_argument("--chi", type=int, nargs="+", default=[25, 50, 100])
    p.add_argument("--bond-length", type=float, default=2.0)
    p.add_argument("--half-box", type=float, default=25.0)
    p.add_argument("-o", "--output", required=True)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.cmd == "run":
            if args.dense_cap is not None:
                os.environ[DENSE_CAP_ENV] = str(args.dense_cap)
            return run(args.spec, args.output, args.jobs)
        if args.cmd == "validate":
            spec = load_spec(args.spec)
            print(f"ok: {spec['problem']}, levels {build_schedule(spec).levels}")
            return 0
        if args.cmd == "compare":
            cols, rows = compare(args.report_a, args.report_b)
            if args.output:
                write_tsv(Path(args.output), {"a": args.report_a, "b": args.report_b}, cols, rows)
            else:
                print("\t".join(cols))
                for r in rows:
                    print("\t".join(repr(float(x)) for x in r))
            return 0
        if args.cmd == "export-slice":
            export_slice(args.qtt, args.dim, _parse_fixed(args.at), args.output)
            return 0
        if args.cmd == "tci-sweep":
            for chi, eps in tci_sweep(args.bits, args.chi, args.output, args.bond_length, args.half_box):
                print(f"{chi}\t{eps:.3e}")
            return 0
    except (SpecError, ValueError, OSError, KeyError, core.DenseCapExceeded) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 1


if __name__ == "__main__":
    sys.exit(main())
