"""Command-line front end: run orchestration and deterministic outputs.

Subcommands
    stiffness    effective stiffness table along the rod (CSV)
    solve1d      1D limit solve: JSON summary + per-segment CSV
    solve3d      3D thin-rod solve: JSON summary + ASCII nodal dump
    converge     h-ladder study: CSV + verdict JSON, exit 1 on failed gates
    griso-check  corrector-identity decomposition on synthetic fields

Every run writes its files atomically (temp file + rename) plus a
manifest.json recording the config hash, package and library versions,
wall-clock seconds and per-stage status.  CSV content is deterministic:
identical configs produce byte-identical files.  Exit codes: 0 pass,
1 acceptance criteria failed, 2 usage or IO error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .analysis import (
    LadderScenario,
    RotationPath,
    convergence_study,
    fit_slice_rotations,
    griso_decompose,
    make_ansatz_deformation,
    min_scaled_det,
)
from .config import ConfigError, RunConfig, parse_config
from .material import ElasticMaterialField
from .optim import MinimizeError
from .rod1d import (
    CurvatureField,
    Rod1DSolveError,
    frame_integrate,
    minimize_limit_energy,
    stationarity_residual_1d,
)
from .rod3d import PrismMesh, Rod3DSolveError, minimize_3d, rest_state
from .xsection import MeshError, StiffnessTable


def _fmt(x) -> str:
    """Shortest round-trip decimal form; deterministic in CPython."""
    return repr(float(x))


def _write_atomic(path: Path, content: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_json(path: Path, payload: dict):
    _write_atomic(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _csv(header, rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(cell if isinstance(cell, str) else _fmt(cell) for cell in row))
    return "\n".join(lines) + "\n"


class _Stages:
    def __init__(self):
        self.records = []

    def run(self, name, fn):
        t0 = time.perf_counter()
        try:
            out = fn()
        except Exception:
            self.records.append({"stage": name, "status": "failed",
                                 "seconds": time.perf_counter() - t0})
            raise
        self.records.append({"stage": name, "status": "ok",
                             "seconds": time.perf_counter() - t0})
        return out


def _manifest(out_dir: Path, subcommand: str, config, stages: _Stages,
              started: float, exit_code: int, extra: dict, args):
    payload = {
        "subcommand": subcommand,
        "config_sha256": hashlib.sha256(config.canonical_json().encode()).hexdigest(),
        "versions": {
            "thinrod": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": sys.version.split()[0],
        },
        "wall_clock_seconds": time.perf_counter() - started,
        "stages": stages.records,
        "exit_code": exit_code,
        "threads": args.threads,
        "seed": args.seed,
    }
    payload.update(extra)
    _write_json(out_dir / "manifest.json", payload)


def _stiffness_stations(config: RunConfig):
    n = config.rod1d["segments"]
    dx = config.length / n
    return (np.arange(n) + 0.5) * dx


def _gram_header():
    cols = ["x1"]
    for i in range(4):
        for j in range(i, 4):
            cols.append(f"gram_{i + 1}{j + 1}")
    for i in range(3):
        for j in range(i, 3):
            cols.append(f"reduced_{i + 1}{j + 1}")
    cols += ["bmin_1", "bmin_2", "bmin_3"]
    return cols


def _gram_row(x1, eff):
    row = [x1]
    row += [eff.gram[i, j] for i in range(4) for j in range(i, 4)]
    row += [eff.reduced[i, j] for i in range(3) for j in range(i, 3)]
    row += list(eff.bmin_row)
    return row


def _cmd_stiffness(config: RunConfig, out_dir: Path, stages: _Stages, args):
    section = stages.run("section", lambda: config.build_section(_mesh_text(config)))
    material = config.build_material()
    table = StiffnessTable(material, section)
    stations = _stiffness_stations(config)
    effs = stages.run("stiffness", lambda: table.sample(stations))
    rows = [_gram_row(x, e) for x, e in zip(stations, effs)]
    _write_atomic(out_dir / "stiffness.csv", _csv(_gram_header(), rows))
    return 0, {"stations": len(rows)}


def _solve_1d(config: RunConfig, section, material, load):
    n = config.rod1d["segments"]
    table = StiffnessTable(material, section)
    mids = (np.arange(n) + 0.5) * (config.length / n)
    eff_list = table.sample(mids)
    init = CurvatureField.zero(n, config.length)
    curv, state, result = minimize_limit_energy(
        init, eff_list, load, tol=config.solver["tol_1d"],
        max_iter=config.solver["max_iter_1d"],
    )
    residual = stationarity_residual_1d(state, eff_list, load)
    return curv, state, result, residual, eff_list


def _cmd_solve1d(config: RunConfig, out_dir: Path, stages: _Stages, args):
    section = stages.run("section", lambda: config.build_section(_mesh_text(config)))
    material = config.build_material()
    load = config.build_load()
    curv, state, result, residual, eff_list = stages.run(
        "solve1d", lambda: _solve_1d(config, section, material, load))
    from .rod1d import limit_energy

    energy = limit_energy(curv, eff_list, load)
    tip = state.tip_position()
    _write_json(out_dir / "solve1d_summary.json", {
        "energy": energy,
        "residual": residual,
        "tip_position": [float(v) for v in tip],
        "iterations": result.iterations,
        "gradient_norm": result.grad_norm,
        "init": "zero",
    })
    y_mid = 0.5 * (state.centerline[:-1] + state.centerline[1:])
    rows = []
    for i, x1 in enumerate(curv.midpoints()):
        a = curv.values[i]
        b = float(eff_list[i].bmin_row @ a)
        rows.append([x1, *y_mid[i], *a, b])
    header = ["x1", "y1", "y2", "y3", "a1", "a2", "a3", "bmin"]
    _write_atomic(out_dir / "solve1d.csv", _csv(header, rows))
    return 0, {"energy": energy, "residual": residual}


def _cmd_solve3d(config: RunConfig, out_dir: Path, stages: _Stages, args):
    section = stages.run("section", lambda: config.build_section(_mesh_text(config)))
    material = config.build_material()
    load = config.build_load()
    h = config.rod3d["h"]
    if config.rod3d["axial_elements"] is not None:
        n1 = config.rod3d["axial_elements"]
    else:
        n1 = max(config.rod3d["min_axial"],
                 int(np.ceil(config.rod3d["axial_per_h"] * config.length / h)))
    mesh = PrismMesh(section, config.length, n1)

    def solve():
        curv, state, _, _, _ = _solve_1d(config, section, material, load)
        lift = make_ansatz_deformation(mesh, h, RotationPath.from_rod_state(state))
        return minimize_3d(lift, material, load, tol=config.solver["tol_3d"],
                           max_iter=config.solver["max_iter_3d"])

    solution, result = stages.run("solve3d", solve)
    from .rod3d import energy_3d

    energy = energy_3d(solution, material, load)
    _write_json(out_dir / "solve3d_summary.json", {
        "energy": energy,
        "residual": result.grad_norm,
        "min_det": min_scaled_det(solution),
        "iterations": result.iterations,
        "h": h,
        "axial_elements": n1,
        "init": "1d-lift",
    })
    lines = []
    for node, y in zip(mesh.nodes, solution.values):
        lines.append(" ".join(_fmt(v) for v in (*node, *y)))
    _write_atomic(out_dir / "solve3d_nodes.txt", "\n".join(lines) + "\n")
    return 0, {"energy": energy, "min_det": min_scaled_det(solution)}


def _cmd_converge(config: RunConfig, out_dir: Path, stages: _Stages, args):
    section = stages.run("section", lambda: config.build_section(_mesh_text(config)))
    material = config.build_material()
    load = config.build_load()
    scenario = LadderScenario(
        length=config.length, section=section, material=material, load=load,
        axial_per_h=config.rod3d["axial_per_h"],
        axial_elements=config.rod3d["axial_elements"],
        min_axial=config.rod3d["min_axial"],
        tol_1d=config.solver["tol_1d"], tol_3d=config.solver["tol_3d"],
        max_iter_1d=config.solver["max_iter_1d"],
        max_iter_3d=config.solver["max_iter_3d"],
    )
    report = stages.run("ladder", lambda: convergence_study(
        scenario, config.h_list, thresholds=config.acceptance))
    header = ["h", "axial_elements", "err_grad", "err_rot", "energy_gap",
              "residual_1d", "ident_gap", "stress_mean", "elastic_energy",
              "total_energy", "min_det", "iterations_3d",
              "rate_err_grad", "rate_err_rot", "rate_stress", "rate_ident",
              "failure"]
    rows = []
    for i, r in enumerate(report.rows):
        rates = ["", "", "", ""]
        if report.rates and i > 0:
            rates = [report.rates["err_grad"][i - 1], report.rates["err_rot"][i - 1],
                     report.rates["stress_mean"][i - 1], report.rates["ident_gap"][i - 1]]
        rows.append([r.h, str(r.axial_elements), r.err_grad, r.err_rot, r.energy_gap,
                     r.residual_1d, r.ident_gap, r.stress_mean, r.elastic_energy,
                     r.total_energy, r.min_det, str(r.iterations_3d), *rates,
                     r.failure])
    _write_atomic(out_dir / "converge.csv", _csv(header, rows))
    verdict = {
        "verdicts": report.verdicts,
        "passed": report.passed(),
        "rates": report.rates,
        "basin_indicators": {
            "tip_positions": [list(r.tip_position) for r in report.rows],
            "total_energies": [r.total_energy for r in report.rows],
        },
    }
    _write_json(out_dir / "verdict.json", verdict)
    return (0 if report.passed() else 1), {"passed": report.passed()}


def _cmd_griso_check(config: RunConfig, out_dir: Path, stages: _Stages, args):
    material = config.build_material()
    rng = np.random.default_rng(config.solver["seed"] if args.seed is None else args.seed)
    h = config.rod3d["h"]
    results = []

    # one smooth displacement (vanishing at x1 = 0), sampled on every mesh,
    # so the bound constant is compared for the same continuum field
    freq = rng.uniform(1.0, 3.0, size=(3, 3))
    amp = rng.uniform(-1.0, 1.0, size=(3, 3))

    def synthetic(mesh):
        x = mesh.nodes
        u = np.zeros_like(x)
        for comp in range(3):
            u[:, comp] = x[:, 0] * (
                amp[comp, 0] * np.sin(freq[comp, 0] * x[:, 0])
                + amp[comp, 1] * np.cos(freq[comp, 1] * x[:, 1])
                + amp[comp, 2] * np.sin(freq[comp, 2] * x[:, 2])
            )
        return u

    def run_checks():
        from .xsection import center_and_normalize, generate_mesh

        s = config.section
        base_n1 = max(config.rod3d["min_axial"],
                      int(np.ceil(config.rod3d["axial_per_h"] * config.length / h)))
        for level, factor in enumerate((1.0, 1.5)):
            if s["kind"] == "imported":
                # imported sections cannot be re-meshed; refine axially only
                section = config.build_section(_mesh_text(config))
            else:
                section = center_and_normalize(generate_mesh(
                    s["kind"], s["target_edge"] / factor, radius=s["radius"],
                    width=s["width"], height=s["height"]))
            mesh = PrismMesh(section, config.length, int(np.ceil(base_n1 * factor)))
            dec = griso_decompose(mesh, synthetic(mesh), h)
            results.append({
                "level": level,
                "identity_residual": dec.identity_residual,
                "bound_constant": dec.bound_constant,
                "psi_w12": dec.psi_norm_w12,
                "v_l2": dec.v_norm_l2,
                "grad_v_l2": dec.grad_v_norm_l2,
                "sym_l2": dec.sym_norm_l2,
            })

    stages.run("griso", run_checks)
    consts = [r["bound_constant"] for r in results]
    stable = abs(consts[1] - consts[0]) <= 0.2 * max(consts)
    _write_json(out_dir / "griso.json", {
        "levels": results,
        "max_identity_residual": max(r["identity_residual"] for r in results),
        "bound_constants": consts,
        "stable_within_20pct": stable,
    })
    return 0, {"bound_constants": consts}


_COMMANDS = {
    "stiffness": _cmd_stiffness,
    "solve1d": _cmd_solve1d,
    "solve3d": _cmd_solve3d,
    "converge": _cmd_converge,
    "griso-check": _cmd_griso_check,
}


def _mesh_text(config: RunConfig):
    path = config.section.get("path")
    if config.section["kind"] == "imported" and path:
        return Path(path).read_text()
    return None


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="thinrod",
        description="Bending-torsion rod models: stiffness, 1D/3D solves, convergence study",
    )
    parser.add_argument("subcommand", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=False, help="JSON configuration file")
    parser.add_argument("--out", default=None, help="output directory (overrides config)")
    parser.add_argument("--threads", type=int, default=1,
                        help="recorded in the manifest; kernels are single-threaded")
    parser.add_argument("--seed", type=int, default=None,
                        help="overrides solver.seed for sampled diagnostics")
    args = parser.parse_args(argv)

    if args.config is None:
        config_text = "{}"
    else:
        try:
            config_text = Path(args.config).read_text()
        except OSError as exc:
            print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
            return 2
    try:
        config = parse_config(config_text)
    except ConfigError as exc:
        for path, msg in exc.errors:
            print(f"config error at {path or '/'}: {msg}", file=sys.stderr)
        return 2

    out_dir = Path(args.out) if args.out else Path(config.output_dir)
    started = time.perf_counter()
    stages = _Stages()
    extra: dict = {}
    try:
        code, extra = _COMMANDS[args.subcommand](config, out_dir, stages, args)
    except (MeshError, ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        _manifest(out_dir, args.subcommand, config, stages, started, 2, extra, args)
        return 2
    except (Rod1DSolveError, Rod3DSolveError, MinimizeError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        _manifest(out_dir, args.subcommand, config, stages, started, 1, extra, args)
        return 1
    _manifest(out_dir, args.subcommand, config, stages, started, code, extra, args)
    return code


if __name__ == "__main__":
    sys.exit(main())
