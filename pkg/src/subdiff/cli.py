"""Command-line entry point: solve, cascade, verify, kernels, convergence.

Every run writes into an output directory: CSV time series, JSON reports,
and a manifest listing each produced file with its checksum plus the
configuration hash.  Outputs carry no timestamps, so identical
configuration and seed reproduce byte-identical files.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cascade import extract_limit, run_cascade
from .config import RunConfig
from .errors import ConfigurationError, HypothesisError, SubdiffError
from .kernels import KernelPair, conv_weights, sonine_residual
from .nonlinearity import entropy_test_function, validate_slope_bound
from .space import coercivity_probe, l1_norm
from .stepper import TimeGrid, energy_audit, solve
from .verify import (CheckRecord, VerificationReport, _jsonable, contraction_check,
                     entropy_battery, entropy_contraction_check,
                     scalar_relaxation, weak_residual)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_BAD_INPUT = 2

ALL_CHECKS = ("relaxation", "weak", "contraction", "entropy", "energy")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(outdir: Path, config_text: str, seeds: dict):
    import numpy
    import scipy
    files = {p.name: _sha256(p) for p in sorted(outdir.iterdir())
             if p.is_file() and p.name != "manifest.json"}
    manifest = {
        "package": "subdiff",
        "version": __version__,
        "versions": {"numpy": numpy.__version__, "scipy": scipy.__version__},
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "seeds": seeds,
        "files": files,
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2,
                                                     sort_keys=True, default=_jsonable) + "\n")


def _prepare_outdir(cfg: RunConfig, override=None) -> Path:
    outdir = Path(override or cfg.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "config.ini").write_text(cfg.canonical_text())
    return outdir


def _dump_solution_csv(path: Path, history):
    coords = history.problem.interior_coords
    dim = history.problem.dim
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["t", "node"] + [f"x{d}" for d in range(dim)] + ["u", "v"]
        writer.writerow(header)
        for n, t in enumerate(history.grid.nodes):
            for i in range(history.problem.n_interior):
                writer.writerow([repr(float(t)), i]
                                + [repr(float(c)) for c in coords[i]]
                                + [repr(float(history.u[n, i])),
                                   repr(float(history.v[n, i]))])


def _load_config(args) -> RunConfig:
    if args.config:
        return RunConfig.from_file(args.config)
    return RunConfig.from_text("")


# -- solve ---------------------------------------------------------------------


def _cmd_solve(args) -> int:
    cfg = _load_config(args)
    problem = cfg.build_mesh()
    pair = cfg.build_pair()
    profile = cfg.build_profile()
    grid = cfg.build_grid()
    coercivity_probe(problem, grid.nodes[:: max(1, grid.n_steps // 16)])
    slope = validate_slope_bound(profile)
    if not slope.passed:
        raise HypothesisError(
            f"slope bound violated: min slope {slope.min_slope} < mu={slope.mu}")
    u0, f = cfg.build_data(problem)
    history = solve(problem, pair, profile, grid, u0, f,
                    newton=cfg.build_newton(), memory=cfg.memory_path,
                    soe_tol=cfg.soe_tol)
    outdir = _prepare_outdir(cfg, args.output)
    _dump_solution_csv(outdir / "solution.csv", history)
    if args.dump_steps:
        np.savetxt(outdir / "newton_iterations.csv",
                   np.column_stack([grid.nodes[1:], history.newton_iterations,
                                    history.newton_residuals]),
                   delimiter=",", header="t,iterations,residual", comments="")
    report = {
        "final_l1_norm": l1_norm(problem, history.u[-1]),
        "max_abs_value": float(np.max(np.abs(history.u))),
        "max_newton_iterations": int(max(history.newton_iterations)),
        "max_newton_residual": float(max(history.newton_residuals)),
        "memory_path": history.memory_path,
        "steps": grid.n_steps,
    }
    (outdir / "solve_report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True, default=_jsonable) + "\n")
    _write_manifest(outdir, cfg.canonical_text(), {})
    if args.timing:
        print(f"wall time: {history.wall_time:.3f}s", file=sys.stderr)
    print(f"solve: {grid.n_steps} steps, max |u| = {report['max_abs_value']:.6g}, "
          f"outputs in {outdir}")
    return EXIT_OK


# -- cascade -------------------------------------------------------------------


def _cmd_cascade(args) -> int:
    cfg = _load_config(args)
    problem = cfg.build_mesh()
    pair = cfg.build_pair()
    profile = cfg.build_profile()
    grid = cfg.build_grid()
    u0, f = cfg.build_data(problem)
    m_ladder = [int(v) for v in args.m_ladder.split(",")] if args.m_ladder \
        else cfg.m_ladder
    n_ladder = [int(v) for v in args.n_ladder.split(",")] if args.n_ladder \
        else cfg.n_ladder
    report = run_cascade(problem, pair, profile, grid, u0, f, m_ladder,
                         n_ladder, newton=cfg.build_newton(),
                         memory=cfg.memory_path)
    if args.tol is not None:
        tol = args.tol
    else:
        data_scale = l1_norm(problem, u0) + report.l1_bound_rhs
        tol = cfg.cascade_tol_coeff * max(data_scale, 1e-9)
    _, certificate = extract_limit(report, tol)
    outdir = _prepare_outdir(cfg, args.output)
    payload = {
        "m_values": report.m_values,
        "n_values": report.n_values,
        "solved": report.solved_count,
        "monotone_violation_m": report.monotone_violation_m,
        "monotone_violation_n": report.monotone_violation_n,
        "monotone_slack": report.slack,
        "envelope_violation_n": report.envelope_violation_n,
        "envelope_violation": report.envelope_violation,
        "negative_part_first_m_violation": report.negative_part_first_m,
        "negative_part_swapped_violation": report.negative_part_swapped,
        "l1_bound_rhs": report.l1_bound_rhs,
        "bound_violations": report.bound_violations,
        "runs": report.summary_rows(),
        "certificate": {
            "tolerance": certificate.tolerance,
            "m_tail_increments": list(certificate.m_tail_increments),
            "n_tail_increments": list(certificate.n_tail_increments),
            "converged": certificate.converged,
            "monotone_decrease": certificate.monotone_decrease,
            "warning": certificate.warning,
        },
    }
    (outdir / "cascade_report.json").write_text(
        json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")
    with open(outdir / "cascade_increments.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["direction", "fixed_index", "step", "increment_l1"])
        for n, incs in sorted(report.m_increments.items()):
            for i, v in enumerate(incs):
                writer.writerow(["m", n, i, repr(float(v))])
        for m, incs in sorted(report.n_increments.items()):
            for i, v in enumerate(incs):
                writer.writerow(["n", m, i, repr(float(v))])
    _write_manifest(outdir, cfg.canonical_text(), {})
    ok = (report.monotone_ok and report.bounds_ok and certificate.converged
          and report.solved_count == len(m_ladder) * len(n_ladder))
    print(f"cascade: {report.solved_count} runs, monotone violations "
          f"(m={report.monotone_violation_m:.2e}, n={report.monotone_violation_n:.2e}), "
          f"converged={certificate.converged}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# -- verify --------------------------------------------------------------------


def _battery_components(cfg: RunConfig, problem, grid):
    x = problem.interior_coords[:, 0]
    rng = np.random.default_rng(cfg.battery_seed)
    shapes = [entropy_test_function(K, 0.5 * K)
              for K in (0.05, 0.15, 0.4, 1.0, 2.0)]

    def bump(center, width):
        z = np.clip((x - center) / width, -1.0, 1.0)
        out = np.where(np.abs(z) < 1.0,
                       np.exp(-1.0 / np.maximum(1.0 - z * z, 1e-12)), 0.0)
        peak = out.max()
        return out / peak if peak > 0 else out

    psis = [np.zeros_like(x)]
    for _ in range(3):
        c = rng.uniform(0.2, 0.8) * problem.lengths[0]
        w = rng.uniform(0.1, 0.3) * problem.lengths[0]
        amp = rng.uniform(-0.4, 0.4)
        psis.append(amp * bump(c, w))
    T = grid.horizon
    zetas = [lambda t: 1.0 - t / T,
             lambda t: (1.0 - t / T) ** 2,
             lambda t: np.cos(0.5 * np.pi * t / T) ** 2]
    deltas = [frac * T for frac in cfg.delta_fractions]
    return shapes, psis, zetas, deltas


def _random_smooth_field(problem, rng, scale=1.0):
    x = problem.interior_coords[:, 0] / problem.lengths[0]
    coeffs = rng.standard_normal(4)
    out = sum(c * np.sin((k + 1) * np.pi * x) for k, c in enumerate(coeffs))
    peak = max(1.0, float(np.max(np.abs(out))))
    return scale * out / peak


def _paired_random_histories(cfg, problem, pair, profile, grid, seed):
    rng = np.random.default_rng(seed)
    u01 = _random_smooth_field(problem, rng)
    u02 = _random_smooth_field(problem, rng)
    s1 = _random_smooth_field(problem, rng)
    s2 = _random_smooth_field(problem, rng)
    mod1 = 1.0 + 0.5 * np.sin(2.0 * np.pi * grid.nodes / grid.horizon)
    mod2 = 1.0 + 0.5 * np.cos(3.0 * grid.nodes / grid.horizon)
    f1 = mod1[:, None] * s1[None, :]
    f2 = mod2[:, None] * s2[None, :]
    newton = cfg.build_newton()
    h1 = solve(problem, pair, profile, grid, u01, f1, newton=newton)
    h2 = solve(problem, pair, profile, grid, u02, f2, newton=newton)
    return h1, h2


def _cmd_verify(args) -> int:
    cfg = _load_config(args)
    checks = [c.strip() for c in args.checks.split(",")] if args.checks \
        else list(ALL_CHECKS)
    for c in checks:
        if c not in ALL_CHECKS:
            raise ConfigurationError(f"unknown check {c!r}; choose from "
                                     f"{','.join(ALL_CHECKS)}")
    if args.battery_seed is not None:
        cfg.battery_seed = args.battery_seed
    if args.delta_list:
        cfg.delta_fractions = [float(v) for v in args.delta_list.split(",")]
        cfg.validate()

    problem = cfg.build_mesh()
    pair = cfg.build_pair()
    profile = cfg.build_profile()
    grid = cfg.build_grid()
    report = VerificationReport(checks=[], metadata={
        "kernel": cfg.kernel_family, "alpha": cfg.alpha,
        "nonlinearity": cfg.nonlinearity_kind, "seed": cfg.battery_seed,
        "cells": list(cfg.cells), "steps": cfg.steps})

    benchmark = None

    def get_benchmark():
        nonlocal benchmark
        if benchmark is None:
            u0, f = cfg.build_data(problem)
            benchmark = solve(problem, pair, profile, grid, u0, f,
                              newton=cfg.build_newton(), memory=cfg.memory_path)
        return benchmark

    if "relaxation" in checks:
        if pair.family == "fractional":
            ladder_grid = TimeGrid.graded(cfg.horizon, 1024,
                                          (2.0 - cfg.alpha) / cfg.alpha)
            res = scalar_relaxation(pair, 1.0, ladder_grid)
            report.checks.append(CheckRecord(
                name="relaxation_oracle", lhs=res.max_rel_error, rhs=0.0,
                tolerance=1e-3))
        else:
            report.metadata["relaxation"] = "skipped: no closed-form oracle"

    if "weak" in checks:
        hist = get_benchmark()
        rng = np.random.default_rng(cfg.battery_seed)
        worst = 0.0
        for _ in range(4):
            eta = _random_smooth_field(problem, rng)
            worst = max(worst, weak_residual(hist, eta))
        scale = max(1.0, float(np.max(np.abs(hist.u))))
        report.checks.append(CheckRecord(
            name="weak_residual", lhs=worst, rhs=0.0,
            tolerance=10 * cfg.newton_tol * scale * grid.n_steps))

    if "contraction" in checks:
        pairs = args.pairs or 5
        for i in range(pairs):
            h1, h2 = _paired_random_histories(cfg, problem, pair, profile,
                                              grid, cfg.battery_seed + i)
            sub = contraction_check(h1, h2,
                                    allowance_coeff=cfg.allowance_coeff)
            for record in sub.checks:
                report.checks.append(CheckRecord(
                    name=f"{record.name}[pair{i}]", lhs=record.lhs,
                    rhs=record.rhs, tolerance=record.tolerance))
            sub2 = entropy_contraction_check(h1, h2,
                                             allowance_coeff=cfg.allowance_coeff)
            report.checks.append(CheckRecord(
                name=f"entropy_contraction[pair{i}]", lhs=sub2.checks[0].lhs,
                rhs=sub2.checks[0].rhs, tolerance=sub2.checks[0].tolerance))

    if "entropy" in checks:
        hist = get_benchmark()
        shapes, psis, zetas, deltas = _battery_components(cfg, problem, grid)
        sub = entropy_battery(hist, shapes, psis, zetas, deltas,
                              tol_coeff=cfg.entropy_tol_coeff)
        report.extend(sub)

    if "energy" in checks:
        hist = get_benchmark()
        for level in (0.5, 1.0, 2.0):
            audit = energy_audit(hist, level)
            report.checks.append(CheckRecord(
                name=f"energy_bound[K={level}]", lhs=audit.gradient_energy,
                rhs=audit.bound, tolerance=0.05 * audit.bound))

    outdir = _prepare_outdir(cfg, args.output)
    (outdir / "verification_report.json").write_text(report.to_json() + "\n")
    _write_manifest(outdir, cfg.canonical_text(),
                    {"battery_seed": cfg.battery_seed})
    for line in report.summary_lines():
        print(line)
    print(f"verify: {len(report.checks)} checks, "
          f"{'all passed' if report.passed else 'FAILURES PRESENT'}")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


# -- kernels -------------------------------------------------------------------


def _cmd_kernels(args) -> int:
    try:
        if args.family == "fractional":
            pair = KernelPair.fractional(args.alpha, horizon=args.horizon)
        elif args.family == "tempered":
            pair = KernelPair.tempered(args.alpha, args.gamma,
                                       horizon=args.horizon)
        elif args.family == "ultraslow":
            pair = KernelPair.ultraslow(horizon=args.horizon)
        else:
            raise ConfigurationError(f"unknown family {args.family!r}")
    except ConfigurationError:
        raise
    ok = True
    if args.sonine_check:
        grid = np.geomspace(args.grid_min, args.grid_max, args.grid_points)
        residual = sonine_residual(pair, grid)
        status = residual < args.sonine_tol
        ok = ok and status
        print(f"sonine residual on [{args.grid_min}, {args.grid_max}] "
              f"({args.grid_points} pts): {residual:.3e} "
              f"({'pass' if status else 'FAIL'} at {args.sonine_tol:.0e})")
    if args.export_weights:
        grid = TimeGrid.uniform(args.horizon, args.steps)
        weights = conv_weights(pair, grid.nodes)
        weights.to_csv(args.export_weights)
        print(f"weights written to {args.export_weights}")
    return EXIT_OK if ok else EXIT_CHECK_FAILED


# -- convergence ---------------------------------------------------------------


def _parse_ladder(raw: str):
    entries = []
    for item in raw.split(","):
        nx, nt = item.split(":")
        entries.append((int(nx), int(nt)))
    return entries


def _cmd_convergence(args) -> int:
    cfg = _load_config(args)
    ladder = _parse_ladder(args.ladder) if args.ladder else \
        [(16, 32), (32, 64), (64, 128), (128, 256)]
    if len(ladder) < 3:
        raise ConfigurationError("convergence ladder needs >= 3 entries")
    fx, ft = ladder[-1]
    for nx, nt in ladder[:-1]:
        if fx % nx or ft % nt:
            raise ConfigurationError(
                f"ladder entry {nx}:{nt} is not nested in the finest {fx}:{ft}")
    pair = cfg.build_pair()
    profile = cfg.build_profile()
    rows = []
    hists = []
    from .profiles import initial_field
    from .space import build_mesh as _bm
    for nx, nt in ladder:
        problem = _bm(1, (nx,), (cfg.lengths[0],), nu=cfg.nu)
        grid = TimeGrid.uniform(cfg.horizon, nt) if cfg.grading == 1.0 \
            else TimeGrid.graded(cfg.horizon, nt, cfg.grading)
        u0 = initial_field(problem, "sine")
        hist = solve(problem, pair, profile, grid, u0,
                     newton=cfg.build_newton())
        hists.append((nx, nt, hist))
    fhist = hists[-1][2]
    errors = []
    for nx, nt, hist in hists[:-1]:
        stride_x = fx // nx
        fine_final = fhist.u[-1][stride_x - 1 :: stride_x]
        err = float(np.max(np.abs(hist.u[-1] - fine_final)))
        errors.append(err)
        rows.append({"nx": nx, "nt": nt, "error_vs_finest": err})
    errs = np.array(errors)
    if np.any(errs <= 0) or np.any(~np.isfinite(errs)):
        print("convergence: zero or invalid errors against the finest run; "
              "fit rejected (identical ladder entries?)")
        return EXIT_CHECK_FAILED
    # regress on whichever resolution the ladder actually refines
    nts = np.array([nt for _, nt in ladder[:-1]], dtype=float)
    nxs = np.array([nx for nx, _ in ladder[:-1]], dtype=float)
    steps = nts if len(set(nts)) > 1 else nxs
    if len(set(steps)) < 2:
        print("convergence: ladder does not refine; fit rejected")
        return EXIT_CHECK_FAILED
    order = float(np.polyfit(np.log(steps), np.log(errs), 1)[0] * -1.0)
    outdir = _prepare_outdir(cfg, args.output)
    with open(outdir / "convergence.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["nx", "nt", "error_vs_finest"])
        for row in rows:
            writer.writerow([row["nx"], row["nt"], repr(row["error_vs_finest"])])
    (outdir / "convergence.json").write_text(json.dumps(
        {"ladder": [[nx, nt] for nx, nt in ladder], "errors": errors,
         "fitted_order": order}, indent=2, sort_keys=True,
        default=_jsonable) + "\n")
    _write_manifest(outdir, cfg.canonical_text(), {})
    print(f"convergence: fitted order {order:.3f} over {len(ladder)} levels "
          f"(finest {fx}:{ft} as reference)")
    return EXIT_OK


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="subdiff",
        description="Memory-diffusion solver and inequality verification suite")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run configuration")
    common.add_argument("--output", help="output directory override")

    p_solve = sub.add_parser("solve", parents=[common],
                             help="run one forward solve")
    p_solve.add_argument("--dump-steps", action="store_true",
                         help="write per-step Newton diagnostics")
    p_solve.add_argument("--timing", action="store_true",
                         help="print wall time to stderr")
    p_solve.set_defaults(func=_cmd_solve)

    p_cascade = sub.add_parser("cascade", parents=[common],
                               help="truncation ladder with order audits")
    p_cascade.add_argument("--m-ladder", help="comma list, e.g. 1,2,4,8")
    p_cascade.add_argument("--n-ladder", help="comma list, e.g. 1,2,4")
    p_cascade.add_argument("--tol", type=float,
                           help="L1 convergence tolerance (absolute)")
    p_cascade.set_defaults(func=_cmd_cascade)

    p_verify = sub.add_parser("verify", parents=[common],
                              help="inequality verification battery")
    p_verify.add_argument("--checks", help=f"comma list from "
                          f"{','.join(ALL_CHECKS)} (default: all)")
    p_verify.add_argument("--battery-seed", type=int)
    p_verify.add_argument("--delta-list",
                          help="comma list of split fractions of the horizon")
    p_verify.add_argument("--pairs", type=int,
                          help="number of random contraction pairs")
    p_verify.set_defaults(func=_cmd_verify)

    p_kernels = sub.add_parser("kernels", help="kernel pair diagnostics")
    p_kernels.add_argument("--family", required=True,
                           choices=["fractional", "tempered", "ultraslow"])
    p_kernels.add_argument("--alpha", type=float, default=0.5)
    p_kernels.add_argument("--gamma", type=float, default=1.0)
    p_kernels.add_argument("--horizon", type=float, default=1.0)
    p_kernels.add_argument("--sonine-check", action="store_true")
    p_kernels.add_argument("--sonine-tol", type=float, default=1e-6)
    p_kernels.add_argument("--grid-min", type=float, default=1e-2)
    p_kernels.add_argument("--grid-max", type=float, default=5.0)
    p_kernels.add_argument("--grid-points", type=int, default=30)
    p_kernels.add_argument("--export-weights", help="CSV path for (n, j, kappa)")
    p_kernels.add_argument("--steps", type=int, default=32)
    p_kernels.set_defaults(func=_cmd_kernels)

    p_conv = sub.add_parser("convergence", parents=[common],
                            help="refinement ladder with fitted orders")
    p_conv.add_argument("--ladder", help="comma list of nx:nt pairs")
    p_conv.set_defaults(func=_cmd_convergence)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except HypothesisError as exc:
        print(json.dumps({"error": "hypothesis_violation", "detail": str(exc)},
                         sort_keys=True))
        print(f"hypothesis violation: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except (ConfigurationError, SubdiffError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
