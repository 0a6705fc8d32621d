"""Command-line entry point: verify | toy | mesh-edit | emit-plot.

Config files are authoritative; long-form flags mirror config keys and
override them. The SDSE_SEED environment variable replaces the seed list for
quick smoke runs. Every output file carries the resolved config digest and
reruns overwrite byte-identically.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .configs import (ConfigError, MeshRunConfig, ToyRunConfig,
                      default_mesh_config, default_toy_config, load_json,
                      parse_mesh_config, parse_toy_config, resolve_data_path)
from .experiments import (MeshEditConfig, PROFILES, convergence_check,
                          run_mesh_edit)
from .mesh import load_mesh
from .mixtures import FULL_COND, load_mixture
from .optimize import optimize_point, trajectory_from_csv
from .oracle import NoiseOracle
from .plots import plot_trajectories_svg, write_svg
from .schedule import linear_beta_schedule
from .verify import report_dict, run_all_checks


def _json_default(obj):
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_json(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True,
                               default=_json_default) + "\n", encoding="utf-8")


def _seed_override(seeds: tuple[int, ...]) -> tuple[int, ...]:
    env = os.environ.get("SDSE_SEED")
    if env is None:
        return seeds
    return (int(env),)


def cmd_verify(args: argparse.Namespace) -> int:
    mixture_path = resolve_data_path(args.mixture) if args.mixture else None
    checks = run_all_checks(mixture_path)
    report = report_dict(checks)
    for check in checks:
        status = "PASS" if check.passed else "FAIL"
        print(f"[{status}] {check.name}")
        if not check.passed:
            print(f"       {check.details}")
    if args.report:
        _write_json(report, Path(args.report))
        print(f"report written to {args.report}")
    return 0 if report["all_passed"] else 1


def _resolve_toy_config(args: argparse.Namespace) -> ToyRunConfig:
    cfg = load_json(args.config) if args.config else default_toy_config()
    if args.estimator:
        cfg["estimators"] = list(args.estimator)
        cfg.pop("estimator", None)
    if args.phase:
        bands = {"small": (1, 150), "middle": (151, 800), "large": (801, 1000)}
        lo, hi = bands[args.phase]
        cfg.setdefault("sampler", {})
        cfg["sampler"]["kind"] = "uniform"
        cfg["sampler"]["t_min"] = lo
        cfg["sampler"]["t_max"] = hi
    for key in ("lr", "omega_t", "omega_i"):
        val = getattr(args, key)
        if val is not None:
            cfg[key] = val
    if args.steps is not None:
        cfg["steps"] = args.steps
    if args.seed is not None:
        cfg["seeds"] = [args.seed]
        cfg.pop("seed", None)
    parsed = parse_toy_config(cfg)
    seeds = _seed_override(parsed.seeds)
    if seeds != parsed.seeds:
        cfg["seeds"] = list(seeds)
        cfg.pop("seed", None)
        parsed = parse_toy_config(cfg)
    return parsed


def cmd_toy(args: argparse.Namespace) -> int:
    try:
        cfg = _resolve_toy_config(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    mixture = load_mixture(resolve_data_path(cfg.mixture_path))
    sched = linear_beta_schedule()
    oracle = NoiseOracle(mixture, sched, noising=cfg.noising)
    digest = cfg.digest
    modes = mixture.mode_points(FULL_COND)
    sampler = cfg.sampler()
    runs = []
    for estimator in cfg.estimators:
        trajs = []
        for seed in cfg.seeds:
            traj = optimize_point(cfg.theta0, estimator, sampler, mixture, sched,
                                  lr=cfg.lr, steps=cfg.steps, seed=seed,
                                  weights=cfg.weights, thresholds=cfg.thresholds,
                                  noising=cfg.noising, config_digest=digest,
                                  oracle=oracle)
            name = f"{estimator.value}_seed{seed}.csv"
            traj.write_csv(out_dir / name)
            report = convergence_check(traj, modes, tol=args.tol,
                                       grad_tol=args.grad_tol)
            runs.append({"estimator": estimator.value, "seed": seed, "csv": name,
                         "final_theta": traj.final_theta.tolist(),
                         "distance": report.distance,
                         "classification": report.classification.value,
                         "guard_tripped": traj.guard_tripped})
            trajs.append(traj)
        if args.svg:
            svg = plot_trajectories_svg(
                mixture, [t.thetas for t in trajs],
                labels=[f"seed {t.seed}" for t in trajs],
                title=f"estimator={estimator.value}", digest=digest)
            write_svg(svg, out_dir / f"toy_{estimator.value}.svg")
    runs.sort(key=lambda r: (r["estimator"], r["seed"]))
    summary = {"command": "toy", "version": __version__, "digest": digest,
               "config": cfg.raw, "runs": runs}
    _write_json(summary, out_dir / "summary.json")
    print(f"{len(runs)} runs -> {out_dir}")
    return 0


def _resolve_mesh_config(args: argparse.Namespace) -> MeshRunConfig:
    cfg = load_json(args.config) if args.config else default_mesh_config()
    if args.profile:
        cfg["profile"] = args.profile
    if args.w1:
        cfg["w1"] = args.w1 if len(args.w1) > 1 else args.w1[0]
    if args.no_allocator:
        cfg["allocator"] = False
    if args.steps is not None:
        cfg["steps"] = args.steps
    if args.seed is not None:
        cfg["seeds"] = [args.seed]
        cfg.pop("seed", None)
    parsed = parse_mesh_config(cfg)
    seeds = _seed_override(parsed.seeds)
    if seeds != parsed.seeds:
        cfg["seeds"] = list(seeds)
        cfg.pop("seed", None)
        parsed = parse_mesh_config(cfg)
    return parsed


def _write_step_report(reports, path: Path, digest: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# digest={digest}\n")
        fh.write("step,region,grad_norm,views_allocated,smooth_loss\n")
        for report in reports:
            for step, region, grad, views, smooth in report.step_csv_rows():
                fh.write(f"{step},{region},{repr(float(grad))},{views},"
                         f"{repr(float(smooth))}\n")


def cmd_mesh_edit(args: argparse.Namespace) -> int:
    try:
        cfg = _resolve_mesh_config(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    mesh_path = resolve_data_path(cfg.mesh_path)
    if not Path(mesh_path).exists():
        print(f"mesh fixture not found: {mesh_path}", file=sys.stderr)
        return 2
    mesh = load_mesh(mesh_path)
    mixture = load_mixture(resolve_data_path(cfg.mixture_path))
    sched = linear_beta_schedule()
    digest = cfg.digest
    summary_runs = []
    dispersion_by_w1 = {}
    for w1 in cfg.w1_values:
        run_cfg = MeshEditConfig(steps=cfg.steps, views_per_step=cfg.views_per_step,
                                 first_batch=cfg.first_batch, lr=cfg.lr, w1=w1,
                                 allocator=cfg.allocator, t_min=cfg.t_min,
                                 t_max=cfg.t_max, support=cfg.support,
                                 threshold_distance=cfg.threshold_distance,
                                 weights=cfg.weights, thresholds=cfg.thresholds)
        reports = run_mesh_edit(mesh, cfg.profile, mixture, sched,
                                list(cfg.seeds), run_cfg, config_digest=digest)
        tag = f"w1_{w1:g}" if len(cfg.w1_values) > 1 else "steps"
        _write_step_report(reports, out_dir / f"mesh_{cfg.profile}_{tag}.csv", digest)
        profile_map = PROFILES[cfg.profile]
        edited = [r for r, c in profile_map.items() if c == FULL_COND]
        disp = [float(np.mean([rep.dispersion[r] for r in edited])) for rep in reports]
        dispersion_by_w1[w1] = disp
        for rep in reports:
            summary_runs.append({"w1": w1, "seed": rep.seed,
                                 "allocator": cfg.allocator,
                                 "steps_to_threshold": rep.steps_to_threshold,
                                 "view_counts": rep.allocation.counts,
                                 "weights": rep.allocation.weights,
                                 "dispersion": rep.dispersion})
        alloc_path = out_dir / "allocation.csv"
        with open(alloc_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"# digest={digest}\n")
            regions = sorted(reports[0].allocation.counts)
            fh.write("profile,metric," + ",".join(f"region_{r}" for r in regions) + "\n")
            alloc = reports[0].allocation
            weights_row = ",".join(repr(float(alloc.weights[r])) for r in regions)
            counts_row = ",".join(str(alloc.counts[r]) for r in regions)
            fh.write(f"{cfg.profile},weight,{weights_row}\n")
            fh.write(f"{cfg.profile},view_count,{counts_row}\n")
    summary = {"command": "mesh-edit", "version": __version__, "digest": digest,
               "config": cfg.raw, "runs": summary_runs}
    if len(cfg.w1_values) > 1:
        pairs = sorted(dispersion_by_w1)
        summary["dispersion_comparison"] = {
            "w1_values": list(pairs),
            "mean_dispersion": {str(w): float(np.mean(dispersion_by_w1[w]))
                                for w in pairs}}
    _write_json(summary, out_dir / "summary.json")
    print(f"mesh-edit runs -> {out_dir}")
    return 0


def cmd_emit_plot(args: argparse.Namespace) -> int:
    mixture = load_mixture(resolve_data_path(args.mixture))
    trajs = [trajectory_from_csv(p) for p in args.trajectory]
    digest = trajs[0].config_digest if trajs else ""
    svg = plot_trajectories_svg(mixture, [t.thetas for t in trajs],
                                labels=[Path(p).stem for p in args.trajectory],
                                title=args.title, digest=digest)
    write_svg(svg, args.out)
    print(f"plot -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdse",
        description="Score-distillation editing laboratory: verification, toy "
                    "phase runs, and synthetic mesh-edit ablations.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_verify = sub.add_parser("verify", help="run the oracle/identity check suite")
    p_verify.add_argument("--mixture", default=None,
                          help="mixture JSON (default: shipped toy mixture)")
    p_verify.add_argument("--report", default=None, help="write a JSON report here")
    p_verify.set_defaults(func=cmd_verify)

    p_toy = sub.add_parser("toy", help="run toy optimization trajectories")
    p_toy.add_argument("--config", default=None, help="run config JSON")
    p_toy.add_argument("--out", default="out_toy", help="output directory")
    p_toy.add_argument("--estimator", action="append", default=None,
                       help="override estimator list (repeatable)")
    p_toy.add_argument("--phase", choices=("small", "middle", "large"), default=None,
                       help="restrict the sampler to one timestep band")
    p_toy.add_argument("--steps", type=int, default=None)
    p_toy.add_argument("--lr", type=float, default=None)
    p_toy.add_argument("--omega-t", dest="omega_t", type=float, default=None)
    p_toy.add_argument("--omega-i", dest="omega_i", type=float, default=None)
    p_toy.add_argument("--seed", type=int, default=None)
    p_toy.add_argument("--tol", type=float, default=0.05)
    p_toy.add_argument("--grad-tol", dest="grad_tol", type=float, default=1e-3)
    svg = p_toy.add_mutually_exclusive_group()
    svg.add_argument("--svg", dest="svg", action="store_true", default=True)
    svg.add_argument("--no-svg", dest="svg", action="store_false")
    p_toy.set_defaults(func=cmd_toy)

    p_mesh = sub.add_parser("mesh-edit", help="run the synthetic mesh edit")
    p_mesh.add_argument("--config", default=None, help="run config JSON")
    p_mesh.add_argument("--out", default="out_mesh", help="output directory")
    p_mesh.add_argument("--profile", choices=tuple(PROFILES), default=None)
    p_mesh.add_argument("--w1", action="append", type=float, default=None,
                        help="smoothness weight; repeat for a paired comparison")
    p_mesh.add_argument("--no-allocator", action="store_true",
                        help="use uniform per-region view allocation")
    p_mesh.add_argument("--steps", type=int, default=None)
    p_mesh.add_argument("--seed", type=int, default=None)
    p_mesh.set_defaults(func=cmd_mesh_edit)

    p_plot = sub.add_parser("emit-plot", help="density contour + trajectory SVG")
    p_plot.add_argument("--trajectory", action="append", required=True,
                        help="trajectory CSV (repeatable)")
    p_plot.add_argument("--mixture", default="pkg:toy_gmm.json")
    p_plot.add_argument("--out", default="trajectories.svg")
    p_plot.add_argument("--title", default="")
    p_plot.set_defaults(func=cmd_emit_plot)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
