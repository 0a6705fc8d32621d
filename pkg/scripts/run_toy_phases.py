#!/usr/bin/env python3
"""Reproduce the three toy learning phases and plot each estimator's trajectories.

Runs the per-phase estimator sets on matched seeds, writes one trajectory CSV
per run plus a phase summary, and emits density-contour overlays per
(phase, estimator).

Usage:
    python scripts/run_toy_phases.py --out out_phases --seeds 20
"""

import argparse
import json
from pathlib import Path

import numpy as np

from sdse_lab.experiments import (Phase, PhaseSpec, convergence_check,
                                  run_toy_phase)
from sdse_lab.guidance import EstimatorKind
from sdse_lab.mixtures import FULL_COND, toy_mixture
from sdse_lab.plots import plot_trajectories_svg, write_svg
from sdse_lab.schedule import linear_beta_schedule

PHASES = {
    "early_large": PhaseSpec(
        Phase.EARLY_LARGE,
        (EstimatorKind.M1_ONLY, EstimatorKind.M3_ONLY, EstimatorKind.M4_ONLY,
         EstimatorKind.SDS),
        t_lo=801, t_hi=1000),
    "middle": PhaseSpec(
        Phase.MIDDLE,
        (EstimatorKind.M1_ONLY, EstimatorKind.M3_ONLY, EstimatorKind.M4_ONLY,
         EstimatorKind.SDSE),
        t_lo=500, t_hi=500),
    "small": PhaseSpec(
        Phase.SMALL,
        (EstimatorKind.M1_ONLY, EstimatorKind.M3_ONLY, EstimatorKind.M4_ONLY,
         EstimatorKind.SDSE, EstimatorKind.SDSE_PRIME),
        t_lo=1, t_hi=150),
}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="out_phases")
    parser.add_argument("--seeds", type=int, default=20)
    parser.add_argument("--steps", type=int, default=600)
    parser.add_argument("--lr", type=float, default=1e-2)
    parser.add_argument("--no-svg", action="store_true")
    args = parser.parse_args()

    mix = toy_mixture()
    sched = linear_beta_schedule()
    modes = mix.mode_points(FULL_COND)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = list(range(args.seeds))

    summary = {}
    for name, spec in PHASES.items():
        runs = run_toy_phase(spec, mix, sched, seeds, lr=args.lr, steps=args.steps)
        by_estimator = {}
        for run in runs:
            run.trajectory.write_csv(
                out / f"{name}_{run.estimator.value}_seed{run.seed}.csv")
            by_estimator.setdefault(run.estimator, []).append(run)
        rows = []
        for estimator, bucket in by_estimator.items():
            dists = [convergence_check(r.trajectory, modes, tol=0.05).distance
                     for r in bucket]
            p_img = [float(r.trajectory.densities[-10:, 1].mean()) for r in bucket]
            rows.append({"estimator": estimator.value,
                         "mean_final_mode_distance": float(np.mean(dists)),
                         "mean_final_p_img": float(np.mean(p_img))})
            if not args.no_svg:
                svg = plot_trajectories_svg(
                    mix, [r.trajectory.thetas for r in bucket],
                    labels=[f"seed {r.seed}" for r in bucket[:10]],
                    title=f"{name} / {estimator.value}")
                write_svg(svg, out / f"{name}_{estimator.value}.svg")
        summary[name] = rows
        print(f"{name}: " + "; ".join(
            f"{r['estimator']} dist={r['mean_final_mode_distance']:.3f}"
            for r in rows))

    (out / "phase_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"written to {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
