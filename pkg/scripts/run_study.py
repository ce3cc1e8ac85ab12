"""Plan the nominal rolls, then run a seeded batch and write everything to one directory.

    python3 scripts/run_study.py --out study --trials 50

Produces plan_<goal>.csv with a validation JSON per goal rotation, the
batch CSV and summary for the default goal, and per-trial traces.
"""
import argparse
import json
import time
from dataclasses import replace
from pathlib import Path

from rolling_hand.config import ExperimentConfig, load_config
from rolling_hand.sim import run_batch, summarize, write_batch, write_trace
from rolling_hand.trajopt import build_problem, solve, validate_trajectory


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", type=Path)
    ap.add_argument("--out", type=Path, default=Path("study"))
    ap.add_argument("--goals", type=float, nargs="+", default=[0.2, 0.4, 0.6])
    ap.add_argument("--trials", type=int)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    cfg = load_config(args.config) if args.config else ExperimentConfig()
    scene = cfg.scene()
    args.out.mkdir(parents=True, exist_ok=True)

    plans = {}
    for goal in args.goals:
        traj = solve(build_problem(scene, replace(cfg.trajopt, goal_rotation=goal)))
        rep = validate_trajectory(traj, scene)
        traj.to_csv(args.out / f"plan_{goal:g}.csv")
        (args.out / f"validation_{goal:g}.json").write_text(json.dumps(rep.as_dict(), indent=2, sort_keys=True))
        print(f"goal {goal:g}: converged={traj.report.converged} ok={rep.ok()} {traj.report.wall_time:.1f} s")
        plans[goal] = traj

    plan = plans.get(cfg.trajopt.goal_rotation) or next(iter(plans.values()))
    trials = args.trials or cfg.sim.trials
    t0 = time.perf_counter()
    results = run_batch(
        plan, cfg.gains, scene, cfg.plant_settings(), trials, cfg.sim.seed,
        template=cfg.trial_config(), workers=args.workers,
    )  # fmt: skip
    traces = args.out / "traces"
    traces.mkdir(exist_ok=True)
    for res in results:
        write_trace(traces / f"{res.mode}_seed{res.seed}_{res.index}.csv", res)
    write_batch(args.out / "batch.csv", results)
    summary = summarize(results)
    (args.out / "batch_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    for mode, s in summary.items():
        print(f"{mode}: success {s['success_rate']:.2f}, drops {s['drop_rate']:.2f}")
    print(f"batch: {time.perf_counter() - t0:.0f} s")


if __name__ == "__main__":
    main()
