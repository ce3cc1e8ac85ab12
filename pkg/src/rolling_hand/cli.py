"""Command-line harness: plan, validate, roll out and batch-compare.

Exit codes: 0 success, 1 usage or config error, 2 solver non-convergence,
3 internal invariant failure (a plan that does not validate, a plant that
does not settle).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config
from .sim import PlantError, run_batch, run_trial, summarize, write_batch, write_trace
from .trajopt import Trajectory, build_problem, solve, validate_trajectory

OUT_DIR_ENV = "ROLLING_HAND_OUT_DIR"

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_INVARIANT = 0, 1, 2, 3

log = logging.getLogger("rolling_hand")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rolling-hand", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", type=Path, help="experiment YAML (defaults built in)")
        sp.add_argument("--out-dir", type=Path, help=f"output directory (env {OUT_DIR_ENV}, then config)")
        sp.add_argument("-v", "--verbose", action="store_true")

    sp = sub.add_parser("plan", help="optimise the rolling trajectory")
    common(sp)
    sp = sub.add_parser("validate", help="re-check a trajectory CSV")
    common(sp)
    sp.add_argument("--plan", type=Path)
    sp = sub.add_parser("rollout", help="closed-loop trial on the simulated plant")
    common(sp)
    sp.add_argument("--plan", type=Path)
    sp.add_argument("--mode", choices=("open-loop", "force"), default="force")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--index", type=int, default=0, help="trial index within the seed stream")
    sp = sub.add_parser("batch", help="seeded trials in both modes")
    common(sp)
    sp.add_argument("--plan", type=Path)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--workers", type=int)
    return p


def _config(args) -> ExperimentConfig:
    return load_config(args.config) if args.config else ExperimentConfig()


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    out = args.out_dir or os.environ.get(OUT_DIR_ENV) or cfg.output.dir
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_plan(args, cfg, out: Path) -> Trajectory:
    path = args.plan or out / "plan.csv"
    if not Path(path).is_file():
        raise UsageError(f"plan file {path} not found; run 'plan' first or pass --plan")
    plan = Trajectory.from_csv(path, cfg.scene())
    if len(plan) < 2:
        raise UsageError(f"plan file {path} holds fewer than two knots")
    return plan


def cmd_plan(args, cfg: ExperimentConfig) -> int:
    out = _out_dir(args, cfg)
    scene = cfg.scene()
    traj = solve(build_problem(scene, cfg.trajopt))
    report = validate_trajectory(traj, scene)
    traj.to_csv(out / "plan.csv")
    traj.write_report(out / "plan_report.json", report.as_dict())
    r = traj.report
    print(
        f"plan: {r.message}; cost {r.cost:.6g}; max violation "
        f"{max(r.max_eq_violation, r.max_ineq_violation):.3g}; {r.wall_time:.1f} s -> {out / 'plan.csv'}"
    )
    if not r.converged:
        return EXIT_SOLVER
    if not report.ok(max(cfg.trajopt.tol, 1e-6)):
        print(f"plan: validator rejects the converged plan: {report.as_dict()}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_validate(args, cfg: ExperimentConfig) -> int:
    out = _out_dir(args, cfg)
    plan = _load_plan(args, cfg, out)
    report = validate_trajectory(plan, cfg.scene())
    data = report.as_dict()
    (out / "validation.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    print(
        f"validate: {'ok' if data['ok'] else 'FAILED'}; max equality residual {data['max_equilibrium']:.3g} "
        f"(balance), {report.max_rolling:.3g} (rolling); min cone margin {data['min_cone_margin']:.3g}"
    )
    return EXIT_OK if data["ok"] else EXIT_INVARIANT


def cmd_rollout(args, cfg: ExperimentConfig) -> int:
    out = _out_dir(args, cfg)
    plan = _load_plan(args, cfg, out)
    scene = cfg.scene()
    if not validate_trajectory(plan, scene).ok():
        print("rollout: the plan does not validate", file=sys.stderr)
        return EXIT_INVARIANT
    trial = cfg.trial_config(args.mode, args.index, args.seed)
    res = run_trial(trial, plan, cfg.gains, scene, cfg.plant_settings())
    path = out / f"rollout_{args.mode}_seed{trial.seed}_{trial.index}.csv"
    write_trace(path, res)
    s = res.summary()
    print(
        f"rollout: mode={s['mode']} seed={s['seed']} success={s['success']} "
        f"theta_error={s['theta_error']:.4f} steps={s['steps']} dropped={s['dropped']} -> {path}"
    )
    return EXIT_OK


def cmd_batch(args, cfg: ExperimentConfig) -> int:
    out = _out_dir(args, cfg)
    plan = _load_plan(args, cfg, out)
    scene = cfg.scene()
    trials = cfg.sim.trials if args.trials is None else args.trials
    if trials < 1:
        raise UsageError("--trials must be at least 1")
    seed = cfg.sim.seed if args.seed is None else args.seed
    workers = cfg.sim.workers if args.workers is None else max(1, args.workers)
    results = run_batch(
        plan, cfg.gains, scene, cfg.plant_settings(), trials, seed, template=cfg.trial_config(), workers=workers
    )
    traces = out / "traces"
    traces.mkdir(exist_ok=True)
    for res in results:
        write_trace(traces / f"{res.mode}_seed{res.seed}_{res.index}.csv", res)
    write_batch(out / "batch.csv", results)
    summary = summarize(results)
    (out / "batch_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"{'mode':<10} {'trials':>6} {'success':>8} {'drops':>6} {'mean|err|':>10}")
    for mode, s in summary.items():
        print(
            f"{mode:<10} {s['trials']:>6d} {s['success_rate']:>8.2f} {s['drop_rate']:>6.2f} "
            f"{s['mean_abs_theta_error']:>10.4f}"
        )
        if s["drop_steps"]:
            hist = _histogram(s["drop_steps"])
            print(f"{'':<10} drop ticks: " + ", ".join(f"{lo}-{hi}: {n}" for lo, hi, n in hist))
    return EXIT_OK


def _histogram(values, bins: int = 5):
    lo, hi = min(values), max(values)
    width = max(1, -(-(hi - lo + 1) // bins))
    rows = []
    for start in range(lo, hi + 1, width):
        n = sum(start <= v < start + width for v in values)
        rows.append((start, start + width - 1, n))
    return rows


COMMANDS = {"plan": cmd_plan, "validate": cmd_validate, "rollout": cmd_rollout, "batch": cmd_batch}


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PlantError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
