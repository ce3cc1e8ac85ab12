"""Figures from a study directory written by run_study.py (needs matplotlib).

    python3 scripts/plot_figures.py study

Writes forces.png (contact force over time, one open-loop and one force-mode
trial), tracking.png (true vs estimated rotation) and plan.png (planned
rotation, prismatic travel and normal forces).
"""
import argparse
import csv
from pathlib import Path

import numpy as np


def read_csv(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    out = {}
    for key in rows[0]:
        try:
            out[key] = np.array([float(r[key]) for r in rows])
        except ValueError:
            out[key] = np.array([r[key] for r in rows])
    return out


def main():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("study", type=Path)
    ap.add_argument("--index", type=int, default=0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    traces = args.study / "traces"

    fig, ax = plt.subplots(figsize=(6, 3.5))
    for mode in ("open-loop", "force"):
        tr = read_csv(traces / f"{mode}_seed{args.seed}_{args.index}.csv")
        ax.plot(tr["t"], tr["force_A"], label=f"{mode} (true)")
        ax.plot(tr["t"], tr["F_m"], "--", lw=0.8, label=f"{mode} (measured)")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("finger contact force (N)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(args.study / "forces.png", dpi=150)

    tr = read_csv(traces / f"force_seed{args.seed}_{args.index}.csv")
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(tr["t"], tr["theta"], label="true")
    ax.plot(tr["t"], tr["theta_hat"], "--", label="tactile estimate")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("object rotation (rad)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.study / "tracking.png", dpi=150)

    plans = sorted(args.study.glob("plan_*.csv"))
    if plans:
        fig, axes = plt.subplots(1, 3, figsize=(10, 3))
        for path in plans:
            p = read_csv(path)
            label = path.stem.split("_", 1)[1]
            axes[0].plot(p["k"], p["theta"], label=label)
            axes[1].plot(p["k"], 1e3 * (p["d"] - p["d"][0]))
            axes[2].plot(p["k"], p["fnA"])
        for ax, name in zip(axes, ("theta (rad)", "prismatic travel (mm)", "finger normal force (N)")):
            ax.set_xlabel("knot")
            ax.set_ylabel(name)
        axes[0].legend(title="goal")
        fig.tight_layout()
        fig.savefig(args.study / "plan.png", dpi=150)


if __name__ == "__main__":
    main()
