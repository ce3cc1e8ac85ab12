"""Entry points: solve a transcribed problem and package the result."""
from __future__ import annotations

from types import SimpleNamespace

import numpy as np

from ..kinematics import JointState
from ..scene import Scene
from .initial import initial_guess
from .problem import ProblemError, RollingNLP, TrajoptSettings, build_problem, constraint_curvature, evaluate
from .solver import AugmentedLagrangian, SolverOptions
from .trajectory import Trajectory, contact_pair


def solver_options(settings: TrajoptSettings) -> SolverOptions:
    return SolverOptions(
        tol=settings.tol,
        max_outer=settings.max_outer,
        max_inner=settings.max_inner,
        time_limit=settings.time_limit,
    )


def _scaled(nlp: RollingNLP):
    """Wrap ``evaluate`` with row scaling; violations stay in natural units."""

    def ev(z):
        e = evaluate(nlp, z)
        return SimpleNamespace(
            raw=e,
            cost=e.cost,
            grad=e.grad,
            hess=e.hess,
            eq=e.eq * e.eq_scale,
            ineq=e.ineq * e.ineq_scale,
            Jc=e.eq_dense() * e.eq_scale[:, None],
            Jg=e.ineq_dense() * e.ineq_scale[:, None],
            violation=(
                float(np.max(np.abs(e.eq), initial=0.0)),
                float(max(0.0, -np.min(e.ineq, initial=0.0))),
            ),
        )

    def curvature(z, e, w_eq, w_ineq):
        return constraint_curvature(nlp, z, w_eq * e.raw.eq_scale, w_ineq * e.raw.ineq_scale, base=e.raw)

    return ev, curvature


def to_trajectory(nlp: RollingNLP, z, report=None) -> Trajectory:
    sc = nlp.scene
    e = evaluate(nlp, z)
    parts = nlp.layout.unpack(np.asarray(z, dtype=float))
    objects, joints, contacts = [], [], []
    for k in range(nlp.N):
        x, y, th = parts["X"][k]
        objects.append(sc.object(x, y, th))
        joints.append(JointState(nlp.E @ parts["q"][k]))
        contacts.append(contact_pair(sc, (x, y), e.terms[k].normal, parts["f"][k]))
    return Trajectory(
        objects=objects,
        joints=joints,
        d=parts["d"].copy(),
        contacts=contacts,
        u=parts["u"].copy(),
        report=report,
        extra={"psi": e.psi.copy()},
    )


def solve(nlp: RollingNLP, z0=None, options: SolverOptions | None = None) -> Trajectory:
    """Run the augmented-Lagrangian solver from ``z0`` (default: the built-in initial guess).

    Never raises on non-convergence; inspect ``trajectory.report``.
    """
    z0 = initial_guess(nlp) if z0 is None else np.asarray(z0, dtype=float)
    if z0.shape != (nlp.n,):
        raise ProblemError(f"initial guess must have length {nlp.n}, got {z0.shape}")
    if not np.all(np.isfinite(z0)):
        raise ProblemError("initial guess contains NaN or inf")
    ev, curvature = _scaled(nlp)
    solver = AugmentedLagrangian(ev, options or solver_options(nlp.settings), curvature=curvature)
    z, report = solver.solve(z0)
    traj = to_trajectory(nlp, z, report)
    traj.extra["z"] = z
    return traj


def plan(scene: Scene, settings: TrajoptSettings | None = None) -> Trajectory:
    settings = settings or TrajoptSettings()
    return solve(build_problem(scene, settings))
