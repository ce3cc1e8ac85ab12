"""Cascade position/velocity control with a tactile force loop.

Per tick the position loop turns the task-space tracking error into a
reference velocity, the velocity loop corrects it against the measured
fingertip velocity, and a box-constrained least-squares problem maps the
result to a bounded joint increment. In force mode the task-space reference
is shifted by the output of a PI force loop driven by the tactile force
estimate.
"""
from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import lsq_linear


class Mode(str, enum.Enum):
    OPEN_LOOP = "open-loop"
    FORCE = "force"


@dataclass
class GainSet:
    # position loop (1/s, 1/s^2, -)
    k_pp: float = 20.0
    k_ip: float = 0.0
    k_dp: float = 0.0
    # velocity loop
    k_pv: float = 0.3
    k_iv: float = 0.0
    k_dv: float = 0.0
    # force loop (m/N, m/(N s))
    k_pf: float = 2.0e-4
    k_if: float = 5.0e-3
    epsilon: float | tuple[float, ...] = 0.02
    dt: float = 0.01
    F_des: float = 0.25
    switch_threshold: float = 0.18
    integrator_limit: float = 0.05  # task-space clamp on every integrator (m, m/s)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"control.dt must be positive, got {self.dt}")
        eps = np.atleast_1d(np.asarray(self.epsilon, dtype=float))
        if np.any(~np.isfinite(eps)) or np.any(eps <= 0):
            raise ValueError(f"control.epsilon must be positive, got {self.epsilon}")
        for name in ("k_pp", "k_ip", "k_dp", "k_pv", "k_iv", "k_dv", "k_pf", "k_if", "F_des", "switch_threshold"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ValueError(f"control.{name} must be finite, got {v}")
        if self.F_des < 0 or self.switch_threshold < 0:
            raise ValueError("control.F_des and control.switch_threshold must be non-negative")
        if not self.integrator_limit > 0:
            raise ValueError("control.integrator_limit must be positive")


@dataclass
class ComplianceModel:
    C_min: float = 2.0e-4  # m/N
    C_peak: float = 6.0e-3

    def __post_init__(self):
        if not 0 <= self.C_min <= self.C_peak:
            raise ValueError(f"need 0 <= C_min <= C_peak, got {self.C_min}, {self.C_peak}")


@dataclass
class PID:
    """Discrete PID state: rectangular integral, backward-difference derivative."""

    k_p: float
    k_i: float = 0.0
    k_d: float = 0.0
    limit: float = np.inf
    integral: np.ndarray | None = None
    prev: np.ndarray | None = None

    def reset(self):
        self.integral = None
        self.prev = None

    def __call__(self, error, dt: float) -> np.ndarray:
        e = np.asarray(error, dtype=float)
        if self.integral is None:
            self.integral = np.zeros_like(e)
        self.integral = np.clip(self.integral + e * dt, -self.limit, self.limit)
        de = np.zeros_like(e) if self.prev is None else (e - self.prev) / dt
        self.prev = e.copy()
        return self.k_p * e + self.k_i * self.integral + self.k_d * de


def position_loop(p_ref, p_c, pid: PID, gains: GainSet) -> np.ndarray:
    """Reference velocity from the task-space tracking error."""
    return pid(np.asarray(p_ref, dtype=float) - np.asarray(p_c, dtype=float), gains.dt)


def velocity_measure(J, dq) -> np.ndarray:
    return np.asarray(J, dtype=float) @ np.asarray(dq, dtype=float)


def velocity_loop(v_ref, v_c, pid: PID, gains: GainSet) -> np.ndarray:
    """Composite velocity command: feed-forward ``v_ref`` plus a PID correction."""
    v_ref = np.asarray(v_ref, dtype=float)
    return v_ref + pid(v_ref - np.asarray(v_c, dtype=float), gains.dt)


def joint_update(J, v_cmd, q_c, epsilon, dt: float, damping: float = 1e-6) -> np.ndarray:
    """``q_c + dq dt`` with ``dq`` minimising ``|v_cmd - J dq|`` inside the step box.

    The damped problem is solved by bounded-variable least squares, an
    active-set method on the box.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    J = np.atleast_2d(np.asarray(J, dtype=float))
    v = np.asarray(v_cmd, dtype=float)
    q_c = np.asarray(q_c, dtype=float)
    m = J.shape[1]
    bound = np.broadcast_to(np.asarray(epsilon, dtype=float), (m,)) / dt
    if not np.any(v):
        return q_c.copy()
    A = np.vstack([J, np.sqrt(damping) * np.eye(m)])
    b = np.concatenate([v, np.zeros(m)])
    res = lsq_linear(A, b, bounds=(-bound, bound), method="bvls", tol=1e-14, max_iter=max(m * m, 10))
    dq = np.clip(res.x, -bound, bound)
    return q_c + dq * dt


def compliance_of(theta: float, model: ComplianceModel) -> float:
    """Piecewise-linear compliance in ``q1 + q2``, peaking at pi/2."""
    th = float(np.clip(theta, 0.0, np.pi))
    return model.C_min + (model.C_peak - model.C_min) * (1.0 - abs(th - np.pi / 2) / (np.pi / 2))


@dataclass
class ForceLoopState:
    integral: np.ndarray = field(default_factory=lambda: np.zeros(2))
    direction: np.ndarray | None = None
    degenerate: bool = False


def force_loop(
    F_m: float,
    p_cp_ff,
    p_cp_th,
    F_des: float,
    gains: GainSet,
    C: float,
    state: ForceLoopState,
) -> tuple[np.ndarray, ForceLoopState]:
    """Task-space correction from the force error along the inter-contact direction.

    ``state`` is updated in place and also returned.
    """
    p_n = np.asarray(p_cp_ff, dtype=float) - np.asarray(p_cp_th, dtype=float)
    norm = float(np.linalg.norm(p_n))
    state.degenerate = not norm > 1e-12
    if state.degenerate:
        if state.direction is None:
            return np.zeros_like(p_n), state
        u = state.direction
    else:
        u = p_n / norm
        state.direction = u
    F_err = (F_des - F_m) * u
    state.integral = np.clip(state.integral + F_err * gains.dt, -gains.integrator_limit, gains.integrator_limit)
    return gains.k_pf * F_err + gains.k_if * state.integral + C * F_err, state


def mode_switch(F_m: float, threshold: float, mode: Mode) -> Mode:
    if mode == Mode.FORCE:
        return Mode.FORCE
    return Mode.FORCE if F_m < threshold else Mode.OPEN_LOOP


def compose_reference(p_ref_traj, p_force, mode: Mode) -> np.ndarray:
    p = np.asarray(p_ref_traj, dtype=float)
    return p + np.asarray(p_force, dtype=float) if mode == Mode.FORCE else p.copy()


@dataclass
class ControlRecord:
    k: int
    mode: Mode
    p_ref: np.ndarray
    p_ref_eff: np.ndarray
    q_ref: np.ndarray
    F_m: float
    F_err: float


class FingerController:
    """Stateful cascade for one finger, advanced once per control tick.

    ``allow_force=False`` pins the controller in open-loop mode. The force
    correction is subtracted from the reference: the tactile force acts on
    the finger along ``p_n``, so closing on the object means moving against it.
    """

    def __init__(self, gains: GainSet, compliance: ComplianceModel, allow_force: bool = True):
        self.gains = gains
        self.compliance = compliance
        self.allow_force = allow_force
        self.reset()

    def reset(self):
        g = self.gains
        self.mode = Mode.OPEN_LOOP
        self.pos_pid = PID(g.k_pp, g.k_ip, g.k_dp, g.integrator_limit)
        self.vel_pid = PID(g.k_pv, g.k_iv, g.k_dv, g.integrator_limit)
        self.force_state = ForceLoopState()
        self.log: list[ControlRecord] = []

    def step(self, p_ref_traj, p_c, J, dq_c, q_c, F_m, p_cp_ff, p_cp_th, theta_j: float) -> np.ndarray:
        g = self.gains
        if self.allow_force:
            self.mode = mode_switch(F_m, g.switch_threshold, self.mode)
        p_force = np.zeros(2)
        F_err = 0.0
        if self.mode == Mode.FORCE and p_cp_ff is not None and p_cp_th is not None:
            C = compliance_of(theta_j, self.compliance)
            p_force, _ = force_loop(F_m, p_cp_ff, p_cp_th, g.F_des, g, C, self.force_state)
            F_err = g.F_des - F_m
        p_eff = compose_reference(p_ref_traj, -p_force, self.mode)
        v_ref = position_loop(p_eff, p_c, self.pos_pid, g)
        v_cmd = velocity_loop(v_ref, velocity_measure(J, dq_c), self.vel_pid, g)
        q_ref = joint_update(J, v_cmd, q_c, g.epsilon, g.dt)
        self.log.append(ControlRecord(len(self.log), self.mode, np.asarray(p_ref_traj, float), p_eff, q_ref, F_m, F_err))
        return q_ref


def write_trace(path, log: list[ControlRecord]) -> None:
    """CSV with k, mode, p_ref, p_ref_effective, q_ref, F_m, F_err."""
    m = len(log[0].q_ref) if log else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["k", "mode", "p_ref_x", "p_ref_y", "p_eff_x", "p_eff_y"] + [f"q_ref{j}" for j in range(m)] + ["F_m", "F_err"]
        )
        for rec in log:
            w.writerow(
                [rec.k, rec.mode.value]
                + [repr(float(v)) for v in (*rec.p_ref, *rec.p_ref_eff, *rec.q_ref)]
                + [repr(float(rec.F_m)), repr(float(rec.F_err))]
            )
