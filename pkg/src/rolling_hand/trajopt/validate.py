"""Independent check of a planned trajectory.

Residuals are recomputed from the stored states with ``kinematics`` and
``contact_dynamics`` only; nothing here touches the transcription code.
Finger forces are applied at the disc surface point along the recomputed
contact normal, as in the planner.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..contact_dynamics import (
    ContactRecord,
    RollingPairStep,
    equilibrium_residual,
    object_rolling_residual,
    prismatic_rolling_residual,
)
from ..kinematics import cross2, jacobian, link_angles, signed_distance
from ..scene import Scene
from .trajectory import Trajectory


@dataclass
class ValidationReport:
    psi: np.ndarray = field(default_factory=lambda: np.zeros(0))
    equilibrium: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))  # Fx, Fy, Mz per step
    thumb_gap: np.ndarray = field(default_factory=lambda: np.zeros(0))
    cone_margin: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))  # A, B per step
    normal_force: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    prismatic: np.ndarray = field(default_factory=lambda: np.zeros(0))  # per step, 0 at k = 0
    object_roll: np.ndarray = field(default_factory=lambda: np.zeros(0))
    finger_roll: np.ndarray = field(default_factory=lambda: np.zeros(0))
    torque: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))  # u_k - J^T(-F_A), actuated
    joint_limit: np.ndarray = field(default_factory=lambda: np.zeros(0))  # worst limit excess per step

    def __len__(self) -> int:
        return len(self.psi)

    @staticmethod
    def _max(a) -> float:
        a = np.abs(np.asarray(a))
        return float(a.max()) if a.size else 0.0

    @property
    def max_equilibrium(self) -> float:
        return self._max(self.equilibrium)

    @property
    def max_rolling(self) -> float:
        return max(self._max(self.prismatic), self._max(self.object_roll))

    @property
    def max_equality(self) -> float:
        """Largest violation over force/moment balance, thumb contact and both rolling equations."""
        return max(self.max_equilibrium, self._max(self.thumb_gap), self.max_rolling)

    @property
    def min_cone_margin(self) -> float:
        return float(self.cone_margin.min()) if self.cone_margin.size else 0.0

    def ok(self, tol: float = 1e-6) -> bool:
        return bool(
            self.max_equality <= tol
            and self.min_cone_margin >= -tol
            and (self.normal_force.size == 0 or self.normal_force.min() >= -tol)
            and (self.joint_limit.size == 0 or self.joint_limit.max() <= tol)
        )

    def as_dict(self) -> dict:
        return {
            "steps": len(self),
            "max_equilibrium": self.max_equilibrium,
            "max_thumb_gap": self._max(self.thumb_gap),
            "max_prismatic": self._max(self.prismatic),
            "max_object_roll": self._max(self.object_roll),
            "max_finger_roll": self._max(self.finger_roll),
            "max_torque": self._max(self.torque),
            "min_cone_margin": self.min_cone_margin,
            "max_psi": float(self.psi.max()) if len(self) else 0.0,
            "min_psi": float(self.psi.min()) if len(self) else 0.0,
            "max_joint_limit_excess": float(self.joint_limit.max()) if len(self) else 0.0,
            "ok": bool(self.ok()),
        }


def validate_trajectory(traj: Trajectory, scene: Scene) -> ValidationReport:
    N = len(traj)
    if N == 0:
        return ValidationReport()
    finger = scene.finger
    r = scene.radius
    E = finger.coupling_matrix()
    lo, hi = finger.lower(), finger.upper()

    psi = np.zeros(N)
    eqm = np.zeros((N, 3))
    gap = np.zeros(N)
    margin = np.zeros((N, 2))
    fn = np.zeros((N, 2))
    prism = np.zeros(N)
    oroll = np.zeros(N)
    froll = np.zeros(N)
    torque = np.zeros((N - 1, E.shape[1]))
    limit = np.zeros(N)

    prev = None
    for k in range(N):
        obj = traj.objects[k]
        q = traj.joints[k].q
        A_plan, B_plan = traj.contacts[k]
        cp = signed_distance(finger, q, obj.center, r, prev_normal=None if prev is None else prev[1].normal)
        psi[k] = cp.psi
        A = ContactRecord(obj.center - r * cp.normal, cp.normal, A_plan.f_n, A_plan.f_t, scene.mu, "A")
        B = ContactRecord(scene.thumb_contact_point(obj.center), scene.n_thumb, B_plan.f_n, B_plan.f_t, scene.mu, "B")
        eqm[k] = equilibrium_residual([A, B], obj, scene.g, scene.gravity_direction)
        gap[k] = scene.thumb_gap(obj.center)
        fn[k] = A.f_n, B.f_n
        # margin without raising on negative normal force; that is reported separately
        margin[k] = [c.mu * c.f_n - abs(c.f_t) for c in (A, B)]
        limit[k] = float(np.max(np.concatenate([lo - q, q - hi])))
        if k < N - 1:
            J = jacobian(finger, q, cp.link_index, cp.offset)
            torque[k] = traj.u[k] - E.T @ (J.T @ (-A.force))
        arc = cp.arc(finger)
        phi = link_angles(finger, q)[cp.link_index]
        if prev is not None:
            p_obj, p_cp, p_arc, p_phi = prev
            step = RollingPairStep(
                traj.d[k - 1], traj.d[k], p_obj.theta, obj.theta, p_obj.center, obj.center
            )
            prism[k] = prismatic_rolling_residual(step, r)
            oroll[k] = object_rolling_residual(step, r, scene.t_roll)
            kappa = 1.0 if cross2(np.array([np.cos(phi), np.sin(phi)]), cp.normal) >= 0 else -1.0
            froll[k] = arc - p_arc + kappa * r * ((obj.theta - p_obj.theta) - (phi - p_phi))
        prev = (obj, cp, arc, phi)
    return ValidationReport(
        psi=psi,
        equilibrium=eqm,
        thumb_gap=gap,
        cone_margin=margin,
        normal_force=fn,
        prismatic=prism,
        object_roll=oroll,
        finger_roll=froll,
        torque=torque,
        joint_limit=limit,
    )
