"""Planar kinematics of the articulated first finger.

The finger is a serial chain of revolute joints in the plane. Joint ``j``
sits at the proximal end of link ``j``; the cumulative link angle is
``base_angle + q[0] + ... + q[j]``. Positive joint angles are flexion
(counter-clockwise), so the palmar surface of every link is on its
counter-clockwise side.

Fingers are treated as zero-thickness segments. Any pad thickness is folded
into the effective object radius by the caller.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def perp(v: np.ndarray) -> np.ndarray:
    """Rotate a planar vector by +90 degrees."""
    return np.array([-v[1], v[0]])


def cross2(a: np.ndarray, b: np.ndarray) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def rot2(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Coupling:
    """Passive joint ``passive`` follows ``ratio * q[source]``."""

    passive: int
    source: int
    ratio: float = 1.0


@dataclass
class FingerModel:
    link_lengths: tuple[float, ...] = (0.045, 0.025, 0.026)
    base_position: tuple[float, float] = (0.0, 0.0)
    base_angle: float = 0.0
    joint_limits: tuple[tuple[float, float], ...] = (
        (0.0, np.pi / 2),
        (0.0, np.pi / 2),
        (0.0, np.pi / 2),
    )
    couplings: tuple[Coupling, ...] = (Coupling(passive=1, source=0, ratio=1.0),)

    def __post_init__(self):
        self.link_lengths = tuple(float(v) for v in self.link_lengths)
        self.base_position = tuple(float(v) for v in self.base_position)
        self.joint_limits = tuple((float(lo), float(hi)) for lo, hi in self.joint_limits)
        self.couplings = tuple(
            c if isinstance(c, Coupling) else Coupling(**c) for c in self.couplings
        )
        m = len(self.link_lengths)
        if m == 0:
            raise ValueError("finger needs at least one link")
        if any(not np.isfinite(L) or L <= 0 for L in self.link_lengths):
            raise ValueError(f"link_lengths must be positive, got {self.link_lengths}")
        if len(self.joint_limits) != m:
            raise ValueError("joint_limits needs one (min, max) pair per joint")
        for j, (lo, hi) in enumerate(self.joint_limits):
            if not lo < hi:
                raise ValueError(f"joint_limits[{j}]: min {lo} must be below max {hi}")
        passive = [c.passive for c in self.couplings]
        if len(set(passive)) != len(passive):
            raise ValueError("a joint can be driven by at most one coupling")
        for c in self.couplings:
            if not np.isfinite(c.ratio):
                raise ValueError(f"coupling ratio must be finite, got {c.ratio}")
            if not (0 <= c.passive < m and 0 <= c.source < m):
                raise ValueError(f"coupling {c} references a joint outside the chain")
            if c.source in passive or c.source == c.passive:
                raise ValueError(f"coupling {c}: source must be an actuated joint")

    @property
    def n_joints(self) -> int:
        return len(self.link_lengths)

    @property
    def actuated(self) -> list[int]:
        passive = {c.passive for c in self.couplings}
        return [j for j in range(self.n_joints) if j not in passive]

    @property
    def n_actuated(self) -> int:
        return len(self.actuated)

    @property
    def total_length(self) -> float:
        return float(sum(self.link_lengths))

    @property
    def arc_starts(self) -> np.ndarray:
        """Arc length from the base to the proximal end of every link."""
        return np.concatenate([[0.0], np.cumsum(self.link_lengths)[:-1]])

    def coupling_matrix(self) -> np.ndarray:
        """Linear map E with q_full = E @ q_act."""
        E = np.zeros((self.n_joints, self.n_actuated))
        col = {j: k for k, j in enumerate(self.actuated)}
        for j in self.actuated:
            E[j, col[j]] = 1.0
        for c in self.couplings:
            E[c.passive, col[c.source]] = c.ratio
        return E

    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.joint_limits])

    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.joint_limits])


@dataclass
class JointState:
    q: np.ndarray
    dq: np.ndarray = field(default=None)

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).copy()
        self.dq = np.zeros_like(self.q) if self.dq is None else np.asarray(self.dq, dtype=float).copy()
        if self.dq.shape != self.q.shape:
            raise ValueError("q and dq must have the same length")

    def within_limits(self, model: FingerModel, tol: float = 1e-12) -> bool:
        return bool(np.all(self.q >= model.lower() - tol) and np.all(self.q <= model.upper() + tol))


@dataclass
class ClosestPointResult:
    psi: float
    point_on_finger: np.ndarray
    point_on_object: np.ndarray
    normal: np.ndarray
    link_index: int
    offset: float  # distance of point_on_finger along its link

    def arc(self, model: FingerModel) -> float:
        return float(model.arc_starts[self.link_index] + self.offset)


def _as_q(model: FingerModel, q) -> np.ndarray:
    q = np.asarray(q.q if isinstance(q, JointState) else q, dtype=float)
    if q.shape != (model.n_joints,):
        raise ValueError(f"expected {model.n_joints} joint angles, got shape {q.shape}")
    return q


def link_angles(model: FingerModel, q) -> np.ndarray:
    q = _as_q(model, q)
    return model.base_angle + np.cumsum(q)


def joint_origins(model: FingerModel, q) -> np.ndarray:
    """Positions of joints 0..m-1 followed by the fingertip, shape (m+1, 2)."""
    phi = link_angles(model, q)
    L = np.asarray(model.link_lengths)
    steps = L[:, None] * np.column_stack([np.cos(phi), np.sin(phi)])
    return np.vstack([np.zeros(2), np.cumsum(steps, axis=0)]) + np.asarray(model.base_position)


def forward_kinematics(model: FingerModel, q) -> tuple[list[np.ndarray], np.ndarray]:
    """Homogeneous frames of every link plus the fingertip.

    Returns ``(frames, tip)`` where ``frames[j]`` is the 3x3 transform of link
    ``j`` (origin at its joint, x axis along the link) and ``tip`` is the
    fingertip frame.
    """
    q = _as_q(model, q)
    T = np.eye(3)
    T[:2, :2] = rot2(model.base_angle)
    T[:2, 2] = model.base_position
    frames = []
    for qj, L in zip(q, model.link_lengths):
        J = np.eye(3)
        J[:2, :2] = rot2(qj)
        T = T @ J
        frames.append(T.copy())
        step = np.eye(3)
        step[0, 2] = L
        T = T @ step
    return frames, T


def fingertip(model: FingerModel, q) -> np.ndarray:
    return joint_origins(model, q)[-1]


def point_on_link(model: FingerModel, q, link: int, offset: float) -> np.ndarray:
    o = joint_origins(model, q)
    phi = link_angles(model, q)[link]
    return o[link] + offset * np.array([np.cos(phi), np.sin(phi)])


def locate_arc(model: FingerModel, s: float) -> tuple[int, float]:
    """Map arc length along the straightened chain to (link, offset)."""
    starts = model.arc_starts
    link = int(np.clip(np.searchsorted(starts, s, side="right") - 1, 0, model.n_joints - 1))
    return link, float(np.clip(s - starts[link], 0.0, model.link_lengths[link]))


def point_at_arc(model: FingerModel, q, s: float) -> np.ndarray:
    link, offset = locate_arc(model, s)
    return point_on_link(model, q, link, offset)


def jacobian(model: FingerModel, q, link: int, offset: float) -> np.ndarray:
    """2 x m Jacobian of a material point on ``link`` at ``offset`` from its joint."""
    q = _as_q(model, q)
    if not 0 <= link < model.n_joints:
        raise ValueError(f"link {link} is not on the chain")
    L = model.link_lengths[link]
    if not -1e-12 <= offset <= L + 1e-12:
        raise ValueError(f"offset {offset} lies off link {link} of length {L}")
    o = joint_origins(model, q)
    phi = model.base_angle + np.sum(q[: link + 1])
    p = o[link] + offset * np.array([np.cos(phi), np.sin(phi)])
    J = np.zeros((2, model.n_joints))
    r = p - o[: link + 1]
    J[0, : link + 1] = -r[:, 1]
    J[1, : link + 1] = r[:, 0]
    return J


def tip_jacobian(model: FingerModel, q) -> np.ndarray:
    last = model.n_joints - 1
    return jacobian(model, q, last, model.link_lengths[last])


def expand_coupling(model: FingerModel, q_act) -> JointState:
    """Full joint vector from actuated angles.

    Also accepts an already expanded vector, in which case passive joints are
    recomputed from their sources (so the operation is idempotent).
    """
    q_act = np.asarray(q_act, dtype=float)
    if q_act.shape == (model.n_joints,):
        q_act = q_act[model.actuated]
    if q_act.shape != (model.n_actuated,):
        raise ValueError(f"expected {model.n_actuated} actuated angles, got shape {q_act.shape}")
    return JointState(model.coupling_matrix() @ q_act)


def signed_distance(
    model: FingerModel,
    q,
    center,
    radius: float,
    prev_normal=None,
) -> ClosestPointResult:
    """Signed gap between the finger segments and a disc of ``radius``.

    Ties between links resolve to the lower link index. When the disc centre
    lies exactly on a link the normal falls back to ``prev_normal`` or, without
    one, to +y of the finger base frame.
    """
    if not radius > 0:
        raise ValueError(f"radius must be positive, got {radius}")
    q = _as_q(model, q)
    c = np.asarray(center, dtype=float)[:2]
    phi = model.base_angle + np.cumsum(q)
    d = np.column_stack([np.cos(phi), np.sin(phi)])
    L = np.asarray(model.link_lengths)
    o = np.vstack([np.zeros(2), np.cumsum(L[:, None] * d, axis=0)]) + np.asarray(model.base_position)
    ts = np.clip(np.einsum("ij,ij->i", c - o[:-1], d), 0.0, L)
    ps = o[:-1] + ts[:, None] * d
    dists = np.hypot(c[0] - ps[:, 0], c[1] - ps[:, 1])
    i = int(np.argmin(dists))  # first minimum: ties go to the lower link
    dist, t, p = float(dists[i]), float(ts[i]), ps[i]
    if dist > 0:
        n = (c - p) / dist
    elif prev_normal is not None:
        n = np.asarray(prev_normal, dtype=float)
        n = n / np.linalg.norm(n)
    else:
        n = rot2(model.base_angle) @ np.array([0.0, 1.0])
    return ClosestPointResult(
        psi=dist - radius,
        point_on_finger=p,
        point_on_object=c - radius * n,
        normal=n,
        link_index=i,
        offset=t,
    )
