"""Simulated magnetic taxel array and contact localisation.

A taxel reports a 3-vector whose magnitude grows with the pressure near it.
The estimator normalises magnitudes to 0..255, keeps taxels above a
threshold, and returns the magnitude-weighted centroid of the strongest
taxel and its nearest active neighbours. Object rotation follows from how
far that centroid has travelled along the sensor polyline.

Layout coordinates are free: the finger array is described in the
straightened-chain frame (x = arc length from the finger base), the thumb
strip directly in world coordinates.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

NO_CONTACT = None  # returned by the estimators when a frame carries no contact


@dataclass
class SensorLayout:
    positions: np.ndarray  # (n_s, 2), ordered along the surface
    normal: tuple[float, float, float] = (0.0, 0.0, 1.0)  # direction of the simulated field vector

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=float))
        if self.positions.ndim != 2 or self.positions.shape[1] != 2:
            raise ValueError("sensor positions must have shape (n_s, 2)")
        if self.n_s < 2:
            raise ValueError(f"need at least two sensors, got {self.n_s}")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("sensor positions must be finite")
        seg = np.linalg.norm(np.diff(self.positions, axis=0), axis=1)
        if np.any(seg <= 0):
            raise ValueError("sensor positions must be distinct")
        n = np.asarray(self.normal, dtype=float)
        self.normal = tuple(n / np.linalg.norm(n))

    @property
    def n_s(self) -> int:
        return len(self.positions)

    @property
    def arcs(self) -> np.ndarray:
        """Cumulative polyline length at every sensor, starting at 0."""
        seg = np.linalg.norm(np.diff(self.positions, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def pitch(self) -> float:
        return float(np.mean(np.diff(self.arcs)))

    def project(self, point) -> float:
        """Polyline arc length of the closest point to ``point`` (clamped to the array)."""
        p = np.asarray(point, dtype=float)
        a, b = self.positions[:-1], self.positions[1:]
        d = b - a
        L2 = np.einsum("ij,ij->i", d, d)
        t = np.clip(np.einsum("ij,ij->i", p - a, d) / L2, 0.0, 1.0)
        closest = a + t[:, None] * d
        i = int(np.argmin(np.linalg.norm(closest - p, axis=1)))
        return float(self.arcs[i] + t[i] * np.sqrt(L2[i]))

    def point_at(self, s: float) -> np.ndarray:
        arcs = self.arcs
        return np.array([np.interp(s, arcs, self.positions[:, 0]), np.interp(s, arcs, self.positions[:, 1])])

    @classmethod
    def uniform(cls, start, direction, n_s: int = 17, pitch: float = 1.5e-3, **kw) -> "SensorLayout":
        u = np.asarray(direction, dtype=float)
        u = u / np.linalg.norm(u)
        s = np.arange(n_s) * pitch
        return cls(np.asarray(start, dtype=float) + s[:, None] * u, **kw)


def finger_layout(center_arc: float, n_s: int = 17, pitch: float = 1.5e-3) -> SensorLayout:
    """Array on the palmar surface, centred at ``center_arc`` in the straightened-chain frame."""
    start = center_arc - 0.5 * (n_s - 1) * pitch
    return SensorLayout.uniform((start, 0.0), (1.0, 0.0), n_s, pitch)


@dataclass
class TactileFrame:
    readings: np.ndarray  # (n_s, 3)
    k: int = 0

    def __post_init__(self):
        self.readings = np.asarray(self.readings, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(self.readings)):
            raise ValueError("tactile readings must be finite")

    @property
    def magnitudes(self) -> np.ndarray:
        return np.linalg.norm(self.readings, axis=1)


@dataclass
class ContactEstimate:
    p_cp: np.ndarray
    confidence: float
    J: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))


def simulate_readings(
    layout: SensorLayout,
    contact,
    force: float,
    sigma: float,
    noise: float = 0.0,
    rng: np.random.Generator | None = None,
    k: int = 0,
) -> TactileFrame:
    """Gaussian pressure footprint around ``contact`` plus additive Gaussian noise."""
    if not sigma > 0:
        raise ValueError(f"spread sigma must be positive, got {sigma}")
    if not force >= 0:
        raise ValueError(f"force must be non-negative, got {force}")
    d2 = np.sum((layout.positions - np.asarray(contact, dtype=float)) ** 2, axis=1)
    s = force * np.exp(-d2 / (2 * sigma**2))
    if noise > 0:
        rng = rng if rng is not None else np.random.default_rng()
        s = s + rng.normal(0.0, noise, size=layout.n_s)
    return TactileFrame(s[:, None] * np.asarray(layout.normal)[None, :], k)


def response_scale(layout: SensorLayout, sigma: float) -> float:
    """Newtons per unit mean magnitude for a centred, noise-free contact."""
    centre = layout.point_at(0.5 * layout.arcs[-1])
    mean = simulate_readings(layout, centre, 1.0, sigma).magnitudes.mean()
    return float(1.0 / mean)


def estimate_force(layout: SensorLayout, frame: TactileFrame, scale: float) -> float:
    """Contact force from the mean signed reading along the layout normal.

    Magnitudes would turn zero-mean noise into a positive floor on every
    taxel; the signed component lets it average out.
    """
    return float(scale * np.mean(frame.readings @ np.asarray(layout.normal, dtype=float)))


def normalize(frame: TactileFrame | np.ndarray) -> np.ndarray | None:
    """Affine map of the magnitudes onto [0, 255]; ``None`` for a flat frame."""
    s = frame.magnitudes if isinstance(frame, TactileFrame) else np.asarray(frame, dtype=float)
    lo, hi = float(s.min()), float(s.max())
    if not hi > lo:
        return NO_CONTACT
    return (s - lo) / (hi - lo) * 255.0  # divide first so the peak maps to 255 exactly


def threshold_weights(s_norm, T: float = 30.0) -> tuple[np.ndarray, np.ndarray] | None:
    """Weights ``max((s'_i - T)/(s'_max - T), 0)`` and the active index set."""
    if not 0 < T < 255:
        raise ValueError(f"threshold must lie in (0, 255), got {T}")
    s = np.asarray(s_norm, dtype=float)
    top = s[int(np.argmax(s))]
    if top <= T:
        return NO_CONTACT
    W = np.maximum((s - T) / (top - T), 0.0)
    return W, np.flatnonzero(W > 0)


def estimate_contact_point(layout: SensorLayout, s_norm, active, n_n: int = 4) -> ContactEstimate:
    s = np.asarray(s_norm, dtype=float)
    active = np.asarray(active, dtype=int)
    if active.size == 0:
        raise ValueError("active set is empty")
    if n_n < 1:
        raise ValueError("n_n must be at least 1")
    i_star = int(np.argmax(s))
    dist = np.linalg.norm(layout.positions - layout.positions[i_star], axis=1)
    # equidistant neighbours: stronger reading first, then lower index; both keys are
    # rounded so a symmetric footprint ties exactly instead of on rounding noise
    dist = np.round(dist / layout.pitch, 9)
    nearest = np.lexsort((np.arange(len(s)), -np.round(s, 9), dist))[:n_n]
    J = np.array([i for i in nearest if i in set(active.tolist()) or i == i_star], dtype=int)
    w = s[J]
    if w.sum() <= 0:
        p = layout.positions[i_star].copy()
    else:
        p = (w / w.sum()) @ layout.positions[J]
    return ContactEstimate(p, float(s[i_star]), np.sort(J))


def locate(layout: SensorLayout, frame: TactileFrame, T: float = 30.0, n_n: int = 4) -> ContactEstimate | None:
    """Full pipeline on one frame; ``None`` when the frame shows no contact."""
    s = normalize(frame)
    if s is NO_CONTACT:
        return NO_CONTACT
    tw = threshold_weights(s, T)
    if tw is NO_CONTACT:
        return NO_CONTACT
    return estimate_contact_point(layout, s, tw[1], n_n)


def estimate_rotation(
    layout: SensorLayout,
    history: Sequence[ContactEstimate | np.ndarray],
    r: float,
    initial=None,
) -> np.ndarray:
    """Signed travel along the sensor polyline from ``initial`` divided by ``r``.

    ``initial`` defaults to the first history entry. Travel toward higher
    sensor indices is positive.
    """
    if not r > 0:
        raise ValueError(f"radius must be positive, got {r}")
    if len(history) == 0:
        raise ValueError("history is empty")
    pts = [h.p_cp if isinstance(h, ContactEstimate) else np.asarray(h, dtype=float) for h in history]
    s0 = layout.project(pts[0] if initial is None else initial)
    return np.array([(layout.project(p) - s0) / r for p in pts])


def write_trace(path, magnitudes, points, theta_hat) -> None:
    """CSV with k, s_1..s_n, p_cp.x, p_cp.y, theta_hat (blank where no contact was seen)."""
    magnitudes = np.asarray(magnitudes, dtype=float)
    n_s = magnitudes.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k"] + [f"s{i + 1}" for i in range(n_s)] + ["p_cp_x", "p_cp_y", "theta_hat"])
        for k, (s, p, th) in enumerate(zip(magnitudes, points, theta_hat)):
            cells = ["", ""] if p is None else [repr(float(p[0])), repr(float(p[1]))]
            w.writerow([k] + [repr(float(v)) for v in s] + cells + ["" if th is None else repr(float(th))])
