"""Physical setup shared by the planner, the plant and the validator.

World frame: the thumb is a flat plane through ``thumb_origin`` with unit
normal ``thumb_normal`` pointing into the object. The object rolls without
slipping on it, so a positive rotation moves its centre along
``rolling_direction = perp(thumb_normal)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .contact_dynamics import GRAVITY, ContactRecord, ObjectState, gravity_force
from .kinematics import FingerModel, perp


@dataclass
class Scene:
    finger: FingerModel = field(default_factory=FingerModel)
    radius: float = 0.0075
    mass: float = 0.01
    mu: float = 0.5
    g: float = GRAVITY
    gravity_direction: tuple[float, float] = (0.0, -1.0)
    thumb_origin: tuple[float, float] = (0.0, 0.0)
    thumb_normal: tuple[float, float] = (-1.0, 0.0)

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if not self.mass >= 0:
            raise ValueError(f"mass must be non-negative, got {self.mass}")
        if not self.mu >= 0:
            raise ValueError(f"mu must be non-negative, got {self.mu}")
        n = np.asarray(self.thumb_normal, dtype=float)
        if not np.isclose(np.linalg.norm(n), 1.0):
            raise ValueError("thumb_normal must be a unit vector")
        gd = np.asarray(self.gravity_direction, dtype=float)
        if not np.isclose(np.linalg.norm(gd), 1.0):
            raise ValueError("gravity_direction must be a unit vector")

    @property
    def n_thumb(self) -> np.ndarray:
        return np.asarray(self.thumb_normal, dtype=float)

    @property
    def t_roll(self) -> np.ndarray:
        return perp(self.n_thumb)

    @property
    def weight(self) -> np.ndarray:
        return gravity_force(self.mass, self.g, self.gravity_direction)

    def thumb_gap(self, center, radius: float | None = None) -> float:
        r = self.radius if radius is None else radius
        return float(np.dot(np.asarray(center) - np.asarray(self.thumb_origin), self.n_thumb) - r)

    def thumb_contact_point(self, center, radius: float | None = None) -> np.ndarray:
        r = self.radius if radius is None else radius
        return np.asarray(center, dtype=float) - r * self.n_thumb

    def prismatic_length(self, center, radius: float | None = None) -> float:
        """Position of contact B along the thumb, measured along the rolling direction."""
        p = self.thumb_contact_point(center, radius)
        return float(np.dot(p - np.asarray(self.thumb_origin), self.t_roll))

    def center_on_thumb(self, d: float, radius: float | None = None) -> np.ndarray:
        """Centre of a disc touching the thumb with contact B at prismatic length ``d``."""
        r = self.radius if radius is None else radius
        return np.asarray(self.thumb_origin) + d * self.t_roll + r * self.n_thumb

    def object(self, x, y, theta, radius: float | None = None) -> ObjectState:
        return ObjectState(x, y, theta, self.radius if radius is None else radius, self.mass)

    def thumb_contact(self, center, f_n, f_t, radius: float | None = None) -> ContactRecord:
        return ContactRecord(self.thumb_contact_point(center, radius), self.n_thumb, f_n, f_t, self.mu, "B")
