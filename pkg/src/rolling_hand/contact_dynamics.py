"""Quasi-static balance, Coulomb cones and rolling constraints for a disc
held between a flat thumb and the first finger.

Sign conventions
----------------
* A contact normal points from the finger into the object. The tangential
  direction is ``perp(normal)`` (normal rotated +90 degrees), and ``f_t`` is
  the signed force component along it.
* Object rotation ``theta`` is counter-clockwise positive. The rolling
  direction ``t_roll`` is the unit vector the centre travels along when the
  disc rolls by a positive angle without slipping on the thumb.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kinematics import cross2, perp

GRAVITY = 9.81


class ContactInputError(ValueError):
    """Rejected contact data (wrong labels, non-unit normals)."""


class InfeasibleContact(ValueError):
    """Negative normal force; distinct from a friction-cone violation."""


@dataclass
class ObjectState:
    x: float
    y: float
    theta: float
    radius: float = 0.0075
    mass: float = 0.01

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"object radius must be positive, got {self.radius}")
        if not self.mass >= 0:
            raise ValueError(f"object mass must be non-negative, got {self.mass}")

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def pose(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])


@dataclass
class ContactRecord:
    point: np.ndarray
    normal: np.ndarray
    f_n: float
    f_t: float
    mu: float
    label: str = "A"

    def __post_init__(self):
        self.point = np.asarray(self.point, dtype=float)
        self.normal = np.asarray(self.normal, dtype=float)

    @property
    def tangent(self) -> np.ndarray:
        return perp(self.normal)

    @property
    def force(self) -> np.ndarray:
        return self.f_n * self.normal + self.f_t * self.tangent


@dataclass
class RollingPairStep:
    d_prev: float
    d_curr: float
    theta_prev: float
    theta_curr: float
    c_prev: np.ndarray = field(default_factory=lambda: np.zeros(2))
    c_curr: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        self.c_prev = np.asarray(self.c_prev, dtype=float)
        self.c_curr = np.asarray(self.c_curr, dtype=float)


def gravity_force(mass: float, g: float = GRAVITY, direction=(0.0, -1.0)) -> np.ndarray:
    return mass * g * np.asarray(direction, dtype=float)


def _check_normal(c: ContactRecord):
    if abs(np.linalg.norm(c.normal) - 1.0) > 1e-9:
        raise ContactInputError(f"contact {c.label}: normal {c.normal} is not unit length")


def equilibrium_residual(
    contacts,
    obj: ObjectState,
    g: float = GRAVITY,
    gravity_direction=(0.0, -1.0),
) -> np.ndarray:
    """Net force and moment (Fx, Fy, Mz) on the object about its centre.

    Zero means quasi-static equilibrium. Gravity acts at the centre and
    rolling-resistance moments are neglected.
    """
    contacts = list(contacts)
    if sorted(c.label for c in contacts) != ["A", "B"]:
        raise ContactInputError("need exactly one contact labelled A and one labelled B")
    center = obj.center
    res = np.zeros(3)
    res[:2] = gravity_force(obj.mass, g, gravity_direction)
    for c in contacts:
        _check_normal(c)
        F = c.force
        res[:2] += F
        res[2] += cross2(c.point - center, F)
    return res


def friction_margin(contact: ContactRecord) -> float:
    """``mu * f_n - |f_t|``; non-negative inside the Coulomb cone."""
    if contact.f_n < 0:
        raise InfeasibleContact(f"contact {contact.label}: negative normal force {contact.f_n}")
    return contact.mu * contact.f_n - abs(contact.f_t)


def prismatic_rolling_residual(step: RollingPairStep, r: float) -> float:
    """Travel of the virtual prismatic joint on the thumb against the roll."""
    if not r > 0:
        raise ValueError("radius must be positive")
    return step.d_prev - step.d_curr - r * (step.theta_prev - step.theta_curr)


def object_rolling_residual(step: RollingPairStep, r: float, t_roll=(0.0, -1.0)) -> float:
    """Signed centre travel along ``t_roll`` minus the arc rolled.

    Vanishes for pure rolling; a pure slide of length ``s`` leaves ``s``.
    """
    if not r > 0:
        raise ValueError("radius must be positive")
    travel = float(np.dot(step.c_curr - step.c_prev, np.asarray(t_roll, dtype=float)))
    return travel - r * (step.theta_curr - step.theta_prev)
