"""Planned rolling trajectory and its on-disk formats."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..contact_dynamics import ContactRecord, ObjectState
from ..kinematics import JointState
from ..scene import Scene
from .solver import SolveReport


@dataclass
class Trajectory:
    objects: list[ObjectState]
    joints: list[JointState]
    d: np.ndarray
    contacts: list[tuple[ContactRecord, ContactRecord]]  # (A, B) per step
    u: np.ndarray  # (N-1, m_act)
    report: SolveReport | None = None
    extra: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.objects)

    @property
    def X(self) -> np.ndarray:
        return np.array([o.pose for o in self.objects]).reshape(-1, 3)

    @property
    def q(self) -> np.ndarray:
        return np.array([j.q for j in self.joints])

    @property
    def forces(self) -> np.ndarray:
        """Columns fnA, ftA, fnB, ftB."""
        return np.array([[a.f_n, a.f_t, b.f_n, b.f_t] for a, b in self.contacts]).reshape(-1, 4)

    @property
    def contact_points(self) -> np.ndarray:
        return np.array([a.point for a, _ in self.contacts]).reshape(-1, 2)

    @property
    def contact_normals(self) -> np.ndarray:
        return np.array([a.normal for a, _ in self.contacts]).reshape(-1, 2)

    # -- serialisation -------------------------------------------------

    def columns(self) -> list[str]:
        m = self.q.shape[1] if len(self) else 0
        ma = self.u.shape[1] if self.u.size else 0
        return (
            ["k", "x", "y", "theta"]
            + [f"q{j}" for j in range(m)]
            + ["d", "fnA", "ftA", "fnB", "ftB"]
            + [f"u{j}" for j in range(ma)]
            + ["pAx", "pAy", "nAx", "nAy"]
        )

    def to_csv(self, path) -> None:
        X, q, F = self.X, self.q, self.forces
        P, Nn = self.contact_points, self.contact_normals
        ma = self.u.shape[1] if self.u.size else 0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns())
            for k in range(len(self)):
                u = [repr(float(v)) for v in self.u[k]] if k < len(self.u) else [""] * ma
                row = (
                    [str(k)]
                    + [repr(float(v)) for v in X[k]]
                    + [repr(float(v)) for v in q[k]]
                    + [repr(float(self.d[k]))]
                    + [repr(float(v)) for v in F[k]]
                    + u
                    + [repr(float(v)) for v in P[k]]
                    + [repr(float(v)) for v in Nn[k]]
                )
                w.writerow(row)

    @classmethod
    def from_csv(cls, path, scene: Scene) -> "Trajectory":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            return cls([], [], np.zeros(0), [], np.zeros((0, scene.finger.n_actuated)))
        m = scene.finger.n_joints
        ma = sum(1 for c in rows[0] if c.startswith("u"))
        objects, joints, d, contacts, u = [], [], [], [], []
        for k, r in enumerate(rows):
            x, y, th = float(r["x"]), float(r["y"]), float(r["theta"])
            objects.append(scene.object(x, y, th))
            joints.append(JointState([float(r[f"q{j}"]) for j in range(m)]))
            d.append(float(r["d"]))
            n = np.array([float(r["nAx"]), float(r["nAy"])])
            A = ContactRecord(
                np.array([float(r["pAx"]), float(r["pAy"])]), n, float(r["fnA"]), float(r["ftA"]), scene.mu, "A"
            )
            B = scene.thumb_contact((x, y), float(r["fnB"]), float(r["ftB"]))
            contacts.append((A, B))
            if k < len(rows) - 1:
                u.append([float(r[f"u{j}"]) for j in range(ma)])
        return cls(objects, joints, np.array(d), contacts, np.array(u).reshape(-1, ma))

    def write_report(self, path, validation: dict | None = None) -> None:
        data = {"steps": len(self)}
        if self.report is not None:
            data["solver"] = self.report.as_dict()
        if validation is not None:
            data["validation"] = validation
        Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def contact_pair(scene: Scene, center, normal, forces) -> tuple[ContactRecord, ContactRecord]:
    """Contact records with the finger force applied on the disc surface."""
    c = np.asarray(center, dtype=float)
    n = np.asarray(normal, dtype=float)
    fnA, ftA, fnB, ftB = forces
    A = ContactRecord(c - scene.radius * n, n, float(fnA), float(ftA), scene.mu, "A")
    B = scene.thumb_contact(c, float(fnB), float(ftB))
    return A, B

