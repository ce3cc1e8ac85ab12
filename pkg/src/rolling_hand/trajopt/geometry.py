"""Finger/disc contact geometry with analytic first derivatives.

Everything here is differentiated with respect to the full joint vector
``q`` (m entries) followed by the disc centre ``c`` (2 entries). The closest
point is found per link; in the interior of a link the normal is the link's
palmar normal, at a link end it is the direction from that end to the centre.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

P = np.array([[0.0, -1.0], [1.0, 0.0]])  # perp as a matrix


@dataclass
class ContactGeometry:
    psi: float
    p: np.ndarray  # closest finger point
    n: np.ndarray  # unit normal, finger -> object
    s: float  # arc coordinate of p along the chain
    phi: float  # world angle of the contact link
    link: int
    kappa: float  # +1 if the object is on the palmar side of the link
    origins: np.ndarray
    # derivatives w.r.t. (q, c)
    dpsi: np.ndarray
    dp: np.ndarray
    dn: np.ndarray
    ds: np.ndarray
    dphi: np.ndarray
    dorigins: np.ndarray  # (m+1, 2, m): joint origins w.r.t. q


def chain(lengths, base, base_angle, q):
    phi = base_angle + np.cumsum(q)
    dirs = np.column_stack([np.cos(phi), np.sin(phi)])
    o = np.vstack([np.zeros(2), np.cumsum(np.asarray(lengths)[:, None] * dirs, axis=0)]) + base
    m = len(q)
    do = np.zeros((m + 1, 2, m))
    for a in range(1, m + 1):
        for j in range(a):
            do[a, :, j] = P @ (o[a] - o[j])
    return phi, dirs, o, do


def contact_geometry(lengths, base, base_angle, q, c, r) -> ContactGeometry:
    m = len(q)
    phi, dirs, o, do = chain(lengths, base, base_angle, q)
    best = None
    for i in range(m):
        t = float(np.clip(np.dot(c - o[i], dirs[i]), 0.0, lengths[i]))
        w = c - (o[i] + t * dirs[i])
        dist = float(np.hypot(*w))
        if best is None or dist < best[0]:
            best = (dist, i, t)
    dist, i, t = best
    d = dirs[i]
    e = P @ d
    L = lengths[i]
    starts = np.concatenate([[0.0], np.cumsum(lengths)[:-1]])
    nv = m + 2
    dpsi = np.zeros(nv)
    dp = np.zeros((2, nv))
    dn = np.zeros((2, nv))
    ds = np.zeros(nv)
    dphi = np.zeros(nv)
    dphi[: i + 1] = 1.0
    interior = 0.0 < t < L
    if interior:
        h = float(np.dot(c - o[i], e))
        sg = 1.0 if h >= 0 else -1.0
        n = sg * e
        p = o[i] + t * d
        # dpsi: d|h|
        dh = np.zeros(nv)
        dh[m:] = e
        for j in range(i + 1):
            dh[j] = -np.dot(p - o[j], d)
        dpsi = sg * dh
        # dt
        dt = np.zeros(nv)
        dt[m:] = d
        for j in range(i + 1):
            dt[j] = -np.dot(do[i, :, j], d) + h
        for j in range(i + 1):
            dp[:, j] = P @ (p - o[j]) + dt[j] * d
        dp[:, m:] = np.outer(d, d)
        for j in range(i + 1):
            dn[:, j] = P @ n
        ds = dt
    else:
        p = o[i] + t * d
        w = c - p
        if dist > 0:
            n = w / dist
        else:
            n = e.copy()
        for j in range(i + 1):
            dp[:, j] = P @ (p - o[j])
        dw = -dp.copy()
        dw[:, m:] += np.eye(2)
        dpsi = n @ dw
        if dist > 0:
            dn = (np.eye(2) - np.outer(n, n)) @ dw / dist
    kappa = 1.0 if np.dot(n, e) >= 0 else -1.0
    return ContactGeometry(
        psi=dist - r,
        p=p,
        n=n,
        s=float(starts[i] + t),
        phi=float(phi[i]),
        link=i,
        kappa=kappa,
        origins=o,
        dpsi=dpsi,
        dp=dp,
        dn=dn,
        ds=ds,
        dphi=dphi,
        dorigins=do,
    )

