"""Initial guess for the rolling NLP.

Object poses are interpolated linearly between start and goal, prismatic
lengths follow from pure rolling, finger joints come from damped
least-squares IK (touch the disc and roll on the finger without slip), and
forces are the gravity-balancing solution at a fixed squeeze.
"""
from __future__ import annotations

import numpy as np

from .geometry import P, contact_geometry
from .problem import RollingNLP


def _geo(nlp: RollingNLP, qa, c):
    f = nlp.scene.finger
    return contact_geometry(f.link_lengths, np.asarray(f.base_position), f.base_angle, nlp.E @ qa, c, nlp.scene.radius)


def _dls(residual, qa, lo, hi, damping=1e-3, iters=100, tol=1e-12):
    for _ in range(iters):
        r, J = residual(qa)
        if np.max(np.abs(r)) < tol:
            break
        A = J @ J.T + damping**2 * np.eye(len(r))
        step = -J.T @ np.linalg.solve(A, r)
        qa = np.clip(qa + step, lo, hi)
    return qa


def solve_contact_ik(nlp: RollingNLP, c, qa_seed, target_arc=None, prev=None, theta_step=0.0):
    """Actuated joints that touch the disc at ``c``.

    The second condition is either a target contact arc (first knot) or
    no-slip rolling relative to the previous knot ``prev = (geometry)``.
    """
    E = nlp.E
    m = E.shape[0]
    r = nlp.scene.radius
    f = nlp.scene.finger
    # act on actuated coordinates only; limits via the actuated joints
    act = f.actuated
    lo, hi = f.lower()[act], f.upper()[act]

    def residual(qa):
        g = _geo(nlp, qa, c)
        dq = lambda v: v[:m] @ E
        if prev is None:
            r2, d2 = g.s - target_arc, dq(g.ds)
        else:
            r2 = g.s - prev.s + g.kappa * r * (theta_step - (g.phi - prev.phi))
            d2 = dq(g.ds - g.kappa * r * g.dphi)
        return np.array([g.psi, r2]), np.vstack([dq(g.dpsi), d2])

    return _dls(residual, np.asarray(qa_seed, dtype=float), lo, hi)


def balance_forces(nlp: RollingNLP, n_A, f_nA):
    """Thumb normal/tangential and finger tangential forces for a given squeeze."""
    sc = nlp.scene
    nB, tB = sc.n_thumb, P @ sc.n_thumb
    tA = P @ n_A
    # unknowns ftA, fnB, ftB
    A = np.array(
        [
            [tA[0], nB[0], tB[0]],
            [tA[1], nB[1], tB[1]],
            [-sc.radius, 0.0, -sc.radius],
        ]
    )
    b = -np.concatenate([f_nA * n_A + sc.weight, [0.0]])
    ftA, fnB, ftB = np.linalg.lstsq(A, b, rcond=None)[0]
    return np.array([f_nA, ftA, fnB, ftB])


def initial_guess(nlp: RollingNLP) -> np.ndarray:
    sc, st, lay = nlp.scene, nlp.settings, nlp.layout
    N = lay.N
    E = nlp.E
    f = sc.finger
    alphas = np.linspace(0.0, 1.0, N)
    thetas = nlp.X0[2] + alphas * (nlp.Xg[2] - nlp.X0[2])
    rolled = thetas - nlp.X0[2]
    centers = nlp.X0[:2] + sc.radius * rolled[:, None] * sc.t_roll
    X = np.column_stack([centers, thetas])
    d = nlp.d0 + sc.radius * rolled
    if st.q_seed is not None:
        seed = np.asarray(st.q_seed, dtype=float)
        seed = seed[f.actuated] if seed.shape == (f.n_joints,) else seed
    else:
        seed = 0.5 * (f.lower() + f.upper())[f.actuated]
    q = np.zeros((N, lay.ma))
    forces = np.zeros((N, 4))
    u = np.zeros((N - 1, lay.ma))
    prev = None
    for k in range(N):
        if k == 0:
            qa = solve_contact_ik(nlp, centers[0], seed, target_arc=st.contact_arc)
        else:
            qa = solve_contact_ik(nlp, centers[k], q[k - 1], prev=prev, theta_step=thetas[k] - thetas[k - 1])
        q[k] = qa
        g = _geo(nlp, qa, centers[k])
        forces[k] = balance_forces(nlp, g.n, st.grasp_force)
        if k < N - 1:
            FA = forces[k, 0] * g.n + forces[k, 1] * (P @ g.n)
            tau = np.zeros(E.shape[0])
            for j in range(g.link + 1):
                lever = g.p - g.origins[j]
                tau[j] = lever[0] * FA[1] - lever[1] * FA[0]
            u[k] = -E.T @ tau
        prev = g
    return lay.pack(X, q, d, forces, u)
