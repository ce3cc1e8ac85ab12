"""Shared finite-difference helpers for the optimiser tests."""
import numpy as np

from rolling_hand.trajopt import evaluate


def perturbation_scale(nlp):
    lay = nlp.layout
    s = np.zeros(nlp.n)
    for k in range(nlp.N):
        s[lay.X(k)] = [1e-3, 1e-3, 0.05]
        s[lay.q(k)] = 0.05
        s[lay.d(k)] = 1e-3
        s[lay.forces(k)] = 0.1
    for k in range(nlp.N - 1):
        s[lay.u(k)] = 1e-3
    return s


def stacked(ev):
    return np.concatenate([[ev.cost], ev.eq, ev.ineq])


def fd_relative_error(nlp, z, scale):
    """Largest row-wise relative gap between analytic and central-difference derivatives."""
    ev = evaluate(nlp, z)
    analytic = np.vstack([ev.grad, ev.eq_dense(), ev.ineq_dense()])
    fd = np.zeros_like(analytic)
    for j in range(nlp.n):
        h = 1e-6 * max(scale[j], 1e-3)
        zp, zm = z.copy(), z.copy()
        zp[j] += h
        zm[j] -= h
        fd[:, j] = (stacked(evaluate(nlp, zp)) - stacked(evaluate(nlp, zm))) / (2 * h)
    row = np.maximum(np.abs(fd).max(axis=1, keepdims=True), 1e-6)
    return float(np.max(np.abs(analytic - fd) / row))
