"""Direct transcription of the rolling problem.

Decision vector, knot-major::

    [x, y, theta, q_act(ma), d, fnA, ftA, fnB, ftB]  for k = 0..N-1
    [u(ma)]                                          for k = 0..N-2

Cost::

    sum_{k>=1} (X_k - X_g)^T Q (X_k - X_g)
  + psi_weight * sum_k max(psi_k, 0)^2
  + sum_{k<N-1} u_k^T R u_k

Equalities per knot: force balance (2), moment balance (1), contact with the
thumb plane (1), and for k < N-1 torque consistency u_k = J_c^T (-F_A). Per
transition: prismatic rolling on the thumb, centre rolling, and rolling on
the finger. Initial pose and prismatic length are pinned.

Inequalities (>= 0): shrunken friction cones at A and B, non-negative normal
forces, joint limits, a penetration floor on psi, and a per-step rotation
bound.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..scene import Scene
from .geometry import P, contact_geometry


class ProblemError(ValueError):
    """Rejected trajectory-optimisation setup or input vector."""


@dataclass
class TrajoptSettings:
    N: int = 40
    Q_diag: tuple[float, float, float] = (10.0, 10.0, 100.0)
    R_scale: float = 0.01
    X0: tuple[float, float, float] | None = None  # default: touching the thumb at the origin
    goal_rotation: float = 0.4
    Xg: tuple[float, float, float] | None = None  # default: pure roll by goal_rotation
    psi_weight: float = 1.0e4
    psi_floor: float = -5.0e-4
    cone_safety: float = 0.05
    step_factor: float = 1.2
    min_step: float = 1.0e-3
    contact_arc: float = 0.055  # initial contact location along the finger (m)
    q_seed: tuple[float, ...] | None = None
    grasp_force: float = 0.3  # initial-guess squeeze (N)
    tol: float = 1.0e-6
    max_outer: int = 50
    max_inner: int = 500
    time_limit: float = 60.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ProblemError(f"trajopt.N must be an integer >= 2, got {self.N}")
        self.N = int(self.N)
        if len(self.Q_diag) != 3:
            raise ProblemError("trajopt.Q_diag needs three entries")
        if any(not np.isfinite(v) or v < 0 for v in self.Q_diag):
            raise ProblemError(f"trajopt.Q_diag must be positive semi-definite, got {self.Q_diag}")
        if not (np.isfinite(self.R_scale) and self.R_scale > 0):
            raise ProblemError(f"trajopt.R_scale must be positive definite, got {self.R_scale}")
        if not self.psi_weight >= 0:
            raise ProblemError("trajopt.psi_weight must be non-negative")
        if not 0 <= self.cone_safety < 1:
            raise ProblemError("trajopt.cone_safety must lie in [0, 1)")


@dataclass
class Layout:
    N: int
    ma: int

    @property
    def knot_size(self) -> int:
        return 3 + self.ma + 1 + 4

    @property
    def size(self) -> int:
        return self.N * self.knot_size + (self.N - 1) * self.ma

    def knot(self, k: int) -> int:
        return k * self.knot_size

    def X(self, k):
        b = self.knot(k)
        return slice(b, b + 3)

    def q(self, k):
        b = self.knot(k) + 3
        return slice(b, b + self.ma)

    def d(self, k) -> int:
        return self.knot(k) + 3 + self.ma

    def forces(self, k):
        b = self.knot(k) + 4 + self.ma
        return slice(b, b + 4)

    def u(self, k):
        b = self.N * self.knot_size + k * self.ma
        return slice(b, b + self.ma)

    def unpack(self, z: np.ndarray) -> dict:
        K = z[: self.N * self.knot_size].reshape(self.N, self.knot_size)
        ma = self.ma
        return {
            "X": K[:, 0:3],
            "q": K[:, 3 : 3 + ma],
            "d": K[:, 3 + ma],
            "f": K[:, 4 + ma : 8 + ma],
            "u": z[self.N * self.knot_size :].reshape(self.N - 1, ma),
        }

    def pack(self, X, q, d, f, u) -> np.ndarray:
        K = np.column_stack([X, q, d, f])
        return np.concatenate([K.ravel(), np.asarray(u, dtype=float).ravel()])


@dataclass
class RollingNLP:
    scene: Scene
    settings: TrajoptSettings
    layout: Layout
    Q: np.ndarray
    R: np.ndarray
    X0: np.ndarray
    Xg: np.ndarray
    d0: float
    max_step: float
    E: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.layout.size

    @property
    def N(self) -> int:
        return self.layout.N


def default_start(scene: Scene) -> np.ndarray:
    c = scene.center_on_thumb(0.0)
    return np.array([c[0], c[1], 0.0])


def rolled_goal(scene: Scene, X0, rotation: float) -> np.ndarray:
    X0 = np.asarray(X0, dtype=float)
    c = X0[:2] + scene.radius * rotation * scene.t_roll
    return np.array([c[0], c[1], X0[2] + rotation])


def build_problem(scene: Scene, settings: TrajoptSettings) -> RollingNLP:
    Q = np.diag(np.asarray(settings.Q_diag, dtype=float))
    if np.linalg.eigvalsh(Q).min() < 0:
        raise ProblemError("Q must be positive semi-definite")
    ma = scene.finger.n_actuated
    R = settings.R_scale * np.eye(ma)
    if np.linalg.eigvalsh(R).min() <= 0:
        raise ProblemError("R must be positive definite")
    X0 = default_start(scene) if settings.X0 is None else np.asarray(settings.X0, dtype=float)
    Xg = rolled_goal(scene, X0, settings.goal_rotation) if settings.Xg is None else np.asarray(settings.Xg, dtype=float)
    if X0.shape != (3,) or Xg.shape != (3,):
        raise ProblemError("X0 and Xg must have three entries")
    span = abs(Xg[2] - X0[2])
    max_step = max(settings.step_factor * span / (settings.N - 1), settings.min_step)
    return RollingNLP(
        scene=scene,
        settings=settings,
        layout=Layout(settings.N, ma),
        Q=Q,
        R=R,
        X0=X0,
        Xg=Xg,
        d0=scene.prismatic_length(X0[:2]),
        max_step=max_step,
        E=scene.finger.coupling_matrix(),
    )


# Row scales that bring residuals to comparable magnitudes inside the solver:
# lengths in mm, forces in 0.1 N, torques in 0.01 N m, angles in 0.01 rad.
LENGTH_SCALE = 1e3
FORCE_SCALE = 10.0
TORQUE_SCALE = 100.0
ANGLE_SCALE = 100.0


@dataclass
class RowLayout:
    """Row blocks of the equality and inequality vectors, in order."""

    eq: dict
    ineq: dict
    n_eq: int
    n_ineq: int


def row_layout(N: int, ma: int, m: int) -> RowLayout:
    def blocks(sizes):
        out, at = {}, 0
        for name, size in sizes:
            out[name] = slice(at, at + size)
            at += size
        return out, at

    eq, n_eq = blocks(
        [
            ("force", 2 * N),  # knot-major (Fx, Fy)
            ("moment", N),
            ("thumb", N),
            ("torque", (N - 1) * ma),  # knot-major
            ("prismatic", N - 1),
            ("centre_roll", N - 1),
            ("finger_roll", N - 1),
            ("initial", 4),  # x0, y0, theta0, d0
        ]
    )
    ineq, n_ineq = blocks(
        [
            ("cone", 4 * N),  # per knot: A upper, A lower, B upper, B lower
            ("normal", 2 * N),  # per knot: fnA, fnB
            ("limits", 2 * m * N),  # per knot: q - lo, hi - q for each joint
            ("psi_floor", N),
            ("step", 2 * (N - 1)),  # per transition: upper, lower
        ]
    )
    return RowLayout(eq, ineq, n_eq, n_ineq)


@dataclass
class KnotTerms:
    """Nonlinear per-knot quantities and their Jacobian over v = (x, y, q_act, fnA, ftA).

    values = [F_A (2), E^T tau(F_A) (ma), s, phi, psi]
    """

    values: np.ndarray
    jac: np.ndarray
    normal: np.ndarray
    kappa: float
    link: int


def knot_terms(nlp: RollingNLP, v: np.ndarray) -> KnotTerms:
    f = nlp.scene.finger
    E = nlp.E
    m, ma = E.shape
    qa = v[2 : 2 + ma]
    fnA, ftA = v[2 + ma], v[3 + ma]
    geo = contact_geometry(f.link_lengths, np.asarray(f.base_position), f.base_angle, E @ qa, v[:2], nlp.scene.radius)
    nv = 4 + ma

    def local(dg):
        # (q_full, c) derivatives -> (x, y, q_act)
        dg = np.atleast_2d(dg)
        return np.hstack([dg[:, m : m + 2], dg[:, :m] @ E])

    n = geo.n
    t = P @ n
    FA = fnA * n + ftA * t
    G = fnA * np.eye(2) + ftA * P
    dF_geo = G @ geo.dn  # over (q_full, c)

    tau = np.zeros(m)
    dtau_geo = np.zeros((m, m + 2))
    dtau_f = np.zeros((m, 2))
    for j in range(geo.link + 1):
        lever = geo.p - geo.origins[j]
        tau[j] = lever[0] * FA[1] - lever[1] * FA[0]
        dlever = geo.dp.copy()
        dlever[:, :m] -= geo.dorigins[j]
        dtau_geo[j] = dlever[0] * FA[1] - dlever[1] * FA[0] + lever[0] * dF_geo[1] - lever[1] * dF_geo[0]
        dtau_f[j] = [lever[0] * n[1] - lever[1] * n[0], lever[0] * t[1] - lever[1] * t[0]]

    values = np.concatenate([FA, E.T @ tau, [geo.s, geo.phi, geo.psi]])
    jac = np.zeros((len(values), nv))
    jac[0:2, : 2 + ma] = local(dF_geo)
    jac[0:2, 2 + ma] = n
    jac[0:2, 3 + ma] = t
    jac[2 : 2 + ma, : 2 + ma] = E.T @ local(dtau_geo)
    jac[2 : 2 + ma, 2 + ma :] = E.T @ dtau_f
    jac[2 + ma, : 2 + ma] = local(geo.ds)[0]
    jac[3 + ma, : 2 + ma] = local(geo.dphi)[0]
    jac[4 + ma, : 2 + ma] = local(geo.dpsi)[0]
    return KnotTerms(values, jac, n, geo.kappa, geo.link)


def _v_offsets(ma: int) -> np.ndarray:
    """Offsets inside a knot block of v = (x, y, q_act, fnA, ftA)."""
    return np.array([0, 1] + list(range(3, 3 + ma)) + [4 + ma, 5 + ma])


@dataclass
class Evaluation:
    cost: float
    grad: np.ndarray
    hess: np.ndarray  # Gauss-Newton approximation of the cost Hessian
    eq: np.ndarray
    eq_jac: tuple[np.ndarray, np.ndarray, np.ndarray]  # (rows, cols, vals)
    ineq: np.ndarray
    ineq_jac: tuple[np.ndarray, np.ndarray, np.ndarray]
    n: int
    psi: np.ndarray = None
    eq_scale: np.ndarray = None
    ineq_scale: np.ndarray = None
    terms: list = field(default=None, repr=False)

    def eq_jacobian(self) -> sp.csr_matrix:
        r, c, v = self.eq_jac
        return sp.coo_matrix((v, (r, c)), shape=(len(self.eq), self.n)).tocsr()

    def ineq_jacobian(self) -> sp.csr_matrix:
        r, c, v = self.ineq_jac
        return sp.coo_matrix((v, (r, c)), shape=(len(self.ineq), self.n)).tocsr()

    def eq_dense(self) -> np.ndarray:
        return _dense(self.eq_jac, len(self.eq), self.n)

    def ineq_dense(self) -> np.ndarray:
        return _dense(self.ineq_jac, len(self.ineq), self.n)


def _dense(trip, rows, cols) -> np.ndarray:
    out = np.zeros((rows, cols))
    r, c, v = trip
    np.add.at(out, (r, c), v)
    return out


class _Block:
    """Accumulates rows given as (values, column matrix, value matrix)."""

    def __init__(self):
        self.values, self.rows, self.cols, self.vals, self.scales = [], [], [], [], []
        self.count = 0

    def add(self, values, cols, vals, scale):
        values = np.atleast_1d(np.asarray(values, dtype=float))
        R = len(values)
        cols = np.asarray(cols, dtype=int).reshape(R, -1)
        vals = np.broadcast_to(np.asarray(vals, dtype=float), cols.shape)
        self.values.append(values)
        self.rows.append(np.repeat(np.arange(self.count, self.count + R), cols.shape[1]))
        self.cols.append(cols.ravel())
        self.vals.append(vals.ravel())
        self.scales.append(np.broadcast_to(np.asarray(scale, dtype=float), (R,)))
        self.count += R

    def finish(self):
        cat = np.concatenate
        return cat(self.values), (cat(self.rows), cat(self.cols), cat(self.vals)), cat(self.scales)


def evaluate(nlp: RollingNLP, z) -> Evaluation:
    z = np.asarray(z, dtype=float)
    lay = nlp.layout
    if z.shape != (lay.size,):
        raise ProblemError(f"decision vector must have length {lay.size}, got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise ProblemError("decision vector contains NaN or inf")
    sc, st = nlp.scene, nlp.settings
    N, ma, ks = lay.N, lay.ma, lay.knot_size
    E = nlp.E
    m = E.shape[0]
    r = sc.radius
    nB, tB = sc.n_thumb, P @ sc.n_thumb
    tr = sc.t_roll
    W = sc.weight
    mu_p = sc.mu * (1.0 - st.cone_safety)
    lo, hi = sc.finger.lower(), sc.finger.upper()
    n = lay.size

    K = z[: N * ks].reshape(N, ks)
    U = z[N * ks :].reshape(N - 1, ma)
    base = np.arange(N)[:, None] * ks
    vcols = base + _v_offsets(ma)  # (N, 4+ma)
    xc, yc, thc = base[:, 0], base[:, 0] + 1, base[:, 0] + 2
    qcols = base + np.arange(3, 3 + ma)
    dc = base[:, 0] + 3 + ma
    fc = base + np.arange(4 + ma, 8 + ma)  # fnA, ftA, fnB, ftB
    ucols = N * ks + np.arange((N - 1) * ma).reshape(N - 1, ma)
    X, d, F = K[:, :3], K[:, 3 + ma], K[:, 4 + ma :]

    terms = [knot_terms(nlp, K[k, _v_offsets(ma)]) for k in range(N)]
    vals = np.array([t.values for t in terms])  # (N, 5+ma)
    jacs = np.array([t.jac for t in terms])  # (N, 5+ma, 4+ma)
    kappa = np.array([t.kappa for t in terms])
    psi = vals[:, 4 + ma]
    dpsi = jacs[:, 4 + ma]

    # cost
    e = X[1:] - nlp.Xg
    cost = float(np.einsum("ki,ij,kj->", e, nlp.Q, e)) + float(np.einsum("ki,ij,kj->", U, nlp.R, U))
    grad = np.zeros(n)
    hess = np.zeros((n, n))
    xcols = base[1:] + np.arange(3)
    grad[xcols] += 2 * e @ nlp.Q
    grad[ucols] += 2 * U @ nlp.R
    for k in range(1, N):
        hess[np.ix_(xcols[k - 1], xcols[k - 1])] += 2 * nlp.Q
    for k in range(N - 1):
        hess[np.ix_(ucols[k], ucols[k])] += 2 * nlp.R
    if st.psi_weight > 0:
        for k in np.flatnonzero(psi > 0):
            cost += st.psi_weight * psi[k] ** 2
            grad[vcols[k]] += 2 * st.psi_weight * psi[k] * dpsi[k]
            hess[np.ix_(vcols[k], vcols[k])] += 2 * st.psi_weight * np.outer(dpsi[k], dpsi[k])

    eq = _Block()
    # force balance, knot-major (Fx, Fy)
    fval = vals[:, :2] + F[:, 2:3] * nB + F[:, 3:4] * tB + W
    fcol = np.concatenate([np.repeat(vcols[:, None, :], 2, axis=1), np.repeat(fc[:, None, 2:], 2, axis=1)], axis=2)
    fjac = np.concatenate([jacs[:, :2, :], np.broadcast_to(np.column_stack([nB, tB])[None], (N, 2, 2))], axis=2)
    eq.add(fval.ravel(), fcol.reshape(2 * N, -1), fjac.reshape(2 * N, -1), FORCE_SCALE)
    # moment about the centre, forces applied on the disc surface
    eq.add(-r * (F[:, 1] + F[:, 3]), np.column_stack([fc[:, 1], fc[:, 3]]), [-r, -r], FORCE_SCALE / r)
    # disc touches the thumb plane
    gap = (X[:, :2] - np.asarray(sc.thumb_origin)) @ nB - r
    eq.add(gap, np.column_stack([xc, yc]), nB, LENGTH_SCALE)
    # torque consistency u_k + E^T tau(F_A) = 0
    tval = U + vals[:-1, 2 : 2 + ma]
    tcol = np.concatenate([np.repeat(vcols[:-1, None, :], ma, axis=1), ucols[:, :, None]], axis=2)
    tjac = np.concatenate([jacs[:-1, 2 : 2 + ma, :], np.ones((N - 1, ma, 1))], axis=2)
    eq.add(tval.ravel(), tcol.reshape((N - 1) * ma, -1), tjac.reshape((N - 1) * ma, -1), TORQUE_SCALE)
    # prismatic rolling on the thumb: d_{k-1} - d_k - r (th_{k-1} - th_k)
    dth = X[1:, 2] - X[:-1, 2]
    eq.add(
        d[:-1] - d[1:] + r * dth,
        np.column_stack([dc[:-1], dc[1:], thc[:-1], thc[1:]]),
        [1.0, -1.0, -r, r],
        LENGTH_SCALE,
    )
    # centre rolls along the thumb
    eq.add(
        (X[1:, :2] - X[:-1, :2]) @ tr - r * dth,
        np.column_stack([xc[:-1], yc[:-1], xc[1:], yc[1:], thc[:-1], thc[1:]]),
        [-tr[0], -tr[1], tr[0], tr[1], r, -r],
        LENGTH_SCALE,
    )
    # rolling on the finger: s_k - s_{k-1} + kappa r (dth - dphi), kappa from the later knot
    s_, phi_ = vals[:, 2 + ma], vals[:, 3 + ma]
    kr = kappa[1:] * r
    roll = s_[1:] - s_[:-1] + kr * (dth - (phi_[1:] - phi_[:-1]))
    jrow = jacs[:, 2 + ma]
    jphi = jacs[:, 3 + ma]
    j_prev = -(jrow[:-1] - kr[:, None] * jphi[:-1])
    j_next = jrow[1:] - kr[:, None] * jphi[1:]
    eq.add(
        roll,
        np.column_stack([vcols[:-1], thc[:-1], vcols[1:], thc[1:]]),
        np.column_stack([j_prev, -kr, j_next, kr]),
        LENGTH_SCALE,
    )
    # pinned start
    eq.add(
        [X[0, 0] - nlp.X0[0], X[0, 1] - nlp.X0[1], X[0, 2] - nlp.X0[2], d[0] - nlp.d0],
        [[xc[0]], [yc[0]], [thc[0]], [dc[0]]],
        1.0,
        [LENGTH_SCALE, LENGTH_SCALE, ANGLE_SCALE, LENGTH_SCALE],
    )

    ineq = _Block()
    # shrunken friction cones
    cone = np.column_stack(
        [mu_p * F[:, 0] - F[:, 1], mu_p * F[:, 0] + F[:, 1], mu_p * F[:, 2] - F[:, 3], mu_p * F[:, 2] + F[:, 3]]
    )
    ccols = np.stack([fc[:, :2], fc[:, :2], fc[:, 2:], fc[:, 2:]], axis=1).reshape(4 * N, 2)
    cvals = np.tile([[mu_p, -1.0], [mu_p, 1.0], [mu_p, -1.0], [mu_p, 1.0]], (N, 1))
    ineq.add(cone.ravel(), ccols, cvals, FORCE_SCALE)
    ineq.add(F[:, [0, 2]].ravel(), fc[:, [0, 2]].reshape(-1, 1), 1.0, FORCE_SCALE)
    # joint limits on the expanded joints
    qf = K[:, 3 : 3 + ma] @ E.T  # (N, m)
    lim = np.stack([qf - lo, hi - qf], axis=2).reshape(N, 2 * m)
    lcols = np.repeat(qcols[:, None, :], 2 * m, axis=1).reshape(2 * m * N, ma)
    lvals = np.tile(np.stack([E, -E], axis=1).reshape(2 * m, ma), (N, 1))
    ineq.add(lim.ravel(), lcols, lvals, 1.0)
    # penetration floor
    ineq.add(psi - st.psi_floor, vcols, dpsi, LENGTH_SCALE)
    # per-step rotation bound
    step = np.column_stack([nlp.max_step - dth, nlp.max_step + dth])
    scols = np.repeat(np.column_stack([thc[:-1], thc[1:]])[:, None, :], 2, axis=1).reshape(2 * (N - 1), 2)
    svals = np.tile([[1.0, -1.0], [-1.0, 1.0]], (N - 1, 1))
    ineq.add(step.ravel(), scols, svals, ANGLE_SCALE)

    eq_v, eq_j, eq_s = eq.finish()
    in_v, in_j, in_s = ineq.finish()
    return Evaluation(
        cost=cost,
        grad=grad,
        hess=hess,
        eq=eq_v,
        eq_jac=eq_j,
        ineq=in_v,
        ineq_jac=in_j,
        n=n,
        psi=psi,
        eq_scale=eq_s,
        ineq_scale=in_s,
        terms=terms,
    )


def constraint_curvature(nlp: RollingNLP, z, w_eq, w_ineq, base: Evaluation | None = None, h: float = 1e-7) -> np.ndarray:
    """Dense sum_i w_eq_i Hess(c_i) + sum_j w_ineq_j Hess(g_j).

    Every nonlinear term lives in one knot's (x, y, q_act, fnA, ftA), so the
    Hessian is block diagonal; each block is a forward difference of the
    weighted knot-term Jacobian.
    """
    z = np.asarray(z, dtype=float)
    lay = nlp.layout
    N, ma, ks = lay.N, lay.ma, lay.knot_size
    rows = row_layout(N, ma, nlp.E.shape[0])
    base = evaluate(nlp, z) if base is None else base
    w_eq = np.asarray(w_eq, dtype=float)
    w_ineq = np.asarray(w_ineq, dtype=float)
    kappa = np.array([t.kappa for t in base.terms])
    r = nlp.scene.radius

    # weights on knot-term values [F_A (2), E^T tau (ma), s, phi, psi]
    wt = np.zeros((N, 5 + ma))
    wt[:, :2] = w_eq[rows.eq["force"]].reshape(N, 2)
    wt[:-1, 2 : 2 + ma] = w_eq[rows.eq["torque"]].reshape(N - 1, ma)
    wr = w_eq[rows.eq["finger_roll"]]
    kr = kappa[1:] * r
    wt[1:, 2 + ma] += wr
    wt[:-1, 2 + ma] -= wr
    wt[1:, 3 + ma] -= wr * kr
    wt[:-1, 3 + ma] += wr * kr
    wt[:, 4 + ma] = w_ineq[rows.ineq["psi_floor"]]

    offs = _v_offsets(ma)
    H = np.zeros((lay.size, lay.size))
    K = z[: N * ks].reshape(N, ks)
    for k in range(N):
        if not np.any(wt[k]):
            continue
        v = K[k, offs]
        g0 = base.terms[k].jac.T @ wt[k]
        B = np.zeros((len(v), len(v)))
        for i in range(len(v)):
            hi = h * max(1.0, abs(v[i]))
            vp = v.copy()
            vp[i] += hi
            B[:, i] = (knot_terms(nlp, vp).jac.T @ wt[k] - g0) / hi
        idx = k * ks + offs
        H[np.ix_(idx, idx)] = 0.5 * (B + B.T)
    return H
