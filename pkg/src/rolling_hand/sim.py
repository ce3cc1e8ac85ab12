"""Quasi-static plant for closed-loop rolling trials.

The finger is driven by motor-side joint commands. Tendon compliance lets
the joints deflect under the contact force, and a thin pad adds a constant
contact compliance. The normal force at the finger follows from how far the
commanded (undeflected) finger would penetrate the disc:

    f_n = max(-psi(q_cmd), 0) / (C(q1 + q2) + C_pad)

The remaining three force components come from the planar equilibrium.
Inside both friction cones the disc rolls on the thumb and on the finger
with no slip. Outside them the tangential forces saturate and the disc also
slides down the thumb at a rate proportional to the force excess.

With zero compliance the squeeze is statically indeterminate. The plant
then takes the smallest-norm equilibrium that still respects the cones.
"""
from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import brentq, linprog

from .contact_dynamics import ContactRecord, ObjectState
from .control import ComplianceModel, FingerController, GainSet, Mode, compliance_of
from .kinematics import (
    FingerModel,
    JointState,
    cross2,
    jacobian,
    link_angles,
    locate_arc,
    point_at_arc,
    signed_distance,
)
from .scene import Scene
from .tactile import (
    SensorLayout,
    TactileFrame,
    estimate_force,
    finger_layout,
    locate,
    response_scale,
    simulate_readings,
)
from .trajopt.trajectory import Trajectory


CONE_TOL = 1e-12  # force excess (N) treated as sticking; min-norm grasps sit on the cone edge


class PlantError(RuntimeError):
    """The quasi-static fixed point did not settle; the trial is aborted."""


@dataclass
class PlantSettings:
    compliance: ComplianceModel = field(default_factory=ComplianceModel)
    C_pad: float = 1.0e-4  # m/N
    psi_tol: float = 1.0e-3  # drop when the finger gap exceeds this (m)
    fn_min: float = 0.05  # drop below this normal force (N)
    slide_limit: float = 2.0e-3  # drop after this much sliding on the thumb (m)
    slip_gain: float = 0.5  # sliding speed per newton of force excess (m/(N s))
    sensor_sigma: float = 1.2e-3  # taxel footprint spread (m)
    sensor_pitch: float = 1.5e-3
    n_sensors: int = 17
    thumb_sensors: int = 9
    threshold: float = 30.0
    n_neighbors: int = 4
    grasp_force: float = 0.12  # squeeze established before the roll starts (N)
    ticks_per_knot: int = 10
    settle_ticks: int = 30
    max_iter: int = 100
    tol: float = 1.0e-12

    def __post_init__(self):
        for name in ("C_pad", "psi_tol", "fn_min", "slide_limit", "slip_gain", "grasp_force"):
            if not (np.isfinite(getattr(self, name)) and getattr(self, name) >= 0):
                raise ValueError(f"sim.{name} must be finite and non-negative")
        if not self.sensor_sigma > 0 or not self.sensor_pitch > 0:
            raise ValueError("sim.sensor_sigma and sim.sensor_pitch must be positive")
        if self.n_sensors < 2 or self.thumb_sensors < 2:
            raise ValueError("sensor arrays need at least two taxels")
        if self.ticks_per_knot < 1 or self.settle_ticks < 0 or self.max_iter < 1:
            raise ValueError("sim.ticks_per_knot >= 1, settle_ticks >= 0 and max_iter >= 1 required")


@dataclass
class Plant:
    """Actual (possibly perturbed) physical parameters of one trial."""

    scene: Scene
    compliance: ComplianceModel
    C_pad: float = 1.0e-4
    psi_tol: float = 1.0e-3
    fn_min: float = 0.05
    slide_limit: float = 2.0e-3
    slip_gain: float = 0.5
    dt: float = 0.01
    finger_sensors: SensorLayout | None = None
    thumb_sensors: SensorLayout | None = None
    sensor_sigma: float = 1.5e-3
    noise: float = 0.0  # sensor-unit standard deviation
    max_iter: int = 100
    tol: float = 1.0e-12

    @property
    def rigid(self) -> bool:
        return self.compliance.C_peak == 0 and self.C_pad == 0

    def squeeze_compliance(self, q) -> float:
        return compliance_of(float(q[0] + q[1]), self.compliance) + self.C_pad


@dataclass
class PlantState:
    object: ObjectState
    q_cmd: JointState
    q_actual: JointState
    d: float
    contacts: tuple[ContactRecord, ContactRecord]
    grasp_alive: bool = True
    slide: float = 0.0
    slipping: bool = False
    psi: float = 0.0
    arc: float = 0.0  # contact A along the straightened finger
    link_angle: float = 0.0  # angle of the link carrying contact A
    kappa: float = 1.0
    reason: str = ""


# -- elementary laws -----------------------------------------------------


def joint_compliance(finger: FingerModel, q, link: int, offset: float, C: float) -> np.ndarray:
    """Actuated-joint compliance matching a task-space compliance ``C`` at a contact."""
    Ja = jacobian(finger, q, link, offset) @ finger.coupling_matrix()
    return C * np.linalg.pinv(Ja.T @ Ja, rcond=1e-10)


def deflect(q_cmd, tau_ext, C_joint, E=None) -> np.ndarray:
    """Joint angles after tendon stretch: ``q_cmd + E C_joint tau_ext``."""
    q_cmd = np.asarray(q_cmd, dtype=float)
    dq = np.asarray(C_joint, dtype=float) @ np.asarray(tau_ext, dtype=float)
    return q_cmd + (dq if E is None else np.asarray(E) @ dq)


def _equilibrium_matrix(scene: Scene, c, n_A, r) -> tuple[np.ndarray, np.ndarray]:
    """Columns map (fnA, ftA, fnB, ftB) to net (Fx, Fy, Mz); rhs is minus gravity."""
    n_B = scene.n_thumb
    cols = []
    for n in (n_A, n_B):
        t = np.array([-n[1], n[0]])
        lever = -r * n  # contact point relative to the centre
        cols.append([n[0], n[1], cross2(lever, n)])
        cols.append([t[0], t[1], cross2(lever, t)])
    A = np.array(cols).T
    return A, -np.array([*scene.weight, 0.0])


def solve_forces(scene: Scene, c, n_A, r, f_nA: float | None = None, reg: float = 1e-9) -> np.ndarray:
    """Contact forces (fnA, ftA, fnB, ftB) balancing gravity.

    With ``f_nA`` given the remaining three follow from the balance. Without
    it the minimum-norm solution is used, with the squeeze raised along the
    null space just enough to respect the cones.
    """
    A, b = _equilibrium_matrix(scene, c, n_A, r)
    if f_nA is not None:
        rest = np.linalg.solve(A[:, 1:] + reg * np.eye(3), b - A[:, 0] * f_nA)
        return np.concatenate([[f_nA], rest])
    x = A.T @ np.linalg.solve(A @ A.T + reg * np.eye(3), b)
    z = np.linalg.svd(A)[2][-1]
    mu = scene.mu
    # cone and sign constraints on x + t z, as G t <= h
    G, h = [], []
    for i in (0, 2):
        for sgn in (1.0, -1.0):  # sgn*ft - mu*fn <= 0
            G.append(sgn * z[i + 1] - mu * z[i])
            h.append(-(sgn * x[i + 1] - mu * x[i]))
        G.append(-z[i])
        h.append(x[i])
    G, h = np.array(G), np.array(h)
    if np.all(h >= -1e-15):
        return x
    # smallest |t| that satisfies every constraint; fall back to the least-violating t
    res = linprog([0.0, 1.0], A_ub=np.column_stack([G, np.zeros_like(G)]).tolist()
                  + [[1.0, -1.0], [-1.0, -1.0]], b_ub=list(h) + [0.0, 0.0],
                  bounds=[(None, None), (0, None)], method="highs")
    t = res.x[0] if res.status == 0 else 0.0
    return x + t * z


def cone_excess(f: np.ndarray, mu: float) -> float:
    """Largest ``|f_t| - mu f_n`` over both contacts (positive means slipping)."""
    return float(max(abs(f[1]) - mu * f[0], abs(f[3]) - mu * f[2]))


# -- plant step ----------------------------------------------------------


def _kappa(phi: float, n) -> float:
    return 1.0 if cross2(np.array([np.cos(phi), np.sin(phi)]), np.asarray(n)) >= 0 else -1.0


def _contact(finger, q, c, r, prev_normal=None):
    cp = signed_distance(finger, q, c, r, prev_normal=prev_normal)
    phi = float(link_angles(finger, q)[cp.link_index])
    return cp, phi


def _roll(plant: Plant, q_act, state: PlantState) -> tuple[float, np.ndarray]:
    """Disc pose rolling on both surfaces after the finger moved to ``q_act``."""
    finger, r = plant.scene.finger, state.object.radius
    t = plant.scene.t_roll
    c0, th0 = state.object.center, state.object.theta
    prev_n = state.contacts[0].normal

    def g(th):
        c = c0 + r * (th - th0) * t
        cp, phi = _contact(finger, q_act, c, r, prev_n)
        return cp.arc(finger) - state.arc + state.kappa * r * ((th - th0) - (phi - state.link_angle))

    g0 = g(th0)
    if g0 == 0.0:
        return th0, c0.copy()
    # secant from the small-step slope (both surfaces roll: dg/dth ~ 2r), bracketing as fallback
    a, ga = th0, g0
    b = th0 - g0 / (2 * r)
    for _ in range(30):
        gb = g(b)
        if abs(gb) <= 1e-16 or b == a:
            return b, c0 + r * (b - th0) * t
        if gb == ga:
            break
        a, ga, b = b, gb, b - gb * (b - a) / (gb - ga)
        if abs(b - th0) > 1.0:
            break
    width = 0.05
    while width < 2.0:
        lo, hi = th0 - width, th0 + width
        if g(lo) * g(hi) < 0:
            th = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
            return th, c0 + r * (th - th0) * t
        width *= 2
    raise PlantError("rolling constraint has no root near the previous pose")


def _forces_at(plant: Plant, q_cmd, q_act, c, r, prev_normal):
    finger = plant.scene.finger
    cp, phi = _contact(finger, q_act, c, r, prev_normal)
    scene = replace(plant.scene, radius=r)
    if plant.rigid:
        f = solve_forces(scene, c, cp.normal, r)
    else:
        cp_cmd = signed_distance(finger, q_cmd, c, r, prev_normal=cp.normal)
        f_n = max(-cp_cmd.psi, 0.0) / plant.squeeze_compliance(q_act)
        f = solve_forces(scene, c, cp.normal, r, f_n)
    return cp, phi, f


def _settle(plant: Plant, q_cmd, state: PlantState, place: Callable):
    """Fixed point between deflection, disc placement and contact forces."""
    finger = plant.scene.finger
    r = state.object.radius
    E = finger.coupling_matrix()
    F = state.contacts[0].force
    f_prev = None
    cp = signed_distance(finger, state.q_actual.q, state.object.center, r, prev_normal=state.contacts[0].normal)
    for _ in range(plant.max_iter):
        if plant.rigid or not np.any(F):
            q_act = np.asarray(q_cmd, dtype=float).copy()
        else:
            C = compliance_of(float(q_cmd[0] + q_cmd[1]), plant.compliance)
            Ja = jacobian(finger, q_cmd, cp.link_index, cp.offset) @ E
            q_act = deflect(q_cmd, Ja.T @ (-F), C * np.linalg.pinv(Ja.T @ Ja, rcond=1e-10), E)
        th, c = place(q_act)
        cp, phi, f = _forces_at(plant, q_cmd, q_act, c, r, state.contacts[0].normal)
        A = ContactRecord(c - r * cp.normal, cp.normal, f[0], f[1], plant.scene.mu, "A")
        F = A.force
        if f_prev is not None and np.max(np.abs(f - f_prev)) <= plant.tol:
            return q_act, th, c, cp, phi, f
        f_prev = f
    raise PlantError(f"quasi-static fixed point did not converge in {plant.max_iter} iterations")


def _state(plant, state, q_cmd, q_act, th, c, cp, phi, f, slide, slipping, kappa=None) -> PlantState:
    sc = plant.scene
    r = state.object.radius
    mu = sc.mu
    if slipping:  # saturate friction, keep the direction of the demanded force
        f = f.copy()
        f[1] = np.sign(f[1]) * mu * max(f[0], 0.0)
        f[3] = np.sign(f[3]) * mu * max(f[2], 0.0)
    A = ContactRecord(c - r * cp.normal, cp.normal, float(f[0]), float(f[1]), mu, "A")
    B = ContactRecord(sc.thumb_contact_point(c, r), sc.n_thumb, float(f[2]), float(f[3]), mu, "B")
    new = PlantState(
        object=ObjectState(float(c[0]), float(c[1]), float(th), r, state.object.mass),
        q_cmd=JointState(q_cmd),
        q_actual=JointState(q_act),
        d=sc.prismatic_length(c, r),
        contacts=(A, B),
        slide=slide,
        slipping=slipping,
        psi=float(cp.psi),
        arc=cp.arc(sc.finger),
        link_angle=phi,
        kappa=_kappa(phi, cp.normal) if kappa is None else kappa,
    )
    if f[0] < plant.fn_min or f[2] < plant.fn_min:
        new.grasp_alive, new.reason = False, "normal force below threshold"
    elif cp.psi > plant.psi_tol:
        new.grasp_alive, new.reason = False, "finger left the object"
    elif slide > plant.slide_limit:
        new.grasp_alive, new.reason = False, "object slid out of the grasp"
    return new


def sense(plant: Plant, state: PlantState, rng: np.random.Generator | None = None, k: int = 0):
    """Tactile frames (finger, thumb) for the current contact state; ``None`` without a layout."""
    A, B = state.contacts
    fa = fb = None
    if plant.finger_sensors is not None:
        fa = simulate_readings(
            plant.finger_sensors, (state.arc, 0.0), float(np.linalg.norm(A.force)), plant.sensor_sigma, plant.noise,
            rng, k,
        )
    if plant.thumb_sensors is not None:
        fb = simulate_readings(
            plant.thumb_sensors, B.point, float(np.linalg.norm(B.force)), plant.sensor_sigma, plant.noise, rng, k
        )
    return fa, fb


def initial_state(plant: Plant, center, theta: float, q_cmd, radius: float | None = None) -> PlantState:
    """Static grasp with the disc held at ``center``."""
    sc = plant.scene
    r = sc.radius if radius is None else radius
    q_cmd = np.asarray(q_cmd, dtype=float)
    c = np.asarray(center, dtype=float)
    cp, phi = _contact(sc.finger, q_cmd, c, r)
    seed = PlantState(
        object=ObjectState(float(c[0]), float(c[1]), float(theta), r, sc.mass),
        q_cmd=JointState(q_cmd),
        q_actual=JointState(q_cmd),
        d=sc.prismatic_length(c, r),
        contacts=(ContactRecord(c - r * cp.normal, cp.normal, 0.0, 0.0, sc.mu, "A"), sc.thumb_contact(c, 0.0, 0.0, r)),
        arc=cp.arc(sc.finger),
        link_angle=phi,
        kappa=_kappa(phi, cp.normal),
    )
    q_act, th, c, cp, phi, f = _settle(plant, q_cmd, seed, lambda q: (float(theta), c))
    return _state(plant, seed, q_cmd, q_act, th, c, cp, phi, f, 0.0, cone_excess(f, sc.mu) > CONE_TOL)


def resolve_step(
    state: PlantState, q_cmd, plant: Plant, rng: np.random.Generator | None = None, k: int = 0
) -> tuple[PlantState, tuple[TactileFrame, TactileFrame | None]]:
    """Advance the plant to a new motor command and read the sensors."""
    q_cmd = np.asarray(q_cmd, dtype=float)
    mu = plant.scene.mu
    q_act, th, c, cp, phi, f = _settle(plant, q_cmd, state, lambda q: _roll(plant, q, state))
    excess = cone_excess(f, mu)
    slide = state.slide
    slipping = excess > CONE_TOL
    if slipping:
        step = plant.slip_gain * excess * plant.dt
        slide += step
        c_slid = c + step * plant.scene.t_roll
        q_act, th, c, cp, phi, f = _settle(plant, q_cmd, state, lambda q: (th, c_slid))
    # the roll law carries kappa from the previous contact unless the side flipped
    new = _state(plant, state, q_cmd, q_act, th, c, cp, phi, f, slide, slipping)
    frames = sense(plant, new, rng, k)
    return new, frames


def replay(plan: Trajectory, plant: Plant, radius: float | None = None) -> list[PlantState]:
    """Feed the planned joint angles straight to the plant, knot by knot."""
    X = plan.X
    state = initial_state(plant, X[0, :2], X[0, 2], plan.joints[0].q, radius)
    states = [state]
    for k in range(1, len(plan)):
        state, _ = resolve_step(state, plan.joints[k].q, plant)
        states.append(state)
        if not state.grasp_alive:
            break
    return states


# -- trials --------------------------------------------------------------


@dataclass
class TrialConfig:
    seed: int = 0
    index: int = 0
    mode: str = "force"
    mu_range: float = 0.3  # relative half-widths of the uniform perturbations
    C_peak_range: float = 0.5
    radius_range: float = 0.05
    noise: float = 0.05  # taxel noise as a fraction of the peak reading at F_des
    perturb: bool = True
    goal_theta: float | None = None  # default: final planned rotation
    tolerance: float = 0.05

    def __post_init__(self):
        if self.mode not in ("force", "open-loop"):
            raise ValueError(f"mode must be 'force' or 'open-loop', got {self.mode!r}")
        for name in ("mu_range", "C_peak_range", "radius_range", "noise", "tolerance"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {v}")
        if self.mu_range >= 1 or self.radius_range >= 1:
            raise ValueError("mu_range and radius_range must stay below 1")

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(self.index,)))


@dataclass
class TrialResult:
    seed: int
    index: int
    mode: str
    success: bool
    theta_error: float
    steps: int
    dropped: bool
    reason: str
    switch_tick: int | None
    params: dict
    traces: dict = field(repr=False, default_factory=dict)

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "index": self.index,
            "mode": self.mode,
            "success": self.success,
            "theta_error": self.theta_error,
            "steps": self.steps,
            "dropped": self.dropped,
            "reason": self.reason,
            "switch_tick": "" if self.switch_tick is None else self.switch_tick,
        }


TRACE_COLUMNS = (
    "tick", "t", "mode", "alive", "slipping", "theta", "theta_hat", "force_A", "F_m",
    "p_ref_x", "p_ref_y", "p_eff_x", "p_eff_y", "q_cmd0", "q_cmd1", "q_act0", "q_act1", "slide",
)  # fmt: skip


def _ik(finger: FingerModel, q0, s: float, target, iters: int = 50) -> np.ndarray:
    """Actuated angles putting the finger point at arc ``s`` on ``target``."""
    E = finger.coupling_matrix()
    qa = np.asarray(q0, dtype=float)[finger.actuated].copy()
    link, off = locate_arc(finger, s)
    for _ in range(iters):
        q = E @ qa
        err = np.asarray(target) - point_at_arc(finger, q, s)
        if np.linalg.norm(err) < 1e-13:
            break
        J = jacobian(finger, q, link, off) @ E
        qa = qa + J.T @ np.linalg.solve(J @ J.T + 1e-12 * np.eye(2), err)
    return E @ qa


@dataclass
class Reference:
    """Plan reference for the controlled finger point, interpolated between knots."""

    surface: np.ndarray  # (N, 2) planned contact on the disc
    normal: np.ndarray  # (N, 2)
    arc: np.ndarray  # (N,) planned contact along the finger
    offset: np.ndarray  # constant shift from the grasp

    @classmethod
    def from_plan(cls, plan: Trajectory, finger: FingerModel, r: float) -> "Reference":
        n = plan.contact_normals
        arcs = np.array(
            [signed_distance(finger, j.q, o.center, r).arc(finger) for j, o in zip(plan.joints, plan.objects)]
        )
        surface = plan.X[:, :2] - r * n
        return cls(surface, n, arcs, np.zeros(2))

    def at(self, u: float, preload: float) -> tuple[np.ndarray, float]:
        N = len(self.arc)
        u = float(np.clip(u, 0.0, N - 1))
        k = min(int(np.floor(u)), N - 2)
        w = u - k
        lerp = lambda a: (1 - w) * a[k] + w * a[k + 1]
        n = lerp(self.normal)
        n = n / np.linalg.norm(n)
        return lerp(self.surface) + self.offset + preload * n, float(lerp(self.arc))


def perturbed_plant(
    config: TrialConfig, scene: Scene, settings: PlantSettings, gains: GainSet, rng: np.random.Generator
) -> tuple[Plant, dict]:
    draw = lambda w: 1.0 + (rng.uniform(-w, w) if config.perturb and w > 0 else 0.0)
    mu = scene.mu * draw(config.mu_range)
    c_peak = settings.compliance.C_peak * draw(config.C_peak_range)
    r = scene.radius * draw(config.radius_range)
    compliance = ComplianceModel(min(settings.compliance.C_min, c_peak), c_peak)
    n_s, pitch = settings.n_sensors, settings.sensor_pitch
    plant = Plant(
        scene=replace(scene, mu=mu, radius=r),
        compliance=compliance,
        C_pad=settings.C_pad,
        psi_tol=settings.psi_tol,
        fn_min=settings.fn_min,
        slide_limit=settings.slide_limit,
        slip_gain=settings.slip_gain,
        dt=gains.dt,
        sensor_sigma=settings.sensor_sigma,
        noise=config.noise * gains.F_des,
        max_iter=settings.max_iter,
        tol=settings.tol,
    )
    return plant, {"mu": mu, "C_peak": c_peak, "radius": r}


def run_trial(
    config: TrialConfig,
    plan: Trajectory,
    gains: GainSet,
    scene: Scene,
    settings: PlantSettings | None = None,
) -> TrialResult:
    settings = settings or PlantSettings()
    rng = config.rng()
    plant, params = perturbed_plant(config, scene, settings, gains, rng)
    finger = scene.finger
    E = finger.coupling_matrix()
    act = finger.actuated
    r_nom, r = scene.radius, plant.scene.radius

    ref = Reference.from_plan(plan, finger, r_nom)
    plant.finger_sensors = finger_layout(float(np.mean(ref.arc)), settings.n_sensors, settings.sensor_pitch)
    B0 = scene.thumb_contact_point(plan.X[0, :2])
    span = (settings.thumb_sensors - 1) * settings.sensor_pitch
    mid = B0 + 0.5 * (plan.d[-1] - plan.d[0]) * scene.t_roll
    plant.thumb_sensors = SensorLayout.uniform(mid - 0.5 * span * scene.t_roll, scene.t_roll, settings.thumb_sensors,
                                               settings.sensor_pitch)
    scale = response_scale(plant.finger_sensors, settings.sensor_sigma)

    # grasp acquisition: close along the first normal until the squeeze is reached
    X0 = plan.X[0]
    c0 = X0[:2] + (r - r_nom) * scene.n_thumb
    ref.offset = c0 - X0[:2]
    q_plan0 = plan.joints[0].q

    def grasp(depth):
        p, s = ref.at(0.0, depth)
        q = _ik(finger, q_plan0, s, p)
        return q, initial_state(plant, c0, X0[2], q, r)

    def squeeze(depth):
        return grasp(depth)[1].contacts[0].f_n - settings.grasp_force

    if plant.rigid:
        depth = 0.0
    else:
        depth = brentq(squeeze, -2e-3, 5e-3, xtol=1e-12)
    q_cmd, state = grasp(depth)

    theta_goal = plan.X[-1, 2] if config.goal_theta is None else config.goal_theta
    ctrl = FingerController(gains, settings.compliance, allow_force=config.mode == "force")
    frames = sense(plant, state, rng, 0)
    N = len(plan)
    n_ticks = (N - 1) * settings.ticks_per_knot + settings.settle_ticks
    q_prev = q_cmd.copy()
    est0, theta_hat = None, float(X0[2])
    phi0 = None
    traces = {c: [] for c in TRACE_COLUMNS}
    switch_tick = None
    tick = 0
    for tick in range(n_ticks):
        u = tick / settings.ticks_per_knot
        p_ref, s_ref = ref.at(u, depth)
        q_c = q_cmd
        link, off = locate_arc(finger, s_ref)
        J = jacobian(finger, q_c, link, off) @ E
        p_c = point_at_arc(finger, q_c, s_ref)
        dq = (q_c - q_prev)[act] / gains.dt

        fa, fb = frames
        F_m = estimate_force(plant.finger_sensors, fa, scale)
        est_a = locate(plant.finger_sensors, fa, settings.threshold, settings.n_neighbors)
        est_b = locate(plant.thumb_sensors, fb, settings.threshold, settings.n_neighbors) if fb is not None else None
        p_ff = None if est_a is None else point_at_arc(finger, q_c, float(est_a.p_cp[0]))
        p_th = None if est_b is None else est_b.p_cp
        if est_a is not None:
            s_hat = float(est_a.p_cp[0])
            l_hat, _ = locate_arc(finger, s_hat)
            phi_hat = float(link_angles(finger, q_c)[l_hat])
            if est0 is None:
                est0, phi0 = s_hat, phi_hat
            # finger-roll geometry: object turns with the link minus the contact travel
            theta_hat = float(X0[2]) + (phi_hat - phi0) - state.kappa * (s_hat - est0) / r_nom

        q_ref = ctrl.step(p_ref, p_c, J, dq, q_c[act], F_m, p_ff, p_th, float(q_c[0] + q_c[1]))
        if switch_tick is None and ctrl.mode == Mode.FORCE:
            switch_tick = tick
        q_prev = q_c
        q_cmd = E @ q_ref
        state, frames = resolve_step(state, q_cmd, plant, rng, tick + 1)

        rec = ctrl.log[-1]
        row = (
            tick, tick * gains.dt, rec.mode.value, int(state.grasp_alive), int(state.slipping),
            state.object.theta, theta_hat, float(np.linalg.norm(state.contacts[0].force)), F_m,
            *rec.p_ref, *rec.p_ref_eff, *q_cmd[act], *state.q_actual.q[act], state.slide,
        )  # fmt: skip
        for col, v in zip(TRACE_COLUMNS, row):
            traces[col].append(v)
        if not state.grasp_alive:
            break

    err = float(state.object.theta - theta_goal)
    success = bool(state.grasp_alive and abs(err) <= config.tolerance)
    return TrialResult(
        seed=config.seed,
        index=config.index,
        mode=config.mode,
        success=success,
        theta_error=err,
        steps=tick + 1,
        dropped=not state.grasp_alive,
        reason=state.reason,
        switch_tick=switch_tick,
        params={**params, "grasp_depth": depth},
        traces=traces,
    )


def write_trace(path, result: TrialResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        cols = [result.traces[c] for c in TRACE_COLUMNS]
        for row in zip(*cols):
            w.writerow([v if isinstance(v, (int, str)) else repr(float(v)) for v in row])


# -- batches -------------------------------------------------------------


def _run_one(args):
    return run_trial(*args)


def run_batch(
    plan: Trajectory,
    gains: GainSet,
    scene: Scene,
    settings: PlantSettings | None = None,
    trials: int = 50,
    seed: int = 0,
    modes=("open-loop", "force"),
    template: TrialConfig | None = None,
    workers: int = 1,
) -> list[TrialResult]:
    """Seeded trials for every mode; trial ``i`` draws the same plant in each mode."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    template = template or TrialConfig()
    jobs = [
        (replace(template, seed=seed, index=i, mode=m), plan, gains, scene, settings)
        for m in modes
        for i in range(trials)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


BATCH_COLUMNS = ("seed", "index", "mode", "success", "theta_error", "steps", "dropped", "reason", "switch_tick")


def write_batch(path, results: list[TrialResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BATCH_COLUMNS)
        for res in results:
            s = res.summary()
            s["theta_error"] = repr(float(s["theta_error"]))
            s["success"] = int(s["success"])
            s["dropped"] = int(s["dropped"])
            w.writerow([s[c] for c in BATCH_COLUMNS])


def summarize(results: list[TrialResult]) -> dict:
    out = {}
    for mode in sorted({r.mode for r in results}):
        rs = [r for r in results if r.mode == mode]
        drops = [r.steps for r in rs if r.dropped]
        out[mode] = {
            "trials": len(rs),
            "success_rate": sum(r.success for r in rs) / len(rs),
            "drop_rate": len(drops) / len(rs),
            "mean_abs_theta_error": float(np.mean([abs(r.theta_error) for r in rs])),
            "drop_steps": drops,
        }
    return out
