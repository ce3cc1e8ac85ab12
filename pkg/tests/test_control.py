import csv
import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rolling_hand.control import (
    PID,
    ComplianceModel,
    FingerController,
    ForceLoopState,
    GainSet,
    Mode,
    compliance_of,
    compose_reference,
    force_loop,
    joint_update,
    mode_switch,
    position_loop,
    velocity_loop,
    velocity_measure,
    write_trace,
)

seeds = st.integers(0, 2**32 - 1)


# -- gains -----------------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [dict(dt=0.0), dict(epsilon=0.0), dict(epsilon=(0.1, -0.1)), dict(k_pp=float("nan")), dict(F_des=-1.0),
     dict(integrator_limit=0.0)],
)  # fmt: skip
def test_invalid_gains(kwargs):
    with pytest.raises(ValueError):
        GainSet(**kwargs)


def test_invalid_compliance():
    with pytest.raises(ValueError):
        ComplianceModel(C_min=2e-3, C_peak=1e-3)
    with pytest.raises(ValueError):
        ComplianceModel(C_min=-1e-3, C_peak=1e-3)


# -- PID --------------------------------------------------------------------


def pid_oracle(errors, kp, ki, kd, dt, limit=np.inf):
    """Textbook positional PID, written out step by step."""
    out, acc, prev = [], 0.0, None
    for e in errors:
        acc = min(max(acc + e * dt, -limit), limit)
        de = 0.0 if prev is None else (e - prev) / dt
        prev = e
        out.append(kp * e + ki * acc + kd * de)
    return np.array(out)


def test_zero_error_zero_velocity():
    g = GainSet(k_ip=1.0, k_dp=0.1)
    v = position_loop(np.zeros(3), np.zeros(3), PID(g.k_pp, g.k_ip, g.k_dp), g)
    np.testing.assert_array_equal(v, 0.0)


def test_pure_proportional():
    g = GainSet(k_pp=2.0)
    v = position_loop([1e-3, 0, 0], [0, 0, 0], PID(2.0), g)
    np.testing.assert_allclose(v, [2e-3, 0, 0])


@given(st.floats(-5, 5), st.floats(0, 5), st.floats(0, 1), st.floats(1e-3, 0.1), st.integers(1, 40))
def test_pid_step_matches_difference_equation(kp, ki, kd, dt, n):
    errors = np.r_[np.zeros(3), np.ones(n)]  # a step after three quiet ticks
    pid = PID(kp, ki, kd)
    got = np.array([float(pid(e, dt)) for e in errors])
    np.testing.assert_allclose(got, pid_oracle(errors, kp, ki, kd, dt), rtol=0, atol=1e-12)


@given(st.lists(st.floats(-1, 1), min_size=1, max_size=50), st.floats(0.01, 0.5))
def test_pid_integrator_clamped(errors, limit):
    pid = PID(0.0, 1.0, 0.0, limit)
    got = np.array([float(pid(e, 0.1)) for e in errors])
    np.testing.assert_allclose(got, pid_oracle(errors, 0.0, 1.0, 0.0, 0.1, limit), atol=1e-12)
    assert np.all(np.abs(got) <= limit + 1e-15)


def test_pid_reset():
    pid = PID(1.0, 1.0, 1.0)
    pid(np.ones(2), 0.1)
    pid.reset()
    np.testing.assert_allclose(pid(np.ones(2), 0.1), [1.1, 1.1])


# -- velocity ---------------------------------------------------------------


def test_velocity_measure_examples():
    J = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(velocity_measure(J, np.zeros(3)), 0.0)
    np.testing.assert_array_equal(velocity_measure(np.eye(2), [0.3, -0.2]), [0.3, -0.2])


@given(seeds)
def test_velocity_measure_matches_explicit_product(seed):
    rng = np.random.default_rng(seed)
    J, dq = rng.normal(size=(2, 3)), rng.normal(size=3)
    expected = [sum(J[i, j] * dq[j] for j in range(3)) for i in range(2)]
    np.testing.assert_allclose(velocity_measure(J, dq), expected, atol=1e-14)


def test_velocity_loop_feeds_forward():
    g = GainSet(k_pv=0.5)
    v = velocity_loop([1.0, 0.0], [0.5, 0.0], PID(0.5), g)
    np.testing.assert_allclose(v, [1.25, 0.0])


# -- joint update ----------------------------------------------------------


def objective(J, v, dq):
    r = v[:, None] - J @ dq.T if dq.ndim == 2 else v - J @ dq
    return 0.5 * np.sum(r * r, axis=0)


def test_zero_command_holds_position():
    q = np.array([0.2, 1.1])
    np.testing.assert_array_equal(joint_update(np.eye(2), np.zeros(2), q, 0.02, 0.01), q)


@given(seeds)
def test_interior_optimum_is_pseudo_inverse(seed):
    rng = np.random.default_rng(seed)
    U, _ = np.linalg.qr(rng.normal(size=(2, 2)))
    J = U @ np.diag(rng.uniform(0.5, 2.0, 2))  # singular values bounded away from zero
    dq_true = rng.uniform(-0.5, 0.5, 2)
    v = J @ dq_true
    dq = joint_update(J, v, np.zeros(2), 0.02, 0.01) / 0.01
    # the solver carries a 1e-6 Tikhonov term, so the exact oracle is the damped normal equations
    damped = np.linalg.solve(J.T @ J + 1e-6 * np.eye(2), J.T @ v)
    np.testing.assert_allclose(dq, damped, atol=1e-9)
    np.testing.assert_allclose(dq, np.linalg.pinv(J) @ v, atol=1e-4)


def test_rank_deficient_gives_minimum_norm():
    J = np.array([[1.0, 1.0], [2.0, 2.0]])
    v = np.array([0.1, 0.2])
    dq = joint_update(J, v, np.zeros(2), 1.0, 1.0)
    np.testing.assert_allclose(dq, np.linalg.pinv(J) @ v, atol=1e-5)


@given(seeds)
def test_tiny_box_saturates_with_unconstrained_sign(seed):
    rng = np.random.default_rng(seed)
    J = np.diag(rng.uniform(0.5, 2.0, 2))
    v = rng.choice([-1.0, 1.0], 2) * rng.uniform(0.5, 2.0, 2)
    eps, dt = 1e-6, 0.01
    q_c = rng.normal(size=2)
    q_ref = joint_update(J, v, q_c, eps, dt)
    np.testing.assert_allclose(q_ref, q_c + eps * np.sign(np.linalg.solve(J, v)), rtol=0, atol=1e-15)


def grid_minimum(J, v, bound, m):
    """Dense grid search over the box with spacing 1e-3 of the box half-width."""
    if m <= 2:
        axis = np.linspace(-bound, bound, 2001)
        pts = np.array(list(itertools.product(axis, repeat=m)))
        return objective(J, v, pts).min()
    # three joints: the full grid is 8e9 points, so refine a coarse winner at the fine spacing
    coarse = np.linspace(-bound, bound, 101)
    pts = np.array(list(itertools.product(coarse, repeat=3)))
    best = pts[np.argmin(objective(J, v, pts))]
    fine = np.arange(-20, 21) * 1e-3 * bound
    pts = np.clip(best + np.array(list(itertools.product(fine, repeat=3))), -bound, bound)
    return objective(J, v, pts).min()


@settings(max_examples=15)
@given(seeds, st.integers(1, 3))
def test_box_solution_matches_grid_search(seed, m):
    rng = np.random.default_rng(seed)
    J = rng.normal(size=(2, m))
    v = rng.normal(size=2) * 3
    eps, dt = 0.02, 0.01
    dq = joint_update(J, v, np.zeros(m), eps, dt) / dt
    f_box = objective(J, v, dq)
    f_grid = grid_minimum(J, v, eps / dt, m)
    assert f_box <= f_grid + 1e-6
    assert f_grid - f_box <= 1e-6 * max(1.0, f_grid) or f_grid - f_box <= 2e-4 * (eps / dt) ** 2 * np.sum(J**2)


@given(seeds, st.floats(1e-6, 1.0), st.floats(1e-3, 0.1))
def test_step_never_leaves_box(seed, eps, dt):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 4))
    J = rng.normal(size=(2, m)) * 10
    q_c = rng.normal(size=m)
    q_ref = joint_update(J, rng.normal(size=2) * 100, q_c, eps, dt)
    # allow the rounding of q_c + dq dt itself
    assert np.all(np.abs(q_ref - q_c) <= eps + 4 * np.spacing(np.abs(q_c) + eps))


def test_per_joint_epsilon():
    q = joint_update(np.eye(2), np.array([10.0, 10.0]), np.zeros(2), (0.01, 0.03), 0.01)
    np.testing.assert_allclose(q, [0.01, 0.03])


def test_joint_update_rejects_bad_dt():
    with pytest.raises(ValueError):
        joint_update(np.eye(2), np.ones(2), np.zeros(2), 0.1, 0.0)


# -- compliance --------------------------------------------------------------

MODEL = ComplianceModel(C_min=1e-4, C_peak=5e-3)


def test_compliance_examples():
    assert compliance_of(np.pi / 2, MODEL) == pytest.approx(MODEL.C_peak)
    assert compliance_of(0.0, MODEL) == pytest.approx(MODEL.C_min)
    assert compliance_of(np.pi / 4, MODEL) == pytest.approx((MODEL.C_min + MODEL.C_peak) / 2)


def test_compliance_clamped_outside_domain():
    assert compliance_of(-1.0, MODEL) == compliance_of(0.0, MODEL)
    assert compliance_of(4.0, MODEL) == compliance_of(np.pi, MODEL)


@given(st.floats(0, np.pi / 2))
def test_compliance_symmetric(d):
    assert compliance_of(np.pi / 2 - d, MODEL) == pytest.approx(compliance_of(np.pi / 2 + d, MODEL), abs=1e-15)


@given(st.floats(0, np.pi), st.floats(-1e-3, 1e-3))
def test_compliance_lipschitz(th, d):
    slope = (MODEL.C_peak - MODEL.C_min) / (np.pi / 2)
    assert abs(compliance_of(th + d, MODEL) - compliance_of(th, MODEL)) <= slope * abs(d) + 1e-18


# -- force loop ---------------------------------------------------------------


def test_force_on_target_gives_integrator_only():
    g = GainSet(k_pf=1e-3, k_if=0.0)
    p, _ = force_loop(0.25, (0.01, 0.0), (0.0, 0.0), 0.25, g, 5e-4, ForceLoopState())
    np.testing.assert_array_equal(p, 0.0)


def test_force_loop_example():
    g = GainSet(k_pf=1e-3, k_if=0.0)
    p, _ = force_loop(1.0, (0.02, 0.0), (0.0, 0.0), 2.0, g, 0.5e-3, ForceLoopState())
    np.testing.assert_allclose(p, [1.5e-3, 0.0])


@given(st.integers(1, 60), st.floats(-1, 1), st.floats(1e-3, 0.05))
def test_integrator_is_discrete_sum(n, err, dt):
    g = GainSet(k_pf=0.0, k_if=2.0, dt=dt, integrator_limit=1e3)
    state = ForceLoopState()
    for _ in range(n):
        p, state = force_loop(1.0 - err, (1.0, 0.0), (0.0, 0.0), 1.0, g, 0.0, state)
    assert p[0] == pytest.approx(2.0 * n * dt * err, rel=1e-12, abs=1e-15)
    assert p[1] == 0.0


def test_integrator_clamped():
    g = GainSet(k_pf=0.0, k_if=1.0, integrator_limit=0.01)
    state = ForceLoopState()
    for _ in range(100):
        p, state = force_loop(0.0, (1.0, 0.0), (0.0, 0.0), 1.0, g, 0.0, state)
    assert p[0] == pytest.approx(0.01)


@given(
    st.floats(0, 2), st.floats(0, 2), st.floats(1e-3, 1e3),
    st.tuples(st.floats(-1, 1), st.floats(-1, 1)).filter(lambda v: np.hypot(*v) > 1e-3),
)  # fmt: skip
def test_force_loop_direction_invariance(F_m, F_des, lam, pn):
    g = GainSet(k_pf=1e-3, k_if=0.2)
    a, _ = force_loop(F_m, pn, (0.0, 0.0), F_des, g, 2e-3, ForceLoopState())
    b, _ = force_loop(F_m, lam * np.array(pn), (0.0, 0.0), F_des, g, 2e-3, ForceLoopState())
    np.testing.assert_allclose(a, b, atol=1e-15)


def test_coincident_points_hold_direction():
    g = GainSet(k_pf=1e-3, k_if=0.0)
    state = ForceLoopState()
    first, state = force_loop(0.0, (0.0, 0.02), (0.0, 0.0), 1.0, g, 0.0, state)
    held, state = force_loop(0.0, (0.01, 0.01), (0.01, 0.01), 1.0, g, 0.0, state)
    assert state.degenerate
    np.testing.assert_allclose(held, first)


def test_coincident_points_without_history():
    p, state = force_loop(0.0, (0.0, 0.0), (0.0, 0.0), 1.0, GainSet(), 0.0, ForceLoopState())
    assert state.degenerate
    np.testing.assert_array_equal(p, 0.0)


# -- switching and reference ----------------------------------------------------


def test_switch_boundary_is_strict():
    assert mode_switch(0.5, 0.5, Mode.OPEN_LOOP) == Mode.OPEN_LOOP
    assert mode_switch(0.49, 0.5, Mode.OPEN_LOOP) == Mode.FORCE


def test_switch_latches():
    mode = Mode.OPEN_LOOP
    for F in (1.0, 0.1, 1.0, 5.0):
        mode = mode_switch(F, 0.5, mode)
    assert mode == Mode.FORCE


@given(st.lists(st.floats(0, 10), max_size=30))
def test_zero_threshold_never_switches(forces):
    mode = Mode.OPEN_LOOP
    for F in forces:
        mode = mode_switch(F, 0.0, mode)
    assert mode == Mode.OPEN_LOOP


def test_compose_reference():
    p = np.array([0.01, 0.02])
    np.testing.assert_array_equal(compose_reference(p, [1.0, 1.0], Mode.OPEN_LOOP), p)
    np.testing.assert_array_equal(compose_reference(p, [0.0, 0.0], Mode.FORCE), p)


@given(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), st.tuples(st.floats(-1, 1), st.floats(-1, 1)))
def test_compose_reference_is_additive(pf, delta):
    p = np.array([0.01, 0.02])
    a = compose_reference(p, np.array(pf), Mode.FORCE)
    b = compose_reference(p, np.array(pf) + delta, Mode.FORCE)
    np.testing.assert_allclose(b - a, delta, atol=1e-15)


# -- cascade ------------------------------------------------------------------


@pytest.mark.parametrize("allow_force", [False, True])
def test_cascade_fixed_point(allow_force):
    g = GainSet(k_ip=1.0, k_dp=0.1, k_iv=1.0, k_dv=0.1)
    ctrl = FingerController(g, ComplianceModel(), allow_force=allow_force)
    if allow_force:
        ctrl.mode = Mode.FORCE  # already latched
    J = np.array([[0.03, -0.01], [0.02, 0.04]])
    q_c = np.array([0.3, 1.2])
    p = np.array([0.01, 0.005])
    for _ in range(5):
        # in force mode the measured force sits exactly at the set-point
        q_ref = ctrl.step(p, p, J, np.zeros(2), q_c, g.F_des, p + (0.01, 0), p, 0.6)
        np.testing.assert_array_equal(q_ref, q_c)
    assert ctrl.mode == (Mode.FORCE if allow_force else Mode.OPEN_LOOP)


def test_force_mode_pushes_toward_object_when_force_is_low():
    g = GainSet()
    ctrl = FingerController(g, ComplianceModel(), allow_force=True)
    p_ff, p_th = np.array([0.015, 0.0]), np.array([0.0, 0.0])
    ctrl.step(np.zeros(2), np.zeros(2), np.eye(2), np.zeros(2), np.zeros(2), 0.0, p_ff, p_th, 0.5)
    rec = ctrl.log[-1]
    # thumb is at -x from the finger contact: a weak grip moves the reference toward it
    assert rec.p_ref_eff[0] < 0
    assert rec.F_err == pytest.approx(g.F_des)


def test_control_trace(tmp_path):
    ctrl = FingerController(GainSet(), ComplianceModel())
    for _ in range(3):
        ctrl.step(np.ones(2) * 1e-3, np.zeros(2), np.eye(2), np.zeros(2), np.zeros(2), 1.0, None, None, 0.5)
    path = tmp_path / "control.csv"
    write_trace(path, ctrl.log)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["k", "mode", "p_ref_x", "p_ref_y", "p_eff_x", "p_eff_y", "q_ref0", "q_ref1", "F_m", "F_err"]
    assert len(rows) == 4
    assert rows[1][1] == "open-loop"
