from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rolling_hand.contact_dynamics import ContactRecord, equilibrium_residual
from rolling_hand.kinematics import FingerModel
from rolling_hand.scene import Scene
from rolling_hand.trajopt import (
    Layout,
    ProblemError,
    Trajectory,
    TrajoptSettings,
    build_problem,
    evaluate,
    initial_guess,
    plan as run_plan,
    solve,
    validate_trajectory,
)
from rolling_hand.trajopt.problem import row_layout

from helpers import fd_relative_error, perturbation_scale


@pytest.fixture(scope="module")
def small(config):
    """Eight-knot, 0.1 rad problem: quick to evaluate and to solve."""
    return build_problem(config.scene(), replace(config.trajopt, N=8, goal_rotation=0.1))


# -- problem construction -------------------------------------------------


def test_variable_count_layout_arithmetic():
    assert Layout(20, 2).size == 20 * 10 + 19 * 2 == 238


def test_problem_size_matches_layout(small):
    assert small.n == small.layout.size == 8 * 10 + 7 * 2


@pytest.mark.parametrize(
    "kwargs",
    [dict(N=1), dict(N=2.5), dict(Q_diag=(1.0, -1.0, 1.0)), dict(R_scale=0.0), dict(Q_diag=(1.0, 1.0))],
)
def test_bad_settings_rejected(kwargs):
    with pytest.raises(ProblemError):
        TrajoptSettings(**kwargs)


def test_default_goal_is_pure_roll(small, scene):
    X0, Xg = small.X0, small.Xg
    assert Xg[2] - X0[2] == pytest.approx(0.1)
    assert np.dot(Xg[:2] - X0[:2], scene.t_roll) == pytest.approx(scene.radius * 0.1)


# -- evaluation -----------------------------------------------------------


def test_nan_rejected(small):
    z = initial_guess(small)
    z[3] = np.nan
    with pytest.raises(ProblemError):
        evaluate(small, z)


def test_wrong_length_rejected(small):
    with pytest.raises(ProblemError):
        evaluate(small, np.zeros(small.n + 1))


def test_cost_zero_at_goal(config):
    scene = replace(config.scene(), mass=0.0)
    nlp = build_problem(scene, replace(config.trajopt, N=5, goal_rotation=0.0, grasp_force=0.0))
    z = initial_guess(nlp)
    lay = nlp.layout
    for k in range(nlp.N):
        z[lay.forces(k)] = 0.0
    z[lay.u(0).start :] = 0.0
    ev = evaluate(nlp, z)
    assert np.max(ev.psi) <= 1e-12
    assert ev.cost <= 1e-12


@given(st.integers(0, 6), st.integers(0, 1), st.floats(-1e-2, 1e-2), st.floats(-1e-2, 1e-2))
def test_input_cost_expansion_is_exact(small, k, j, u0, delta):
    z = initial_guess(small)
    idx = small.layout.u(k).start + j
    z[idx] = u0
    R = small.R[j, j]
    base = evaluate(small, z).cost
    z[idx] = u0 + delta
    change = evaluate(small, z).cost - base
    assert change == pytest.approx(2 * R * u0 * delta + R * delta**2, rel=1e-9, abs=1e-15)


@settings(max_examples=10)
@given(st.integers(0, 2**32 - 1))
def test_derivatives_match_finite_differences(small, seed):
    rng = np.random.default_rng(seed)
    scale = perturbation_scale(small)
    z = initial_guess(small) + scale * rng.uniform(-1, 1, small.n)
    assert fd_relative_error(small, z, scale) <= 1e-5


def test_jacobian_triplets_match_dense(small):
    ev = evaluate(small, initial_guess(small))
    np.testing.assert_allclose(ev.eq_jacobian().toarray(), ev.eq_dense())
    np.testing.assert_allclose(ev.ineq_jacobian().toarray(), ev.ineq_dense())


# -- solving --------------------------------------------------------------


@pytest.fixture(scope="module")
def small_solution(small):
    return solve(small)


def test_small_roll_converges(small_solution, small):
    rep = small_solution.report
    assert rep.converged
    assert max(rep.max_eq_violation, rep.max_ineq_violation) <= 1e-6
    assert small_solution.d[-1] - small_solution.d[0] == pytest.approx(small.scene.radius * 0.1, abs=1e-8)


def test_merit_non_increasing_within_inner_loops(small_solution):
    history = small_solution.report.merit_history
    assert history
    for merits in history:
        assert np.all(np.diff(merits) <= 1e-12 * np.maximum(1.0, np.abs(merits[:-1])))


def test_solve_is_deterministic(small, small_solution):
    again = solve(small)
    np.testing.assert_array_equal(again.extra["z"], small_solution.extra["z"])


def test_goal_at_start_is_already_optimal(config):
    scene = replace(config.scene(), mass=0.0)
    traj = solve(build_problem(scene, replace(config.trajopt, N=10, goal_rotation=0.0, grasp_force=0.0)))
    assert traj.report.converged
    assert traj.report.outer_iterations <= 5
    assert traj.report.cost <= 1e-8


def test_initial_guess_rejects_bad_shape(small):
    with pytest.raises(ProblemError):
        solve(small, np.zeros(3))
    with pytest.raises(ProblemError):
        solve(small, np.full(small.n, np.nan))


@pytest.mark.slow
def test_frictionless_flat_contacts_do_not_converge():
    # one straight link hanging next to the thumb: within its limits the contact
    # normal is horizontal or tilts downward, so without friction nothing carries
    # the weight and the solver can only buy balance by leaving the joint range
    finger = FingerModel(
        link_lengths=(0.04,), base_position=(-0.015, 0.02), base_angle=-np.pi / 2,
        joint_limits=((-0.2, 0.0),), couplings=(),
    )  # fmt: skip
    scene = Scene(finger=finger, mu=0.0)
    settings = TrajoptSettings(
        N=6, goal_rotation=0.2, contact_arc=0.02, q_seed=(0.0,), max_outer=4, max_inner=200, time_limit=600
    )
    traj = run_plan(scene, settings)
    assert not traj.report.converged
    assert traj.report.max_ineq_violation > 1e-3
    rep = validate_trajectory(traj, scene)
    assert rep.joint_limit.max() > 1e-3
    assert not rep.ok()


# -- validator ------------------------------------------------------------


def test_validator_accepts_solution(small_solution, small):
    rep = validate_trajectory(small_solution, small.scene)
    assert rep.ok(1e-6)
    assert rep.max_equality <= 1e-6
    assert rep.min_cone_margin >= 0


def test_validator_agrees_with_transcription(small_solution, small):
    rep = validate_trajectory(small_solution, small.scene)
    ev = evaluate(small, small_solution.extra["z"])
    rows = row_layout(small.N, small.layout.ma, small.E.shape[0]).eq
    N = small.N
    np.testing.assert_allclose(rep.equilibrium[:, :2].ravel(), ev.eq[rows["force"]], atol=1e-10)
    np.testing.assert_allclose(rep.equilibrium[:, 2], ev.eq[rows["moment"]], atol=1e-10)
    np.testing.assert_allclose(rep.thumb_gap, ev.eq[rows["thumb"]], atol=1e-10)
    np.testing.assert_allclose(rep.prismatic[1:], ev.eq[rows["prismatic"]], atol=1e-10)
    np.testing.assert_allclose(rep.object_roll[1:], ev.eq[rows["centre_roll"]], atol=1e-10)
    np.testing.assert_allclose(rep.finger_roll[1:], ev.eq[rows["finger_roll"]], atol=1e-10)
    np.testing.assert_allclose(rep.torque.ravel(), ev.eq[rows["torque"]], atol=1e-10)
    np.testing.assert_allclose(rep.psi, ev.psi, atol=1e-10)
    assert len(rep) == N


def test_validator_reports_injected_slip(small_solution, small):
    k = 4
    bad = replace(small_solution, d=small_solution.d.copy())
    bad.d[k] += 1e-3
    rep = validate_trajectory(bad, small.scene)
    assert rep.prismatic[k] == pytest.approx(-1e-3, abs=1e-9)
    assert rep.prismatic[k + 1] == pytest.approx(1e-3, abs=1e-9)
    others = np.delete(rep.prismatic, [k, k + 1])
    assert np.max(np.abs(others)) <= 1e-6
    assert not rep.ok()


def test_validator_empty_trajectory(scene):
    empty = Trajectory([], [], np.zeros(0), [], np.zeros((0, 2)))
    rep = validate_trajectory(empty, scene)
    assert len(rep) == 0
    assert rep.as_dict()["steps"] == 0


def test_csv_round_trip(small_solution, small, tmp_path):
    path = tmp_path / "plan.csv"
    small_solution.to_csv(path)
    back = Trajectory.from_csv(path, small.scene)
    np.testing.assert_array_equal(back.X, small_solution.X)
    np.testing.assert_array_equal(back.q, small_solution.q)
    np.testing.assert_array_equal(back.d, small_solution.d)
    np.testing.assert_array_equal(back.forces, small_solution.forces)
    np.testing.assert_array_equal(back.u, small_solution.u)
    assert path.read_text().splitlines()[0].startswith("k,x,y,theta,q0,q1,q2,d,fnA,ftA,fnB,ftB,u0,u1")


def test_report_json(small_solution, tmp_path):
    import json

    path = tmp_path / "report.json"
    small_solution.write_report(path, {"ok": True})
    data = json.loads(path.read_text())
    assert data["steps"] == 8
    assert data["solver"]["converged"] is True
    assert data["validation"] == {"ok": True}
