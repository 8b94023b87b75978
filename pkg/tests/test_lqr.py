import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from conftest import random_controllable
from quadctrl.dynamics import evaluate_cost, propagate
from quadctrl.errors import InvalidInputError, NumericalFailure
from quadctrl.lqr import (
    LQRProblem,
    complex_to_real_embedding,
    embed_vector,
    pontryagin_residuals,
    solve_bvp,
    unembed_vector,
    weight_sweep,
)
from quadctrl.model import LinearControlSystem
from quadctrl.pulse import ControlPulse
from quadctrl.scenarios import ecd_scenario, two_mode_chain_scenario, wavepacket_scenario
from quadctrl.synthesis import min_effort_pulse, synthesize_pulse


def two_mode_problem(q=1.0, r=1.0):
    sc = two_mode_chain_scenario()
    return LQRProblem(sc.system, q * np.eye(4), r * np.eye(1), sc.x0, sc.goal, sc.T)


# ---------------------------------------------------------------- solve_bvp

def test_two_mode_example():
    sol = solve_bvp(two_mode_problem())
    end = propagate(sol.problem.sys, sol.control, sol.problem.x0, 1.0).final_state
    assert np.max(np.abs(end - [1, 2, 3, 4])) < 1e-6
    assert np.max(np.abs(sol.trajectory.final_state - [1, 2, 3, 4])) < 1e-6
    assert np.array_equal(sol.trajectory.states[0], np.zeros(4))
    assert pontryagin_residuals(sol)["max"] < 1e-8
    assert sol.control.provenance.value == "lqr"


def test_free_endpoint_without_state_weight_costs_nothing():
    rng = np.random.default_rng(0)
    sys = random_controllable(rng, 3, 1)
    x0 = rng.normal(size=3)
    sol = solve_bvp(LQRProblem(sys, np.zeros((3, 3)), np.eye(1), x0, expm(sys.A) @ x0, 1.0))
    assert sol.cost < 1e-20
    assert np.max(np.abs(sol.control.sample(np.linspace(0, 1, 11)))) < 1e-10


def test_wavepacket_without_state_weight_is_min_effort():
    sc = wavepacket_scenario()
    sol = solve_bvp(LQRProblem(sc.system, np.zeros((2, 2)), np.eye(2), sc.x0, sc.goal, sc.T))
    _, J_min = min_effort_pulse(sc.system, sc.x0, sc.goal, sc.T)
    assert sol.control.energy() == pytest.approx(J_min, rel=5e-3)
    assert 2 * sol.cost == pytest.approx(J_min, rel=5e-3)


def test_uncontrollable_problem_reports_condition():
    sys = LinearControlSystem(np.zeros((2, 2)), [[1.0], [0.0]])
    with pytest.raises(NumericalFailure) as info:
        solve_bvp(LQRProblem(sys, np.zeros((2, 2)), np.eye(1), [0, 0], [1, 1], 1.0))
    assert "cond" in str(info.value)


def test_multiple_shooting_matches_single_segment():
    p = two_mode_problem()
    one = solve_bvp(p, segments=1)
    many = solve_bvp(p, segments=6)
    grid = np.linspace(0, 1, 13)
    assert np.max(np.abs(one.control.sample(grid) - many.control.sample(grid))) < 1e-8
    assert one.cost == pytest.approx(many.cost, rel=1e-10)


def test_long_horizon_uses_segments():
    sys = LinearControlSystem(np.array([[0.0, 1.0], [-1.0, 0.0]]), [[0.0], [1.0]])
    p = LQRProblem(sys, 1e2 * np.eye(2), np.eye(1), [0, 0], [1, 0], 20.0)
    sol = solve_bvp(p)
    assert sol.segments > 1
    assert np.linalg.norm(sol.trajectory.final_state - [1, 0]) < 1e-6 * (1 + 1.0)
    assert pontryagin_residuals(sol)["max"] < 1e-7


def test_problem_validation():
    sc = two_mode_chain_scenario()
    with pytest.raises(InvalidInputError):
        LQRProblem(sc.system, np.eye(4), -np.eye(1), sc.x0, sc.goal, 1.0)
    with pytest.raises(InvalidInputError):
        LQRProblem(sc.system, -np.eye(4), np.eye(1), sc.x0, sc.goal, 1.0)
    with pytest.raises(InvalidInputError):
        LQRProblem(sc.system, np.eye(4), np.eye(1), sc.x0, sc.goal[:3], 1.0)
    with pytest.raises(InvalidInputError):
        LQRProblem(sc.system, np.eye(4), np.eye(1), sc.x0, sc.goal, 0.0)
    with pytest.raises(InvalidInputError):
        LQRProblem(ecd_scenario().system, np.eye(2), np.eye(1), [0, 0], [1, 1], 1.0)


def test_scalar_state_weight_broadcast():
    p = LQRProblem(two_mode_chain_scenario().system, 2.0, 1.0, np.zeros(4), np.ones(4), 1.0)
    assert np.array_equal(p.Q, 2.0 * np.eye(4))


@given(st.integers(1, 4), st.integers(1, 2), st.floats(0.1, 10.0), st.integers(0, 2 ** 31))
def test_boundary_exactness_and_pontryagin(d, m, q, seed):
    rng = np.random.default_rng(seed)
    sys = random_controllable(rng, d, m, max_gram_cond=1e6)
    x0, xT = rng.normal(size=d), rng.normal(size=d)
    sol = solve_bvp(LQRProblem(sys, q * np.eye(d), np.eye(m), x0, xT, 1.0))
    end = propagate(sys, sol.control, x0, 1.0, grid=[0, 1.0]).final_state
    assert np.linalg.norm(end - xT) < 1e-6 * (1 + np.linalg.norm(xT))
    assert np.array_equal(sol.trajectory.states[0], x0)
    assert pontryagin_residuals(sol)["max"] < 1e-8 * max(1.0, np.abs(sol.lambda0).max())


@settings(max_examples=10)
@given(st.floats(0.01, 100.0), st.integers(0, 2 ** 31))
def test_weight_scaling_invariance(factor, seed):
    rng = np.random.default_rng(seed)
    sys = random_controllable(rng, 3, 1, max_gram_cond=1e6)
    x0, xT = rng.normal(size=3), rng.normal(size=3)
    Q = np.diag(rng.uniform(0.5, 2.0, 3))
    base = solve_bvp(LQRProblem(sys, Q, np.eye(1), x0, xT, 1.0))
    scaled = solve_bvp(LQRProblem(sys, factor * Q, factor * np.eye(1), x0, xT, 1.0))
    grid = np.linspace(0, 1, 21)
    assert np.max(np.abs(base.control.sample(grid) - scaled.control.sample(grid))) < 1e-8 * max(
        1.0, np.abs(base.control.sample(grid)).max())
    assert np.max(np.abs(base.trajectory.states - scaled.trajectory.states)) < 1e-8
    assert scaled.cost == pytest.approx(factor * base.cost, rel=1e-8)


def test_lqr_beats_other_pulses():
    # any other steering pulse has a larger LQR cost
    p = two_mode_problem()
    sol = solve_bvp(p)
    bump = synthesize_pulse(p.sys, p.x0, p.xT, p.T)
    traj = propagate(p.sys, bump, p.x0, p.T)
    assert sol.cost < evaluate_cost(traj, p.Q, p.R)


# ---------------------------------------------------------------- weight_sweep

def test_sweep_small_q_reaches_grammian_limit():
    p = two_mode_problem()
    (q, cost, err), = weight_sweep(p, [1e-6])
    _, J_min = min_effort_pulse(p.sys, p.x0, p.xT, p.T)
    assert err is None and q == 1e-6
    assert cost == pytest.approx(0.5 * J_min, rel=5e-3)


def test_single_point_sweep_is_solve_bvp():
    p = two_mode_problem()
    (_, cost, _), = weight_sweep(p, [1.0])
    assert cost == solve_bvp(p).cost


def test_sweep_is_monotone():
    p = two_mode_problem()
    qs = np.logspace(-3, 3, 13)
    results = weight_sweep(p, qs)
    costs = np.array([c for _, c, e in results])
    assert all(e is None for _, _, e in results)
    assert [q for q, _, _ in results] == list(qs)
    assert np.all(np.diff(costs) >= -1e-10 * costs[1:])


def test_sweep_threads_keep_order():
    p = two_mode_problem()
    qs = [10.0, 0.1, 1.0, 0.0]
    serial = weight_sweep(p, qs, threads=1)
    threaded = weight_sweep(p, qs, threads=3)
    assert serial == threaded


def test_sweep_records_failures():
    sys = LinearControlSystem(np.zeros((2, 2)), [[1.0], [0.0]])
    p = LQRProblem(sys, np.zeros((2, 2)), np.eye(1), [0, 0], [1, 1], 1.0)
    (q, cost, err), = weight_sweep(p, [1.0])
    assert np.isnan(cost) and "singular" in err


def test_sweep_rejects_negative_weights():
    with pytest.raises(InvalidInputError):
        weight_sweep(two_mode_problem(), [-1.0])


# ---------------------------------------------------------------- embedding

def test_embedding_real_generator():
    A = np.array([[0.0, 1.0], [-2.0, 0.3]])
    emb = complex_to_real_embedding(LinearControlSystem(A, [[1.0], [0.0]]))
    assert np.array_equal(emb.A, np.block([[A, np.zeros((2, 2))], [np.zeros((2, 2)), A]]))


def test_embedding_imaginary_unit():
    emb = complex_to_real_embedding(LinearControlSystem([[1j]], [[1.0]]))
    assert np.array_equal(emb.A, [[0, -1], [1, 0]])


def test_embedding_reproduces_ecd_propagation():
    sc = ecd_scenario()
    pulse = synthesize_pulse(sc.system, sc.x0, sc.goal, 1.0)
    emb = complex_to_real_embedding(sc.system)
    # real controls embed as (u, 0)
    real_pulse = ControlPulse(lambda ts: np.c_[pulse.sample(ts).real, np.zeros(len(ts))], 1.0, 2, dtype=float)
    grid = np.linspace(0, 1, 21)
    direct = propagate(sc.system, pulse, sc.x0, 1.0, grid=grid, rtol=1e-12, atol=1e-14)
    embedded = propagate(emb, real_pulse, embed_vector(sc.x0), 1.0, grid=grid, rtol=1e-12, atol=1e-14)
    assert np.max(np.abs(unembed_vector(embedded.states) - direct.states)) < 1e-10


def test_embed_round_trip():
    x = np.array([1 + 2j, -0.5j, 3.0])
    assert np.array_equal(unembed_vector(embed_vector(x)), x)
