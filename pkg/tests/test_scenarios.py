import json

import numpy as np
import pytest

from quadctrl.controllability import analyze
from quadctrl.dynamics import propagate
from quadctrl.errors import InvalidInputError
from quadctrl.lqr import LQRProblem, solve_bvp
from quadctrl.scenarios import (
    SCENARIOS,
    TWO_MODE_A,
    ExpectedValue,
    Scenario,
    catalog,
    check_expected,
    compute_quantity,
    ecd_scenario,
    optomech_scenario,
    photon_number_warning,
    two_mode_chain_scenario,
    wavepacket_scenario,
)
from quadctrl.pulse import ControlPulse
from quadctrl.synthesis import synthesize_pulse


@pytest.mark.parametrize("name", list(SCENARIOS))
def test_every_expected_value_holds(name):
    sc = SCENARIOS[name]()
    results = check_expected(sc)
    assert results, "scenario carries no expectations"
    failed = [r for r in results if not r["passed"]]
    assert not failed, failed


@pytest.mark.parametrize("builder", [
    lambda: wavepacket_scenario(shift=0.0),
    lambda: wavepacket_scenario(omega=2.0),
    lambda: ecd_scenario(beta=0.0),
    lambda: ecd_scenario(convention="conjugate"),
    lambda: two_mode_chain_scenario(goal=(0, 0, 0, 0)),
])
def test_variant_expectations_hold(builder):
    assert all(r["passed"] for r in check_expected(builder()))


# ---------------------------------------------------------------- wavepacket

def test_wavepacket_defaults():
    sc = wavepacket_scenario()
    assert np.array_equal(sc.system.A, [[0, 1], [-1, 0]])
    assert analyze(sc.system).numerical_rank == 2 and analyze(sc.system).controllable
    assert sc.half_factor is False


def test_wavepacket_mass_and_frequency():
    sc = wavepacket_scenario(omega=2.0, m=0.5)
    assert np.array_equal(sc.system.A, [[0, 2.0], [-2.0, 0]])


def test_wavepacket_min_effort_omega_two_recorded():
    sc = wavepacket_scenario(omega=2.0)
    (entry,) = [e for e in sc.expected_values if e.quantity == "min_effort_cost"]
    assert entry.provenance == "DERIVED"
    assert compute_quantity(sc, "min_effort_cost") == pytest.approx(entry.value, rel=1e-12)


def test_wavepacket_zero_shift_zero_pulse():
    sc = wavepacket_scenario(shift=0.0)
    pulse = synthesize_pulse(sc.system, sc.x0, sc.goal, sc.T)
    assert np.all(pulse.sample(np.linspace(0, 1, 11)) == 0)


# ---------------------------------------------------------------- ECD

def test_ecd_defaults():
    sc = ecd_scenario()
    assert np.array_equal(sc.goal, [1.5, -1.5])
    assert compute_quantity(sc, "golden_pulse_error") < 1e-9
    assert sc.golden_pulse is not None


def test_ecd_zero_beta_zero_pulse():
    sc = ecd_scenario(beta=0.0)
    pulse = synthesize_pulse(sc.system, sc.x0, sc.goal, sc.T)
    assert np.all(pulse.sample(np.linspace(0, 1, 11)) == 0)


@pytest.mark.parametrize("goal", [(1.0, 2.0), (0.5 + 1j, -2j), (3.0, 0.0)])
def test_ecd_arbitrary_goal_steerable(goal):
    sc = ecd_scenario(goal=goal)
    assert sc.golden_pulse is None
    pulse = synthesize_pulse(sc.system, sc.x0, sc.goal, sc.T)
    end = propagate(sc.system, pulse, sc.x0, sc.T).final_state
    assert np.max(np.abs(end - np.asarray(goal))) < 1e-8


def test_ecd_conventions_related_by_conjugation():
    t = np.linspace(0, 1, 17)
    heis = ecd_scenario()
    conj = ecd_scenario(convention="conjugate")
    uh = synthesize_pulse(heis.system, heis.x0, heis.goal, 1.0).sample(t)
    uc = synthesize_pulse(conj.system, conj.x0, conj.goal, 1.0).sample(t)
    assert np.max(np.abs(uc - 1j * uh.conj())) < 1e-10


def test_ecd_unknown_convention():
    with pytest.raises(InvalidInputError):
        ecd_scenario(convention="schrodinger")


# ---------------------------------------------------------------- two-mode chain

def test_two_mode_defaults():
    sc = two_mode_chain_scenario()
    assert np.array_equal(sc.system.A, TWO_MODE_A)
    assert np.array_equal(sc.system.C[:, 0], [1, 0, -1, 0])
    assert np.array_equal(sc.goal, [1, 2, 3, 4]) and np.array_equal(sc.x0, np.zeros(4))
    assert sc.recommended_method == "lqr" and sc.half_factor


def test_two_mode_zero_goal_zero_control():
    sc = two_mode_chain_scenario(goal=(0, 0, 0, 0))
    sol = solve_bvp(LQRProblem(sc.system, 5.0 * np.eye(4), np.eye(1), sc.x0, sc.goal, sc.T))
    assert sol.cost == 0.0
    assert np.all(sol.control.sample(np.linspace(0, 1, 5)) == 0)


# ---------------------------------------------------------------- optomechanics

def test_optomech_distinct_modes_controllable():
    sc = optomech_scenario(np.diag([1.0, 1.7]), g=[0.4, 0.3])
    assert analyze(sc.system).controllable


def test_optomech_zero_coupling():
    sc = optomech_scenario(np.diag([1.0, 1.7]), g=[0.0, 0.0])
    assert analyze(sc.system).numerical_rank == 0


def test_optomech_degenerate_equal_couplings():
    sc = optomech_scenario(np.eye(2), g=[0.5, 0.5])
    rep = analyze(sc.system)
    assert not rep.controllable and rep.numerical_rank == 2


def test_optomech_control_direction():
    sc = optomech_scenario(np.diag([1.0, 2.0]), g=[0.4, 0.3j])
    assert np.allclose(sc.system.C[:, 0], 1j * np.array([0.4, 0.3j, -0.4, 0.3j]))


def test_optomech_coupling_length_checked():
    with pytest.raises(InvalidInputError):
        optomech_scenario(np.eye(2), g=[1.0])


def test_photon_number_warning():
    grid = np.linspace(0, 1, 11)
    neg = ControlPulse(lambda ts: np.cos(4 * ts)[:, None], 1.0, 1, dtype=float)
    pos = ControlPulse(lambda ts: 1 + ts[:, None], 1.0, 1, dtype=float)
    with pytest.warns(UserWarning):
        assert photon_number_warning(neg, grid)
    assert not photon_number_warning(pos, grid)


# ---------------------------------------------------------------- containers

def test_provenance_tags_restricted():
    with pytest.raises(InvalidInputError):
        ExpectedValue("x", 1.0, 0.1, "GUESS")


def test_scenario_validation():
    sys = wavepacket_scenario().system
    with pytest.raises(InvalidInputError):
        Scenario("bad", sys, np.zeros(2), np.zeros(2), 1.0, "newton")
    with pytest.raises(InvalidInputError):
        Scenario("bad", sys, np.zeros(3), np.zeros(2), 1.0, "bump")


def test_unknown_quantity():
    with pytest.raises(InvalidInputError):
        compute_quantity(ecd_scenario(), "fidelity")


def test_catalog_and_json():
    names = [c["name"] for c in catalog()]
    assert names == list(SCENARIOS)
    for name in names:
        data = json.loads(SCENARIOS[name]().to_json())
        assert data["name"] == name
        assert all(e["provenance"] in ("PAPER", "TRIVIAL", "DERIVED") for e in data["expected_values"])
