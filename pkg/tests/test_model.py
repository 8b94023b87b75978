import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quadctrl.errors import InvalidInputError
from quadctrl.model import (
    Basis,
    LinearControlSystem,
    QuadraticHamiltonian,
    XPTransform,
    augment_affine,
    build_generator,
    build_xp_generator,
    control_from_drive,
    control_matrix_from_mask,
    drive_from_control,
    eta_matrix,
    from_quadrature_basis,
    mode_system,
    to_quadrature_basis,
)
from quadctrl.dynamics import constant_drive_solution
from scipy.linalg import expm


def random_hamiltonian(rng, n, pd=False):
    G = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    G = (G + G.conj().T) / 2
    B = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    B = (B + B.T) / 2
    if pd:
        # make M = [[G, B], [B*, G*]] positive definite by a diagonal shift
        M = np.block([[G, B], [B.conj(), G.conj()]])
        shift = 1.0 - np.linalg.eigvalsh(M).min()
        G = G + max(shift, 0.0) * np.eye(n)
    return QuadraticHamiltonian(G, B)


# ---------------------------------------------------------------- build_generator

def test_single_free_mode_generator():
    gen = build_generator(QuadraticHamiltonian([[1.0]], [[0.0]]))
    assert np.array_equal(gen.matrix, np.diag([-1j, 1j]))


def test_pure_squeezing_generator():
    gen = build_generator(QuadraticHamiltonian([[0.0]], [[1.0]]))
    assert np.array_equal(gen.M, np.array([[0, 1], [1, 0]]))
    assert np.array_equal(gen.matrix, -1j * np.array([[0, 1], [-1, 0]]))


def test_ecd_generator_from_dispersive_shift():
    chi = 3.0
    gen = build_generator(QuadraticHamiltonian([[-chi / 2]], [[0.0]]))
    assert np.allclose(gen.matrix, np.diag([1.5j, -1.5j]), atol=0, rtol=0)


def test_rejects_non_hermitian_G():
    with pytest.raises(InvalidInputError):
        QuadraticHamiltonian([[1.0, 1.0], [0.0, 1.0]])


def test_rejects_non_symmetric_B():
    with pytest.raises(InvalidInputError):
        QuadraticHamiltonian(np.eye(2), [[0.0, 1.0], [0.5, 0.0]])


def test_near_hermitian_input_is_symmetrized():
    G = np.array([[1.0, 0.5], [0.5 + 5e-13, 2.0]])
    h = QuadraticHamiltonian(G)
    assert np.array_equal(h.G, h.G.conj().T)


@given(st.integers(1, 4), st.integers(0, 2 ** 31))
def test_generator_structure(n, seed):
    rng = np.random.default_rng(seed)
    h = random_hamiltonian(rng, n)
    gen = build_generator(h)
    assert np.array_equal(gen.M[:n, :n], h.G)
    assert np.array_equal(gen.M[:n, n:], h.B)
    assert np.array_equal(gen.M[n:, :n], h.B.conj())
    assert np.array_equal(gen.M[n:, n:], h.G.conj())
    assert np.array_equal(gen.eta @ gen.eta, np.eye(2 * n))
    assert np.array_equal(gen.matrix, -1j * (gen.eta @ gen.M))


@given(st.integers(1, 4), st.integers(0, 2 ** 31))
def test_spectrum_symmetric_for_positive_definite_M(n, seed):
    gen = build_generator(random_hamiltonian(np.random.default_rng(seed), n, pd=True))
    ev = np.sort_complex(np.linalg.eigvals(gen.eta_M))
    mirrored = np.sort_complex(-ev)
    assert np.max(np.abs(ev - mirrored)) < 1e-9


# ---------------------------------------------------------------- control mask

def test_mask_single_mode():
    h = QuadraticHamiltonian.from_driven_modes([[1.0]], driven_modes=[0])
    assert np.array_equal(control_matrix_from_mask(h), np.eye(2))


def test_mask_two_modes_first_driven():
    h = QuadraticHamiltonian.from_driven_modes(np.eye(2), driven_modes=[0])
    assert np.array_equal(control_matrix_from_mask(h), np.diag([1, 0, 1, 0]))


def test_mask_no_drive():
    h = QuadraticHamiltonian.from_driven_modes(np.eye(2), driven_modes=[])
    assert np.array_equal(control_matrix_from_mask(h), np.zeros((4, 4)))


def test_drive_control_round_trip():
    c = np.array([1 + 2j, 3 - 1j, 1 - 2j, 3 + 1j])
    assert np.allclose(drive_from_control(control_from_drive(c, 2), 2), c, atol=1e-15)


# ---------------------------------------------------------------- quadrature basis

def test_free_mode_to_quadratures():
    sys = LinearControlSystem(np.diag([-1j, 1j]), np.eye(2), Basis.MODE)
    q = to_quadrature_basis(sys, XPTransform(1))
    assert np.allclose(q.A, [[0, 1], [-1, 0]], atol=1e-15)
    # identity control maps to the complex transform itself
    with pytest.raises(InvalidInputError):
        to_quadrature_basis(sys, real=True)


def test_identity_control_maps_to_transform():
    sys = LinearControlSystem(np.diag([-1j, 1j]), np.eye(2), Basis.MODE)
    t = XPTransform(1)
    assert np.allclose(to_quadrature_basis(sys, t).C, t.u_beta_alpha, atol=0)


def test_wavepacket_forcing_in_quadratures():
    # H = a^+ a + u x with x = (a + a^+)/sqrt2, i.e. drive c = u / sqrt2 on both rows
    u = 0.7
    c = np.array([u, u]) / np.sqrt(2)
    sys = LinearControlSystem(np.diag([-1j, 1j]), control_from_drive(c, 1).reshape(-1, 1), Basis.MODE)
    q = to_quadrature_basis(sys, real=True)
    assert np.allclose(q.A, [[0, 1], [-1, 0]], atol=1e-15)
    assert np.allclose(q.C[:, 0], [0.0, -u], atol=1e-15)


def test_unitary_transform():
    U = XPTransform(3).u_beta_alpha
    assert np.max(np.abs(U @ U.conj().T - np.eye(6))) < 1e-14


def test_real_request_rejects_complex_result():
    sys = LinearControlSystem(np.diag([-1j, -1j]), np.eye(2), Basis.MODE)
    with pytest.raises(InvalidInputError):
        to_quadrature_basis(sys, real=True)


def test_quadrature_requires_mode_basis():
    with pytest.raises(InvalidInputError):
        to_quadrature_basis(LinearControlSystem(np.eye(2), np.eye(2), Basis.QUADRATURE))


@given(st.integers(1, 3), st.integers(0, 2 ** 31))
def test_quadrature_round_trip(n, seed):
    rng = np.random.default_rng(seed)
    h = random_hamiltonian(rng, n)
    sys = mode_system(h, rng.normal(size=(2 * n, 2)) + 1j * rng.normal(size=(2 * n, 2)))
    back = from_quadrature_basis(to_quadrature_basis(sys))
    assert np.max(np.abs(back.A - sys.A)) < 1e-12
    assert np.max(np.abs(back.C - sys.C)) < 1e-12


@given(st.integers(1, 3), st.integers(0, 2 ** 31))
def test_physical_hamiltonians_have_real_quadrature_generator(n, seed):
    sys = mode_system(random_hamiltonian(np.random.default_rng(seed), n))
    q = to_quadrature_basis(sys)
    assert np.max(np.abs(q.A.imag)) < 1e-12


# ---------------------------------------------------------------- xp generator

def test_xp_generator_harmonic_oscillator():
    sys = build_xp_generator([[0.5]], [[0.5]], [[0.0]])
    assert np.array_equal(sys.A, [[0, 1], [-1, 0]])


def test_xp_generator_pure_b():
    sys = build_xp_generator([[0.0]], [[0.0]], [[1.0]])
    assert np.array_equal(sys.A, 2 * np.array([[1, 0], [0, -1]]))


def test_xp_generator_two_mode_blocks():
    # diagonal and off-diagonal couplings of the two-mode example
    Gx = [[2.0, 1.0], [1.0, 2.0]]
    Gp = [[2.0, 0.0], [0.0, 2.0]]
    sys = build_xp_generator(Gx, Gp, np.zeros((2, 2)))
    expected_top = 2 * np.array([[0, 0, 2, 0], [0, 0, 0, 2]])
    expected_bottom = 2 * np.array([[-2, -1, 0, 0], [-1, -2, 0, 0]])
    assert np.array_equal(sys.A[:2], expected_top)
    assert np.array_equal(sys.A[2:], expected_bottom)


def test_xp_generator_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        build_xp_generator(np.eye(2), np.eye(3), np.zeros((2, 2)))


# ---------------------------------------------------------------- affine embedding

def test_augment_affine_matrix():
    sys = LinearControlSystem(np.zeros((2, 2)), np.eye(2))
    out = augment_affine(sys, [1.0, -1.0])
    assert np.array_equal(out, [[0, 0, 1], [0, 0, -1], [0, 0, 0]])


def test_augment_affine_shift():
    sys = LinearControlSystem(np.zeros((2, 2)), np.eye(2))
    c = np.array([0.3, -2.0])
    E = expm(augment_affine(sys, c))
    assert np.allclose(E @ np.r_[0.0, 0.0, 1.0], np.r_[c, 1.0], atol=1e-15)


def test_augment_affine_matches_constant_drive_solution():
    h = QuadraticHamiltonian([[-1.5]])
    gen = build_generator(h)
    sys = LinearControlSystem(gen.matrix, np.eye(2), Basis.MODE)
    c = np.array([0.4 + 0.2j, 0.4 - 0.2j])
    x0 = np.array([0.1 - 0.3j, 0.1 + 0.3j])
    t = 0.8
    aug = expm(augment_affine(sys, c, physical=True) * t) @ np.r_[x0, 1.0]
    closed = constant_drive_solution(gen, x0, c, t)
    assert np.max(np.abs(aug[:2] - closed)) < 1e-10


# ---------------------------------------------------------------- serialization

def test_linear_system_shapes():
    sys = LinearControlSystem(np.eye(3), [1.0, 0.0, 0.0])
    assert (sys.d, sys.m) == (3, 1)
    with pytest.raises(InvalidInputError):
        LinearControlSystem(np.eye(3), np.ones((2, 1)))


def test_mode_system_dimension():
    h = QuadraticHamiltonian.from_driven_modes(np.eye(3), driven_modes=[1])
    assert mode_system(h).d == 6


def test_hamiltonian_json_round_trip():
    rng = np.random.default_rng(3)
    h = QuadraticHamiltonian.from_driven_modes(random_hamiltonian(rng, 2).G, random_hamiltonian(rng, 2).B, [1])
    back = QuadraticHamiltonian.from_dict(json.loads(h.to_json()))
    assert np.array_equal(back.G, h.G) and np.array_equal(back.B, h.B)
    assert np.array_equal(back.drive_mask, h.drive_mask)


def test_hamiltonian_json_rejects_unknown_keys():
    data = QuadraticHamiltonian(np.eye(1)).to_dict()
    data["extra"] = 1
    with pytest.raises(InvalidInputError):
        QuadraticHamiltonian.from_dict(data)


@pytest.mark.parametrize("complex_", [False, True])
def test_system_json_round_trip_bit_identical(complex_):
    rng = np.random.default_rng(4)
    A = rng.normal(size=(3, 3)) + (1j * rng.normal(size=(3, 3)) if complex_ else 0)
    sys = LinearControlSystem(A, rng.normal(size=(3, 2)), Basis.QUADRATURE)
    back = LinearControlSystem.from_dict(json.loads(json.dumps(sys.to_dict())))
    assert back.A.dtype == sys.A.dtype and np.array_equal(back.A, sys.A)
    assert back.C.dtype == sys.C.dtype and np.array_equal(back.C, sys.C)
    assert back.basis_tag is sys.basis_tag


def test_eta_matrix():
    assert np.array_equal(eta_matrix(2), np.diag([1, 1, -1, -1]))
