"""Quadratic bosonic Hamiltonians and their classical linear control systems.

Conventions
-----------
State vectors in the mode basis are ordered ``(a_1 .. a_n, a_1^+ .. a_n^+)``
and in the quadrature basis ``(x_1 .. x_n, p_1 .. p_n)``.  hbar = 1 and all
frequencies are dimensionless.

The expectation values of a Hamiltonian

    H = sum_ij G_ij a_i^+ a_j + 1/2 B_ij a_i^+ a_j^+ + 1/2 B_ij^* a_j a_i
        + sum_i c_i^*(t) a_i + c_i(t) a_i^+

obey ``d<alpha>/dt = -i eta M <alpha> - i eta c(t)`` with
``M = [[G, B], [B^*, G^*]]`` and ``eta = diag(1, .., 1, -1, .., -1)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InvalidInputError

HERMITIAN_TOL = 1e-12


class Basis(str, Enum):
    MODE = "mode_basis"
    QUADRATURE = "quadrature_basis"
    CUSTOM = "custom"


def _frozen(arr, dtype=complex):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


def _as_matrix(value, name, dtype=complex):
    arr = np.atleast_2d(np.asarray(value, dtype=dtype))
    if arr.ndim != 2:
        raise InvalidInputError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class QuadraticHamiltonian:
    """Coefficient matrices of a multimode quadratic Hamiltonian plus drive mask.

    ``G`` must be Hermitian and ``B`` symmetric to within ``1e-12``; inputs
    inside that tolerance are symmetrized, anything worse is rejected.
    """

    G: np.ndarray
    B: np.ndarray = None
    drive_mask: np.ndarray = None

    def __post_init__(self):
        G = _as_matrix(self.G, "G")
        n = G.shape[0]
        B = np.zeros((n, n), complex) if self.B is None else _as_matrix(self.B, "B")
        if G.shape != (n, n) or B.shape != (n, n):
            raise InvalidInputError(
                f"G and B must both be square n x n, got {G.shape} and {B.shape}"
            )
        herm_err = np.max(np.abs(G - G.conj().T), initial=0.0)
        if herm_err > HERMITIAN_TOL:
            raise InvalidInputError(f"G is not Hermitian (max deviation {herm_err:.3e})")
        sym_err = np.max(np.abs(B - B.T), initial=0.0)
        if sym_err > HERMITIAN_TOL:
            raise InvalidInputError(f"B is not symmetric (max deviation {sym_err:.3e})")
        mask = np.zeros(n, bool) if self.drive_mask is None else np.asarray(self.drive_mask, bool)
        if mask.shape != (n,):
            raise InvalidInputError(f"drive_mask must have length {n}, got {mask.shape}")
        object.__setattr__(self, "G", _frozen((G + G.conj().T) / 2))
        object.__setattr__(self, "B", _frozen((B + B.T) / 2))
        object.__setattr__(self, "drive_mask", _frozen(mask, bool))

    @property
    def n_modes(self) -> int:
        return self.G.shape[0]

    @classmethod
    def from_driven_modes(cls, G, B=None, driven_modes=()):
        n = np.atleast_2d(G).shape[0]
        mask = np.zeros(n, bool)
        mask[list(driven_modes)] = True
        return cls(G, B, mask)

    def to_dict(self) -> dict:
        return {
            "n_modes": self.n_modes,
            "G_re": self.G.real.tolist(),
            "G_im": self.G.imag.tolist(),
            "B_re": self.B.real.tolist(),
            "B_im": self.B.imag.tolist(),
            "driven_modes": [int(i) for i in np.flatnonzero(self.drive_mask)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QuadraticHamiltonian":
        allowed = {"n_modes", "G_re", "G_im", "B_re", "B_im", "driven_modes"}
        unknown = set(data) - allowed
        if unknown:
            raise InvalidInputError(f"unknown Hamiltonian keys: {sorted(unknown)}")
        try:
            n = int(data["n_modes"])
            G = np.asarray(data["G_re"], float) + 1j * np.asarray(data.get("G_im", np.zeros((n, n))), float)
            B_re = data.get("B_re", np.zeros((n, n)))
            B = np.asarray(B_re, float) + 1j * np.asarray(data.get("B_im", np.zeros((n, n))), float)
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"malformed Hamiltonian JSON: {exc}") from exc
        if G.shape != (n, n):
            raise InvalidInputError(f"n_modes={n} inconsistent with G shape {G.shape}")
        driven = data.get("driven_modes", [])
        if any(not 0 <= int(i) < n for i in driven):
            raise InvalidInputError(f"driven_modes out of range for n_modes={n}: {driven}")
        return cls.from_driven_modes(G, B, driven)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


@dataclass(frozen=True)
class SymplecticGenerator:
    """The block matrix ``M``, the sign matrix ``eta`` and ``matrix = -i eta M``."""

    M: np.ndarray
    eta: np.ndarray
    matrix: np.ndarray

    @property
    def eta_M(self) -> np.ndarray:
        return self.eta @ self.M

    @property
    def n_modes(self) -> int:
        return self.M.shape[0] // 2


@dataclass(frozen=True)
class LinearControlSystem:
    """``dx/dt = A x + C u(t)`` with ``A`` d x d and ``C`` d x m."""

    A: np.ndarray
    C: np.ndarray
    basis_tag: Basis = Basis.CUSTOM

    def __post_init__(self):
        A = _as_matrix(self.A, "A", np.result_type(np.asarray(self.A).dtype, float))
        C = np.asarray(self.C)
        C = C.reshape(-1, 1) if C.ndim == 1 else _as_matrix(C, "C", np.result_type(C.dtype, float))
        d = A.shape[0]
        if A.shape != (d, d):
            raise InvalidInputError(f"A must be square, got {A.shape}")
        if C.shape[0] != d:
            raise InvalidInputError(f"C has {C.shape[0]} rows but A is {d} x {d}")
        object.__setattr__(self, "A", _frozen(A, A.dtype))
        object.__setattr__(self, "C", _frozen(C, C.dtype))
        object.__setattr__(self, "basis_tag", Basis(self.basis_tag))

    @property
    def d(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.C.shape[1]

    @property
    def is_real(self) -> bool:
        return not (np.iscomplexobj(self.A) and np.any(self.A.imag)) and not (
            np.iscomplexobj(self.C) and np.any(self.C.imag)
        )

    def to_dict(self) -> dict:
        out = {"A_re": self.A.real.tolist(), "C_re": self.C.real.tolist()}
        # imaginary parts are emitted only for complex dtypes so imports round-trip exactly
        if np.iscomplexobj(self.A):
            out["A_im"] = self.A.imag.tolist()
        if np.iscomplexobj(self.C):
            out["C_im"] = self.C.imag.tolist()
        out["basis_tag"] = self.basis_tag.value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "LinearControlSystem":
        allowed = {"A_re", "A_im", "C_re", "C_im", "basis_tag"}
        unknown = set(data) - allowed
        if unknown:
            raise InvalidInputError(f"unknown system keys: {sorted(unknown)}")
        try:
            A = _complex_or_real(data["A_re"], data.get("A_im"))
            C = _complex_or_real(data["C_re"], data.get("C_im"))
            basis = Basis(data.get("basis_tag", Basis.CUSTOM.value))
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidInputError(f"malformed system JSON: {exc}") from exc
        return cls(A, C, basis)


def _complex_or_real(re, im):
    re = np.asarray(re, float)
    if im is None:
        return re
    return re + 1j * np.asarray(im, float)


@dataclass(frozen=True)
class XPTransform:
    """Unitary change of basis from mode operators to quadratures."""

    n_modes: int
    u_beta_alpha: np.ndarray = field(init=False)

    def __post_init__(self):
        eye = np.eye(self.n_modes)
        U = np.block([[eye, eye], [-1j * eye, 1j * eye]]) / np.sqrt(2)
        object.__setattr__(self, "u_beta_alpha", _frozen(U))


def eta_matrix(n_modes: int) -> np.ndarray:
    return np.diag(np.r_[np.ones(n_modes), -np.ones(n_modes)])


def build_generator(h: QuadraticHamiltonian) -> SymplecticGenerator:
    """Assemble ``M``, ``eta`` and the dynamics generator ``-i eta M``."""
    M = np.block([[h.G, h.B], [h.B.conj(), h.G.conj()]])
    eta = eta_matrix(h.n_modes)
    # eta only flips signs of the lower rows, so the product is exact
    A = -1j * (eta @ M)
    return SymplecticGenerator(_frozen(M), _frozen(eta, float), _frozen(A))


def control_matrix_from_mask(h: QuadraticHamiltonian) -> np.ndarray:
    """Diagonal 2n x 2n control matrix with ones on the rows of driven modes."""
    return np.diag(np.tile(h.drive_mask, 2).astype(float))


def mode_system(h: QuadraticHamiltonian, C=None) -> LinearControlSystem:
    """Mode-basis control system ``(-i eta M, C)``; ``C`` defaults to the drive mask."""
    gen = build_generator(h)
    C = control_matrix_from_mask(h) if C is None else C
    return LinearControlSystem(gen.matrix, C, Basis.MODE)


def drive_from_control(u, n_modes: int):
    """Physical drive ``c = i eta u`` from mode-basis control values ``u = -i eta c``."""
    sign = np.r_[np.ones(n_modes), -np.ones(n_modes)]
    return 1j * sign * np.asarray(u)


def control_from_drive(c, n_modes: int):
    sign = np.r_[np.ones(n_modes), -np.ones(n_modes)]
    return -1j * sign * np.asarray(c)


def to_quadrature_basis(sys: LinearControlSystem, t: XPTransform | None = None, real: bool = False):
    """Conjugate a mode-basis system into the ``(x, p)`` basis.

    Returns ``(U A U^+, U C)``.  With ``real=True`` the result is checked to
    be real (imaginary parts below 1e-9) and returned with a real dtype.
    """
    if sys.basis_tag is not Basis.MODE:
        raise InvalidInputError(f"expected a mode_basis system, got {sys.basis_tag.value}")
    if sys.d % 2:
        raise InvalidInputError("mode-basis systems have even dimension")
    t = t or XPTransform(sys.d // 2)
    U = t.u_beta_alpha
    if U.shape[0] != sys.d:
        raise InvalidInputError("transform size does not match system dimension")
    A = U @ sys.A @ U.conj().T
    C = U @ sys.C
    if real:
        worst = max(np.max(np.abs(A.imag)), np.max(np.abs(C.imag)))
        if worst > 1e-9:
            raise InvalidInputError(f"quadrature system is not real (max imaginary part {worst:.3e})")
        A, C = A.real, C.real
    return LinearControlSystem(A, C, Basis.QUADRATURE)


def from_quadrature_basis(sys: LinearControlSystem, t: XPTransform | None = None):
    if sys.basis_tag is not Basis.QUADRATURE:
        raise InvalidInputError(f"expected a quadrature_basis system, got {sys.basis_tag.value}")
    t = t or XPTransform(sys.d // 2)
    U = t.u_beta_alpha
    return LinearControlSystem(U.conj().T @ sys.A @ U, U.conj().T @ sys.C, Basis.MODE)


def build_xp_generator(Gx, Gp, Bxp, C=None) -> LinearControlSystem:
    """Real quadrature-basis generator ``A = 2 [[B, Gp], [-Gx, -B]]``.

    The Hamiltonian is ``sum Gx_ij x_i x_j + Gp_ij p_i p_j + B_ij (x_i p_j + p_i x_j)``.
    ``C`` defaults to the identity (every quadrature independently forced).
    """
    Gx, Gp, Bxp = (np.atleast_2d(np.asarray(m, float)) for m in (Gx, Gp, Bxp))
    n = Gx.shape[0]
    for name, mat in (("Gx", Gx), ("Gp", Gp), ("B", Bxp)):
        if mat.shape != (n, n):
            raise InvalidInputError(f"{name} must be {n} x {n}, got {mat.shape}")
    for name, mat in (("Gx", Gx), ("Gp", Gp)):
        if np.max(np.abs(mat - mat.T)) > HERMITIAN_TOL:
            raise InvalidInputError(f"{name} must be symmetric")
    A = 2 * np.block([[Bxp, Gp], [-Gx, -Bxp]])
    return LinearControlSystem(A, np.eye(2 * n) if C is None else C, Basis.QUADRATURE)


def augment_affine(sys: LinearControlSystem, c, physical: bool = False) -> np.ndarray:
    """Embed a constant affine term into a ``(d+1) x (d+1)`` generator.

    With ``physical=True`` the vector is a mode-basis drive ``c`` and enters
    as ``-i eta c``; otherwise it is added to ``dx/dt`` as given.
    """
    c = np.asarray(c).reshape(-1)
    if c.shape[0] != sys.d:
        raise InvalidInputError(f"drive vector must have length {sys.d}")
    if physical:
        c = -1j * np.r_[np.ones(sys.d // 2), -np.ones(sys.d // 2)] * c
    dtype = np.result_type(sys.A.dtype, c.dtype)
    out = np.zeros((sys.d + 1, sys.d + 1), dtype)
    out[: sys.d, : sys.d] = sys.A
    out[: sys.d, sys.d] = c
    return out
