"""Kalman rank test, controllable subspace and normal-mode diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .model import (
    LinearControlSystem,
    QuadraticHamiltonian,
    SymplecticGenerator,
    build_generator,
    control_matrix_from_mask,
)

GAP_TOL = 1e-9
OVERLAP_TOL = 1e-10
CHAIN_TOL = 1e-12


@dataclass(frozen=True)
class KalmanReport:
    kalman: np.ndarray
    singular_values: np.ndarray
    numerical_rank: int
    rank_tolerance: float
    controllable: bool
    subspace_basis: np.ndarray

    def to_dict(self) -> dict:
        K = np.asarray(self.kalman, complex)
        V = np.asarray(self.subspace_basis, complex)
        return {
            "kalman_re": K.real.tolist(),
            "kalman_im": K.imag.tolist(),
            "singular_values": self.singular_values.tolist(),
            "numerical_rank": int(self.numerical_rank),
            "rank_tolerance": float(self.rank_tolerance),
            "controllable": bool(self.controllable),
            "subspace_basis_re": V.real.tolist(),
            "subspace_basis_im": V.imag.tolist(),
        }


@dataclass(frozen=True)
class NormalModeReport:
    """Spectrum of ``eta M`` and how strongly the drive couples to each mode.

    ``overlaps[k]`` is the norm of ``w_k^+ C`` for the normalized left
    eigenvector ``w_k``.  ``diagnosis`` is one of ``controllable``,
    ``degenerate_spectrum``, ``zero_overlap``, ``both`` or
    ``non_diagonalizable``.
    """

    eigenvalues: np.ndarray
    min_eigenvalue_gap: float
    overlaps: np.ndarray
    diagnosis: str
    eigenvector_condition: float

    @property
    def controllable(self) -> bool:
        return self.diagnosis == "controllable"


def kalman_matrix(sys: LinearControlSystem) -> np.ndarray:
    """``[C, AC, A^2 C, ..., A^(d-1) C]`` built by repeated multiplication."""
    blocks = [np.asarray(sys.C)]
    for _ in range(sys.d - 1):
        blocks.append(sys.A @ blocks[-1])
    return np.hstack(blocks)


def numerical_rank(matrix, atol: float | None = None):
    """Rank from the singular values of ``matrix``.

    The default threshold is ``max(rows, cols) * eps * sigma_max``; pass
    ``atol`` to use an absolute threshold instead.

    Returns
    -------
    rank, singular_values, tolerance
    """
    matrix = np.atleast_2d(np.asarray(matrix))
    s = np.linalg.svd(matrix, compute_uv=False)
    if atol is None:
        smax = s[0] if s.size else 0.0
        tol = max(matrix.shape) * np.finfo(float).eps * smax
    else:
        tol = float(atol)
    return int(np.sum(s > tol)), s, tol


def analyze(sys: LinearControlSystem, atol: float | None = None) -> KalmanReport:
    K = kalman_matrix(sys)
    U, s, _ = np.linalg.svd(K)
    rank, _, tol = numerical_rank(K, atol)
    basis = U[:, :rank]
    if not np.iscomplexobj(K):
        basis = basis.real
    return KalmanReport(
        kalman=K,
        singular_values=s,
        numerical_rank=rank,
        rank_tolerance=tol,
        controllable=rank == sys.d,
        subspace_basis=basis,
    )


def normal_mode_analysis(gen: SymplecticGenerator, drive, gap_tol: float = GAP_TOL,
                         overlap_tol: float = OVERLAP_TOL) -> NormalModeReport:
    """Distinct-frequency and drive-overlap test on the normal modes of ``eta M``.

    ``drive`` is either the vector ``eta c`` or a 2n x m control matrix.  The
    decomposition is a general eigen-decomposition; positive definiteness
    of ``M`` is not assumed.  Eigenvalues closer than ``gap_tol`` are
    treated as one degenerate cluster, which is harmless only when the
    drive reaches every direction of the cluster independently (possible
    with several controls).
    """
    etaM = gen.eta_M
    drive = np.asarray(drive)
    Cmat = drive.reshape(-1, 1) if drive.ndim == 1 else drive
    if Cmat.shape[0] != etaM.shape[0]:
        raise InvalidInputError("drive dimension does not match the generator")
    evals, V = np.linalg.eig(etaM)
    cond = np.linalg.cond(V)
    n = evals.size
    diffs = np.abs(evals[:, None] - evals[None, :]) + np.diag(np.full(n, np.inf))
    gap = float(diffs.min()) if n > 1 else np.inf
    if not np.isfinite(cond) or cond >= 1e8:
        return NormalModeReport(evals, gap, np.zeros(n), "non_diagonalizable", float(cond))
    W = np.linalg.inv(V)  # rows are left eigenvectors
    W = W / np.linalg.norm(W, axis=1, keepdims=True)
    coupled = W @ Cmat
    overlaps = np.linalg.norm(coupled, axis=1)
    zero = bool(np.any(overlaps <= overlap_tol * np.linalg.norm(Cmat)))

    degenerate = False
    seen = np.zeros(n, bool)
    for k in range(n):
        if seen[k]:
            continue
        cluster = np.flatnonzero(np.abs(evals - evals[k]) <= gap_tol)
        seen[cluster] = True
        if cluster.size > 1:
            block = coupled[cluster]
            if np.any(overlaps[cluster] <= overlap_tol * np.linalg.norm(Cmat)):
                continue
            r, _, _ = numerical_rank(block)
            if r < cluster.size:
                degenerate = True
    diagnosis = {
        (False, False): "controllable",
        (True, False): "degenerate_spectrum",
        (False, True): "zero_overlap",
        (True, True): "both",
    }[(degenerate, zero)]
    return NormalModeReport(evals, gap, overlaps, diagnosis, float(cond))


def _is_tridiagonal(mat, tol=CHAIN_TOL):
    n = mat.shape[0]
    i, j = np.indices((n, n))
    return np.all(np.abs(mat[np.abs(i - j) > 1]) <= tol)


def chain_criterion(h: QuadraticHamiltonian, tol: float = CHAIN_TOL):
    """Nearest-neighbour chain test ``|b_ij|^2 != |g_ij|^2`` for every link.

    Returns ``(satisfied, failing_pairs)`` where pairs are 1-based ``(i, j)``
    with ``i = j + 1``.
    """
    if not (_is_tridiagonal(h.G) and _is_tridiagonal(h.B)):
        raise InvalidInputError("chain criterion needs tridiagonal G and B")
    failing = []
    for j in range(h.n_modes - 1):
        i = j + 1
        if abs(abs(h.B[i, j]) ** 2 - abs(h.G[i, j]) ** 2) <= tol:
            failing.append((i + 1, j + 1))
    return not failing, failing


def hamiltonian_normal_modes(h: QuadraticHamiltonian, **kwargs) -> NormalModeReport:
    """Normal-mode report for a Hamiltonian driven through its drive mask."""
    return normal_mode_analysis(build_generator(h), control_matrix_from_mask(h), **kwargs)
