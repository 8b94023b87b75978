"""Truncated Fock-space simulation of a single driven bosonic mode.

Used to check operator-level statements that the classical first-moment
equations cannot see: a linear pulse acts on the full state as a
displacement, the two qubit-conditioned branches of a dispersive
conditional displacement, and the effect of a Kerr nonlinearity on a pulse
designed for the linear model.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln

from .errors import InvalidInputError, NumericalFailure, TruncationError
from .model import Basis, LinearControlSystem
from .pulse import ControlPulse, _jsonable

DEFAULT_DIM = 40
STEP_TOL = 1e-8
LEAKAGE_LIMIT = 1e-4
MAX_STEPS = 2 ** 20
_CHUNK = 1024


@dataclass(frozen=True)
class PropagationReport:
    steps: int
    step_difference: float
    max_leakage: float
    norm_drift: float


@dataclass
class FockState:
    """State vector in the number basis ``|0>, .., |dim-1>``."""

    amplitudes: np.ndarray
    report: PropagationReport | None = None

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, complex).reshape(-1)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def leakage(self, levels: int = 2) -> float:
        """Population of the top ``levels`` number states."""
        return float(np.sum(np.abs(self.amplitudes[-levels:]) ** 2))

    def expect(self, op) -> complex:
        return complex(np.vdot(self.amplitudes, op @ self.amplitudes))

    def fidelity(self, other: "FockState") -> float:
        """Squared overlap; global phase is irrelevant."""
        return float(min(1.0, abs(np.vdot(self.amplitudes, other.amplitudes)) ** 2))


class FockOperators:
    """Ladder, number and quadrature matrices truncated to ``dim`` levels.

    ``x = (a + a^+)/sqrt2`` and ``p = (a - a^+)/(i sqrt2)``.
    """

    def __init__(self, dim: int = DEFAULT_DIM):
        if dim < 3:
            raise InvalidInputError("Fock truncation needs at least 3 levels")
        self.dim = int(dim)
        a = np.diag(np.sqrt(np.arange(1, dim)), 1).astype(complex)
        self.a = a
        self.a_dagger = a.conj().T
        self.number = np.diag(np.arange(dim)).astype(complex)
        self.x = (a + self.a_dagger) / math.sqrt(2)
        self.p = (a - self.a_dagger) / (1j * math.sqrt(2))
        for op in (self.a, self.a_dagger, self.number, self.x, self.p):
            op.setflags(write=False)

    def kerr(self) -> np.ndarray:
        """``a^+ a^+ a a = n (n - 1)``."""
        k = np.arange(self.dim)
        return np.diag(k * (k - 1)).astype(complex)


def coherent_state(beta: complex, dim: int = DEFAULT_DIM) -> FockState:
    """``e^{-|b|^2/2} b^k / sqrt(k!)``, renormalized after truncation."""
    beta = complex(beta)
    if abs(beta) ** 2 >= dim / 4:
        warnings.warn(f"|beta|^2 = {abs(beta) ** 2:.3g} is large for dim {dim}; truncation may be inadequate",
                      stacklevel=2)
    k = np.arange(dim)
    if beta == 0:
        amps = (k == 0).astype(complex)
    else:
        logmag = k * math.log(abs(beta)) - 0.5 * gammaln(k + 1) - abs(beta) ** 2 / 2
        amps = np.exp(logmag + 1j * k * np.angle(beta))
    return FockState(amps / np.linalg.norm(amps))


def displacement_operator(beta: complex, dim: int = DEFAULT_DIM) -> np.ndarray:
    """``exp(beta a^+ - beta^* a)`` in the truncated space."""
    ops = FockOperators(dim)
    return expm(beta * ops.a_dagger - np.conj(beta) * ops.a)


def schrodinger_propagate(hamiltonian_builder: Callable[[float], np.ndarray], psi0: FockState,
                          T: float, steps: int | None = None, tol: float = STEP_TOL,
                          leakage_limit: float = LEAKAGE_LIMIT, scheme: str = "magnus4") -> FockState:
    """Piecewise exponential propagation of ``i dpsi/dt = H(t) psi``.

    ``scheme="midpoint"`` uses ``psi <- exp(-i H(t_mid) dt) psi``;
    ``scheme="magnus4"`` (default) uses the fourth-order two-point Magnus
    exponent ``dt (H1 + H2)/2 + i sqrt3 dt^2 [H1, H2]/12`` with ``H1, H2`` at
    the Gauss-Legendre nodes of each step.  Both are unitary by
    construction.  The step count is doubled (starting from ``steps``,
    default 64) until two successive results agree to ``tol`` in the
    2-norm.  The returned state carries a :class:`PropagationReport`.

    The builder may expose ``builder.batch(ts)`` returning a stack of
    Hamiltonians, which avoids per-step Python calls.

    Raises
    ------
    TruncationError
        Population in the top two levels exceeded ``leakage_limit``.
    NumericalFailure
        No convergence below ``MAX_STEPS`` steps.
    """
    if T < 0:
        raise InvalidInputError("propagation time must be nonnegative")
    if scheme not in ("midpoint", "magnus4"):
        raise InvalidInputError(f"unknown propagation scheme {scheme!r}")
    psi = psi0.amplitudes
    if T == 0:
        return FockState(psi.copy(), PropagationReport(0, 0.0, psi0.leakage(), 0.0))
    n = int(steps or 64)
    prev, prev_leak = _exponential_run(hamiltonian_builder, psi, T, n, scheme)
    while True:
        _check_leakage(prev_leak, leakage_limit)
        n *= 2
        if n > MAX_STEPS:
            raise NumericalFailure(f"propagation not converged with {n // 2} steps",
                                   diagnosis="step doubling did not converge", tol=tol)
        cur, leak = _exponential_run(hamiltonian_builder, psi, T, n, scheme)
        diff = float(np.linalg.norm(cur - prev))
        if diff < tol:
            _check_leakage(leak, leakage_limit)
            drift = abs(float(np.linalg.norm(cur)) - float(np.linalg.norm(psi)))
            return FockState(cur, PropagationReport(n, diff, leak, drift))
        prev = cur


def _check_leakage(leak, limit):
    if leak > limit:
        raise TruncationError(f"truncation leakage {leak:.3e} exceeds {limit:g}",
                              diagnosis="truncation too small; increase dim", leakage=leak)


def _hamiltonians(builder, ts):
    batch = getattr(builder, "batch", None)
    return batch(ts) if batch is not None else np.array([builder(t) for t in ts])


def _exponential_run(builder, psi, T, n, scheme):
    dt = T / n
    starts = np.arange(n) * dt
    psi = psi.copy()
    leak = float(np.sum(np.abs(psi[-2:]) ** 2))
    c = math.sqrt(3) / 6
    for first in range(0, n, _CHUNK):
        t0 = starts[first:first + _CHUNK]
        if scheme == "midpoint":
            K = dt * _hamiltonians(builder, t0 + 0.5 * dt)
        else:
            H1 = _hamiltonians(builder, t0 + (0.5 - c) * dt)
            H2 = _hamiltonians(builder, t0 + (0.5 + c) * dt)
            comm = H1 @ H2 - H2 @ H1
            K = 0.5 * dt * (H1 + H2) + (1j * math.sqrt(3) / 12 * dt ** 2) * comm
        # apply exp(-i K) to the vector by a truncated Taylor series on
        # substeps of norm <= 1/2; far cheaper than forming the exponential
        norms = np.abs(K).sum(axis=1).max(axis=1)
        subs = np.maximum(1, np.ceil(2 * norms)).astype(int)
        for k in range(K.shape[0]):
            X = (-1j / subs[k]) * K[k]
            for _ in range(subs[k]):
                term = psi
                acc = psi
                for j in range(1, 30):
                    term = (X @ term) / j
                    acc = acc + term
                    if np.abs(term).max() < 1e-17:
                        break
                psi = acc
            leak = max(leak, float(psi[-2].real ** 2 + psi[-2].imag ** 2
                                   + psi[-1].real ** 2 + psi[-1].imag ** 2))
    return psi, leak


def driven_mode_builder(ops: FockOperators, omega: float, f: Callable[[float], complex],
                        squeeze: complex = 0.0, kerr: float = 0.0):
    """Hamiltonian ``omega n + (b/2) a^+2 + (b^*/2) a^2 + i f a^+ - i f^* a + (kerr/2) a^+2 a^2``.

    With ``kerr = 0`` the mean amplitude obeys
    ``d<a>/dt = -i omega <a> - i b <a^+> + f(t)``.
    """
    a, ad = ops.a, ops.a_dagger
    H0 = omega * ops.number + 0.5 * squeeze * ad @ ad + 0.5 * np.conj(squeeze) * a @ a
    if kerr:
        H0 = H0 + 0.5 * kerr * ops.kerr()

    def build(t):
        ft = complex(f(t))
        return H0 + 1j * ft * ad - 1j * np.conj(ft) * a

    return build


def ecd_branch_builder(ops: FockOperators, chi: float, pulse: ControlPulse, sign: int):
    """Qubit-conditioned cavity Hamiltonian ``sign chi/2 n + u a^+ + u^* a``.

    Gives ``d<a>/dt = -i sign chi/2 <a> - i u``, the first-moment equations
    of the conditional displacement in their Heisenberg form.
    """
    if sign not in (1, -1):
        raise InvalidInputError("branch sign must be +1 or -1")
    H0 = sign * 0.5 * chi * ops.number

    def build(t):
        u = complex(pulse(t)[0])
        return H0 + u * ops.a_dagger + np.conj(u) * ops.a

    return build


@dataclass
class ECDResult:
    plus: FockState
    minus: FockState
    endpoints: tuple
    max_leakage: float


def ecd_two_branch_run(pulse: ControlPulse, chi: float = 3.0, T: float = 1.0,
                       dim: int = DEFAULT_DIM) -> ECDResult:
    """Propagate the vacuum under both qubit branches of the conditional displacement."""
    ops = FockOperators(dim)
    vac = coherent_state(0.0, dim)
    plus = schrodinger_propagate(ecd_branch_builder(ops, chi, pulse, +1), vac, T)
    minus = schrodinger_propagate(ecd_branch_builder(ops, chi, pulse, -1), vac, T)
    ends = (plus.expect(ops.a), minus.expect(ops.a))
    return ECDResult(plus, minus, ends, max(plus.report.max_leakage, minus.report.max_leakage))


def single_mode_system(omega: float, squeeze: complex = 0.0) -> LinearControlSystem:
    """Mode-basis system for :func:`driven_mode_builder` with ``f = u_1``.

    State ``(<a>, <a^+>)``, control ``(f, f^*)``.
    """
    A = -1j * np.array([[omega, squeeze], [-np.conj(squeeze), -omega]])
    return LinearControlSystem(A, np.eye(2), Basis.MODE)


@dataclass
class DisplacementCheck:
    fidelity: float
    shift: complex
    leakage: float
    steps: int


def displacement_theorem_check(omega: float, squeeze: complex, f: Callable[[float], complex],
                               psi0: FockState, T: float, shift: complex | None = None) -> DisplacementCheck:
    """Compare the driven evolution with ``D(shift) U_free(T) psi0``.

    ``shift`` is the classical response ``<a>(T)`` from a zero initial
    amplitude; if omitted it is computed with the classical integrator.
    """
    from .dynamics import propagate

    dim = psi0.dim
    ops = FockOperators(dim)
    if shift is None:
        sys = single_mode_system(omega, squeeze)

        def u(ts):
            vals = np.array([complex(f(t)) for t in ts])
            return np.column_stack([vals, vals.conj()])

        pulse = ControlPulse(u, T, 2)
        shift = complex(propagate(sys, pulse, np.zeros(2, complex), T, grid=[0.0, T]).final_state[0])
    driven = schrodinger_propagate(driven_mode_builder(ops, omega, f, squeeze), psi0, T)
    H0 = driven_mode_builder(ops, omega, lambda t: 0.0, squeeze)(0.0)
    free = expm(-1j * H0 * T) @ psi0.amplitudes
    target = FockState(displacement_operator(shift, dim) @ free)
    return DisplacementCheck(driven.fidelity(target), shift, driven.report.max_leakage,
                             driven.report.steps)


@dataclass
class TransportReport:
    delta: float
    q_over_r: float
    fidelity: float
    target: complex
    endpoint_a: complex
    endpoint_x: float
    endpoint_p: float
    max_leakage: float
    steps: int
    norm_drift: float
    inputs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "inputs": self.inputs,
            "delta": self.delta,
            "q_over_r": self.q_over_r,
            "fidelity": self.fidelity,
            "target_re": self.target.real,
            "target_im": self.target.imag,
            "endpoint_a_re": self.endpoint_a.real,
            "endpoint_a_im": self.endpoint_a.imag,
            "endpoint_x": self.endpoint_x,
            "endpoint_p": self.endpoint_p,
            "max_leakage": self.max_leakage,
            "steps": self.steps,
            "norm_drift": self.norm_drift,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2, default=_jsonable)
        if path is not None:
            Path(path).write_text(text)
        return text


def transport_system() -> LinearControlSystem:
    """Quadrature model of ``H = a^+ a + u (a + a^+)``: ``x' = p``, ``p' = -x - sqrt2 u``."""
    return LinearControlSystem(np.array([[0.0, 1.0], [-1.0, 0.0]]),
                               np.array([[0.0], [-math.sqrt(2)]]), Basis.QUADRATURE)


def transport_pulse(q_over_r: float, target_x: float = 2.0, target_p: float = 0.5,
                    T: float = 20.0) -> ControlPulse:
    """LQR pulse for the linear transport problem with ``Q = q I``, ``R = 1``."""
    from .lqr import LQRProblem, solve_bvp

    prob = LQRProblem(transport_system(), float(q_over_r) * np.eye(2), np.eye(1),
                      np.zeros(2), np.array([target_x, target_p]), T)
    return solve_bvp(prob).control


def transport_fidelity_experiment(delta: float, q_over_r: float, target_x: float = 2.0,
                                  target_p: float = 0.5, T: float = 20.0, dim: int = DEFAULT_DIM,
                                  pulse: ControlPulse | None = None) -> TransportReport:
    """Fidelity of a linear-model LQR transport pulse under a Kerr nonlinearity.

    The pulse is designed for ``delta = 0`` and then applied to
    ``H = a^+ a + (delta/2) a^+ a^+ a a + u(t)(a + a^+)`` starting in vacuum.
    Fidelity is ``|<alpha|psi(T)>|^2`` with
    ``alpha = (target_x + i target_p)/sqrt2``.
    """
    if dim < 40:
        raise InvalidInputError("transport experiment needs dim >= 40")
    pulse = pulse or transport_pulse(q_over_r, target_x, target_p, T)
    ops = FockOperators(dim)
    H0 = ops.number + 0.5 * delta * ops.kerr()
    X = ops.a + ops.a_dagger

    def build(t):
        return H0 + float(pulse(t)[0]) * X

    def batch(ts):
        return H0[None] + pulse.sample(ts)[:, 0, None, None] * X[None]

    build.batch = batch
    alpha = complex(target_x, target_p) / math.sqrt(2)
    psi = schrodinger_propagate(build, coherent_state(0.0, dim), T)
    a_end = psi.expect(ops.a)
    fid = psi.fidelity(coherent_state(alpha, dim))
    rep = psi.report
    return TransportReport(
        float(delta), float(q_over_r), fid, alpha, a_end,
        psi.expect(ops.x).real, psi.expect(ops.p).real,
        rep.max_leakage, rep.steps, rep.norm_drift,
        inputs={"delta": delta, "q_over_r": q_over_r, "target_x": target_x,
                "target_p": target_p, "T": T, "dim": dim},
    )
