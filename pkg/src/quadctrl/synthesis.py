"""Explicit steering pulses.

Two constructions are provided:

* the bump-function construction, ``u(t) = sum_l Kbar_l d^(l-1) r / dt^(l-1)``
  with ``r(t) = mu(t) exp(A (t - T)) (g - exp(A T) x0)`` and ``Kbar`` a right
  inverse of the Kalman matrix;
* the minimum-effort pulse built from the controllability Grammian.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad, quad_vec
from scipy.linalg import expm

from .controllability import KalmanReport, analyze
from .errors import InvalidInputError, NotControllableError, NumericalFailure
from .model import Basis, LinearControlSystem
from .pulse import ControlPulse, Provenance

KBAR_RESIDUAL_TOL = 1e-9
GRAMMIAN_COND_LIMIT = 1e12


class BumpFunction:
    """Smooth weight on ``[0, T]`` with unit integral and flat endpoints.

    ``order`` is the number of derivative orders (0 .. order-1) that vanish
    at both ends.  Use :func:`polynomial_bump` or :meth:`custom`.
    """

    def __init__(self, order: int, horizon: float, normalization: float,
                 derivative: Callable[[np.ndarray, int], np.ndarray], kind: str = "polynomial",
                 max_derivative: int | None = None, check: bool = True,
                 all_derivatives: Callable[[np.ndarray, int], np.ndarray] | None = None):
        self.order = int(order)
        self.horizon = float(horizon)
        self.normalization = float(normalization)
        self.kind = kind
        self.max_derivative = max_derivative
        self._derivative = derivative
        self._all = all_derivatives
        if check:
            self.validate()

    def __call__(self, t):
        return self.derivative(t, 0)

    def derivative(self, t, k: int):
        if self.max_derivative is not None and k > self.max_derivative:
            raise InvalidInputError(
                f"bump derivative of order {k} requested, only {self.max_derivative} available"
            )
        t = np.asarray(t, float)
        inside = (t >= 0) & (t <= self.horizon)
        return np.where(inside, self._derivative(np.clip(t, 0, self.horizon), k), 0.0)

    def derivatives(self, t, kmax: int) -> np.ndarray:
        """Array of ``mu^(k)(t)`` for ``k = 0 .. kmax``, shape ``(kmax + 1, len(t))``."""
        if self.max_derivative is not None and kmax > self.max_derivative:
            raise InvalidInputError(
                f"bump derivative of order {kmax} requested, only {self.max_derivative} available"
            )
        t = np.atleast_1d(np.asarray(t, float))
        if self._all is None:
            return np.array([self.derivative(t, k) for k in range(kmax + 1)])
        inside = (t >= 0) & (t <= self.horizon)
        return np.where(inside, self._all(np.clip(t, 0, self.horizon), kmax), 0.0)

    def validate(self, tol: float = 1e-10):
        integral, _ = quad(lambda s: float(self(s)), 0.0, self.horizon,
                           epsabs=1e-13, epsrel=1e-13, limit=200)
        if abs(integral - 1.0) > tol:
            raise InvalidInputError(f"bump integrates to {integral!r}, not 1")
        for k in range(self.order):
            ends = self.derivative(np.array([0.0, self.horizon]), k)
            if np.max(np.abs(ends)) > tol:
                raise InvalidInputError(f"bump derivative {k} does not vanish at the endpoints: {ends}")

    @classmethod
    def custom(cls, derivatives: Sequence[Callable], horizon: float, order: int, check: bool = True):
        """Bump from explicit derivative callables ``[mu, mu', mu'', ...]``.

        ``check=False`` admits functions that violate the flatness or
        normalization conditions, e.g. for comparing alternative shapes.
        """
        derivs = list(derivatives)

        def derivative(t, k):
            return np.asarray(derivs[k](t), float) * np.ones_like(t)

        return cls(order, horizon, 1.0, derivative, kind="custom-sampled",
                   max_derivative=len(derivs) - 1, check=check)


def _falling(n: int, j: int) -> int:
    return math.perm(n, j) if j <= n else 0


def polynomial_bump(order: int, T: float) -> BumpFunction:
    """``mu(t) = N t^n (T - t)^n`` with ``N`` from the Beta integral.

    Derivatives use the Leibniz rule on the two factors, which keeps exact
    zeros at the endpoints (an expanded monomial form would not).
    """
    n = int(order)
    if n < 1 or T <= 0:
        raise InvalidInputError("polynomial bump needs order >= 1 and T > 0")
    # int_0^T t^n (T-t)^n dt = T^(2n+1) n! n! / (2n+1)!
    N = math.factorial(2 * n + 1) / (math.factorial(n) ** 2 * T ** (2 * n + 1))

    # Leibniz terms of d^k/dt^k [t^n (T-t)^n]: (coefficient, power of t, power of T-t)
    terms = {}

    def table(k):
        if k not in terms:
            terms[k] = [(math.comb(k, j) * _falling(n, j) * (-1) ** (k - j) * _falling(n, k - j), n - j, n - k + j)
                        for j in range(k + 1) if j <= n and k - j <= n]
        return terms[k]

    def derivative(t, k):
        return all_derivatives(np.asarray(t, float), k)[k]

    def all_derivatives(t, kmax):
        t = np.asarray(t, float)
        tp = [np.ones_like(t)]
        sp = [np.ones_like(t)]
        for _ in range(n):
            tp.append(tp[-1] * t)
            sp.append(sp[-1] * (T - t))
        out = np.zeros((kmax + 1,) + t.shape)
        for k in range(kmax + 1):
            for c, a, b in table(k):
                out[k] += c * tp[a] * sp[b]
        return N * out

    return BumpFunction(n, T, N, derivative, all_derivatives=all_derivatives)


@dataclass(frozen=True)
class KbarBlocks:
    """Blocks ``Kbar_l`` (m x d) with ``sum_l A^(l-1) C Kbar_l = I``."""

    blocks: tuple
    residual: float

    def stacked(self) -> np.ndarray:
        return np.vstack(self.blocks)


def kbar_blocks(sys: LinearControlSystem, report: KalmanReport | None = None) -> KbarBlocks:
    """Right inverse of the Kalman matrix split into per-derivative blocks.

    A single control gives a square Kalman matrix and ``Kbar = K^-1``.
    Otherwise the minimum-norm right inverse ``K^+ (K K^+)^-1`` is used.
    """
    report = report or analyze(sys)
    if not report.controllable:
        raise NotControllableError(
            f"system is not controllable (Kalman rank {report.numerical_rank} < {sys.d})", report
        )
    K = report.kalman
    Kbar = np.linalg.inv(K) if sys.m == 1 else np.linalg.pinv(K)
    residual = float(np.max(np.abs(K @ Kbar - np.eye(sys.d))))
    if residual > KBAR_RESIDUAL_TOL:
        raise NumericalFailure(
            f"Kalman right inverse residual {residual:.2e} exceeds {KBAR_RESIDUAL_TOL:g}",
            diagnosis="ill-conditioned Kalman matrix",
            singular_values=report.singular_values.tolist(),
        )
    m = sys.m
    blocks = tuple(Kbar[l * m:(l + 1) * m, :] for l in range(sys.d))
    return KbarBlocks(blocks, residual)


class AuxiliaryR:
    """``r(t) = mu(t) exp(A (t - T)) v`` with ``v = g - exp(A T) x0``.

    Derivatives follow from Leibniz:
    ``r^(k) = sum_j C(k, j) mu^(j)(t) A^(k-j) exp(A (t - T)) v``.
    """

    def __init__(self, sys: LinearControlSystem, x0, goal, T: float, mu: BumpFunction):
        self.A = np.asarray(sys.A)
        self.T = float(T)
        self.mu = mu
        x0 = np.asarray(x0)
        goal = np.asarray(goal)
        self.v = goal - expm(self.A * self.T) @ x0

    def propagated(self, t: float) -> np.ndarray:
        return expm(self.A * (t - self.T)) @ self.v

    def derivatives(self, t: float, k: int) -> np.ndarray:
        """Rows ``r(t), r'(t), ..., r^(k)(t)``."""
        w = self.propagated(t)
        Apow = [w]
        for _ in range(k):
            Apow.append(self.A @ Apow[-1])
        mus = self.mu.derivatives(t, k)[:, 0]
        rows = []
        for kk in range(k + 1):
            rows.append(sum(math.comb(kk, j) * mus[j] * Apow[kk - j] for j in range(kk + 1)))
        return np.array(rows)

    def __call__(self, t):
        return self.derivatives(t, 0)[0]


def r_function(sys, x0, goal, T, mu: BumpFunction, k: int = 0):
    """Callable ``t -> array of r and its first k derivatives``."""
    if mu.max_derivative is not None and k > mu.max_derivative:
        raise InvalidInputError(f"bump provides only {mu.max_derivative} derivatives, {k} requested")
    aux = AuxiliaryR(sys, x0, goal, T, mu)
    return lambda t: aux.derivatives(t, k)


def _pair_swap(d: int) -> np.ndarray:
    half = d // 2
    return np.r_[np.arange(half, d), np.arange(half)]


def conjugate_pair_permutation(sys: LinearControlSystem, x0, goal, tol: float = 1e-12):
    """Control permutation ``P`` with ``u = conj(u)[P]`` if the problem has one.

    The pairing holds when swapping the ``a`` and ``a^+`` halves of the state
    maps the conjugated system onto itself (``S A* S = A``, ``S C* P = C``)
    and both endpoints are conjugate pairs.  Returns ``None`` otherwise.
    """
    if sys.basis_tag is not Basis.MODE or sys.d % 2:
        return None
    S = _pair_swap(sys.d)
    A, C = np.asarray(sys.A), np.asarray(sys.C)
    x0, goal = np.asarray(x0), np.asarray(goal)
    scale = max(1.0, np.abs(A).max())
    if np.max(np.abs(A.conj()[np.ix_(S, S)] - A)) > tol * scale:
        return None
    for x in (x0, goal):
        if np.max(np.abs(x.conj()[S] - x), initial=0.0) > tol * max(1.0, np.abs(x).max(initial=0.0)):
            return None
    candidates = [_pair_swap(sys.m)] if sys.m % 2 == 0 else []
    candidates.append(np.arange(sys.m))
    for P in candidates:
        if np.max(np.abs(C.conj()[S][:, P] - C)) <= tol * max(1.0, np.abs(C).max()):
            return P
    return None


def synthesize_pulse(sys: LinearControlSystem, x0, goal, T: float,
                     mu: BumpFunction | None = None, check_order: bool = True) -> ControlPulse:
    """Pulse steering ``x0`` to ``goal`` at time ``T`` via the bump construction.

    ``mu`` defaults to the polynomial bump of order ``d``.
    """
    d = sys.d
    mu = mu or polynomial_bump(d, T)
    if check_order and mu.order < d:
        raise InvalidInputError(f"bump order {mu.order} is below the state dimension {d}")
    if abs(mu.horizon - T) > 1e-12 * max(1.0, T):
        raise InvalidInputError("bump horizon differs from the pulse horizon")
    kb = kbar_blocks(sys)
    A = np.asarray(sys.A)
    aux = AuxiliaryR(sys, x0, goal, T, mu)
    # u(t) = sum_j mu^(j)(t) P_j w(t) with P_j = sum_{l > j} C(l-1, j) Kbar_l A^(l-1-j)
    Apows = [np.eye(d)]
    for _ in range(d):
        Apows.append(A @ Apows[-1])
    P = []
    for j in range(d):
        acc = np.zeros((sys.m, d), np.result_type(A, kb.blocks[0]))
        for l in range(j + 1, d + 1):
            acc = acc + math.comb(l - 1, j) * kb.blocks[l - 1] @ Apows[l - 1 - j]
        P.append(acc)

    pairing = conjugate_pair_permutation(sys, x0, goal)

    def evaluator(ts):
        ts = np.asarray(ts, float)
        W = np.array([aux.propagated(t) for t in ts])
        out = np.zeros((ts.size, sys.m), np.result_type(W, P[0]))
        mus = mu.derivatives(ts, d - 1)
        for j in range(d):
            out += mus[j][:, None] * (W @ P[j].T)
        if pairing is not None:
            # the exact pulse satisfies u = conj(u)[pairing]; remove rounding drift
            out = 0.5 * (out + out.conj()[:, pairing])
        return out

    real = sys.is_real and not np.iscomplexobj(aux.v)
    return ControlPulse(
        evaluator, T, sys.m,
        provenance=Provenance.BUMP,
        derivative_order_available=0,
        metadata={"method": "bump", "bump_order": mu.order, "bump_kind": mu.kind},
        dtype=float if real else complex,
    )


def grammian(sys: LinearControlSystem, T: float) -> np.ndarray:
    """Controllability Grammian ``int_0^T e^(As) C C^+ e^(A^+ s) ds``.

    Read off the blocks of ``expm([[A, C C^+], [0, -A^+]] T)``: the upper
    right block times the adjoint of the upper left block.
    """
    if T <= 0:
        raise InvalidInputError("Grammian horizon must be positive")
    A = np.asarray(sys.A)
    C = np.asarray(sys.C)
    d = sys.d
    big = np.block([[A, C @ C.conj().T], [np.zeros((d, d)), -A.conj().T]])
    F = expm(big * T)
    Q = F[:d, d:] @ F[:d, :d].conj().T
    return (Q + Q.conj().T) / 2


def grammian_by_quadrature(sys: LinearControlSystem, T: float, tol: float = 1e-13) -> np.ndarray:
    """Adaptive-quadrature evaluation of the Grammian integral."""
    A = np.asarray(sys.A)
    CC = np.asarray(sys.C) @ np.asarray(sys.C).conj().T

    def integrand(s):
        E = expm(A * s)
        return E @ CC @ E.conj().T

    Q, _ = quad_vec(integrand, 0.0, T, epsabs=tol, epsrel=tol)
    return Q


def min_effort_pulse(sys: LinearControlSystem, x0, goal, T: float):
    """Minimum-energy steering pulse and its predicted cost.

    ``u(t) = -C^+ exp(A^+ (T - t)) Q_T^-1 (exp(A T) x0 - goal)`` with cost
    ``<Q_T^-1 delta, delta>``.

    Returns
    -------
    pulse : ControlPulse
    predicted_cost : float
    """
    A = np.asarray(sys.A)
    C = np.asarray(sys.C)
    Q = grammian(sys, T)
    cond = np.linalg.cond(Q)
    if not np.isfinite(cond) or cond > GRAMMIAN_COND_LIMIT:
        raise NumericalFailure(
            f"controllability Grammian is singular or ill-conditioned (cond {cond:.3e})",
            diagnosis="uncontrollable or nearly uncontrollable system",
            condition_number=float(cond),
        )
    delta = expm(A * T) @ np.asarray(x0) - np.asarray(goal)
    y = np.linalg.solve(Q, delta)
    cost = float(np.real(np.vdot(delta, y)))
    Ch = C.conj().T
    Ah = A.conj().T

    def evaluator(ts):
        return np.array([-Ch @ (expm(Ah * (T - t)) @ y) for t in ts])

    real = sys.is_real and not np.iscomplexobj(delta)
    pulse = ControlPulse(
        evaluator, T, sys.m,
        provenance=Provenance.MIN_EFFORT,
        metadata={"method": "min_effort", "predicted_cost": cost},
        dtype=float if real else complex,
    )
    return pulse, cost
