"""Expectation-value trajectories, closed-form solutions and quadratic costs."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .errors import InvalidInputError, NumericalFailure
from .model import LinearControlSystem, SymplecticGenerator
from .pulse import ControlPulse, _jsonable

DEFAULT_RTOL = 1e-10
DEFAULT_ATOL = 1e-12
GL_NODES = 16


@dataclass
class Trajectory:
    """Sampled solution of ``dx/dt = A x + C u``.

    ``dense`` evaluates the state anywhere in ``[0, T]`` and ``knots`` are
    the breakpoints used for cost quadrature (integrator steps).
    """

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    dense: Callable | None = None
    pulse: ControlPulse | None = None
    knots: np.ndarray | None = None
    cost_integrals: dict = field(default_factory=dict)

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise InvalidInputError("trajectory times must be strictly increasing")

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def state_at(self, t):
        if self.dense is None:
            raise InvalidInputError("trajectory has no dense output")
        return self.dense(t)

    def to_csv(self, path, metadata: dict | None = None) -> Path:
        """CSV with ``t``, interleaved state re/im, then control re/im columns.

        A JSON sidecar with the same stem holds ``metadata`` and any costs.
        """
        path = Path(path)
        states = np.asarray(self.states, complex)
        controls = np.asarray(self.controls, complex)
        header = ["t"]
        cols = [self.times]
        for k in range(states.shape[1]):
            header += [f"x_{k + 1}_re", f"x_{k + 1}_im"]
            cols += [states[:, k].real, states[:, k].imag]
        for k in range(controls.shape[1]):
            header += [f"u_{k + 1}_re", f"u_{k + 1}_im"]
            cols += [controls[:, k].real, controls[:, k].imag]
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=",".join(header),
                   comments="", fmt="%.17g")
        sidecar = dict(metadata or {})
        sidecar["cost_integrals"] = self.cost_integrals
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, default=_jsonable))
        return path


def propagate(sys: LinearControlSystem, pulse: ControlPulse | None, x0, T: float,
              rtol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL, grid=None,
              method: str = "DOP853") -> Trajectory:
    """Integrate ``dx/dt = A x + C u(t)`` from ``x0`` over ``[0, T]``.

    Uses an adaptive embedded Runge-Kutta pair with dense output.  ``grid``
    selects the sample times (default: 201 uniform points); ``pulse=None``
    means free evolution.
    """
    if pulse is not None and pulse.horizon < T * (1 - 1e-12):
        raise InvalidInputError(f"pulse horizon {pulse.horizon} shorter than T={T}")
    A = np.asarray(sys.A)
    C = np.asarray(sys.C)
    x0 = np.asarray(x0)
    dtype = np.result_type(A, C, x0, float if pulse is None else pulse.dtype)
    y0 = x0.astype(dtype)
    grid = np.linspace(0.0, T, 201) if grid is None else np.asarray(grid, float)
    if grid[0] != 0.0 or abs(grid[-1] - T) > 1e-12 * max(1.0, T):
        raise InvalidInputError("grid must start at 0 and end at T")

    if pulse is None:
        def rhs(t, x):
            return A @ x
    else:
        def rhs(t, x):
            return A @ x + C @ pulse(t)

    sol = solve_ivp(rhs, (0.0, T), y0, method=method, rtol=rtol, atol=atol,
                    t_eval=grid, dense_output=True)
    if sol.status != 0:
        raise NumericalFailure(
            f"integration failed at t={sol.t[-1]:.6g}: {sol.message}",
            diagnosis="step-size collapse", t=float(sol.t[-1]),
        )
    states = sol.y.T.copy()
    states[0] = y0
    controls = np.zeros((grid.size, sys.m)) if pulse is None else pulse.sample(grid)
    dense = sol.sol

    def state_at(t):
        vals = dense(t)
        return vals.T if np.ndim(t) else vals

    return Trajectory(grid, states, controls, dense=state_at, pulse=pulse,
                      knots=np.asarray(sol.sol.ts))


def free_solution(gen, x0, t: float) -> np.ndarray:
    """``exp(A t) x0`` for a generator (``SymplecticGenerator`` or matrix)."""
    A = gen.matrix if isinstance(gen, SymplecticGenerator) else np.asarray(
        gen.A if isinstance(gen, LinearControlSystem) else gen)
    return expm(A * t) @ np.asarray(x0)


def constant_drive_solution(gen: SymplecticGenerator, x0, c_const, t: float) -> np.ndarray:
    """Closed-form mode-basis solution for a time-independent drive ``c``.

    ``x(t) = e^{-i eta M t} x0 - (eta M)^-1 (1 - e^{-i eta M t}) eta c``.
    """
    etaM = gen.eta_M
    cond = np.linalg.cond(etaM)
    if not np.isfinite(cond) or cond > 1e12:
        raise NumericalFailure(
            f"eta M is singular (cond {cond:.3e}); use propagate() or augment_affine()",
            diagnosis="singular generator", condition_number=float(cond),
        )
    E = expm(gen.matrix * t)
    eta_c = gen.eta @ np.asarray(c_const)
    return E @ np.asarray(x0) - np.linalg.solve(etaM, (np.eye(etaM.shape[0]) - E) @ eta_c)


def _check_weights(Q, R, d, m):
    Q = np.atleast_2d(np.asarray(Q, complex if np.iscomplexobj(Q) else float))
    R = np.atleast_2d(np.asarray(R, complex if np.iscomplexobj(R) else float))
    if Q.shape != (d, d) or R.shape != (m, m):
        raise InvalidInputError(f"weights must be {d}x{d} and {m}x{m}, got {Q.shape}, {R.shape}")
    if np.max(np.abs(Q - Q.conj().T)) > 1e-12 or np.max(np.abs(R - R.conj().T)) > 1e-12:
        raise InvalidInputError("Q and R must be symmetric")
    if np.linalg.eigvalsh(Q).min() < -1e-12 * max(1.0, np.abs(Q).max()):
        raise InvalidInputError("Q must be positive semidefinite")
    if np.linalg.eigvalsh(R).min() <= 0:
        raise InvalidInputError("R must be positive definite")
    return Q, R


def evaluate_cost(traj: Trajectory, Q, R, half_factor: bool = True,
                  t_range: tuple[float, float] | None = None) -> float:
    """``int f (x^+ Q x + u^+ R u) dt`` with ``f = 1/2`` if ``half_factor``.

    Composite 16-node Gauss-Legendre on each integrator step, using the
    dense state output and the exact pulse.
    """
    d = traj.states.shape[1]
    m = traj.controls.shape[1]
    Q, R = _check_weights(Q, R, d, m)
    if traj.dense is None:
        raise InvalidInputError("cost evaluation needs a trajectory with dense output")
    a, b = (traj.times[0], traj.times[-1]) if t_range is None else t_range
    knots = traj.knots if traj.knots is not None else traj.times
    edges = np.unique(np.clip(np.r_[a, knots, b], a, b))
    x, w = np.polynomial.legendre.leggauss(GL_NODES)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        ts = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        X = np.asarray(traj.dense(ts))
        U = traj.pulse.sample(ts) if traj.pulse is not None else np.zeros((ts.size, m))
        xq = np.real(np.einsum("ti,ij,tj->t", X.conj(), Q, X))
        uq = np.real(np.einsum("ti,ij,tj->t", U.conj(), R, U))
        total += 0.5 * (hi - lo) * np.sum(w * (xq + uq))
    f = 0.5 if half_factor else 1.0
    return float(f * total)
