"""Hard-endpoint linear-quadratic optimal control.

The optimality conditions

    dx/dt = A x + C u,   dlam/dt = -Q x - A^T lam,   u = -R^-1 C^T lam

form the linear system ``dz/dt = H z`` with
``H = [[A, -C R^-1 C^T], [-Q, -A^T]]`` and ``z = (x, lam)``.  With ``x(0)``
and ``x(T)`` prescribed this is a linear boundary-value problem, solved
exactly through transition matrices.  For long horizons or stiff weights
the horizon is split into segments (multiple shooting) so that no single
transition matrix is exponentially ill-conditioned; one segment is the
plain ``Phi_12 lam0 = xT - Phi_11 x0`` solve.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from .dynamics import Trajectory, evaluate_cost
from .errors import InvalidInputError, NumericalFailure, QuadCtrlError
from .model import Basis, LinearControlSystem
from .pulse import ControlPulse, Provenance

COND_LIMIT = 1e12
# largest modal growth exp(|Re lambda| dt) tolerated inside one shooting segment
SEGMENT_LOG_GROWTH = 5.0


@dataclass(frozen=True)
class LQRProblem:
    sys: LinearControlSystem
    Q: np.ndarray
    R: np.ndarray
    x0: np.ndarray
    xT: np.ndarray
    T: float

    def __post_init__(self):
        if not self.sys.is_real:
            raise InvalidInputError("LQR needs a real system; see complex_to_real_embedding")
        d, m = self.sys.d, self.sys.m
        Q = np.atleast_2d(np.asarray(self.Q, float))
        R = np.atleast_2d(np.asarray(self.R, float))
        if Q.shape == (1, 1) and d > 1:
            Q = Q[0, 0] * np.eye(d)
        if Q.shape != (d, d) or R.shape != (m, m):
            raise InvalidInputError(f"Q must be {d}x{d} and R {m}x{m}")
        if not np.allclose(Q, Q.T, atol=1e-12, rtol=0) or not np.allclose(R, R.T, atol=1e-12, rtol=0):
            raise InvalidInputError("Q and R must be symmetric")
        if np.linalg.eigvalsh(Q).min() < -1e-12 * max(1.0, np.abs(Q).max()):
            raise InvalidInputError("Q must be positive semidefinite")
        if np.linalg.eigvalsh(R).min() <= 0:
            raise InvalidInputError("R must be positive definite")
        x0 = np.asarray(self.x0, float).reshape(-1)
        xT = np.asarray(self.xT, float).reshape(-1)
        if x0.shape != (d,) or xT.shape != (d,):
            raise InvalidInputError(f"boundary states must have length {d}")
        if self.T <= 0:
            raise InvalidInputError("horizon must be positive")
        for name, val in (("Q", Q), ("R", R), ("x0", x0), ("xT", xT)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "T", float(self.T))

    @property
    def hamiltonian_matrix(self) -> np.ndarray:
        A = np.asarray(self.sys.A, float)
        C = np.asarray(self.sys.C, float)
        S = C @ np.linalg.solve(self.R, C.T)
        return np.block([[A, -S], [-self.Q, -A.T]])


@dataclass
class LQRSolution:
    lambda0: np.ndarray
    trajectory: Trajectory
    control: ControlPulse
    cost: float
    condition_number: float
    segments: int
    problem: LQRProblem
    z_path: "_PiecewiseExp"
    adjoint_scale: float = 1.0

    def adjoint_at(self, t):
        """Costate ``lam(t)`` from the transition-matrix solution."""
        return self.adjoint_scale * self.z_path(t)[..., self.problem.sys.d:]


class _PiecewiseExp:
    """Evaluates ``z(t) = exp(H (t - t_k)) z_k`` on the segment containing ``t``."""

    def __init__(self, H, nodes, z_nodes):
        self.H = H
        self.nodes = nodes
        self.z_nodes = z_nodes

    def __call__(self, t):
        ts = np.atleast_1d(np.asarray(t, float))
        k = np.clip(np.searchsorted(self.nodes, ts, side="right") - 1, 0, len(self.nodes) - 2)
        out = np.array([expm(self.H * (tt - self.nodes[kk])) @ self.z_nodes[kk]
                        for tt, kk in zip(ts, k)])
        return out if np.ndim(t) else out[0]


def _segment_count(H, T):
    rate = np.max(np.abs(np.linalg.eigvals(H).real))
    return max(1, math.ceil(rate * T / SEGMENT_LOG_GROWTH))


def solve_bvp(p: LQRProblem, segments: int | None = None, grid=None) -> LQRSolution:
    """Solve the hard two-point LQR problem by a transition-matrix linear solve.

    Parameters
    ----------
    segments : int, optional
        Number of shooting segments.  Default chooses enough segments that
        each transition matrix grows by at most about ``e^5`` along
        its fastest mode.
    grid : array_like, optional
        Sample times for the returned trajectory (default 201 points).
    """
    d = p.sys.d
    # Q, R -> Q/rho, R/rho leaves x and u unchanged and scales lam by 1/rho;
    # solving the normalized problem makes common weight scaling exact
    rho = float(np.linalg.eigvalsh(p.R).max())
    H = replace(p, Q=p.Q / rho, R=p.R / rho).hamiltonian_matrix
    N = segments or _segment_count(H, p.T)
    nodes = np.linspace(0.0, p.T, N + 1)
    Phi = expm(H * (p.T / N))
    n = 2 * d
    # unknowns z_0 .. z_N; rows: x(0)=x0, z_{k+1} - Phi z_k = 0, x(T)=xT
    M = np.zeros((n * (N + 1), n * (N + 1)))
    rhs = np.zeros(n * (N + 1))
    M[:d, :d] = np.eye(d)
    rhs[:d] = p.x0
    for k in range(N):
        r0 = d + k * n
        M[r0:r0 + n, k * n:(k + 1) * n] = -Phi
        M[r0:r0 + n, (k + 1) * n:(k + 2) * n] = np.eye(n)
    M[-d:, N * n:N * n + d] = np.eye(d)
    rhs[-d:] = p.xT
    if N == 1:
        # the classic reduction: Phi_12 lam0 = xT - Phi_11 x0
        Phi12 = Phi[:d, d:]
        cond = np.linalg.cond(Phi12)
    else:
        cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise NumericalFailure(
            f"boundary-value system is singular (cond {cond:.3e})",
            diagnosis="uncontrollable system or conjugate point", condition_number=float(cond),
        )
    Qf, Rf, piv = sla.qr(M, pivoting=True)
    y = sla.solve_triangular(Rf, Qf.T @ rhs)
    z = np.empty_like(y)
    z[piv] = y
    z_nodes = z.reshape(N + 1, n)
    # pin the boundary values exactly
    z_nodes[0, :d] = p.x0

    zfun = _PiecewiseExp(H, nodes, z_nodes)
    C = np.asarray(p.sys.C, float)
    gain = -np.linalg.solve(p.R / rho, C.T)

    def control_eval(ts):
        Z = np.atleast_2d(zfun(ts))
        return Z[:, d:] @ gain.T

    pulse = ControlPulse(control_eval, p.T, p.sys.m, provenance=Provenance.LQR,
                         metadata={"method": "lqr", "segments": N}, dtype=float)
    grid = np.linspace(0.0, p.T, 201) if grid is None else np.asarray(grid, float)
    Z = zfun(grid)
    states = Z[:, :d].copy()
    states[0] = p.x0

    def state_at(t):
        out = zfun(t)
        return out[..., :d]

    knots = np.linspace(0.0, p.T, max(64, 8 * N) + 1)
    traj = Trajectory(grid, states, pulse.sample(grid), dense=state_at, pulse=pulse, knots=knots)
    cost = evaluate_cost(traj, p.Q, p.R, half_factor=True)
    traj.cost_integrals["J_half"] = cost
    return LQRSolution(rho * z_nodes[0, d:], traj, pulse, cost, float(cond), N, p, zfun, rho)


def pontryagin_residuals(sol: LQRSolution, n_points: int = 201, rtol: float = 1e-13,
                         atol: float = 1e-14) -> dict:
    """Independent check of the optimality conditions along a solution.

    The state/adjoint pair is re-integrated with an adaptive Runge-Kutta
    scheme from the solved initial condition (segment by segment, restarting
    at the shooting nodes) and compared with the transition-matrix solution;
    the control is compared against ``-R^-1 C^T lam``.
    """
    p = sol.problem
    d = p.sys.d
    H = p.hamiltonian_matrix
    A = np.asarray(p.sys.A, float)
    C = np.asarray(p.sys.C, float)
    nodes = np.linspace(0.0, p.T, sol.segments + 1)
    worst_state = worst_adjoint = 0.0
    for a, b in zip(nodes[:-1], nodes[1:]):
        za = np.r_[sol.trajectory.state_at(a), sol.adjoint_at(a)]

        def rhs(t, z):
            x, lam = z[:d], z[d:]
            u = sol.control(t)
            return np.r_[A @ x + C @ u, -p.Q @ x - A.T @ lam]

        ts = np.linspace(a, b, max(3, n_points // sol.segments))
        ivp = solve_ivp(rhs, (a, b), za, method="DOP853", rtol=rtol, atol=atol, t_eval=ts)
        ref_x = np.atleast_2d(sol.trajectory.state_at(ts))
        ref_l = np.atleast_2d(sol.adjoint_at(ts))
        worst_state = max(worst_state, float(np.max(np.abs(ivp.y[:d].T - ref_x))))
        worst_adjoint = max(worst_adjoint, float(np.max(np.abs(ivp.y[d:].T - ref_l))))
    ts = np.linspace(0.0, p.T, n_points)
    lam = np.atleast_2d(sol.adjoint_at(ts))
    u_ref = -(lam @ C) @ np.linalg.inv(p.R).T
    worst_control = float(np.max(np.abs(sol.control(ts) - u_ref)))
    return {
        "state": worst_state,
        "adjoint": worst_adjoint,
        "control": worst_control,
        "max": max(worst_state, worst_adjoint, worst_control),
    }


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("QUADCTRL_THREADS", "1")))
    except ValueError:
        return 1


def weight_sweep(p: LQRProblem, q_values, threads: int | None = None):
    """Optimal cost as a function of the state weight ``Q = q I``.

    ``R`` is kept from the template.  Failing points are recorded as
    ``(q, nan, message)`` and the sweep continues; successful points are
    ``(q, cost, None)``.  Results follow the input order.
    """
    q_values = [float(q) for q in q_values]
    if any(q < 0 for q in q_values):
        raise InvalidInputError("state weights must be nonnegative")

    def one(q):
        try:
            sol = solve_bvp(replace(p, Q=q * np.eye(p.sys.d)))
            return (q, sol.cost, None)
        except QuadCtrlError as exc:
            return (q, float("nan"), str(exc))

    workers = threads or _threads()
    if workers == 1:
        return [one(q) for q in q_values]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, q_values))


def complex_to_real_embedding(sys: LinearControlSystem) -> LinearControlSystem:
    """Real ``2d`` system ``[[Re A, -Im A], [Im A, Re A]]`` acting on ``(Re x, Im x)``.

    The control matrix is embedded the same way, so complex controls map
    to ``(Re u, Im u)``.
    """
    A = np.asarray(sys.A, complex)
    C = np.asarray(sys.C, complex)
    Ar = np.block([[A.real, -A.imag], [A.imag, A.real]])
    Cr = np.block([[C.real, -C.imag], [C.imag, C.real]])
    return LinearControlSystem(Ar, Cr, Basis.CUSTOM)


def embed_vector(x):
    x = np.asarray(x, complex)
    return np.r_[x.real, x.imag]


def unembed_vector(y):
    y = np.asarray(y, float)
    d = y.shape[-1] // 2
    return y[..., :d] + 1j * y[..., d:]
