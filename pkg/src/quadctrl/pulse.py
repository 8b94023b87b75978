"""Time-dependent control signals and their CSV export."""

from __future__ import annotations

import json
from enum import Enum
from pathlib import Path
from typing import Callable

import numpy as np


class Provenance(str, Enum):
    BUMP = "bump_synthesis"
    MIN_EFFORT = "min_effort"
    LQR = "lqr"
    USER = "user"


class ControlPulse:
    """A control ``u(t)`` on ``[0, T]``, identically zero outside the horizon.

    Parameters
    ----------
    evaluator : callable
        Maps a 1-D array of times inside ``[0, T]`` to an ``(len(t), m)``
        array of control values.
    horizon : float
    m : int
        Number of control channels.
    """

    def __init__(self, evaluator: Callable, horizon: float, m: int,
                 provenance=Provenance.USER, derivative_order_available: int = 0,
                 metadata: dict | None = None, dtype=complex):
        self._evaluator = evaluator
        self.horizon = float(horizon)
        self.m = int(m)
        self.provenance = Provenance(provenance)
        self.derivative_order_available = derivative_order_available
        self.metadata = dict(metadata or {})
        self.dtype = np.dtype(dtype)

    def __call__(self, t):
        scalar = np.ndim(t) == 0
        ts = np.atleast_1d(np.asarray(t, float))
        out = np.zeros((ts.size, self.m), self.dtype)
        inside = (ts >= 0.0) & (ts <= self.horizon)
        if np.any(inside):
            vals = np.asarray(self._evaluator(ts[inside])).reshape(-1, self.m)
            if self.dtype.kind != "c":
                vals = vals.real
            out[inside] = vals
        return out[0] if scalar else out

    def sample(self, grid):
        return self(np.asarray(grid, float))

    @classmethod
    def from_function(cls, func, horizon, m=1, dtype=complex, **kwargs):
        """Wrap a scalar-time callable ``func(t) -> m-vector``."""

        def evaluator(ts):
            return np.array([np.atleast_1d(func(t)) for t in ts])

        return cls(evaluator, horizon, m, dtype=dtype, **kwargs)

    def energy(self, n_panels: int = 64, nodes: int = 16) -> float:
        """``int_0^T |u(t)|^2 dt`` by composite Gauss-Legendre quadrature."""
        x, w = np.polynomial.legendre.leggauss(nodes)
        edges = np.linspace(0.0, self.horizon, n_panels + 1)
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            ts = 0.5 * (b - a) * x + 0.5 * (a + b)
            vals = self(ts)
            total += 0.5 * (b - a) * np.sum(w * np.sum(np.abs(vals) ** 2, axis=1))
        return float(total)

    def to_csv(self, path, grid, metadata: dict | None = None) -> Path:
        """Write ``t, u_1_re, u_1_im, ...`` rows with a JSON metadata comment line."""
        path = Path(path)
        grid = np.asarray(grid, float)
        vals = np.asarray(self.sample(grid), complex)
        header = ["t"]
        for k in range(self.m):
            header += [f"u_{k + 1}_re", f"u_{k + 1}_im"]
        cols = [grid]
        for k in range(self.m):
            cols += [vals[:, k].real, vals[:, k].imag]
        meta = {"provenance": self.provenance.value, "horizon": self.horizon, "m": self.m}
        meta.update(self.metadata)
        meta.update(metadata or {})
        with path.open("w") as fh:
            fh.write("# " + json.dumps(meta, default=_jsonable) + "\n")
            fh.write(",".join(header) + "\n")
            np.savetxt(fh, np.column_stack(cols), delimiter=",", fmt="%.17g")
        return path


def read_pulse_csv(path):
    """Inverse of :meth:`ControlPulse.to_csv`: returns ``(metadata, t, u)``."""
    path = Path(path)
    with path.open() as fh:
        meta = json.loads(fh.readline()[2:])
        fh.readline()
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    t = data[:, 0]
    u = data[:, 1::2] + 1j * data[:, 2::2]
    return meta, t, u


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return {"re": obj.real.tolist(), "im": obj.imag.tolist()}
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if isinstance(obj, Enum):
        return obj.value
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")
