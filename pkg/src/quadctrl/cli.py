"""Command-line front end.

Every command writes its artifacts plus a ``manifest.json`` into the output
directory.  The manifest embeds the full configuration, including the
parsed input file, so ``quadctrl replay manifest.json`` reproduces a run.

Exit codes: 0 success, 2 invalid input, 3 not controllable, 4 numerical
failure.  Failures also write ``error.json``.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .controllability import analyze
from .dynamics import evaluate_cost, propagate
from .errors import InvalidInputError, NotControllableError, NumericalFailure, QuadCtrlError
from .model import LinearControlSystem, QuadraticHamiltonian, mode_system
from .pulse import ControlPulse, _jsonable

COMMANDS = ("analyze", "synthesize", "simulate", "lqr", "sweep", "scenario", "fock-verify")
METHODS = ("bump", "mineffort", "lqr")
EXIT_OK, EXIT_INVALID, EXIT_NOT_CONTROLLABLE, EXIT_NUMERICAL = 0, 2, 3, 4


@dataclass
class RunConfig:
    command: str
    output_dir: str = "quadctrl_out"
    input_path: str | None = None
    input_data: dict | None = None
    T: float | None = None
    tol: float | None = None
    grid: int = 201
    dim: int = 40
    seed: int = 0
    q: list | None = None
    r: float = 1.0
    method: str = "bump"
    name: str | None = None
    experiment: str = "ecd"
    delta: float = 0.01

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise InvalidInputError(f"unknown command {self.command!r}")
        if self.method not in METHODS:
            raise InvalidInputError(f"method must be one of {METHODS}")
        if self.grid < 2:
            raise InvalidInputError("grid needs at least 2 points")
        if self.q is not None:
            self.q = [float(v) for v in np.atleast_1d(self.q)]

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")
        if "command" not in data:
            raise InvalidInputError("config needs a command")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------- input files

_PROBLEM_KEYS = {"system", "hamiltonian", "C", "x0", "goal", "T", "Q", "R"}


def _vector(value, name):
    if isinstance(value, dict):
        if set(value) - {"re", "im"} or "re" not in value:
            raise InvalidInputError(f"{name} must be a list or {{re, im}}")
        re = np.asarray(value["re"], float)
        return re + 1j * np.asarray(value["im"], float) if "im" in value else re
    try:
        return np.asarray(value, float)
    except (TypeError, ValueError) as exc:
        raise InvalidInputError(f"{name} is not numeric: {exc}") from exc


def load_problem(data: dict):
    """Parse a problem JSON into ``(system, x0, goal, T, Q, R)``; missing parts are None."""
    if not isinstance(data, dict):
        raise InvalidInputError("input JSON must be an object")
    unknown = set(data) - _PROBLEM_KEYS
    if unknown:
        raise InvalidInputError(f"unknown input keys: {sorted(unknown)}")
    if ("system" in data) == ("hamiltonian" in data):
        raise InvalidInputError("input needs exactly one of 'system' or 'hamiltonian'")
    if "system" in data:
        sys_ = LinearControlSystem.from_dict(data["system"])
    else:
        h = QuadraticHamiltonian.from_dict(data["hamiltonian"])
        C = _vector(data["C"], "C") if "C" in data else None
        sys_ = mode_system(h, C)
    x0 = _vector(data["x0"], "x0") if "x0" in data else np.zeros(sys_.d)
    goal = _vector(data["goal"], "goal") if "goal" in data else None
    for name, v in (("x0", x0), ("goal", goal)):
        if v is not None and v.shape != (sys_.d,):
            raise InvalidInputError(f"{name} must have length {sys_.d}")
    Q = np.asarray(data["Q"], float) if "Q" in data else None
    R = np.asarray(data["R"], float) if "R" in data else None
    return sys_, x0, goal, data.get("T"), Q, R


def _read_input(cfg: RunConfig) -> dict:
    if cfg.input_data is not None:
        return cfg.input_data
    if cfg.input_path is None:
        raise InvalidInputError(f"command {cfg.command!r} needs --input")
    try:
        data = json.loads(Path(cfg.input_path).read_text())
    except OSError as exc:
        raise InvalidInputError(f"cannot read {cfg.input_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{cfg.input_path} is not valid JSON: {exc}") from exc
    cfg.input_data = data
    return data


def _horizon(cfg, T_file):
    T = cfg.T if cfg.T is not None else T_file
    if T is None or float(T) <= 0:
        raise InvalidInputError("a positive horizon T is required (--T or 'T' in the input)")
    return float(T)


def write_gp(csv_path: Path, columns: list[str], xlabel: str = "t") -> Path:
    """Gnuplot-compatible description of a CSV: one plot line per data column."""
    lines = ['set datafile separator ","', f'set xlabel "{xlabel}"', "set key autotitle columnhead"]
    plots = [f"'{csv_path.name}' using 1:{k + 2} with lines title '{c}'" for k, c in enumerate(columns[1:])]
    lines.append("plot " + ", \\\n     ".join(plots))
    gp = csv_path.with_suffix(".gp")
    gp.write_text("\n".join(lines) + "\n")
    return gp


def _write_csv(path: Path, header: list[str], cols) -> Path:
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=",".join(header), comments="", fmt="%.17g")
    write_gp(path, header)
    return path


# ---------------------------------------------------------------- commands

def _pulse_for(cfg, sys_, x0, goal, T, Q=None, R=None):
    from .lqr import LQRProblem, solve_bvp
    from .synthesis import min_effort_pulse, synthesize_pulse

    if goal is None:
        raise InvalidInputError("input needs a 'goal' state")
    if cfg.method == "bump":
        return synthesize_pulse(sys_, x0, goal, T), {}
    if cfg.method == "mineffort":
        pulse, cost = min_effort_pulse(sys_, x0, goal, T)
        return pulse, {"predicted_cost": cost}
    q = cfg.q[0] if cfg.q else 1.0
    Q = q * np.eye(sys_.d) if Q is None or cfg.q else Q
    R = cfg.r * np.eye(sys_.m) if R is None else R
    sol = solve_bvp(LQRProblem(sys_, Q, R, x0, goal, T))
    return sol.control, {"lqr_cost": sol.cost, "segments": sol.segments}


def cmd_analyze(cfg, out: Path) -> dict:
    sys_, *_ = load_problem(_read_input(cfg))
    report = analyze(sys_, atol=cfg.tol)
    (out / "kalman_report.json").write_text(json.dumps(report.to_dict(), indent=2))
    (out / "system.json").write_text(json.dumps(sys_.to_dict(), indent=2))
    res = {"numerical_rank": report.numerical_rank, "controllable": report.controllable, "d": sys_.d,
           "outputs": ["kalman_report.json", "system.json"]}
    if "hamiltonian" in cfg.input_data:
        from .controllability import hamiltonian_normal_modes

        h = QuadraticHamiltonian.from_dict(cfg.input_data["hamiltonian"])
        nm = hamiltonian_normal_modes(h)
        res["normal_modes"] = {"diagnosis": nm.diagnosis, "min_eigenvalue_gap": nm.min_eigenvalue_gap,
                               "overlaps": nm.overlaps}
    return res


def cmd_synthesize(cfg, out: Path) -> dict:
    sys_, x0, goal, T_file, Q, R = load_problem(_read_input(cfg))
    T = _horizon(cfg, T_file)
    report = analyze(sys_, atol=cfg.tol)
    if not report.controllable:
        raise NotControllableError(f"Kalman rank {report.numerical_rank} < {sys_.d}", report)
    pulse, extra = _pulse_for(cfg, sys_, x0, goal, T, Q, R)
    grid = np.linspace(0.0, T, cfg.grid)
    pulse.to_csv(out / "pulse.csv", grid)
    header = ["t"] + [f"u_{k + 1}_{part}" for k in range(sys_.m) for part in ("re", "im")]
    write_gp(out / "pulse.csv", header)
    traj = propagate(sys_, pulse, x0, T)
    err = float(np.max(np.abs(traj.final_state - goal)))
    return {"method": cfg.method, "energy": pulse.energy(), "endpoint_error": err, **extra,
            "outputs": ["pulse.csv", "pulse.gp"]}


def cmd_simulate(cfg, out: Path) -> dict:
    sys_, x0, goal, T_file, Q, R = load_problem(_read_input(cfg))
    T = _horizon(cfg, T_file)
    pulse = None
    extra = {}
    if goal is not None:
        pulse, extra = _pulse_for(cfg, sys_, x0, goal, T, Q, R)
    kw = {} if cfg.tol is None else {"rtol": cfg.tol, "atol": cfg.tol * 1e-2}
    traj = propagate(sys_, pulse, x0, T, grid=np.linspace(0.0, T, cfg.grid), **kw)
    Qc = np.eye(sys_.d) if Q is None else Q
    Rc = np.eye(sys_.m) if R is None else R
    traj.cost_integrals["J_half"] = evaluate_cost(traj, Qc, Rc, half_factor=True)
    traj.to_csv(out / "trajectory.csv", metadata={"config": cfg.to_dict()})
    header = ["t"] + [f"x_{k + 1}_{p}" for k in range(sys_.d) for p in ("re", "im")] \
        + [f"u_{k + 1}_{p}" for k in range(sys_.m) for p in ("re", "im")]
    write_gp(out / "trajectory.csv", header)
    res = {"final_state": traj.final_state, "cost_integrals": traj.cost_integrals, **extra,
           "outputs": ["trajectory.csv", "trajectory.json", "trajectory.gp"]}
    if goal is not None:
        res["endpoint_error"] = float(np.max(np.abs(traj.final_state - goal)))
    return res


def cmd_lqr(cfg, out: Path) -> dict:
    from .lqr import LQRProblem, pontryagin_residuals, solve_bvp

    sys_, x0, goal, T_file, Q, R = load_problem(_read_input(cfg))
    T = _horizon(cfg, T_file)
    if goal is None:
        raise InvalidInputError("LQR input needs a 'goal' state")
    Q = (cfg.q[0] if cfg.q else 1.0) * np.eye(sys_.d) if Q is None or cfg.q else Q
    R = cfg.r * np.eye(sys_.m) if R is None else R
    sol = solve_bvp(LQRProblem(sys_, Q, R, x0, goal, T), grid=np.linspace(0.0, T, cfg.grid))
    sol.trajectory.to_csv(out / "lqr_trajectory.csv", metadata={"cost": sol.cost})
    header = ["t"] + [f"x_{k + 1}_{p}" for k in range(sys_.d) for p in ("re", "im")] \
        + [f"u_{k + 1}_{p}" for k in range(sys_.m) for p in ("re", "im")]
    write_gp(out / "lqr_trajectory.csv", header)
    return {"cost": sol.cost, "lambda0": sol.lambda0, "condition_number": sol.condition_number,
            "segments": sol.segments, "final_state": sol.trajectory.final_state,
            "pontryagin_residuals": pontryagin_residuals(sol),
            "outputs": ["lqr_trajectory.csv", "lqr_trajectory.json", "lqr_trajectory.gp"]}


def cmd_sweep(cfg, out: Path) -> dict:
    from .lqr import LQRProblem, weight_sweep

    sys_, x0, goal, T_file, _, R = load_problem(_read_input(cfg))
    T = _horizon(cfg, T_file)
    if goal is None:
        raise InvalidInputError("sweep input needs a 'goal' state")
    qs = cfg.q or list(np.logspace(-6, 3, 10))
    R = cfg.r * np.eye(sys_.m) if R is None else R
    rows = weight_sweep(LQRProblem(sys_, np.eye(sys_.d), R, x0, goal, T), qs)
    _write_csv(out / "sweep.csv", ["q", "cost"], [[r[0] for r in rows], [r[1] for r in rows]])
    return {"points": [{"q": q, "cost": c, "error": e} for q, c, e in rows],
            "outputs": ["sweep.csv", "sweep.gp"]}


def cmd_scenario(cfg, out: Path) -> dict:
    from . import scenarios

    name = cfg.name or "list"
    if name == "list":
        cat = scenarios.catalog()
        (out / "catalog.json").write_text(json.dumps(cat, indent=2))
        return {"scenarios": [c["name"] for c in cat], "outputs": ["catalog.json"]}
    if name not in scenarios.SCENARIOS:
        raise InvalidInputError(f"unknown scenario {name!r}; choose from {sorted(scenarios.SCENARIOS)}")
    sc = scenarios.SCENARIOS[name]()
    if cfg.T is not None:
        sc.T = float(cfg.T)
    (out / f"{name}_scenario.json").write_text(sc.to_json())
    outputs = [f"{name}_scenario.json"]
    grid = np.linspace(0.0, sc.T, cfg.grid)
    res = {}
    if name == "ecd":
        outputs += _scenario_ecd(sc, grid, out)
    elif name == "wavepacket":
        outputs += _scenario_wavepacket(sc, grid, out, res)
    elif name == "two_mode_chain":
        outputs += _scenario_two_mode(sc, grid, out, res, cfg)
    checks = scenarios.check_expected(sc)
    res["expected_values"] = checks
    res["all_passed"] = all(c["passed"] for c in checks)
    res["outputs"] = outputs
    return res


def _scenario_ecd(sc, grid, out):
    from .model import XPTransform
    from .synthesis import synthesize_pulse

    pulse = synthesize_pulse(sc.system, sc.x0, sc.goal, sc.T)
    u = pulse.sample(grid)[:, 0]
    cols = [grid, u.real, u.imag]
    header = ["t", "u_re", "u_im"]
    if sc.golden_pulse is not None:
        cols.append(sc.golden_pulse(grid))
        header.append("u_closed_form")
    _write_csv(out / "ecd_pulse.csv", header, cols)
    traj = propagate(sc.system, pulse, sc.x0, sc.T, grid=grid)
    a = traj.states
    # cavity quadratures <x> = sqrt2 Re<a>, <p> = sqrt2 Im<a> in each qubit branch
    _write_csv(out / "ecd_quadratures.csv", ["t", "x_plus", "p_plus", "x_minus", "p_minus"],
               [grid, np.sqrt(2) * a[:, 0].real, np.sqrt(2) * a[:, 0].imag,
                np.sqrt(2) * a[:, 1].real, np.sqrt(2) * a[:, 1].imag])
    return ["ecd_pulse.csv", "ecd_pulse.gp", "ecd_quadratures.csv", "ecd_quadratures.gp"]


def _scenario_wavepacket(sc, grid, out, res):
    from .synthesis import min_effort_pulse, synthesize_pulse

    bump = synthesize_pulse(sc.system, sc.x0, sc.goal, sc.T)
    opt, cost = min_effort_pulse(sc.system, sc.x0, sc.goal, sc.T)
    _write_csv(out / "wavepacket_pulses.csv", ["t", "u_bump", "u_min_effort"],
               [grid, bump.sample(grid)[:, 1].real, opt.sample(grid)[:, 1].real])
    res["bump_cost"] = bump.energy()
    res["min_effort_cost"] = cost
    return ["wavepacket_pulses.csv", "wavepacket_pulses.gp"]


def _scenario_two_mode(sc, grid, out, res, cfg):
    from .lqr import LQRProblem, solve_bvp, weight_sweep

    prob = LQRProblem(sc.system, sc.params["q"] * np.eye(4), sc.params["r"] * np.eye(1), sc.x0, sc.goal, sc.T)
    sol = solve_bvp(prob, grid=grid)
    x = sol.trajectory.states
    _write_csv(out / "two_mode_lqr.csv", ["t", "x1", "x2", "p1", "p2", "u"],
               [grid, *x.T, sol.trajectory.controls[:, 0]])
    qs = cfg.q or list(np.logspace(-3, 3, 13))
    rows = weight_sweep(prob, qs)
    _write_csv(out / "two_mode_sweep.csv", ["q", "cost"], [[r[0] for r in rows], [r[1] for r in rows]])
    res["lqr_cost"] = sol.cost
    res["sweep"] = [{"q": q, "cost": c, "error": e} for q, c, e in rows]
    return ["two_mode_lqr.csv", "two_mode_lqr.gp", "two_mode_sweep.csv", "two_mode_sweep.gp"]


def cmd_fock_verify(cfg, out: Path) -> dict:
    from . import fock

    if cfg.experiment == "ecd":
        from .scenarios import ecd_scenario
        from .synthesis import synthesize_pulse

        sc = ecd_scenario()
        pulse = synthesize_pulse(sc.system, sc.x0, sc.goal, sc.T)
        run = fock.ecd_two_branch_run(pulse, chi=sc.params["chi"], T=sc.T, dim=cfg.dim)
        res = {"endpoints": list(run.endpoints), "max_leakage": run.max_leakage,
               "steps": [run.plus.report.steps, run.minus.report.steps]}
    elif cfg.experiment == "transport":
        reps = []
        for q in cfg.q or [1e-3, 1.0, 1e3]:
            rep = fock.transport_fidelity_experiment(cfg.delta, q, T=cfg.T or 20.0, dim=cfg.dim)
            reps.append(rep.to_dict())
        _write_csv(out / "transport_fidelity.csv", ["q_over_r", "fidelity"],
                   [[r["q_over_r"] for r in reps], [r["fidelity"] for r in reps]])
        res = {"runs": reps, "outputs": ["transport_fidelity.csv", "transport_fidelity.gp"]}
    elif cfg.experiment == "displacement":
        rng = np.random.default_rng(cfg.seed)
        runs = []
        for _ in range(5):
            omega = rng.uniform(0.5, 2.0)
            squeeze = rng.uniform(0.0, 0.3) * omega * np.exp(2j * np.pi * rng.uniform())
            amp, w = rng.uniform(0.3, 1.0), rng.uniform(0.5, 3.0)
            psi0 = fock.coherent_state(complex(*rng.uniform(-0.5, 0.5, 2)), cfg.dim)
            chk = fock.displacement_theorem_check(omega, squeeze, lambda t, a=amp, w=w: a * np.exp(-1j * w * t),
                                                  psi0, cfg.T or 1.0)
            runs.append({"omega": omega, "squeeze": squeeze, "fidelity": chk.fidelity,
                         "shift": chk.shift, "leakage": chk.leakage, "steps": chk.steps})
        res = {"runs": runs, "min_fidelity": min(r["fidelity"] for r in runs)}
    else:
        raise InvalidInputError(f"unknown fock experiment {cfg.experiment!r}")
    (out / f"fock_{cfg.experiment}.json").write_text(json.dumps(res, indent=2, default=_jsonable))
    res.setdefault("outputs", [])
    res["outputs"].append(f"fock_{cfg.experiment}.json")
    return res


_HANDLERS = {
    "analyze": cmd_analyze,
    "synthesize": cmd_synthesize,
    "simulate": cmd_simulate,
    "lqr": cmd_lqr,
    "sweep": cmd_sweep,
    "scenario": cmd_scenario,
    "fock-verify": cmd_fock_verify,
}


# ---------------------------------------------------------------- driver

def _versions() -> dict:
    return {"quadctrl": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def _prepare_output(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InvalidInputError(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise InvalidInputError(f"output directory {out} is not writable")
    return out


def run(cfg: RunConfig) -> int:
    """Execute one command; returns the process exit status."""
    np.random.seed(cfg.seed)
    out = _prepare_output(cfg.output_dir)
    start = time.perf_counter()
    manifest = {"config": cfg.to_dict(), "versions": _versions()}
    try:
        results = _HANDLERS[cfg.command](cfg, out)
        code, status = EXIT_OK, "success"
    except QuadCtrlError as exc:
        code = (EXIT_NOT_CONTROLLABLE if isinstance(exc, NotControllableError)
                else EXIT_NUMERICAL if isinstance(exc, NumericalFailure) else EXIT_INVALID)
        status = "error"
        err = {"exit_code": code, "error_type": type(exc).__name__, "message": str(exc)}
        if isinstance(exc, NumericalFailure):
            err["diagnosis"] = exc.diagnosis
            err["details"] = exc.details
        if isinstance(exc, NotControllableError) and exc.report is not None:
            err["kalman_report"] = exc.report.to_dict()
        (out / "error.json").write_text(json.dumps(err, indent=2, default=_jsonable))
        print(json.dumps(err, default=_jsonable), file=sys.stderr)
        results = {"error": err}
    manifest["config"] = cfg.to_dict()  # now includes the parsed input
    manifest.update({"status": status, "exit_code": code,
                     "timings": {"wall_seconds": time.perf_counter() - start}, "results": results})
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_jsonable))
    return code


def replay(manifest_path, output_dir=None) -> int:
    """Re-run the command recorded in a manifest."""
    data = json.loads(Path(manifest_path).read_text())
    cfg = data["config"]
    if output_dir is not None:
        cfg = {**cfg, "output_dir": str(output_dir)}
    return run(RunConfig.from_dict(cfg))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quadctrl", description="Controllability, pulse synthesis and "
                                     "optimal control for quadratic bosonic Hamiltonians.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--input", dest="input_path", help="problem JSON (system or hamiltonian, x0, goal, T)")
        p.add_argument("--out", dest="output_dir", default="quadctrl_out", help="output directory")
        p.add_argument("--T", type=float, help="horizon, overrides the input file")
        p.add_argument("--tol", type=float, help="rank threshold (analyze) or integrator rtol (simulate)")
        p.add_argument("--grid", type=int, default=201, help="number of output samples")
        p.add_argument("--dim", type=int, default=40, help="Fock truncation dimension")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--q", type=float, nargs="+", help="state weight(s); several values for sweep")
        p.add_argument("--r", type=float, default=1.0, help="control weight")
        p.add_argument("--method", choices=METHODS, default="bump")
        return p

    for name in ("analyze", "synthesize", "simulate", "lqr", "sweep"):
        common(sub.add_parser(name))
    sc = common(sub.add_parser("scenario", help="run a preset; 'list' writes the catalog"))
    sc.add_argument("name", nargs="?", default="list")
    fv = common(sub.add_parser("fock-verify", help="quantum checks in a truncated Fock space"))
    fv.add_argument("--experiment", choices=("ecd", "transport", "displacement"), default="ecd")
    fv.add_argument("--delta", type=float, default=0.01, help="Kerr strength for the transport experiment")
    rp = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    rp.add_argument("manifest")
    rp.add_argument("--out", dest="output_dir")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "replay":
        try:
            return replay(args.manifest, args.output_dir)
        except (OSError, json.JSONDecodeError, KeyError, QuadCtrlError) as exc:
            print(json.dumps({"exit_code": EXIT_INVALID, "message": str(exc)}), file=sys.stderr)
            return EXIT_INVALID
    opts = {k: v for k, v in vars(args).items() if v is not None}
    try:
        cfg = RunConfig.from_dict(opts)
    except InvalidInputError as exc:
        print(json.dumps({"exit_code": EXIT_INVALID, "message": str(exc)}), file=sys.stderr)
        return EXIT_INVALID
    try:
        return run(cfg)
    except InvalidInputError as exc:
        print(json.dumps({"exit_code": EXIT_INVALID, "message": str(exc)}), file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
