"""Command-line entry point: ``noisefield {validate,synthesize,simulate,sweep}``.

A run is described by one JSON document. Exit status is 0 on pass, 1 on a
domain or validation failure and 2 on usage or parse errors.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import math
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import kernels
from .channels import (
    AmplitudeDampingParams,
    AmplitudeDampingTrajectory,
    InitialPureState,
    OhmicParams,
    OhmicTrajectory,
    RecurrenceParams,
    RecurrenceTrajectory,
    ReferenceTrajectory,
    load_tabulated,
)
from .ensemble import (
    DEFAULT_NODES,
    GH_MAX_ANGLE,
    compare,
    gh_average,
    mc_average,
    se_consistency,
    write_result_csv,
    write_summary_json,
)
from .errors import DomainError, InvalidRowError, LoadError, NoiseFieldError, SingularityError, UsageError
from .integrator import DEFAULT_MAX_ANGLE, propagate_ensemble, write_state_csv
from .qubit import entropy_arrays
from .rng import standard_normals
from .synthesis import (
    DEFAULT_SIGMA_SQ_MAX,
    PathDraw,
    PhaseProcess,
    field_grid,
    sigma_squared,
    write_field_csv,
)

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
DEFAULT_GH_TOL = 1e-7
SE_K = 4.0
SE_FRACTION = 0.95

SWEEP_HEADER = ("parameter", "value", "gamma_mid", "entropy_min", "entropy_max",
                "max_deviation", "final_rho11", "passed", "error")


class ConfigError(NoiseFieldError):
    """The configuration document is malformed."""


@dataclass
class ScenarioConfig:
    raw: dict
    base_dir: Path
    channel: dict
    grid: np.ndarray
    estimator: dict
    tolerances: dict
    integrator: dict
    sigma_sq_max: float
    out_dir: Path
    synthesize: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)

    @property
    def max_angle(self) -> float:
        default = GH_MAX_ANGLE if self.estimator["kind"] == "gh" else DEFAULT_MAX_ANGLE
        return float(self.integrator.get("max_angle", default))

    @property
    def substeps(self) -> int:
        return int(self.integrator.get("substeps", 1))


def _complex(value, name):
    if isinstance(value, (int, float)):
        return complex(value)
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    raise ConfigError(f"{name}: expected a number or [re, im]")


def _require(d, key, where):
    if not isinstance(d, dict) or key not in d:
        raise ConfigError(f"missing field '{where}.{key}'")
    return d[key]


def parse_config(raw: dict, base_dir: Path, seed=None, tol=None, out=None) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    channel = _require(raw, "channel", "config")
    if not isinstance(channel, dict) or "kind" not in channel:
        raise ConfigError("missing field 'channel.kind'")
    est = dict(raw.get("estimator", {"kind": "gh", "n": DEFAULT_NODES}))
    kind = est.get("kind")
    if kind not in ("gh", "mc"):
        raise ConfigError("estimator.kind must be 'gh' or 'mc'")
    if kind == "gh":
        est.setdefault("n", DEFAULT_NODES)
    else:
        _require(est, "M", "estimator")
        est.setdefault("seed", 0)
    if seed is not None:
        est["seed"] = seed
    tols = dict(raw.get("tolerances", {}))
    if tol is not None:
        tols["compare"] = tol
        tols["validity"] = tol
    grid = None
    g = raw.get("grid")
    if g is not None:
        try:
            t_i, t_f, steps = float(g["t_i"]), float(g["t_f"]), int(g["steps"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"grid needs numeric t_i, t_f, steps ({exc})") from None
        if steps < 2 or not t_f > t_i:
            raise ConfigError("grid needs steps >= 2 and t_f > t_i")
        grid = np.linspace(t_i, t_f, steps)
    elif channel["kind"] != "tabulated":
        raise ConfigError("missing field 'config.grid'")
    synth = dict(raw.get("synthesize", {}))
    if seed is not None:
        synth["seed"] = seed
    outputs = raw.get("outputs", {})
    out_dir = Path(out) if out is not None else base_dir / outputs.get("dir", ".")
    return ScenarioConfig(
        raw=raw, base_dir=base_dir, channel=channel, grid=grid, estimator=est,
        tolerances=tols, integrator=dict(raw.get("integrator", {})),
        sigma_sq_max=float(raw.get("sigma_sq_max", DEFAULT_SIGMA_SQ_MAX)),
        out_dir=out_dir, synthesize=synth, sweep=dict(raw.get("sweep", {})),
    )


def _initial_state(raw: dict) -> InitialPureState:
    st = _require(raw, "initial_state", "config")
    alpha = _complex(_require(st, "alpha", "initial_state"), "initial_state.alpha")
    beta = _complex(_require(st, "beta", "initial_state"), "initial_state.beta")
    if st.get("normalize", False):
        return InitialPureState.normalized(alpha, beta)
    return InitialPureState(alpha, beta)


_PARAMS = {
    "recurrence": ("omega0", "N", "P", "couplings"),
    "ohmic": ("J0", "Lambda", "kBT", "omega0"),
    "amplitude-damping": ("T1", "gamma_t", "gamma_values"),
}


def build_trajectory(cfg: ScenarioConfig) -> ReferenceTrajectory:
    ch = cfg.channel
    kind = ch["kind"]
    if kind == "tabulated":
        path = cfg.base_dir / _require(ch, "file", "channel")
        traj = load_tabulated(path, tol=float(cfg.tolerances.get("load", 1e-12)))
        if "initial_matrix" in ch:
            m = ch["initial_matrix"]
            r0 = traj.initial_density
            want = (float(m["rho00"]), float(m["rho11"]), _complex(m["rho10"], "initial_matrix.rho10"))
            got = (r0.rho00, r0.rho11, r0.rho10)
            if max(abs(x - y) for x, y in zip(want, got)) > 1e-9:
                raise DomainError("initial_matrix does not match the first row of the trajectory file")
        if cfg.grid is None:
            cfg.grid = traj.t.copy()
        return traj
    if kind not in _PARAMS:
        raise ConfigError(f"unknown channel kind '{kind}'")
    unknown = set(ch) - set(_PARAMS[kind]) - {"kind"}
    if unknown:
        raise ConfigError(f"unknown {kind} parameter(s): {', '.join(sorted(unknown))}")
    params = {k: ch[k] for k in _PARAMS[kind] if k in ch}
    for k in ("couplings", "gamma_t", "gamma_values"):
        if k in params:
            params[k] = tuple(_complex(v, k) if k == "couplings" else float(v) for v in params[k])
    psi = _initial_state(cfg.raw)
    try:
        if kind == "recurrence":
            if "N" in params:
                params["N"] = int(params["N"])
            return RecurrenceTrajectory(RecurrenceParams(**params), psi)
        if kind == "ohmic":
            return OhmicTrajectory(OhmicParams(**params), psi)
        return AmplitudeDampingTrajectory(AmplitudeDampingParams(**params), psi)
    except TypeError as exc:
        raise ConfigError(f"channel parameters: {exc}") from None


# --- commands ------------------------------------------------------------------


def _validate(cfg, traj):
    tol = cfg.tolerances.get("validity")
    traj.check_domain(cfg.grid)
    return traj.validate(cfg.grid, tol=tol)


def cmd_validate(cfg: ScenarioConfig, record: dict) -> int:
    traj = build_trajectory(cfg)
    rep = _validate(cfg, traj)
    data = {"trajectory": traj.describe(), "grid_points": int(cfg.grid.size), **rep.as_dict()}
    _write_json(cfg.out_dir / "validity.json", data)
    record["summary"] = {"passed": rep.passed, "failures": rep.failures()}
    if not rep.passed:
        print(f"validate: failed checks {rep.failures()}", file=sys.stderr)
    return EXIT_PASS if rep.passed else EXIT_FAIL


def _draws(opts: dict) -> list[PathDraw]:
    if "z" in opts:
        zs = [float(v) for v in opts["z"]]
        if not zs:
            raise ConfigError("synthesize.z is empty")
        return [PathDraw(z, 1.0 / len(zs), i) for i, z in enumerate(zs)]
    n = int(opts.get("paths", 3))
    if n < 1:
        raise ConfigError("synthesize.paths must be >= 1")
    seed = int(opts.get("seed", 0))
    return [PathDraw(float(z), 1.0 / n, i) for i, z in enumerate(standard_normals(seed, 0, n))]


def cmd_synthesize(cfg: ScenarioConfig, record: dict) -> int:
    traj = build_trajectory(cfg)
    rep = _validate(cfg, traj)
    if not rep.passed:
        print(f"synthesize: trajectory invalid ({rep.failures()})", file=sys.stderr)
        return EXIT_FAIL
    opts = cfg.synthesize
    draws = _draws(opts)
    where = opts.get("field_times", "midpoints")
    if where == "midpoints":
        times = 0.5 * (cfg.grid[1:] + cfg.grid[:-1])
    elif where == "nodes":
        times = cfg.grid
    else:
        raise ConfigError("synthesize.field_times must be 'midpoints' or 'nodes'")
    proc = PhaseProcess(traj, sigma_sq_max=cfg.sigma_sq_max)
    z = np.array([d.z for d in draws])
    bx, by, bz, res = field_grid(proc, times, z)
    write_field_csv(cfg.out_dir / "fields.csv", draws, times, bx, by, bz)
    summary = {"paths": len(draws), "field_times": where, "max_bz_residue": float(np.max(np.abs(res)))}
    if opts.get("states", False):
        tr = propagate_ensemble(proc, cfg.grid, z, max_angle=cfg.max_angle, substeps=cfg.substeps)
        write_state_csv(cfg.out_dir / "states.csv", draws, cfg.grid, tr.states)
        summary["max_norm_drift"] = float(tr.norm_drift.max())
    record["summary"] = {"passed": True, **summary}
    return EXIT_PASS


def _estimate(cfg, traj):
    est = cfg.estimator
    if est["kind"] == "gh":
        return gh_average(traj, cfg.grid, n_nodes=int(est["n"]), max_angle=cfg.max_angle,
                          substeps=cfg.substeps, sigma_sq_max=cfg.sigma_sq_max)
    return mc_average(traj, cfg.grid, M=int(est["M"]), seed=int(est["seed"]), max_angle=cfg.max_angle,
                      substeps=cfg.substeps, sigma_sq_max=cfg.sigma_sq_max)


def _run_point(cfg, traj):
    """Estimate and compare; returns ``(estimate, report, summary dict)``."""
    e = _estimate(cfg, traj)
    tol = cfg.tolerances.get("compare")
    if tol is None and cfg.estimator["kind"] == "gh":
        tol = DEFAULT_GH_TOL
    rep = compare(e, traj, tol if tol is not None else math.inf)
    summary = rep.summary()
    summary["trace_error"] = e.trace_error
    summary["min_eigenvalue"] = float(e.min_eigenvalue().min())
    if e.kind == "monte-carlo":
        sc = se_consistency(e, traj, SE_K)
        summary["se_consistency"] = sc
        summary["max_se"] = float(max(e.se00.max(), e.se_re10.max(), e.se_im10.max()))
        if tol is None:
            summary["tol"] = None
            summary["passed"] = sc["fraction_within"] >= SE_FRACTION
    return e, rep, summary


def cmd_simulate(cfg: ScenarioConfig, record: dict) -> int:
    traj = build_trajectory(cfg)
    rep = _validate(cfg, traj)
    if not rep.passed:
        print(f"simulate: trajectory invalid ({rep.failures()})", file=sys.stderr)
        record["summary"] = {"passed": False, "failures": rep.failures()}
        return EXIT_FAIL
    e, _, summary = _run_point(cfg, traj)
    write_result_csv(cfg.out_dir / "result.csv", e, traj)
    _write_json(cfg.out_dir / "summary.json", summary)
    record["summary"] = summary
    return EXIT_PASS if summary["passed"] else EXIT_FAIL


def _gamma_mid(traj, grid, sigma_sq_max):
    if isinstance(traj, RecurrenceTrajectory):
        return float(traj.gamma(np.array([0.5 * traj.params.P]))[0])
    t_mid = 0.5 * (grid[0] + grid[-1])
    if isinstance(traj, OhmicTrajectory):
        return float(traj.gamma(np.array([t_mid]))[0])
    return 0.5 * sigma_squared(traj, t_mid, sigma_sq_max)


def cmd_sweep(cfg: ScenarioConfig, record: dict) -> int:
    param = cfg.sweep.get("parameter")
    values = cfg.sweep.get("values")
    if not isinstance(param, str) or not isinstance(values, list) or not values:
        raise ConfigError("sweep needs a parameter name and a non-empty list of values")
    if cfg.channel["kind"] == "tabulated" or param not in _PARAMS[cfg.channel["kind"]]:
        raise ConfigError(f"'{param}' is not a parameter of channel '{cfg.channel['kind']}'")
    rows = []
    for v in values:
        point = copy.copy(cfg)
        point.channel = dict(cfg.channel, **{param: v})
        row = dict.fromkeys(SWEEP_HEADER, "")
        row.update(parameter=param, value=v, passed=False)
        try:
            traj = build_trajectory(point)
            grid = point.grid
            r00, r11, r10 = traj.components(grid)
            ent = entropy_arrays(r00, r11, r10)
            row.update(gamma_mid=_gamma_mid(traj, grid, point.sigma_sq_max),
                       entropy_min=float(ent.min()), entropy_max=float(ent.max()),
                       final_rho11=float(r11[-1]))
            _, _, summary = _run_point(point, traj)
            row.update(max_deviation=summary["max_deviation"], passed=bool(summary["passed"]))
        except (NoiseFieldError, ValueError) as exc:
            row["error"] = f"{type(exc).__name__}: {exc}"
        rows.append(row)
    with open(cfg.out_dir / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_HEADER)
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    ok = all(r["passed"] for r in rows)
    record["summary"] = {"passed": ok, "points": len(rows), "errors": sum(1 for r in rows if r["error"])}
    return EXIT_PASS if ok else EXIT_FAIL


COMMANDS = {
    "validate": cmd_validate,
    "synthesize": cmd_synthesize,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
}


# --- plumbing ------------------------------------------------------------------


def _write_json(path, data):
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    if isinstance(o, complex):
        return [o.real, o.imag]
    raise TypeError(f"not serializable: {type(o).__name__}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="noisefield", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="scenario JSON file")
        s.add_argument("--out", help="output directory (default: config 'outputs.dir' or its folder)")
        s.add_argument("--seed", type=int, help="override the Monte Carlo / synthesis seed")
        s.add_argument("--tol", type=float, help="override the comparison and validity tolerance")
    return p


def _load_config(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_USAGE
    started = time.perf_counter()
    try:
        raw = _load_config(args.config)
        cfg = parse_config(raw, Path(args.config).resolve().parent, args.seed, args.tol, args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    record: dict = {}
    try:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        code = COMMANDS[args.command](cfg, record)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except LoadError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if not isinstance(exc, InvalidRowError):
            return EXIT_USAGE
        code = EXIT_FAIL
        record["summary"] = {"passed": False, "error": str(exc), "row": exc.row}
    except SingularityError as exc:
        print(f"error: {exc} (path {exc.path_id}, t = {exc.t})", file=sys.stderr)
        code = EXIT_FAIL
        record["summary"] = {"passed": False, "error": str(exc), "path_id": exc.path_id, "t": exc.t}
    except (NoiseFieldError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_FAIL
        record["summary"] = {"passed": False, "error": f"{type(exc).__name__}: {exc}"}
    manifest = {
        "command": args.command,
        "config": raw,
        "overrides": {"seed": args.seed, "tol": args.tol, "out": args.out},
        "version": __version__,
        "backend": kernels.backend_name(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "elapsed_s": round(time.perf_counter() - started, 6),
        "exit_code": code,
        **record,
    }
    _write_json(cfg.out_dir / f"manifest_{args.command}.json", manifest)
    return code


if __name__ == "__main__":
    sys.exit(main())
