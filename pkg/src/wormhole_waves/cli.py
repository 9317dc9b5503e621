"""Batch front door: ``wormhole-waves <command> [flags]``.

Each run is described by a flat config (TOML or JSON file, overridden by
flags).  Artifacts go to ``--output`` or ``$WORMHOLE_OUTPUT_ROOT/<command>-<hash>``
and are written only after the computation succeeds.  Exit codes: 0 success,
2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    certify_exterior_estimate, envelope_slopes, exterior_coefficients, projection_constants,
    random_exterior_datum, resolution_diagnostic, tail_datum,
)
from .errors import (
    BlowupError, BracketFailure, DomainError, DomainTooSmall, FormMismatch, GridMismatch,
    IntegrationFailure, InvalidArgument, RejectedStep, TailTooShort, WormholeError,
)
from .evolve import CFL_MAX, FlowKind, FlowSpec, Monitors, evolve, self_convergence
from .harmonic import CONV_TOL, MARGIN, solve_Q
from .io import config_hash, write_harmonic, write_json, write_state, write_table
from .model import FieldState, Form, ModelParams, make_grid

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
OUTPUT_ENV = "WORMHOLE_OUTPUT_ROOT"
COMMANDS = ("harmonic", "evolve", "resolve", "exterior", "certify", "converge")

COMMON = {"command": None, "ell": 1, "n": 1, "grid_x": 10.0, "grid_n": 4097, "cfl": CFL_MAX,
          "T": 50.0, "output": None, "seed": 0}
BUMP = {"amplitude": 0.1, "center": 2.0, "width": 1.0}
PER_COMMAND = {
    "harmonic": {"grid_x": 12.0, "grid_n": 2401, "tol_b": 1e-12, "x_end": 12.0, "dx_ode": 1e-3},
    "evolve": {"flow": "psi", **BUMP, "flat_dim": None, "inner_radius": None, "cadence": 1.0,
               "snapshot_every": None, "state_format": "csv", "balanced": False},
    "resolve": {"T": 60.0, "amplitude": 0.5, "center": 1.0, "width": 1.0, "cadence": 1.0,
                "extraction_times": [10.0, 20.0, 40.0], "A": 5.0, "radiation": "linear"},
    "exterior": {"grid_x": 12.0, "grid_n": 2401, "r_lo": 20.0},
    "certify": {"grid_n": 2049, "grid_x": None, "T": 20.0, "dim": None, "R": 1.0,
                "samples": 10, "datum": "random", "tol_cert": 0.05},
    "converge": {"grid_n": 513, "T": 5.0, "cfl": 0.5, "flow": "psi", **BUMP,
                 "flat_dim": None, "inner_radius": None},
}

_VALIDATION = (InvalidArgument, FormMismatch, GridMismatch, DomainError, DomainTooSmall,
               RejectedStep)
_NUMERICAL = (IntegrationFailure, BracketFailure, TailTooShort, BlowupError)


class ConfigError(InvalidArgument):
    pass


# -- config --------------------------------------------------------------------------------


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    text = path.read_bytes()
    if path.suffix == ".json":
        return json.loads(text)
    import tomli

    try:
        return tomli.loads(text.decode())
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def resolve_config(command: str, *layers: dict) -> dict:
    """Defaults for ``command`` overlaid by ``layers``; unknown keys are rejected."""
    if command not in PER_COMMAND:
        raise ConfigError(f"unknown command {command!r}")
    cfg = {**COMMON, **PER_COMMAND[command]}
    for layer in layers:
        for key, val in layer.items():
            key = key.replace("-", "_")
            if key not in cfg:
                raise ConfigError(f"unknown config key {key!r} for command {command}")
            if key == "command" and val not in (None, command):
                raise ConfigError(f"config is for {val!r}, not {command!r}")
            cfg[key] = val
    cfg["command"] = command
    _validate(cfg)
    return cfg


def _validate(cfg):
    """Cheap checks that need no computation."""
    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    for key in ("ell", "n", "grid_n", "seed"):
        need(isinstance(cfg[key], int) and not isinstance(cfg[key], bool),
             f"{key} must be an integer")
    ModelParams(cfg["ell"], cfg["n"])
    if cfg["grid_x"] is not None:
        need(cfg["grid_x"] > 0, "grid_x must be positive")
    need(cfg["grid_n"] % 2 == 1 and cfg["grid_n"] >= 33, "grid_n must be odd and >= 33")
    need(0 < cfg["cfl"] <= CFL_MAX, f"cfl must lie in (0, {CFL_MAX}]")
    need(cfg["T"] > 0, "T must be positive")
    if "flow" in cfg:
        need(cfg["flow"] in [k.value for k in FlowKind], f"unknown flow {cfg['flow']!r}")
    if cfg["command"] == "evolve":
        need(cfg["state_format"] in ("csv", "binary"), "state_format must be csv or binary")
    if cfg["command"] == "resolve":
        need(cfg["radiation"] in ("linear", "free"), "radiation must be linear or free")
        need(max(cfg["extraction_times"]) < cfg["T"], "extraction times must precede T")
    if cfg["command"] == "certify":
        need(cfg["datum"] in ("random", "tail"), "datum must be random or tail")
        need(cfg["R"] > 0 and cfg["samples"] >= 0, "R must be positive, samples >= 0")


def output_dir(cfg) -> Path:
    if cfg["output"]:
        return Path(cfg["output"])
    root = Path(os.environ.get(OUTPUT_ENV, "runs"))
    return root / f"{cfg['command']}-{config_hash(cfg)}"


def _versions():
    import numba
    import scipy

    return {"wormhole_waves": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "numba": numba.__version__, "python": platform.python_version()}


# -- commands ------------------------------------------------------------------------------


@dataclass
class Artifact:
    """Deferred file write, so failed runs leave nothing behind."""

    name: str
    write: object


def _params_grid(cfg):
    return ModelParams(cfg["ell"], cfg["n"]), make_grid(cfg["grid_x"], cfg["grid_n"])


def _bump(cfg, r):
    return cfg["amplitude"] * np.exp(-(((r - cfg["center"]) / cfg["width"]) ** 2))


def _flow_and_data(cfg, params, grid):
    kind = FlowKind(cfg["flow"])
    r = grid.r
    zero = np.zeros_like(r)
    if kind in (FlowKind.PSI, FlowKind.U, FlowKind.LINEAR):
        Q = solve_Q(params, grid)
        flow = FlowSpec(kind, params, Q, balanced=bool(cfg.get("balanced", False)))
        if kind is FlowKind.PSI:
            return flow, FieldState(Q.Q + _bump(cfg, r), zero, 0.0, Form.PSI, params, grid)
        form = Form.U if kind is FlowKind.U else Form.LINEAR
        return flow, FieldState(_bump(cfg, r), zero, 0.0, form, params, grid)
    if kind is FlowKind.FREE:
        return FlowSpec(kind, params), FieldState(_bump(cfg, r), zero, 0.0, Form.U, params, grid)
    r_in = cfg["inner_radius"]
    flow = FlowSpec(kind, params, flat_dim=cfg["flat_dim"], inner_radius=r_in)
    f = _bump(cfg, np.abs(r)) if r_in is None else np.where(r > r_in, _bump(cfg, r), 0.0)
    return flow, FieldState(f, zero, 0.0, Form.FLAT, params, grid)


def cmd_harmonic(cfg):
    params, grid = _params_grid(cfg)
    Q = solve_Q(params, grid, tol_b=cfg["tol_b"], x_end=cfg["x_end"], dx_ode=cfg["dx_ode"])
    anti = float(np.max(np.abs(Q.Q + Q.Q[::-1] - params.degree * math.pi)))
    inner = Q.Qx[1:-1]
    results = {"b_star": Q.b_star, "alpha": Q.alpha, "alpha_drift": Q.alpha_drift,
               "antisymmetry_residual": anti, "min_dQdx": float(inner.min()),
               "match_residual": Q.match_residual}
    arts = [Artifact("harmonic.csv", lambda d: write_harmonic(d, Q))]
    return results, arts, {"margin": MARGIN, "conv_tol": CONV_TOL, "tol_b": cfg["tol_b"]}


def cmd_evolve(cfg):
    params, grid = _params_grid(cfg)
    flow, state = _flow_and_data(cfg, params, grid)
    T, cad = cfg["T"], cfg["cadence"]
    every = cfg["snapshot_every"]
    snaps = tuple(every * k for k in range(1, int(round(T / every)) + 1)) if every else ()
    log = evolve(flow, state, T, Monitors(cadence=cad, snapshot_times=snaps), cfl=cfg["cfl"])
    man = log.manifest()
    man.pop("wall_time", None)
    results = {**man, "final_time": log.final.time}
    if flow.kind is FlowKind.PSI and cfg["amplitude"] == 0:
        results["sup_drift"] = float(np.max(np.abs(log.final.f - state.f)))
    fmt = cfg["state_format"]
    ext = "csv" if fmt == "csv" else "bin"
    arts = [
        Artifact("energy.csv", lambda d: write_table(
            d / "energy.csv", ["t", "energy", "kinetic", "gradient", "potential", "flux"],
            log.energy_rows())),
        Artifact(f"final.{ext}", lambda d: write_state(d / f"final.{ext}", log.final, fmt)),
    ]
    for s in log.snapshots:
        name = f"state_t{s.time:g}.{ext}"
        arts.append(Artifact(name, lambda d, s=s, name=name: write_state(d / name, s, fmt)))
    return results, arts, {"cfl": cfg["cfl"], "pinned_nodes": 2}


def cmd_resolve(cfg):
    params, grid = _params_grid(cfg)
    Q = solve_Q(params, grid)
    r = grid.r
    state = FieldState(Q.Q + _bump(cfg, r), np.zeros_like(r), 0.0, Form.PSI, params, grid)
    T, cad = cfg["T"], cfg["cadence"]
    times = tuple(cad * k for k in range(int(round(T / cad)) + 1))
    log = evolve(FlowSpec(FlowKind.PSI, params, Q), state, T,
                 Monitors(cadence=cad, snapshot_times=times), cfl=cfg["cfl"])
    rep = resolution_diagnostic(log, Q, cfg["extraction_times"], cfg["A"], cfg["radiation"])
    sups = rep.sup_delta()
    ordered = [sups[t] for t in rep.extraction_times]
    le = rep.local_energy_series
    k = int(np.argmin(np.abs(rep.local_times - max(rep.extraction_times))))
    results = {
        "sup_delta": {f"{t:g}": v for t, v in sups.items()},
        "monotone": all(b <= a for a, b in zip(ordered, ordered[1:])),
        "local_energy_decay": float(le.max() / le[k]) if le[k] > 0 else math.inf,
        "energy_drift": log.relative_drift(),
    }
    arts = [Artifact("resolution.csv", lambda d: write_table(
        d / "resolution.csv", ["T_m", "t", "delta", "local_energy"], rep.rows()))]
    return results, arts, {"A": cfg["A"], "radiation": cfg["radiation"]}


def cmd_exterior(cfg):
    params, grid = _params_grid(cfg)
    Q = solve_Q(params, grid)
    ext = exterior_coefficients(params, Q)
    slopes = envelope_slopes(Q, r_lo=cfg["r_lo"])
    info = projection_constants(params.dim)
    results = {
        "slopes": {k: {"fitted": v[0], "stated": v[1]} for k, v in slopes.items()},
        "max_slope_error": max(abs(v[0] - v[1]) for v in slopes.values()),
        "d": info.d, "k_tilde": info.k_tilde, "k": info.k,
        "c": [str(v) for v in info.c], "d_coef": [str(v) for v in info.d_coef],
    }
    arts = [Artifact("exterior.csv", lambda d: write_table(
        d / "exterior.csv", ["r", "V", "V_e"], np.column_stack([ext.r, ext.V, ext.V_e])))]
    return results, arts, {"r_lo": cfg["r_lo"]}


def cmd_certify(cfg):
    params = ModelParams(cfg["ell"], cfg["n"])
    d = cfg["dim"] or params.dim
    R, T = cfg["R"], cfg["T"]
    rng = np.random.default_rng(cfg["seed"])
    if cfg["datum"] == "tail":
        data = [tail_datum(d)]
    else:
        data = [random_exterior_datum(rng, R) for _ in range(cfg["samples"])]
    records = []
    for f, g, fr in data:
        records.append(certify_exterior_estimate(
            f, g, d, R, T, n_points=cfg["grid_n"], half_width=cfg["grid_x"], fr=fr,
            static_tail=cfg["datum"] == "tail", tol_cert=cfg["tol_cert"]))
    rows = [(k, r.lhs, 0.5 * r.rhs, r.margin, r.data_energy, float(r.passed))
            for k, r in enumerate(records)]
    results = {"d": d, "R": R, "T": T, "n_data": len(records),
               "n_pass": sum(r.passed for r in records),
               "min_lhs_over_data_energy": min((r.lhs / r.data_energy for r in records),
                                               default=math.nan)}
    arts = [
        Artifact("certify.json", lambda dd: write_json(dd / "certify.json",
                                                      [r.to_dict() for r in records])),
        Artifact("certify.csv", lambda dd: write_table(
            dd / "certify.csv", ["index", "lhs", "half_rhs", "margin", "data_energy", "pass"],
            rows)),
    ]
    if results["n_pass"] < len(records):
        results["failed"] = True
    return results, arts, {"tol_cert": cfg["tol_cert"]}


def cmd_converge(cfg):
    params = ModelParams(cfg["ell"], cfg["n"])
    Q_cache = {}

    def make_flow(grid):
        kind = FlowKind(cfg["flow"])
        if kind in (FlowKind.PSI, FlowKind.U, FlowKind.LINEAR):
            Q_cache[grid.n_points] = _flow_and_data(cfg, params, grid)
            return Q_cache[grid.n_points][0]
        return _flow_and_data(cfg, params, grid)[0]

    def make_data(grid, flow):
        if grid.n_points in Q_cache:
            return Q_cache[grid.n_points][1]
        return _flow_and_data(cfg, params, grid)[1]

    rep = self_convergence(make_flow, make_data, cfg["grid_x"], cfg["grid_n"], cfg["T"],
                           cfl=cfg["cfl"])
    results = rep.to_dict()
    arts = [Artifact("convergence.json", lambda d: write_json(d / "convergence.json",
                                                              rep.to_dict()))]
    return results, arts, {"cfl": cfg["cfl"]}


HANDLERS = {"harmonic": cmd_harmonic, "evolve": cmd_evolve, "resolve": cmd_resolve,
            "exterior": cmd_exterior, "certify": cmd_certify, "converge": cmd_converge}
HEADLINE = {"harmonic": "alpha", "evolve": "relative_energy_drift", "resolve": "monotone",
            "exterior": "max_slope_error", "certify": "n_pass", "converge": "order"}


def run(cfg: dict, quiet: bool = False):
    """Execute one validated config.  Returns ``(exit_code, manifest_or_error)``."""
    try:
        results, arts, tols = HANDLERS[cfg["command"]](cfg)
    except _VALIDATION as exc:
        return EXIT_INVALID, {"error": f"{type(exc).__name__}: {exc}"}
    except (*_NUMERICAL, WormholeError) as exc:
        return EXIT_NUMERICAL, {"error": f"{type(exc).__name__}: {exc}"}
    out = output_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    for art in arts:
        art.write(out)
    files = sorted(p.name for p in out.iterdir() if p.name != "manifest.json")
    manifest = {"command": cfg["command"], "config": cfg, "config_hash": config_hash(cfg),
                "versions": _versions(), "tolerances": tols, "results": results,
                "files": files, "output_dir": str(out)}
    write_json(out / "manifest.json", manifest)
    if not quiet:
        print(f"{cfg['command']}: {HEADLINE[cfg['command']]} = "
              f"{results.get(HEADLINE[cfg['command']])} -> {out}")
    code = EXIT_NUMERICAL if results.get("failed") else EXIT_OK
    return code, manifest


# -- sweep ---------------------------------------------------------------------------------


def expand_sweep(spec: dict) -> list:
    """``runs`` (a list of configs) plus ``product`` (list-valued keys expanded)."""
    unknown = set(spec) - {"runs", "product", "jobs", "output"}
    if unknown:
        raise ConfigError(f"unknown sweep keys {sorted(unknown)}")
    runs = list(spec.get("runs", []))
    prod = spec.get("product")
    if prod:
        keys = list(prod)
        axes = [v if isinstance(v, list) and k != "extraction_times" else [v]
                for k, v in prod.items()]
        runs += [dict(zip(keys, combo)) for combo in itertools.product(*axes)]
    return runs


def _child(cfg):
    try:
        code, man = run(cfg, quiet=True)
    except Exception as exc:  # one bad run must not abort the sweep
        code, man = EXIT_NUMERICAL, {"error": f"{type(exc).__name__}: {exc}"}
    head = HEADLINE[cfg["command"]]
    val = man.get("results", {}).get(head) if code == EXIT_OK else man.get("error")
    return code, str(man.get("output_dir", output_dir(cfg))), head, val


def sweep(spec: dict, root=None, jobs: int | None = None):
    """Run independent configs in parallel; returns ``(exit_code, rows)``."""
    root = Path(root or spec.get("output") or os.environ.get(OUTPUT_ENV, "runs"))
    configs = []
    for raw in expand_sweep(spec):
        raw = dict(raw)
        cmd = raw.pop("command", None)
        if cmd is None:
            raise ConfigError("every sweep entry needs a command")
        cfg = resolve_config(cmd, raw)
        if not cfg["output"]:
            cfg["output"] = str(root / f"{cmd}-{config_hash(cfg)}")
        configs.append(cfg)
    outs = [c["output"] for c in configs]
    if len(set(outs)) != len(outs):
        raise ConfigError("duplicate output directories in sweep")
    root.mkdir(parents=True, exist_ok=True)
    rows = []
    if configs:
        jobs = jobs or spec.get("jobs") or min(len(configs), os.cpu_count() or 1)
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_child, configs))
        for k, (cfg, (code, out, head, val)) in enumerate(zip(configs, results)):
            rows.append({"index": k, "command": cfg["command"], "ell": cfg["ell"],
                         "n": cfg["n"], "exit_code": code, "metric": head, "value": val,
                         "output": out})
    with open(root / "sweep.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, ["index", "command", "ell", "n", "exit_code", "metric",
                                "value", "output"])
        w.writeheader()
        w.writerows(rows)
    code = EXIT_NUMERICAL if any(r["exit_code"] != EXIT_OK for r in rows) else EXIT_OK
    return code, rows


# -- argparse ------------------------------------------------------------------------------


def _add_common(p):
    S = argparse.SUPPRESS
    p.add_argument("--config", help="TOML or JSON run config")
    p.add_argument("--ell", type=int, default=S)
    p.add_argument("--n", type=int, default=S, help="degree of the harmonic map")
    p.add_argument("--grid-x", type=float, default=S, help="grid half width in x")
    p.add_argument("--grid-n", type=int, default=S, help="number of grid nodes (odd)")
    p.add_argument("--cfl", type=float, default=S)
    p.add_argument("--T", type=float, default=S, help="final time")
    p.add_argument("--output", default=S, help="artifact directory")
    p.add_argument("--seed", type=int, default=S)


def build_parser():
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="wormhole-waves", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("harmonic", help="shoot for the harmonic map Q")
    _add_common(p)
    p.add_argument("--tol-b", type=float, default=S)
    p.add_argument("--x-end", type=float, default=S)
    p.add_argument("--dx-ode", type=float, default=S)
    for name in ("evolve", "converge"):
        p = sub.add_parser(name, help="evolve a flow" if name == "evolve"
                           else "triple-resolution convergence study")
        _add_common(p)
        p.add_argument("--flow", choices=[k.value for k in FlowKind], default=S)
        p.add_argument("--amplitude", type=float, default=S)
        p.add_argument("--center", type=float, default=S)
        p.add_argument("--width", type=float, default=S)
        p.add_argument("--flat-dim", type=int, default=S)
        p.add_argument("--inner-radius", type=float, default=S)
        if name == "evolve":
            p.add_argument("--cadence", type=float, default=S)
            p.add_argument("--snapshot-every", type=float, default=S)
            p.add_argument("--state-format", choices=["csv", "binary"], default=S)
            p.add_argument("--balanced", action="store_true", default=S)
    p = sub.add_parser("resolve", help="soliton resolution diagnostic")
    _add_common(p)
    p.add_argument("--amplitude", type=float, default=S)
    p.add_argument("--center", type=float, default=S)
    p.add_argument("--width", type=float, default=S)
    p.add_argument("--cadence", type=float, default=S)
    p.add_argument("--extraction-times", type=float, nargs="+", default=S)
    p.add_argument("--A", type=float, default=S, help="local energy window radius")
    p.add_argument("--radiation", choices=["linear", "free"], default=S)
    p = sub.add_parser("exterior", help="exterior coefficients and bound exponents")
    _add_common(p)
    p.add_argument("--r-lo", type=float, default=S)
    p = sub.add_parser("certify", help="exterior energy estimate on free flat waves")
    _add_common(p)
    p.add_argument("--dim", type=int, default=S)
    p.add_argument("--R", type=float, default=S)
    p.add_argument("--samples", type=int, default=S)
    p.add_argument("--datum", choices=["random", "tail"], default=S)
    p.add_argument("--tol-cert", type=float, default=S)
    p = sub.add_parser("sweep", help="run many configs in parallel")
    p.add_argument("config", help="TOML or JSON with 'runs' and/or 'product'")
    p.add_argument("--jobs", type=int)
    p.add_argument("--output", help="sweep root directory")
    return parser


def main(argv=None) -> int:
    args = vars(build_parser().parse_args(argv))
    command = args.pop("command")
    try:
        if command == "sweep":
            spec = load_config_file(args["config"])
            code, rows = sweep(spec, args.get("output"), args.get("jobs"))
            print(f"sweep: {len(rows)} runs, {sum(r['exit_code'] != 0 for r in rows)} failed")
            return code
        path = args.pop("config", None)
        layers = [load_config_file(path)] if path else []
        cfg = resolve_config(command, *layers, args)
    except (ConfigError, *_VALIDATION) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    code, man = run(cfg)
    if code != EXIT_OK and "error" in man:
        print(f"error: {man['error']}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
