"""Command-line front end.

    vortexforms analyze CONFIG      well-posedness report (JSON)
    vortexforms simulate CONFIG     trajectory (CSV or JSON)
    vortexforms invariants CONFIG   integral-invariant and Liouville report (JSON)

Exit codes: 0 success, 1 ill-posed sigma, 2 configuration or parse error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Optional

import jsonschema
import numpy as np

from .dynamics import IntegratorOptions, VortexDynamics, integrate_trajectory
from .errors import ExpressionSyntaxError, NumericalFailure, UnknownIdentifierError
from .expr import SpaceSpec, parse_expression
from .exterior import Form
from .invariants import (ExpressionChain, check_absolute_invariant, check_liouville,
                         check_relative_invariant)
from .systems import HamiltonianSpec, NambuSpec, hamiltonian_sigma, nambu_sigma
from .wellposed import Sampling, analyze

__all__ = ["ConfigError", "RunConfig", "ChainTask", "load_config", "parse_config", "dumps",
           "run_cli", "main"]

EXIT_OK = 0
EXIT_ILL_POSED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

SOURCES = ("hamiltonian", "nambu", "form")


class ConfigError(ValueError):
    """Invalid configuration; ``path`` is a JSON pointer to the offending value."""

    def __init__(self, path, message):
        self.path = path or "/"
        super().__init__(f"{self.path}: {message}")


def load_schema() -> dict:
    text = resources.files("vortexforms").joinpath("config.schema.json").read_text()
    return json.loads(text)


@dataclass
class ChainTask:
    kind: str
    k: int
    chain: ExpressionChain
    order: int = 16


@dataclass
class RunConfig:
    source: str
    space: SpaceSpec
    sigma: Form
    spec: object = None
    initial: Optional[np.ndarray] = None
    t0: float = 0.0
    t1: float = 1.0
    output_samples: Optional[int] = None
    integrator: IntegratorOptions = field(default_factory=IntegratorOptions)
    sampling: Sampling = field(default_factory=Sampling)
    chain_tasks: list = field(default_factory=list)
    liouville: Optional[dict] = None
    raw: dict = field(default_factory=dict, repr=False)


def _pointer(parts):
    return "/" + "/".join(str(p) for p in parts)


def _expr(text, space, path):
    try:
        return parse_expression(text, space)
    except ExpressionSyntaxError as exc:
        raise ConfigError(path, f"{exc} in {text!r}") from None
    except UnknownIdentifierError as exc:
        raise ConfigError(path, f"undeclared coordinate or unknown function {exc.name!r}") from None


def _space(raw, count=None):
    coords = raw.get("coordinates")
    if coords is None:
        return None
    if count is not None and len(coords) != count:
        raise ConfigError("/coordinates", f"expected {count} coordinate names, got {len(coords)}")
    try:
        return SpaceSpec(tuple(coords))
    except ValueError as exc:
        raise ConfigError("/coordinates", str(exc)) from None


def _sigma(raw):
    sources = [s for s in SOURCES if s in raw]
    if len(sources) != 1:
        raise ConfigError("/", "exactly one sigma source (hamiltonian | nambu | form) is required, "
                               f"found {sources or 'none'}")
    source = sources[0]
    body = raw[source]
    if source == "hamiltonian":
        m = body["m"]
        space = _space(raw, 2 * m)
        if space is None:
            spec = HamiltonianSpec.build(m, "0")
            space = spec.space
        H = _expr(body["H"], space, "/hamiltonian/H")
        spec = HamiltonianSpec(m, H, space.coordinates[:m], space.coordinates[m:])
        return source, space, hamiltonian_sigma(spec), spec
    if source == "nambu":
        n = body["n"]
        if len(body["H"]) != n - 1:
            raise ConfigError("/nambu/H", f"need exactly {n - 1} Hamiltonians, got {len(body['H'])}")
        space = _space(raw, n) or NambuSpec.build(n, ["0"] * (n - 1)).space
        Hs = tuple(_expr(h, space, f"/nambu/H/{i}") for i, h in enumerate(body["H"]))
        spec = NambuSpec(n, Hs, space.coordinates)
        return source, space, nambu_sigma(spec), spec
    space = _space(raw)
    if space is None:
        raise ConfigError("/coordinates", "a raw form needs declared coordinates")
    degree = body["degree"]
    terms = []
    for i, term in enumerate(body["terms"]):
        path = f"/form/terms/{i}"
        idx = term["indices"]
        if len(idx) != degree:
            raise ConfigError(f"{path}/indices", f"expected {degree} indices, got {len(idx)}")
        key = []
        for j, name in enumerate(idx):
            if isinstance(name, str):
                if name not in space.names:
                    raise ConfigError(f"{path}/indices/{j}", f"undeclared coordinate {name!r}")
                key.append(space.index(name))
            else:
                if not 0 <= name <= space.n:
                    raise ConfigError(f"{path}/indices/{j}", f"index {name} out of range")
                key.append(name)
        terms.append((tuple(key), _expr(term["coefficient"], space, f"{path}/coefficient")))
    return "form", space, Form(space, degree, terms), None


def _box(box, n, path):
    arr = np.asarray(box, dtype=float)
    if arr.shape != (n, 2):
        raise ConfigError(path, f"box must list {n} [low, high] pairs")
    if np.any(arr[:, 0] > arr[:, 1]):
        raise ConfigError(path, "box has low > high")
    return tuple(map(tuple, arr))


def parse_config(raw: dict) -> RunConfig:
    """Validate a decoded config against the schema and build a :class:`RunConfig`."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ConfigError(_pointer(err.absolute_path), err.message)
    source, space, sigma, spec = _sigma(raw)
    n = space.n
    cfg = RunConfig(source, space, sigma, spec, raw=raw)

    if "initial" in raw:
        if len(raw["initial"]) != n:
            raise ConfigError("/initial", f"expected {n} values, got {len(raw['initial'])}")
        cfg.initial = np.asarray(raw["initial"], dtype=float)
    time = raw.get("time", {})
    cfg.t0 = float(time.get("t0", 0.0))
    cfg.t1 = float(time.get("t1", 1.0))
    cfg.output_samples = time.get("samples")

    integ = raw.get("integrator", {})
    cfg.integrator = IntegratorOptions(
        method=integ.get("method", "rkf45"),
        rtol=float(integ.get("rtol", 1e-9)),
        atol=float(integ.get("atol", 1e-9)),
        step=float(integ.get("step", 1e-3)),
    )

    samp = raw.get("sampling", {})
    box = _box(samp["box"], n, "/sampling/box") if "box" in samp else None
    points = None
    if "points" in samp:
        for i, p in enumerate(samp["points"]):
            if len(p) != n + 1:
                raise ConfigError(f"/sampling/points/{i}", f"expected {n + 1} values (t first)")
        points = tuple(tuple(map(float, p)) for p in samp["points"])
    cfg.sampling = Sampling(
        count=samp.get("count", 32), seed=samp.get("seed", 0), box=box,
        times=tuple(samp.get("times", Sampling.times)), points=points)

    inv = raw.get("invariants", {})
    for kind in ("relative", "absolute"):
        for i, task in enumerate(inv.get(kind, [])):
            path = f"/invariants/{kind}/{i}"
            comps = task["components"]
            if len(comps) != n:
                raise ConfigError(f"{path}/components", f"expected {n} spatial components")
            params = tuple(f"u{j}" for j in range(1, task["dim"] + 1))
            for j, c in enumerate(comps):
                if isinstance(c, str):
                    _expr(c, params, f"{path}/components/{j}")
            cycle = task.get("cycle", kind == "relative")
            try:
                chain = ExpressionChain.spatial(space, task["dim"], comps, t=cfg.t0, cycle=cycle)
            except ValueError as exc:
                raise ConfigError(path, str(exc)) from None
            cfg.chain_tasks.append(ChainTask(kind, task.get("k", 0), chain, task.get("order", 16)))
    if "liouville" in inv:
        lv = dict(inv["liouville"])
        lv["box"] = _box(lv.get("box", [[-1.0, 1.0]] * n), n, "/invariants/liouville/box")
        lv.setdefault("count", 16)
        cfg.liouville = lv
    return cfg


def load_config(path) -> RunConfig:
    """Read, validate and eagerly parse a JSON run configuration."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError("/", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("/", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_config(raw)


# ---------------------------------------------------------------------------
# Deterministic JSON

def _fmt_float(x):
    if not math.isfinite(x):
        return "null"
    return format(x, ".17g")


def dumps(obj, indent=2, _level=0) -> str:
    """JSON text with every float written to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {dumps(v, indent, _level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [f"{pad}{dumps(v, indent, _level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _write(text, output):
    if output is None:
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(output))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".vortexforms-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, output)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# Subcommands

def _apply_overrides(cfg, args):
    if args.seed is not None:
        cfg.sampling = replace(cfg.sampling, seed=args.seed)
        if cfg.liouville is not None:
            cfg.liouville["seed"] = args.seed
    if args.samples is not None:
        cfg.sampling = replace(cfg.sampling, count=args.samples)
        if cfg.liouville is not None:
            cfg.liouville["count"] = args.samples
    if args.t0 is not None:
        cfg.t0 = args.t0
        for task in cfg.chain_tasks:
            task.chain = ExpressionChain.spatial(cfg.space, task.chain.k, task.chain.components[1:],
                                                 t=cfg.t0, cycle=task.chain.cycle)
    if args.t1 is not None:
        cfg.t1 = args.t1
    return cfg


def _cmd_analyze(cfg, args):
    if args.format == "csv":
        raise ConfigError("/", "analyze writes JSON only")
    report = analyze(cfg.sigma, cfg.sampling)
    _write(dumps(report.to_dict()) + "\n", args.output)
    return EXIT_OK if report.well_posed else EXIT_ILL_POSED


def _refuse(report):
    sys.stderr.write(f"sigma is ill-posed ({', '.join(report.reasons)}); refusing to integrate\n")
    sys.stderr.write(dumps(report.to_dict()) + "\n")
    return EXIT_ILL_POSED


def _cmd_simulate(cfg, args):
    report = analyze(cfg.sigma, cfg.sampling)
    if not report.well_posed:
        return _refuse(report)
    if cfg.initial is None:
        raise ConfigError("/initial", "simulate needs initial conditions")
    dyn = VortexDynamics(report)
    times = None
    if cfg.output_samples:
        times = np.linspace(cfg.t0, cfg.t1, cfg.output_samples)
    traj = integrate_trajectory(dyn, cfg.initial, cfg.t0, cfg.t1, cfg.integrator, times)
    if args.format == "json":
        _write(dumps(traj.to_dict()) + "\n", args.output)
    else:
        _write(traj.to_csv(), args.output)
    if not traj.ok:
        sys.stderr.write(f"integration aborted: {traj.failure}\n")
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_invariants(cfg, args):
    if args.format == "csv":
        raise ConfigError("/", "invariants writes JSON only")
    report = analyze(cfg.sigma, cfg.sampling)
    if not report.well_posed:
        return _refuse(report)
    dyn = VortexDynamics(report)
    results = []
    for task in cfg.chain_tasks:
        check = check_relative_invariant if task.kind == "relative" else check_absolute_invariant
        results.append(check(cfg.sigma, task.chain, cfg.t0, cfg.t1, task.k, dyn=dyn,
                             order=task.order, options=cfg.integrator).to_dict())
    out = report.to_dict()
    out["invariants"] = results
    out["liouville"] = None
    if cfg.liouville is not None:
        lv = cfg.liouville
        lrep = check_liouville(dyn, lv["box"], float(lv.get("t1", cfg.t1)), lv["count"],
                               t0=cfg.t0, seed=lv.get("seed", cfg.sampling.seed),
                               options=cfg.integrator)
        out["liouville"] = {
            "max_abs_det_minus_one": lrep.max_abs_det_minus_one,
            "count": lv["count"],
            "t0": cfg.t0,
            "t1": float(lv.get("t1", cfg.t1)),
            "failures": lrep.meta["failures"],
        }
    _write(dumps(out) + "\n", args.output)
    return EXIT_OK


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="JSON run configuration")
    common.add_argument("--output", "-o", help="write to this file instead of stdout")
    common.add_argument("--format", choices=("csv", "json"), help="output format")
    common.add_argument("--seed", type=int, help="seed for all random sampling")
    common.add_argument("--t0", type=float, help="start time")
    common.add_argument("--t1", type=float, help="end time")
    common.add_argument("--samples", type=int, help="number of random sample points")
    parser = argparse.ArgumentParser(prog="vortexforms", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common], help="well-posedness report")
    sub.add_parser("simulate", parents=[common], help="integrate a trajectory")
    sub.add_parser("invariants", parents=[common], help="check integral invariants")
    return parser


_COMMANDS = {"analyze": _cmd_analyze, "simulate": _cmd_simulate, "invariants": _cmd_invariants}


def run_cli(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if args.seed is not None and args.seed < 0:
        sys.stderr.write("error: --seed must be non-negative\n")
        return EXIT_CONFIG
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except NumericalFailure as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERICAL


def main():
    sys.exit(run_cli())
