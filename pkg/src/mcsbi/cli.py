"""Command-line front end: ``mcsbi check|simulate|exact|moments|models|bench``.

Exit status is 0 on success, 1 on a usage error (bad flags, unknown model,
malformed model or property) and 2 on a numerical failure (stiffness,
non-finite moments, probability out of range, state-space overflow).
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field, fields

import numpy as np

from . import io as tio
from .cme import exact_cme_cdf
from .engine import EngineConfig, Grid, check_path_formula
from .errors import (
    IntegrationError, McsbiError, ModelSyntaxError, NumericAccuracyError, PropensityError,
    PropertySyntaxError, RegionLimitError, StateSpaceError,
)
from .gaussian import GaussianConfig
from .model import BUILTIN_MODELS, builtin_model_text, load_model
from .moments import MomentState, moment_field, moment_trajectory
from .presets import PRESETS, preset_for_model
from .properties import parse_property
from .ssa import SEED_ENV, estimate_cdf, resolve_seed, simulate

METHODS = ("sbi", "ssa", "exact", "all")


class UsageError(Exception):
    """Invalid command line or configuration."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


@dataclass
class RunConfig:
    """Settings of a ``check`` run; JSON config files use the same keys."""

    model: str = ""
    property: str = ""
    steps: int | None = None
    method: str = "sbi"
    samples: int = 1000
    seed: int | None = None
    level: float = 0.99
    rtol: float = 1e-6
    atol: float = 1e-8
    mvn_tol: float = 1e-6
    max_step: float = math.inf
    domain_aware: bool = True
    state_bound: int | None = None
    output: str | None = None
    format: str = "csv"
    plot: bool = False
    params: dict = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        if not self.model:
            raise UsageError("a model is required (--model)")
        if self.steps is not None and (int(self.steps) != self.steps or self.steps < 1):
            raise UsageError(f"--steps must be a positive integer, got {self.steps}")
        if self.method not in METHODS:
            raise UsageError(f"--method must be one of {', '.join(METHODS)}")
        if self.method in ("ssa", "all") and self.samples < 2:
            raise UsageError("--samples must be at least 2 for simulation")
        if not 0.0 < self.level < 1.0:
            raise UsageError("--level must lie in (0, 1)")
        if self.format not in ("csv", "json"):
            raise UsageError("--format must be csv or json")
        for name in ("rtol", "atol", "mvn_tol"):
            if not getattr(self, name) > 0:
                raise UsageError(f"--{name.replace('_', '-')} must be positive")
        return self

    def engine_config(self) -> EngineConfig:
        return EngineConfig(rtol=self.rtol, atol=self.atol, max_step=self.max_step,
                            gaussian=GaussianConfig(mvn_tol=self.mvn_tol), domain_aware=self.domain_aware)


def _parse_params(items) -> dict:
    out = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--param expects NAME=VALUE, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise UsageError(f"--param {name}: {value!r} is not a number") from None
    return out


def _load_config(path) -> dict:
    if not path:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("config file must hold a JSON object")
    known = {f.name for f in fields(RunConfig)}
    data = {k.replace("-", "_"): v for k, v in data.items()}
    unknown = set(data) - known
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return data


def _run_config(args) -> RunConfig:
    cfg = RunConfig(**_load_config(getattr(args, "config", None)))
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None and f.name != "params":
            setattr(cfg, f.name, v)
    cfg.params = {**cfg.params, **_parse_params(getattr(args, "param", None))}
    if getattr(args, "no_domain_aware", False):
        cfg.domain_aware = False
    if getattr(args, "plot", False):
        cfg.plot = True
    return cfg.validate()


def _network(name, params):
    if name not in BUILTIN_MODELS and not os.path.isfile(name):
        raise UsageError(f"unknown model {name!r}: not one of {', '.join(BUILTIN_MODELS)} "
                         "and not a model file")
    try:
        return load_model(name, **params)
    except KeyError as exc:
        raise UsageError(f"model {name}: {exc.args[0]}") from None


def _formula(cfg: RunConfig, network):
    text = cfg.property
    if not text:
        try:
            text = preset_for_model(cfg.model).property
        except KeyError:
            raise UsageError("a property is required (--property)") from None
    return parse_property(text, network.species)


def _steps(cfg: RunConfig) -> int:
    if cfg.steps is not None:
        return int(cfg.steps)
    try:
        return preset_for_model(cfg.model).n_steps
    except KeyError:
        return 200


def _emit(text: str, path: str | None, out) -> None:
    if path:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        out.write(text)


def _render(table, fmt, **meta) -> str:
    return tio.table_csv(table) if fmt == "csv" else tio.table_json(table, **meta)


# -- subcommands ---------------------------------------------------------------


def cmd_check(args, out) -> int:
    cfg = _run_config(args)
    network = _network(cfg.model, cfg.params)
    formula = _formula(cfg, network)
    grid = Grid(formula.horizon, _steps(cfg))
    methods = ("sbi", "ssa", "exact") if cfg.method == "all" else (cfg.method,)
    seed = resolve_seed(cfg.seed)
    results = {}
    for m in methods:
        if m == "sbi":
            results[m] = check_path_formula(network, formula, grid, cfg.engine_config())
        elif m == "ssa":
            results[m] = estimate_cdf(network, formula, grid, cfg.samples, cfg.level, seed)
        else:
            results[m] = exact_cme_cdf(network, formula, grid, state_bound=cfg.state_bound)
    meta = dict(model=cfg.model, property=cfg.property or _formula_text(cfg), steps=grid.n_steps)
    ext = "csv" if cfg.format == "csv" else "json"
    if len(methods) == 1 and not cfg.output:
        _emit(_render(tio.result_table(results[methods[0]], network.species), cfg.format,
                      method=methods[0], **meta), None, out)
    else:
        if cfg.output:
            for m, r in results.items():
                _emit(_render(tio.result_table(r, network.species), cfg.format, method=m, **meta),
                      f"{cfg.output}_{m}.{ext}", out)
        if cfg.method == "all":
            comp = tio.comparison_table(grid.points, results["sbi"], results["ssa"], results["exact"])
            _emit(_render(comp, cfg.format, **meta), f"{cfg.output}_comparison.{ext}" if cfg.output else None, out)
            worst = float(comp.column("abs_sbi_exact").max())
            print(f"max |sbi - exact| = {worst:.6g}; ssa 99% half-width = "
                  f"{results['ssa'].half_width:.4g}", file=sys.stderr)
    if cfg.plot:
        series = {m: (grid.points, r.cdf) for m, r in results.items()}
        bands = {"ssa": (grid.points, results["ssa"].lower, results["ssa"].upper)} if "ssa" in results else None
        path = f"{cfg.output or 'mcsbi_check'}.svg"
        tio.write_svg(path, series, title=cfg.property or _formula_text(cfg), ylabel="first-passage CDF",
                      bands=bands)
    return 0


def _formula_text(cfg):
    try:
        return preset_for_model(cfg.model).property
    except KeyError:
        return ""


def cmd_simulate(args, out) -> int:
    network = _network(args.model, _parse_params(args.param))
    if not args.t_end > 0:
        raise UsageError("--t-end must be positive")
    traj = simulate(network, args.t_end, resolve_seed(args.seed))
    _emit(tio.table_csv(tio.trajectory_table(traj)), args.output, out)
    return 0


def cmd_exact(args, out) -> int:
    args.method = "exact"
    return cmd_check(args, out)


def cmd_moments(args, out) -> int:
    network = _network(args.model, _parse_params(args.param))
    fld = moment_field(network)
    text = fld.to_text() + "\n"
    if args.t_end is None:
        _emit(text, None, out)
        return 0
    if not args.t_end > 0 or args.steps < 1:
        raise UsageError("--t-end must be positive and --steps at least 1")
    times = np.linspace(0.0, args.t_end, args.steps + 1)
    mu, sigma = moment_trajectory(fld, MomentState.deterministic(network.x0), times, args.rtol, args.atol)
    csv_text = tio.table_csv(tio.moment_table(times, mu, sigma, network.species))
    if args.output:
        out.write(text)
        _emit(csv_text, args.output, out)
    else:
        out.write(text + "\n" + csv_text)
    return 0


def cmd_models(args, out) -> int:
    if args.show:
        if args.show not in BUILTIN_MODELS:
            raise UsageError(f"unknown model {args.show!r}; choose from {', '.join(BUILTIN_MODELS)}")
        out.write(builtin_model_text(args.show))
        return 0
    out.write("model,species,reactions,property\n")
    for name in BUILTIN_MODELS:
        net = load_model(name)
        prop = preset_for_model(name).property
        out.write(f'{name},{net.n_species},{net.n_reactions},"{prop}"\n')
    return 0


def cmd_bench(args, out) -> int:
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in models:
        if m not in PRESETS:
            raise UsageError(f"unknown model {m!r}; choose from {', '.join(PRESETS)}")
    for m in methods:
        if m not in ("sbi", "ssa", "exact"):
            raise UsageError(f"unknown method {m!r}")
    seed = resolve_seed(args.seed)
    rows = []
    for name in models:
        preset = PRESETS[name]
        network = load_model(preset.model)
        formula = parse_property(preset.property, network.species)
        grid = Grid(formula.horizon, preset.n_steps)
        timings = {}
        for m in methods:
            if m == "sbi":
                def run():
                    return check_path_formula(network, formula, grid)
                warm = lambda: check_path_formula(network, formula, Grid(formula.horizon, 1))  # noqa: E731
            elif m == "ssa":
                def run():
                    return estimate_cdf(network, formula, grid, args.samples, 0.99, seed)
                warm = lambda: estimate_cdf(network, formula, grid, 2, 0.99, seed)  # noqa: E731
            else:
                def run():
                    return exact_cme_cdf(network, formula, grid)
                warm = None
            if warm is not None and not args.no_warmup:
                warm()
            t0 = time.perf_counter()
            run()
            timings[m] = time.perf_counter() - t0
        for m, sec in timings.items():
            speedup = timings["ssa"] / timings["sbi"] if {"ssa", "sbi"} <= set(timings) and m == "sbi" else math.nan
            n = args.samples if m == "ssa" else (grid.n_steps if m == "sbi" else "")
            rows.append(f"{name},{m},{n},{sec:.6g},{'' if math.isnan(speedup) else format(speedup, '.4g')}")
    _emit("model,method,size,seconds,ssa_over_sbi\n" + "\n".join(rows) + "\n", args.output, out)
    return 0


# -- argument parsing ------------------------------------------------------------


def _add_common(p, model_required=True):
    p.add_argument("--model", required=model_required,
                   help=f"builtin model ({', '.join(BUILTIN_MODELS)}) or path to a model file")
    p.add_argument("--param", action="append", metavar="NAME=VALUE",
                   help="override a model parameter (repeatable)")


def _add_check_flags(p, with_method=True):
    _add_common(p, model_required=False)
    p.add_argument("--property", help='CSL property, e.g. "P=? [ (X_I<30) U[0,10] (X_I=0) ]" '
                                      "(default: the model's benchmark property)")
    p.add_argument("--steps", type=int, help="grid intervals N (default 200; 2000 for genosc)")
    if with_method:
        p.add_argument("--method", choices=METHODS, help="sbi (default), ssa, exact or all")
        p.add_argument("--samples", type=int, help="SSA trajectories (default 1000)")
        p.add_argument("--seed", type=int, help=f"master seed (default: ${SEED_ENV}, else 0)")
        p.add_argument("--level", type=float, help="SSA confidence level (default 0.99)")
        p.add_argument("--rtol", type=float, help="moment integrator rtol (default 1e-6)")
        p.add_argument("--atol", type=float, help="moment integrator atol (default 1e-8)")
        p.add_argument("--mvn-tol", dest="mvn_tol", type=float, help="Gaussian mass tolerance (default 1e-6)")
        p.add_argument("--max-step", dest="max_step", type=float, help="cap on the integrator step")
        p.add_argument("--no-domain-aware", action="store_true",
                       help="compile regions without using non-negativity of counts")
    p.add_argument("--state-bound", dest="state_bound", type=int,
                   help="per-species cap for the exact oracle's state space")
    p.add_argument("--output", help="output path prefix; files are <prefix>_<method>.<ext>")
    p.add_argument("--format", choices=("csv", "json"), help="output format (default csv)")
    p.add_argument("--plot", action="store_true", help="also write an SVG of the CDFs")
    p.add_argument("--config", help="JSON file whose keys mirror these flags")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mcsbi", description="First-passage CDFs of time-bounded until properties "
                     "of reaction networks by Gaussian filtering over moment-closure dynamics.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("check", help="compute the CDF of an until property")
    _add_check_flags(p)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("exact", help="exact CDF by uniformisation of the enumerated chain")
    _add_check_flags(p, with_method=False)
    p.set_defaults(func=cmd_exact)

    p = sub.add_parser("simulate", help="sample one trajectory as CSV (t, species...)")
    _add_common(p)
    p.add_argument("--t-end", dest="t_end", type=float, required=True, help="simulation horizon")
    p.add_argument("--seed", type=int, help=f"seed (default: ${SEED_ENV}, else 0)")
    p.add_argument("--output", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("moments", help="print the closed moment equations; optionally integrate them")
    _add_common(p)
    p.add_argument("--t-end", dest="t_end", type=float, help="integrate the moments up to this time")
    p.add_argument("--steps", type=int, default=100, help="output intervals (default 100)")
    p.add_argument("--rtol", type=float, default=1e-6)
    p.add_argument("--atol", type=float, default=1e-8)
    p.add_argument("--output", help="CSV path for the trajectory (default stdout)")
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("models", help="list bundled models")
    p.add_argument("--show", metavar="NAME", help="print a bundled model file")
    p.set_defaults(func=cmd_models)

    p = sub.add_parser("bench", help="wall-clock timing of methods on benchmark properties")
    p.add_argument("--models", default="sir", help=f"comma-separated presets ({', '.join(PRESETS)})")
    p.add_argument("--methods", default="sbi", help="comma-separated methods: sbi, ssa, exact")
    p.add_argument("--samples", type=int, default=10_000, help="SSA trajectories (default 10000)")
    p.add_argument("--seed", type=int, help=f"master seed (default: ${SEED_ENV}, else 0)")
    p.add_argument("--no-warmup", action="store_true", help="include JIT compilation in the timings")
    p.add_argument("--output", help="CSV path (default stdout)")
    p.set_defaults(func=cmd_bench)
    return parser


_USAGE_ERRORS = (UsageError, ModelSyntaxError, PropertySyntaxError, RegionLimitError, ValueError)
_NUMERIC_ERRORS = (IntegrationError, NumericAccuracyError, PropensityError, StateSpaceError)


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
        return args.func(args, out)
    except _NUMERIC_ERRORS as exc:
        print(f"mcsbi: numerical error ({type(exc).__module__.rsplit('.', 1)[-1]}."
              f"{type(exc).__name__}): {exc}", file=sys.stderr)
        return 2
    except _USAGE_ERRORS as exc:
        print(f"mcsbi: {exc}", file=sys.stderr)
        return 1
    except McsbiError as exc:
        print(f"mcsbi: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"mcsbi: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
