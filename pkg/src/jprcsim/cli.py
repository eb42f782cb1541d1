"""Command-line entry point.

Subcommands::

    jprcsim gen-scenario  draw one snapshot and write it as JSON
    jprcsim run           JPRC on one snapshot, per scheme
    jprcsim sweep         Monte-Carlo sweep (figure reproduction)
    jprcsim compare       NOMA vs OFDMA improvement ratio
    jprcsim oracle        JPRC vs exhaustive search and equal power on tiny networks

Exit status: 0 on success, 1 when every result is infeasible (files are
still written), 2 on configuration or usage errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import harness, plotting
from .baselines import GridGuardError
from .harness import ExperimentConfig
from .jprc import JprcParams
from .model import ScenarioConfig, Scheme, allocate_subchannels, generate_scenario

__all__ = ["ConfigError", "OVERRIDE_KEYS", "load_config", "write_config", "main"]

log = logging.getLogger("jprcsim")


class ConfigError(ValueError):
    pass


_SCENARIO_KEYS = tuple(f.name for f in dataclasses.fields(ScenarioConfig))
_JPRC_KEYS = tuple(f.name for f in dataclasses.fields(JprcParams))

#: flat override key -> (section, field); section None is the top level
OVERRIDE_KEYS = {
    **{k: ("scenario", k) for k in _SCENARIO_KEYS},
    **{k: ("jprc", k) for k in _JPRC_KEYS},
    "schemes": (None, "schemes"),
    "methods": (None, "methods"),
    "sweep_variable": ("sweep", "variable"),
    "sweep_values": ("sweep", "values"),
    "num_snapshots": (None, "num_snapshots"),
    "base_seed": (None, "base_seed"),
    "grid_step": ("grid", "step"),
    "max_variables": ("grid", "max_variables"),
    "exclude_infeasible": (None, "exclude_infeasible"),
    "figure": (None, "figure"),
}
ALIASES = {"R_min": "min_rate", "scheme": "schemes", "peak": "peak_power"}
_LIST_KEYS = {"schemes", "methods", "sweep_values"}
_INT_KEYS = {"num_cells", "users_per_cell", "num_subchannels", "rng_seed", "max_iterations",
             "num_snapshots", "base_seed", "max_variables", "figure"}


def _parse_value(key: str, text: str) -> Any:
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        value = text
    if key in _LIST_KEYS and not isinstance(value, list):
        value = [_parse_value("", part) for part in str(value).split(",") if part]
    return value


def _apply_override(data: dict, item: str) -> None:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form KEY=VALUE")
    key, text = item.split("=", 1)
    key = key.strip()
    if "." in key:
        section, name = key.split(".", 1)
        flat = ALIASES.get(name, name)
        if OVERRIDE_KEYS.get(flat, (None, None))[0] != section:
            raise ConfigError(f"unknown override key {key!r}")
    else:
        flat = ALIASES.get(key, key)
        if flat not in OVERRIDE_KEYS:
            raise ConfigError(f"unknown override key {key!r}; known keys: "
                              f"{', '.join(sorted(OVERRIDE_KEYS))}")
        section, name = OVERRIDE_KEYS[flat]
    value = _parse_value(flat, text)
    target = data if section is None else data.setdefault(section, {})
    target[name] = value


def _check_number(key: str, value: Any, integer: bool = False) -> Any:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    return int(value) if integer else value


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build and validate an :class:`ExperimentConfig`; errors name the offending key."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    known = {"figure", "scenario", "schemes", "methods", "sweep", "num_snapshots",
             "base_seed", "jprc", "grid", "exclude_infeasible", "description"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
    if "scenario" not in data:
        raise ConfigError("missing required key 'scenario'")
    scen = data["scenario"]
    required = [k for k in _SCENARIO_KEYS if k != "rng_seed"]
    for key in required:
        if key not in scen:
            raise ConfigError(f"missing required key 'scenario.{key}'")
    extra = set(scen) - set(_SCENARIO_KEYS)
    if extra:
        raise ConfigError(f"unknown key(s) in scenario: {', '.join(sorted(extra))}")
    scen = {k: _check_number(f"scenario.{k}", v, k in _INT_KEYS) for k, v in scen.items()}
    try:
        scenario = ScenarioConfig(**scen)
    except ValueError as err:
        raise ConfigError(f"scenario: {err}") from None

    jprc_data = data.get("jprc", {}) or {}
    extra = set(jprc_data) - set(_JPRC_KEYS)
    if extra:
        raise ConfigError(f"unknown key(s) in jprc: {', '.join(sorted(extra))}")
    jprc_data = {k: _check_number(f"jprc.{k}", v, k in _INT_KEYS) for k, v in jprc_data.items()}
    try:
        jprc = JprcParams(**jprc_data)
    except ValueError as err:
        raise ConfigError(f"jprc: {err}") from None

    sweep = data.get("sweep", {}) or {}
    grid = data.get("grid", {}) or {}
    kwargs = dict(
        scenario=scenario,
        jprc=jprc,
        schemes=tuple(data.get("schemes", ("NOMA", "OFDMA"))),
        methods=tuple(data.get("methods", ("jprc",))),
        sweep_variable=sweep.get("variable", "none"),
        sweep_values=tuple(_check_number("sweep.values", v) for v in sweep.get("values", ())),
        num_snapshots=_check_number("num_snapshots", data.get("num_snapshots", 500), True),
        base_seed=_check_number("base_seed", data.get("base_seed", 0), True),
        grid_step=None if grid.get("step") is None else _check_number("grid.step", grid["step"]),
        max_variables=_check_number("grid.max_variables", grid.get("max_variables", 6), True),
        exclude_infeasible=bool(data.get("exclude_infeasible", False)),
        figure=None if data.get("figure") is None else _check_number("figure", data["figure"], True),
    )
    try:
        return ExperimentConfig(**kwargs)
    except ValueError as err:
        raise ConfigError(str(err)) from None


def load_config(path: Optional[str], overrides: Sequence[str] = (),
                output_dir: Optional[str] = None) -> ExperimentConfig:
    """Read a JSON config, apply ``KEY=VALUE`` overrides last, validate.

    Without ``path`` the reference defaults are used. The effective config
    is echoed to ``output_dir/effective_config.json`` when given.
    """
    if path is None:
        data = ExperimentConfig().to_dict()
    else:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err.strerror}") from None
        except json.JSONDecodeError as err:
            raise ConfigError(f"config {path} is not valid JSON: {err}") from None
    for item in overrides:
        _apply_override(data, item)
    config = config_from_dict(data)
    if output_dir is not None:
        write_config(config, Path(output_dir) / "effective_config.json")
    return config


def write_config(config: ExperimentConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(config.to_dict(), indent=2))
    return path


# ------------------------------------------------------------- commands


def _stamp() -> str:
    return time.strftime("%Y%m%dT%H%M%S")


def _summary_line(powers, iterations, feasible) -> str:
    return (f"aggregate_power_W={np.mean(powers):.6g} iterations={np.mean(iterations):.4g} "
            f"feasible_fraction={np.mean(feasible):.3g}")


def _cmd_gen_scenario(config: ExperimentConfig, args) -> int:
    out = Path(args.output)
    seed = config.base_seed
    scenario = generate_scenario(config.scenario, seed)
    path = out / f"scenario_{seed}.json"
    path.write_text(json.dumps(scenario.to_dict()))
    if args.plot:
        plotting.plot_layout(scenario, out / f"scenario_{seed}.png")
    print(f"wrote {path} (B={scenario.num_cells} U={scenario.num_users} "
          f"C={scenario.num_subchannels} hash={scenario.fingerprint()[:12]})")
    return 0


def _cmd_run(config: ExperimentConfig, args) -> int:
    out = Path(args.output)
    seed = config.base_seed
    base = generate_scenario(config.scenario, seed)
    scenario = harness._apply_sweep(config, base, config.values[0])
    traces, any_feasible = {}, False
    for scheme in config.schemes:
        allocation = allocate_subchannels(scenario, scheme)
        for method in config.methods:
            res = harness.run_method(method, scenario, allocation, config)
            harness.write_run_result(res, scenario, allocation, out, f"run_{method}_{scheme.value}")
            if method == "jprc":
                traces[scheme.value] = res.power_trace
            any_feasible |= res.feasible
            print(f"{method} {scheme.value}: "
                  + _summary_line(res.aggregate_power, res.iterations_used, res.per_user_feasible)
                  + f" converged={res.converged}")
    if args.plot and traces:
        plotting.plot_convergence(traces, out / "run_convergence.png")
    return 0 if any_feasible else 1


def _sweep_outputs(result, out: Path, label: str, plot: bool, extra=None) -> Path:
    stem = f"{label}_{_stamp()}"
    csv_path = harness.write_sweep_csv(result, out / f"{stem}.csv")
    harness.write_summary_json(result, out / f"{stem}.json", extra=extra)
    cfg = result.config
    if plot:
        if cfg.sweep_variable != "none":
            plotting.plot_sweep(result.stats(), cfg.sweep_variable, out / f"{stem}.png")
        else:
            ratio = (extra or {}).get("improvement_ratio")
            plotting.plot_scheme_bars(result.stats(), out / f"{stem}.png",
                                      ratio=None if isinstance(ratio, dict) else ratio)
        if "jprc" in cfg.methods:
            traces = {s.value: result.mean_traces(s, cfg.values[0]) for s in cfg.schemes}
            plotting.plot_convergence(traces, out / f"{stem}_convergence.png")
    return csv_path


def _label(config: ExperimentConfig, default: str) -> str:
    return f"fig{config.figure}" if config.figure is not None else default


def _finish(result, csv_path: Path) -> int:
    rows = [r for r in result.rows if r.method == "jprc"] or result.rows
    print(f"wrote {csv_path}; " + _summary_line([r.aggregate_power_W for r in rows],
                                                 [r.iterations for r in rows],
                                                 [r.feasible for r in rows]))
    return 0 if any(r.feasible for r in result.rows) else 1


def _cmd_sweep(config: ExperimentConfig, args) -> int:
    result = harness.run_sweep(config, jobs=args.jobs)
    csv_path = _sweep_outputs(result, Path(args.output), _label(config, "sweep"), args.plot)
    return _finish(result, csv_path)


def _cmd_compare(config: ExperimentConfig, args) -> int:
    if {Scheme.NOMA, Scheme.OFDMA} - set(config.schemes):
        config = dataclasses.replace(config, schemes=(Scheme.NOMA, Scheme.OFDMA))
    comparison = harness.compare_schemes(config, jobs=args.jobs)
    ratios = {("none" if math.isnan(v) else v): r for v, r in comparison.ratios.items()}
    extra = {"improvement_ratio": ratios["none"] if list(ratios) == ["none"] else ratios}
    csv_path = _sweep_outputs(comparison.sweep, Path(args.output), _label(config, "compare"),
                              args.plot, extra=extra)
    for value, ratio in ratios.items():
        print(f"NOMA improvement over OFDMA at {config.sweep_variable}={value}: {ratio:.4f}")
    return _finish(comparison.sweep, csv_path)


def _cmd_oracle(config: ExperimentConfig, args) -> int:
    methods = tuple(dict.fromkeys(config.methods + ("jprc", "exhaustive", "equal_power")))
    config = dataclasses.replace(config, methods=methods)
    result = harness.run_sweep(config, jobs=args.jobs)
    csv_path = _sweep_outputs(result, Path(args.output), _label(config, "oracle"), args.plot)
    return _finish(result, csv_path)


COMMANDS = {
    "gen-scenario": _cmd_gen_scenario,
    "run": _cmd_run,
    "sweep": _cmd_sweep,
    "compare": _cmd_compare,
    "oracle": _cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config JSON (default: reference setup)")
    common.add_argument("--overrides", nargs="*", default=[], metavar="KEY=VALUE",
                        help="override config keys, applied after the file")
    common.add_argument("--output", default="out", help="output directory (default: out)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for snapshots")
    common.add_argument("--seed", type=int, help="base seed (overrides base_seed)")
    common.add_argument("--scheme", choices=("noma", "ofdma", "both"),
                        help="restrict the schemes")
    common.add_argument("--no-plot", dest="plot", action="store_false",
                        help="skip rendering figures")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="jprcsim", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    helps = {
        "gen-scenario": "draw one snapshot and write it as JSON",
        "run": "run the configured methods on one snapshot",
        "sweep": "Monte-Carlo sweep over snapshots and sweep values",
        "compare": "NOMA vs OFDMA aggregate power improvement",
        "oracle": "JPRC vs exhaustive search and equal power on tiny networks",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"base_seed={args.seed}")
    if args.scheme is not None:
        schemes = "NOMA,OFDMA" if args.scheme == "both" else args.scheme.upper()
        overrides.append(f"schemes={schemes}")
    out = Path(args.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
        config = load_config(args.config, overrides, output_dir=out)
        return COMMANDS[args.command](config, args)
    except (ConfigError, GridGuardError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
