"""Monte-Carlo experiment runner: snapshots, sweeps, statistics and export.

Snapshot ``s`` of an experiment is drawn with seed ``base_seed + s``. Every
method, scheme and sweep value of a snapshot sees the same path gains, so
comparisons between them are paired.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import baselines
from .baselines import GridSpec, InfeasibleError
from .interference import evaluate
from .jprc import JprcParams, RunResult, run
from .model import Allocation, Scenario, ScenarioConfig, Scheme, allocate_subchannels, generate_scenario

__all__ = [
    "METHODS",
    "SWEEP_VARIABLES",
    "CSV_COLUMNS",
    "ExperimentConfig",
    "SweepRow",
    "GroupStats",
    "SweepResult",
    "SchemeComparison",
    "run_method",
    "run_snapshot",
    "run_sweep",
    "compare_schemes",
    "improvement_ratio",
    "write_sweep_csv",
    "write_summary_json",
    "write_run_result",
]

log = logging.getLogger(__name__)

METHODS = ("jprc", "water_filling", "exhaustive", "equal_power")
SWEEP_VARIABLES = ("none", "min_rate", "peak_power")
CSV_COLUMNS = ("method", "scheme", "sweep_value", "snapshot", "aggregate_power_W",
               "iterations", "feasible", "converged", "feasibility_fraction")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    schemes: tuple = (Scheme.NOMA, Scheme.OFDMA)
    sweep_variable: str = "none"
    sweep_values: tuple = ()
    num_snapshots: int = 500
    base_seed: int = 0
    jprc: JprcParams = field(default_factory=JprcParams)
    methods: tuple = ("jprc",)
    #: grid step of the oracle searches; ``None`` means peak power / 200
    grid_step: Optional[float] = None
    max_variables: int = 6
    #: leave infeasible snapshots out of the means (they are always counted)
    exclude_infeasible: bool = False
    #: figure number used to name exported files
    figure: Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "schemes", tuple(Scheme.parse(s) for s in self.schemes))
        object.__setattr__(self, "methods", tuple(str(m) for m in self.methods))
        object.__setattr__(self, "sweep_values", tuple(float(v) for v in self.sweep_values))
        if not self.schemes:
            raise ValueError("schemes must not be empty")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown or not self.methods:
            raise ValueError(f"methods must be a non-empty subset of {METHODS}, got {self.methods}")
        if self.sweep_variable not in SWEEP_VARIABLES:
            raise ValueError(f"sweep_variable must be one of {SWEEP_VARIABLES}")
        if self.sweep_variable != "none" and not self.sweep_values:
            raise ValueError("sweep_values must be non-empty when sweep_variable is set")
        if self.sweep_variable == "peak_power" and any(v <= 0 for v in self.sweep_values):
            raise ValueError("peak_power sweep values must be > 0")
        if self.sweep_variable == "min_rate" and any(v < 0 for v in self.sweep_values):
            raise ValueError("min_rate sweep values must be >= 0")
        if int(self.num_snapshots) != self.num_snapshots or self.num_snapshots < 1:
            raise ValueError("num_snapshots must be an integer >= 1")
        if self.grid_step is not None and not self.grid_step > 0:
            raise ValueError("grid_step must be > 0")

    @property
    def values(self) -> tuple:
        """Sweep values, or ``(nan,)`` for an unswept experiment."""
        return self.sweep_values if self.sweep_variable != "none" else (math.nan,)

    def grid_for(self, scenario: Scenario) -> GridSpec:
        step = self.grid_step
        if step is None:
            step = float(scenario.peak_power.max()) / 200
        return GridSpec(step=step, max_variables=self.max_variables)

    def to_dict(self) -> dict[str, Any]:
        return {
            "figure": self.figure,
            "scenario": self.scenario.to_dict(),
            "schemes": [s.value for s in self.schemes],
            "methods": list(self.methods),
            "sweep": {"variable": self.sweep_variable, "values": list(self.sweep_values)},
            "num_snapshots": self.num_snapshots,
            "base_seed": self.base_seed,
            "jprc": dataclasses.asdict(self.jprc),
            "grid": {"step": self.grid_step, "max_variables": self.max_variables},
            "exclude_infeasible": self.exclude_infeasible,
        }


@dataclass(frozen=True)
class SweepRow:
    method: str
    scheme: str
    sweep_value: float
    snapshot: int
    aggregate_power_W: float
    iterations: int
    feasible: bool
    converged: bool
    feasibility_fraction: float
    scenario_hash: str = ""


@dataclass(frozen=True)
class GroupStats:
    method: str
    scheme: str
    sweep_value: float
    mean_aggregate_power_W: float
    stderr_W: float
    feasibility_fraction: float
    mean_iterations: float
    num_snapshots: int


@dataclass(eq=False)
class SweepResult:
    config: ExperimentConfig
    rows: list
    #: (scheme, sweep_value, snapshot) -> JPRC aggregate power per iteration
    traces: dict = field(default_factory=dict)

    def select(self, method: str, scheme, sweep_value=None) -> list:
        scheme = Scheme.parse(scheme).value
        return [r for r in self.rows
                if r.method == method and r.scheme == scheme
                and (sweep_value is None or _same_value(r.sweep_value, sweep_value))]

    def stats(self) -> list:
        out = []
        for method in self.config.methods:
            for scheme in self.config.schemes:
                for value in self.config.values:
                    rows = self.select(method, scheme, value)
                    out.append(_group_stats(rows, method, scheme.value, value,
                                            self.config.exclude_infeasible))
        return out

    def stat(self, method: str, scheme, sweep_value=math.nan) -> GroupStats:
        rows = self.select(method, scheme, sweep_value)
        return _group_stats(rows, method, Scheme.parse(scheme).value, sweep_value,
                            self.config.exclude_infeasible)

    def check_pairing(self) -> bool:
        """All rows of a snapshot come from the same scenario."""
        seen: dict[int, str] = {}
        for r in self.rows:
            if seen.setdefault(r.snapshot, r.scenario_hash) != r.scenario_hash:
                return False
        return True

    def mean_traces(self, scheme, sweep_value=None) -> np.ndarray:
        """Mean JPRC aggregate power per iteration; finished runs hold their final value."""
        scheme = Scheme.parse(scheme).value
        traces = [t for (s, v, _), t in sorted(self.traces.items(), key=_trace_key)
                  if s == scheme and (sweep_value is None or _same_value(v, sweep_value))]
        if not traces:
            return np.array([])
        n = max(len(t) for t in traces)
        padded = np.array([np.pad(t, (0, n - len(t)), mode="edge") for t in traces])
        return padded.mean(axis=0)


def _value_key(value: float) -> float:
    return -math.inf if math.isnan(value) else value


def _trace_key(item):
    (scheme, value, snap), _ = item
    return scheme, _value_key(value), snap


def _same_value(a: float, b: float) -> bool:
    return (math.isnan(a) and math.isnan(b)) or a == b


def _group_stats(rows: list, method: str, scheme: str, value: float,
                 exclude_infeasible: bool) -> GroupStats:
    n = len(rows)
    used = [r for r in rows if r.feasible] if exclude_infeasible else rows
    powers = np.array([r.aggregate_power_W for r in used], dtype=float)
    mean = float(powers.mean()) if powers.size else math.nan
    stderr = float(powers.std(ddof=1) / math.sqrt(powers.size)) if powers.size > 1 else math.nan
    return GroupStats(
        method=method, scheme=scheme, sweep_value=value,
        mean_aggregate_power_W=mean, stderr_W=stderr,
        feasibility_fraction=float(np.mean([r.feasible for r in rows])) if n else math.nan,
        mean_iterations=float(np.mean([r.iterations for r in used])) if used else math.nan,
        num_snapshots=n,
    )


def _apply_sweep(config: ExperimentConfig, scenario: Scenario, value: float) -> Scenario:
    if config.sweep_variable == "min_rate":
        return scenario.with_requirements(min_rate=value)
    if config.sweep_variable == "peak_power":
        return scenario.with_requirements(peak_power=value)
    return scenario


def _all_peak(scenario: Scenario, allocation: Allocation) -> np.ndarray:
    return np.where(allocation.assign, scenario.peak_power, 0.0)


def run_method(method: str, scenario: Scenario, allocation: Allocation,
               config: ExperimentConfig) -> RunResult:
    """Run one method; infeasibility is flagged in the result, never raised.

    Infeasible oracle searches report every channel at peak power, like an
    infeasible JPRC user.
    """
    if method == "jprc":
        return run(scenario, allocation, config.jprc)

    if method == "water_filling":
        # each user alone, blind to interference; rates are then evaluated with it
        powers = np.zeros(allocation.assign.shape)
        own = scenario.own_gain
        ok = np.ones(scenario.num_users, dtype=bool)
        for i, chans in enumerate(allocation.per_user_channels):
            if chans.size == 0:
                ok[i] = scenario.min_rate[i] <= 0
                continue
            noise = scenario.noise[scenario.serving_bs[i]]
            try:
                powers[i, chans] = baselines.water_filling_single_cell(
                    own[i, chans], noise, scenario.min_rate[i], scenario.peak_power[i, chans])
            except InfeasibleError as err:
                powers[i, chans] = err.powers
                ok[i] = False
        report = evaluate(scenario, allocation, powers)
        return RunResult(final_powers=powers, iterations_used=0,
                         power_trace=np.array([powers.sum()]), delta_trace=np.array([0.0]),
                         rate_report=report, per_user_feasible=ok & report.per_user_feasible,
                         converged=True, method=method, scheme=allocation.scheme.value)

    search = {"exhaustive": baselines.exhaustive_search,
              "equal_power": baselines.equally_reduced_power}[method]
    grid = config.grid_for(scenario)
    try:
        return search(scenario, allocation, None, grid).as_run_result(scenario, allocation)
    except InfeasibleError:
        powers = _all_peak(scenario, allocation)
        report = evaluate(scenario, allocation, powers)
        return RunResult(final_powers=powers, iterations_used=0,
                         power_trace=np.array([powers.sum()]), delta_trace=np.array([0.0]),
                         rate_report=report,
                         per_user_feasible=np.zeros(scenario.num_users, dtype=bool),
                         converged=True, method=method, scheme=allocation.scheme.value,
                         extra={"grid_step_W": grid.step})


def run_snapshot(config: ExperimentConfig, snapshot_index: int,
                 sweep_value: Optional[float] = None) -> dict:
    """All methods and schemes on snapshot ``snapshot_index``.

    Returns ``{(method, scheme): RunResult}`` for one sweep value (the first
    one when not given).
    """
    scenario = generate_scenario(config.scenario, config.base_seed + snapshot_index)
    value = config.values[0] if sweep_value is None else float(sweep_value)
    scenario = _apply_sweep(config, scenario, value)
    out = {}
    for scheme in config.schemes:
        allocation = allocate_subchannels(scenario, scheme)
        for method in config.methods:
            out[(method, scheme.value)] = run_method(method, scenario, allocation, config)
    return out


def _snapshot_rows(config: ExperimentConfig, snapshot_index: int):
    base = generate_scenario(config.scenario, config.base_seed + snapshot_index)
    fingerprint = base.fingerprint()
    rows, traces = [], {}
    for value in config.values:
        scenario = _apply_sweep(config, base, value)
        for scheme in config.schemes:
            allocation = allocate_subchannels(scenario, scheme)
            for method in config.methods:
                res = run_method(method, scenario, allocation, config)
                rows.append(SweepRow(
                    method=method, scheme=scheme.value, sweep_value=value,
                    snapshot=snapshot_index, aggregate_power_W=res.aggregate_power,
                    iterations=res.iterations_used, feasible=res.feasible,
                    converged=res.converged,
                    feasibility_fraction=float(np.mean(res.per_user_feasible)),
                    scenario_hash=fingerprint))
                if method == "jprc":
                    traces[(scheme.value, value, snapshot_index)] = res.power_trace
    return rows, traces


def _validate_grid_guard(config: ExperimentConfig) -> None:
    """Raise ``GridGuardError`` before any work if an oracle method cannot run."""
    if not {"exhaustive", "equal_power"} & set(config.methods):
        return
    scenario = generate_scenario(config.scenario, config.base_seed)
    for scheme in config.schemes:
        allocation = allocate_subchannels(scenario, scheme)
        if "exhaustive" in config.methods:
            n = int(allocation.assign.sum())
            if n > config.max_variables:
                raise baselines.GridGuardError(
                    f"exhaustive search over {n} variables ({scheme.value}) exceeds the "
                    f"guard of {config.max_variables}")
        if "equal_power" in config.methods:
            n = int(allocation.assign.any(axis=1).sum())
            if n > config.max_variables:
                raise baselines.GridGuardError(
                    f"equal-power search over {n} variables ({scheme.value}) exceeds the "
                    f"guard of {config.max_variables}")


def run_sweep(config: ExperimentConfig, jobs: int = 1) -> SweepResult:
    """Every sweep value x snapshot x scheme x method, merged in snapshot order."""
    _validate_grid_guard(config)
    indices = range(config.num_snapshots)
    if jobs > 1 and config.num_snapshots > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_snapshot_rows, [config] * len(indices), indices,
                                  chunksize=max(1, len(indices) // (4 * jobs))))
    else:
        parts = [_snapshot_rows(config, i) for i in indices]
    rows, traces = [], {}
    for r, t in parts:
        rows.extend(r)
        traces.update(t)
    order = {m: n for n, m in enumerate(config.methods)}
    rows.sort(key=lambda r: (order[r.method], r.scheme, _value_key(r.sweep_value), r.snapshot))
    return SweepResult(config=config, rows=rows, traces=traces)


def improvement_ratio(ofdma_power, noma_power) -> float:
    """``(mean_OFDMA - mean_NOMA) / mean_OFDMA``."""
    o = float(np.mean(ofdma_power))
    n = float(np.mean(noma_power))
    return (o - n) / o


@dataclass(eq=False)
class SchemeComparison:
    #: sweep value -> improvement ratio of NOMA over OFDMA
    ratios: dict
    sweep: SweepResult

    @property
    def ratio(self) -> float:
        if len(self.ratios) != 1:
            raise ValueError("several sweep values; use .ratios")
        return next(iter(self.ratios.values()))


def compare_schemes(config: ExperimentConfig, jobs: int = 1,
                    method: str = "jprc") -> SchemeComparison:
    """NOMA over OFDMA aggregate-power improvement on paired snapshots."""
    if not {Scheme.NOMA, Scheme.OFDMA} <= set(config.schemes):
        raise ValueError("compare_schemes needs both NOMA and OFDMA in schemes")
    if method not in config.methods:
        config = dataclasses.replace(config, methods=config.methods + (method,))
    result = run_sweep(config, jobs=jobs)
    ratios = {}
    for value in config.values:
        noma = result.select(method, Scheme.NOMA, value)
        ofdma = result.select(method, Scheme.OFDMA, value)
        if config.exclude_infeasible:
            both = {r.snapshot for r in noma if r.feasible} & {r.snapshot for r in ofdma if r.feasible}
            noma = [r for r in noma if r.snapshot in both]
            ofdma = [r for r in ofdma if r.snapshot in both]
        ratios[value] = improvement_ratio([r.aggregate_power_W for r in ofdma],
                                          [r.aggregate_power_W for r in noma])
    return SchemeComparison(ratios=ratios, sweep=result)


# ---------------------------------------------------------------- export


def _fmt(value: float) -> str:
    return "" if isinstance(value, float) and math.isnan(value) else repr(value)


def write_sweep_csv(result: SweepResult, path: "str | os.PathLike") -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for r in result.rows:
            writer.writerow([r.method, r.scheme, _fmt(r.sweep_value), r.snapshot,
                             repr(r.aggregate_power_W), r.iterations, int(r.feasible),
                             int(r.converged), repr(r.feasibility_fraction)])
    return path


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def write_summary_json(result: SweepResult, path: "str | os.PathLike", extra: Optional[dict] = None) -> Path:
    path = Path(path)
    payload = {
        "config": result.config.to_dict(),
        "paired": result.check_pairing(),
        "groups": [dataclasses.asdict(s) for s in result.stats()],
    }
    if extra:
        payload.update(extra)
    path.write_text(json.dumps(_json_safe(payload), indent=2))
    return path


def write_run_result(result: RunResult, scenario: Scenario, allocation: Allocation,
                     out_dir: "str | os.PathLike", stem: str) -> dict:
    """Summary JSON, iteration trace CSV, per-(user, channel) CSV and per-user CSV."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    files["summary"] = out / f"{stem}_summary.json"
    summary = result.summary()
    summary["seed"] = scenario.seed
    summary["scenario_hash"] = scenario.fingerprint()
    files["summary"].write_text(json.dumps(_json_safe(summary), indent=2))

    files["trace"] = out / f"{stem}_trace.csv"
    with files["trace"].open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "aggregate_power_W", "max_power_delta_W"])
        for t, (p, d) in enumerate(zip(result.power_trace, result.delta_trace), start=1):
            w.writerow([t, repr(float(p)), repr(float(d))])

    report = result.rate_report
    files["powers"] = out / f"{stem}_powers.csv"
    with files["powers"].open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "user", "channel", "power_W", "rate_bps_per_Hz"])
        for i, k in zip(*np.nonzero(allocation.assign)):
            w.writerow([result.method, int(i), int(k), repr(float(result.final_powers[i, k])),
                        repr(float(report.per_channel_rate[i, k]))])

    files["users"] = out / f"{stem}_users.csv"
    with files["users"].open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "user", "serving_bs", "num_channels", "power_W",
                    "total_rate_bps_per_Hz", "min_rate_bps_per_Hz", "feasible"])
        for i in range(scenario.num_users):
            w.writerow([result.method, i, int(scenario.serving_bs[i]), int(allocation.assign[i].sum()),
                        repr(float(result.final_powers[i].sum())),
                        repr(float(report.total_rate[i])), repr(float(scenario.min_rate[i])),
                        int(result.per_user_feasible[i])])
    return files
