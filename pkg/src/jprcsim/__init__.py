"""Distributed joint power and rate control for uplink multi-cell NOMA/OFDMA networks."""

from .baselines import (GridSpec, InfeasibleError, equally_reduced_power, exhaustive_search,
                        water_filling_single_cell)
from .harness import ExperimentConfig, compare_schemes, run_snapshot, run_sweep
from .interference import evaluate, effective_interference, interfering_set, rate
from .jprc import JprcParams, RunResult, compute_targets, power_update, run, target_sinr
from .model import (Allocation, Scenario, ScenarioConfig, Scheme, allocate_subchannels,
                    generate_scenario)

__version__ = "0.1.0"
