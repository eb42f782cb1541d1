"""Distributed joint power and rate control (JPRC).

Every user splits its minimum rate over its channels with a water-filling
rule driven by its effective interference, maps each per-channel target rate
to a target SINR and then tracks that SINR with a TPC-style update
``p = gamma_hat * zeta``. Users update synchronously from the previous
iteration's power matrix.

Target split for one user (channels sorted by ascending ``zeta``)::

    R_k = log2(1/zeta_k) + (MinRate - sum_{n=S+1}^{k*} log2(1/zeta_n)) / (k* - S)

Channels with a negative share are dropped from the worst end; channels whose
share exceeds ``log2(1 + p_peak / zeta)`` are pinned at peak power, their rate
is taken off ``MinRate`` and the split is redone over the remaining channels.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .interference import Coupling, RateReport, build_coupling, evaluate
from .model import Allocation, Scenario

__all__ = [
    "TargetState",
    "JprcParams",
    "RunResult",
    "compute_targets",
    "target_sinr",
    "power_update",
    "run",
    "tpc_map",
]

log = logging.getLogger(__name__)

LN2 = np.log(2.0)


def target_sinr(rate_hat):
    """``2**R - 1``, evaluated without cancellation for small ``R``."""
    return np.expm1(np.asarray(rate_hat, dtype=float) * LN2)


@dataclass(frozen=True, eq=False)
class _BatchTargets:
    rate_hat: np.ndarray   # (U, C)
    max_rate: np.ndarray   # (U, C)
    clamped: np.ndarray    # (U, C) bool
    active: np.ndarray     # (U, C) bool, positive share and not clamped
    residual: np.ndarray   # (U,) MinRate left for the non-peak channels
    feasible: np.ndarray   # (U,) bool


def _batch_targets(zeta: np.ndarray, min_rate: np.ndarray, peak: np.ndarray) -> _BatchTargets:
    """Water-filling target rates for all users at once.

    ``zeta`` is (U, C) with ``inf`` marking channels a user does not hold.
    """
    U, C = zeta.shape
    avail = np.isfinite(zeta)
    with np.errstate(divide="ignore"):
        log_inv = np.where(avail, -np.log2(zeta), 0.0)
    max_rate = np.where(avail, np.log2(1.0 + peak / zeta), 0.0)
    rows = np.arange(U)[:, None]
    counts = np.arange(1, C + 1)

    clamped = np.zeros((U, C), dtype=bool)
    residual = np.asarray(min_rate, dtype=float).copy()
    free_rate = np.zeros((U, C))

    for _ in range(C + 1):
        free = avail & ~clamped
        n_free = free.sum(axis=1)
        order = np.argsort(np.where(free, zeta, np.inf), axis=1, kind="stable")
        lg = np.where(np.take_along_axis(free, order, axis=1),
                      np.take_along_axis(log_inv, order, axis=1), 0.0)
        level = (residual[:, None] - np.cumsum(lg, axis=1)) / counts
        # share of the worst kept channel when the first m are kept
        worst = lg + level
        ok = (counts <= n_free[:, None]) & (worst >= 0)
        # drop from the worst end until the last kept share is non-negative
        n_keep = np.where(ok.any(axis=1), C - np.argmax(ok[:, ::-1], axis=1),
                          np.minimum(n_free, 1))
        keep = counts[None, :] <= n_keep[:, None]
        lvl = np.take_along_axis(level, np.maximum(n_keep - 1, 0)[:, None], axis=1)
        sorted_rate = np.where(keep, np.maximum(lg + lvl, 0.0), 0.0)
        free_rate = np.zeros((U, C))
        free_rate[rows, order] = sorted_rate

        over = free & (free_rate > max_rate)
        if not over.any():
            break
        residual = residual - np.where(over, max_rate, 0.0).sum(axis=1)
        clamped |= over

    free = avail & ~clamped
    rate_hat = np.where(clamped, max_rate, np.where(free, free_rate, 0.0))
    active = free & (free_rate > 0)
    tol = 1e-12 * np.maximum(1.0, np.asarray(min_rate, dtype=float))
    feasible = (free.sum(axis=1) > 0) | (residual <= tol)
    return _BatchTargets(rate_hat=rate_hat, max_rate=max_rate, clamped=clamped,
                         active=active, residual=residual, feasible=feasible)


def _batch_powers(targets: _BatchTargets, zeta: np.ndarray, peak: np.ndarray) -> np.ndarray:
    tracked = np.where(targets.active, target_sinr(targets.rate_hat) * np.where(
        targets.active, zeta, 0.0), 0.0)
    p = np.where(targets.clamped, peak, tracked)
    return np.clip(p, 0.0, peak)


@dataclass(frozen=True, eq=False)
class TargetState:
    """Target-rate bookkeeping of one user over its own channel list.

    Channel positions refer to the order of the ``zeta`` list passed to
    :func:`compute_targets`. ``sorted_order`` lists peak-power channels
    first, then the rest, each group by ascending ``zeta``; with equal peak
    powers this is simply ascending ``zeta``.
    """

    sorted_order: np.ndarray
    k_star: int
    num_peak: int
    min_rate_residual: float
    target_rate: np.ndarray
    max_rate: np.ndarray
    target_sinr: np.ndarray
    feasible: bool

    @property
    def S(self) -> int:
        return self.num_peak


def compute_targets(zeta: Sequence[float], min_rate: float, peak: Sequence[float]) -> TargetState:
    """Per-channel target rates and SINRs for one user."""
    z = np.asarray(zeta, dtype=float).ravel()
    pk = np.broadcast_to(np.asarray(peak, dtype=float), z.shape)
    if z.size == 0:
        raise ValueError("user has no channels")
    if not np.all(np.isfinite(z)) or np.any(z <= 0):
        raise ValueError("effective interference must be finite and > 0")
    if not np.all(pk > 0):
        raise ValueError("peak powers must be > 0")
    if min_rate < 0:
        raise ValueError("min_rate must be >= 0")
    bt = _batch_targets(z[None, :], np.array([float(min_rate)]), pk[None, :])
    clamped, active = bt.clamped[0], bt.active[0]
    by_zeta = np.argsort(z, kind="stable")
    order = np.concatenate([by_zeta[clamped[by_zeta]], by_zeta[~clamped[by_zeta]]])
    rate_hat = bt.rate_hat[0]
    return TargetState(
        sorted_order=order,
        k_star=int(clamped.sum() + active.sum()),
        num_peak=int(clamped.sum()),
        min_rate_residual=float(bt.residual[0]),
        target_rate=rate_hat,
        max_rate=bt.max_rate[0],
        target_sinr=target_sinr(rate_hat),
        feasible=bool(bt.feasible[0]),
    )


def power_update(targets: TargetState, zeta: Sequence[float], peak: Sequence[float]) -> np.ndarray:
    """Peak power on the first ``S`` sorted channels, ``gamma_hat * zeta`` up to ``k*``, else 0."""
    z = np.asarray(zeta, dtype=float).ravel()
    pk = np.broadcast_to(np.asarray(peak, dtype=float), z.shape)
    p = np.zeros_like(z)
    order = targets.sorted_order
    S, k_star = targets.num_peak, targets.k_star
    p[order[:S]] = pk[order[:S]]
    mid = order[S:k_star]
    p[mid] = targets.target_sinr[mid] * z[mid]
    return np.clip(p, 0.0, pk)


def tpc_map(coupling: Coupling, min_rate, powers: np.ndarray) -> np.ndarray:
    """Single-channel update ``(2**R_min - 1) * zeta(P)``, without peak clipping."""
    z = coupling.zeta(powers)
    gamma = target_sinr(np.asarray(min_rate, dtype=float))
    gamma = gamma[:, None] if gamma.ndim == 1 else gamma
    return np.where(coupling.assign, gamma * np.where(coupling.assign, z, 0.0), 0.0)


@dataclass(frozen=True)
class JprcParams:
    max_iterations: int = 500
    convergence_tol: float = 1e-12
    #: 1.0 is the plain algorithm; smaller values blend in the previous powers
    damping: float = 1.0

    def __post_init__(self) -> None:
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValueError(f"max_iterations must be an integer >= 1, got {self.max_iterations!r}")
        if not self.convergence_tol > 0:
            raise ValueError(f"convergence_tol must be > 0, got {self.convergence_tol!r}")
        if not 0 < self.damping <= 1:
            raise ValueError(f"damping must be in (0, 1], got {self.damping!r}")


@dataclass(eq=False)
class RunResult:
    final_powers: np.ndarray
    iterations_used: int
    power_trace: np.ndarray
    delta_trace: np.ndarray
    rate_report: RateReport
    per_user_feasible: np.ndarray
    converged: bool
    method: str = "jprc"
    scheme: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def aggregate_power(self) -> float:
        return float(self.final_powers.sum())

    @property
    def feasible(self) -> bool:
        return bool(np.all(self.per_user_feasible))

    def summary(self) -> dict:
        return {
            "method": self.method,
            "scheme": self.scheme,
            "aggregate_power_W": self.aggregate_power,
            "iterations": self.iterations_used,
            "converged": self.converged,
            "feasible": self.feasible,
            "feasibility_fraction": float(np.mean(self.per_user_feasible)),
            "per_user_feasible": [bool(x) for x in self.per_user_feasible],
            "total_rate": self.rate_report.total_rate.tolist(),
            **self.extra,
        }


IterationCallback = Callable[[int, np.ndarray, np.ndarray, _BatchTargets], None]


def run(scenario: Scenario, allocation: Allocation, params: Optional[JprcParams] = None,
        callback: Optional[IterationCallback] = None) -> RunResult:
    """Iterate JPRC from zero power until the largest power change drops below tolerance.

    ``callback(t, zeta, powers, targets)`` is invoked after every iteration
    with the effective interference that was read and the powers committed.
    Non-convergence is reported through ``RunResult.converged``.
    """
    params = params or JprcParams()
    coupling = build_coupling(scenario, allocation)
    peak = np.where(allocation.assign, scenario.peak_power, 0.0)
    min_rate = scenario.min_rate
    powers = np.zeros(allocation.assign.shape)
    trace, deltas = [], []
    converged = False
    targets = None

    for t in range(1, params.max_iterations + 1):
        zeta = coupling.zeta(powers)
        targets = _batch_targets(zeta, min_rate, peak)
        update = _batch_powers(targets, zeta, peak)
        if params.damping < 1.0:
            update = powers + params.damping * (update - powers)
        delta = float(np.max(np.abs(update - powers))) if update.size else 0.0
        powers = update
        trace.append(float(powers.sum()))
        deltas.append(delta)
        if callback is not None:
            callback(t, zeta, powers, targets)
        if delta < params.convergence_tol:
            converged = True
            break

    if not converged:
        log.info("JPRC stopped after %d iterations without converging (last delta %.3g W)",
                 len(trace), deltas[-1])
    report = evaluate(scenario, allocation, powers, coupling)
    return RunResult(
        final_powers=powers,
        iterations_used=len(trace),
        power_trace=np.array(trace),
        delta_trace=np.array(deltas),
        rate_report=report,
        per_user_feasible=targets.feasible.copy(),
        converged=converged,
        scheme=allocation.scheme.value,
    )
