"""Interferer sets, effective interference, SINR and rates for NOMA and OFDMA.

Effective interference of user ``i`` on channel ``k`` is the
interference-plus-noise at its serving BS divided by its own gain,

    zeta = (sum_{j in Q} p[j, k] * h[b_i, j, k] + N[b_i]) / h[b_i, i, k]

and the rate is ``log2(1 + p / zeta)``. Under NOMA the interferer set ``Q``
holds same-cell users with a strictly larger gain on ``k`` plus every
other-cell user on ``k``; under OFDMA only the other-cell users.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Allocation, Scenario, Scheme

__all__ = [
    "FEASIBILITY_TOL",
    "Coupling",
    "RateReport",
    "build_coupling",
    "interfering_set",
    "effective_interference",
    "rate",
    "evaluate",
]

#: A user meets its rate requirement when R_i >= R_min - FEASIBILITY_TOL.
FEASIBILITY_TOL = 1e-9


def _stronger(h_j: float, h_i: float, j: int, i: int) -> bool:
    # exact gain ties: the lower index is treated as stronger
    return h_j > h_i or (h_j == h_i and j < i)


def interfering_set(scenario: Scenario, allocation: Allocation, i: int, k: int) -> set[int]:
    """Users whose signal on channel ``k`` interferes with user ``i``."""
    a = allocation.assign
    if not a[i, k]:
        raise ValueError(f"user {i} is not assigned to channel {k}")
    m = scenario.serving_bs[i]
    h = scenario.path_gain[m, :, k]
    out = set()
    for j in range(scenario.num_users):
        if j == i or not a[j, k]:
            continue
        if scenario.serving_bs[j] != m:
            out.add(j)
        elif allocation.scheme is Scheme.NOMA and _stronger(h[j], h[i], j, i):
            out.add(j)
    return out


def effective_interference(scenario: Scenario, allocation: Allocation,
                           powers: np.ndarray, i: int, k: int) -> float:
    m = scenario.serving_bs[i]
    h = scenario.path_gain[m, :, k]
    if not h[i] > 0:
        raise ValueError(f"user {i} has zero gain on channel {k}")
    total = scenario.noise[m]
    for j in sorted(interfering_set(scenario, allocation, i, k)):
        total += powers[j, k] * h[j]
    return total / h[i]


def rate(p, zeta):
    """Spectral efficiency ``log2(1 + p / zeta)`` in bps/Hz."""
    return np.log2(1.0 + np.asarray(p, dtype=float) / zeta)


@dataclass(frozen=True, eq=False)
class Coupling:
    """Vectorised form of the interference structure of one (scenario, allocation).

    ``weight[i, j, k]`` equals ``h[b_i, j, k]`` when ``j`` interferes with
    ``i`` on ``k`` and 0 otherwise.
    """

    weight: np.ndarray   # (U, U, C)
    own_gain: np.ndarray  # (U, C)
    noise: np.ndarray     # (U,) noise at each user's serving BS
    assign: np.ndarray    # (U, C) bool

    def zeta(self, powers: np.ndarray) -> np.ndarray:
        """(U, C) effective interference; ``inf`` on unassigned cells."""
        interference = np.einsum("ijk,jk->ik", self.weight, powers)
        z = (interference + self.noise[:, None]) / self.own_gain
        return np.where(self.assign, z, np.inf)

    def noise_only_zeta(self) -> np.ndarray:
        z = self.noise[:, None] / self.own_gain
        return np.where(self.assign, z, np.inf)


def build_coupling(scenario: Scenario, allocation: Allocation) -> Coupling:
    U = scenario.num_users
    a = allocation.assign
    if a.shape != (U, scenario.num_subchannels):
        raise ValueError("allocation does not match scenario dimensions")
    b = scenario.serving_bs
    # g[i, j, k] = h[b_i, j, k]
    g = scenario.path_gain[b]
    own = g[np.arange(U), np.arange(U), :]
    same_cell = (b[:, None] == b[None, :])[:, :, None]
    mask = a[:, None, :] & a[None, :, :] & ~same_cell
    if allocation.scheme is Scheme.NOMA:
        idx = np.arange(U)
        lower = (idx[None, :] < idx[:, None])[:, :, None]  # j < i
        stronger = (g > own[:, None, :]) | ((g == own[:, None, :]) & lower)
        mask |= a[:, None, :] & a[None, :, :] & same_cell & stronger
    mask[np.arange(U), np.arange(U), :] = False
    return Coupling(weight=np.where(mask, g, 0.0), own_gain=own,
                    noise=scenario.noise[b].astype(float), assign=a.copy())


@dataclass(frozen=True, eq=False)
class RateReport:
    per_channel_rate: np.ndarray  # (U, C), 0 on unassigned channels
    total_rate: np.ndarray        # (U,)
    aggregate_power: float
    per_user_feasible: np.ndarray  # (U,) bool

    @property
    def feasibility_fraction(self) -> float:
        return float(np.mean(self.per_user_feasible))


def evaluate(scenario: Scenario, allocation: Allocation, powers: np.ndarray,
             coupling: Coupling | None = None) -> RateReport:
    """Per-channel and total rates, aggregate power and per-user feasibility."""
    if coupling is None:
        coupling = build_coupling(scenario, allocation)
    p = np.where(allocation.assign, np.asarray(powers, dtype=float), 0.0)
    zeta = coupling.zeta(p)
    r = np.where(allocation.assign, np.log2(1.0 + p / zeta), 0.0)
    total = r.sum(axis=1)
    return RateReport(
        per_channel_rate=r,
        total_rate=total,
        aggregate_power=float(p.sum()),
        per_user_feasible=total >= scenario.min_rate - FEASIBILITY_TOL,
    )
