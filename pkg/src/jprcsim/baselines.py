"""Reference solutions: single-cell water-filling, grid oracles.

``exhaustive_search`` and ``equally_reduced_power`` return the exact
minimum-aggregate-power point of a quantised power grid, using two
reductions that never discard a candidate optimum:

* exhaustive search enumerates every grid column of all channels but the
  last one. Given those, the last channel is a single-channel power control
  problem whose feasible grid points are closed under componentwise minimum
  (each user's requirement is non-decreasing in the others' powers), so its
  least feasible point is unique, has the smallest sum, and is reached by
  iterating "smallest grid level meeting my rate" from zero.
* the equal-power search enumerates the levels of all users but the last;
  the last user's level is the smallest grid level meeting its own rate,
  since every other user's rate is non-increasing in it.

Ties in aggregate power go to the lexicographically smallest grid index.
Exhaustive-search variables are ordered channel-major (channel, then user).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .interference import FEASIBILITY_TOL, Coupling, build_coupling, evaluate
from .jprc import LN2, RunResult
from .model import Allocation, Scenario

__all__ = [
    "InfeasibleError",
    "GridGuardError",
    "GridSpec",
    "OracleResult",
    "water_filling_single_cell",
    "exhaustive_search",
    "equally_reduced_power",
]


class InfeasibleError(ValueError):
    """No power allocation meets the rate requirements."""

    def __init__(self, message: str, powers: Optional[np.ndarray] = None):
        super().__init__(message)
        self.powers = powers


class GridGuardError(ValueError):
    """Grid search would exceed the configured size guard."""


def water_filling_single_cell(gains: Sequence[float], noise: float, min_rate: float,
                              peak: Sequence[float]) -> np.ndarray:
    """Minimum-power allocation of one interference-free user.

    Channels sorted by decreasing ``h/N`` get peak power on the first ``S``
    of them, ``mu - N/h_k`` up to ``k*`` with the water level
    ``mu = (2**MinRate * prod N/h_n) ** (1 / (k* - S))``, and nothing beyond.

    Raises :class:`InfeasibleError` if even peak power on every channel
    falls short of ``min_rate``.
    """
    h = np.asarray(gains, dtype=float).ravel()
    pk = np.broadcast_to(np.asarray(peak, dtype=float), h.shape)
    if h.size == 0 or np.any(h <= 0) or noise <= 0 or np.any(pk <= 0):
        raise ValueError("gains, noise and peak powers must be positive")
    if min_rate < 0:
        raise ValueError("min_rate must be >= 0")
    zeta = noise / h
    order = sorted(range(h.size), key=lambda k: (zeta[k], k))
    at_peak: set[int] = set()
    need = float(min_rate)
    powers = np.zeros(h.size)

    while True:
        free = [k for k in order if k not in at_peak]
        if not free:
            if need > 1e-12 * max(1.0, min_rate):
                raise InfeasibleError(
                    f"peak power on all {h.size} channels gives "
                    f"{min_rate - need:.6g} < {min_rate:.6g} bps/Hz", powers=pk.copy())
            break
        # largest k* whose worst channel still lies under the water level
        for m in range(len(free), 0, -1):
            log_mu = (need + math.fsum(math.log2(zeta[k]) for k in free[:m])) / m
            if log_mu >= math.log2(zeta[free[m - 1]]):
                break
        mu = 2.0 ** log_mu
        trial = {k: max(mu - zeta[k], 0.0) for k in free[:m]}
        over = [k for k, p in trial.items() if p > pk[k]]
        if not over:
            break
        for k in over:
            at_peak.add(k)
            need -= math.log2(1.0 + pk[k] / zeta[k])

    for k in at_peak:
        powers[k] = pk[k]
    if free:
        for k, p in trial.items():
            powers[k] = p
    return powers


@dataclass(frozen=True)
class GridSpec:
    """Uniform power grid ``{0, step, 2*step, ..., max}`` per searched variable.

    ``per_variable_max`` defaults to the peak power of each variable.
    """

    step: float
    per_variable_max: Optional[tuple] = None
    max_variables: int = 6
    max_points: int = 50_000_000
    chunk_size: int = 1 << 16

    def __post_init__(self) -> None:
        if not self.step > 0:
            raise ValueError(f"grid step must be > 0, got {self.step!r}")
        if self.max_variables < 1:
            raise ValueError("max_variables must be >= 1")

    def values(self, upper: float) -> np.ndarray:
        n = int(math.floor(upper / self.step * (1 + 1e-12)))
        vals = self.step * np.arange(n + 1)
        if vals[-1] < upper * (1 - 1e-12):
            vals = np.append(vals, upper)
        return vals


@dataclass(eq=False)
class OracleResult:
    powers: np.ndarray
    aggregate: float
    method: str
    grid_step: float
    grid_index: tuple

    def as_run_result(self, scenario: Scenario, allocation: Allocation) -> RunResult:
        report = evaluate(scenario, allocation, self.powers)
        return RunResult(
            final_powers=self.powers,
            iterations_used=0,
            power_trace=np.array([self.aggregate]),
            delta_trace=np.array([0.0]),
            rate_report=report,
            per_user_feasible=report.per_user_feasible,
            converged=True,
            method=self.method,
            scheme=allocation.scheme.value,
            extra={"grid_step_W": self.grid_step},
        )


def _resolve_min_rate(scenario: Scenario, min_rate) -> np.ndarray:
    if min_rate is None:
        return scenario.min_rate
    return np.broadcast_to(np.asarray(min_rate, dtype=float), (scenario.num_users,))


def _smallest_level(grid: np.ndarray, step: float, need: np.ndarray, zeta: np.ndarray,
                    start: Optional[np.ndarray] = None) -> np.ndarray:
    """Smallest index into ``grid`` with ``log2(1 + grid[ix]/zeta) >= need``.

    Rows that cannot reach ``need`` get ``len(grid)`` (one past the end).
    """
    top = len(grid) - 1
    req = np.expm1(np.maximum(need, 0.0) * LN2) * zeta
    ix = np.ceil(np.minimum(req / step, top)).astype(np.int64)
    if start is not None:
        ix = np.maximum(ix, start)

    def meets(i):
        return np.log2(1.0 + grid[i] / zeta) >= need

    # the closed form can be a step off through rounding or the end point
    for _ in range(3):
        down = np.maximum(ix - 1, 0)
        ix = np.where((ix > 0) & meets(down), down, ix)
        ix = np.where(~meets(ix) & (ix < top), ix + 1, ix)
    return np.where(meets(ix), ix, top + 1)


def _prefix_chunks(shape: tuple, chunk: int):
    """Index arrays over a Cartesian grid, in lexicographic order, ``chunk`` at a time."""
    if not shape:
        yield ()
        return
    total = math.prod(shape)
    for start in range(0, total, chunk):
        yield np.unravel_index(np.arange(start, min(start + chunk, total)), shape)


def _keep_best(best, agg: np.ndarray, feasible: np.ndarray, index_of):
    """Fold one lexicographically ordered chunk into the running best."""
    if not feasible.any():
        return best
    agg = np.where(feasible, agg, np.inf)
    chunk_min = agg.min()
    if best is not None and not chunk_min < best[0] * (1 - 1e-12):
        return best
    first = int(np.argmax(agg <= chunk_min * (1 + 1e-12)))
    return float(agg[first]), index_of(first)


def _search_cells(coupling: Coupling, min_rate: np.ndarray, cells: list[tuple[int, int]],
                  grids: list[np.ndarray], spec: GridSpec) -> tuple[float, tuple]:
    """Exhaustive grid search over one power per (user, channel) cell."""
    last_k = cells[-1][1]
    head = [c for c in cells if c[1] != last_k]
    tail = [c for c in cells if c[1] == last_k]
    head_grids, tail_grids = grids[:len(head)], grids[len(head):]
    shape = tuple(len(g) for g in head_grids)
    if math.prod(shape) > spec.max_points:
        raise GridGuardError(
            f"exhaustive search: {math.prod(shape)} grid prefixes exceed "
            f"max_points={spec.max_points}")
    U = coupling.assign.shape[0]
    need_all = min_rate - FEASIBILITY_TOL
    pos = {c: v for v, c in enumerate(head)}
    head_interferers = [
        [(pos[(j, k)], coupling.weight[i, j, k]) for j in np.flatnonzero(coupling.weight[i, :, k])]
        for i, k in head
    ]
    tail_users = [i for i, _ in tail]
    tail_w = coupling.weight[np.ix_(tail_users, tail_users, [last_k])][:, :, 0]
    tail_gain = coupling.own_gain[tail_users, last_k]
    tail_noise = coupling.noise[tail_users]
    max_steps = sum(len(g) for g in tail_grids) + 2

    best = None
    for idx in _prefix_chunks(shape, spec.chunk_size):
        n = idx[0].size if idx else 1
        levels = [g[ix] for g, ix in zip(head_grids, idx)]
        have = np.zeros((U, n))
        for (i, k), lv, inter in zip(head, levels, head_interferers):
            total = coupling.noise[i] + sum(w * levels[v] for v, w in inter)
            have[i] += np.log2(1.0 + lv * coupling.own_gain[i, k] / total)
        need = need_all[:, None] - have
        feasible = np.ones(n, dtype=bool)
        for u in range(U):
            if u not in tail_users:
                feasible &= need[u] <= 0

        # least feasible point of the last channel, by monotone iteration from zero
        ix = np.zeros((len(tail), n), dtype=np.int64)
        for _ in range(max_steps):
            p = np.stack([g[np.minimum(r, len(g) - 1)] for g, r in zip(tail_grids, ix)])
            zeta = (tail_w @ p + tail_noise[:, None]) / tail_gain[:, None]
            new = np.stack([_smallest_level(g, spec.step, need[u], z, start=r)
                            for g, u, z, r in zip(tail_grids, tail_users, zeta, ix)])
            stuck = np.any(new >= np.array([len(g) for g in tail_grids])[:, None], axis=0)
            new[:, stuck] = ix[:, stuck]
            feasible &= ~stuck
            if np.array_equal(new, ix):
                break
            ix = new
        tail_levels = [g[r] for g, r in zip(tail_grids, ix)]
        agg = sum(levels, np.zeros(n)) + sum(tail_levels, np.zeros(n))
        best = _keep_best(best, agg, feasible,
                          lambda f: tuple(int(i[f]) for i in idx) + tuple(int(r[f]) for r in ix))
    if best is None:
        raise InfeasibleError("exhaustive search: no feasible point on the power grid")
    return best


def _search_levels(coupling: Coupling, min_rate: np.ndarray,
                   variables: list[tuple[int, np.ndarray]], grids: list[np.ndarray],
                   spec: GridSpec) -> tuple[float, tuple]:
    """Grid search over one common power level per user, applied to all its channels."""
    shape = tuple(len(g) for g in grids[:-1])
    if math.prod(shape) > spec.max_points:
        raise GridGuardError(
            f"equal-power search: {math.prod(shape)} grid prefixes exceed "
            f"max_points={spec.max_points}")
    U = coupling.assign.shape[0]
    need_all = min_rate - FEASIBILITY_TOL
    var_of = {u: v for v, (u, _) in enumerate(variables)}
    owner, owner_channels = variables[-1]
    last_grid = grids[-1]
    sizes = [len(ch) for _, ch in variables]

    def zeta(u, k, levels):
        total = coupling.noise[u]
        for j in np.flatnonzero(coupling.weight[u, :, k]):
            total = total + coupling.weight[u, j, k] * levels[var_of[j]]
        return total / coupling.own_gain[u, k]

    best = None
    for idx in _prefix_chunks(shape, spec.chunk_size):
        n = idx[0].size if idx else 1
        levels = [g[ix] for g, ix in zip(grids[:-1], idx)] + [np.zeros(n)]
        # the owner's zeta does not involve its own level
        z_owner = [zeta(owner, k, levels) for k in owner_channels]

        def owner_rate(i):
            return sum(np.log2(1.0 + last_grid[i] / z) for z in z_owner)

        lo = np.zeros(n, dtype=np.int64)
        hi = np.full(n, len(last_grid) - 1, dtype=np.int64)
        while np.any(lo < hi):
            open_ = lo < hi
            mid = (lo + hi) // 2
            ok = owner_rate(mid) >= need_all[owner]
            hi = np.where(open_ & ok, mid, hi)
            lo = np.where(open_ & ~ok, mid + 1, lo)
        levels[-1] = last_grid[lo]
        feasible = owner_rate(lo) >= need_all[owner]
        for u, chans in variables[:-1]:
            r = sum(np.log2(1.0 + levels[var_of[u]] / zeta(u, k, levels)) for k in chans)
            feasible &= r >= need_all[u]
        agg = sum(s * lv for s, lv in zip(sizes, levels))
        best = _keep_best(best, agg, feasible,
                          lambda f: tuple(int(i[f]) for i in idx) + (int(lo[f]),))
    if best is None:
        raise InfeasibleError("equal-power search: no feasible point on the power grid")
    return best


def _grid_upper(spec: GridSpec, i: int, default: float) -> float:
    if spec.per_variable_max is None:
        return default
    return float(spec.per_variable_max[i])


def exhaustive_search(scenario: Scenario, allocation: Allocation, min_rate,
                      grid: GridSpec) -> OracleResult:
    """Grid optimum over every assigned (user, channel) power.

    ``min_rate=None`` uses the scenario's requirements. Raises
    :class:`InfeasibleError` when no grid point is feasible and
    :class:`GridGuardError` when there are more than
    ``grid.max_variables`` variables.
    """
    cells = [(int(i), int(k)) for k, i in zip(*np.nonzero(allocation.assign.T))]
    if len(cells) > grid.max_variables:
        raise GridGuardError(
            f"exhaustive search over {len(cells)} variables exceeds the guard of "
            f"{grid.max_variables}")
    if not cells:
        raise ValueError("allocation assigns no channels")
    grids = [grid.values(_grid_upper(grid, v, scenario.peak_power[i, k]))
             for v, (i, k) in enumerate(cells)]
    agg, index = _search_cells(build_coupling(scenario, allocation),
                               _resolve_min_rate(scenario, min_rate), cells, grids, grid)
    powers = np.zeros(allocation.assign.shape)
    for (i, k), g, ix in zip(cells, grids, index):
        powers[i, k] = g[ix]
    return OracleResult(powers=powers, aggregate=agg, method="exhaustive",
                        grid_step=grid.step, grid_index=index)


def equally_reduced_power(scenario: Scenario, allocation: Allocation, min_rate,
                          grid: GridSpec) -> OracleResult:
    """Grid optimum when each user puts one common power level on all its channels.

    Levels are searched jointly over users since interference couples
    their feasibility.
    """
    variables = [(i, np.flatnonzero(allocation.assign[i]))
                 for i in range(scenario.num_users) if allocation.assign[i].any()]
    if len(variables) > grid.max_variables:
        raise GridGuardError(
            f"equal-power search over {len(variables)} variables exceeds the guard of "
            f"{grid.max_variables}")
    if not variables:
        raise ValueError("allocation assigns no channels")
    grids = [grid.values(_grid_upper(grid, v, float(scenario.peak_power[i, ch].min())))
             for v, (i, ch) in enumerate(variables)]
    agg, index = _search_levels(build_coupling(scenario, allocation),
                                _resolve_min_rate(scenario, min_rate), variables, grids, grid)
    powers = np.zeros(allocation.assign.shape)
    for (i, ch), g, ix in zip(variables, grids, index):
        powers[i, ch] = g[ix]
    return OracleResult(powers=powers, aggregate=agg, method="equal_power",
                        grid_step=grid.step, grid_index=index)
