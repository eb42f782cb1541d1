"""End-to-end acceptance checks, one test per criterion.

Each test prints a ``[criterion N] PASS|FAIL`` line with the measured value
and threshold; the lines are repeated in the terminal summary. Run alone with
``pytest tests/test_acceptance.py -v``.
"""

import dataclasses
import time

import numpy as np
import pytest

from jprcsim.baselines import (GridSpec, InfeasibleError, equally_reduced_power,
                               exhaustive_search, water_filling_single_cell)
from jprcsim.harness import ExperimentConfig, compare_schemes, run_sweep
from jprcsim.interference import build_coupling
from jprcsim.jprc import JprcParams, compute_targets, run, tpc_map
from jprcsim.model import ScenarioConfig, allocate_subchannels, generate_scenario

from conftest import ACCEPTANCE_LINES, full_allocation, random_scenario

pytestmark = pytest.mark.acceptance


def report(number, name, ok, detail):
    line = f"[criterion {number}] {'PASS' if ok else 'FAIL'} {name}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


# ---------------------------------------------------------------- 1


def test_criterion_1_water_filling_equivalence():
    t0 = time.perf_counter()
    cfg = ScenarioConfig(num_cells=1, area_side=500.0, users_per_cell=4, num_subchannels=100)
    worst, compared = 0.0, 0
    for seed in range(10):
        base = generate_scenario(cfg, seed)
        for r in range(50, 101, 5):
            scn = base.with_requirements(min_rate=float(r))
            alloc = allocate_subchannels(scn, "OFDMA")
            res = run(scn, alloc)
            for i, ch in enumerate(alloc.per_user_channels):
                try:
                    ref = water_filling_single_cell(scn.own_gain[i, ch], scn.noise[0], r,
                                                    scn.peak_power[i, ch])
                except InfeasibleError as err:
                    ref = err.powers
                got = res.final_powers[i, ch]
                rel = np.abs(got - ref) / np.where(ref > 0, ref, 1.0)
                worst = max(worst, float(rel.max()))
                compared += ref.size
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 10
    report(1, "water-filling equivalence", ok,
           f"max relative deviation {worst:.2e} (<= 1e-6) over {compared} powers, "
           f"{elapsed:.1f} s (< 10 s)")
    assert ok


# ---------------------------------------------------------------- 2


def test_criterion_2_convergence_speed():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(num_snapshots=100)
    result = run_sweep(cfg)
    iters = np.array([r.iterations for r in result.rows])
    flat, converged = 0, 0
    for trace, row in zip((result.traces[(r.scheme, r.sweep_value, r.snapshot)]
                           for r in result.rows), result.rows):
        if not row.converged:
            continue
        converged += 1
        tail = trace[24:]
        change = np.abs(np.diff(tail)) / tail[:-1] if tail.size > 1 else np.zeros(0)
        flat += bool(np.all(change < 1e-4))
    median = float(np.median(iters))
    share = flat / converged if converged else 0.0
    elapsed = time.perf_counter() - t0
    ok = median <= 50 and share >= 0.9 and elapsed < 120
    report(2, "convergence speed", ok,
           f"median iterations {median:g} (<= 50), flat after iteration 25 in "
           f"{flat}/{converged} converged runs = {share:.3f} (>= 0.90), "
           f"{len(result.rows) - converged} not converged, {elapsed:.1f} s (< 120 s)")
    assert ok


# ---------------------------------------------------------------- 3


def test_criterion_3_noma_gain():
    t0 = time.perf_counter()
    cmp_ = compare_schemes(ExperimentConfig(num_snapshots=200))
    ratio = cmp_.ratio
    feas = np.mean([r.feasible for r in cmp_.sweep.rows])
    elapsed = time.perf_counter() - t0
    ok = 0.40 <= ratio <= 0.75 and cmp_.sweep.check_pairing() and elapsed < 300
    report(3, "NOMA vs OFDMA gain", ok,
           f"improvement ratio {ratio:.4f} (in [0.40, 0.75]) over 200 paired snapshots, "
           f"run feasibility {feas:.3f}, {elapsed:.1f} s (< 300 s)")
    assert ok


# ---------------------------------------------------------------- 4


def linear_fixed_point(scn, gamma):
    b = scn.serving_bs
    U = scn.num_users
    h = scn.path_gain[b, :, 0]
    own = h[np.arange(U), np.arange(U)]
    F = gamma[:, None] * h / own[:, None]
    np.fill_diagonal(F, 0.0)
    return np.linalg.solve(np.eye(U) - F, gamma * scn.noise[b] / own)


def test_criterion_4_oracle_near_optimality():
    t0 = time.perf_counter()
    peak = 0.5e-6
    step = peak / 200
    scn_cfg = ScenarioConfig(num_cells=2, users_per_cell=1, num_subchannels=2, peak_power=peak,
                             min_rate=1.0)
    cfg = ExperimentConfig(scenario=scn_cfg, schemes=("NOMA",), num_snapshots=50,
                           sweep_variable="min_rate", sweep_values=(1, 2, 3),
                           methods=("jprc", "exhaustive"), grid_step=step)
    result = run_sweep(cfg)
    # a seed passes when JPRC is feasible and within the bound at every R_min
    # of the grid where the oracle found a feasible point
    passed = {s: True for s in range(cfg.num_snapshots)}
    solvable_seeds, parts = set(), []
    for value in cfg.sweep_values:
        jp = {r.snapshot: r for r in result.select("jprc", "NOMA", value)}
        ex = {r.snapshot: r for r in result.select("exhaustive", "NOMA", value)}
        solvable = [s for s in ex if ex[s].feasible]
        solvable_seeds.update(solvable)
        good = 0
        for s in solvable:
            hit = jp[s].feasible and (jp[s].aggregate_power_W
                                      <= 1.05 * ex[s].aggregate_power_W + 4 * step)
            passed[s] &= hit
            good += hit
        parts.append(f"R_min={value:g}: {good}/{len(solvable)}")
    n_pass = sum(passed[s] for s in solvable_seeds)
    share = n_pass / len(solvable_seeds) if solvable_seeds else 0.0
    ok = share >= 0.9

    # single-channel variant against the closed-form linear solve
    lin_cfg = dataclasses.replace(scn_cfg, num_subchannels=1)
    worst, used = 0.0, 0
    for seed in range(50):
        for r in (1.0, 2.0, 3.0):
            scn = generate_scenario(lin_cfg, seed).with_requirements(min_rate=r)
            ref = linear_fixed_point(scn, np.full(2, 2.0 ** r - 1))
            if not (np.all(ref > 0) and np.all(ref < peak)):
                continue
            res = run(scn, allocate_subchannels(scn, "NOMA"), JprcParams(convergence_tol=1e-24))
            worst = max(worst, float(np.max(np.abs(res.final_powers[:, 0] - ref) / ref)))
            used += 1
    ok &= used > 0 and worst <= 1e-9
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 180
    report(4, "oracle near-optimality", ok,
           f"JPRC feasible and <= 1.05*exhaustive + 4*delta at every oracle-feasible R_min "
           f"on {n_pass}/{len(solvable_seeds)} seeds = {share:.3f} (>= 0.90) "
           f"[per value {', '.join(parts)}]; single-channel linear solve max relative "
           f"deviation {worst:.2e} over {used} interior instances (<= 1e-9); "
           f"{elapsed:.1f} s (< 180 s)")
    assert ok


# ---------------------------------------------------------------- 5


def test_criterion_5_monotone_trends():
    t0 = time.perf_counter()
    rates = tuple(range(5, 40, 5))
    by_rate = run_sweep(ExperimentConfig(num_snapshots=100, sweep_variable="min_rate",
                                         sweep_values=rates))
    peaks = (0.25e-3, 0.5e-3)
    by_peak = run_sweep(ExperimentConfig(num_snapshots=100, sweep_variable="peak_power",
                                         sweep_values=peaks))
    ok, parts = True, []
    for scheme in ("NOMA", "OFDMA"):
        m = [by_rate.stat("jprc", scheme, v).mean_aggregate_power_W for v in rates]
        up = all(b >= a for a, b in zip(m, m[1:]))
        q = [by_peak.stat("jprc", scheme, v).mean_aggregate_power_W for v in peaks]
        down = q[1] <= q[0]
        ok &= up and down
        parts.append(f"{scheme} R_min means {' '.join(f'{x:.3e}' for x in m)} "
                     f"{'non-decreasing' if up else 'NOT non-decreasing'}; "
                     f"peak means {q[0]:.4e} -> {q[1]:.4e} "
                     f"{'non-increasing' if down else 'NOT non-increasing'}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 300
    report(5, "monotone trends", ok, "; ".join(parts) + f"; {elapsed:.1f} s (< 300 s)")
    assert ok


# ---------------------------------------------------------------- 6


def test_criterion_6_property_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    results = {}

    # (a) target rates sum to the requirement on every feasible call
    worst, feasible_calls = 0.0, 0
    for _ in range(10_000):
        n = int(rng.integers(1, 30))
        zeta = 10 ** rng.uniform(-14, -6, size=n)
        peak = 10 ** rng.uniform(-8, -3, size=n)
        r = float(rng.uniform(0, 100))
        st_ = compute_targets(zeta, r, peak)
        if st_.feasible:
            worst = max(worst, abs(st_.target_rate.sum() - r))
            feasible_calls += 1
    results["a"] = (worst <= 1e-9, f"max |sum R - R_min| {worst:.1e} on {feasible_calls} feasible calls")

    # (b) and (c) along whole runs
    violations, runs, fp_worst = 0, 0, 0.0
    for seed in range(20):
        scn = generate_scenario(ScenarioConfig(num_subchannels=20), 500 + seed)
        for scheme in ("NOMA", "OFDMA"):
            alloc = allocate_subchannels(scn, scheme)
            peak = np.where(alloc.assign, scn.peak_power, 0.0)

            def box(t, zeta, powers, targets):
                nonlocal violations
                violations += int(np.any(powers < 0) or np.any(powers > peak))

            res = run(scn, alloc, JprcParams(convergence_tol=1e-20, max_iterations=2000),
                      callback=box)
            runs += 1
            if not res.converged:
                continue
            z = build_coupling(scn, alloc).zeta(res.final_powers)
            for i, ch in enumerate(alloc.per_user_channels):
                st_ = compute_targets(z[i, ch], scn.min_rate[i], scn.peak_power[i, ch])
                free = st_.sorted_order[st_.S:st_.k_star]
                if free.size:
                    gamma = res.final_powers[i, ch][free] / z[i, ch][free]
                    fp_worst = max(fp_worst, float(np.max(
                        np.abs(gamma - st_.target_sinr[free]) / st_.target_sinr[free])))
    results["b"] = (violations == 0, f"{violations} box violations over {runs} runs")
    results["c"] = (fp_worst <= 1e-6, f"max relative SINR gap at fixed points {fp_worst:.1e}")

    # (d) single-channel update map is monotone and strictly scalable
    bad = 0
    for _ in range(1000):
        scn = random_scenario(rng, int(rng.integers(1, 4)), int(rng.integers(1, 3)), 1)
        coupling = build_coupling(scn, full_allocation(scn, "NOMA"))
        U = scn.num_users
        r = rng.uniform(0.1, 5.0, size=U)
        p = rng.uniform(0, 1e-5, size=(U, 1))
        q = p + rng.uniform(0, 1e-5, size=(U, 1))
        a = rng.uniform(1.001, 10.0)
        bad += not np.all(tpc_map(coupling, r, q) >= tpc_map(coupling, r, p))
        bad += not np.all(a * tpc_map(coupling, r, p) > tpc_map(coupling, r, a * p))
    results["d"] = (bad == 0, f"{bad} violations on 1000 instances")

    # (e) exhaustive search never worse than equal power
    tested, worse = 0, 0
    for _ in range(40):
        scn = random_scenario(rng, 2, 1, 2, min_rate=float(rng.uniform(0.5, 3.0)), peak=1e-6)
        alloc = full_allocation(scn, "NOMA")
        grid = GridSpec(step=1e-6 / 50)
        try:
            eq = equally_reduced_power(scn, alloc, None, grid)
        except InfeasibleError:
            continue
        ex = exhaustive_search(scn, alloc, None, grid)
        tested += 1
        worse += ex.aggregate > eq.aggregate * (1 + 1e-12)
    results["e"] = (worse == 0 and tested > 0, f"{worse} dominance violations on {tested} instances")

    elapsed = time.perf_counter() - t0
    ok = all(v[0] for v in results.values()) and elapsed < 60
    detail = "; ".join(f"({k}) {'ok' if v[0] else 'FAILED'} {v[1]}" for k, v in results.items())
    report(6, "property suite", ok, f"{detail}; {elapsed:.1f} s (< 60 s)")
    assert ok


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
