import json
from pathlib import Path

import numpy as np
import pytest

from jprcsim.model import (Allocation, Scenario, ScenarioConfig, Scheme, allocate_subchannels,
                           bs_grid_positions, draw_fading, generate_scenario, grid_shape,
                           path_gain)

DOCS = Path(__file__).resolve().parents[1] / "docs"


def test_bs_positions_four_cells():
    scn = generate_scenario(ScenarioConfig(), seed=0)
    expected = [[250, 250], [750, 250], [250, 750], [750, 750]]
    np.testing.assert_array_equal(scn.bs_positions, expected)


def test_grid_shapes():
    assert grid_shape(1) == (1, 1)
    assert grid_shape(2) == (1, 2)
    assert grid_shape(9) == (3, 3)
    with pytest.raises(ValueError):
        grid_shape(3)
    np.testing.assert_array_equal(bs_grid_positions(2, 500.0), [[250, 250], [750, 250]])


def test_path_gain_substitution():
    assert path_gain(10.0, 1.0, 3.0) == pytest.approx(1e-3, rel=1e-15)


def test_generation_deterministic():
    cfg = ScenarioConfig()
    a = generate_scenario(cfg, seed=7)
    b = generate_scenario(cfg, seed=7)
    np.testing.assert_array_equal(a.path_gain, b.path_gain)
    np.testing.assert_array_equal(a.user_positions, b.user_positions)
    assert a.fingerprint() == b.fingerprint()
    c = generate_scenario(cfg, seed=8)
    assert c.fingerprint() != a.fingerprint()


def test_seed_defaults_to_config():
    cfg = ScenarioConfig(rng_seed=3)
    assert generate_scenario(cfg).fingerprint() == generate_scenario(cfg, seed=3).fingerprint()


def test_users_inside_their_cell_and_spread_uniformly():
    cfg = ScenarioConfig(users_per_cell=2500, num_subchannels=1)
    scn = generate_scenario(cfg, seed=1)
    assert scn.num_users == 10_000
    offset = scn.user_positions - scn.bs_positions[scn.serving_bs]
    assert np.all(np.abs(offset) <= cfg.cell_side / 2)
    d = np.hypot(*(scn.bs_positions[:, None, :] - scn.user_positions[None]).transpose(2, 0, 1))
    assert d.min() >= 1.0
    # uniform offsets: mean 0, variance side^2 / 12
    assert np.all(np.abs(offset.mean(axis=0)) < 5.0)
    np.testing.assert_allclose(offset.var(axis=0), cfg.cell_side ** 2 / 12, rtol=0.05)


def test_gain_matches_geometry():
    scn = generate_scenario(ScenarioConfig(num_subchannels=3), seed=2)
    d = np.hypot(*(scn.bs_positions[:, None, :] - scn.user_positions[None]).transpose(2, 0, 1))
    fading = scn.path_gain * d[:, :, None] ** 3
    assert np.all(fading > 0)
    assert scn.own_gain.shape == (16, 3)


def test_fading_unit_mean():
    x = draw_fading(np.random.default_rng(0), 1_000_000)
    assert 0.99 <= x.mean() <= 1.01
    # exponential: variance equals squared mean
    assert x.var() == pytest.approx(1.0, abs=0.02)


def test_config_validation():
    with pytest.raises(ValueError):
        ScenarioConfig(noise_power=-1e-14)
    with pytest.raises(ValueError):
        ScenarioConfig(num_cells=3)
    with pytest.raises(ValueError):
        ScenarioConfig(cell_side=600.0)
    with pytest.raises(ValueError):
        ScenarioConfig(users_per_cell=0)
    with pytest.raises(ValueError):
        ScenarioConfig.from_dict({"bogus": 1})


def test_ofdma_equal_disjoint_blocks():
    scn = generate_scenario(ScenarioConfig(), seed=0)
    alloc = allocate_subchannels(scn, "OFDMA")
    assert alloc.scheme is Scheme.OFDMA
    assert np.all(alloc.assign.sum(axis=1) == 25)
    for members in scn.cell_members:
        assert np.all(alloc.assign[members].sum(axis=0) == 1)


def test_noma_whole_set():
    scn = generate_scenario(ScenarioConfig(), seed=0)
    alloc = allocate_subchannels(scn, Scheme.NOMA)
    assert all(len(ch) == 100 for ch in alloc.per_user_channels)


def test_ofdma_single_user_gets_everything():
    scn = generate_scenario(ScenarioConfig(num_cells=2, users_per_cell=1, num_subchannels=2), 0)
    alloc = allocate_subchannels(scn, "ofdma")
    assert alloc.assign.all()


def test_ofdma_indivisible_rejected():
    scn = generate_scenario(ScenarioConfig(users_per_cell=3, num_subchannels=10), 0)
    with pytest.raises(ValueError, match="divisible|divide"):
        allocate_subchannels(scn, "OFDMA")


def test_unknown_scheme():
    with pytest.raises(ValueError):
        Scheme.parse("CDMA")


def test_with_requirements_keeps_geometry():
    scn = generate_scenario(ScenarioConfig(num_subchannels=4), 0)
    other = scn.with_requirements(min_rate=20.0, peak_power=1e-3)
    assert other.fingerprint() == scn.fingerprint()
    assert np.all(other.min_rate == 20.0) and np.all(other.peak_power == 1e-3)
    assert np.all(scn.min_rate == 5.0)


def test_arrays_read_only():
    scn = generate_scenario(ScenarioConfig(num_subchannels=2), 0)
    with pytest.raises(ValueError):
        scn.path_gain[0, 0, 0] = 1.0


def test_scenario_json_round_trip():
    scn = generate_scenario(ScenarioConfig(num_subchannels=4), 5)
    back = Scenario.from_dict(json.loads(json.dumps(scn.to_dict())))
    np.testing.assert_array_equal(back.path_gain, scn.path_gain)
    assert back.fingerprint() == scn.fingerprint()
    assert back.config == scn.config
    alloc = allocate_subchannels(scn, "OFDMA")
    again = Allocation.from_dict(json.loads(json.dumps(alloc.to_dict())))
    np.testing.assert_array_equal(again.assign, alloc.assign)


def test_scenario_matches_schema():
    jsonschema = pytest.importorskip("jsonschema")
    schema = json.loads((DOCS / "scenario.schema.json").read_text())
    scn = generate_scenario(ScenarioConfig(num_subchannels=4), 5)
    jsonschema.validate(json.loads(json.dumps(scn.to_dict())), schema)
