import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmshare.channel import (PathStats, channel_matrix, draw_gains, load_channel_table,
                             path_loss_params, sample_channel, sample_network_channels,
                             sample_path_stats, steering_inner, ula_response, ula_response_sine)
from mmshare.topology import ScenarioConfig, sample_topology


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 300), st.floats(-1, 1), st.floats(-1, 1))
def test_steering_inner_closed_form(n, x, y):
    explicit = ula_response_sine(np.array(x), n).conj() @ ula_response_sine(np.array(y), n)
    assert steering_inner(n, x, y) == pytest.approx(explicit, abs=1e-9)


@pytest.mark.parametrize("n", [1, 16, 1024])
def test_response_unit_norm(n):
    theta = 0.3
    a = ula_response(theta, n)
    assert np.vdot(a, a).real == pytest.approx(1.0, abs=1e-12)
    assert steering_inner(n, math.sin(theta), math.sin(theta)) == pytest.approx(1.0, abs=1e-12)


def test_response_rejects_empty_array():
    with pytest.raises(ValueError):
        ula_response(0.0, 0)


def test_steering_aliasing_period():
    # sines differing by 2 are the same direction for half-wavelength spacing
    assert abs(steering_inner(8, -1.0, 1.0)) == pytest.approx(1.0, abs=1e-12)


def test_channel_table():
    table = load_channel_table()
    assert set(table) == {(28e9, True), (28e9, False), (73e9, True), (73e9, False)}
    assert table[(28e9, False)].exponent == pytest.approx(2.92)


def test_path_loss_nearest_row_with_free_space_shift():
    cfg = ScenarioConfig(carrier_freq=32e9)
    p = path_loss_params(cfg, los=False)
    assert p.intercept_db == pytest.approx(72.0 + 20 * math.log10(32 / 28))
    assert path_loss_params(cfg.replace(carrier_freq=73e9), True).intercept_db == pytest.approx(69.8)


def test_custom_table(tmp_path):
    path = tmp_path / "t.txt"
    path.write_text("10 LoS 1 2 3\n10 NLoS 4 5 6\n")
    p = path_loss_params(ScenarioConfig(carrier_freq=10e9, channel_table=str(path)), True)
    assert (p.intercept_db, p.exponent, p.shadow_db) == (1.0, 2.0, 3.0)
    path.write_text("10 maybe 1 2 3\n")
    with pytest.raises(ValueError):
        load_channel_table(path)


def test_single_path_matrix_is_rank_one_with_full_array_gain():
    n_bs, n_ue = 16, 8
    aod, aoa = np.array([0.4]), np.array([1.1])
    H = channel_matrix(np.array([1.0 + 0j]), aod, aoa, n_bs, n_ue)
    assert np.linalg.matrix_rank(H) == 1
    w_bs = ula_response(aod[0], n_bs)
    w_ue = ula_response(aoa[0], n_ue)
    assert abs(w_ue.conj() @ H @ w_bs) ** 2 == pytest.approx(n_bs * n_ue, rel=1e-9)


def test_multipath_rank_bounded_by_paths():
    rng = np.random.default_rng(0)
    H = channel_matrix(draw_gains(1.0, 3, rng), rng.uniform(0, 6, 3), rng.uniform(0, 6, 3), 16, 16)
    assert np.linalg.matrix_rank(H) <= 3


def test_gain_variance_matches_path_loss():
    rng = np.random.default_rng(1)
    g = draw_gains(2.5e-9, 200_000, rng)
    assert np.mean(np.abs(g) ** 2) == pytest.approx(2.5e-9, rel=0.02)
    assert abs(np.mean(g)) < 5 * math.sqrt(2.5e-9 / 200_000)


def test_path_stats_validation():
    with pytest.raises(ValueError):
        PathStats(2, np.zeros(1), np.zeros(2), 1.0, True)
    with pytest.raises(ValueError):
        PathStats(1, np.zeros(1), np.zeros(1), 0.0, True)


def test_sample_path_stats_and_channel():
    cfg = ScenarioConfig()
    rng = np.random.default_rng(2)
    stats = sample_path_stats((0.0, 0.0), (30.0, 40.0), cfg, rng, los=True)
    assert stats.los and stats.n_paths >= 1
    real = sample_channel(stats, 8, 4, rng)
    assert real.matrix.shape == (4, 8)


def test_single_path_mode():
    cfg = ScenarioConfig(area_side=200.0, single_path=True, n_fading_samples=3)
    topo = sample_topology(cfg, 0)
    ch = sample_network_channels(topo, cfg, 0)
    assert (ch.n_paths == 1).all()


def test_network_channels_layout_and_reproducibility():
    cfg = ScenarioConfig(area_side=200.0, n_fading_samples=5)
    topo = sample_topology(cfg, 4)
    a = sample_network_channels(topo, cfg, 4)
    b = sample_network_channels(topo, cfg, 4)
    assert np.array_equal(a.gains, b.gains)
    assert a.gains.shape == (5, a.offsets[-1])
    assert (a.n_paths >= 1).all()
    b0, u0 = 1, 2
    sl = a.link(b0, u0)
    assert sl.stop - sl.start == a.n_paths[b0, u0]
    H = a.matrix(b0, u0, 0)
    assert H.shape == (cfg.n_ue_antennas, cfg.n_bs_antennas)
    # fading draws do not depend on antenna counts or sharing mode
    c = sample_network_channels(topo, cfg.replace(n_bs_antennas=16, sharing_mode="Exclusive"), 4)
    assert np.array_equal(a.gains, c.gains)


def test_los_probability_decays_with_distance():
    cfg = ScenarioConfig(area_side=1000.0, n_fading_samples=1)
    topo = sample_topology(cfg, 0)
    ch = sample_network_channels(topo, cfg, 0)
    d = topo.distances()
    assert ch.los[d < 30].mean() > ch.los[(d > 100) & (d < 200)].mean()
