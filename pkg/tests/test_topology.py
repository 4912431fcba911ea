import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmshare.topology import (Precoder, ScenarioConfig, SharingMode, Topology, TopologyError,
                              co_channel_matrix, dbm_to_watt, dump_config, load_config,
                              operator_bandwidth, sample_topology)


@pytest.mark.parametrize("mode, expected", [
    (SharingMode.EXCLUSIVE, 500e6), (SharingMode.PARTIAL, 1e9), (SharingMode.FULL, 2e9)])
def test_operator_bandwidth(mode, expected):
    cfg = ScenarioConfig(sharing_mode=mode)
    for z in range(4):
        bw, _ = operator_bandwidth(cfg, z)
        assert bw == pytest.approx(expected, rel=1e-12)


def test_partial_pairs_consecutive_operators():
    cfg = ScenarioConfig(sharing_mode="Partial")
    assert operator_bandwidth(cfg, 0)[1] == {0, 1}
    assert operator_bandwidth(cfg, 3)[1] == {2, 3}
    cc = co_channel_matrix(cfg)
    assert cc[0, 1] and not cc[1, 2]
    assert (cc == cc.T).all()


def test_partial_sharing_needs_even_operator_count():
    with pytest.raises(ValueError):
        ScenarioConfig(num_operators=3, sharing_mode="Partial")


def test_operator_out_of_range():
    with pytest.raises(IndexError):
        operator_bandwidth(ScenarioConfig(), 4)


def test_defaults():
    cfg = ScenarioConfig()
    assert cfg.n_rf_chains == 6
    assert cfg.tx_power == pytest.approx(dbm_to_watt(25.0))
    assert cfg.bs_bits == 6 and cfg.ue_bits == 4
    assert cfg.load_cap == 6
    assert cfg.replace(precoder="RZF").load_cap == 64


@pytest.mark.parametrize("bad", [dict(area_side=0), dict(n_rf_chains=0), dict(candidate_bss=0),
                                 dict(tchebycheff_weights=(1.0, 2.0)),
                                 dict(tchebycheff_weights=(1.0, 1.0, 1.0, 0.0))])
def test_invalid_config(bad):
    with pytest.raises(ValueError):
        ScenarioConfig(**bad)


def test_enum_strings_coerced():
    cfg = ScenarioConfig(sharing_mode="exclusive", precoder="rzf", coordination="intraonly")
    assert cfg.sharing_mode is SharingMode.EXCLUSIVE
    assert cfg.precoder is Precoder.RZF


def test_config_file_round_trip(tmp_path):
    cfg = ScenarioConfig(sharing_mode="Partial", n_bs_antennas=128, single_path=True,
                         tchebycheff_weights=(1.0, 2.0, 1.0, 1.0), rzf_regularizer=0.5)
    path = tmp_path / "scenario.cfg"
    path.write_text("# comment\n" + dump_config(cfg))
    assert load_config(path) == cfg


def test_config_file_errors(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("no_such_key = 1\n")
    with pytest.raises(KeyError):
        load_config(path)
    path.write_text("n_bs_antennas 4\n")
    with pytest.raises(ValueError):
        load_config(path)


def test_topology_is_reproducible_and_seed_dependent():
    cfg = ScenarioConfig(area_side=300.0)
    a, b, c = sample_topology(cfg, 5), sample_topology(cfg, 5), sample_topology(cfg, 6)
    assert np.array_equal(a.bs_pos, b.bs_pos) and np.array_equal(a.ue_pos, b.ue_pos)
    assert not np.array_equal(a.bs_pos, c.bs_pos)


def test_topology_invariants():
    cfg = ScenarioConfig(area_side=300.0)
    for seed in range(10):
        topo = sample_topology(cfg, seed)
        assert topo.bs_pos.min() >= 0 and topo.bs_pos.max() <= 300.0
        for z in range(4):
            assert len(topo.bss_of(z)) >= 1
            assert len(topo.ues_of(z)) <= cfg.load_cap * len(topo.bss_of(z))
        with pytest.raises(ValueError):
            topo.bs_pos[0, 0] = 1.0  # read-only


def test_ppp_counts_match_density():
    cfg = ScenarioConfig(area_side=1000.0)
    n_bs = [sample_topology(cfg, s).n_bs for s in range(40)]
    n_ue = [sample_topology(cfg, s).n_ue for s in range(40)]
    # means 400 BSs and 600 UEs, Poisson std 20 and ~24.5; 40-draw mean std ~3.2 and ~3.9
    assert abs(np.mean(n_bs) - 400) < 15
    assert abs(np.mean(n_ue) - 600) < 20


def test_unusable_layout_raises():
    cfg = ScenarioConfig(area_side=10.0, bs_density_per_operator=1.0, max_resample=5)
    with pytest.raises(TopologyError):
        sample_topology(cfg, 0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 100), st.floats(0, 100), st.floats(0, 100), st.floats(0, 100))
def test_wraparound_distance(x1, y1, x2, y2):
    topo = Topology(np.array([[x1, y1]]), np.array([0]), np.array([[x2, y2]]), np.array([0]),
                    1, area_side=100.0)
    d = topo.distances()[0, 0]
    assert d <= np.hypot(abs(x1 - x2), abs(y1 - y2)) + 1e-12
    assert d <= np.hypot(50.0, 50.0) + 1e-9
    # a torus distance is invariant to shifting both points
    shifted = Topology(np.array([[(x1 + 37) % 100, y1]]), np.array([0]),
                       np.array([[(x2 + 37) % 100, y2]]), np.array([0]), 1, area_side=100.0)
    assert shifted.distances()[0, 0] == pytest.approx(d, abs=1e-9)
