import math

import numpy as np
import pytest

from mmshare import association as A
from mmshare import metrics as M
from mmshare.beamforming import build_effective_channel, rzf_precoder, mrt_precoder
from mmshare.topology import Coordination, ScenarioConfig, co_channel_matrix


def test_breakdown_validation_and_sinr():
    bd = M.InterferenceBreakdown(2.0, 0.25, 0.25, 0.5, 1.0)
    assert bd.interference == 1.0 and bd.sinr == 1.0
    with pytest.raises(ValueError):
        M.InterferenceBreakdown(1.0, -1.0, 0.0, 0.0, 1.0)


def test_rate_is_bandwidth_at_unit_sinr():
    bd = M.InterferenceBreakdown(1.0, 0.0, 0.0, 0.0, 1.0)
    assert M.average_rate(lambda s: bd, 2e9, 7) == pytest.approx(2e9, rel=1e-9)
    with pytest.raises(ValueError):
        M.average_rate(lambda s: bd, 1.0, 0)


def test_stream_powers():
    assert np.allclose(M.stream_powers(np.array([0, 0, 1, 0]), 3, 6.0), [2, 2, 6, 2])


def test_operator_utility():
    rates = np.array([1.0, math.e, 2.0, 0.0])
    ops = np.array([0, 0, 1, 1])
    assert M.operator_utility(rates, None, 0, ops) == pytest.approx(1.0)
    assert M.operator_utility(rates, None, 1, ops) == -math.inf


def test_rate_report_and_percentiles():
    rates = np.arange(1.0, 101.0)
    comps = np.ones((3, 2, 100))
    rep = M.RateReport.build(rates, np.zeros(100, dtype=int), 1, comps)
    assert rep.percentiles[5] <= rep.percentiles[50] <= rep.percentiles[95]
    assert rep.mean_interference == pytest.approx(3.0)
    assert rep.per_ue_components.shape == (3, 100)
    assert M.percentiles(rates) == (rep.percentiles[5], rep.percentiles[50], rep.percentiles[95])


def test_candidates_are_strongest_own_bss(small_network):
    topo, ch = small_network
    pairs = M.build_candidates(topo, ch, 2)
    for u in range(topo.n_ue):
        cand = pairs.ue_pairs[u]
        bss = pairs.pair_bs[cand]
        own = topo.bss_of(topo.ue_operator[u])
        assert set(bss) <= set(own) and len(cand) == min(2, len(own))
        assert (pairs.pair_ue[cand] == u).all()
        assert pairs.index(int(bss[0]), u) == cand[0]
    with pytest.raises(KeyError):
        pairs.index(-1, 0)


def _instance(problem, cfg, network):
    topo, ch = network
    spec = A.ProblemSpec.build(problem, cfg)
    inst = A.build_instance(spec, topo, ch, cfg)
    return inst, A.greedy_association(inst)


def _reference(inst, assign, s, w_bs, power):
    """Per-UE (rate terms, I1, I2, I3) from the explicit-matrix reference."""
    topo = inst.topology
    serving = inst.pairs.pair_bs[assign]
    w_ue = inst.gains.cb_ue.vectors[inst.gains.k_ue[s, assign]]
    beams = M.BeamSet(w_bs, w_ue, power)
    return [M.interference_breakdown(topo, inst.channels, beams, serving, u, inst.config, s)
            for u in range(topo.n_ue)]


@pytest.mark.parametrize("sharing", ["Full", "Partial", "Exclusive"])
def test_analog_state_matches_reference(small_network, small_config, sharing):
    cfg = small_config.replace(sharing_mode=sharing)
    problem = "P3" if sharing == "Exclusive" else "P1"
    inst, assign = _instance(problem, cfg, small_network)
    rate, comps = inst.rates(assign, actual=True)
    serving = inst.pairs.pair_bs[assign]
    power = M.stream_powers(serving, inst.topology.n_bs, cfg.tx_power)
    log_terms = np.zeros(inst.topology.n_ue)
    for s in range(inst.channels.n_samples):
        w_bs = inst.gains.cb_bs.vectors[inst.gains.k_bs[s, assign]]
        for u, bd in enumerate(_reference(inst, assign, s, w_bs, power)):
            ref = np.array([bd.intra_cell, bd.inter_cell, bd.inter_operator]) / bd.noise
            assert comps[:, s, u] == pytest.approx(ref, rel=1e-8, abs=1e-12)
            log_terms[u] += math.log2(1 + bd.sinr)
    assert rate == pytest.approx(inst.bw * log_terms / inst.channels.n_samples, rel=1e-9)
    if sharing == "Exclusive":
        assert np.all(comps[2] == 0.0)


@pytest.mark.parametrize("problem, precoder, coordination", [
    ("P4", "RZF", None), ("P4", "MRT", None), ("P5", "RZF", None), ("RSSI", "RZF", "None")])
def test_digital_model_matches_reference(small_network, small_config, problem, precoder,
                                         coordination):
    cfg = small_config.replace(precoder=precoder)
    if coordination:
        cfg = cfg.replace(coordination=coordination)
    inst, assign = _instance(problem, cfg, small_network)
    topo, ch = inst.topology, inst.channels
    rate, comps = inst.rates(assign, actual=True)
    serving = inst.pairs.pair_bs[assign]
    load = np.bincount(serving, minlength=topo.n_bs)
    power = cfg.tx_power / load[serving]
    cc = co_channel_matrix(inst.config)
    scope = M.scope_for(inst.spec.coordination)
    log_terms = np.zeros(topo.n_ue)
    for s in range(ch.n_samples):
        combiners = inst.gains.cb_ue.vectors[inst.gains.k_ue[s, assign]]
        w_bs = np.zeros((topo.n_ue, ch.bs_antennas), dtype=complex)
        for u in range(topo.n_ue):
            b = serving[u]
            if scope.value == "Operator":
                eff = build_effective_channel(topo, ch, combiners, serving, scope,
                                              operator=topo.bs_operator[b], sample=s)
            elif scope.value == "Cell":
                eff = build_effective_channel(topo, ch, combiners, serving, scope, bs=b, sample=s)
            else:
                eff = build_effective_channel(topo, ch, combiners, serving, scope, sample=s,
                                              co_channel=cc)
            if precoder == "MRT":
                w_bs[u] = mrt_precoder(eff, b, u)
            else:
                c = load[b] * cfg.noise_psd * inst.bw[u] / cfg.tx_power
                w_bs[u] = rzf_precoder(eff, b, u, c)
        for u, bd in enumerate(_reference(inst, assign, s, w_bs, power)):
            ref = np.array([bd.intra_cell, bd.inter_cell, bd.inter_operator]) / bd.noise
            assert comps[:, s, u] == pytest.approx(ref, rel=1e-7, abs=1e-10)
            log_terms[u] += math.log2(1 + bd.sinr)
    assert rate == pytest.approx(inst.bw * log_terms / ch.n_samples, rel=1e-8)


def test_precoders_are_unit_norm(small_network, small_config):
    inst, assign = _instance("P4", small_config.replace(precoder="RZF"), small_network)
    W = inst.digital.precoders(0, assign, M.scope_for(Coordination.FULL), "RZF")
    for b, w in W.items():
        assert np.allclose(np.linalg.norm(w, axis=0), 1.0)
        assert w.shape[1] == np.sum(inst.pairs.pair_bs[assign] == b)


def test_combiner_refinement_does_not_hurt_served_gain(small_network, small_config):
    cfg = small_config.replace(precoder="MRT", combiner_iterations=1)
    inst, assign = _instance("P4", cfg, small_network)
    rate, comps = inst.rates(assign)
    assert np.all(np.isfinite(rate)) and np.all(rate > 0)
    assert comps.shape == (3, inst.channels.n_samples, inst.topology.n_ue)


def test_single_path_aligned_gain_is_full_array_gain():
    from mmshare.beamforming import build_dft_codebook
    from mmshare.channel import channel_matrix
    n_bs, n_ue = 64, 16
    cb_bs, cb_ue = build_dft_codebook(n_bs, 6), build_dft_codebook(n_ue, 4)
    H = channel_matrix(np.array([1.0 + 0j]), np.array([math.asin(cb_bs.sines[9])]),
                       np.array([math.asin(cb_ue.sines[3])]), n_bs, n_ue)
    g = abs(cb_ue.vectors[3].conj() @ H @ cb_bs.vectors[9]) ** 2
    assert g == pytest.approx(n_bs * n_ue, rel=1e-9)


def test_time_sharing_rate(small_network, small_config):
    inst, _ = _instance("RSSI", small_config, small_network)
    everyone = np.array([inst.pairs.ue_pairs[u][0] for u in range(inst.topology.n_ue)])
    cap = 1  # force overloaded BSs
    full = inst.analog_state(everyone, inst.actual_mask)
    shared = inst.analog_state(everyone, inst.actual_mask, cap)
    load = full.load[full.assign_bs]
    p = small_config.tx_power
    serve = inst.gains.C[:, everyone, everyone]
    sinr = (p / np.minimum(load, cap)) * serve / (full.intf + inst.noise)
    expected = np.minimum(1.0, cap / load) * inst.bw * np.mean(np.log2(1 + sinr), axis=0)
    assert shared.rate == pytest.approx(expected, rel=1e-12)
    assert np.allclose(shared.intf, full.intf)
    assert shared.rate[load == 1] == pytest.approx(full.rate[load == 1])


def test_interference_mask(small_network, small_config):
    topo, _ = small_network
    m = M.interference_mask(topo, small_config)
    assert m.all()
    own = M.interference_mask(topo, small_config, ignore_other_operators=True)
    assert (own == (topo.ue_operator[:, None] == topo.bs_operator[None, :])).all()
    excl = M.interference_mask(topo, small_config.replace(sharing_mode="Exclusive"))
    assert (excl == own).all()
