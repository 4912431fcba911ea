import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mmshare import association as A
from mmshare.channel import NetworkChannels, sample_network_channels
from _tiny import tiny_case
from mmshare.topology import (Coordination, Precoder, ScenarioConfig, SharingMode, Topology,
                              sample_topology)


def line_network(bs_x, ue_x, cfg, pl_exponent=2.0):
    """One operator on a line, single LoS-free path at broadside, identical fading."""
    bs_pos = np.array([[x, 0.0] for x in bs_x]).reshape(-1, 2)
    ue_pos = np.array([[x, 0.0] for x in ue_x]).reshape(-1, 2)
    topo = Topology(bs_pos, np.zeros(len(bs_x), dtype=int), ue_pos,
                    np.zeros(len(ue_x), dtype=int), 1)
    d = np.maximum(topo.distances(), 1.0)
    pl = d ** -pl_exponent
    n = pl.size
    S = cfg.n_fading_samples
    gains = np.tile(np.sqrt(pl.ravel()).astype(complex), (S, 1))
    ch = NetworkChannels(len(bs_x), len(ue_x), cfg.n_bs_antennas, cfg.n_ue_antennas,
                         np.zeros(pl.shape, bool), pl, np.ones(pl.shape, dtype=np.int64),
                         np.arange(n + 1), np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n),
                         gains)
    return topo, ch


@pytest.fixture
def one_op():
    return ScenarioConfig(num_operators=1, n_bs_antennas=4, n_ue_antennas=2, n_fading_samples=2)


def test_rssi_prefers_nearer_bs(one_op):
    topo, ch = line_network([10.0, 100.0], [0.0], one_op)
    res = A.solve("RSSI", topo, ch, one_op)
    assert res.association.serving.tolist() == [0]


def test_rssi_single_bs_takes_everyone_without_load_limit(one_op):
    topo, ch = line_network([0.0], [5.0 * k for k in range(1, 9)], one_op)
    res = A.solve("RSSI", topo, ch, one_op)
    assert (res.association.serving == 0).all()
    assert res.association.loads[0] == 8 > one_op.load_cap
    # overloaded cell: each UE gets a 6/8 time share
    full, _ = res.instance.rates(res.assign, time_share=False)
    rep = A.evaluate(res)
    assert np.all(rep.per_ue_rate < full)


def test_rssi_tie_goes_to_lowest_index(one_op):
    topo, ch = line_network([0.0, 20.0], [10.0], one_op)
    assert A.solve("RSSI", topo, ch, one_op).association.serving.tolist() == [0]


def test_problem_spec_mapping():
    cfg = ScenarioConfig()
    p1 = A.ProblemSpec.build("P1", cfg)
    assert (p1.precoder, p1.coordination, p1.i3) == (Precoder.ANALOG, Coordination.FULL,
                                                     A.InterferenceModel.ACTUAL)
    p5 = A.ProblemSpec.build("P5", cfg.replace(precoder="MRT"))
    assert p5.precoder is Precoder.MRT and p5.i3 is A.InterferenceModel.IGNORED
    p6 = A.ProblemSpec.build("P6", cfg)
    assert p6.precoder is Precoder.RZF and p6.sharing_mode is SharingMode.EXCLUSIVE
    assert p6.i3 is A.InterferenceModel.ZERO
    assert A.ProblemSpec.build("P3", cfg).effective_config(cfg).sharing_mode is SharingMode.EXCLUSIVE
    rssi = A.ProblemSpec.build("RSSI", cfg.replace(sharing_mode="Exclusive"))
    assert rssi.i3 is A.InterferenceModel.ZERO and not rssi.per_operator


@pytest.mark.parametrize("kw", [
    dict(problem_id=A.ProblemId.P1, precoder=Precoder.RZF, coordination=Coordination.FULL,
         sharing_mode=SharingMode.FULL, i3=A.InterferenceModel.ACTUAL),
    dict(problem_id=A.ProblemId.P4, precoder=Precoder.ANALOG, coordination=Coordination.FULL,
         sharing_mode=SharingMode.FULL, i3=A.InterferenceModel.ACTUAL),
    dict(problem_id=A.ProblemId.P1, precoder=Precoder.ANALOG, coordination=Coordination.FULL,
         sharing_mode=SharingMode.EXCLUSIVE, i3=A.InterferenceModel.ZERO),
    dict(problem_id=A.ProblemId.P2, precoder=Precoder.ANALOG, coordination=Coordination.INTRA_ONLY,
         sharing_mode=SharingMode.FULL, i3=A.InterferenceModel.ACTUAL),
    dict(problem_id=A.ProblemId.P3, precoder=Precoder.ANALOG, coordination=Coordination.INTRA_ONLY,
         sharing_mode=SharingMode.FULL, i3=A.InterferenceModel.ZERO),
])
def test_problem_spec_invariants(kw):
    with pytest.raises(ValueError):
        A.ProblemSpec(**kw)


def test_association_checks():
    bs_op = np.array([0, 0, 1])
    ok = A.Association(np.array([0, 1, 2]), bs_op, np.array([0, 0, 1]))
    ok.check(1)
    assert ok.x.sum(axis=0).tolist() == [1, 1, 1]
    assert ok.served(0).tolist() == [0]
    with pytest.raises(A.AssociationError):
        A.Association(np.array([0, 0, 2]), bs_op, np.array([0, 0, 1])).check(1)
    with pytest.raises(A.AssociationError):
        A.Association(np.array([0, 2, 2]), bs_op, np.array([0, 0, 1])).check(None)
    same = A.Association(np.array([0, 1, 2]), bs_op, np.array([0, 0, 1]))
    assert ok == same and hash(ok) == hash(same)


def test_tchebycheff_examples():
    f = np.array([[1.0, 3.0], [2.0, 2.0]])
    w = np.array([0.5, 0.5])
    assert A.tchebycheff_scalarize(f, w).tolist() == [0.5, 0.5]
    assert A.tchebycheff_scalarize(f, w, ideal=[2.0, 3.0]).tolist() == [0.5, 0.5]
    assert A.tchebycheff_scalarize(f, np.array([0.9, 0.1]), ideal=[2.0, 3.0]).tolist() == \
        pytest.approx([0.9, 0.1])
    with pytest.raises(ValueError):
        A.tchebycheff_scalarize(f, [1.0])
    with pytest.raises(ValueError):
        A.tchebycheff_scalarize(f, [1.0, 0.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=3, max_size=3),
       st.lists(st.floats(0.0, 5.0), min_size=3, max_size=3))
def test_tchebycheff_is_monotone(f, bump):
    """Raising any utility never worsens the score."""
    w = np.array([0.2, 0.3, 0.5])
    ideal = np.full(3, 60.0)
    f = np.array(f)
    assert A.tchebycheff_scalarize(f + np.array(bump), w, ideal)[0] <= \
        A.tchebycheff_scalarize(f, w, ideal)[0] + 1e-12


def test_better_is_lexicographic():
    assert A.better(1.0, 5.0, 2.0, 0.0)[()]
    assert A.better(1.0, 0.0, 1.0, 1.0)[()]
    assert not A.better(1.0, 1.0, 1.0, 1.0)[()]
    assert not A.better(1.0 - 1e-15, 1.0, 1.0, 1.0)[()]


@pytest.fixture(scope="module")
def network():
    cfg = ScenarioConfig(area_side=150.0, n_bs_antennas=16, n_ue_antennas=4, n_fading_samples=3)
    topo = sample_topology(cfg, 7)
    return cfg, topo, sample_network_channels(topo, cfg, 7)


@pytest.mark.parametrize("problem", ["P1", "P2", "P3", "RSSI"])
def test_solutions_are_feasible(network, problem):
    cfg, topo, ch = network
    res = A.solve(problem, topo, ch, cfg)
    cap = None if problem == "RSSI" else cfg.load_cap
    res.association.check(cap)
    rep = A.evaluate(res)
    assert rep.per_ue_rate.shape == (topo.n_ue,)
    if problem == "P3":
        assert np.all(rep.per_ue_components[2] == 0.0)


def test_local_search_never_worsens_start(network):
    cfg, topo, ch = network
    res = A.solve("P2", topo, ch, cfg)
    assert res.trace.end_key[0] <= res.trace.start_key[0]
    greedy = A.greedy_association(res.instance)
    assert np.all(res.utilities >= res.instance.utilities(greedy) - 1e-9)


def test_p1_tchebycheff_score_no_worse_than_p2_start(network):
    cfg, topo, ch = network
    p1 = A.solve("P1", topo, ch, cfg)
    p2 = A.solve("P2", topo, ch, cfg)
    w = p1.instance.weights
    actual_p2 = p1.instance.utilities(p2.assign)
    assert A.tchebycheff_scalarize(p1.utilities, w, p1.ideal)[0] <= \
        A.tchebycheff_scalarize(actual_p2, w, p1.ideal)[0] + 1e-9
    assert np.allclose(p1.ideal, p2.utilities)


def test_solver_is_deterministic_and_backend_free(network):
    cfg, topo, ch = network
    a = A.solve("P1", topo, ch, cfg, backend="python")
    b = A.solve("P1", topo, ch, cfg)
    assert a.association == b.association


def test_infeasible_problem_raises():
    cfg = ScenarioConfig(num_operators=1, n_bs_antennas=4, n_ue_antennas=2, n_fading_samples=1,
                         n_rf_chains=1)
    topo, ch = line_network([0.0], [3.0, 6.0], cfg)
    with pytest.raises(A.AssociationError):
        A.solve("P2", topo, ch, cfg)
    with pytest.raises(A.AssociationError):
        A.brute_force_oracle("P2", topo, ch, cfg)


def test_oracle_limits():
    cfg = ScenarioConfig(num_operators=1, n_bs_antennas=4, n_ue_antennas=2, n_fading_samples=1)
    topo, ch = line_network([0.0, 50.0], [float(k) for k in range(10)], cfg)
    with pytest.raises(A.AssociationError):
        A.brute_force_oracle("P2", topo, ch, cfg)
    with pytest.raises(A.AssociationError):
        A.brute_force_oracle("P2", topo, ch, cfg, max_ues=10, max_candidates=100)


@pytest.mark.parametrize("problem", ["P1", "P2", "P3"])
@pytest.mark.parametrize("seed", range(4))
def test_local_search_matches_oracle_on_tiny_instances(problem, seed):
    cfg, topo, ch = tiny_case(seed)
    oracle = A.brute_force_oracle(problem, topo, ch, cfg)
    res = A.solve(problem, topo, ch, cfg, ideal=oracle.ideal)
    if problem == "P1":
        w = res.instance.weights
        got = A.tchebycheff_scalarize(res.utilities, w, oracle.ideal)[0]
        best = A.tchebycheff_scalarize(oracle.utilities, w, oracle.ideal)[0]
        assert got <= best + 1e-9 * (1 + abs(best))
    else:
        assert res.utilities == pytest.approx(oracle.utilities, rel=1e-9, abs=1e-9)


@pytest.mark.parametrize("problem", ["P1", "P3", "RSSI", "P4", "P6"])
def test_network_without_ues_solves_to_empty_association(one_op, problem):
    topo, ch = line_network([0.0, 50.0], [], one_op)
    res = A.solve(problem, topo, ch, one_op)
    assert len(res.association.serving) == 0
    assert res.utilities.dtype == float and np.all(res.utilities == 0.0)
    assert A.evaluate(res).per_ue_rate.shape == (0,)
