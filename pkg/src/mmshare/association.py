"""Cell association: the six problems, the RSSI baseline and a local-search solver.

Analog problems are scored through the cross-gain tensor of
:class:`~mmshare.metrics.AnalogGains`, so a candidate move costs
``O(S * U)`` work in the compiled kernel.  Digital problems re-evaluate
precoders per candidate and are meant for small layouts.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import metrics
from .channel import NetworkChannels
from .metrics import AnalogGains, CandidatePairs, DigitalModel
from .topology import (Coordination, Precoder, ScenarioConfig, SharingMode, Topology)


class AssociationError(RuntimeError):
    pass


class ProblemId(str, enum.Enum):
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"
    P4 = "P4"
    P5 = "P5"
    P6 = "P6"
    RSSI = "RSSI"


class InterferenceModel(str, enum.Enum):
    ACTUAL = "actual"  # the solver sees inter-operator interference
    IGNORED = "ignored"  # the solver assumes none; reports still include it
    ZERO = "zero"  # disjoint bands, none exists


@dataclass(frozen=True)
class ProblemSpec:
    problem_id: ProblemId
    precoder: Precoder
    coordination: Coordination
    sharing_mode: SharingMode
    i3: InterferenceModel

    def __post_init__(self) -> None:
        pid = self.problem_id
        digital = self.precoder is not Precoder.ANALOG
        if pid in (ProblemId.P1, ProblemId.P2, ProblemId.P3) and digital:
            raise ValueError(f"{pid.value} uses analog precoding")
        if pid in (ProblemId.P4, ProblemId.P5, ProblemId.P6) and not digital:
            raise ValueError(f"{pid.value} uses digital precoding")
        if pid in (ProblemId.P1, ProblemId.P4):
            if self.coordination is not Coordination.FULL or self.sharing_mode is SharingMode.EXCLUSIVE:
                raise ValueError(f"{pid.value} needs full coordination and shared spectrum")
        if pid in (ProblemId.P2, ProblemId.P5):
            if self.coordination is not Coordination.INTRA_ONLY or self.i3 is not InterferenceModel.IGNORED:
                raise ValueError(f"{pid.value} is solved per operator without inter-operator terms")
        if pid in (ProblemId.P3, ProblemId.P6) and self.sharing_mode is not SharingMode.EXCLUSIVE:
            raise ValueError(f"{pid.value} uses exclusive spectrum")

    @classmethod
    def build(cls, problem_id: ProblemId | str, config: ScenarioConfig) -> "ProblemSpec":
        """The spec of ``problem_id`` under ``config``.

        Digital problems take MRT or RZF from the config (RZF when it says
        Analog).  RSSI keeps the config's precoder, sharing and coordination.
        """
        pid = ProblemId(problem_id)
        digital = config.precoder if config.precoder is not Precoder.ANALOG else Precoder.RZF
        sharing = config.sharing_mode
        if pid in (ProblemId.P1, ProblemId.P4):
            return cls(pid, Precoder.ANALOG if pid is ProblemId.P1 else digital,
                       Coordination.FULL, sharing, InterferenceModel.ACTUAL)
        if pid in (ProblemId.P2, ProblemId.P5):
            return cls(pid, Precoder.ANALOG if pid is ProblemId.P2 else digital,
                       Coordination.INTRA_ONLY, sharing, InterferenceModel.IGNORED)
        if pid in (ProblemId.P3, ProblemId.P6):
            return cls(pid, Precoder.ANALOG if pid is ProblemId.P3 else digital,
                       Coordination.INTRA_ONLY, SharingMode.EXCLUSIVE, InterferenceModel.ZERO)
        i3 = InterferenceModel.ZERO if sharing is SharingMode.EXCLUSIVE else InterferenceModel.ACTUAL
        return cls(pid, config.precoder, config.coordination, sharing, i3)

    @property
    def digital(self) -> bool:
        return self.precoder is not Precoder.ANALOG

    @property
    def per_operator(self) -> bool:
        return self.problem_id not in (ProblemId.P1, ProblemId.P4, ProblemId.RSSI)

    def effective_config(self, config: ScenarioConfig) -> ScenarioConfig:
        return config.replace(sharing_mode=self.sharing_mode, precoder=self.precoder,
                              coordination=self.coordination)


@dataclass(frozen=True)
class Association:
    """Serving BS per UE, with the operator labels needed for checks."""

    serving: np.ndarray  # (U,) BS index
    bs_operator: np.ndarray
    ue_operator: np.ndarray

    @property
    def n_bs(self) -> int:
        return len(self.bs_operator)

    @property
    def loads(self) -> np.ndarray:
        return np.bincount(self.serving, minlength=self.n_bs)

    @property
    def x(self) -> np.ndarray:
        """(B, U) binary association matrix."""
        out = np.zeros((self.n_bs, len(self.serving)), dtype=np.int8)
        out[self.serving, np.arange(len(self.serving))] = 1
        return out

    def served(self, b: int) -> np.ndarray:
        return np.flatnonzero(self.serving == b)

    def check(self, load_cap: int | None) -> None:
        """Raise :class:`AssociationError` unless every structural constraint holds."""
        x = self.x
        if np.any(x.sum(axis=0) != 1):
            raise AssociationError("each UE must have exactly one serving BS")
        if load_cap is not None and np.any(self.loads > load_cap):
            raise AssociationError(f"BS load exceeds {load_cap}")
        if np.any(self.bs_operator[self.serving] != self.ue_operator):
            raise AssociationError("UE served by another operator's BS")

    def __eq__(self, other) -> bool:
        return isinstance(other, Association) and np.array_equal(self.serving, other.serving)

    def __hash__(self) -> int:
        return hash(self.serving.tobytes())


# ---------------------------------------------------------------------------
# scalarization


def tchebycheff_scalarize(f, w, ideal=None) -> np.ndarray:
    """``max_z w_z (z*_z - f_z)`` per candidate row of ``f``; lower is better.

    Without ``ideal`` the ideal point is the per-objective best over the rows.
    """
    f = np.atleast_2d(np.asarray(f, dtype=float))
    w = np.asarray(w, dtype=float)
    if f.shape[1] != w.shape[0]:
        raise ValueError(f"{f.shape[1]} objectives but {w.shape[0]} weights")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    ideal = f.max(axis=0) if ideal is None else np.asarray(ideal, dtype=float)
    if ideal.shape != w.shape:
        raise ValueError("ideal point has the wrong dimension")
    with np.errstate(invalid="ignore"):
        gap = ideal[None, :] - f
    return np.max(w[None, :] * gap, axis=1)


def _tol(x) -> np.ndarray:
    return 1e-12 * (1.0 + np.abs(np.where(np.isfinite(x), x, 0.0)))


def better(primary, secondary, cur_primary, cur_secondary) -> np.ndarray:
    """Lexicographic strict improvement with a relative tolerance."""
    primary = np.asarray(primary)
    secondary = np.asarray(secondary)
    return (primary < cur_primary - _tol(cur_primary)) | (
        (primary <= cur_primary) & (secondary < cur_secondary - _tol(cur_secondary)))


# ---------------------------------------------------------------------------
# problem instances


@dataclass
class Instance:
    """Everything a solver needs for one (problem, topology) pair."""

    spec: ProblemSpec
    topology: Topology
    channels: NetworkChannels
    config: ScenarioConfig  # effective config (sharing mode forced for P3/P6)
    pairs: CandidatePairs
    gains: AnalogGains
    bw: np.ndarray
    noise: np.ndarray
    solve_mask: np.ndarray
    actual_mask: np.ndarray
    digital: DigitalModel | None = None
    weights: np.ndarray = field(default=None)

    @property
    def n_ops(self) -> int:
        return self.topology.num_operators

    @property
    def load_cap(self) -> int:
        return self.config.load_cap

    def pair_of(self, serving: np.ndarray) -> np.ndarray:
        return np.array([self.pairs.index(int(b), u) for u, b in enumerate(serving)],
                        dtype=np.int64)

    def association(self, assign: np.ndarray) -> Association:
        return Association(self.pairs.pair_bs[assign].copy(), self.topology.bs_operator,
                           self.topology.ue_operator)

    # full (non-incremental) evaluation ---------------------------------
    def rates(self, assign: np.ndarray, actual: bool = True, time_share: bool = False):
        """Per-UE rates and (3, S, U) interference over noise."""
        mask = self.actual_mask if actual else self.solve_mask
        cap = self.load_cap if time_share else None
        if self.spec.digital:
            return self.digital.evaluate(assign, mask, self.bw, self.noise,
                                         metrics.scope_for(self.spec.coordination),
                                         self.spec.precoder, self.config.rzf_regularizer,
                                         time_share_cap=cap)
        st = self.analog_state(assign, mask, cap)
        return st.rate, st.components(self.topology, self.noise)

    def analog_state(self, assign, mask=None, cap=None) -> metrics.AnalogState:
        mask = self.solve_mask if mask is None else mask
        return metrics.analog_state(self.gains, assign, mask, self.bw, self.noise,
                                    self.config.tx_power, self.topology.n_bs, cap)

    def utilities(self, assign: np.ndarray, actual: bool = False) -> np.ndarray:
        if self.spec.digital:
            rate, _ = self.rates(assign, actual=actual)
        else:
            rate = self.analog_state(assign, self.actual_mask if actual else None).rate
        with np.errstate(divide="ignore"):
            return np.bincount(self.topology.ue_operator, weights=np.log(rate),
                               minlength=self.n_ops).astype(float)


def build_instance(spec: ProblemSpec, topology: Topology, channels: NetworkChannels,
                   config: ScenarioConfig, candidate_bss: int | None = None,
                   backend: str | None = None) -> Instance:
    cfg = spec.effective_config(config)
    k = cfg.candidate_bss if candidate_bss is None else candidate_bss
    pairs = metrics.build_candidates(topology, channels, k)
    gains = metrics.analog_gains(topology, channels, cfg, pairs, backend=backend)
    bw, noise = metrics.ue_bandwidth_noise(topology, cfg)
    ignore = spec.i3 is InterferenceModel.IGNORED
    solve_mask = metrics.interference_mask(topology, cfg, ignore_other_operators=ignore)
    actual_mask = metrics.interference_mask(topology, cfg)
    digital = None
    if spec.digital:
        digital = DigitalModel(topology, channels, cfg, pairs, gains.k_ue, gains.cb_ue)
    w = cfg.tchebycheff_weights
    weights = np.full(topology.num_operators, 1.0 / topology.num_operators) if w is None else np.array(w)
    return Instance(spec, topology, channels, cfg, pairs, gains, bw, noise, solve_mask,
                    actual_mask, digital, weights)


# ---------------------------------------------------------------------------
# baseline and initialization


def _mean_gain(inst: Instance) -> np.ndarray:
    return inst.gains.serve_gain.mean(axis=0)


def rssi_association(inst: Instance) -> np.ndarray:
    """Pair index per UE maximizing the mean best-beam received power.

    Ties go to the lowest BS index.  Loads are not limited.
    """
    g = _mean_gain(inst)
    assign = np.empty(inst.topology.n_ue, dtype=np.int64)
    for u, cand in enumerate(inst.pairs.ue_pairs):
        top = g[cand].max()
        best = cand[g[cand] == top]
        assign[u] = best[np.argmin(inst.pairs.pair_bs[best])]
    return assign


def greedy_association(inst: Instance, ues=None, assign=None) -> np.ndarray | None:
    """RSSI choice projected onto the load limit.

    UEs go in order of decreasing best mean gain; each takes its strongest
    candidate BS with spare capacity.  Returns None when some UE finds none.
    """
    g = _mean_gain(inst)
    n_ue = inst.topology.n_ue
    ues = np.arange(n_ue) if ues is None else np.asarray(ues)
    assign = np.full(n_ue, -1, dtype=np.int64) if assign is None else assign.copy()
    load = np.zeros(inst.topology.n_bs, dtype=np.int64)
    fixed = np.setdiff1d(np.arange(n_ue), ues)
    np.add.at(load, inst.pairs.pair_bs[assign[fixed]], 1)
    best = np.array([g[inst.pairs.ue_pairs[u]].max() for u in ues])
    for u in ues[np.argsort(-best, kind="stable")]:
        cand = inst.pairs.ue_pairs[u]
        order = sorted(cand, key=lambda p: (-g[p], inst.pairs.pair_bs[p]))
        for p in order:
            if load[inst.pairs.pair_bs[p]] < inst.load_cap:
                assign[u] = p
                load[inst.pairs.pair_bs[p]] += 1
                break
        else:
            return None
    return assign


# ---------------------------------------------------------------------------
# local search


def _candidate_moves(inst: Instance, assign: np.ndarray, ues: np.ndarray):
    """Single moves to BSs with spare capacity, and swaps where a move is blocked."""
    pair_bs = inst.pairs.pair_bs
    bs_of = pair_bs[assign]
    load = np.bincount(bs_of, minlength=inst.topology.n_bs)
    in_scope = np.zeros(len(assign), dtype=bool)
    in_scope[ues] = True
    mv_u, mv_p = [], []
    for v in ues:
        for pn in inst.pairs.ue_pairs[v]:
            bn = pair_bs[pn]
            if bn == bs_of[v]:
                continue
            if load[bn] < inst.load_cap:
                mv_u.append((v, -1))
                mv_p.append((pn, 0))
                continue
            for w in np.flatnonzero((bs_of == bn) & in_scope):
                back = [q for q in inst.pairs.ue_pairs[w] if pair_bs[q] == bs_of[v]]
                if back:
                    mv_u.append((v, w))
                    mv_p.append((pn, back[0]))
    moves_u = np.array(mv_u, dtype=np.int64).reshape(-1, 2)
    moves_p = np.array(mv_p, dtype=np.int64).reshape(-1, 2)
    return moves_u, moves_p


def _apply(assign, mu, mp):
    out = assign.copy()
    for v, p in zip(mu, mp):
        if v >= 0:
            out[v] = p
    return out


@dataclass
class SearchTrace:
    steps: int = 0
    evaluations: int = 0
    start_key: tuple = ()
    end_key: tuple = ()


class Objective:
    """Maps per-operator utilities to a (primary, secondary) key; lower is better."""

    def __init__(self, kind: str, weights=None, ideal=None, operator: int | None = None):
        self.kind = kind
        self.weights = weights
        self.ideal = ideal
        self.operator = operator

    def __call__(self, util: np.ndarray):
        util = np.atleast_2d(util)
        if self.kind == "operator":
            f = util[:, self.operator]
            return -f, np.zeros_like(f)
        if self.kind == "sum":
            f = util.sum(axis=1)
            return -f, np.zeros_like(f)
        score = tchebycheff_scalarize(util, self.weights, self.ideal)
        with np.errstate(invalid="ignore"):
            tie = -np.sum(self.weights[None, :] * util, axis=1)
        return score, tie


def local_search(inst: Instance, assign: np.ndarray, objective: Objective, ues=None,
                 backend: str | None = None, trace: SearchTrace | None = None) -> np.ndarray:
    """Best-improvement search over moves and swaps of UEs in ``ues``."""
    ues = np.arange(inst.topology.n_ue) if ues is None else np.asarray(ues)
    trace = SearchTrace() if trace is None else trace
    assign = assign.copy()
    ue_op = inst.topology.ue_operator
    cur = objective(inst.utilities(assign))
    trace.start_key = (float(cur[0][0]), float(cur[1][0]))
    for _ in range(inst.config.max_local_search_steps):
        mu, mp = _candidate_moves(inst, assign, ues)
        if len(mu) == 0:
            break
        if inst.spec.digital:
            util = np.array([inst.utilities(_apply(assign, a, b)) for a, b in zip(mu, mp)])
        else:
            state = inst.analog_state(assign)
            util = metrics.candidate_utilities(inst.gains, state, inst.solve_mask, ue_op,
                                               inst.bw, inst.noise, inst.config.tx_power,
                                               mu, mp, inst.n_ops, backend)
        trace.evaluations += len(mu)
        prim, sec = objective(util)
        ok = better(prim, sec, cur[0][0], cur[1][0])
        if not ok.any():
            break
        cand = np.flatnonzero(ok)
        # best key among the improving candidates; first index on ties
        order = np.lexsort((cand, sec[cand], prim[cand]))
        c = cand[order[0]]
        new = _apply(assign, mu[c], mp[c])
        new_key = objective(inst.utilities(new))
        if not better(new_key[0], new_key[1], cur[0][0], cur[1][0])[0]:
            break  # incremental score disagreed with the full one
        assign, cur = new, new_key
        trace.steps += 1
    trace.end_key = (float(cur[0][0]), float(cur[1][0]))
    return assign


# ---------------------------------------------------------------------------
# solve


@dataclass
class SolveResult:
    association: Association
    assign: np.ndarray  # pair index per UE
    utilities: np.ndarray  # per operator, as the problem scores them
    instance: Instance
    trace: SearchTrace
    ideal: np.ndarray | None = None


def _feasible_instance(spec, topology, channels, config, backend) -> tuple[Instance, np.ndarray]:
    k = config.candidate_bss
    while True:
        inst = build_instance(spec, topology, channels, config, candidate_bss=k, backend=backend)
        if spec.problem_id is ProblemId.RSSI:
            return inst, rssi_association(inst)
        init = greedy_association(inst)
        if init is not None:
            return inst, init
        most = max(len(topology.bss_of(z)) for z in range(topology.num_operators))
        if k >= most:
            raise AssociationError("no feasible association: a UE has no BS with spare capacity")
        k = min(most, 2 * k)


def _check_feasible(topology: Topology, config: ScenarioConfig, spec: ProblemSpec) -> None:
    if spec.problem_id is ProblemId.RSSI:
        return
    cap = config.replace(precoder=spec.precoder).load_cap
    for z in range(topology.num_operators):
        if len(topology.ues_of(z)) > cap * len(topology.bss_of(z)):
            raise AssociationError(f"operator {z} has more UEs than its BSs can serve")


def solve(problem: ProblemSpec | ProblemId | str, topology: Topology, channels: NetworkChannels,
          config: ScenarioConfig, *, ideal=None, backend: str | None = None,
          instance: Instance | None = None) -> SolveResult:
    """Solve one association problem and return a feasible association.

    P2/P3/P5/P6 search each operator separately on its own utility.  P1/P4
    minimize the weighted Tchebycheff score against ``ideal`` (default: the
    per-operator optima of the matching no-coordination problem), starting
    from the better of the greedy and that problem's solution.
    """
    spec = problem if isinstance(problem, ProblemSpec) else ProblemSpec.build(problem, config)
    _check_feasible(topology, config, spec)
    if instance is None:
        inst, init = _feasible_instance(spec, topology, channels, config, backend)
    else:
        inst = instance
        init = rssi_association(inst) if spec.problem_id is ProblemId.RSSI else greedy_association(inst)
        if init is None:
            raise AssociationError("no feasible association within the candidate BSs")
    trace = SearchTrace()

    if spec.problem_id is ProblemId.RSSI:
        assign = init
    elif spec.per_operator:
        assign = init
        for z in range(inst.n_ops):
            ues = inst.topology.ues_of(z)
            if len(ues):
                assign = local_search(inst, assign, Objective("operator", operator=z), ues,
                                      backend, trace)
    else:
        selfish = ProblemId.P2 if spec.problem_id is ProblemId.P1 else ProblemId.P5
        sub_spec = ProblemSpec.build(selfish, config.replace(precoder=spec.precoder))
        sub_inst = _retarget(inst, sub_spec)
        sub = solve(sub_spec, topology, channels, config, backend=backend, instance=sub_inst)
        if ideal is None:
            ideal = sub.utilities
        objective = Objective("tchebycheff", inst.weights, np.asarray(ideal, dtype=float))
        starts = [a for a in (init, sub.assign) if a is not None]
        keys = [objective(inst.utilities(a)) for a in starts]
        best = 0
        for i in range(1, len(starts)):
            if better(keys[i][0], keys[i][1], keys[best][0][0], keys[best][1][0])[0]:
                best = i
        assign = local_search(inst, starts[best], objective, None, backend, trace)

    assoc = inst.association(assign)
    if spec.problem_id is not ProblemId.RSSI:
        assoc.check(inst.load_cap)
    return SolveResult(assoc, assign, inst.utilities(assign), inst, trace,
                       None if ideal is None else np.asarray(ideal, dtype=float))


def _retarget(inst: Instance, spec: ProblemSpec) -> Instance:
    """Same candidates and gains under another problem's interference model."""
    ignore = spec.i3 is InterferenceModel.IGNORED
    mask = metrics.interference_mask(inst.topology, inst.config, ignore_other_operators=ignore)
    return Instance(spec, inst.topology, inst.channels, inst.config, inst.pairs, inst.gains,
                    inst.bw, inst.noise, mask, inst.actual_mask, inst.digital, inst.weights)


def evaluate(result: SolveResult) -> metrics.RateReport:
    """Rates with the actual interference of every co-channel operator."""
    inst = result.instance
    time_share = inst.spec.problem_id is ProblemId.RSSI
    rate, comps = inst.rates(result.assign, actual=True, time_share=time_share)
    return metrics.RateReport.build(rate, inst.topology.ue_operator, inst.n_ops, comps)


# ---------------------------------------------------------------------------
# exhaustive oracle


def brute_force_oracle(problem, topology: Topology, channels: NetworkChannels,
                       config: ScenarioConfig, *, ideal=None, max_ues: int = 8,
                       max_candidates: int = 10 ** 6) -> SolveResult:
    """Exact optimum by enumerating every feasible association.

    Uses every own-operator BS as a candidate and full evaluation for each
    association.  For P1/P4 the ideal point defaults to the oracle optimum of
    the matching no-coordination problem.
    """
    spec = problem if isinstance(problem, ProblemSpec) else ProblemSpec.build(problem, config)
    if topology.n_ue > max_ues:
        raise AssociationError(f"oracle limited to {max_ues} UEs")
    most = max(len(topology.bss_of(z)) for z in range(topology.num_operators))
    inst = build_instance(spec, topology, channels, config, candidate_bss=most)
    choices = inst.pairs.ue_pairs
    total = math.prod(len(c) for c in choices)
    if total > max_candidates:
        raise AssociationError(f"{total} associations exceed the limit {max_candidates}")
    _check_feasible(topology, config, spec)

    if spec.problem_id is ProblemId.RSSI:
        assign = rssi_association(inst)
    elif spec.per_operator:
        # operators do not interact, so each is enumerated on its own
        assign = np.array([c[0] for c in choices], dtype=np.int64)
        for z in range(inst.n_ops):
            ues = topology.ues_of(z)
            if len(ues) == 0:
                continue
            best, best_f = None, -math.inf
            for combo in itertools.product(*(choices[u] for u in ues)):
                a = assign.copy()
                a[ues] = combo
                if not _load_ok(inst, a, topology.bss_of(z)):
                    continue
                f = inst.utilities(a)[z]
                if best is None or f > best_f + 1e-12 * (1 + abs(best_f)):
                    best, best_f = combo, f
            if best is None:
                raise AssociationError(f"no feasible association for operator {z}")
            assign[ues] = best
    else:
        if ideal is None:
            selfish = ProblemId.P2 if spec.problem_id is ProblemId.P1 else ProblemId.P5
            ideal = brute_force_oracle(ProblemSpec.build(selfish, config.replace(precoder=spec.precoder)),
                                       topology, channels, config).utilities
        objective = Objective("tchebycheff", inst.weights, np.asarray(ideal, dtype=float))
        assign, key = None, None
        for combo in itertools.product(*choices):
            a = np.array(combo, dtype=np.int64)
            if not _load_ok(inst, a):
                continue
            k = objective(inst.utilities(a))
            if key is None or better(k[0], k[1], key[0][0], key[1][0])[0]:
                assign, key = a, k
    if assign is None:
        raise AssociationError("no feasible association")
    assoc = inst.association(assign)
    return SolveResult(assoc, assign, inst.utilities(assign), inst, SearchTrace(),
                       None if ideal is None else np.asarray(ideal, dtype=float))


def _load_ok(inst: Instance, assign: np.ndarray, bss=None) -> bool:
    load = np.bincount(inst.pairs.pair_bs[assign], minlength=inst.topology.n_bs)
    if bss is not None:
        load = load[bss]
    return bool(np.all(load <= inst.load_cap))
