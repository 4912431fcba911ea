"""Received power, interference components, long-term rates and utilities.

Two evaluation paths share one set of formulas:

* :func:`interference_breakdown` works on explicit channel matrices and beam
  vectors, term by term.  It is slow and serves as the reference.
* :class:`AnalogGains` / :func:`analog_state` and :class:`DigitalModel` work in
  the path domain on whole networks and are what the solvers call.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .beamforming import (BeamformingError, Codebook, Scope, batched_beam_search, batched_rzf,
                          build_dft_codebook, link_factors, padded_paths)
from .channel import NetworkChannels, steering_inner
from .topology import (Coordination, Precoder, ScenarioConfig, Topology, co_channel_matrix,
                       operator_bandwidths)


class Mode(str, enum.Enum):
    ANALOG = "Analog"
    DIGITAL = "Digital"


@dataclass(frozen=True)
class InterferenceBreakdown:
    """Powers in watts seen by one UE in one coherence interval."""

    desired: float
    intra_cell: float
    inter_cell: float
    inter_operator: float
    noise: float

    def __post_init__(self) -> None:
        for name in ("desired", "intra_cell", "inter_cell", "inter_operator", "noise"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def interference(self) -> float:
        return self.intra_cell + self.inter_cell + self.inter_operator

    @property
    def sinr(self) -> float:
        return self.desired / (self.interference + self.noise)


# ---------------------------------------------------------------------------
# reference evaluation from explicit matrices


@dataclass(frozen=True)
class BeamSet:
    """Per-UE transmit beam (at its serving BS), combiner and stream power.

    ``power[u]`` is ``p / N_b`` for analog beams and ``lambda_b`` for digital
    precoders; with unit-norm columns the two coincide.
    """

    w_bs: np.ndarray  # (U, N_BS)
    w_ue: np.ndarray  # (U, N_UE)
    power: np.ndarray  # (U,)


def stream_powers(serving: np.ndarray, n_bs: int, p: float) -> np.ndarray:
    load = np.bincount(serving, minlength=n_bs)
    return p / load[serving]


def interference_breakdown(topology: Topology, channels: NetworkChannels, beams: BeamSet,
                           association, u: int, config: ScenarioConfig, sample: int = 0,
                           mode: Mode | str = Mode.ANALOG) -> InterferenceBreakdown:
    """Desired power and the three interference sums for UE ``u``, term by term.

    Interference is summed over every co-channel BS ``i`` and each UE ``j`` it
    serves, weighted by the stream power of ``j``.  ``mode`` only documents
    where ``beams.power`` came from; the sums are the same.
    """
    Mode(mode)
    serving = np.asarray(getattr(association, "serving", association))
    if not 0 <= u < len(serving) or serving[u] < 0:
        raise ValueError(f"UE {u} is not associated")
    cc = co_channel_matrix(config)
    z = topology.ue_operator[u]
    b = serving[u]
    w = beams.w_ue[u].conj()
    bw = operator_bandwidths(config)[z]

    def term(j: int) -> float:
        i = serving[j]
        y = w @ channels.matrix(i, u, sample) @ beams.w_bs[j]
        return float(beams.power[j] * abs(y) ** 2)

    desired = term(u)
    intra = inter = other = 0.0
    for j in range(len(serving)):
        if j == u or serving[j] < 0:
            continue
        i = serving[j]
        k = topology.bs_operator[i]
        if i == b:
            intra += term(j)
        elif k == z:
            inter += term(j)
        elif cc[k, z]:
            other += term(j)
    return InterferenceBreakdown(desired, intra, inter, other, bw * config.noise_psd)


def average_rate(sampler: Callable[[int], InterferenceBreakdown], bandwidth: float,
                 n_samples: int) -> float:
    """Monte Carlo long-term rate in bit/s over ``n_samples`` coherence intervals."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    total = 0.0
    for s in range(n_samples):
        bd = sampler(s)
        total += math.log2(1.0 + bd.sinr)
    return bandwidth * total / n_samples


def operator_utility(rates, association, z: int, ue_operator=None) -> float:
    """Natural-log sum of the rates of operator ``z``'s UEs; ``-inf`` on a zero rate.

    ``ue_operator`` defaults to ``association.ue_operator``.
    """
    if ue_operator is None:
        ue_operator = association.ue_operator
    r = np.asarray(rates, dtype=float)[np.asarray(ue_operator) == z]
    if np.any(r <= 0):
        return -math.inf
    return float(np.sum(np.log(r)))


@dataclass(frozen=True)
class RateReport:
    per_ue_rate: np.ndarray
    per_operator_utility: np.ndarray
    percentiles: dict
    mean_interference: float  # (I1 + I2 + I3) / noise
    mean_components: tuple[float, float, float]  # each over noise
    per_ue_components: np.ndarray | None = None  # (3, U), averaged over fading

    @classmethod
    def build(cls, rates: np.ndarray, ue_operator: np.ndarray, n_ops: int,
              components: np.ndarray) -> "RateReport":
        """``components`` is (3, ...) of I1, I2, I3 over noise."""
        util = np.array([operator_utility(rates, None, z, ue_operator) for z in range(n_ops)])
        pct = {q: float(np.percentile(rates, q)) for q in (5, 50, 95)} if len(rates) else {}
        components = np.asarray(components, dtype=float)
        n_ue = components.shape[-1]
        if n_ue == 0:  # no UEs: nothing to average
            return cls(rates, util, pct, math.nan, (math.nan,) * 3, np.zeros((3, 0)))
        comp = tuple(float(np.mean(c)) for c in components)
        per_ue = components.reshape(3, -1, n_ue).mean(axis=1)
        return cls(rates, util, pct, float(sum(comp)), comp, per_ue)


# ---------------------------------------------------------------------------
# candidate serving pairs


@dataclass(frozen=True)
class CandidatePairs:
    """(BS, UE) links a UE may be served on.

    Each UE keeps the ``k`` own-operator BSs with the largest long-term gain.
    """

    pair_bs: np.ndarray
    pair_ue: np.ndarray
    ue_pairs: tuple  # per UE: array of pair indices, strongest first

    def __len__(self) -> int:
        return len(self.pair_bs)

    def index(self, b: int, u: int) -> int:
        for p in self.ue_pairs[u]:
            if self.pair_bs[p] == b:
                return int(p)
        raise KeyError((b, u))


def build_candidates(topology: Topology, channels: NetworkChannels, k: int) -> CandidatePairs:
    pair_bs, pair_ue, ue_pairs = [], [], []
    for u in range(topology.n_ue):
        own = topology.bss_of(topology.ue_operator[u])
        order = np.argsort(-channels.path_loss[own, u], kind="stable")
        chosen = own[order[:k]]
        start = len(pair_bs)
        pair_bs.extend(int(b) for b in chosen)
        pair_ue.extend([u] * len(chosen))
        ue_pairs.append(np.arange(start, start + len(chosen)))
    return CandidatePairs(np.array(pair_bs, dtype=np.int64), np.array(pair_ue, dtype=np.int64),
                          tuple(ue_pairs))


# ---------------------------------------------------------------------------
# analog path


@dataclass(frozen=True)
class AnalogGains:
    """Beam choices per candidate pair and the cross-gain tensor.

    ``C[s, p, q]`` is the gain from the beam BS ``bs(q)`` uses for pair ``q``
    into the combiner UE ``ue(p)`` uses for pair ``p``.  It does not depend on
    the association, so the solvers compute it once per topology.
    """

    pairs: CandidatePairs
    k_ue: np.ndarray  # (S, P)
    k_bs: np.ndarray
    serve_gain: np.ndarray  # (S, P) = C[s, p, p]
    C: np.ndarray  # (S, P, P)
    cb_bs: Codebook
    cb_ue: Codebook


def codebooks(config: ScenarioConfig) -> tuple[Codebook, Codebook]:
    return (build_dft_codebook(config.n_bs_antennas, config.bs_bits),
            build_dft_codebook(config.n_ue_antennas, config.ue_bits))


def analog_gains(topology: Topology, channels: NetworkChannels, config: ScenarioConfig,
                 pairs: CandidatePairs, backend: str | None = None) -> AnalogGains:
    cb_bs, cb_ue = codebooks(config)
    factors = link_factors(channels, pairs.pair_bs, pairs.pair_ue, cb_bs, cb_ue)
    k_ue, k_bs, best = batched_beam_search(channels, factors)
    mod = kernels.get_backend(backend) if backend else kernels
    C = np.empty((channels.n_samples, len(pairs), len(pairs)))
    mod.pair_gain_tensor(
        np.ascontiguousarray(channels.gains), channels.offsets.astype(np.int64),
        channels.aoa_sin, channels.aod_sin, np.ascontiguousarray(channels.scale()),
        pairs.pair_bs, pairs.pair_ue, k_ue, k_bs, cb_ue.sines, cb_bs.sines,
        cb_ue.n, cb_bs.n, topology.bs_operator.astype(np.int64),
        topology.ue_operator.astype(np.int64), co_channel_matrix(config), C)
    return AnalogGains(pairs, k_ue, k_bs, best, C, cb_bs, cb_ue)


def interference_mask(topology: Topology, config: ScenarioConfig,
                      ignore_other_operators: bool = False) -> np.ndarray:
    """(U, B) bool: BS ``b`` interferes with UE ``u``.

    With ``ignore_other_operators`` only the UE's own operator counts (the
    solver-side assumption of no inter-operator coordination).
    """
    cc = co_channel_matrix(config)
    mask = cc[topology.ue_operator][:, topology.bs_operator]
    if ignore_other_operators:
        mask &= topology.ue_operator[:, None] == topology.bs_operator[None, :]
    return np.ascontiguousarray(mask)


@dataclass
class AnalogState:
    """Network-wide analog evaluation for one association."""

    assign: np.ndarray  # (U,) pair index
    load: np.ndarray  # (B,)
    agg: np.ndarray  # (S, U, B) unweighted interference per source BS
    intf: np.ndarray  # (S, U) power-weighted total
    signal: np.ndarray  # (S, U)
    rate: np.ndarray  # (U,) bit/s
    lograte: np.ndarray  # (U,) ln rate, -inf for zero
    bs_power: np.ndarray  # (B,) per-stream interference weight
    assign_bs: np.ndarray  # (U,) serving BS

    def utilities(self, ue_operator: np.ndarray, n_ops: int) -> np.ndarray:
        return np.bincount(ue_operator, weights=self.lograte, minlength=n_ops)

    def components(self, topology: Topology, noise: np.ndarray) -> np.ndarray:
        """(3, S, U) of I1, I2, I3 normalized to noise."""
        bs_of = self.assign_bs
        weighted = self.agg * self.bs_power[None, None, :]
        own = np.arange(len(bs_of))
        i1 = weighted[:, own, bs_of]
        same = topology.ue_operator[:, None] == topology.bs_operator[None, :]
        i2 = np.sum(weighted * same[None], axis=2) - i1
        i3 = np.sum(weighted * ~same[None], axis=2)
        return np.stack([i1, np.maximum(i2, 0.0), i3]) / noise[None, None, :]


def analog_state(gains: AnalogGains, assign: np.ndarray, mask: np.ndarray, bw: np.ndarray,
                 noise: np.ndarray, p: float, n_bs: int,
                 time_share_cap: int | None = None) -> AnalogState:
    """Rates for association ``assign`` (pair index per UE).

    Stream power at BS ``b`` is ``p / N_b``.  With ``time_share_cap`` a BS with
    more UEs than RF chains serves them in turns: each stream gets
    ``p / min(N_b, cap)`` while active, interference averages to ``p / N_b``
    per UE, and rates shrink by ``min(1, cap / N_b)``.
    """
    assign = np.asarray(assign, dtype=np.int64)
    pair_bs = gains.pairs.pair_bs
    bs_of = pair_bs[assign]
    n_ue = len(assign)
    load = np.bincount(bs_of, minlength=n_bs).astype(np.int64)
    bs_power = np.where(load > 0, p / np.maximum(load, 1), 0.0)
    # group the interfering beams by BS, then sum within each group
    order = np.argsort(bs_of, kind="stable")
    G = gains.C[:, assign[:, None], assign[order][None, :]]  # (S, U, U): into u from j's beam
    idx = np.arange(n_ue)
    G[:, idx[order], idx] = 0.0
    active = np.flatnonzero(load)
    agg = np.zeros((gains.C.shape[0], n_ue, n_bs))
    if n_ue:
        starts = np.concatenate([[0], np.cumsum(load[active])[:-1]])
        agg[:, :, active] = np.add.reduceat(G, starts, axis=2)
    agg *= mask[None, :, :]
    intf = agg @ bs_power
    serve = gains.C[:, assign, assign]
    if time_share_cap is None:
        sig_power = bs_power[bs_of]
        share = np.ones(n_ue)
    else:
        sig_power = p / np.minimum(load[bs_of], time_share_cap)
        share = np.minimum(1.0, time_share_cap / load[bs_of])
    signal = sig_power[None, :] * serve
    rate = share * bw * np.mean(np.log2(1.0 + signal / (intf + noise[None, :])), axis=0)
    with np.errstate(divide="ignore"):
        lograte = np.log(rate)
    return AnalogState(assign, load, agg, intf, signal, rate, lograte, bs_power, bs_of)


def candidate_utilities(gains: AnalogGains, state: AnalogState, mask: np.ndarray,
                        ue_op: np.ndarray, bw: np.ndarray, noise: np.ndarray, p: float,
                        moves_ue: np.ndarray, moves_pair: np.ndarray, n_ops: int,
                        backend: str | None = None) -> np.ndarray:
    """Per-operator utilities for each candidate move set, (n_cand, Z)."""
    mod = kernels.get_backend(backend) if backend else kernels
    out = np.empty((len(moves_ue), n_ops))
    if len(moves_ue) == 0:
        return out
    mod.evaluate_candidates(
        gains.C, mask, gains.pairs.pair_bs, ue_op.astype(np.int64), state.assign, state.load,
        state.agg, state.intf, state.lograte, noise, bw, float(p),
        np.ascontiguousarray(moves_ue, dtype=np.int64),
        np.ascontiguousarray(moves_pair, dtype=np.int64), int(n_ops), out)
    return out


# ---------------------------------------------------------------------------
# digital path


def scope_for(coordination: Coordination | str) -> Scope:
    return {Coordination.FULL: Scope.FULL_NETWORK, Coordination.INTRA_ONLY: Scope.OPERATOR,
            Coordination.NONE: Scope.CELL}[Coordination(coordination)]


class DigitalModel:
    """Effective-channel rows for every candidate pair, and rate evaluation.

    ``rows[s, p, i]`` is ``w_ue(p)^H H_{i, ue(p)}`` where the combiner of pair
    ``p`` is the analog beam found against the serving channel of ``p``.  Rate
    evaluation only needs inner products of rows leaving the same BS, so the
    per-BS Gram tensor ``gram[s, i, p, q] = rows[s, p, i] . rows[s, q, i]^H`` is
    kept instead of the rows (which are only stored when combiners are
    refined per association).
    """

    def __init__(self, topology: Topology, channels: NetworkChannels, config: ScenarioConfig,
                 pairs: CandidatePairs, k_ue: np.ndarray, cb_ue: Codebook):
        self.topology = topology
        self.channels = channels
        self.config = config
        self.pairs = pairs
        self.cb_ue = cb_ue
        self.k_ue = k_ue
        every = np.arange(len(pairs))
        keep_rows = config.combiner_iterations > 0
        rows, grams = [], []
        for s in range(k_ue.shape[0]):
            r = self.rows_for(s, every, k_ue[s])  # (P, B, N)
            rb = np.swapaxes(r, 0, 1)
            grams.append(rb @ np.swapaxes(rb.conj(), -1, -2))
            if keep_rows:
                rows.append(r)
        self.gram = np.stack(grams)  # (S, B, P, P)
        self.rows = np.stack(rows) if keep_rows else None

    def rows_for(self, s: int, pair_idx: np.ndarray, k_ue_s: np.ndarray) -> np.ndarray:
        """(len(pair_idx), B, N_BS) rows in sample ``s`` for the given UE beams."""
        ch = self.channels
        n_ant = ch.bs_antennas
        ue = self.pairs.pair_ue[pair_idx]
        rows = np.zeros((len(pair_idx), ch.n_bs, n_ant), dtype=complex)
        ant = np.arange(n_ant)
        scale = ch.scale()
        for i in range(ch.n_bs):
            idx, valid = padded_paths(ch, np.full(len(ue), i), ue)
            a_bs = np.exp(-1j * np.pi * ch.aod_sin[idx][..., None] * ant) / math.sqrt(n_ant)
            w = steering_inner(self.cb_ue.n, self.cb_ue.sines[k_ue_s][:, None], ch.aoa_sin[idx])
            coef = np.where(valid, ch.gains[s][idx] * w, 0.0) * scale[i, ue][:, None]
            rows[:, i, :] = np.einsum("pn,pnk->pk", coef, a_bs)
        return rows

    def refined_rows(self, s: int, assign: np.ndarray, scope: Scope, precoder: Precoder,
                     regularizer: float | None, passes: int) -> np.ndarray:
        """Rows of the served UEs, (U, B, N), after ``passes`` combiner updates.

        Each pass picks every UE's codebook combiner against ``H_bu w_bu`` for
        the current precoder, then rebuilds the rows.
        """
        R = self.rows_for(s, assign, self.k_ue[s, assign])
        bs_of = self.pairs.pair_bs[assign]
        vecs = self.cb_ue.vectors.conj()
        for _ in range(passes):
            W = self._precoders(lambda ues, b: R[ues, b, :], assign, scope, precoder, regularizer)
            k_new = np.empty(len(assign), dtype=np.int64)
            for b, w in W.items():
                for col, u in enumerate(np.flatnonzero(bs_of == b)):
                    hw = self.channels.matrix(b, int(self.pairs.pair_ue[assign[u]]), s) @ w[:, col]
                    k_new[u] = int(np.argmax(np.abs(vecs @ hw) ** 2))
            R = self.rows_for(s, assign, k_new)
        return R

    def precoders(self, s: int, assign: np.ndarray, scope: Scope, precoder: Precoder,
                  regularizer: float | None = None) -> dict[int, np.ndarray]:
        """Unit-norm precoding matrices per active BS; columns follow served UEs in order."""
        assign = np.asarray(assign, dtype=np.int64)
        R = self.rows_for(s, assign, self.k_ue[s, assign])
        return self._precoders(lambda ues, b: R[ues, b, :], assign, scope, precoder, regularizer)

    def _blocks(self, bs_of, scope, precoder, regularizer):
        """Active BSs, their served UEs, the rows each inverts and the regularizers."""
        topo = self.topology
        cfg = self.config
        bw = operator_bandwidths(cfg)
        cc = co_channel_matrix(cfg)
        active = [int(b) for b in np.unique(bs_of)]
        served = {b: np.flatnonzero(bs_of == b) for b in active}
        blocks, regs = [], []
        for b in active:
            z = topo.bs_operator[b]
            if Precoder(precoder) is Precoder.MRT or scope is Scope.CELL:
                blocks.append(served[b])
            elif scope is Scope.OPERATOR:
                blocks.append(np.flatnonzero(topo.ue_operator == z))
            else:
                blocks.append(np.flatnonzero(cc[z, topo.ue_operator]))
            c = regularizer
            if c is None:
                c = len(served[b]) * cfg.noise_psd * bw[z] / cfg.tx_power
            regs.append(c)
        return active, served, blocks, regs

    def _precoders(self, get, assign, scope, precoder, regularizer):
        """``get(ues, b)`` returns rows (..., len(ues), N); precoders are (..., N, N_b)."""
        bs_of = self.pairs.pair_bs[assign]
        active, served, blocks, regs = self._blocks(bs_of, scope, precoder, regularizer)
        if Precoder(precoder) is Precoder.MRT:
            raw = {b: np.swapaxes(get(served[b], b).conj(), -1, -2) for b in active}
        else:
            # one batched solve for all BSs; blocks are zero-padded to a common size,
            # which leaves the real rows' solution unchanged
            k_max = max(len(x) for x in blocks)
            m_max = max(len(served[b]) for b in active)
            first = get(blocks[0], active[0])
            lead = first.shape[:-2]
            stack = np.zeros((len(active),) + lead + (k_max, first.shape[-1]), dtype=complex)
            select = np.zeros((len(active),) + lead + (k_max, m_max))
            for n, (b, block) in enumerate(zip(active, blocks)):
                stack[n, ..., :len(block), :] = first if n == 0 else get(block, b)
                pos = np.searchsorted(block, served[b])
                select[n, ..., pos, np.arange(len(pos))] = 1.0
            c = np.array(regs).reshape((len(active),) + (1,) * len(lead))
            full = batched_rzf(stack, c, select)
            raw = {b: full[n, ..., :len(served[b])] for n, b in enumerate(active)}
        out = {}
        for b in active:
            w = raw[b]
            norm = np.linalg.norm(w, axis=-2, keepdims=True)
            if np.any(norm == 0):
                raise BeamformingError(f"zero precoder column at BS {b}")
            out[b] = w / norm
        return out

    def _gram_powers(self, assign, scope, precoder, regularizer):
        """Yield (b, |row_u(b) w|^2 for every UE u and unit-norm stream of b), (S, U, N_b)."""
        bs_of = self.pairs.pair_bs[assign]
        active, served, blocks, regs = self._blocks(bs_of, scope, precoder, regularizer)
        if not len(active):
            return
        S = self.gram.shape[0]
        n_ue = len(assign)
        k_max = max(len(x) for x in blocks)
        m_max = max(len(served[b]) for b in active)
        G = np.zeros((len(active), S, k_max, k_max), dtype=complex)
        A = np.zeros((len(active), S, n_ue, k_max), dtype=complex)
        select = np.zeros((len(active), 1, k_max, m_max))
        for n, (b, block) in enumerate(zip(active, blocks)):
            ab = assign[block]
            k = len(block)
            G[n, :, :k, :k] = self.gram[:, b, ab[:, None], ab[None, :]]
            A[n, :, :, :k] = self.gram[:, b, assign[:, None], ab[None, :]]
            pos = np.searchsorted(block, served[b])
            select[n, 0, pos, np.arange(len(pos))] = 1.0
        select = np.broadcast_to(select, (len(active), S, k_max, m_max))
        if Precoder(precoder) is Precoder.MRT:
            X = select.astype(complex)
        else:
            reg = np.array(regs)[:, None, None, None] * np.eye(k_max)
            X = np.linalg.solve(G + reg, select)
        # w = R_block^H X, so |w|^2 = diag(X^H G X) and row_u w = A_u X
        norm2 = np.real(np.sum(X.conj() * (G @ X), axis=-2))  # (n, S, M)
        amp2 = np.abs(A @ X) ** 2
        for n, b in enumerate(active):
            m = len(served[b])
            nm = norm2[n, :, :m]
            if np.any(nm <= 0):
                raise BeamformingError(f"zero precoder column at BS {b}")
            yield b, amp2[n, :, :, :m] / nm[:, None, :]

    def evaluate(self, assign: np.ndarray, mask: np.ndarray, bw: np.ndarray, noise: np.ndarray,
                 scope: Scope, precoder: Precoder, regularizer: float | None = None,
                 time_share_cap: int | None = None):
        """Per-UE rates and (3, S, U) interference components over noise."""
        cfg = self.config
        topo = self.topology
        assign = np.asarray(assign, dtype=np.int64)
        bs_of = self.pairs.pair_bs[assign]
        n_ue = len(assign)
        S = self.gram.shape[0]
        load = np.bincount(bs_of, minlength=topo.n_bs)
        lam = np.where(load > 0, cfg.tx_power / np.maximum(load, 1), 0.0)
        same = topo.ue_operator[:, None] == topo.bs_operator[None, :]
        signal = np.zeros((S, n_ue))
        comps = np.zeros((3, S, n_ue))

        def accumulate(b, power, sl):
            # power (..., U, N_b) into every UE from each unit-norm stream of BS b
            served = np.flatnonzero(bs_of == b)
            cols = np.arange(len(served))
            power = lam[b] * power * mask[:, b][:, None]
            signal[sl, served] = power[..., served, cols]
            power[..., served, cols] = 0.0
            total = power.sum(axis=-1)
            comps[0, sl] += np.where(bs_of == b, total, 0.0)
            comps[1, sl] += np.where((bs_of != b) & same[:, b], total, 0.0)
            comps[2, sl] += np.where(~same[:, b], total, 0.0)

        if cfg.combiner_iterations <= 0:
            for b, power in self._gram_powers(assign, scope, precoder, regularizer):
                accumulate(b, power, slice(None))
        else:
            for s in range(S):
                R = self.refined_rows(s, assign, scope, precoder, regularizer,
                                      cfg.combiner_iterations)

                def get_s(ues, b, R=R):
                    return R[ues, b, :]
                W = self._precoders(get_s, assign, scope, precoder, regularizer)
                for b, w in W.items():
                    accumulate(b, np.abs(R[:, b, :] @ w) ** 2, s)
        intf = comps.sum(axis=0)
        share = np.ones(n_ue)
        if time_share_cap is not None:
            share = np.minimum(1.0, time_share_cap / load[bs_of])
        rate = share * bw * np.mean(np.log2(1.0 + signal / (intf + noise[None, :])), axis=0)
        return rate, comps / noise[None, None, :]


def ue_bandwidth_noise(topology: Topology, config: ScenarioConfig):
    bw = operator_bandwidths(config)[topology.ue_operator]
    return bw, bw * config.noise_psd


def percentiles(rates: Sequence[float]) -> tuple[float, float, float]:
    r = np.asarray(rates, dtype=float)
    return tuple(float(np.percentile(r, q)) for q in (5, 50, 95))
