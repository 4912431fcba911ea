"""Codebooks, analog beam search and digital (MRT / RZF) precoders."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np

from .channel import NetworkChannels, steering_inner, ula_response_sine
from .topology import Topology


class BeamformingError(ValueError):
    pass


@dataclass(frozen=True)
class Codebook:
    """Steering vectors on a uniform grid in sine space."""

    sines: np.ndarray
    n: int
    bits: int

    def __len__(self) -> int:
        return len(self.sines)

    @property
    def vectors(self) -> np.ndarray:
        """(2**bits, n) array, one unit-norm steering vector per row."""
        return ula_response_sine(self.sines, self.n)


def build_dft_codebook(n: int, bits: int) -> Codebook:
    size = 2 ** bits
    sines = -1.0 + 2.0 * np.arange(size) / size
    return Codebook(sines=sines, n=n, bits=bits)


class BeamChoice(NamedTuple):
    w_bs: np.ndarray
    w_ue: np.ndarray
    gain: float


def best_beam_indices(H: np.ndarray, cb_bs: Codebook, cb_ue: Codebook) -> tuple[int, int, float]:
    """Exhaustive search; returns (ue index, bs index, |w_ue^H H w_bs|^2).

    Ties go to the lowest (ue index, bs index) pair.
    """
    if len(cb_bs) == 0 or len(cb_ue) == 0:
        raise BeamformingError("empty codebook")
    if H.shape != (cb_ue.n, cb_bs.n):
        raise BeamformingError(f"channel shape {H.shape} does not match codebooks")
    gains = np.abs(cb_ue.vectors.conj() @ H @ cb_bs.vectors.T) ** 2
    flat = int(np.argmax(gains))
    k_ue, k_bs = divmod(flat, len(cb_bs))
    return k_ue, k_bs, float(gains[k_ue, k_bs])


def analog_beam_search(H: np.ndarray, cb_bs: Codebook, cb_ue: Codebook) -> BeamChoice:
    k_ue, k_bs, gain = best_beam_indices(H, cb_bs, cb_ue)
    return BeamChoice(cb_bs.vectors[k_bs], cb_ue.vectors[k_ue], gain)


# ---------------------------------------------------------------------------
# path-domain batched search


@dataclass(frozen=True)
class LinkFactors:
    """Per-path codebook responses for a list of links, padded to a common path count.

    ``ue_fac[l, n, k] = w_k^H a_UE(aoa_n)`` and
    ``bs_fac[l, n, k] = a_BS(aod_n)^H w_k``; padded paths carry zero gain.
    """

    bs: np.ndarray  # (L,)
    ue: np.ndarray
    path_index: np.ndarray  # (L, P_max) index into the flat path arrays
    valid: np.ndarray  # (L, P_max) bool
    scale: np.ndarray  # (L,)
    ue_fac: np.ndarray
    bs_fac: np.ndarray


def padded_paths(channels: NetworkChannels, bs: np.ndarray, ue: np.ndarray):
    k = bs * channels.n_ue + ue
    start = channels.offsets[k]
    count = channels.offsets[k + 1] - start
    width = int(count.max()) if len(count) else 1
    idx = start[:, None] + np.arange(width)[None, :]
    valid = np.arange(width)[None, :] < count[:, None]
    return np.where(valid, idx, 0), valid


def link_factors(channels: NetworkChannels, bs, ue, cb_bs: Codebook, cb_ue: Codebook) -> LinkFactors:
    bs = np.asarray(bs, dtype=np.int64)
    ue = np.asarray(ue, dtype=np.int64)
    idx, valid = padded_paths(channels, bs, ue)
    aoa = channels.aoa_sin[idx]
    aod = channels.aod_sin[idx]
    ue_fac = steering_inner(cb_ue.n, cb_ue.sines[None, None, :], aoa[..., None])
    bs_fac = steering_inner(cb_bs.n, aod[..., None], cb_bs.sines[None, None, :])
    ue_fac = np.where(valid[..., None], ue_fac, 0.0)
    scale = channels.scale()[bs, ue]
    return LinkFactors(bs, ue, idx, valid, scale, ue_fac, bs_fac)


def batched_beam_search(channels: NetworkChannels, factors: LinkFactors):
    """Best (UE beam, BS beam) per link and fading sample.

    Returns integer arrays ``k_ue``, ``k_bs`` and the gains, all shaped (S, L).
    """
    n_samples = channels.n_samples
    n_links = len(factors.bs)
    k_ue = np.empty((n_samples, n_links), dtype=np.int64)
    k_bs = np.empty((n_samples, n_links), dtype=np.int64)
    best = np.empty((n_samples, n_links))
    if n_links == 0:
        return k_ue, k_bs, best
    n_bs_beams = factors.bs_fac.shape[-1]
    ue_t = np.swapaxes(factors.ue_fac, 1, 2)  # (L, Kue, P)
    for s in range(n_samples):
        g = np.where(factors.valid, channels.gains[s][factors.path_index], 0.0)
        m = np.matmul(ue_t * g[:, None, :], factors.bs_fac)  # (L, Kue, Kbs)
        power = (m.real ** 2 + m.imag ** 2).reshape(n_links, -1)
        flat = np.argmax(power, axis=1)
        k_ue[s], k_bs[s] = np.divmod(flat, n_bs_beams)
        best[s] = power[np.arange(n_links), flat] * factors.scale ** 2
    return k_ue, k_bs, best


def best_combiner_for_precoder(H: np.ndarray, w_bs: np.ndarray, cb_ue: Codebook) -> int:
    """Index of the UE codebook entry maximizing |w^H H w_bs|^2."""
    gains = np.abs(cb_ue.vectors.conj() @ (H @ w_bs)) ** 2
    return int(np.argmax(gains))


# ---------------------------------------------------------------------------
# effective channels and digital precoders


class Scope(str, enum.Enum):
    FULL_NETWORK = "FullNetwork"
    OPERATOR = "Operator"
    CELL = "Cell"


@dataclass(frozen=True)
class EffectiveChannel:
    """Combiner-processed channel rows ``w_u^H H_iu`` stacked per serving pair.

    Row ``m`` belongs to (``bs_ids[m]``, ``ue_ids[m]``): the channel from BS
    ``bs_ids[m]`` seen through the combiner of UE ``ue_ids[m]``.
    """

    ue_ids: np.ndarray
    bs_ids: np.ndarray
    matrix: np.ndarray  # (M, N_BS)
    scope: Scope
    row_index: Mapping[tuple[int, int], int] = field(repr=False)

    def block(self, b: int) -> tuple[np.ndarray, np.ndarray]:
        """Row numbers whose channel leaves BS ``b``, and the rows themselves."""
        rows = np.flatnonzero(self.bs_ids == b)
        return rows, self.matrix[rows]


def _serving(association) -> np.ndarray:
    return np.asarray(getattr(association, "serving", association))


def build_effective_channel(topology: Topology, channels: NetworkChannels,
                            combiners, association, scope: Scope | str, *,
                            operator: int | None = None, bs: int | None = None,
                            sample: int = 0, co_channel: np.ndarray | None = None
                            ) -> EffectiveChannel:
    """Stack effective channel rows for one coherence interval.

    FullNetwork: every associated UE against every BS.  Operator: UEs and BSs
    of ``operator``.  Cell: UEs served by ``bs`` against ``bs`` only.  With a
    ``co_channel`` operator matrix, rows between operators on different bands
    are dropped.
    """
    scope = Scope(scope)
    serving = _serving(association)
    if scope is Scope.OPERATOR and operator is None:
        raise BeamformingError("Operator scope needs an operator")
    if scope is Scope.CELL and bs is None:
        raise BeamformingError("Cell scope needs a BS")

    if scope is Scope.FULL_NETWORK:
        serving_bss = range(topology.n_bs)
        row_bss = lambda b: range(topology.n_bs)  # noqa: E731
    elif scope is Scope.OPERATOR:
        serving_bss = topology.bss_of(operator)
        row_bss = lambda b: topology.bss_of(operator)  # noqa: E731
    else:
        serving_bss = [bs]
        row_bss = lambda b: [b]  # noqa: E731

    ue_ids, bs_ids, rows = [], [], []
    for b in serving_bss:
        for u in np.flatnonzero(serving == b):
            try:
                w = np.asarray(combiners[u])
            except (KeyError, IndexError):
                raise BeamformingError(f"UE {u} has no combiner") from None
            for i in row_bss(b):
                if co_channel is not None and not co_channel[topology.bs_operator[i],
                                                             topology.ue_operator[u]]:
                    continue
                ue_ids.append(int(u))
                bs_ids.append(int(i))
                rows.append(w.conj() @ channels.matrix(i, u, sample))
    matrix = np.array(rows).reshape(len(rows), channels.bs_antennas)
    index = {(b, u): m for m, (b, u) in enumerate(zip(bs_ids, ue_ids))}
    return EffectiveChannel(np.array(ue_ids, dtype=int), np.array(bs_ids, dtype=int),
                            matrix, scope, index)


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    if norm == 0:
        raise BeamformingError("zero effective channel row")
    return v / norm


def mrt_precoder(eff: EffectiveChannel, b: int, u: int) -> np.ndarray:
    m = eff.row_index[(b, u)]
    return _unit(eff.matrix[m].conj())


def rzf_matrix(rows: np.ndarray, c: float) -> np.ndarray:
    """Regularized pseudo-inverse ``R^H (R R^H + c I)^-1`` of a row stack."""
    gram = rows @ rows.conj().T
    gram[np.diag_indices_from(gram)] += c
    return rows.conj().T @ np.linalg.inv(gram)


def rzf_precoder(eff: EffectiveChannel, b: int, u: int, c: float) -> np.ndarray:
    """Unit-norm RZF column for UE ``u`` at BS ``b``.

    Only rows whose channel leaves BS ``b`` enter the inversion: those are
    the directions BS ``b`` can shape with its own array.
    """
    if not c > 0:
        raise BeamformingError("regularizer must be positive")
    m = eff.row_index[(b, u)]
    rows_idx, rows = eff.block(b)
    col = int(np.flatnonzero(rows_idx == m)[0])
    return _unit(rzf_matrix(rows, c)[:, col])


def power_normalizer(precoders, p: float) -> float:
    """``p / E[tr W W^H]`` over a sequence of precoding matrices (or one)."""
    mats = [precoders] if isinstance(precoders, np.ndarray) and precoders.ndim == 2 else precoders
    traces = [float(np.real(np.trace(w @ w.conj().T))) for w in mats]
    if not traces or np.mean(traces) == 0:
        raise BeamformingError("no served UE: normalizer undefined")
    return p / float(np.mean(traces))


@dataclass
class PrecoderSet:
    """Per-BS precoding matrices (columns follow ``served[b]``), combiners, normalizers."""

    precoders: dict[int, np.ndarray]
    served: dict[int, list[int]]
    combiners: dict[int, np.ndarray]
    normalizer: dict[int, float]

    def column(self, b: int, u: int) -> np.ndarray:
        return self.precoders[b][:, self.served[b].index(u)]


def default_regularizer(load: int, noise_power: float, p: float) -> float:
    """MMSE loading ``N_b sigma^2 W_z / p``."""
    return load * noise_power / p


def batched_rzf(rows: np.ndarray, c: np.ndarray | float, select: np.ndarray | None = None
                ) -> np.ndarray:
    """RZF over leading batch axes; ``rows`` is (..., K, N), result (..., N, K).

    ``select`` (..., K, M) picks columns before the product, so only M
    right-hand sides are solved for.
    """
    rows_h = np.swapaxes(rows.conj(), -1, -2)
    gram = rows @ rows_h
    k = gram.shape[-1]
    gram = gram + np.asarray(c)[..., None, None] * np.eye(k)
    if select is None:
        select = np.broadcast_to(np.eye(k), gram.shape)
    return rows_h @ np.linalg.solve(gram, select)


def normalize_columns(w: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(w, axis=-2, keepdims=True)
    if np.any(norm == 0):
        raise BeamformingError("zero precoder column")
    return w / norm


def n_bits_for(n: int) -> int:
    return max(0, math.ceil(math.log2(n)))
