"""Geometric cluster channel between every BS and UE.

Long-term statistics (path loss, LoS state, path count and angles) are drawn
once per topology; complex path gains are redrawn for every coherence
interval.  A channel matrix is never needed inside the simulator loops: all
beamforming gains are computed in the path domain from the steering inner
product :func:`steering_inner`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .topology import ScenarioConfig, Topology


def ula_response(theta: float, n: int) -> np.ndarray:
    """Half-wavelength ULA response, element k = exp(+j k pi sin(theta)) / sqrt(n)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    k = np.arange(n)
    return np.exp(1j * np.pi * k * math.sin(theta)) / math.sqrt(n)


def ula_response_sine(sines: np.ndarray, n: int) -> np.ndarray:
    """Stack of ULA responses for an array of sines, shape ``sines.shape + (n,)``."""
    k = np.arange(n)
    return np.exp(1j * np.pi * np.asarray(sines)[..., None] * k) / math.sqrt(n)


def steering_inner(n: int, x, y) -> np.ndarray:
    """Closed form of ``a(x)^H a(y)`` for ULA responses given by their sines.

    ``(1/n) sum_k exp(j pi k (y - x))``, evaluated as a Dirichlet kernel.
    """
    delta = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    half = 0.5 * np.pi * delta
    den = np.sin(half)
    num = np.sin(n * half)
    phase = np.exp(1j * (n - 1) * half)
    small = np.abs(den) < 1e-12
    safe_den = np.where(small, 1.0, den)
    ratio = np.where(small, np.cos(n * half) / np.cos(half), num / (n * safe_den))
    return phase * ratio


# ---------------------------------------------------------------------------
# parameter table


@dataclass(frozen=True)
class PathLossParams:
    intercept_db: float
    exponent: float
    shadow_db: float


def load_channel_table(path: str | Path | None = None) -> dict[tuple[float, bool], PathLossParams]:
    """Parse the channel table; keys are ``(carrier_hz, los)``."""
    if path is None:
        text = resources.files("mmshare.data").joinpath("channel_params.txt").read_text()
    else:
        text = Path(path).read_text()
    table = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        f_ghz, state, alpha, beta, sigma = line.split()
        if state.lower() not in ("los", "nlos"):
            raise ValueError(f"bad LoS state {state!r}")
        table[(float(f_ghz) * 1e9, state.lower() == "los")] = PathLossParams(
            float(alpha), float(beta), float(sigma))
    return table


def path_loss_params(config: ScenarioConfig, los: bool) -> PathLossParams:
    table = load_channel_table(config.channel_table)
    carriers = sorted({f for f, _ in table})
    nearest = min(carriers, key=lambda f: abs(math.log(config.carrier_freq / f)))
    row = table[(nearest, los)]
    shift = 20.0 * math.log10(config.carrier_freq / nearest)
    return PathLossParams(row.intercept_db + shift, row.exponent, row.shadow_db)


# ---------------------------------------------------------------------------
# long-term statistics


@dataclass(frozen=True)
class PathStats:
    n_paths: int
    aod: np.ndarray  # radians, in [0, 2 pi)
    aoa: np.ndarray
    path_loss: float  # linear power gain
    los: bool

    def __post_init__(self) -> None:
        if self.n_paths < 1 or len(self.aod) != self.n_paths or len(self.aoa) != self.n_paths:
            raise ValueError("inconsistent path count")
        if not self.path_loss > 0:
            raise ValueError("path loss must be positive")


def _draw_link_stats(dist: np.ndarray, config: ScenarioConfig, rng: np.random.Generator,
                     los: np.ndarray | None = None):
    """Vectorized draw for an array of link distances."""
    dist = np.maximum(np.asarray(dist, dtype=float), config.min_distance)
    u = rng.random(dist.shape)
    if los is None:
        los = u < np.exp(-dist / config.los_decay_m)
    shadow = rng.standard_normal(dist.shape)
    pl_db = np.empty(dist.shape)
    for state in (True, False):
        sel = los == state
        prm = path_loss_params(config, state)
        pl_db[sel] = (prm.intercept_db + 10.0 * prm.exponent * np.log10(dist[sel])
                      + prm.shadow_db * shadow[sel])
    if config.single_path:
        n_paths = np.ones(dist.shape, dtype=np.int64)
    else:
        n_paths = rng.poisson(config.mean_paths, size=dist.shape)
        zero = n_paths < 1
        while zero.any():
            n_paths[zero] = rng.poisson(config.mean_paths, size=int(zero.sum()))
            zero = n_paths < 1
    total = int(n_paths.sum())
    aod = rng.uniform(0.0, 2.0 * np.pi, size=total)
    aoa = rng.uniform(0.0, 2.0 * np.pi, size=total)
    return np.asarray(los, dtype=bool), 10.0 ** (-pl_db / 10.0), n_paths, aod, aoa


def sample_path_stats(bs_pos, ue_pos, config: ScenarioConfig, rng: np.random.Generator,
                      los: bool | None = None) -> PathStats:
    """Long-term statistics of one BS-UE link (no wrap-around).

    ``los`` forces the LoS state instead of drawing it.
    """
    d = math.dist(bs_pos, ue_pos)
    forced = None if los is None else np.array([los])
    los_arr, pl, n_paths, aod, aoa = _draw_link_stats(np.array([d]), config, rng, forced)
    return PathStats(int(n_paths[0]), aod, aoa, float(pl[0]), bool(los_arr[0]))


# ---------------------------------------------------------------------------
# per-coherence realizations


@dataclass(frozen=True)
class ChannelRealization:
    gains: np.ndarray  # complex, one per path
    stats: PathStats
    n_bs: int
    n_ue: int

    @property
    def matrix(self) -> np.ndarray:
        return channel_matrix(self.gains, self.stats.aod, self.stats.aoa, self.n_bs, self.n_ue)


def channel_matrix(gains, aod, aoa, n_bs: int, n_ue: int) -> np.ndarray:
    """N_UE x N_BS cluster channel sum_n g_n a_UE(aoa_n) a_BS(aod_n)^H, scaled."""
    gains = np.asarray(gains)
    a_ue = ula_response_sine(np.sin(aoa), n_ue)  # (n, N_UE)
    a_bs = ula_response_sine(np.sin(aod), n_bs)
    scale = math.sqrt(n_bs * n_ue / len(gains))
    return scale * np.einsum("n,ni,nj->ij", gains, a_ue, a_bs.conj())


def draw_gains(path_loss, size, rng: np.random.Generator) -> np.ndarray:
    """Zero-mean circular complex Gaussian gains with variance ``path_loss``."""
    std = np.sqrt(np.asarray(path_loss) / 2.0)
    return std * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def sample_channel(stats: PathStats, n_bs: int, n_ue: int,
                   rng: np.random.Generator) -> ChannelRealization:
    gains = draw_gains(stats.path_loss, stats.n_paths, rng)
    return ChannelRealization(gains, stats, n_bs, n_ue)


# ---------------------------------------------------------------------------
# whole-network container


@dataclass(frozen=True)
class NetworkChannels:
    """Long-term statistics for every (BS, UE) link plus fading draws.

    Paths are stored flat; link ``(b, u)`` owns paths
    ``offsets[b*U + u] : offsets[b*U + u + 1]``.
    """

    n_bs: int  # number of base stations
    n_ue: int  # number of UEs
    bs_antennas: int
    ue_antennas: int
    los: np.ndarray  # (B, U) bool
    path_loss: np.ndarray  # (B, U)
    n_paths: np.ndarray  # (B, U) int
    offsets: np.ndarray  # (B*U + 1,)
    aod_sin: np.ndarray  # (total_paths,)
    aoa_sin: np.ndarray
    aod: np.ndarray
    aoa: np.ndarray
    gains: np.ndarray  # (S, total_paths) complex

    @property
    def n_samples(self) -> int:
        return self.gains.shape[0]

    def link(self, b: int, u: int) -> slice:
        k = b * self.n_ue + u
        return slice(int(self.offsets[k]), int(self.offsets[k + 1]))

    def scale(self) -> np.ndarray:
        """(B, U) prefactor sqrt(N_BS N_UE / N_paths)."""
        return np.sqrt(self.bs_antennas * self.ue_antennas / self.n_paths)

    def stats(self, b: int, u: int) -> PathStats:
        sl = self.link(b, u)
        return PathStats(int(self.n_paths[b, u]), self.aod[sl], self.aoa[sl],
                         float(self.path_loss[b, u]), bool(self.los[b, u]))

    def realization(self, b: int, u: int, sample: int) -> ChannelRealization:
        return ChannelRealization(self.gains[sample, self.link(b, u)], self.stats(b, u),
                                  self.bs_antennas, self.ue_antennas)

    def matrix(self, b: int, u: int, sample: int) -> np.ndarray:
        return self.realization(b, u, sample).matrix


def channel_rngs(config: ScenarioConfig, trial_seed: int):
    seq = np.random.SeedSequence([config.seed, trial_seed, 1])
    stats_seq, fading_seq = seq.spawn(2)
    return np.random.default_rng(stats_seq), np.random.default_rng(fading_seq)


def sample_network_channels(topology: Topology, config: ScenarioConfig, trial_seed: int,
                            n_samples: int | None = None) -> NetworkChannels:
    """Draw link statistics and ``n_samples`` fading realizations for all links.

    Draws do not depend on the sharing mode, precoder or problem, so runs that
    differ only in those settings see the same channels.
    """
    stats_rng, fading_rng = channel_rngs(config, trial_seed)
    n_samples = config.n_fading_samples if n_samples is None else n_samples
    dist = topology.distances()
    los, pl, n_paths, aod, aoa = _draw_link_stats(dist, config, stats_rng)
    offsets = np.concatenate([[0], np.cumsum(n_paths.ravel())])
    pl_per_path = np.repeat(pl.ravel(), n_paths.ravel())
    gains = draw_gains(pl_per_path, (n_samples, len(pl_per_path)), fading_rng)
    return NetworkChannels(
        n_bs=topology.n_bs, n_ue=topology.n_ue,
        bs_antennas=config.n_bs_antennas, ue_antennas=config.n_ue_antennas,
        los=los, path_loss=pl, n_paths=n_paths, offsets=offsets,
        aod_sin=np.sin(aod), aoa_sin=np.sin(aoa), aod=aod, aoa=aoa, gains=gains,
    )
