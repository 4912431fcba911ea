"""Scenario configuration, random multi-operator layouts and bandwidth plans."""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np


class SharingMode(str, enum.Enum):
    EXCLUSIVE = "Exclusive"
    PARTIAL = "Partial"
    FULL = "Full"


class Precoder(str, enum.Enum):
    ANALOG = "Analog"
    MRT = "MRT"
    RZF = "RZF"


class Coordination(str, enum.Enum):
    FULL = "Full"
    INTRA_ONLY = "IntraOnly"
    NONE = "None"


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


@dataclass(frozen=True)
class ScenarioConfig:
    """Full description of one simulated scenario (SI units throughout)."""

    num_operators: int = 4
    total_bandwidth: float = 2e9
    sharing_mode: SharingMode = SharingMode.FULL
    carrier_freq: float = 32e9
    bs_density_per_operator: float = 100.0  # BS / km^2
    ue_density_total: float = 600.0  # UE / km^2
    area_side: float = 1000.0
    tx_power: float = dbm_to_watt(25.0)
    noise_psd: float = dbm_to_watt(-174.0)
    n_bs_antennas: int = 64
    n_ue_antennas: int = 16
    n_rf_chains: int = 6
    bs_codebook_bits: int | None = None  # None -> log2(n_bs_antennas)
    ue_codebook_bits: int | None = None
    precoder: Precoder = Precoder.ANALOG
    coordination: Coordination = Coordination.FULL
    n_topologies: int = 20
    n_fading_samples: int = 20
    seed: int = 0

    # channel model knobs
    mean_paths: float = 3.0
    single_path: bool = False
    los_decay_m: float = 67.0
    min_distance: float = 1.0
    channel_table: str | None = None

    # solver knobs
    candidate_bss: int = 4
    rzf_regularizer: float | None = None  # None -> N_b * sigma^2 * W_z / p
    combiner_iterations: int = 0
    tchebycheff_weights: tuple[float, ...] | None = None
    max_resample: int = 1000
    max_local_search_steps: int = 10_000

    def __post_init__(self) -> None:
        # accept plain strings for the enum fields
        for name, kind in (("sharing_mode", SharingMode), ("precoder", Precoder),
                           ("coordination", Coordination)):
            object.__setattr__(self, name, _coerce_enum(kind, getattr(self, name)))
        if self.tchebycheff_weights is not None:
            object.__setattr__(self, "tchebycheff_weights",
                               tuple(float(w) for w in self.tchebycheff_weights))
        self.validate()

    def validate(self) -> None:
        if self.num_operators < 1:
            raise ValueError("num_operators must be >= 1")
        if self.total_bandwidth <= 0:
            raise ValueError("total_bandwidth must be positive")
        if self.bs_density_per_operator <= 0 or self.ue_density_total <= 0:
            raise ValueError("densities must be positive")
        if self.area_side <= 0:
            raise ValueError("area_side must be positive")
        if self.tx_power <= 0:
            raise ValueError("tx_power must be positive")
        if self.n_rf_chains < 1 or self.n_bs_antennas < 1 or self.n_ue_antennas < 1:
            raise ValueError("antenna and RF chain counts must be >= 1")
        if self.sharing_mode is SharingMode.PARTIAL and self.num_operators % 2:
            raise ValueError("partial sharing pairs operators; num_operators must be even")
        if self.n_fading_samples < 1 or self.n_topologies < 1:
            raise ValueError("sample counts must be >= 1")
        if self.candidate_bss < 1:
            raise ValueError("candidate_bss must be >= 1")
        if self.tchebycheff_weights is not None:
            if len(self.tchebycheff_weights) != self.num_operators:
                raise ValueError("one Tchebycheff weight per operator is required")
            if min(self.tchebycheff_weights) <= 0:
                raise ValueError("Tchebycheff weights must be positive")

    # derived quantities -------------------------------------------------
    @property
    def area_km2(self) -> float:
        return (self.area_side / 1000.0) ** 2

    @property
    def bs_bits(self) -> int:
        if self.bs_codebook_bits is not None:
            return self.bs_codebook_bits
        return max(0, math.ceil(math.log2(self.n_bs_antennas)))

    @property
    def ue_bits(self) -> int:
        if self.ue_codebook_bits is not None:
            return self.ue_codebook_bits
        return max(0, math.ceil(math.log2(self.n_ue_antennas)))

    @property
    def load_cap(self) -> int:
        """Per-BS load limit: RF chains for analog, antennas for digital."""
        if self.precoder is Precoder.ANALOG:
            return self.n_rf_chains
        return self.n_bs_antennas

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.value if isinstance(v, enum.Enum) else v
        if out["tchebycheff_weights"] is not None:
            out["tchebycheff_weights"] = list(out["tchebycheff_weights"])
        return out


def _coerce_enum(kind, value):
    if isinstance(value, kind):
        return value
    text = str(value).strip()
    for member in kind:
        if member.value.lower() == text.lower() or member.name.lower() == text.lower():
            return member
    raise ValueError(f"{text!r} is not a valid {kind.__name__}")


# ---------------------------------------------------------------------------
# key/value config files

_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ScenarioConfig)}


def parse_value(key: str, text: str):
    """Convert the text of one config entry to the type of field ``key``."""
    if key not in _FIELD_TYPES:
        raise KeyError(f"unknown config key {key!r}")
    kind = _FIELD_TYPES[key]
    text = text.strip()
    if "| None" in kind and text.lower() in ("none", ""):
        return None
    if kind.startswith("tuple"):
        return tuple(float(t) for t in text.replace(",", " ").split())
    if kind.startswith("int"):
        return int(float(text))
    if kind.startswith("float"):
        return float(text)
    if kind == "bool":
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"bad boolean for {key}: {text!r}")
    return text  # enums and plain strings; coerced in __post_init__


def read_key_values(path: str | Path) -> list[tuple[str, str]]:
    """Read ``key = value`` lines, skipping blanks and ``#`` comments."""
    pairs = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        pairs.append((key.strip(), value.strip()))
    return pairs


def load_config(path: str | Path, base: ScenarioConfig | None = None) -> ScenarioConfig:
    changes = {k: parse_value(k, v) for k, v in read_key_values(path)}
    return (base or ScenarioConfig()).replace(**changes)


def dump_config(config: ScenarioConfig) -> str:
    lines = []
    for key, value in config.to_dict().items():
        if value is None:
            value = "none"
        elif isinstance(value, list):
            value = " ".join(repr(float(v)) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# topology


class TopologyError(RuntimeError):
    """Raised when no valid layout could be drawn."""


@dataclass(frozen=True)
class Topology:
    bs_pos: np.ndarray  # (B, 2) meters
    bs_operator: np.ndarray  # (B,) int
    ue_pos: np.ndarray  # (U, 2)
    ue_operator: np.ndarray  # (U,)
    num_operators: int
    area_side: float = field(default=np.inf)

    def __post_init__(self) -> None:
        for arr in (self.bs_pos, self.bs_operator, self.ue_pos, self.ue_operator):
            arr.setflags(write=False)

    @property
    def n_bs(self) -> int:
        return len(self.bs_operator)

    @property
    def n_ue(self) -> int:
        return len(self.ue_operator)

    def bss_of(self, z: int) -> np.ndarray:
        return np.flatnonzero(self.bs_operator == z)

    def ues_of(self, z: int) -> np.ndarray:
        return np.flatnonzero(self.ue_operator == z)

    def distances(self) -> np.ndarray:
        """(B, U) BS-UE distances with wrap-around at the region border."""
        delta = np.abs(self.bs_pos[:, None, :] - self.ue_pos[None, :, :])
        if np.isfinite(self.area_side):
            delta = np.minimum(delta, self.area_side - delta)
        return np.hypot(delta[..., 0], delta[..., 1])


def topology_rng(config: ScenarioConfig, trial_seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([config.seed, trial_seed, 0]))


def sample_topology(config: ScenarioConfig, trial_seed: int) -> Topology:
    """Draw independent PPP layouts per operator until the layout is usable.

    Each operator needs at least one BS and no more UEs than its BSs can
    carry (``load_cap`` per BS).
    """
    rng = topology_rng(config, trial_seed)
    z_count = config.num_operators
    mean_bs = config.bs_density_per_operator * config.area_km2
    mean_ue = config.ue_density_total / z_count * config.area_km2
    side = config.area_side
    cap = config.load_cap
    for _ in range(config.max_resample):
        n_bs = rng.poisson(mean_bs, size=z_count)
        n_ue = rng.poisson(mean_ue, size=z_count)
        if np.any(n_bs < 1) or np.any(n_ue > cap * n_bs):
            continue
        bs_pos = rng.uniform(0.0, side, size=(n_bs.sum(), 2))
        ue_pos = rng.uniform(0.0, side, size=(n_ue.sum(), 2))
        return Topology(
            bs_pos=bs_pos,
            bs_operator=np.repeat(np.arange(z_count), n_bs),
            ue_pos=ue_pos,
            ue_operator=np.repeat(np.arange(z_count), n_ue),
            num_operators=z_count,
            area_side=side,
        )
    raise TopologyError(
        f"no valid topology after {config.max_resample} draws "
        f"(mean BSs per operator {mean_bs:.3g}, mean UEs {mean_ue:.3g})"
    )


# ---------------------------------------------------------------------------
# bandwidth plans


def co_channel_operators(config: ScenarioConfig, z: int) -> frozenset[int]:
    if not 0 <= z < config.num_operators:
        raise IndexError(f"operator {z} out of range")
    if config.sharing_mode is SharingMode.EXCLUSIVE:
        return frozenset({z})
    if config.sharing_mode is SharingMode.PARTIAL:
        first = z - z % 2
        return frozenset({first, first + 1})
    return frozenset(range(config.num_operators))


def operator_bandwidth(config: ScenarioConfig, z: int) -> tuple[float, frozenset[int]]:
    """Bandwidth of operator ``z`` and the operators sharing its band.

    Operators are 0-indexed; partial sharing pairs (0, 1), (2, 3), ...
    """
    group = co_channel_operators(config, z)
    if config.sharing_mode is SharingMode.EXCLUSIVE:
        bw = config.total_bandwidth / config.num_operators
    elif config.sharing_mode is SharingMode.PARTIAL:
        bw = config.total_bandwidth / (config.num_operators // 2)
    else:
        bw = config.total_bandwidth
    return bw, group


def co_channel_matrix(config: ScenarioConfig) -> np.ndarray:
    """Boolean (Z, Z) matrix, True where two operators share spectrum."""
    z_count = config.num_operators
    out = np.zeros((z_count, z_count), dtype=bool)
    for z in range(z_count):
        out[z, list(co_channel_operators(config, z))] = True
    return out


def operator_bandwidths(config: ScenarioConfig) -> np.ndarray:
    return np.array([operator_bandwidth(config, z)[0] for z in range(config.num_operators)])


def iter_operators(topology: Topology) -> Iterable[int]:
    return range(topology.num_operators)
