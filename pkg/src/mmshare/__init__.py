"""Spectrum sharing among mmWave cellular operators: topology, channel,
beamforming, rate metrics, cell association and an experiment harness."""

from .topology import (Coordination, Precoder, ScenarioConfig, SharingMode, Topology,
                       load_config, operator_bandwidth, sample_topology)
from .channel import NetworkChannels, sample_network_channels, ula_response

__version__ = "0.1.0"

__all__ = [
    "Coordination", "NetworkChannels", "Precoder", "ScenarioConfig", "SharingMode",
    "Topology", "load_config", "operator_bandwidth", "sample_network_channels",
    "sample_topology", "ula_response",
]
