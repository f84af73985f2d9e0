"""Energy-efficient multicast beamforming for cache-enabled networks."""

__version__ = "0.1.0"
