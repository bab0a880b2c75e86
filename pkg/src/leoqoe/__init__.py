"""LEO satellite network simulator with joint route/bandwidth allocation and QoS-aware scheduling."""

__version__ = "0.1.0"
