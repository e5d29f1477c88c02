"""Multi-agent deep Q-learning power control for interference-limited networks."""

__version__ = "0.1.0"
