"""Privacy-preserving decentralised exchange: commitments, broker MPC, matching and privacy analysis."""

__version__ = "0.1.0"
