"""Multi-protocol collaborative QKD networking: relay-cell simulation,
key-rate models, topology MILP with a built-in solver, and an experiment
harness."""

__version__ = "0.1.0"
