"""Block asynchronous stochastic approximation: engine, recursions, RL instances."""

__version__ = "0.1.0"
