"""Tabular reinforcement learning for two-asset dynamic allocation.

The package backtests SARSA / Q-learning allocators that move a risky /
non-risky mix in 10% steps, with regime-aware state spaces, out-of-sample
Q-table averaging, and reward shaping for target-return and drawdown rules.
"""

from rlalloc.errors import (
    ConfigError,
    DataError,
    RlallocError,
)

__version__ = "0.1.0"

__all__ = ["ConfigError", "DataError", "RlallocError", "__version__"]
