"""Active-learning dataset forge.

Builds labeled datasets for generative tasks through an iterative loop:
cluster the unlabeled pool, pick the instances whose interim generations
most violate a regulated attribute, distill target generations from a
teacher model, gate them through human verification, and retrain the
learner. Ships with deterministic mock providers and a simulation harness
for fully offline runs.
"""

__version__ = "0.1.0"

from .errors import AlforgeError, ConfigError, PoolError, ProviderError, StateError

__all__ = [
    "AlforgeError",
    "ConfigError",
    "PoolError",
    "ProviderError",
    "StateError",
    "__version__",
]
