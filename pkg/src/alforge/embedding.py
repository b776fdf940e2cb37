"""Batch embedding through a provider, with retries and dimension checks."""

from __future__ import annotations

from typing import Sequence

from .errors import ProviderError
from .providers import normalize_unit, with_retries


def embed_batch(
    texts: Sequence[str],
    provider,
    *,
    attempts: int = 3,
    base_delay: float = 0.2,
    expected_dim: int | None = None,
) -> list[list[float]]:
    """Embed texts in order, normalized to unit norm, constant dimension.

    Provider failures are retried with exponential backoff (3 attempts by
    default) before raising ProviderError.
    """
    if not texts:
        raise ProviderError("empty batch")
    vectors = with_retries(
        lambda: provider.embed(list(texts)), attempts=attempts, base_delay=base_delay
    )
    if len(vectors) != len(texts):
        raise ProviderError(
            f"provider returned {len(vectors)} vectors for {len(texts)} texts"
        )
    vectors = [normalize_unit(v) for v in vectors]
    dim = expected_dim if expected_dim is not None else len(vectors[0])
    for v in vectors:
        if len(v) != dim:
            raise ProviderError(
                f"embedding dimension mismatch: expected {dim}, got {len(v)}"
            )
    return vectors
