"""Tensor fields, seeded randomness, and summary statistics.

A *field* is a dense float64 ``numpy.ndarray`` with at least one axis,
every extent positive, and finite entries. All public functions in this
package validate their field arguments through :func:`as_field`, so a
NaN or Inf produced anywhere surfaces as an immediate error instead of
propagating silently.
"""

from __future__ import annotations

import numpy as np

__all__ = ["as_field", "same_shape", "make_rng", "field_stats"]


def as_field(x, name: str = "field") -> np.ndarray:
    """Coerce ``x`` to a float64 array and validate it.

    Accepts anything ``np.asarray`` accepts, including scalars (which
    become 0-d arrays and are rejected for having no axes). Returns the
    validated array; the input is not copied when already float64.

    Raises:
        ValueError: empty shape, a zero extent, or a non-finite entry.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        raise ValueError(f"{name} must have at least one axis, got a scalar")
    if arr.size == 0:
        raise ValueError(f"{name} has a zero extent: shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def same_shape(a: np.ndarray, b: np.ndarray, what: str = "fields") -> None:
    """Raise ValueError unless the two arrays share a shape."""
    if a.shape != b.shape:
        raise ValueError(f"{what} must share a shape: {a.shape} vs {b.shape}")


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic generator for a given seed.

    The same seed and call sequence reproduces the same draws on every
    platform; distinct seeds give independent streams.
    """
    if not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    return np.random.default_rng(int(seed))


def field_stats(x) -> tuple[float, float]:
    """Return (mean, population standard deviation) of a field."""
    arr = as_field(x)
    return float(arr.mean()), float(arr.std())
