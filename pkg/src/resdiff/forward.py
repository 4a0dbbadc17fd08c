"""Forward degradation process: clean image toward noisy degraded input.

The process interpolates between a clean field ``x0`` at t = 0 and the
degraded input ``x_in`` (minus the removed fraction, plus noise) at
t = T. The marginal at time t is Gaussian with mean

    x0 + alpha_bar(t) * (x_in - x0) - delta_bar(t) * x_in

and standard deviation ``beta_bar(t)`` per element.
"""

from __future__ import annotations

import numpy as np

from .fields import as_field, same_shape
from .schedule import Schedule

__all__ = ["residual_of", "diffuse", "sample_terminal"]


def residual_of(x0, x_in) -> np.ndarray:
    """Degradation residual ``x_in - x0``."""
    x0 = as_field(x0, "x0")
    x_in = as_field(x_in, "x_in")
    same_shape(x0, x_in)
    return x_in - x0


def diffuse(x0, x_in, eps, t: float, schedule: Schedule) -> np.ndarray:
    """State of the forward process at time t for a given noise draw.

    Computes ``x0 + alpha_bar*(x_in - x0) + beta_bar*eps - delta_bar*x_in``.
    At t = 0 this is ``x0`` exactly; at t = T it is
    ``(1 - delta_T)*x_in + beta_T*eps``.
    """
    x0 = as_field(x0, "x0")
    x_in = as_field(x_in, "x_in")
    eps = as_field(eps, "eps")
    same_shape(x0, x_in)
    same_shape(x0, eps)
    alpha, beta, delta = schedule.eval(t)
    return x0 + alpha * (x_in - x0) + beta * eps - delta * x_in


def sample_terminal(shape, schedule: Schedule, rng: np.random.Generator) -> np.ndarray:
    """Draw the solver's starting state at t = T: centered Gaussian noise
    with standard deviation ``beta_bar(T)`` per element."""
    shape = tuple(int(s) for s in np.atleast_1d(shape))
    if len(shape) == 0 or any(s < 1 for s in shape):
        raise ValueError(f"shape must have positive extents, got {shape}")
    beta_T = schedule.beta_bar(schedule.T)
    return beta_T * rng.standard_normal(shape)
