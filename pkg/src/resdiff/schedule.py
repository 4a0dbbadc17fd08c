"""Degradation schedules for the residual-diffusion forward process.

A schedule fixes three cumulative coefficient curves on [0, T]:

* ``alpha_bar(t)`` — fraction of the residual blended in by time t,
  rising from 0 to 1;
* ``delta_bar(t)`` — fraction of the degraded input subtracted back
  out, rising from 0 to ``delta_T``;
* ``beta_bar(t)`` — noise level, with ``beta_bar(0) = 0`` and
  ``beta_bar(T) = beta_T``.

Two closed-form families are provided. ``uniform`` grows all three
curves linearly in t (so the squared noise level is linear and the
noise level itself follows a square root). ``linear-ramp`` grows the
noise level linearly in t, which makes the other two curves quadratic.
Both are strictly monotone, which the solvers rely on when they form
finite-difference ratios in coefficient space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["FAMILIES", "ScheduleConfig", "Schedule", "build_schedule"]

FAMILIES = ("uniform", "linear-ramp")


@dataclass(frozen=True)
class ScheduleConfig:
    """Validated schedule parameters.

    Attributes:
        family: one of :data:`FAMILIES`.
        T: terminal time, > 0.
        delta_T: terminal input-removal fraction, in [0, 1].
        beta_T: terminal noise level, > 0.
    """

    family: str = "linear-ramp"
    T: float = 1.0
    delta_T: float = 1.0
    beta_T: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown schedule family {self.family!r}; expected one of {FAMILIES}")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError(f"T must be a positive finite real, got {self.T}")
        if not (0.0 <= self.delta_T <= 1.0):
            raise ValueError(f"delta_T must lie in [0, 1], got {self.delta_T}")
        if not (self.beta_T > 0 and math.isfinite(self.beta_T)):
            raise ValueError(f"beta_T must be a positive finite real, got {self.beta_T}")


class Schedule:
    """Evaluates one schedule family's coefficient curves and rates."""

    def __init__(self, config: ScheduleConfig):
        self.config = config
        self.T = config.T

    def _check_time(self, t: float) -> float:
        t = float(t)
        T = self.T
        # grid arithmetic can land an ulp outside the interval
        tol = 1e-9 * T
        if t < -tol or t > T + tol:
            raise ValueError(f"time {t} outside [0, {T}]")
        return min(max(t, 0.0), T)

    def eval(self, t: float) -> tuple[float, float, float]:
        """Cumulative coefficients ``(alpha_bar, beta_bar, delta_bar)`` at time t."""
        t = self._check_time(t)
        cfg = self.config
        u = t / cfg.T
        if cfg.family == "uniform":
            alpha = u
            beta = cfg.beta_T * math.sqrt(u)
            delta = cfg.delta_T * u
        else:  # linear-ramp
            alpha = u * u
            beta = cfg.beta_T * u
            delta = cfg.delta_T * u * u
        return alpha, beta, delta

    def alpha_bar(self, t: float) -> float:
        return self.eval(t)[0]

    def beta_bar(self, t: float) -> float:
        return self.eval(t)[1]

    def delta_bar(self, t: float) -> float:
        return self.eval(t)[2]

    def rates(self, t: float) -> tuple[float, float, float]:
        """Instantaneous rates ``(h, l, g2)`` at time t.

        ``h`` is the time derivative of ``alpha_bar``, ``l`` the negated
        derivative of ``delta_bar``, and ``g2`` the derivative of the
        squared noise level; these drive the probability-flow ODE.
        """
        t = self._check_time(t)
        cfg = self.config
        if cfg.family == "uniform":
            h = 1.0 / cfg.T
            l = -cfg.delta_T / cfg.T
            g2 = cfg.beta_T ** 2 / cfg.T
        else:  # linear-ramp
            h = 2.0 * t / cfg.T ** 2
            l = -2.0 * cfg.delta_T * t / cfg.T ** 2
            g2 = 2.0 * cfg.beta_T ** 2 * t / cfg.T ** 2
        return h, l, g2

    def time_grid(self, steps: int) -> np.ndarray:
        """Solver grid of ``steps + 1`` times descending from T to 0.

        Entry i is ``T * (steps - i) / steps``, so the endpoints are
        exactly T and exactly 0.
        """
        if not isinstance(steps, (int, np.integer)) or steps < 1:
            raise ValueError(f"steps must be a positive integer, got {steps!r}")
        i = np.arange(steps + 1, dtype=np.float64)
        return self.T * (steps - i) / steps

    def grid_rows(self, steps: int) -> list[tuple[float, ...]]:
        """Rows ``(t, alpha_bar, beta_bar, delta_bar, h, l, g2)`` ascending in t."""
        rows = []
        for t in sorted(self.time_grid(steps)):
            a, b, d = self.eval(t)
            h, l, g2 = self.rates(t)
            rows.append((float(t), a, b, d, h, l, g2))
        return rows


def build_schedule(config: ScheduleConfig | None = None, **kwargs) -> Schedule:
    """Construct a :class:`Schedule`, either from a config or from kwargs."""
    if config is None:
        config = ScheduleConfig(**kwargs)
    elif kwargs:
        raise TypeError("pass either a ScheduleConfig or keyword arguments, not both")
    return Schedule(config)
