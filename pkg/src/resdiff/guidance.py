"""Posterior guidance for restoration sampling, plus its error bounds.

The sampler can nudge each noise estimate toward consistency with the
degraded input: the guidance field is the mismatch between the input
and the sum of the current clean and residual estimates, and the noise
estimate is shifted along the gradient of that field's norm. When the
predictor recovers its noise algebraically the mismatch vanishes by
construction and the correction degenerates to the identity.

The module also computes the analytic bound on the Jensen gap incurred
by moving an expectation inside the guidance norm, via the Lipschitz
constant of a Gaussian density.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .fields import as_field, same_shape
from .predictors import Predictor, derive_eps, estimate_clean
from .schedule import Schedule

__all__ = [
    "DegenerateGuidanceWarning",
    "DEGENERATE_NORM_THRESHOLD",
    "guidance_residual",
    "ups_correct",
    "fd_guidance_gradient",
    "JensenParams",
    "lipschitz_gaussian",
    "jensen_gap_bound",
    "jensen_sweep",
]

# below this guidance norm the correction is skipped as degenerate
DEGENERATE_NORM_THRESHOLD = 1e-10


class DegenerateGuidanceWarning(UserWarning):
    """Posterior correction requested on a problem where the guidance
    field is (numerically) identically zero, so it has no effect."""


def guidance_residual(x_in, x0_hat, res_hat) -> tuple[np.ndarray, float]:
    """Guidance field ``x_in - (x0_hat + res_hat)`` and its Frobenius norm."""
    x_in = as_field(x_in, "x_in")
    x0_hat = as_field(x0_hat, "x0_hat")
    res_hat = as_field(res_hat, "res_hat")
    same_shape(x_in, x0_hat)
    same_shape(x_in, res_hat)
    field = x_in - (x0_hat + res_hat)
    return field, float(np.linalg.norm(field))


def ups_correct(
    eps_hat,
    x_t,
    x_in,
    x0_hat,
    res_hat,
    t: float,
    predictor: Predictor,
    schedule: Schedule,
    sigma2: float | None = None,
) -> np.ndarray:
    """Posterior-corrected noise estimate.

    Shifts ``eps_hat`` by ``(beta_bar / sigma2)`` times the gradient of
    the guidance norm with respect to the state. ``sigma2`` defaults to
    the current guidance norm itself, which keeps the correction scale
    self-normalizing across timesteps.

    Degenerate problems (guidance norm below
    :data:`DEGENERATE_NORM_THRESHOLD`) return ``eps_hat`` unchanged and
    emit a :class:`DegenerateGuidanceWarning`. A non-degenerate problem
    with a predictor that lacks gradient capability is an error.
    """
    eps_hat = as_field(eps_hat, "eps_hat")
    field, norm = guidance_residual(x_in, x0_hat, res_hat)
    same_shape(eps_hat, field)
    if norm < DEGENERATE_NORM_THRESHOLD:
        warnings.warn(
            "posterior guidance is degenerate (norm ~ 0); correction is a no-op",
            DegenerateGuidanceWarning,
            stacklevel=2,
        )
        return eps_hat
    grad = predictor.guidance_gradient(x_t, x_in, t, schedule)
    if grad is None:
        raise ValueError(
            "posterior correction requires a predictor guidance gradient, "
            "but this predictor does not provide one"
        )
    grad = as_field(grad, "guidance gradient")
    same_shape(eps_hat, grad)
    scale = sigma2 if sigma2 is not None else norm
    if not scale > 0:
        raise ValueError(f"sigma2 must be positive, got {scale}")
    beta = schedule.beta_bar(t)
    return eps_hat + (beta / scale) * grad


def fd_guidance_gradient(
    predictor: Predictor,
    x_t,
    x_in,
    t: float,
    schedule: Schedule,
    step: float = 1e-5,
    max_size: int = 256,
) -> np.ndarray:
    """Central-difference gradient of the guidance norm (debug path).

    Perturbs every element of the state, so cost grows with field size;
    refuses fields larger than ``max_size`` elements. Intended for
    validating closed-form gradients on small problems, never for
    production sampling.
    """
    x_t = as_field(x_t, "x_t").copy()
    x_in = as_field(x_in, "x_in")
    if x_t.size > max_size:
        raise ValueError(
            f"finite differences over {x_t.size} elements refused (max {max_size})"
        )

    def norm_at(x):
        out = predictor.predict(x, x_in, t, schedule)
        eps = out.eps
        if eps is None:
            eps = derive_eps(x, x_in, out.res, t, schedule)
        x0 = estimate_clean(x, x_in, out.res, eps, t, schedule)
        return guidance_residual(x_in, x0, out.res)[1]

    grad = np.zeros_like(x_t)
    flat = x_t.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        hi = norm_at(x_t)
        flat[i] = keep - step
        lo = norm_at(x_t)
        flat[i] = keep
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


@dataclass(frozen=True)
class JensenParams:
    """Inputs to the Jensen-gap bound.

    Attributes:
        sigma: Gaussian width, > 0.
        m1: first absolute moment of the inner deviation, >= 0.
        d: dimensionality factor, integer >= 1.
    """

    sigma: float = 1.0
    m1: float = 1.0
    d: int = 1

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be a positive finite real, got {self.sigma}")
        if not (self.m1 >= 0 and math.isfinite(self.m1)):
            raise ValueError(f"m1 must be a nonnegative finite real, got {self.m1}")
        if not (isinstance(self.d, (int, np.integer)) and self.d >= 1):
            raise ValueError(f"d must be an integer >= 1, got {self.d!r}")


def lipschitz_gaussian(sigma: float, d: int = 1) -> float:
    """Lipschitz constant of the d-scaled Gaussian density:
    ``d / sqrt(2*pi*sigma^2) * exp(-1/(2*sigma^2))``.

    Decays super-exponentially as sigma shrinks, which is what makes
    the Jensen gap negligible at small widths.
    """
    params = JensenParams(sigma=float(sigma), m1=0.0, d=int(d))
    s2 = params.sigma * params.sigma
    return params.d / math.sqrt(2.0 * math.pi * s2) * math.exp(-1.0 / (2.0 * s2))


def jensen_gap_bound(params: JensenParams) -> float:
    """Upper bound on the Jensen gap: the Gaussian Lipschitz constant
    times the first absolute moment ``m1``."""
    return lipschitz_gaussian(params.sigma, params.d) * params.m1


def jensen_sweep(sigma_grid, m1_grid, d: int = 1) -> list[tuple[float, float, float]]:
    """Bound values over a parameter grid.

    Returns rows ``(sigma, m1, bound)`` sorted by sigma then m1; grids
    must be non-empty.
    """
    sigmas = [float(s) for s in np.atleast_1d(sigma_grid)]
    m1s = [float(m) for m in np.atleast_1d(m1_grid)]
    if not sigmas or not m1s:
        raise ValueError("sigma_grid and m1_grid must be non-empty")
    rows = []
    for s in sorted(sigmas):
        for m in sorted(m1s):
            rows.append((s, m, jensen_gap_bound(JensenParams(sigma=s, m1=m, d=d))))
    return rows
