"""Predictors: the pluggable models the solvers query at each step.

A predictor estimates, from the state ``x_t`` at time t and the
degraded input ``x_in``, the degradation residual (``res``) and
optionally the noise component (``eps``). When a predictor has no noise
head, the solver recovers ``eps`` algebraically from the forward-process
decomposition via :func:`derive_eps`; the output is then flagged
``derived_eps``.

Besides the abstract interface this module ships analytic fixtures used
across the test and study harnesses, and an exact posterior oracle for
Gaussian clean-image priors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import as_field, same_shape
from .schedule import Schedule

__all__ = [
    "PredictorOutput",
    "Predictor",
    "derive_eps",
    "estimate_clean",
    "make_constant_predictor",
    "make_polynomial_predictor",
    "make_function_predictor",
    "make_fixed_predictor",
    "make_known_clean_predictor",
    "make_echo_predictor",
    "gaussian_posterior_mean",
    "make_gaussian_oracle",
]


@dataclass
class PredictorOutput:
    """One predictor evaluation.

    Attributes:
        res: residual estimate, same shape as the queried state.
        eps: noise estimate, or None when the predictor has no noise head.
        derived_eps: True when ``eps`` was (or must be) recovered
            algebraically rather than predicted independently.
    """

    res: np.ndarray
    eps: np.ndarray | None = None
    derived_eps: bool = False


class Predictor:
    """Interface queried by the solvers.

    ``predict`` is mandatory. ``guidance_gradient`` reports the gradient
    of the posterior guidance norm with respect to the queried state;
    returning None declares the capability absent, in which case
    posterior correction refuses to run on a non-degenerate problem.
    Implementations must be pure: no internal state may change across
    calls, so evaluations can be replayed or reordered freely.
    """

    def predict(self, x_t, x_in, t: float, schedule: Schedule) -> PredictorOutput:
        raise NotImplementedError

    def guidance_gradient(self, x_t, x_in, t: float, schedule: Schedule) -> np.ndarray | None:
        return None


def derive_eps(x_t, x_in, res_hat, t: float, schedule: Schedule) -> np.ndarray:
    """Recover the noise component implied by a residual estimate.

    Inverts the forward decomposition
    ``x_t = (alpha_bar - 1)*res + beta_bar*eps + (1 - delta_bar)*x_in``
    for ``eps``. Undefined where the noise level vanishes.
    """
    x_t = as_field(x_t, "x_t")
    x_in = as_field(x_in, "x_in")
    res_hat = as_field(res_hat, "res_hat")
    same_shape(x_t, x_in)
    same_shape(x_t, res_hat)
    alpha, beta, delta = schedule.eval(t)
    if beta == 0.0:
        raise ValueError("derive_eps is undefined at beta_bar = 0 (t = 0)")
    return (x_t - (alpha - 1.0) * res_hat - (1.0 - delta) * x_in) / beta


def estimate_clean(x_t, x_in, res_hat, eps_hat, t: float, schedule: Schedule) -> np.ndarray:
    """Clean-image estimate implied by residual and noise estimates:
    ``x_t - alpha_bar*res - beta_bar*eps + delta_bar*x_in``."""
    x_t = as_field(x_t, "x_t")
    x_in = as_field(x_in, "x_in")
    res_hat = as_field(res_hat, "res_hat")
    eps_hat = as_field(eps_hat, "eps_hat")
    same_shape(x_t, x_in)
    same_shape(x_t, res_hat)
    same_shape(x_t, eps_hat)
    alpha, beta, delta = schedule.eval(t)
    return x_t - alpha * res_hat - beta * eps_hat + delta * x_in


class _FunctionPredictor(Predictor):
    """State-independent predictor: res is a function of alpha_bar and
    eps (optionally) a function of beta_bar.

    Because the outputs ignore the queried state, the guidance norm
    cannot be steered through this predictor; the guidance gradient is
    reported as an explicit zero field so posterior correction stays
    inert instead of erroring.
    """

    def __init__(self, res_of_alpha, eps_of_beta=None):
        self._res_fn = res_of_alpha
        self._eps_fn = eps_of_beta

    def predict(self, x_t, x_in, t, schedule):
        x_t = as_field(x_t, "x_t")
        alpha, beta, _ = schedule.eval(t)
        res = np.full_like(x_t, float(self._res_fn(alpha)))
        if self._eps_fn is None:
            return PredictorOutput(res=res, eps=None, derived_eps=True)
        return PredictorOutput(res=res, eps=np.full_like(x_t, float(self._eps_fn(beta))))

    def guidance_gradient(self, x_t, x_in, t, schedule):
        return np.zeros_like(as_field(x_t, "x_t"))


def make_function_predictor(res_of_alpha, eps_of_beta=None) -> Predictor:
    """Predictor from scalar callables ``res(alpha_bar)`` and optionally
    ``eps(beta_bar)``; used for transcendental convergence problems."""
    return _FunctionPredictor(res_of_alpha, eps_of_beta)


def make_constant_predictor(c_res: float, c_eps: float | None = None) -> Predictor:
    """Predictor returning the constant ``c_res`` (and ``c_eps`` when given).

    Without ``c_eps`` the output is flagged for algebraic noise
    recovery. The guidance gradient is a zero field.
    """
    c_res = float(c_res)
    if c_eps is None:
        return _FunctionPredictor(lambda a: c_res, None)
    c_eps = float(c_eps)
    return _FunctionPredictor(lambda a: c_res, lambda b: c_eps)


def make_polynomial_predictor(res_coeffs, eps_coeffs) -> Predictor:
    """Predictor with polynomial heads: res as a polynomial in
    ``alpha_bar`` and eps as a polynomial in ``beta_bar``, coefficients
    in ascending order. Degree 0 reduces to a constant predictor."""
    res_coeffs = [float(c) for c in res_coeffs]
    eps_coeffs = [float(c) for c in eps_coeffs]
    if not res_coeffs or not eps_coeffs:
        raise ValueError("coefficient lists must be non-empty")
    poly = np.polynomial.polynomial.polyval
    return _FunctionPredictor(
        lambda a: poly(a, res_coeffs), lambda b: poly(b, eps_coeffs)
    )


class _FixedPredictor(Predictor):
    # state-independent fields; shapes checked against the query

    def __init__(self, res_field, eps_field=None):
        self._res = as_field(res_field, "res_field")
        self._eps = None if eps_field is None else as_field(eps_field, "eps_field")
        if self._eps is not None:
            same_shape(self._res, self._eps)

    def predict(self, x_t, x_in, t, schedule):
        x_t = as_field(x_t, "x_t")
        same_shape(x_t, self._res, "state and fixed fields")
        if self._eps is None:
            return PredictorOutput(res=self._res.copy(), eps=None, derived_eps=True)
        return PredictorOutput(res=self._res.copy(), eps=self._eps.copy())

    def guidance_gradient(self, x_t, x_in, t, schedule):
        return np.zeros_like(as_field(x_t, "x_t"))


def make_fixed_predictor(res_field, eps_field=None) -> Predictor:
    """Predictor returning fixed fields regardless of state or time.

    With the exact degradation residual ``x_in - x0`` this is the
    oracle used by restoration smoke tests and telescoping checks.
    """
    return _FixedPredictor(res_field, eps_field)


class _KnownCleanPredictor(Predictor):
    # exact-residual oracle: knows the clean field, so res = x_in - x0

    def __init__(self, x0):
        self._x0 = as_field(x0, "x0")

    def predict(self, x_t, x_in, t, schedule):
        x_t = as_field(x_t, "x_t")
        x_in = as_field(x_in, "x_in")
        same_shape(x_t, x_in)
        same_shape(x_in, self._x0, "input and known clean field")
        return PredictorOutput(res=x_in - self._x0, eps=None, derived_eps=True)

    def guidance_gradient(self, x_t, x_in, t, schedule):
        # algebraic noise recovery zeroes the guidance field identically
        return np.zeros_like(as_field(x_t, "x_t"))


def make_known_clean_predictor(x0) -> Predictor:
    """Exact-residual oracle for a known clean field: returns
    ``x_in - x0`` with algebraic noise recovery. Used by restoration
    smoke tests, where sampling should reproduce ``x0`` nearly exactly."""
    return _KnownCleanPredictor(x0)


class _EchoPredictor(Predictor):
    """res = x_in - x_t, no noise head, no gradient capability."""

    def predict(self, x_t, x_in, t, schedule):
        x_t = as_field(x_t, "x_t")
        x_in = as_field(x_in, "x_in")
        same_shape(x_t, x_in)
        return PredictorOutput(res=x_in - x_t, eps=None, derived_eps=True)


def make_echo_predictor() -> Predictor:
    """Diagnostic predictor echoing ``x_in - x_t``; exercises protocol
    plumbing with a value that depends on both request tensors."""
    return _EchoPredictor()


def gaussian_posterior_mean(
    x_t, x_in, t: float, mu0: float, s0: float, schedule: Schedule
) -> np.ndarray:
    """Exact posterior mean of the clean image under a Gaussian prior.

    For a prior N(mu0, s0^2) per element, the forward process gives
    ``x_t = a*x0 + b*x_in + beta_bar*eps`` with ``a = 1 - alpha_bar``
    and ``b = alpha_bar - delta_bar``; conditioning the jointly Gaussian
    pair yields

        E[x0 | x_t] = mu0 + a*s0^2*(x_t - a*mu0 - b*x_in) / (a^2*s0^2 + beta_bar^2).
    """
    x_t = as_field(x_t, "x_t")
    x_in = as_field(x_in, "x_in")
    same_shape(x_t, x_in)
    if not s0 > 0:
        raise ValueError(f"s0 must be positive, got {s0}")
    alpha, beta, delta = schedule.eval(t)
    a = 1.0 - alpha
    b = alpha - delta
    denom = a * a * s0 * s0 + beta * beta
    if denom == 0.0:
        raise ValueError("posterior mean undefined: zero observation variance")
    return mu0 + a * s0 * s0 * (x_t - a * mu0 - b * x_in) / denom


class _GaussianOracle(Predictor):
    def __init__(self, mu0, s0, eps_head=None):
        self.mu0 = float(mu0)
        self.s0 = float(s0)
        if not self.s0 > 0:
            raise ValueError(f"s0 must be positive, got {s0}")
        if eps_head is not None:
            c0, c1 = eps_head
            eps_head = (float(c0), float(c1))
        self.eps_head = eps_head

    def predict(self, x_t, x_in, t, schedule):
        x_t = as_field(x_t, "x_t")
        x_in = as_field(x_in, "x_in")
        mean = gaussian_posterior_mean(x_t, x_in, t, self.mu0, self.s0, schedule)
        res = x_in - mean
        if self.eps_head is None:
            return PredictorOutput(res=res, eps=None, derived_eps=True)
        c0, c1 = self.eps_head
        return PredictorOutput(res=res, eps=c0 + c1 * x_t)

    def guidance_gradient(self, x_t, x_in, t, schedule):
        x_t = as_field(x_t, "x_t")
        x_in = as_field(x_in, "x_in")
        same_shape(x_t, x_in)
        if self.eps_head is None:
            # algebraic noise recovery makes the guidance field vanish
            # identically, so its norm has a zero (sub)gradient
            return np.zeros_like(x_t)
        alpha, beta, delta = schedule.eval(t)
        a = 1.0 - alpha
        c0, c1 = self.eps_head
        out = self.predict(x_t, x_in, t, schedule)
        x0_hat = estimate_clean(x_t, x_in, out.res, out.eps, t, schedule)
        field = x_in - (x0_hat + out.res)
        norm = float(np.linalg.norm(field))
        if norm == 0.0:
            return np.zeros_like(x_t)
        # d(res)/d(x_t) = -coef elementwise, from the affine posterior mean
        coef = a * self.s0 ** 2 / (a * a * self.s0 ** 2 + beta * beta)
        jac = -1.0 + a * coef + beta * c1
        return jac * field / norm


def make_gaussian_oracle(
    mu0: float, s0: float, eps_head: tuple[float, float] | None = None
) -> Predictor:
    """Exact-posterior predictor for a Gaussian clean-image prior.

    Residual head: ``x_in - E[x0 | x_t]`` with the closed-form posterior
    mean. By default the noise head is absent (flagged for algebraic
    recovery, which here coincides with the exact conditional noise).
    Passing ``eps_head=(c0, c1)`` installs an independent affine noise
    head ``c0 + c1*x_t`` instead; this makes the posterior guidance
    field non-degenerate, and the guidance gradient is then available in
    closed form through the oracle's affine structure.
    """
    return _GaussianOracle(mu0, s0, eps_head)
