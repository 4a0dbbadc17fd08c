"""Predictor interface, algebraic noise recovery, and the Gaussian
exact-posterior oracle.

The posterior-mean value is pinned two ways: the hand-substituted
closed form, and a self-normalized importance-sampling estimate from
10^6 paired draws of the forward process (tolerance 3 standard errors).
"""

import numpy as np
import pytest

from resdiff import (
    Predictor,
    PredictorOutput,
    build_schedule,
    derive_eps,
    diffuse,
    estimate_clean,
    gaussian_posterior_mean,
    make_constant_predictor,
    make_echo_predictor,
    make_fixed_predictor,
    make_function_predictor,
    make_gaussian_oracle,
    make_known_clean_predictor,
    make_polynomial_predictor,
    make_rng,
    residual_of,
)

from test_forward import CoefficientStub


def test_base_predictor_contract():
    p = Predictor()
    with pytest.raises(NotImplementedError):
        p.predict(np.zeros(2), np.zeros(2), 0.5, build_schedule())
    assert p.guidance_gradient(np.zeros(2), np.zeros(2), 0.5, build_schedule()) is None


def test_derive_eps_worked_value():
    # invert the diffuse worked example: (0.65 + 0.15 - 0.4) / 0.4 = 1.0
    sched = CoefficientStub({0.5: (0.5, 0.4, 0.5)})
    eps = derive_eps(np.array([0.65]), np.array([0.8]), np.array([0.3]), 0.5, sched)
    assert eps[0] == pytest.approx(1.0, abs=1e-14)


def test_derive_eps_undefined_at_time_zero():
    sched = build_schedule()
    with pytest.raises(ValueError):
        derive_eps(np.zeros(2), np.zeros(2), np.zeros(2), 0.0, sched)


def test_estimate_clean_worked_value():
    # 0.65 - 0.15 - 0.4 + 0.4 = 0.5
    sched = CoefficientStub({0.5: (0.5, 0.4, 0.5)})
    x0 = estimate_clean(
        np.array([0.65]), np.array([0.8]), np.array([0.3]), np.array([1.0]), 0.5, sched
    )
    assert x0[0] == pytest.approx(0.5, abs=1e-14)


@pytest.mark.parametrize("family", ["uniform", "linear-ramp"])
def test_forward_inversion_round_trip(family, rng):
    sched = build_schedule(family=family, delta_T=0.8, beta_T=0.6)
    x0 = rng.random((5, 4))
    x_in = rng.random((5, 4))
    eps = rng.standard_normal((5, 4))
    res = residual_of(x0, x_in)
    for t in (0.25, 0.5, 0.9):
        x_t = diffuse(x0, x_in, eps, t, sched)
        np.testing.assert_allclose(derive_eps(x_t, x_in, res, t, sched), eps, atol=1e-12)
        np.testing.assert_allclose(
            estimate_clean(x_t, x_in, res, eps, t, sched), x0, atol=1e-12
        )


def test_constant_predictor(ramp_schedule):
    p = make_constant_predictor(0.1, 0.2)
    out = p.predict(np.zeros((3, 2)), np.zeros((3, 2)), 0.5, ramp_schedule)
    np.testing.assert_allclose(out.res, 0.1)
    np.testing.assert_allclose(out.eps, 0.2)
    assert not out.derived_eps
    grad = p.guidance_gradient(np.zeros((3, 2)), np.zeros((3, 2)), 0.5, ramp_schedule)
    np.testing.assert_allclose(grad, 0.0)


def test_constant_predictor_without_noise_head(ramp_schedule):
    p = make_constant_predictor(0.1)
    out = p.predict(np.zeros(3), np.zeros(3), 0.5, ramp_schedule)
    assert out.eps is None
    assert out.derived_eps


def test_function_predictor_tracks_schedule(ramp_schedule):
    p = make_function_predictor(np.sin, np.cos)
    a, b, _ = ramp_schedule.eval(0.7)
    out = p.predict(np.zeros(4), np.zeros(4), 0.7, ramp_schedule)
    np.testing.assert_allclose(out.res, np.sin(a))
    np.testing.assert_allclose(out.eps, np.cos(b))


def test_polynomial_predictor_matches_polyval(ramp_schedule):
    res_c = [0.3, -0.8, 0.5]
    eps_c = [0.25, 0.6]
    p = make_polynomial_predictor(res_c, eps_c)
    a, b, _ = ramp_schedule.eval(0.6)
    out = p.predict(np.zeros(2), np.zeros(2), 0.6, ramp_schedule)
    assert out.res[0] == pytest.approx(0.3 - 0.8 * a + 0.5 * a * a, rel=1e-14)
    assert out.eps[0] == pytest.approx(0.25 + 0.6 * b, rel=1e-14)


def test_polynomial_predictor_rejects_empty_coefficients():
    with pytest.raises(ValueError):
        make_polynomial_predictor([], [0.1])


def test_fixed_predictor_returns_stored_fields(ramp_schedule):
    res = np.arange(4.0)
    eps = np.ones(4)
    p = make_fixed_predictor(res, eps)
    out = p.predict(np.zeros(4), np.zeros(4), 0.5, ramp_schedule)
    np.testing.assert_array_equal(out.res, res)
    np.testing.assert_array_equal(out.eps, eps)


def test_known_clean_predictor_is_exact_residual_oracle(ramp_schedule, rng):
    x0 = rng.random((6,))
    x_in = rng.random((6,))
    p = make_known_clean_predictor(x0)
    out = p.predict(rng.random((6,)), x_in, 0.5, ramp_schedule)
    np.testing.assert_allclose(out.res, x_in - x0, atol=1e-15)
    assert out.eps is None and out.derived_eps
    grad = p.guidance_gradient(np.zeros(6), x_in, 0.5, ramp_schedule)
    np.testing.assert_allclose(grad, 0.0)


def test_echo_predictor_reflects_state(ramp_schedule, rng):
    p = make_echo_predictor()
    x_t = rng.random((3,))
    x_in = rng.random((3,))
    out = p.predict(x_t, x_in, 0.5, ramp_schedule)
    np.testing.assert_allclose(out.res, x_in - x_t, atol=1e-15)
    assert out.eps is None
    # no gradient capability at all
    assert p.guidance_gradient(x_t, x_in, 0.5, ramp_schedule) is None


def test_gaussian_posterior_mean_worked_value():
    # a = 0.5, b = 0: 0.5 * 0.3 / (0.25 + 0.25) = 0.3
    sched = CoefficientStub({0.5: (0.5, 0.5, 0.5)})
    mean = gaussian_posterior_mean(
        np.array([0.3]), np.array([0.7]), 0.5, 0.0, 1.0, sched
    )
    assert mean[0] == pytest.approx(0.3, abs=1e-14)


def test_gaussian_posterior_mean_against_monte_carlo():
    sched = build_schedule(family="uniform", delta_T=0.9, beta_T=0.8)
    t, mu0, s0 = 0.36, 0.2, 0.3
    x_in_v, x_t_v = 0.7, 0.5
    analytic = gaussian_posterior_mean(
        np.array([x_t_v]), np.array([x_in_v]), t, mu0, s0, sched
    )[0]

    # likelihood-weighted draws from the forward model
    rng = make_rng(99)
    n = 1_000_000
    x0 = mu0 + s0 * rng.standard_normal(n)
    alpha, beta, delta = sched.eval(t)
    a, b = 1.0 - alpha, alpha - delta
    w = np.exp(-0.5 * ((x_t_v - a * x0 - b * x_in_v) / beta) ** 2)
    w /= w.sum()
    mc = float(np.sum(w * x0))
    var = float(np.sum(w * (x0 - mc) ** 2))
    se = np.sqrt(var * float(np.sum(w**2)))
    assert analytic == pytest.approx(mc, abs=3 * se)


def test_gaussian_posterior_mean_validates_s0(ramp_schedule):
    with pytest.raises(ValueError):
        gaussian_posterior_mean(np.zeros(2), np.zeros(2), 0.5, 0.0, 0.0, ramp_schedule)


def test_gaussian_oracle_residual_from_worked_value():
    sched = CoefficientStub({0.5: (0.5, 0.5, 0.5)})
    p = make_gaussian_oracle(0.0, 1.0)
    out = p.predict(np.array([0.3]), np.array([0.8]), 0.5, sched)
    assert out.res[0] == pytest.approx(0.5, abs=1e-14)
    assert out.eps is None and out.derived_eps


def test_gaussian_oracle_noise_head_is_affine(ramp_schedule):
    p = make_gaussian_oracle(0.2, 0.3, eps_head=(0.05, 0.4))
    x_t = np.array([0.1, 0.9])
    out = p.predict(x_t, np.zeros(2), 0.5, ramp_schedule)
    np.testing.assert_allclose(out.eps, 0.05 + 0.4 * x_t, atol=1e-15)
    assert not out.derived_eps


def test_gaussian_oracle_validates_s0():
    with pytest.raises(ValueError):
        make_gaussian_oracle(0.0, -1.0)


def test_predictor_output_defaults():
    out = PredictorOutput(res=np.zeros(2))
    assert out.eps is None
    assert not out.derived_eps
