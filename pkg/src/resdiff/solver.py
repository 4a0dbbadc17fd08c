"""Probability-flow solvers for residual-diffusion restoration.

The reverse-time flow obeyed by the forward process of
:mod:`resdiff.forward` has an exact between-times solution: writing
``a = alpha_bar``, ``b = beta_bar``, ``d = delta_bar``,

    x(t1) = x(t0) - (d1 - d0) * x_in
            + integral of res over a from a0 to a1
            + integral of eps over b from b0 to b1,

so the input-removal term integrates exactly and all approximation
error lives in two one-dimensional quadratures, one in residual
coefficient space and one in noise-level space. The order-k step
truncates each quadrature with a degree-(k-1) stencil built from k
predictor evaluations per step:

* order 1 holds the integrand at its left endpoint;
* order 2 adds a first divided difference from an intermediate
  evaluation (ratio ``r`` into the step);
* order 3 adds a second divided difference from two intermediate
  evaluations (ratios ``r1 < r2``).

The stencil offsets are measured in the integration variable itself
(``alpha_bar`` for the residual side, ``beta_bar`` for the noise side),
not in time. With offsets ``h1 = lam(t_u) - lam(t0)``,
``h2 = lam(t_s) - lam(t0)`` and span ``H = lam(t1) - lam(t0)`` the
update per side is

    H*g0 + H^2/(2*h1) * (g1 - g0)                          (order 2)
    ... + (H^3/6 - H^2*h1/4) * D2                          (order 3)
    D2 = 2*(h1*g2 - h2*g1 + (h2 - h1)*g0) / (h1*h2*(h2 - h1))

which integrates any polynomial integrand of degree k-1 exactly for
arbitrary intermediate placements. When the coefficient curve is
linear in time (so ``h1 = r1*H``), the order-2 weight reduces to the
familiar ``H/(2*r1)`` form.

Solvers never draw randomness; the caller supplies the terminal state,
so identical configurations and inputs reproduce identical
trajectories bit for bit.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .fields import as_field, same_shape
from .guidance import ups_correct
from .predictors import Predictor, derive_eps, estimate_clean
from .schedule import Schedule

__all__ = [
    "SolverConfig",
    "Trajectory",
    "step_first",
    "step_second",
    "step_third",
    "solve",
    "queue_solve",
    "reference_solve",
    "StudyProblem",
    "make_study_problem",
    "StudyResult",
    "convergence_study",
    "trajectory_to_csv",
]


@dataclass(frozen=True)
class SolverConfig:
    """Validated sampler settings.

    Attributes:
        order: truncation order, 1, 2 or 3.
        steps: number of grid intervals M, >= 1.
        r: intermediate ratio for order 2, in (0, 1).
        r1, r2: intermediate ratios for order 3, 0 < r1 < r2 < 1.
        ups: apply posterior correction at every predictor evaluation.
        queue: use the evaluation-reusing windowed sampler (order 2
            only; halves predictor evaluations).
        queue_compat: historical queue variant that chains windows from
            first-order intermediate states; kept for comparison, costs
            one order of accuracy, implies ``queue``.
        seed: seed used by callers that draw the terminal state.
    """

    order: int = 2
    steps: int = 8
    r: float = 0.5
    r1: float = 1.0 / 3.0
    r2: float = 2.0 / 3.0
    ups: bool = True
    queue: bool = False
    queue_compat: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.order not in (1, 2, 3):
            raise ValueError(f"order must be 1, 2 or 3, got {self.order}")
        if not (isinstance(self.steps, (int, np.integer)) and self.steps >= 1):
            raise ValueError(f"steps must be a positive integer, got {self.steps!r}")
        if not 0.0 < self.r < 1.0:
            raise ValueError(f"r must lie in (0, 1), got {self.r}")
        if not 0.0 < self.r1 < self.r2 < 1.0:
            raise ValueError(
                f"need 0 < r1 < r2 < 1, got r1={self.r1}, r2={self.r2}"
            )
        if self.queue_compat and not self.queue:
            object.__setattr__(self, "queue", True)
        if self.queue and self.order != 2:
            raise ValueError("the queue sampler is defined for order 2 only")


@dataclass
class Trajectory:
    """Sampling record: grid times (descending from T to 0), the state
    at every grid time (terminal state included), and the number of
    predictor evaluations spent."""

    times: list[float]
    states: list[np.ndarray]
    eval_count: int
    config: SolverConfig | None = None
    eval_counts: list[int] = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def _check_step_times(t_prev: float, t_next: float, schedule: Schedule) -> None:
    if t_next > t_prev:
        raise ValueError(f"times must descend: t_next={t_next} > t_prev={t_prev}")
    # range-checks both endpoints
    schedule.eval(t_prev)
    schedule.eval(t_next)


def _evaluate(x_t, x_in, t, predictor, schedule, ups):
    """One predictor evaluation, normalized: returns (res, eps, x0_hat)
    with eps recovered algebraically when absent and posterior-corrected
    when requested."""
    out = predictor.predict(x_t, x_in, t, schedule)
    res = as_field(out.res, "predicted res")
    same_shape(x_t, res, "state and predicted res")
    if out.eps is None:
        eps = derive_eps(x_t, x_in, res, t, schedule)
    else:
        eps = as_field(out.eps, "predicted eps")
        same_shape(x_t, eps, "state and predicted eps")
    x0_hat = estimate_clean(x_t, x_in, res, eps, t, schedule)
    if ups:
        eps = ups_correct(eps, x_t, x_in, x0_hat, res, t, predictor, schedule)
    return res, eps, x0_hat


def step_first(
    x_t, x_in, t_prev: float, t_next: float, predictor: Predictor, schedule: Schedule,
    ups: bool = False,
) -> tuple[np.ndarray, int]:
    """Order-1 step from t_prev to t_next; returns (state, evaluations).

    Holds the one evaluation at t_prev across the step:
    ``x - (d1-d0)*x_in + (a1-a0)*res + (b1-b0)*eps``. Equal times are a
    no-op costing nothing.
    """
    x_t = as_field(x_t, "x_t")
    x_in = as_field(x_in, "x_in")
    same_shape(x_t, x_in)
    _check_step_times(t_prev, t_next, schedule)
    if t_next == t_prev:
        return x_t, 0
    res, eps, _ = _evaluate(x_t, x_in, t_prev, predictor, schedule, ups)
    a0, b0, d0 = schedule.eval(t_prev)
    a1, b1, d1 = schedule.eval(t_next)
    x_next = x_t - (d1 - d0) * x_in + (a1 - a0) * res + (b1 - b0) * eps
    return x_next, 1


def step_second(
    x_t, x_in, t_prev: float, t_next: float, predictor: Predictor, schedule: Schedule,
    r: float = 0.5, ups: bool = False,
) -> tuple[np.ndarray, int]:
    """Order-2 step from t_prev to t_next; returns (state, evaluations).

    Takes an order-1 substep to the intermediate time
    ``t_u = r*t_next + (1-r)*t_prev``, re-evaluates there, and adds the
    first-divided-difference terms with weights measured in coefficient
    space (see the module docstring). If the intermediate evaluation
    equals the initial one the step collapses to :func:`step_first`.
    """
    x_t = as_field(x_t, "x_t")
    x_in = as_field(x_in, "x_in")
    same_shape(x_t, x_in)
    if not 0.0 < r < 1.0:
        raise ValueError(f"r must lie in (0, 1), got {r}")
    _check_step_times(t_prev, t_next, schedule)
    if t_next == t_prev:
        return x_t, 0
    t_u = r * t_next + (1.0 - r) * t_prev
    res0, eps0, _ = _evaluate(x_t, x_in, t_prev, predictor, schedule, ups)
    a0, b0, d0 = schedule.eval(t_prev)
    au, bu, du = schedule.eval(t_u)
    a1, b1, d1 = schedule.eval(t_next)
    x_u = x_t - (du - d0) * x_in + (au - a0) * res0 + (bu - b0) * eps0
    res_u, eps_u, _ = _evaluate(x_u, x_in, t_u, predictor, schedule, ups)
    ha, hb = a1 - a0, b1 - b0
    ca = ha * ha / (2.0 * (au - a0))
    cb = hb * hb / (2.0 * (bu - b0))
    x_next = (
        x_t - (d1 - d0) * x_in + ha * res0 + hb * eps0
        + ca * (res_u - res0) + cb * (eps_u - eps0)
    )
    return x_next, 2


def _third_order_side(H, h1, h2, g0, g1, g2):
    # degree-2 stencil, exact for quadratic integrands at any offsets
    d1 = g1 - g0
    d2 = 2.0 * (h1 * g2 - h2 * g1 + (h2 - h1) * g0) / (h1 * h2 * (h2 - h1))
    return H * g0 + (H * H / (2.0 * h1)) * d1 + (H ** 3 / 6.0 - H * H * h1 / 4.0) * d2


def step_third(
    x_t, x_in, t_prev: float, t_next: float, predictor: Predictor, schedule: Schedule,
    r1: float = 1.0 / 3.0, r2: float = 2.0 / 3.0, ups: bool = False,
) -> tuple[np.ndarray, int]:
    """Order-3 step from t_prev to t_next; returns (state, evaluations).

    Evaluates at t_prev, at ``t_u`` (ratio r1, reached by an order-1
    substep) and at ``t_s`` (ratio r2, reached by an order-2 substep
    reusing the first two evaluations), then applies the second-divided-
    difference stencil per quadrature side.
    """
    x_t = as_field(x_t, "x_t")
    x_in = as_field(x_in, "x_in")
    same_shape(x_t, x_in)
    if not 0.0 < r1 < r2 < 1.0:
        raise ValueError(f"need 0 < r1 < r2 < 1, got r1={r1}, r2={r2}")
    _check_step_times(t_prev, t_next, schedule)
    if t_next == t_prev:
        return x_t, 0
    t_u = r1 * t_next + (1.0 - r1) * t_prev
    t_s = r2 * t_next + (1.0 - r2) * t_prev
    res0, eps0, _ = _evaluate(x_t, x_in, t_prev, predictor, schedule, ups)
    a0, b0, d0 = schedule.eval(t_prev)
    au, bu, du = schedule.eval(t_u)
    a_s, b_s, d_s = schedule.eval(t_s)
    a1, b1, d1 = schedule.eval(t_next)

    x_u = x_t - (du - d0) * x_in + (au - a0) * res0 + (bu - b0) * eps0
    res1, eps1, _ = _evaluate(x_u, x_in, t_u, predictor, schedule, ups)

    ca_s = (a_s - a0) ** 2 / (2.0 * (au - a0))
    cb_s = (b_s - b0) ** 2 / (2.0 * (bu - b0))
    x_s = (
        x_t - (d_s - d0) * x_in + (a_s - a0) * res0 + (b_s - b0) * eps0
        + ca_s * (res1 - res0) + cb_s * (eps1 - eps0)
    )
    res2, eps2, _ = _evaluate(x_s, x_in, t_s, predictor, schedule, ups)

    x_next = (
        x_t - (d1 - d0) * x_in
        + _third_order_side(a1 - a0, au - a0, a_s - a0, res0, res1, res2)
        + _third_order_side(b1 - b0, bu - b0, b_s - b0, eps0, eps1, eps2)
    )
    return x_next, 3


def solve(
    config: SolverConfig, x_T, x_in, predictor: Predictor, schedule: Schedule
) -> Trajectory:
    """Integrate from the supplied terminal state at t = T down to t = 0.

    Runs ``config.steps`` equal time steps of the configured order,
    recording the state at every grid time. ``config.queue`` dispatches
    to :func:`queue_solve`. Evaluation count is exactly
    ``order * steps`` for the naive orders.
    """
    if config.queue:
        return queue_solve(config, x_T, x_in, predictor, schedule)
    x_T = as_field(x_T, "x_T")
    x_in = as_field(x_in, "x_in")
    same_shape(x_T, x_in)
    grid = schedule.time_grid(config.steps)
    states = [x_T]
    counts = [0]
    evals = 0
    for i in range(1, len(grid)):
        t_prev, t_next = float(grid[i - 1]), float(grid[i])
        if config.order == 1:
            x, n = step_first(states[-1], x_in, t_prev, t_next, predictor, schedule, ups=config.ups)
        elif config.order == 2:
            x, n = step_second(states[-1], x_in, t_prev, t_next, predictor, schedule, r=config.r, ups=config.ups)
        else:
            x, n = step_third(states[-1], x_in, t_prev, t_next, predictor, schedule, r1=config.r1, r2=config.r2, ups=config.ups)
        states.append(x)
        evals += n
        counts.append(evals)
    return Trajectory([float(t) for t in grid], states, evals, config, counts)


def queue_solve(
    config: SolverConfig, x_T, x_in, predictor: Predictor, schedule: Schedule
) -> Trajectory:
    """Order-2 sampling with one predictor evaluation per grid point.

    Each window spans two grid intervals ``[t_{j-1}, t_{j+1}]``. It
    starts from the state produced at ``t_{j-1}``, reuses that point's
    queued evaluation, makes one fresh evaluation at ``t_j``, and emits
    the order-2 combination at ``t_{j+1}``; successive windows overlap
    by one interval. A single order-1 warm-up step provides the state
    at ``t_1`` (that state, alone, is first-order accurate). Total cost
    is ``steps`` evaluations, against ``2 * steps`` for the naive
    order-2 solver.

    With ``config.queue_compat`` the historical variant runs instead:
    windows start from the chain of order-1 intermediate states rather
    than from previously emitted states. It spends the same evaluation
    budget but its emitted states inherit the order-1 chain's error.
    """
    if config.order != 2:
        raise ValueError("the queue sampler is defined for order 2 only")
    if config.steps < 2:
        raise ValueError("the queue sampler needs at least 2 steps (a window spans two intervals)")
    x_T = as_field(x_T, "x_T")
    x_in = as_field(x_in, "x_in")
    same_shape(x_T, x_in)
    grid = [float(t) for t in schedule.time_grid(config.steps)]
    coeff = [schedule.eval(t) for t in grid]

    # queue entries: (t, state, res, eps, x0_hat) for the most recent
    # evaluation, reused by the next window
    pending = deque()
    res0, eps0, x00 = _evaluate(x_T, x_in, grid[0], predictor, schedule, config.ups)
    pending.append((grid[0], x_T, res0, eps0, x00))
    evals = 1

    a0, b0, d0 = coeff[0]
    a1, b1, d1 = coeff[1]
    warm = x_T - (d1 - d0) * x_in + (a1 - a0) * res0 + (b1 - b0) * eps0
    states = [x_T, warm]
    counts = [0, 1]

    # order-1 chain states, used as window anchors in compat mode only
    chain_prev, chain_here = x_T, warm

    for j in range(1, config.steps):
        anchor_state = chain_here if config.queue_compat else states[j]
        resj, epsj, x0j = _evaluate(anchor_state, x_in, grid[j], predictor, schedule, config.ups)
        evals += 1
        t_back, back_state, res_b, eps_b, _ = pending.popleft()
        assert t_back == grid[j - 1]
        if config.queue_compat:
            back_state = chain_prev
        ab, bb, db = coeff[j - 1]
        am, bm, _dm = coeff[j]
        af, bf, df = coeff[j + 1]
        ha, hb = af - ab, bf - bb
        ca = ha * ha / (2.0 * (am - ab))
        cb = hb * hb / (2.0 * (bm - bb))
        emitted = (
            back_state - (df - db) * x_in + ha * res_b + hb * eps_b
            + ca * (resj - res_b) + cb * (epsj - eps_b)
        )
        pending.append((grid[j], anchor_state, resj, epsj, x0j))
        states.append(emitted)
        counts.append(evals)
        if config.queue_compat:
            chain_prev = chain_here
            chain_here = (
                chain_here - (df - _dm) * x_in + (af - am) * resj + (bf - bm) * epsj
            )
    return Trajectory(grid, states, evals, config, counts)


def reference_solve(
    x_T, x_in, predictor: Predictor, schedule: Schedule, dense_steps: int = 100_000
) -> np.ndarray:
    """High-accuracy endpoint via dense fixed-step RK4 on the rate-form
    flow, used as the ground truth in convergence studies.

    The flow's noise term divides by ``beta_bar``, which vanishes at
    t = 0, so integration runs on ``[T/dense_steps, T]`` and the last
    sliver is closed with a single order-1 exact-coefficient step (its
    contribution is quadratically small in the sliver width). Requires
    ``dense_steps >= 10_000``; posterior correction is never applied,
    this is the plain flow.
    """
    if dense_steps < 10_000:
        raise ValueError(f"dense_steps must be >= 10000, got {dense_steps}")
    x = as_field(x_T, "x_T")
    x_in = as_field(x_in, "x_in")
    same_shape(x, x_in)
    T = schedule.T
    t_floor = T / dense_steps
    n = dense_steps - 1
    h = (t_floor - T) / n
    rates = schedule.rates
    beta_bar = schedule.beta_bar

    def rhs(x_cur, t):
        out = predictor.predict(x_cur, x_in, t, schedule)
        eps = out.eps
        if eps is None:
            eps = derive_eps(x_cur, x_in, out.res, t, schedule)
        hr, lr, g2 = rates(t)
        return hr * out.res + lr * x_in + (g2 / (2.0 * beta_bar(t))) * eps

    t = T
    for _ in range(n):
        k1 = rhs(x, t)
        k2 = rhs(x + 0.5 * h * k1, t + 0.5 * h)
        k3 = rhs(x + 0.5 * h * k2, t + 0.5 * h)
        k4 = rhs(x + h * k3, t + h)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
    x, _ = step_first(x, x_in, t_floor, 0.0, predictor, schedule, ups=False)
    return x


@dataclass
class StudyProblem:
    """A named convergence-study instance: predictor, schedule, terminal
    state and conditioning input (both scalar-like fields)."""

    name: str
    predictor: Predictor
    schedule: Schedule
    x_T: np.ndarray
    x_in: np.ndarray


def make_study_problem(
    name: str,
    schedule: Schedule | None = None,
    seed: int = 0,
    degree: int = 2,
    mu0: float = 0.2,
    s0: float = 0.3,
) -> StudyProblem:
    """Build one of the standard study problems.

    Names: ``constant`` (degree-0 heads), ``polynomial`` (heads of the
    given degree in coefficient space), ``transcendental``
    (``sin``/``cos`` heads, the generic smooth case) and
    ``gaussian-oracle`` (exact posterior predictor for a Gaussian
    prior). All are scalar problems with a seeded terminal state.
    """
    from .forward import sample_terminal
    from .fields import make_rng
    from .predictors import (
        make_constant_predictor,
        make_function_predictor,
        make_gaussian_oracle,
        make_polynomial_predictor,
    )
    from .schedule import build_schedule

    if schedule is None:
        schedule = build_schedule()
    rng = make_rng(seed)
    x_in = np.array([0.4])
    x_T = sample_terminal((1,), schedule, rng) + (1.0 - schedule.delta_bar(schedule.T)) * x_in
    if name == "constant":
        predictor = make_constant_predictor(0.3, 0.2)
    elif name == "polynomial":
        res_base = [0.3, -0.8, 0.5, -0.2, 0.1]
        eps_base = [0.25, 0.6, -0.4, 0.15, -0.05]
        if not 0 <= degree <= len(res_base) - 1:
            raise ValueError(f"degree must lie in [0, {len(res_base) - 1}], got {degree}")
        predictor = make_polynomial_predictor(res_base[: degree + 1], eps_base[: degree + 1])
    elif name == "transcendental":
        predictor = make_function_predictor(np.sin, np.cos)
    elif name == "gaussian-oracle":
        predictor = make_gaussian_oracle(mu0, s0)
    else:
        raise ValueError(
            f"unknown study problem {name!r}; expected constant, polynomial, "
            "transcendental or gaussian-oracle"
        )
    return StudyProblem(name, predictor, schedule, x_T, x_in)


@dataclass
class StudyResult:
    """Convergence-study output: error rows per (label, steps) and the
    fitted log-log slope per label ('exact' when errors sit at the
    float noise floor)."""

    problem: str
    rows: list[tuple[str, int, float]]
    slopes: dict[str, float | str]
    reference: np.ndarray

    def slope(self, label: str):
        return self.slopes[label]


_EXACT_FLOOR = 1e-13


def convergence_study(
    problem: StudyProblem,
    orders=(1, 2, 3),
    m_list=(8, 16, 32, 64, 128),
    dense_steps: int = 100_000,
    include_queue: bool = False,
    ups: bool = False,
    reference: np.ndarray | None = None,
) -> StudyResult:
    """Measure endpoint error against :func:`reference_solve` across
    step counts and fit one convergence slope per solver variant.

    The slope is the least-squares fit of log error against log steps
    (negated, so order-k solvers report about k). Variants whose errors
    all sit below the float noise floor report the string ``'exact'``.
    """
    m_list = [int(m) for m in m_list]
    if reference is None:
        reference = reference_solve(
            problem.x_T, problem.x_in, problem.predictor, problem.schedule, dense_steps
        )
    rows: list[tuple[str, int, float]] = []
    labels: list[str] = []
    for k in orders:
        labels.append(f"order-{int(k)}")
    if include_queue:
        labels.append("queue")
    for label in labels:
        for m in m_list:
            if label == "queue":
                cfg = SolverConfig(order=2, steps=m, ups=ups, queue=True)
            else:
                cfg = SolverConfig(order=int(label.split("-")[1]), steps=m, ups=ups)
            traj = solve(cfg, problem.x_T, problem.x_in, problem.predictor, problem.schedule)
            err = float(np.max(np.abs(traj.final - reference)))
            rows.append((label, m, err))
    slopes: dict[str, float | str] = {}
    for label in labels:
        errs = np.array([e for (lab, _m, e) in rows if lab == label])
        ms = np.array([m for (lab, m, _e) in rows if lab == label], dtype=np.float64)
        if np.max(errs) < _EXACT_FLOOR or len(ms) < 2:
            slopes[label] = "exact" if np.max(errs) < _EXACT_FLOOR else float("nan")
        else:
            # guard the log against exact zeros at some M
            errs = np.maximum(errs, 1e-300)
            coef = np.polyfit(np.log(ms), np.log(errs), 1)[0]
            slopes[label] = float(-coef)
    return StudyResult(problem.name, rows, slopes, reference)


def trajectory_to_csv(traj: Trajectory, path, checksums: bool = False) -> None:
    """Write a trajectory summary CSV: step index, time, cumulative
    evaluation count, and optionally a state checksum per row."""
    counts = traj.eval_counts or [traj.eval_count] * len(traj.times)
    with open(path, "w", encoding="ascii") as f:
        header = "step,t,eval_count"
        if checksums:
            header += ",state_sha256_12"
        f.write(header + "\n")
        for i, (t, x) in enumerate(zip(traj.times, traj.states)):
            row = f"{i},{t!r},{counts[i]}"
            if checksums:
                row += "," + hashlib.sha256(np.ascontiguousarray(x).tobytes()).hexdigest()[:12]
            f.write(row + "\n")
