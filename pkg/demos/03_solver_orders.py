"""Solver orders: exactness on polynomial heads, slopes on everything else.

The reverse integrator approximates two coefficient-space integrals per
step. An order-k step is exact whenever the predictor heads are
polynomials of degree < k in alpha_bar (residual) and beta_bar (noise),
and converges at O(h^k) otherwise. Both behaviors are visible with a
few lines.
"""

import numpy as np

import resdiff as rd


def main() -> None:
    schedule = rd.build_schedule()

    # degree-1 heads: order 2 is exact even with a single giant step
    predictor = rd.make_polynomial_predictor([0.3, -0.8], [0.25, 0.6])
    x_in = np.array([0.7])
    x_T = np.array([1.3])
    coarse = rd.solve(rd.SolverConfig(order=2, steps=1, ups=False),
                      x_T, x_in, predictor, schedule)
    fine = rd.solve(rd.SolverConfig(order=2, steps=64, ups=False),
                    x_T, x_in, predictor, schedule)
    print("linear heads, order 2:")
    print(f"  1 step  -> {coarse.final[0]:.15f} ({coarse.eval_count} evals)")
    print(f"  64 steps-> {fine.final[0]:.15f} ({fine.eval_count} evals)")
    print(f"  gap {abs(coarse.final[0] - fine.final[0]):.2e} (exact integration)")

    # transcendental heads: no order is exact, slopes take over
    problem = rd.make_study_problem("transcendental", schedule=schedule)
    result = rd.convergence_study(problem, orders=(1, 2, 3),
                                  m_list=(8, 16, 32, 64), dense_steps=10**5)
    print("\ntranscendental heads, error vs step count:")
    print(f"{'steps':>6} {'order-1':>12} {'order-2':>12} {'order-3':>12}")
    by_label = {}
    for label, steps, err in result.rows:
        by_label.setdefault(steps, {})[label] = err
    for steps in sorted(by_label):
        errs = by_label[steps]
        print(f"{steps:6d} " + " ".join(f"{errs[f'order-{k}']:12.3e}" for k in (1, 2, 3)))
    print("fitted slopes:", {k: f"{v:.2f}" for k, v in result.slopes.items()})


if __name__ == "__main__":
    main()
