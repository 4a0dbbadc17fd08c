"""Schedule families: how the three cumulative coefficients move.

A schedule tracks three monotone curves over diffusion time t in
[0, T]: alpha_bar injects the residual, beta_bar injects noise, and
delta_bar removes the degraded input again on the way out. Both
families share delta_bar(T) = delta_T and differ in how fast they
ramp.
"""

import resdiff as rd


def show(family: str) -> None:
    schedule = rd.build_schedule(family=family, T=1.0, delta_T=1.0, beta_T=1.0)
    print(f"\n{family} family (T=1, delta_T=1, beta_T=1)")
    print(f"{'t':>6} {'alpha_bar':>10} {'beta_bar':>10} {'delta_bar':>10}")
    for t, a, b, d, *_ in schedule.grid_rows(8):
        print(f"{t:6.3f} {a:10.4f} {b:10.4f} {d:10.4f}")

    # endpoints carry the contract: nothing injected at t=0, everything at T
    a0, b0, d0 = schedule.eval(0.0)
    aT, bT, dT = schedule.eval(schedule.T)
    print(f"endpoints: t=0 -> ({a0}, {b0}, {d0}), t=T -> ({aT}, {bT:.4f}, {dT})")

    h, l, g2 = schedule.rates(0.5)
    print(f"rates at t=0.5: d(alpha)/dt={h:.4f}  d(delta)/dt={-l:.4f}  d(beta^2)/dt={g2:.4f}")


def main() -> None:
    for family in rd.FAMILIES:
        show(family)

    # delta_bar is alpha_bar scaled by delta_T in both families, so the
    # two curves rise together and the input is fully removed only when
    # the residual is fully injected
    schedule = rd.build_schedule(family="uniform", delta_T=0.7)
    for t in (0.2, 0.5, 0.9):
        a, _, d = schedule.eval(t)
        print(f"t={t}: delta_bar/alpha_bar = {d / a:.4f} (delta_T = 0.7)")


if __name__ == "__main__":
    main()
