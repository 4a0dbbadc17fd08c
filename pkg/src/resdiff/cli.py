"""Command-line entry points.

Subcommands::

    restore          sample a restoration of a degraded image
    study            convergence study against a dense reference solve
    jensen           tabulate the posterior-guidance Jensen gap bound
    schedule         dump a schedule's coefficient curves on a grid
    check-predictor  run the conformance suite against a live server

All commands exit 0 on success and 1 on any error (check-predictor
also exits 1 when a fixture fails). Given a fixed ``--seed``, outputs
are byte-identical across runs.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .fields import make_rng
from .forward import sample_terminal
from .guidance import jensen_sweep
from .imageio import load_image, save_image
from .metrics import psnr, ssim
from .predictors import (
    Predictor,
    make_constant_predictor,
    make_echo_predictor,
    make_gaussian_oracle,
    make_known_clean_predictor,
    make_polynomial_predictor,
)
from .schedule import FAMILIES, ScheduleConfig, build_schedule
from .solver import (
    SolverConfig,
    convergence_study,
    make_study_problem,
    solve,
    trajectory_to_csv,
)

__all__ = ["main", "parse_predictor_spec"]


def _noop_close():
    return None


def parse_predictor_spec(spec: str):
    """Build a predictor from a command-line spec string.

    Returns ``(predictor, closer)``; call ``closer()`` when done (it
    shuts down external servers and is a no-op otherwise). Specs:

    * ``constant:RES[,EPS]``
    * ``echo``
    * ``poly:A0,A1,...;B0,B1,...`` (res coeffs in alpha_bar, eps coeffs
      in beta_bar)
    * ``gaussian-oracle:MU0,S0[,C0,C1]`` (optional affine noise head)
    * ``residual-from:IMAGE`` (exact-residual oracle for a known clean
      image)
    * ``external:COMMAND`` or ``external:HOST:PORT``
    """
    kind, _, rest = spec.partition(":")
    kind = kind.strip()
    if kind == "constant":
        parts = [float(v) for v in rest.split(",") if v != ""]
        if len(parts) not in (1, 2):
            raise ValueError(f"constant predictor wants 1 or 2 values, got {spec!r}")
        return make_constant_predictor(*parts), _noop_close
    if kind == "echo":
        if rest:
            raise ValueError("echo takes no parameters")
        return make_echo_predictor(), _noop_close
    if kind == "poly":
        res_part, sep, eps_part = rest.partition(";")
        if not sep:
            raise ValueError("poly spec wants 'poly:RES_COEFFS;EPS_COEFFS'")
        res_coeffs = [float(v) for v in res_part.split(",") if v != ""]
        eps_coeffs = [float(v) for v in eps_part.split(",") if v != ""]
        return make_polynomial_predictor(res_coeffs, eps_coeffs), _noop_close
    if kind == "gaussian-oracle":
        parts = [float(v) for v in rest.split(",") if v != ""]
        if len(parts) == 2:
            return make_gaussian_oracle(parts[0], parts[1]), _noop_close
        if len(parts) == 4:
            return make_gaussian_oracle(parts[0], parts[1], (parts[2], parts[3])), _noop_close
        raise ValueError(f"gaussian-oracle wants 'MU0,S0' or 'MU0,S0,C0,C1', got {spec!r}")
    if kind == "residual-from":
        if not rest:
            raise ValueError("residual-from wants an image path")
        return make_known_clean_predictor(load_image(rest)), _noop_close
    if kind == "external":
        from .protocol import spawn_external_predictor

        if not rest:
            raise ValueError("external wants a command or host:port")
        predictor = spawn_external_predictor(rest)
        return predictor, predictor.close
    raise ValueError(f"unknown predictor spec {spec!r}")


def _parse_grid(text: str) -> list[float]:
    # 'start:stop:count' linspace, else comma-separated values
    if ":" in text:
        start, stop, count = text.split(":")
        return [float(v) for v in np.linspace(float(start), float(stop), int(count))]
    return [float(v) for v in text.split(",") if v != ""]


def _parse_ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v != ""]


def _schedule_from(args, family_attr: str = "schedule_family") -> "Schedule":
    return build_schedule(
        ScheduleConfig(
            family=getattr(args, family_attr),
            T=args.T,
            delta_T=args.delta_T,
            beta_T=args.beta_T,
        )
    )


def _write_csv(rows, header: str, out: str | None) -> None:
    lines = [header] + [",".join(str(v) for v in row) for row in rows]
    text = "\n".join(lines) + "\n"
    if out:
        with open(out, "w", encoding="ascii") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def cmd_restore(args) -> int:
    x_in = load_image(args.infile)
    schedule = _schedule_from(args)
    rng = make_rng(args.seed)
    if args.init:
        x_T = load_image(args.init)
        if x_T.shape != x_in.shape:
            raise ValueError(f"--init shape {x_T.shape} != input shape {x_in.shape}")
    else:
        x_T = sample_terminal(x_in.shape, schedule, rng)
    predictor, closer = parse_predictor_spec(args.predictor)
    try:
        cfg = SolverConfig(
            order=args.order, steps=args.steps, r=args.r, r1=args.r1, r2=args.r2,
            ups=args.ups, queue=args.queue, queue_compat=args.queue_compat,
            seed=args.seed,
        )
        traj = solve(cfg, x_T, x_in, predictor, schedule)
    finally:
        closer()
    save_image(traj.final, args.out)
    if args.trajectory:
        trajectory_to_csv(traj, args.trajectory, checksums=True)
    print(f"predictor evals: {traj.eval_count}")
    if args.reference:
        ref = load_image(args.reference)
        restored = load_image(args.out)
        print(f"PSNR: {psnr(restored, ref):.2f} dB")
        print(f"SSIM: {ssim(restored, ref):.4f}")
    return 0


def cmd_study(args) -> int:
    schedule = _schedule_from(args)
    m_list = _parse_ints(args.m_list)
    if len(m_list) < 4:
        raise ValueError("--steps-list needs at least 4 entries for a slope fit")
    problem = make_study_problem(
        args.problem, schedule=schedule, seed=args.seed, degree=args.degree
    )
    result = convergence_study(
        problem,
        orders=_parse_ints(args.orders),
        m_list=m_list,
        dense_steps=args.dense_steps,
        include_queue=args.queue,
        ups=args.ups,
    )
    for label, m, err in result.rows:
        print(f"{label} M={m} err={err:.3e}")
    for label, slope in result.slopes.items():
        if isinstance(slope, str):
            print(f"slope {label}: {slope}")
        else:
            print(f"slope {label}: {slope:.3f}")
    if args.out:
        _write_csv(result.rows, "solver,steps,max_err", args.out)
    return 0


def cmd_jensen(args) -> int:
    rows = jensen_sweep(_parse_grid(args.sigma), _parse_grid(args.m1), d=args.d)
    _write_csv(rows, "sigma,m1,bound", args.out)
    best = max(rows, key=lambda r: r[2])
    print(f"max bound {best[2]:.6g} at sigma={best[0]:.6g}, m1={best[1]:.6g}", file=sys.stderr)
    return 0


def cmd_schedule(args) -> int:
    schedule = build_schedule(
        ScheduleConfig(family=args.family, T=args.T, delta_T=args.delta_T, beta_T=args.beta_T)
    )
    rows = schedule.grid_rows(args.steps)
    _write_csv(rows, "t,alpha_bar,beta_bar,delta_bar,h,l,g2", args.out)
    return 0


def cmd_check_predictor(args) -> int:
    from .protocol import conformance_check, spawn_external_predictor

    if bool(args.cmd) == bool(args.address):
        raise ValueError("pass exactly one of --cmd or --address")
    reference, ref_closer = parse_predictor_spec(args.kind)
    if args.kind.startswith("external"):
        raise ValueError("--kind must be an in-process reference predictor")
    schedule = _schedule_from(args)
    external = spawn_external_predictor(args.cmd or args.address, timeout=args.timeout)
    try:
        report = conformance_check(external, reference, schedule)
    finally:
        external.close()
        ref_closer()
    print(report)
    if report.all_passed:
        print("all fixtures passed")
        return 0
    failed = sum(1 for _, ok, _ in report.entries if not ok)
    print(f"{failed} fixture(s) failed", file=sys.stderr)
    return 1


def _add_schedule_args(parser, with_family_alias: bool = True) -> None:
    parser.add_argument(
        "--schedule-family", choices=FAMILIES, default="linear-ramp",
        help="coefficient curve family (default linear-ramp)",
    )
    parser.add_argument("--T", type=float, default=1.0, help="terminal time (default 1)")
    parser.add_argument("--delta-T", dest="delta_T", type=float, default=1.0,
                        help="terminal input-removal fraction (default 1)")
    parser.add_argument("--beta-T", dest="beta_T", type=float, default=1.0,
                        help="terminal noise level (default 1)")


def _add_solver_args(parser) -> None:
    parser.add_argument("--steps", type=int, default=8, help="grid intervals (default 8)")
    parser.add_argument("--order", type=int, choices=(1, 2, 3), default=2,
                        help="solver order (default 2)")
    parser.add_argument("--r", type=float, default=0.5,
                        help="order-2 intermediate ratio (default 0.5)")
    parser.add_argument("--r1", type=float, default=1.0 / 3.0,
                        help="order-3 first ratio (default 1/3)")
    parser.add_argument("--r2", type=float, default=2.0 / 3.0,
                        help="order-3 second ratio (default 2/3)")
    parser.add_argument("--ups", action=argparse.BooleanOptionalAction, default=True,
                        help="posterior-correct noise estimates (default on)")
    parser.add_argument("--queue", action="store_true",
                        help="evaluation-reusing order-2 sampler")
    parser.add_argument("--queue-compat", dest="queue_compat", action="store_true",
                        help="historical queue variant (first-order window anchors)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="resdiff",
        description="residual-diffusion restoration sampling and analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("restore", help="sample a restoration of a degraded image")
    p.add_argument("--in", dest="infile", required=True, help="degraded input image")
    p.add_argument("--predictor", required=True, help="predictor spec (see docs)")
    p.add_argument("--out", required=True, help="restored image path (.png or .pgm)")
    p.add_argument("--init", default=None, help="terminal-state image (default: sampled noise)")
    p.add_argument("--reference", default=None, help="clean image for PSNR/SSIM reporting")
    p.add_argument("--trajectory", default=None, help="write a trajectory summary CSV here")
    p.add_argument("--seed", type=int, default=0)
    _add_schedule_args(p)
    _add_solver_args(p)
    p.set_defaults(func=cmd_restore)

    p = sub.add_parser("study", help="convergence study against a dense reference solve")
    p.add_argument("--problem", required=True,
                   choices=("constant", "polynomial", "transcendental", "gaussian-oracle"))
    p.add_argument("--orders", default="1,2,3", help="comma list of solver orders")
    p.add_argument("--steps-list", dest="m_list", default="8,16,32,64,128",
                   help="comma list of step counts (at least 4 for a slope fit)")
    p.add_argument("--dense-steps", dest="dense_steps", type=int, default=100_000)
    p.add_argument("--degree", type=int, default=2, help="polynomial problem degree")
    p.add_argument("--out", default=None, help="write error rows as CSV here")
    p.add_argument("--seed", type=int, default=0)
    _add_schedule_args(p)
    _add_solver_args(p)
    p.set_defaults(func=cmd_study)

    p = sub.add_parser("jensen", help="tabulate the Jensen gap bound over a grid")
    p.add_argument("--sigma", default="0.05:20:100",
                   help="grid: 'start:stop:count' or comma list (default 0.05:20:100)")
    p.add_argument("--m1", default="1", help="grid: 'start:stop:count' or comma list")
    p.add_argument("--d", type=int, default=1, help="dimensionality factor")
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_jensen)

    p = sub.add_parser("schedule", help="dump schedule coefficient curves on a grid")
    p.add_argument("--family", choices=FAMILIES, default="linear-ramp")
    p.add_argument("--steps", type=int, default=8, help="grid intervals (default 8)")
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--delta-T", dest="delta_T", type=float, default=1.0)
    p.add_argument("--beta-T", dest="beta_T", type=float, default=1.0)
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("check-predictor", help="conformance-check a live predictor server")
    p.add_argument("--cmd", default=None, help="server command line to spawn")
    p.add_argument("--address", default=None, help="host:port of a running server")
    p.add_argument("--kind", default="echo",
                   help="in-process reference predictor spec (default echo)")
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--seed", type=int, default=0)
    _add_schedule_args(p)
    p.set_defaults(func=cmd_check_predictor)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
