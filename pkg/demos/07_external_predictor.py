"""External predictors: any process speaking the wire protocol.

The solver does not care where estimates come from. A child process
(or TCP peer) that answers framed predict requests plugs in behind the
same interface as an in-process predictor, and the conformance suite
checks the contract fixture by fixture: shapes, query times, shape
rejection, gradient capability signaling, and an end-to-end solve.

Two servers are exercised when available: the built-in Python loopback
(`python -m resdiff.serve`) and the TypeScript reference server under
frontend/ (build it with `npm --prefix frontend install &&
npm --prefix frontend run build`).
"""

import shutil
import sys
from pathlib import Path

import numpy as np

import resdiff as rd


def check(label: str, command: str) -> None:
    reference = rd.make_gaussian_oracle(0.2, 0.3)
    print(f"\n=== {label}\n    {command}")
    with rd.spawn_external_predictor(command) as external:
        report = rd.conformance_check(external, reference)
        print(report)

        # the external predictor drops into a normal solve
        schedule = rd.build_schedule()
        rng = rd.make_rng(3)
        x_in = rng.random((3, 3))
        x_T = rd.sample_terminal((3, 3), schedule, rd.make_rng(4))
        cfg = rd.SolverConfig(order=2, steps=4, ups=False)
        far = rd.solve(cfg, x_T, x_in, external, schedule).final
        near = rd.solve(cfg, x_T, x_in, reference, schedule).final
        print(f"external vs in-process solve: max gap {np.max(np.abs(far - near)):.2e}")


def main() -> None:
    check("Python loopback server",
          f"{sys.executable} -m resdiff.serve --kind gaussian-oracle:0.2,0.3")

    server_js = Path(__file__).resolve().parents[1] / "frontend" / "dist" / "server.js"
    if shutil.which("node") and server_js.exists():
        check("TypeScript reference server",
              f"node {server_js} --kind gaussian-oracle:0.2,0.3")
    else:
        print("\n=== TypeScript reference server: not built, skipping")


if __name__ == "__main__":
    main()
