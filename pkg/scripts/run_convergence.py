#!/usr/bin/env python3
"""Observed orders for several manufactured solutions on the circle and the star.

Writes one CSV per (domain, solution) pair into --out and prints a summary.
Cubic data is included on purpose: it converges faster than second order
because the interior stencil is exact on cubics.
"""

import argparse

from fdbie.harness import StudyConfig, emit_report, run_convergence

SOLUTIONS = {
    "re_z3": {"kind": "complex_power", "m": 3},
    "re_z4": {"kind": "complex_power", "m": 4},
    "log": {"kind": "log_distance", "z0": [1.2, 0.3]},
    "sin_cosh": {"kind": "sin_cosh"},
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="out/convergence")
    ap.add_argument("--resolutions", type=int, nargs="+", default=[32, 64, 128, 256])
    ap.add_argument("--timing", action="store_true")
    args = ap.parse_args()
    for dom in ("circle", "star"):
        for name, sol in SOLUTIONS.items():
            cfg = StudyConfig(domain={"family": dom}, solution=sol, resolutions=args.resolutions)
            rep = run_convergence(cfg)
            emit_report(rep, args.out, ["csv"], f"{dom}_{name}", include_timing=args.timing)
            orders = ", ".join(f"{r['order_max']:.2f}" for r in rep.rows[1:] if r["order_max"] is not None)
            print(f"{dom:7s} {name:9s} err_max={rep.rows[-1]['err_max']:.3e} orders: {orders}")


if __name__ == "__main__":
    main()
