#!/usr/bin/env python3
"""Stability constants across refinements: extension ratios, Poincare constants, boundary norms."""

import argparse
import json

from fdbie.harness import StudyConfig, run_property_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--resolutions", type=int, nargs="+", default=[32, 64, 128])
    args = ap.parse_args()
    for suite in ("extension", "poincare", "norm2-bounded"):
        rep = run_property_suite(suite, StudyConfig(), args.resolutions)
        print(f"== {suite}: {'PASS' if rep.passed else 'FAIL'}")
        for row in rep.rows:
            print("  ", json.dumps({k: (round(v, 6) if isinstance(v, float) else v) for k, v in row.items()}))


if __name__ == "__main__":
    main()
