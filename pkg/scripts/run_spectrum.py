#!/usr/bin/env python3
"""Spectral radius estimate r_hat of calB and the smallest eigenvalue of Ah versus n."""

import argparse

import numpy as np

from fdbie.domains import make_domain
from fdbie.geometry import build_geometry
from fdbie.operators import spectrum


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--resolutions", type=int, nargs="+", default=[16, 32, 64])
    ap.add_argument("--domains", nargs="+", default=["circle", "star"])
    args = ap.parse_args()
    print(f"{'domain':8s} {'n':>4s} {'n_cut':>6s} {'r_hat':>8s} {'min eig Ah':>11s} {'max |Im|':>9s} {'min s':>8s}")
    for dom in args.domains:
        for n in args.resolutions:
            g = build_geometry(make_domain(dom), n)
            b = spectrum(g, "calB")
            a = spectrum(g, "Ah")
            print(f"{dom:8s} {n:4d} {g.n_cut:6d} {b.r_hat:8.4f} {a.eigenvalues.min():11.3e} "
                  f"{a.imag_max:9.1e} {np.min(g.s_plus):8.1e}")


if __name__ == "__main__":
    main()
