#!/usr/bin/env python3
"""Sweep the truncated/full limiting variance-density ratio over R.

The ratio tends to 1 as the truncation radius grows; this prints the
approach together with the two variance densities.
"""

import argparse

from rcmlab.connfn import exponential, gaussian, hard_disk, make_variant
from rcmlab.moments import limit_var_isolated, variance_ratio

KINDS = {"exponential": exponential, "gaussian": gaussian, "hard_disk": hard_disk}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kind", choices=sorted(KINDS), default="exponential")
    ap.add_argument("--a", type=float, default=1.0, help="shape scale parameter")
    ap.add_argument("--lam", type=float, default=1.0)
    ap.add_argument("--d", type=int, default=1, choices=(1, 2, 3))
    ap.add_argument("--radii", type=float, nargs="+", default=[0.5, 1, 2, 4, 8])
    args = ap.parse_args()

    g = KINDS[args.kind](args.a)
    full = limit_var_isolated(args.lam, g, args.d).value
    print(f"# {args.kind}(a={args.a}) lam={args.lam} d={args.d}")
    print(f"# full variance density: {full:.8f}")
    print(f"{'R':>8} {'truncated':>14} {'ratio':>14} {'|ratio-1|':>12}")
    for R in args.radii:
        truncated = limit_var_isolated(args.lam, make_variant(g, "inside", R=R), args.d).value
        rho = variance_ratio(args.lam, g, R, args.d).value
        print(f"{R:8.3f} {truncated:14.8f} {rho:14.8f} {abs(rho - 1):12.3e}")


if __name__ == "__main__":
    main()
