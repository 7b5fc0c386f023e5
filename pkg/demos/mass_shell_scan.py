#!/usr/bin/env python3
"""Scan the bottom of the fiber spectrum E(P) along a momentum ray
and print the shell diagnostics: the quadratic squeeze
0 <= E(P) - E(0) <= |P|^2 / 2M, the Hellmann-Feynman gradient
against its finite-difference twin, midpoint convexity, and the
monotone ordering of the shells as the infrared mass drops.
"""

import argparse

import numpy as np

from nelsonlab.config import load_config
from nelsonlab.massshell import (convexity_check, scan_mass_shell,
                                 shell_bound_suite)
from nelsonlab.spectral import GroundStateCache


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, default=8, help="modes per axis")
    ap.add_argument("--n-max", type=int, default=3)
    ap.add_argument("--pmax", type=float, default=0.6)
    ap.add_argument("--count", type=int, default=9)
    ap.add_argument("--mu", type=float, nargs="+", default=[0.4, 0.2])
    args = ap.parse_args()

    cfg = load_config(env={})
    cache = GroundStateCache(tol=cfg.solver.tol)
    ray = np.linspace(-args.pmax, args.pmax, args.count)
    half = 0.5 / cfg.model.mass

    tables = {}
    for mu in args.mu:
        spec = cfg.build_spec(p=0.0, mu=mu, m=args.m, n_max=args.n_max)
        tables[mu] = scan_mass_shell(spec, ray, mu=mu, cache=cache,
                                     delta=True)

    for mu, table in tables.items():
        e0 = float(np.min(table.energy))
        print(f"mu = {mu}")
        print(f"  {'P':>6} {'E(P)':>12} {'E-E(0)':>10} {'|P|^2/2M':>10}"
              f" {'dE (HF)':>10} {'dE (FD)':>10} {'in I0':>5}")
        fd = table.grad_fd
        for i in range(table.size):
            p = table.p[i, 0]
            de = table.energy[i] - e0
            print(f"  {p:>6.2f} {table.energy[i]:>12.8f} {de:>10.6f}"
                  f" {half * p * p:>10.6f} {table.grad_hf[i, 0]:>10.6f}"
                  f" {fd[i, 0]:>10.6f} {str(bool(table.in_i0[i])):>5}")
        conv = convexity_check(table)
        print(f"  midpoint convexity: min margin "
              f"{conv['min_midpoint_margin']:+.3e}  ok={conv['ok']}")
        print()

    suite = shell_bound_suite(tables)
    for mu, rep in suite["per_mu"].items():
        print(f"mu = {mu}: lower margin {rep['shell_lower_margin']:+.3e}"
              f"  upper margin {rep['shell_upper_margin']:+.3e}"
              f"  sup|dE| in B = {rep['max_grad_in_b']:.4f}")
    if suite["mu_monotone_ok"] is not None:
        print(f"shells increase with mu: {suite['mu_monotone_ok']}"
              f" (min margin {suite['mu_monotone_margin']:+.3e})")


if __name__ == "__main__":
    main()
