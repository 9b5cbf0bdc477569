"""Shadowing envelopes of ex1 over eps: worst sup distance and worst |alpha_j| per eps.

Each eps uses the sequence spacing ogap(eps); expect several minutes per eps value.
"""
import argparse
import json
import time

from pwchaos.pipeline import epsilon_sweep
from pwchaos.system import builtin_example


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps", type=float, nargs="+", default=[1e-3, 5e-4, 2.5e-4])
    ap.add_argument("--example", default="ex1")
    args = ap.parse_args()
    t0 = time.perf_counter()
    out = epsilon_sweep(*builtin_example(args.example), args.eps)
    for r in out["rows"]:
        print(f"eps={r['eps']:<8g} spacing={r['spacing']:<6g} omega={r['omega']:.3e} "
              f"omegaAlpha={r['omegaAlpha']:.3e} allPass={r['allPass']}")
    print("largest passing eps:", out["largestPassing"],
          f"({time.perf_counter() - t0:.0f} s)")
    print(json.dumps(out, indent=1))


if __name__ == "__main__":
    main()
