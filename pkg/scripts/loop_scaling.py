"""Fly time and loop-map offsets near the saddle as the entry distance d shrinks."""
import argparse

from pwchaos.leaves_loops import BACKWARD, FORWARD, LeafSolver, fly_time_scaling, loop_map
from pwchaos.system import builtin_example


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--example", default="unperturbed")
    ap.add_argument("--eps", type=float, default=0.0)
    args = ap.parse_args()

    solver = LeafSolver(*builtin_example(args.example), args.eps)
    ds = [10.0 ** -k for k in range(3, 11)]
    for direction, name in ((FORWARD, "forward"), (BACKWARD, "backward")):
        res = fly_time_scaling(solver, 0.0, ds, direction)
        print(f"{name}: slope of fly time against |ln d| = {res['slope']:.4f}")
    print(f"{'d':>8} {'t1':>9} {'d1':>11} {'offset ok':>9} {'fly ok':>6}")
    for d in ds:
        r = loop_map(solver, d, 0.0, FORWARD)
        b = r.boundsReport
        print(f"{d:8.0e} {r.t1:9.4f} {r.d1:11.3e} {b['offsetPass']!s:>9} {b['flyPass']!s:>6}")


if __name__ == "__main__":
    main()
