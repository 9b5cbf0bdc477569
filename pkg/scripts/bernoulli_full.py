"""Shift commutation on every depth-2 window of ex1 (16 glues, roughly 15 minutes)."""
import argparse
import json
import time
from pathlib import Path

from pwchaos.chaos import ChaosOptions, ChaosProblem, bernoulli_check
from pwchaos.pipeline import SequenceConfig, build_sequence
from pwchaos.system import builtin_example


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--depth", type=int, default=2)
    ap.add_argument("--out", type=Path, default=Path("scripts-out"))
    args = ap.parse_args()

    sys_, hom = builtin_example("ex1")
    t0 = time.perf_counter()
    seq, *_ = build_sequence(sys_, hom, SequenceConfig(spacing=43.0, count=2 * args.depth + 1,
                                                       step=0.1))
    problem = ChaosProblem(sys_, hom, seq, 1e-3, ChaosOptions(), window_depth=args.depth)
    rep = bernoulli_check(problem, args.depth)
    for row in rep.rows:
        print(row["window"], "commutes" if row["commutes"] else "FAILS")
    print(f"all pass: {rep.allPass}, zero fixed point: {rep.zeroFixedPoint}, "
          f"{time.perf_counter() - t0:.0f} s")
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / f"bernoulli_depth{args.depth}.json").write_text(
        json.dumps(rep.to_dict(), indent=2, default=str))


if __name__ == "__main__":
    main()
