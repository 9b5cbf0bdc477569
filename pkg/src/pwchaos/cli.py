"""Command-line entry point: ``pwchaos <subcommand> <config> [options]``.

Every run writes its outputs plus ``manifest.json`` into ``--outdir`` and echoes the
main report on stdout. Computation errors exit with status 1 and a JSON diagnostic on
stderr; usage errors exit with status 2.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import random
import subprocess
import sys
import time
from pathlib import Path

from . import __version__
from .errors import PwChaosError
from .system import EXAMPLE_NAMES, builtin_example, parse_system, region_name, system_to_config

CSV_DIGITS = 17


# ------------------------------------------------------------------ formatting

def _num(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, f".{CSV_DIGITS}g")
    return str(v)


def write_csv(path: Path, header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(v) for v in row])
    text = buf.getvalue()
    path.write_text(text, encoding="utf-8")
    return text


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "to_dict"):
        return _jsonable(obj.to_dict())
    if isinstance(obj, (str, int, float, bool)) or obj is None:
        return obj
    return str(obj)


def dump_json(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


# ------------------------------------------------------------------ config loading

def _parse_params(text: str) -> dict:
    params = {}
    for item in filter(None, text.split(",")):
        key, _, value = item.partition("=")
        try:
            params[key] = int(value)
        except ValueError:
            params[key] = value
    return params


def load_config(source: str):
    """A config file path, or a built-in example written ``name`` or ``name:key=value,...``."""
    path = Path(source)
    if path.is_file():
        text = path.read_text(encoding="utf-8")
        sys_, hom = parse_system(text)
        return sys_, hom, text
    name, _, params = source.partition(":")
    if name in EXAMPLE_NAMES:
        sys_, hom = builtin_example(name, _parse_params(params))
        return sys_, hom, system_to_config(sys_, hom)
    raise _Usage(f"config {source!r} is neither a file nor a built-in example "
                 f"({', '.join(EXAMPLE_NAMES)})")


class _Usage(Exception):
    pass


def _need_homoclinic(hom):
    if hom is None:
        raise _Usage("this subcommand needs a [homoclinic] section in the config")
    return hom


def _threads(args) -> int:
    if args.threads is not None:
        return max(1, args.threads)
    env = os.environ.get("PWCHAOS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise _Usage(f"PWCHAOS_THREADS must be an integer, got {env!r}") from None
    return 1


def _pair(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError("expected two comma-separated numbers")
    return float(parts[0]), float(parts[1])


# ------------------------------------------------------------------ subcommands

def cmd_analyze(args, ctx):
    from .spectral import analyze_origin, derived_constants, ogap
    sys_, hom = ctx["system"], ctx["homoclinic"]
    report = analyze_origin(sys_, hom)
    out = {"report": report.to_dict(), "hypothesesHold": report.hypotheses_hold}
    if report.verdicts.get("F0"):
        consts = derived_constants(report)
        out["constants"] = consts.to_dict()
        out["ogap"] = ogap(consts, args.eps, args.nu if args.nu is not None else consts.nu0)
    text = dump_json(out)
    ctx["write"]("analyze.json", text)
    return text


def cmd_integrate(args, ctx):
    from .integrator import integrate
    traj = integrate(ctx["system"], args.t0, args.x0, args.t1, args.eps)
    rows = ((t, x, y, region_name(r), flag) for t, x, y, r, flag in traj.rows())
    text = ctx["csv"]("integrate.csv", ["t", "x", "y", "region", "eventFlag"], rows)
    ctx["write"]("events.json", dump_json({"events": traj.events, "stats": traj.stats}))
    return text


def cmd_melnikov(args, ctx):
    from .melnikov import MelnikovOptions, melnikov_profile
    hom = _need_homoclinic(ctx["homoclinic"])
    prof = melnikov_profile(ctx["system"], hom, args.start, args.stop, args.step,
                            MelnikovOptions(mode=args.mode), deriv=args.deriv,
                            threads=_threads(args))
    return ctx["csv"]("melnikov.csv", ["tau", "M", "Mprime", "err"], prof.rows())


def _sequence_config(args, count):
    from .melnikov import MelnikovOptions
    from .pipeline import SequenceConfig
    return SequenceConfig(eps=args.eps, nu=args.nu, mode=args.seq_mode, count=count,
                          cBar=args.cbar, spacing=args.spacing, step=args.profile_step,
                          melnikov=MelnikovOptions(mode=args.melnikov_mode),
                          threads=_threads(args))


def cmd_sequence(args, ctx):
    from .pipeline import build_sequence
    hom = _need_homoclinic(ctx["homoclinic"])
    seq, cert, zeros, _ = build_sequence(ctx["system"], hom, _sequence_config(args, args.count))
    out = seq.to_dict()
    out["lambda1"] = seq.Lambda1
    out["certificate"] = cert.to_dict()
    out["zeros"] = [vars(z) for z in zeros]
    text = dump_json(out)
    ctx["write"]("sequence.json", text)
    return text


def cmd_loopmap(args, ctx):
    from .leaves_loops import BACKWARD, FORWARD, LeafSolver, loop_map
    hom = _need_homoclinic(ctx["homoclinic"])
    solver = LeafSolver(ctx["system"], hom, args.eps)
    direction = FORWARD if args.direction == "forward" else BACKWARD
    n = args.samples
    if n < 1 or not 0 < args.dmin <= args.dmax:
        raise _Usage("need 0 < dmin <= dmax and samples >= 1")
    ratio = (args.dmax / args.dmin) ** (1 / (n - 1)) if n > 1 else 1.0
    ds = [args.dmax / ratio ** i for i in range(n)]
    rows = []
    for d in ds:
        r = loop_map(solver, d, args.tau, direction)
        b = r.boundsReport
        rows.append((d, r.tHalf, r.t1, r.d1, b["offsetLo"], b["offsetHi"], b["offsetPass"],
                     b["flyLo"], b["flyHi"], b["flyPass"]))
    header = ["d", "tHalf", "t1", "d1", "boundLo", "boundHi", "pass", "flyLo", "flyHi", "flyPass"]
    return ctx["csv"]("loopmap.csv", header, rows)


def _problem(args, ctx, depth):
    from .chaos import ChaosOptions, ChaosProblem, require_hypotheses
    from .pipeline import build_sequence
    hom = _need_homoclinic(ctx["homoclinic"])
    require_hypotheses(ctx["system"], hom)
    seq, *_ = build_sequence(ctx["system"], hom, _sequence_config(args, 2 * depth + 1))
    return ChaosProblem(ctx["system"], hom, seq, args.eps, ChaosOptions(shadow_tol=args.tol),
                        window_depth=depth)


def cmd_shadow(args, ctx):
    from .chaos import parse_symbols
    symbols = parse_symbols(args.symbols)
    problem = _problem(args, ctx, max(abs(j) for j in symbols))
    res = problem.glue(symbols, args.tol)
    traj = res.trajectory
    ctx["csv"]("trajectory.csv", ["t", "x", "y"], zip(traj.t, traj.x, traj.y))
    out = res.to_dict()
    out["sequence"] = problem.seq.to_dict()
    text = dump_json(out)
    ctx["write"]("shadow.json", text)
    return text


def cmd_bernoulli(args, ctx):
    from .chaos import all_windows, bernoulli_check, parse_symbols, window_label
    problem = _problem(args, ctx, args.depth)
    windows = [parse_symbols(w) for w in args.windows] if args.windows else all_windows(args.depth)
    # the seed only permutes the gluing order; rows are reported in canonical order
    order = list(windows)
    random.Random(args.seed).shuffle(order)
    results = {}
    for w in order:
        results[window_label(w)] = problem.glue(w, args.tol)
    report = bernoulli_check(problem, args.depth, windows, args.tol, results)
    ctx["csv"]("bernoulli.csv", ["window", "psi", "psiOfImage", "shiftOfPsi", "commutes"],
               ([r["window"], r["psi"], r["psiOfImage"], r["shiftOfPsi"], r["commutes"]]
                for r in report.rows))
    out = report.to_dict()
    out["alphas"] = {k: r.alphas for k, r in results.items()}
    out["verified"] = {k: r.verified for k, r in results.items()}
    text = dump_json(out)
    ctx["write"]("bernoulli.json", text)
    return text


def cmd_selftest(args, ctx):
    root = Path(__file__).resolve().parents[2]
    target = root / "tests" / "test_acceptance.py"
    if not target.is_file():
        raise _Usage(f"acceptance suite not found at {target}; run from a source checkout")
    proc = subprocess.run([sys.executable, "-m", "pytest", str(target), "-q", "-s"],
                          cwd=root, capture_output=True, text=True)
    ctx["write"]("selftest.txt", proc.stdout + proc.stderr)
    ctx["status"] = 0 if proc.returncode == 0 else 1
    return proc.stdout


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    from .melnikov import FULL_TRACE, MODES, TRACE_FREE
    from .recurrence import TAND_KNU, TAND_KNU_NEW

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--outdir", default="pwchaos-out", help="directory for outputs")
    common.add_argument("--seed", type=int, default=0,
                        help="reserved; only permutes evaluation order")
    common.add_argument("--threads", type=int, default=None,
                        help="worker processes (fallback: PWCHAOS_THREADS, else 1)")
    common.add_argument("--quiet", action="store_true", help="do not echo the report")

    with_cfg = argparse.ArgumentParser(add_help=False, parents=[common])
    with_cfg.add_argument("config", help="config file or built-in example (e.g. exgen:r=3)")

    seq_opts = argparse.ArgumentParser(add_help=False)
    seq_opts.add_argument("--eps", type=float, default=1e-3)
    seq_opts.add_argument("--nu", type=float, default=None, help="default: nu0")
    seq_opts.add_argument("--mode", dest="seq_mode", choices=(TAND_KNU, TAND_KNU_NEW),
                          default=TAND_KNU)
    seq_opts.add_argument("--spacing", type=float, default=None,
                          help="uniform T_j spacing; default greedy minimal gaps")
    seq_opts.add_argument("--cbar", type=float, default=0.1)
    seq_opts.add_argument("--profile-step", type=float, default=0.05)
    seq_opts.add_argument("--melnikov-mode", choices=MODES, default=FULL_TRACE)

    p = argparse.ArgumentParser(prog="pwchaos", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"pwchaos {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", parents=[with_cfg], help="spectral data and constants")
    a.add_argument("--eps", type=float, default=1e-3)
    a.add_argument("--nu", type=float, default=None)
    a.set_defaults(func=cmd_analyze)

    i = sub.add_parser("integrate", parents=[with_cfg], help="event-located trajectory CSV")
    i.add_argument("--x0", type=_pair, required=True, metavar="X,Y")
    i.add_argument("--t0", type=float, default=0.0)
    i.add_argument("--t1", type=float, required=True)
    i.add_argument("--eps", type=float, default=0.0)
    i.set_defaults(func=cmd_integrate)

    m = sub.add_parser("melnikov", parents=[with_cfg], help="Melnikov profile CSV")
    m.add_argument("--from", dest="start", type=float, required=True)
    m.add_argument("--to", dest="stop", type=float, required=True)
    m.add_argument("--step", type=float, required=True)
    m.add_argument("--mode", choices=MODES, default=TRACE_FREE)
    m.add_argument("--deriv", action="store_true")
    m.set_defaults(func=cmd_melnikov)

    s = sub.add_parser("sequence", parents=[with_cfg, seq_opts], help="admissible T_j")
    s.add_argument("--count", type=int, default=3)
    s.set_defaults(func=cmd_sequence)

    lm = sub.add_parser("loopmap", parents=[with_cfg], help="loop map samples CSV")
    lm.add_argument("--eps", type=float, default=0.0)
    lm.add_argument("--tau", type=float, default=0.0)
    lm.add_argument("--dmin", type=float, default=1e-8)
    lm.add_argument("--dmax", type=float, default=1e-4)
    lm.add_argument("--samples", type=int, default=5)
    lm.add_argument("--direction", choices=("forward", "backward"), default="forward")
    lm.set_defaults(func=cmd_loopmap)

    sh = sub.add_parser("shadow", parents=[with_cfg, seq_opts], help="glue one symbol window")
    sh.add_argument("--symbols", required=True, help="odd-length binary word, centre 1")
    sh.add_argument("--tol", type=float, default=0.05)
    sh.set_defaults(func=cmd_shadow)

    b = sub.add_parser("bernoulli", parents=[with_cfg, seq_opts], help="shift commutation")
    b.add_argument("--depth", type=int, default=1, choices=(1, 2, 3))
    b.add_argument("--windows", nargs="*", default=None, help="subset, e.g. 111 010")
    b.add_argument("--tol", type=float, default=0.05)
    b.set_defaults(func=cmd_bernoulli)

    st = sub.add_parser("selftest", parents=[common], help="run the acceptance suite")
    st.set_defaults(func=cmd_selftest)
    return p


# ------------------------------------------------------------------ dispatch

def _params(args) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in sorted(vars(args).items())
            if k not in ("func", "quiet", "outdir")}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)   # exits 2 on usage errors
    outdir = Path(args.outdir)
    start = time.perf_counter()
    files: list[str] = []
    ctx: dict = {"status": 0}
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        config_text = ""
        if hasattr(args, "config"):
            ctx["system"], ctx["homoclinic"], config_text = load_config(args.config)

        def write(name, text):
            (outdir / name).write_text(text, encoding="utf-8")
            files.append(name)

        def to_csv(name, header, rows):
            files.append(name)
            return write_csv(outdir / name, header, rows)
        ctx["write"], ctx["csv"] = write, to_csv
        report = args.func(args, ctx)
    except _Usage as exc:
        parser.error(str(exc))
    except (PwChaosError, ValueError, ArithmeticError) as exc:
        diag = exc.to_dict() if isinstance(exc, PwChaosError) else {
            "error": type(exc).__name__, "message": str(exc)}
        diag["command"] = args.command
        sys.stderr.write(dump_json(diag))
        return 1
    manifest = {
        "subcommand": args.command, "parameters": _params(args),
        "configHash": hashlib.sha256(config_text.encode()).hexdigest(),
        "toolVersion": __version__, "wallTime": time.perf_counter() - start,
        "outputs": files, "status": ctx["status"],
    }
    (outdir / "manifest.json").write_text(dump_json(manifest), encoding="utf-8")
    if not args.quiet:
        sys.stdout.write(report)
    return ctx["status"]


if __name__ == "__main__":
    sys.exit(main())
