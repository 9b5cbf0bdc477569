"""Shared fixtures. The expensive gluing runs are session-scoped and timed once."""
from __future__ import annotations

import time
from pathlib import Path

import pytest
from hypothesis import settings

from pwchaos.chaos import ChaosOptions, ChaosProblem, all_windows, parse_symbols, window_label
from pwchaos.pipeline import SequenceConfig, build_sequence
from pwchaos.system import builtin_example, load_system

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

# Subset of depth-2 windows glued for the commutation check (all 16 would exceed the budget).
DEPTH2_WINDOWS = ("11111", "10101", "00100")

_REPORT: list[str] = []


def record(criterion: str, passed: bool, detail: str) -> None:
    _REPORT.append(f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if _REPORT:
        terminalreporter.section("acceptance criteria")
        for line in _REPORT:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ex1():
    return builtin_example("ex1")


@pytest.fixture(scope="session")
def config_dir():
    return CONFIGS


@pytest.fixture(scope="session")
def violators():
    return {n: load_system(CONFIGS / f"f2_violator_scenario{n}.cfg") for n in (3, 4)}


class Timed(dict):
    """Results plus the wall time (seconds) spent producing them."""
    seconds: float = 0.0


@pytest.fixture(scope="session")
def ex1_depth1(ex1):
    """Every length-3 window with centre 1 glued on ex1, eps 1e-3, T_j = 43 j."""
    sys_, hom = ex1
    out = Timed()
    t0 = time.perf_counter()
    seq, *_ = build_sequence(sys_, hom, SequenceConfig(eps=1e-3, nu=1.0, spacing=43.0,
                                                       count=3, step=0.1))
    problem = ChaosProblem(sys_, hom, seq, 1e-3, ChaosOptions(), window_depth=1)
    for w in all_windows(1):
        out[window_label(w)] = problem.glue(w)
    out.seconds = time.perf_counter() - t0
    out.problem = problem
    return out


@pytest.fixture(scope="session")
def exgen0_alpha():
    """alpha_0 of the glued 010 orbit on exgen0 at eps and eps / 2 (greedy sequences)."""
    sys_, hom = builtin_example("exgen0")
    out = Timed()
    t0 = time.perf_counter()
    for eps in (1e-3, 5e-4):
        seq, *_ = build_sequence(sys_, hom, SequenceConfig(eps=eps, count=3, step=0.1))
        problem = ChaosProblem(sys_, hom, seq, eps, ChaosOptions(), window_depth=1)
        out[eps] = (seq, problem.glue(parse_symbols("010")))
    out.seconds = time.perf_counter() - t0
    return out


@pytest.fixture(scope="session")
def ex1_depth2(ex1):
    sys_, hom = ex1
    out = Timed()
    t0 = time.perf_counter()
    seq, *_ = build_sequence(sys_, hom, SequenceConfig(eps=1e-3, nu=1.0, spacing=43.0,
                                                       count=5, step=0.1))
    problem = ChaosProblem(sys_, hom, seq, 1e-3, ChaosOptions(), window_depth=2)
    for w in DEPTH2_WINDOWS:
        out[w] = problem.glue(parse_symbols(w))
    out.seconds = time.perf_counter() - t0
    out.problem = problem
    return out
