"""Chaos-search units. Tests that need glued orbits reuse the session fixtures."""
import math

import gmpy2
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pwchaos.chaos import (ChaosProblem, MergedTrajectory, all_windows, infer_coding,
                           parse_symbols, shift_metric, verify_property_C, window_label,
                           zero_orbit)
from pwchaos.errors import ConfigError, HypothesisFailure, MissingCrossing
from pwchaos.expression import Expression
from pwchaos.pipeline import summarize_glues
from pwchaos.recurrence import TAND_KNU, TimeSequence
from pwchaos.system import PiecewiseSystem

WINDOW = st.dictionaries(st.integers(-6, 6), st.integers(0, 1), max_size=13)


def _seq(n=3, spacing=43.0):
    idx = range(-n, n + 1)
    return TimeSequence({j: spacing * j for j in idx},
                        {j: (spacing * j - 0.25, spacing * j + 0.25) for j in idx},
                        {j: 0.5 for j in idx}, TAND_KNU, 1.0, 1e-3, 3.0)


# -- symbols and metric ---------------------------------------------------

def test_parse_symbols():
    assert parse_symbols("101") == {-1: 1, 0: 0, 1: 1}
    assert parse_symbols("1") == {0: 1}
    for bad in ("", "10", "1a1"):
        with pytest.raises(ValueError):
            parse_symbols(bad)


def test_all_windows():
    assert [window_label(w) for w in all_windows(1)] == ["010", "011", "110", "111"]
    assert len(all_windows(2)) == 16
    assert all(w[0] == 1 for w in all_windows(3))


@pytest.mark.parametrize("m", [-3, -1, 0, 2, 5])
def test_metric_single_difference(m):
    a = {j: 1 for j in range(-6, 7)}
    b = dict(a)
    b[m] = 0
    assert shift_metric(a, b) == 2.0 ** (-abs(m) - 1)


@given(WINDOW, WINDOW, WINDOW)
def test_metric_axioms(a, b, c):
    assert shift_metric(a, a) == 0
    assert shift_metric(a, b) == shift_metric(b, a)
    assert shift_metric(a, c) <= shift_metric(a, b) + shift_metric(b, c) + 1e-15
    assert shift_metric(a, b) <= 1.5


# -- refusal and validation -----------------------------------------------

def test_refuses_f2_violators(violators):
    for s, hom in violators.values():
        with pytest.raises(HypothesisFailure) as info:
            ChaosProblem(s, hom, _seq(), 1e-3)
        assert info.value.details["verdicts"]["F2"] is False


def test_needs_straight_switching_line(ex1):
    s, hom = ex1
    bent = PiecewiseSystem(s.f_plus, s.f_minus, s.g, Expression.parse("-y + 0.01*x^2*(x - 1)^2"))
    with pytest.raises(ConfigError):
        ChaosProblem(bent, hom, _seq(), 1e-3)


def test_sequence_must_cover_window(ex1):
    with pytest.raises(ValueError):
        ChaosProblem(*ex1, _seq(n=2), 1e-3, window_depth=1)


def test_glue_needs_centre_one(ex1):
    p = ChaosProblem(*ex1, _seq(), 1e-3)
    with pytest.raises(ValueError):
        p.glue({-1: 1, 0: 0, 1: 1})
    with pytest.raises(ValueError):
        p.glue({-2: 1, 0: 1})


# -- property C -----------------------------------------------------------

def test_zero_solution_passes_property_C(ex1):
    p = ChaosProblem(*ex1, _seq(), 1e-3)
    traj = zero_orbit(p)
    reps = verify_property_C(traj, p.seq, {-1: 0, 0: 0, 1: 0}, ex1[1], 0.0)
    assert all(r.passed and r.sup == 0.0 for r in reps)


def test_missing_crossing(ex1):
    p = ChaosProblem(*ex1, _seq(), 1e-3)
    with pytest.raises(MissingCrossing):
        verify_property_C(zero_orbit(p), p.seq, {0: 1}, ex1[1], 0.05)
    rep = verify_property_C(zero_orbit(p), p.seq, {0: 1}, ex1[1], 0.05, raise_missing=False)
    assert not rep[0].passed and rep[0].reason == "missing crossing"


def test_property_C_on_sampled_homoclinic(ex1):
    s, hom = ex1
    seq = _seq()
    t = [-60 + 0.05 * k for k in range(2401)]
    xs = [hom(v)[0] for v in t]
    ys = [hom(v)[1] for v in t]
    traj = MergedTrajectory(t, xs, ys, [0.0], [])
    reps = verify_property_C(traj, seq, {-1: 0, 0: 1, 1: 0}, hom, 0.05)
    assert [r.passed for r in reps] == [True, True, True]
    assert reps[1].alpha == 0.0 and reps[1].sup == 0.0
    assert infer_coding(traj, seq, [-1, 0, 1], hom, 0.05) == {-1: 0, 0: 1, 1: 0}


# -- glued orbits (session fixtures) ---------------------------------------

def test_glued_orbits_verified(ex1_depth1):
    for label, res in ex1_depth1.items():
        assert res.verified, label
        assert res.windows and all(w.passed for w in res.windows)


def test_rotated_symbols_fail(ex1_depth1, ex1):
    p = ex1_depth1.problem
    for label in ("110", "011", "010"):
        res = ex1_depth1[label]
        rotated = dict(zip(sorted(res.symbols), label[1:] + label[0]))
        reps = verify_property_C(res.trajectory, p.seq, rotated, ex1[1], 0.05,
                                 raise_missing=False)
        assert not all(r.passed for r in reps), label


def test_nested_intervals_shrink(ex1_depth1, ex1_depth2):
    for results in (ex1_depth1, ex1_depth2):
        for res in results.values():
            assert res.diagnostics["nestedShrink"]
            for side, widths in res.diagnostics["nestedWidths"].items():
                assert len(widths) == len(res.nestedIntervals[side])
                assert all(w1 > w2 > 0 for w1, w2 in zip(widths, widths[1:]))


def _exact(res):
    return [gmpy2.mpfr(v, 600) for v in res.xiExact.split(",")]


def _resolution(res):
    return min(w[-1] for w in res.diagnostics["nestedWidths"].values())


def test_distinct_codings_separate(ex1_depth1):
    # (tau*, xi*) differ far below double resolution in xi, so compare exact values
    res = list(ex1_depth1.values())
    for i, a in enumerate(res):
        for b in res[i + 1:]:
            gap = max(abs(u - v) for u, v in zip(_exact(a), _exact(b)))
            gap = max(gap, abs(a.tauStar - b.tauStar))
            assert gap > min(_resolution(a), _resolution(b)), (a.symbols, b.symbols)


def test_glue_residual_and_recheck(ex1_depth1):
    for res in ex1_depth1.values():
        d = res.diagnostics
        assert abs(d["glueResidual"]) <= d["glueTolerance"]
        assert max(map(abs, d["recheck"])) < 1e-30


def test_reversal_symmetry(ex1_depth1):
    # the loop example is reversible, so forward and backward offsets mirror each other
    a, b = ex1_depth1["110"], ex1_depth1["011"]
    assert a.alphas[-1] == pytest.approx(-b.alphas[1], abs=1e-12)


def test_mid_gap_smallness(ex1_depth1):
    res = ex1_depth1["111"]
    traj = res.trajectory
    p = ex1_depth1.problem
    for j in (-1, 0):
        lo, hi = p.seq.T[2 * j] + 15, p.seq.T[2 * j + 2] - 15
        mid = [math.hypot(x, y) for t, x, y in zip(traj.t, traj.x, traj.y) if lo <= t <= hi]
        assert max(mid) < 10 * 1e-3
        inner = [c for c in traj.inner if p.seq.T[2 * j] < c < p.seq.T[2 * j + 2]]
        assert len(inner) == 1


def test_envelope_summary(ex1_depth1):
    s = summarize_glues(1e-3, ex1_depth1)
    assert s["windows"] == ["010", "011", "110", "111"] and s["allPass"]
    assert 0 < s["omega"] < 0.05 and s["omegaAlpha"] <= 0.5
