import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pwchaos.errors import MelnikovError
from pwchaos.expression import Expression
from pwchaos.melnikov import (C1, FULL_TRACE, TRACE_FREE, MelnikovIntegrand, MelnikovOptions,
                              closed_form_A, closed_form_M, melnikov_at, melnikov_deriv_at,
                              melnikov_profile, transversality_factors, uniform_grid)
from pwchaos.system import builtin_example

FREE = MelnikovOptions(mode=TRACE_FREE)
FULL = MelnikovOptions(mode=FULL_TRACE)


def test_closed_form_values():
    assert closed_form_A(3, 0.25) == pytest.approx(6 / (4 * math.pi ** 2 + 9))
    assert closed_form_A(2, 0.0) == 0.0
    assert closed_form_A(2, 0.25) == pytest.approx(4 / (4 * math.pi ** 2 + 4))
    assert closed_form_M(0.25) == pytest.approx(C1)
    pi2 = math.pi ** 2
    assert C1 == pytest.approx((8 * pi2 + 3) / ((4 * pi2 + 9) * (pi2 + 1)), rel=1e-15)
    assert C1 == pytest.approx(0.155533, abs=1e-6) and C1 > 2 / 13
    with pytest.raises(ValueError):
        closed_form_A(0, 0.1)


def test_trace_free_matches_closed_form(ex1):
    assert melnikov_at(*ex1, 0.25, FREE)[0] == pytest.approx(C1, abs=1e-10)
    assert abs(melnikov_at(*ex1, 0.0, FREE)[0]) < 1e-10
    assert melnikov_deriv_at(*ex1, 0.0, FREE)[0] == pytest.approx(2 * math.pi * C1, abs=1e-8)


def test_full_trace_pinned_value(ex1):
    # the divergence of the example fields is +-2x, so the weighted integral differs
    val = melnikov_at(*ex1, 0.25, FULL)[0]
    assert val == pytest.approx(0.11657778689, abs=1e-9)
    assert abs(melnikov_at(*ex1, 0.0, FULL)[0]) < 1e-10


def test_zero_perturbation_gives_zero():
    s, hom = builtin_example("unperturbed")
    assert melnikov_at(s, hom, 0.37)[0] == 0.0
    prof = melnikov_profile(s, hom, -1, 1, 0.5)
    assert prof.values == [0.0] * 5


def test_profile_is_periodic(ex1):
    a = melnikov_profile(*ex1, 0.0, 1.0, 0.125, FULL)
    b = melnikov_profile(*ex1, 1.0, 2.0, 0.125, FULL)
    assert max(abs(u - v) for u, v in zip(a.values, b.values)) < 1e-8
    assert a.mode == FULL_TRACE and len(a.grid) == 9


def test_profile_grid_uniform_and_errors_small(ex1):
    prof = melnikov_profile(*ex1, -0.5, 0.5, 0.05, FREE, deriv=True)
    steps = {round(b - a, 12) for a, b in zip(prof.grid, prof.grid[1:])}
    assert steps == {0.05}
    assert max(prof.errors) < FREE.tol
    rows = list(prof.rows())
    assert len(rows[0]) == 4


def test_uniform_grid_has_no_drift():
    g = uniform_grid(0.0, 1.0, 0.01)
    assert len(g) == 101 and g[-1] == 1.0 and g[37] == 0.37


def test_threads_do_not_change_results(ex1):
    a = melnikov_profile(*ex1, 0.0, 0.5, 0.1, FULL, threads=1)
    b = melnikov_profile(*ex1, 0.0, 0.5, 0.1, FULL, threads=2)
    assert a.values == b.values


def test_finite_difference_derivative(ex1):
    ev = MelnikovIntegrand(*ex1, FULL)
    for a in (0.0, 0.13, 0.4):
        fd = (ev.evaluate(a + 1e-4)[0] - ev.evaluate(a - 1e-4)[0]) / 2e-4
        assert fd == pytest.approx(ev.evaluate(a, derivative=True)[0], abs=1e-5)


def test_truncation_doubling(ex1):
    base = MelnikovIntegrand(*ex1, FULL)
    longer = MelnikovIntegrand(*ex1, MelnikovOptions(mode=FULL_TRACE, t_cut=2 * base.t_cut))
    v1, e1 = base.evaluate(0.3)
    v2, _ = longer.evaluate(0.3)
    assert abs(v1 - v2) <= max(e1, 1e-12)


@settings(max_examples=15)
@given(st.floats(0.05, 9.0))
def test_exgen_is_odd(theta):
    s, hom = builtin_example("exgen", {"r": 2})
    ev = MelnikovIntegrand(s, hom, FREE)
    assert ev.evaluate(-theta)[0] == pytest.approx(-ev.evaluate(theta)[0], abs=1e-8)


def test_linear_in_g(ex1):
    s, hom = ex1
    doubled = s.with_perturbation((Expression.parse("2*x*sin(2*pi*t)"), s.g[1]))
    for mode in (FREE, FULL):
        for a in (0.1, 0.35):
            assert melnikov_at(doubled, hom, a, mode)[0] == pytest.approx(
                2 * melnikov_at(s, hom, a, mode)[0], rel=1e-10)


def test_exgen_derivatives():
    for r, want in ((2, 0.023), (3, -0.020)):
        s, hom = builtin_example("exgen", {"r": r})
        assert melnikov_deriv_at(s, hom, 0.0, FREE)[0] == pytest.approx(want, abs=0.002)


def test_transversality_factors(ex1):
    c = transversality_factors(*ex1)
    assert c == {1: 1.0, -1: 1.0}


def test_transversality_failure(ex1):
    s, hom = ex1
    p = Expression.parse
    bad = s.__class__((s.f_plus[0], p("-x + 2*x^2")), s.f_minus, s.g, s.G)
    with pytest.raises(MelnikovError):
        MelnikovIntegrand(bad, hom, FREE)


def test_bad_mode():
    with pytest.raises(ValueError):
        MelnikovOptions(mode="nope")
