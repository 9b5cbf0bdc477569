import math

import pytest

from pwchaos.errors import NoCrossing, SlidingDetected
from pwchaos.expression import Expression
from pwchaos.integrator import (CROSSING, NEAR_ORIGIN, OMEGA_ZERO, IntegratorOptions,
                                flow_to_section, integrate)
from pwchaos.system import MINUS, PLUS, PiecewiseSystem


def test_homoclinic_loop_single_crossing(ex1):
    s, hom = ex1
    tr = integrate(s, -3.0, hom(-3.0), 3.0, 0.0)
    cross = tr.crossings()
    assert len(cross) == 1
    ev = cross[0]
    assert abs(ev.time) < 1e-6
    assert ev.point == pytest.approx((1.0, 0.0), abs=1e-6)
    assert (ev.from_region, ev.to_region) == (MINUS, PLUS)
    assert ev.trans_plus > 0 and ev.trans_minus > 0
    assert abs(s.G(*ev.point)) < 1e-12
    t, x, y = tr.final
    assert math.hypot(x - hom(3.0)[0], y - hom(3.0)[1]) < 1e-6


def test_equilibrium_is_constant(ex1):
    tr = integrate(ex1[0], 0.0, (0.0, 0.0), 5.0, 0.0)
    assert not tr.events
    assert set(tr.x) == {0.0} and set(tr.y) == {0.0}


def test_backward_branch_has_no_events(ex1):
    s, hom = ex1
    tr = integrate(s, -3.0, hom(-3.0), -6.0, 0.0)
    assert not tr.events
    t, x, y = tr.final
    assert t == -6.0
    assert math.hypot(x - hom(-6.0)[0], y - hom(-6.0)[1]) < 1e-6
    assert all(a > b for a, b in zip(tr.t, tr.t[1:]))


def test_event_invariants_on_long_orbit(ex1):
    s, _ = ex1
    tr = integrate(s, 0.0, (0.999, 0.0), 60.0, 1e-3)
    cross = tr.crossings()
    assert len(cross) >= 3
    for ev in cross:
        assert abs(s.G(*ev.point)) < 1e-12
        assert (ev.trans_plus > 0) == (ev.trans_minus > 0)
    assert all(a.to_region == b.from_region for a, b in zip(cross, cross[1:]))
    assert all(a < b for a, b in zip(tr.t, tr.t[1:]))


def test_tolerance_halving_moves_events_little(ex1):
    s, hom = ex1
    a = integrate(s, -3.0, hom(-3.0), 3.0, 0.0).crossings()[0].time
    tight = IntegratorOptions(rel_tol=5e-11, abs_tol=5e-13)
    b = integrate(s, -3.0, hom(-3.0), 3.0, 0.0, tight).crossings()[0].time
    assert abs(a - b) < 10 * 1e-10 * max(abs(a), 1.0)


def test_reversibility(ex1):
    s, hom = ex1
    x0 = hom(-4.0)
    fwd = integrate(s, -4.0, x0, -1.0, 0.0)
    back = integrate(s, -1.0, fwd.final[1:], -4.0, 0.0)
    assert math.hypot(back.final[1] - x0[0], back.final[2] - x0[1]) < 100 * 1e-10 * math.hypot(*x0)


def test_sliding_is_reported():
    p = Expression.parse
    # both one-sided fields push toward y = 0
    s = PiecewiseSystem((p("1"), p("1")), (p("1"), p("-1")), (p("0"), p("0")), p("-y"))
    with pytest.raises(SlidingDetected):
        integrate(s, 0.0, (0.0, -0.5), 2.0, 0.0)


def test_inside_loop_orbit_reaches_near_origin_segment(ex1):
    s, _ = ex1
    ev, _ = flow_to_section(s, 0.0, (0.99, 0.0), 0.0, 1, NEAR_ORIGIN)
    assert ev.kind == CROSSING and math.hypot(*ev.point) < 0.1


def test_on_the_leaves_no_crossing(ex1):
    s, hom = ex1
    with pytest.raises(NoCrossing):
        flow_to_section(s, 0.0, hom(0.0), 0.0, 1, OMEGA_ZERO, budget=20.0, region=PLUS)
    with pytest.raises(NoCrossing):
        flow_to_section(s, 0.0, hom(0.0), 0.0, -1, OMEGA_ZERO, budget=20.0, region=MINUS)
