import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pwchaos.errors import SpectralError
from pwchaos.expression import Expression
from pwchaos.spectral import (analyze_origin, derived_constants, f2_labeling, gap_constant,
                              jacobian, ogap, winding_number)
from pwchaos.system import MINUS, PLUS, PiecewiseSystem, builtin_example

R2 = 1 / math.sqrt(2)


def _linear(a, b, c, d, a2=None, b2=None, c2=None, d2=None, G="-y"):
    """Piecewise-linear system; the second matrix defaults to the first."""
    p = Expression.parse
    fp = (p(f"{a}*x + {b}*y"), p(f"{c}*x + {d}*y"))
    m = (a2, b2, c2, d2) if a2 is not None else (a, b, c, d)
    fm = (p(f"{m[0]}*x + {m[1]}*y"), p(f"{m[2]}*x + {m[3]}*y"))
    return PiecewiseSystem(fp, fm, (p("0"), p("0")), p(G))


def test_ex1_eigendata(ex1):
    r = analyze_origin(*ex1)
    assert (r.lambdaUPlus, r.lambdaSPlus, r.lambdaUMinus, r.lambdaSMinus) == \
        pytest.approx((1, -1, 1, -1), abs=1e-14)
    assert r.vUPlus == pytest.approx((-R2, -R2))
    assert r.vUMinus == pytest.approx((R2, R2))
    assert r.vSPlus == pytest.approx((R2, -R2))
    assert r.vSMinus == pytest.approx((-R2, R2))
    assert r.verdicts == {"F0": True, "F1": True, "F2": True, "K": True}
    assert r.scenario in (1, 2)
    assert r.hypotheses_hold


def test_ex1_constants(ex1):
    k = derived_constants(analyze_origin(*ex1))
    assert k.sigmaLo == k.sigmaHi == 0.5
    assert (k.K0, k.nu0) == (3.0, 1.0)
    assert gap_constant(k, 1e-3, 1.0) == pytest.approx(6 * math.log(1000))
    assert ogap(k, 1e-3, 1.0) == 43
    assert k.sigmaLo <= k.sigmaHi < 1
    assert k.mu0 == pytest.approx(0.25 * min(k.SigmaFwdPlus, k.SigmaBwdMinus, k.sigmaLo ** 2))


def test_axis_aligned_eigenvectors_fail_F1():
    r = analyze_origin(_linear(1, 0, 0, -1))
    assert r.verdicts["F1"] is False


def test_complex_eigenvalues_fail_F0():
    r = analyze_origin(_linear(0, 1, -1, 0))
    assert r.verdicts["F0"] is False
    with pytest.raises(SpectralError):
        analyze_origin(_linear(0, 1, -1, 0), strict=True)
    with pytest.raises(SpectralError):
        derived_constants(r)


def test_balanced_saddle_constants():
    # lambda_u = |lambda_s| = 2 on both sides
    k = derived_constants(analyze_origin(_linear(0, 2, 2, 0)))
    assert k.sigmaFwd == pytest.approx(1) and k.sigmaBwd == pytest.approx(1)
    assert k.sigmaFwdPlus == pytest.approx(0.5) and k.sigmaBwdMinus == pytest.approx(0.5)


def test_time_scaling_leaves_sigma_and_divides_Sigma(ex1):
    s = ex1[0]
    p = Expression.parse
    fast = PiecewiseSystem(tuple(p(f"2*({c})") for c in s.f_plus),
                           tuple(p(f"2*({c})") for c in s.f_minus), s.g, s.G)
    k1 = derived_constants(analyze_origin(s, ex1[1]))
    k2 = derived_constants(analyze_origin(fast, ex1[1]))
    for name in ("sigmaFwd", "sigmaBwd", "sigmaLo", "sigmaHi", "sigmaFwdPlus"):
        assert getattr(k2, name) == pytest.approx(getattr(k1, name))
    for name in ("SigmaFwd", "SigmaBwd", "SigmaLo", "SigmaHi"):
        assert getattr(k2, name) == pytest.approx(getattr(k1, name) / 2)


def test_finite_difference_step_halving(ex1):
    s = ex1[0]
    for region in (PLUS, MINUS):
        a = jacobian(s, region, step=1e-6, force_fd=True)
        b = jacobian(s, region, step=5e-7, force_fd=True)
        exact = jacobian(s, region)
        assert abs(a - b).max() < 1e-6
        assert abs(a - exact).max() < 1e-6


@given(st.floats(0.2, 5), st.floats(0.2, 5), st.floats(0.2, 5), st.floats(0.2, 5))
def test_reciprocal_rows(lu_p, ls_p, lu_m, ls_m):
    # diagonal saddles rotated by 45 degrees keep F1 non-degenerate
    def mat(lu, ls):
        return ((lu - ls) / 2, -(lu + ls) / 2, -(lu + ls) / 2, (lu - ls) / 2)
    r = analyze_origin(_linear(*mat(lu_p, ls_p), *mat(lu_m, ls_m)))
    k = derived_constants(r)
    assert k.sigmaFwdPlus * k.sigmaBwdPlus == pytest.approx(1)
    assert k.sigmaFwdMinus * k.sigmaBwdMinus == pytest.approx(1)
    assert k.K0 == pytest.approx(3 * k.SigmaHi / (2 * k.sigmaLo))
    assert k.nu0 == pytest.approx(max(3 * k.sigmaHi - 1, 1))


def test_f2_labelings():
    ok, label = f2_labeling((-R2, -R2), (R2, R2), (R2, -R2), (-R2, R2))
    assert ok and label == "vS+ in Pi1, vS- in Pi2"
    ok, _ = f2_labeling((-R2, -R2), (R2, R2), (R2, -R2), (1, 0.4))
    assert not ok


def test_violators(violators):
    for n, (s, hom) in violators.items():
        r = analyze_origin(s, hom)
        assert r.verdicts["F0"] and r.verdicts["F1"] and r.verdicts["K"]
        assert r.verdicts["F2"] is False
        assert r.scenario == n
        assert not r.hypotheses_hold


def test_winding_number_square():
    sq = [(0, 0), (1, 0), (1, 1), (0, 1)]
    assert winding_number((0.5, 0.5), sq) != 0
    assert winding_number((1.5, 0.5), sq) == 0


def test_exgen_shares_ex1_linearization():
    a = analyze_origin(*builtin_example("exgen", {"r": 2}))
    b = analyze_origin(*builtin_example("ex1"))
    assert a.lambdaUPlus == b.lambdaUPlus and a.scenario == b.scenario
