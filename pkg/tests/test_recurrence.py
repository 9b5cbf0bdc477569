import math

import pytest

from pwchaos.errors import CertificateFails, WindowExhausted
from pwchaos.melnikov import (C1, TRACE_FREE, MelnikovIntegrand, MelnikovOptions,
                              MelnikovProfile, melnikov_profile)
from pwchaos.recurrence import (TAND_KNU, TAND_KNU_NEW, P1Certificate, build_time_sequence,
                                check_admissible, locate_zeros, omega_envelope, verify_P1)
from pwchaos.spectral import analyze_origin, derived_constants
from pwchaos.system import builtin_example

FREE = MelnikovOptions(mode=TRACE_FREE)


@pytest.fixture(scope="module")
def ex1_profile(ex1):
    return melnikov_profile(*ex1, -4.0, 4.0, 0.05, FREE)


@pytest.fixture(scope="module")
def ex1_parts(ex1, ex1_profile):
    cert = verify_P1(ex1_profile, 0.1)
    ev = MelnikovIntegrand(*ex1, FREE)
    f = lambda t: ev.evaluate(t)[0]
    zeros = locate_zeros(ex1_profile, cert, f)
    consts = derived_constants(analyze_origin(*ex1))
    return cert, zeros, consts, f


def _synthetic(fn, lo, hi, step):
    n = round((hi - lo) / step)
    grid = [lo + i * step for i in range(n + 1)]
    return MelnikovProfile(grid, [fn(t) for t in grid], None, 0.0, [0.0] * len(grid), "test")


def test_ex1_certificate(ex1_parts):
    cert = ex1_parts[0]
    for i, b in cert.b.items():
        assert b == pytest.approx(-0.25 + i / 2, abs=1e-9)
        assert (cert.values[i] < -0.1) if i % 2 == 0 else (cert.values[i] > 0.1)
    idx = cert.indices
    assert all(cert.b[j] - cert.b[i] >= 0.1 for i, j in zip(idx, idx[1:]))


def test_ex1_zeros_and_slopes(ex1_parts):
    zeros = ex1_parts[1]
    assert len(zeros) >= 14
    for z in zeros:
        assert z.zero == pytest.approx(round(2 * z.zero) / 2, abs=1e-10)
        assert abs(z.slope) == pytest.approx(2 * math.pi * C1, rel=1e-6)
        assert abs(z.value) <= 1e-8 * 0.1


def test_linear_profile_zero():
    prof = _synthetic(lambda t: t, -1.0, 1.0, 0.1)
    cert = P1Certificate(0.5, {0: -1.0, 1: 1.0}, {0: -1.0, 1: 1.0}, (-1.0, 1.0))
    (z,) = locate_zeros(prof, cert, lambda t: t)
    assert abs(z.zero) < 1e-10 and z.slope == pytest.approx(1.0)


def test_zero_profile_fails():
    with pytest.raises(CertificateFails):
        verify_P1(_synthetic(lambda t: 0.0, -2, 2, 0.1), 0.1)


def test_subwindow_check():
    prof = _synthetic(lambda t: math.sin(2 * math.pi * t) if t < 2 else 0.0, 0, 4, 0.01)
    with pytest.raises(CertificateFails) as info:
        verify_P1(prof, 0.5, subwindow=1.0)
    assert info.value.details["subwindow"][0] >= 2.0 - 1e-9


def test_exgen_certificate():
    s, hom = builtin_example("exgen", {"r": 2})
    ev = MelnikovIntegrand(s, hom, FREE)
    prof = melnikov_profile(s, hom, -30.0, 30.0, 0.25, FREE)
    cert = verify_P1(prof, 1 / 6)
    assert len(cert.indices) >= 4
    # the closed-form points certify the sign pattern
    for j in range(-1, 3):
        b = math.copysign((math.pi * (2 * j - 1) / 2) ** 2, 2 * j - 1)
        m = ev.evaluate(b)[0]
        assert (m < -1 / 6) if j % 2 == 0 else (m > 1 / 6)
    zeros = locate_zeros(prof, cert, lambda t: ev.evaluate(t)[0], within=(-1, 1))
    (z0,) = [z for z in zeros if abs(z.zero) < 0.5]
    assert abs(z0.zero) < 1e-8 and z0.slope == pytest.approx(0.023, abs=0.002)


def test_periodic_sequence_is_admissible(ex1_parts):
    cert, zeros, consts, f = ex1_parts
    seq = build_time_sequence(cert, zeros, 1e-3, 1.0, TAND_KNU, 0, consts, evaluator=f,
                              spacing=43.0)
    assert seq.T == {0: 0.0}


def test_greedy_sequence_when_constraint_is_slack(ex1_parts):
    cert, zeros, consts, f = ex1_parts
    seq = build_time_sequence(cert, zeros, 0.95, 1.0, TAND_KNU, 3, consts, evaluator=f,
                              eps0=1.0)
    gaps = [seq.T[j + 1] - seq.T[j] for j in range(-3, 3)]
    assert gaps == pytest.approx([0.5] * 6)
    check_admissible(seq)
    for j in seq.indices:
        lo, hi = seq.brackets[j]
        assert lo < seq.T[j] < hi


def test_new_mode_records_gaps(ex1_parts):
    cert, zeros, consts, f = ex1_parts
    seq = build_time_sequence(cert, zeros, 0.95, 1.0, TAND_KNU_NEW, 2, consts, evaluator=f,
                              eps0=1.0)
    check_admissible(seq)
    assert all(b > 0 for b in seq.B.values())
    for j in seq.indices[:-1]:
        assert seq.T[j + 1] - seq.T[j] > max(seq.B[j + 1], seq.B[j]) + seq.gap_floor()


def test_window_exhausted(ex1_parts):
    cert, zeros, consts, f = ex1_parts
    with pytest.raises(WindowExhausted):
        build_time_sequence(cert, zeros, 1e-3, 1.0, TAND_KNU, 3, consts, evaluator=f)


def test_determinism(ex1_parts):
    cert, zeros, consts, f = ex1_parts
    a = build_time_sequence(cert, zeros, 0.95, 1.0, TAND_KNU, 2, consts, evaluator=f, eps0=1.0)
    b = build_time_sequence(cert, zeros, 0.95, 1.0, TAND_KNU, 2, consts, evaluator=f, eps0=1.0)
    assert a.to_dict() == b.to_dict()


def test_shifted_sequence(ex1_parts):
    cert, zeros, consts, f = ex1_parts
    seq = build_time_sequence(cert, zeros, 0.95, 1.0, TAND_KNU, 3, consts, evaluator=f,
                              eps0=1.0)
    sh = seq.shifted(1)
    assert sh.T[0] == seq.T[2] and sh.T[-1] == seq.T[1]


def test_omega_envelope_is_monotone(ex1_profile):
    env = omega_envelope(ex1_profile, 0.0, 0.2)
    vals = [v for _, v in env]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
