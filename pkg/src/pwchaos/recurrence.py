"""Sign-change certificates for a Melnikov profile and admissible time sequences."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import CertificateFails, WindowExhausted
from .melnikov import MelnikovProfile
from .spectral import ConstantsTable

TAND_KNU = "TandKnu"
TAND_KNU_NEW = "TandKnunew"
MIN_SPACING = 0.1
ZERO_WIDTH = 1e-10
MARGIN = 1e-9


@dataclass
class P1Certificate:
    cBar: float
    b: dict                       # index -> time; even indices carry M < -cBar
    values: dict                  # index -> M(b_i)
    window: tuple[float, float]

    @property
    def indices(self) -> list[int]:
        return sorted(self.b)

    def to_dict(self) -> dict:
        return {"cBar": self.cBar, "window": list(self.window),
                "b": {str(k): v for k, v in sorted(self.b.items())},
                "values": {str(k): v for k, v in sorted(self.values.items())}}


@dataclass
class ZeroInfo:
    k: int                        # zero lies in (b_k, b_{k+1})
    bracket: tuple[float, float]
    zero: float
    slope: float
    value: float


@dataclass
class TimeSequence:
    T: dict                       # j -> T_j
    brackets: dict                # j -> (beta_j, beta'_j)
    B: dict                       # j -> beta'_j - beta_j
    mode: str
    nu: float
    eps: float
    K0: float
    Lambda1: float | None = None
    Lambda0: float = 0.0
    slopeBound: float | None = None
    aUp: dict = field(default_factory=dict)
    aDown: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def indices(self) -> list[int]:
        return sorted(self.T)

    def gap_floor(self) -> float:
        return self.K0 * (1 + self.nu) * abs(math.log(self.eps))

    def required_gap(self, j: int) -> float:
        """Lower bound (strict) on T_{j+1} - T_j."""
        if self.mode == TAND_KNU:
            return (self.Lambda1 or 0.0) + self.gap_floor()
        return max(self.B[j + 1], self.B[j]) + self.gap_floor()

    def shifted(self, by: int = 1) -> "TimeSequence":
        """The sequence T^(by)_j = T_{j + 2 by}, relabelled."""
        s = 2 * by

        def move(d):
            return {j - s: v for j, v in d.items()}
        return TimeSequence(move(self.T), move(self.brackets), move(self.B), self.mode,
                            self.nu, self.eps, self.K0, self.Lambda1, self.Lambda0,
                            self.slopeBound, move(self.aUp), move(self.aDown), list(self.notes))

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("T", "brackets", "B", "aUp", "aDown"):
            d[key] = {str(k): (list(v) if isinstance(v, tuple) else v)
                      for k, v in sorted(getattr(self, key).items())}
        idx = self.indices
        d["ogapActual"] = min((self.T[j + 1] - self.T[j] for j in idx[:-1]), default=None)
        return d


# ------------------------------------------------------------------ P1

def verify_P1(profile: MelnikovProfile, cBar: float, origin: float = 0.0,
              subwindow: float | None = None) -> P1Certificate:
    """Greedy alternating extrema beyond +-cBar.

    Runs of samples with M > cBar (or M < -cBar) each contribute their most extreme point;
    adjacent runs of equal sign are merged. Index 0 is the last negative extremum at or before
    ``origin`` (falling back to the first negative one).
    """
    grid, vals = profile.grid, profile.values
    lo, hi = grid[0], grid[-1]
    if subwindow is not None:
        t = lo
        while t + subwindow <= hi + 1e-12:
            inside = [v for g, v in zip(grid, vals) if t <= g <= t + subwindow]
            if not any(v > cBar for v in inside) or not any(v < -cBar for v in inside):
                raise CertificateFails("a sign class is missing in a sub-window",
                                       subwindow=[t, t + subwindow], cBar=cBar)
            t += subwindow
    runs: list[tuple[int, float, float]] = []      # (sign, time, value)
    for g, v in zip(grid, vals):
        s = 1 if v > cBar else -1 if v < -cBar else 0
        if s == 0:
            continue
        if runs and runs[-1][0] == s:
            if abs(v) > abs(runs[-1][2]):
                runs[-1] = (s, g, v)
        else:
            runs.append((s, g, v))
    # enforce the minimal spacing by dropping the weaker member of a too-close pair
    pruned: list[tuple[int, float, float]] = []
    for r in runs:
        if pruned and pruned[-1][0] == r[0]:
            if abs(r[2]) > abs(pruned[-1][2]):
                pruned[-1] = r
            continue
        if pruned and r[1] - pruned[-1][1] < MIN_SPACING:
            if abs(r[2]) <= abs(pruned[-1][2]):
                continue
            pruned.pop()
            if pruned and pruned[-1][0] == r[0]:
                if abs(r[2]) > abs(pruned[-1][2]):
                    pruned[-1] = r
                continue
        pruned.append(r)
    negs = [i for i, r in enumerate(pruned) if r[0] < 0]
    if not negs or not any(r[0] > 0 for r in pruned):
        raise CertificateFails("no alternating extrema beyond cBar", subwindow=[lo, hi],
                               cBar=cBar)
    before = [i for i in negs if pruned[i][1] <= origin]
    i0 = before[-1] if before else negs[0]
    b = {i - i0: pruned[i][1] for i in range(len(pruned))}
    values = {i - i0: pruned[i][2] for i in range(len(pruned))}
    return P1Certificate(cBar=cBar, b=b, values=values, window=(lo, hi))


# ------------------------------------------------------------------ zeros

def _refine_zero(f: Callable[[float], float], a: float, b: float,
                 width: float = ZERO_WIDTH) -> tuple[float, float]:
    """Bracketed root to the requested width; returns the better-valued bracket end."""
    fa, fb = f(a), f(b)
    if fa == 0:
        return a, fa
    if fb == 0:
        return b, fb
    z = brentq(f, a, b, xtol=width / 2, rtol=4 * np.finfo(float).eps)
    lo, hi = max(a, z - width / 2), min(b, z + width / 2)
    flo, fhi = f(lo), f(hi)
    fz = f(z)
    return min(((z, fz), (lo, flo), (hi, fhi)), key=lambda p: abs(p[1]))


def _interp(profile: MelnikovProfile) -> Callable[[float], float]:
    g, v = profile.grid, profile.values

    def f(t):
        if t <= g[0]:
            return v[0]
        if t >= g[-1]:
            return v[-1]
        i = min(int((t - g[0]) / (g[1] - g[0])), len(g) - 2)
        w = (t - g[i]) / (g[i + 1] - g[i])
        return (1 - w) * v[i] + w * v[i + 1]
    return f


def locate_zeros(profile: MelnikovProfile, cert: P1Certificate,
                 evaluator: Callable[[float], float] | None = None,
                 slope_step: float = 1e-5,
                 within: tuple[float, float] | None = None) -> list[ZeroInfo]:
    """One refined zero per consecutive certified pair (b_k, b_{k+1}).

    ``evaluator`` is the exact M (e.g. a bound ``melnikov_at``); without it the profile is
    interpolated linearly. ``within`` restricts refinement to zeros inside a time range.
    """
    f = evaluator or _interp(profile)
    grid, vals = profile.grid, profile.values
    out = []
    idx = cert.indices
    for k, k1 in zip(idx[:-1], idx[1:]):
        lo, hi = cert.b[k], cert.b[k1]
        if within is not None and (hi < within[0] or lo > within[1]):
            continue
        pts = [(g, v) for g, v in zip(grid, vals) if lo <= g <= hi]
        bracket = None
        for (g0, v0), (g1, v1) in zip(pts[:-1], pts[1:]):
            if v0 == 0:
                bracket = (g0, g0)
                break
            if (v0 < 0) != (v1 < 0):
                bracket = (g0, g1)
                break
        if bracket is None:
            continue
        a, b = bracket
        if a == b:
            z, fz = a, 0.0
        else:
            z, fz = _refine_zero(f, a, b)
        slope = (f(z + slope_step) - f(z - slope_step)) / (2 * slope_step)
        out.append(ZeroInfo(k=k, bracket=(lo, hi), zero=z, slope=slope, value=fz))
    return out


# ------------------------------------------------------------------ sequences

def _level_crossing(f, a, b, level, width=1e-12):
    """t in [a, b] with |f(t)| = level, |f| decreasing from a toward b."""
    fa = abs(f(a)) - level
    while b - a > width:
        m = 0.5 * (a + b)
        fm = abs(f(m)) - level
        if (fm < 0) == (fa < 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def build_time_sequence(cert: P1Certificate, zeros: list[ZeroInfo], eps: float, nu: float,
                        mode: str, count: int, consts: ConstantsTable,
                        evaluator: Callable[[float], float] | None = None,
                        delta: float = 0.5, Lambda0: float = 0.0,
                        spacing: float | None = None, eps0: float = 0.1,
                        snap_tol: float = 1e-6) -> TimeSequence:
    """Admissible T_j for j in [-count, count]; every T_j is a located zero.

    Greedy left-to-right minimal gaps by default; ``spacing`` requests T_j = T_0 + j*spacing
    (each T_j snapped to a located zero within ``snap_tol``).
    """
    if mode not in (TAND_KNU, TAND_KNU_NEW):
        raise ValueError(f"unknown mode {mode!r}")
    if nu < consts.nu0:
        raise ValueError(f"nu must be >= nu0 = {consts.nu0}")
    if not 0 < eps <= eps0:
        raise ValueError(f"eps must lie in (0, {eps0}]")
    zs = sorted(zeros, key=lambda z: z.zero)
    if not zs:
        raise WindowExhausted("no zeros located")
    by_time = [z.zero for z in zs]
    zero0 = [z for z in zs if z.k == 0]
    if not zero0:
        raise WindowExhausted("no zero between b_0 and b_1")
    z0 = zero0[0]
    notes = []
    slope_bound = None
    lambda1 = None
    if mode == TAND_KNU:
        slopes = [abs(z.slope) for z in zs]
        if min(slopes) > 0:
            slope_bound = 0.99 * min(slopes)
            lambda1 = 2 * (cert.cBar / slope_bound) * delta
            if lambda1 >= 0.1:
                notes.append(f"Lambda1 = {lambda1:.6g} is not below 1/10 for cBar = {cert.cBar}")
        else:
            notes.append("nondeg not certified: a located zero has zero slope")
    floor = consts.K0 * (1 + nu) * abs(math.log(eps))

    def bracket_of(z: ZeroInfo):
        return z.bracket, z.bracket[1] - z.bracket[0]

    def gap_needed(prev: ZeroInfo, cand: ZeroInfo) -> float:
        if mode == TAND_KNU:
            return (lambda1 or 0.0) + floor
        return max(bracket_of(prev)[1], bracket_of(cand)[1]) + floor

    chosen = {0: z0}
    if spacing is not None:
        for j in range(-count, count + 1):
            target = z0.zero + j * spacing
            near = min(zs, key=lambda z: abs(z.zero - target))
            if abs(near.zero - target) > snap_tol:
                raise WindowExhausted("no located zero at the requested periodic time",
                                      j=j, target=target)
            chosen[j] = near
    else:
        i0 = by_time.index(z0.zero)
        for sgn in (1, -1):
            cur, pos = z0, i0
            for step in range(1, count + 1):
                j = sgn * step
                pos += sgn
                while 0 <= pos < len(zs):
                    cand = zs[pos]
                    gap = abs(cand.zero - cur.zero)
                    if gap > gap_needed(cur, cand) + MARGIN:
                        break
                    pos += sgn
                else:
                    raise WindowExhausted("profile window too short for the requested count",
                                          j=j, count=count)
                chosen[j] = zs[pos]
                cur = zs[pos]
    T = {j: z.zero for j, z in chosen.items()}
    brackets = {j: z.bracket for j, z in chosen.items()}
    B = {j: z.bracket[1] - z.bracket[0] for j, z in chosen.items()}
    seq = TimeSequence(T=T, brackets=brackets, B=B, mode=mode, nu=nu, eps=eps, K0=consts.K0,
                       Lambda1=lambda1, Lambda0=Lambda0, slopeBound=slope_bound, notes=notes)
    if mode == TAND_KNU and evaluator is not None and lambda1 is not None:
        level = delta * cert.cBar
        for j, z in chosen.items():
            lo, hi = z.bracket
            seq.aUp[j] = _level_crossing(evaluator, lo, z.zero - Lambda0, level)
            seq.aDown[j] = _level_crossing(evaluator, hi, z.zero + Lambda0, level)
            if not seq.aDown[j] - seq.aUp[j] <= lambda1:
                seq.notes.append(f"a-bracket wider than Lambda1 at j={j}")
    check_admissible(seq)
    return seq


def check_admissible(seq: TimeSequence, margin: float = MARGIN) -> None:
    """Independent re-check of the gap inequalities and T_0 placement."""
    idx = seq.indices
    for j in idx[:-1]:
        if j + 1 not in seq.T:
            continue
        gap = seq.T[j + 1] - seq.T[j]
        need = seq.required_gap(j)
        if not gap > need + margin:
            raise WindowExhausted("gap inequality violated", j=j, gap=gap, required=need)
    lo, hi = seq.brackets[0]
    if not lo <= seq.T[0] <= hi:
        raise WindowExhausted("T_0 outside [b_0, b_1]", T0=seq.T[0], bracket=[lo, hi])
    for j in idx:
        lo, hi = seq.brackets[j]
        if not lo < seq.T[j] < hi:
            raise WindowExhausted("T_j outside its bracket", j=j)


def omega_envelope(profile: MelnikovProfile, zero: float, radius: float) -> list[tuple[float, float]]:
    """Lower envelope (h, min |M| over |t - zero| >= h within radius), diagnostics only."""
    pts = [(abs(g - zero), abs(v)) for g, v in zip(profile.grid, profile.values)
           if 0 < abs(g - zero) <= radius]
    pts.sort()
    env, running = [], math.inf
    for h, v in reversed(pts):
        running = min(running, v)
        env.append((h, running))
    return list(reversed(env))
