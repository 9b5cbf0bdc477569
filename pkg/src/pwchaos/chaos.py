"""Finite-window itinerary search, gluing over tau, property-C checks and shift codings.

Everything runs on the fixed-step arbitrary-precision flow. Orbits are parametrised by the
arc length s of their starting point on the transversal section at time tau. Each stage of a
search solves for the s where an "unstable coordinate" functional E changes sign: E is the
coefficient of the state along the expanding eigenvector near the origin, extrapolated to a
fixed evaluation time, so E is close to linear in s near the leaf it locates.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import gmpy2
from gmpy2 import mpfr

from .errors import (BracketLost, ConfigError, HypothesisFailure, MissingCrossing, NoSignChange,
                     ToleranceUnmet)
from .fixedstep import FixedStepFlow, bits_for, working_precision
from .leaves_loops import LeafOptions, LeafSolver
from .recurrence import TAND_KNU, TimeSequence
from .spectral import analyze_origin, derived_constants
from .system import MINUS, PLUS, HomoclinicReference, PiecewiseSystem

LOOP, ESCAPE = -1, 1


@dataclass(frozen=True)
class ChaosOptions:
    h: float = 0.2
    shadow_tol: float = 0.05
    tau_samples: int = 32
    margin: float = 5.0
    r_arm: float = 0.25
    b_cap: float = 0.2
    escape_radius: float = 3.0
    section_radius: float = 0.5
    bracket_fraction: float = 0.2
    guard_bits: int = 96
    return_tol: float = 0.02
    max_iter: int = 400


def shift_metric(e1: dict, e2: dict) -> float:
    """sum over m of |e1_m - e2_m| / 2^(|m|+1); missing indices count as 0."""
    keys = set(e1) | set(e2)
    return sum(abs(e1.get(m, 0) - e2.get(m, 0)) / 2 ** (abs(m) + 1) for m in keys)


def all_windows(depth: int) -> list[dict]:
    """Every 0/1 window on [-depth, depth] with a 1 at the centre."""
    out = []
    idx = [j for j in range(-depth, depth + 1) if j != 0]
    for bits in itertools.product((0, 1), repeat=len(idx)):
        w = dict(zip(idx, bits))
        w[0] = 1
        out.append(dict(sorted(w.items())))
    return out


def window_label(e: dict) -> str:
    return "".join(str(e[j]) for j in sorted(e))


def parse_symbols(text: str) -> dict:
    """'101' -> {-1: 1, 0: 0, 1: 1}; odd length, centred on index 0."""
    if not text or len(text) % 2 == 0 or set(text) - {"0", "1"}:
        raise ValueError("symbols must be an odd-length string of 0/1")
    m = len(text) // 2
    return {j - m: int(c) for j, c in enumerate(text)}


# ------------------------------------------------------------------ per-direction data

@dataclass(frozen=True)
class _Direction:
    sign: int
    basis: tuple
    rate: float
    start_region: int
    return_from: int
    return_to: int


@dataclass
class StageRecord:
    stage: int
    target: float | None
    bracket: tuple[float, float]          # in arc length, relative to the section
    width: float
    monotone: bool | None = None
    returnTimes: tuple | None = None


@dataclass
class SearchResult:
    direction: int
    tau: float
    s: object                             # exact arc length of the found point
    leaf: object                          # stage-0 root (P_s forward, P_u backward)
    offset: float                         # d: signed distance from the leaf, loop side positive
    stages: list
    returns: list
    shots: int
    roots: list = field(default_factory=list)    # per stage: s (stage 0) or ln-offset u
    slopes: list = field(default_factory=list)   # per stage: functional slope per level
    warm: bool = False

    @property
    def final_width(self) -> float:
        return self.stages[-1].width if self.stages else 0.0


@dataclass
class WindowReport:
    j: int
    symbol: int
    window: tuple[float, float]
    alpha: float | None
    sup: float
    passed: bool
    sectionReturns: int
    innerCrossings: int
    reason: str = ""


@dataclass
class ItineraryResult:
    symbols: dict
    xiStar: tuple[float, float]
    xiExact: str
    tauStar: float
    alphas: dict
    supDistances: dict
    nestedIntervals: dict
    finalBracket: tuple[float, float]
    finalWidth: float
    verified: bool
    windows: list
    dPlus: float
    dMinusHat: float
    gap: float
    diagnostics: dict = field(default_factory=dict)
    trajectory: object = None

    def to_dict(self) -> dict:
        return {
            "symbols": {str(k): v for k, v in sorted(self.symbols.items())},
            "xiStar": list(self.xiStar), "xiExact": self.xiExact, "tauStar": self.tauStar,
            "alphas": {str(k): v for k, v in sorted(self.alphas.items())},
            "supDistances": {str(k): v for k, v in sorted(self.supDistances.items())},
            "nestedIntervals": {k: [list(map(float, b)) for b in v]
                                for k, v in self.nestedIntervals.items()},
            "finalBracket": list(self.finalBracket), "finalWidth": self.finalWidth,
            "verified": self.verified,
            "windows": [vars(w) | {"window": list(w.window)} for w in self.windows],
            "dPlus": self.dPlus, "dMinusHat": self.dMinusHat, "gap": self.gap,
            "diagnostics": self.diagnostics,
        }


@dataclass
class MergedTrajectory:
    t: list
    x: list
    y: list
    returns: list            # times of forward-oriented returns to the transversal section
    inner: list              # times of crossings near the origin

    def state_at_index(self, i):
        return self.t[i], self.x[i], self.y[i]


# ------------------------------------------------------------------ shooting monitor

class _Monitor:
    """Stops a shot once its fate is decided; keeps the last state for exact cap times."""

    def __init__(self, prob: "ChaosProblem", d: _Direction, n_returns: int, mode: str,
                 k_eval: int | None = None):
        self.p, self.d, self.n, self.mode, self.k_eval = prob, d, n_returns, mode, k_eval
        self.returns = []
        self.armed = False
        self.result = None
        self.prev = None
        o = prob.opts
        self.r_arm2 = mpfr(o.r_arm) ** 2
        self.b_cap = mpfr(o.b_cap)
        self.r_esc2 = mpfr(o.escape_radius) ** 2

    def __call__(self, k, t, x, y, reg, ev):
        done = self._decide(k, t, x, y, reg, ev)
        self.prev = (t, x, y, reg)
        return done

    def _decide(self, k, t, x, y, reg, ev):
        d = self.d
        if ev is not None:
            px, py = float(x), float(y)
            g0 = self.p.gamma0
            if (ev.from_region == d.return_from and ev.to_region == d.return_to
                    and math.hypot(px - g0[0], py - g0[1]) < self.p.opts.section_radius):
                self.returns.append(t)
                if self.mode == "return" and len(self.returns) == self.n:
                    self.result = ("return", t)
                    return True
                if self.mode == "leaf" and len(self.returns) > self.n:
                    self.result = ("loop", t, x, y)
                    return True
            elif self.mode == "leaf" and len(self.returns) >= self.n and self.armed:
                self.result = ("stop", t, x, y)
                return True
            return False
        r2 = x * x + y * y
        if r2 > self.r_esc2:
            self.result = ("escape", t, x, y)
            return True
        if self.mode == "leaf" and len(self.returns) >= self.n:
            if not self.armed:
                if r2 < self.r_arm2:
                    self.armed = True
            elif abs(self.p._coefficient(d, x, y)) > self.b_cap:
                self.result = ("stop",) + self._cap_time(t, x, y)
                return True
            if k >= self.k_eval:
                self.result = ("stop", t, x, y)
                return True
        return False

    def _cap_time(self, t, x, y):
        """State inside the last step where the expanding coefficient equals the cap."""
        t0, x0, y0, reg = self.prev
        flow, d = self.p.flows[self.d.sign], self.d
        hh = t - t0

        def excess(th):
            xs, ys = flow.step(reg, t0, x0, y0, th * hh)
            return abs(self.p._coefficient(d, xs, ys)) - self.b_cap, xs, ys
        a, b = mpfr(0), mpfr(1)
        fa = abs(self.p._coefficient(d, x0, y0)) - self.b_cap
        fb = abs(self.p._coefficient(d, x, y)) - self.b_cap
        if fa >= 0:
            return t0, x0, y0
        xs, ys = x, y
        th = b
        tol = mpfr(2) ** (-(self.p.bits - 8))
        side = 0
        for _ in range(200):
            th = (a * fb - b * fa) / (fb - fa)
            fc, xs, ys = excess(th)
            if fc == 0 or b - a < tol:
                break
            if fc > 0:
                b, fb = th, fc
                if side == -1:
                    fa /= 2
                side = -1
            else:
                a, fa = th, fc
                if side == 1:
                    fb /= 2
                side = 1
        return t0 + th * hh, xs, ys


# ------------------------------------------------------------------ problem

def require_hypotheses(sys: PiecewiseSystem, homoclinic: HomoclinicReference):
    """Spectral report, or HypothesisFailure when F0-F2, K or scenario 1 fail."""
    report = analyze_origin(sys, homoclinic)
    if not report.hypotheses_hold:
        raise HypothesisFailure("hypotheses F0-F2 and K must hold for the chaos construction",
                                verdicts=report.verdicts, scenario=report.scenario,
                                f2Labeling=report.f2Labeling)
    if report.scenario != 1:
        raise HypothesisFailure("the construction is implemented for scenario 1 only",
                                scenario=report.scenario, verdicts=report.verdicts)
    return report


class ChaosProblem:
    """Shared data for searches on one system, sequence and eps."""

    def __init__(self, sys: PiecewiseSystem, homoclinic: HomoclinicReference,
                 seq: TimeSequence, eps: float, opts: ChaosOptions = ChaosOptions(),
                 window_depth: int = 1):
        report = require_hypotheses(sys, homoclinic)
        gx, gy = sys.G.diff("x"), sys.G.diff("y")
        if any(g.depends_on(v) for g in (gx, gy) for v in ("x", "y")):
            raise ConfigError("the arbitrary-precision search needs a straight switching line")
        if not eps > 0:
            raise ValueError("eps must be positive")
        need = 2 * window_depth + 1
        if any(j not in seq.T for j in range(-need, need + 1)):
            raise ValueError(f"sequence must cover indices -{need}..{need}")
        self.sys, self.homoclinic, self.seq, self.eps, self.opts = sys, homoclinic, seq, eps, opts
        self.report, self.consts = report, derived_constants(report)
        self.depth = window_depth
        a, b = gx(0.0, 0.0), gy(0.0, 0.0)
        n = math.hypot(a, b)
        u = (-b / n, a / n)
        g0 = homoclinic.crossing_point
        if u[0] * g0[0] + u[1] * g0[1] < 0:
            u = (-u[0], -u[1])
        self.u = u
        self.gamma0 = g0
        self.l0 = g0[0] * u[0] + g0[1] * u[1]
        r = report
        self.dirs = {
            1: _Direction(1, (r.vSPlus, r.vUPlus), r.lambdaUPlus, PLUS, MINUS, PLUS),
            -1: _Direction(-1, (r.vUMinus, r.vSMinus), abs(r.lambdaSMinus), MINUS, PLUS, MINUS),
        }
        rate = max(self.consts.lambdaHi, 1e-12)
        lo, hi = seq.brackets[0]
        span = max(abs(seq.T[need] - lo), abs(seq.T[-need] - hi)) + opts.margin + 1
        self.bits = bits_for(span, rate, opts.guard_bits)
        self.flows = {s: FixedStepFlow(sys, eps, self.bits, opts.h) for s in (1, -1)}
        self._leaves = None
        self._cold = {}
        self.shots = 0

    # -- helpers ---------------------------------------------------------
    @property
    def leaves(self) -> LeafSolver:
        if self._leaves is None:
            self._leaves = LeafSolver(self.sys, self.homoclinic, self.eps, LeafOptions(tol=1e-12),
                                      report=self.report)
        return self._leaves

    def point(self, s):
        return s * mpfr(self.u[0]), s * mpfr(self.u[1])

    def t_far(self, direction: int) -> float:
        m = self.depth
        return self.seq.T[direction * (2 * m + 1)] + direction * self.opts.margin

    def _n_steps(self, tau, t_end) -> int:
        return int(math.ceil(abs(float(t_end) - float(tau)) / self.opts.h))

    def _coefficient(self, d: _Direction, x, y):
        va, vb = d.basis
        va = (mpfr(va[0]), mpfr(va[1]))
        vb = (mpfr(vb[0]), mpfr(vb[1]))
        det = va[0] * vb[1] - va[1] * vb[0]
        return (va[0] * y - va[1] * x) / det

    def shoot(self, direction: int, tau, s, n_returns: int, mode: str, t_end,
              record: bool = False):
        d = self.dirs[direction]
        flow = self.flows[direction]
        n_steps = self._n_steps(tau, t_end)
        mon = _Monitor(self, d, n_returns, mode, n_steps)
        x0, y0 = self.point(s)
        run = flow.run(tau, x0, y0, d.start_region, direction, n_steps, mon, record)
        self.shots += 1
        return mon, run

    def leaf_value(self, direction: int, tau, s, n_returns: int, t_eval):
        """Extrapolated expanding coefficient after ``n_returns`` section returns."""
        with working_precision(self.bits):
            mon, run = self.shoot(direction, tau, s, n_returns, "leaf", t_eval)
            d = self.dirs[direction]
            res = mon.result
            if res is None:
                t, x, y, _ = run.final
                res = ("stop", t, x, y)
            kind, t, x, y = res
            grow = mpfr(d.rate) * abs(mpfr(t_eval) - t)
            if kind == "loop":
                return -mpfr(self.opts.escape_radius) * gmpy2.exp(grow)
            b = self._coefficient(d, x, y)
            if kind == "escape":
                b = abs(b)
            return b * gmpy2.exp(grow)

    def return_time(self, direction: int, tau, s, n_returns: int, t_end) -> float:
        with working_precision(self.bits):
            mon, _ = self.shoot(direction, tau, s, n_returns, "return", t_end)
        if mon.result is None or mon.result[0] != "return":
            return math.inf
        return float(mon.result[1])

    # -- root finding -----------------------------------------------------
    def _illinois(self, f, a, b, fa, fb, done):
        """Bracketed false position with the Anderson-Bjorck weight, until ``done``.

        ``b`` always holds the newest iterate; the retained end ``a`` has its weight scaled
        down whenever it survives a step, which keeps convergence superlinear. Returned and
        tested values are the true function values.
        """
        wa = fa
        it = 0
        while not done(a, b, fa, fb):
            it += 1
            if it > self.opts.max_iter:
                raise ToleranceUnmet("root finder did not converge", width=float(abs(b - a)))
            c = (a * fb - b * wa) / (fb - wa)
            if not (min(a, b) < c < max(a, b)):
                c = (a + b) / 2
            fc = f(c)
            if fc == 0:
                return c, c, fc, fc
            if (fc > 0) == (fb > 0):
                m = 1 - fc / fb
                wa *= m if m > 0 else 0.5
            else:
                a, fa, wa = b, fb, fb
            b, fb = c, fc
        return a, b, fa, fb

    def _levels(self, t_base: float, t_final: float) -> list[float]:
        """Evaluation times t_base + 4 * 2^k, ending exactly at t_final."""
        direction = 1 if t_final >= t_base else -1
        span = abs(t_final - t_base)
        times, el = [], 4.0
        while el * 1.5 < span:
            times.append(t_base + direction * el)
            el *= 2
        times.append(t_final)
        return times

    def _leaf_root(self, f, times, rate: float, vtol, bracket=None, warm=None):
        """Sign change of f(v, t_eval) refined over the evaluation times ``times``.

        At a fixed evaluation time the functional is analytic in v, so each level converges
        fast once its bracket sits in the linear range; the next level starts from a bracket
        sized by the measured slope. ``bracket`` = (lo, hi, flo, fhi) at the first level;
        ``warm`` = (centre, error, reference slopes) skips the levels whose linear range is
        wider than the error. Returns (a, b, fa, fb, slopes) or None if a warm start fails.
        """
        cap = mpfr(self.opts.b_cap)
        slopes = [None] * len(times)
        start = 0
        if warm is not None:
            centre, err, ref = warm
            if len(ref) != len(times):
                return None
            fits = [i for i, sl in enumerate(ref) if sl and cap / (2 * sl) >= 4 * err]
            if not fits:
                return None
            start = fits[-1]
            slopes[:start] = ref[:start]
        for i in range(start, len(times)):
            t_eval = times[i]

            def g(v, t_eval=t_eval):
                return f(v, t_eval)
            if i == start and warm is not None:
                c, w = centre, max(4 * err, vtol)
            elif i > 0:
                slope = slopes[i - 1]
                c = (a + b) / 2
                growth = gmpy2.exp(mpfr(rate * abs(t_eval - times[i - 1])))
                w = max(cap / (2 * slope * growth) if slope else abs(b - a), vtol)
            if i > 0 or warm is not None:
                for _ in range(16):
                    a, b = c - w, c + w
                    fa, fb = g(a), g(b)
                    if (fa > 0) != (fb > 0):
                        break
                    w *= 4
                else:
                    if warm is not None and i == start:
                        return None
                    raise BracketLost("leaf lost between evaluation levels", t_eval=t_eval)
            else:
                a, b, fa, fb = bracket
            if i == len(times) - 1:
                def done(a, b, fa, fb):
                    return abs(b - a) <= vtol
            else:
                grow_next = gmpy2.exp(mpfr(rate * abs(times[i + 1] - t_eval)))

                def done(a, b, fa, fb, grow_next=grow_next):
                    if abs(b - a) <= vtol:
                        return True
                    if abs(fa) >= cap or abs(fb) >= cap:
                        return False
                    slope = abs((fb - fa) / (b - a))
                    return abs(b - a) * slope * grow_next * 64 < cap
            a, b, fa, fb = self._illinois(g, a, b, fa, fb, done)
            slopes[i] = abs((fb - fa) / (b - a)) if b != a else slopes[i - 1]
        return a, b, fa, fb, slopes

    def _xtol(self):
        return mpfr(2) ** (-(self.bits - self.opts.guard_bits // 2))

    # -- search ----------------------------------------------------------
    def search(self, direction: int, tau, symbols: dict, known: list | None = None
               ) -> SearchResult:
        """Point on the section at time tau whose orbit follows ``symbols`` (one time direction).

        ``known`` holds results for the same symbols at nearby tau; with two or more, each
        stage root is predicted by interpolation and refined from a warm start.
        """
        warm = known is not None and len(known) >= 2
        key = (direction, str(mpfr(tau, self.bits)), tuple(sorted(symbols.items())))
        if not warm and key in self._cold:
            return self._cold[key]
        res = self._search(direction, tau, symbols, known if warm else None)
        if not warm:
            self._cold[key] = res
        return res

    def _search(self, direction, tau, symbols, known):
        seq = self.seq
        targets = [(j, seq.T[2 * j], seq.brackets[2 * j])
                   for j in sorted(symbols, key=abs) if symbols[j] == 1]
        t_far = self.t_far(direction)
        rate = self.dirs[direction].rate
        warm = known is not None
        shots0 = self.shots

        def hint(k):
            if not warm:
                return None
            pred, err = self._predict([(mpfr(r.tau), r.roots[k]) for r in known], tau)
            return pred, err, known[0].slopes[k]
        with working_precision(self.bits):
            tau = mpfr(tau)
            xtol = self._xtol()
            l0 = mpfr(self.l0)
            t_eval0 = (float(tau) + targets[0][2][0 if direction > 0 else 1]) / 2 \
                if targets else t_far

            def e0(v, t_eval):
                return self.leaf_value(direction, tau, v, 0, t_eval)
            times = self._levels(float(tau) + 2 * direction, t_eval0)
            out = self._leaf_root(e0, times, rate, xtol, warm=hint(0)) if warm else None
            if out is None:
                w = mpfr(math.sqrt(self.eps))
                lo, hi = l0 - w, l0 + w
                flo, fhi = e0(lo, times[0]), e0(hi, times[0])
                if (flo > 0) == (fhi > 0):
                    raise BracketLost("stage 0: leaf not bracketed on the section", stage=0,
                                      tau=float(tau), bracket=[float(lo), float(hi)])
                out = self._leaf_root(e0, times, rate, xtol, bracket=(lo, hi, flo, fhi))
                stage0 = StageRecord(0, None, (float(lo - l0), float(hi - l0)), float(hi - lo))
            else:
                stage0 = known[0].stages[0]
            a, b, fa, fb, sl = out
            root = (a + b) / 2
            leaf = root
            roots, slopes, stages, returns = [root], [sl], [stage0], []
            side = 1 if (fb < 0 if b > a else fa < 0) else -1
            for n, (j, T, (beta, beta_p)) in enumerate(targets, start=1):
                if n == len(targets):
                    t_eval = t_far
                else:
                    nxt = targets[n][2]
                    t_eval = (T + (nxt[0] if direction > 0 else nxt[1])) / 2

                def en(u, t_ev, root=root, side=side, n=n):
                    return self.leaf_value(direction, tau, root + side * gmpy2.exp(u), n, t_ev)
                out = None
                if warm:
                    times = self._levels(T + 2 * direction, t_eval)
                    h = hint(n)
                    out = self._leaf_root(en, times, rate, xtol / gmpy2.exp(h[0]), warm=h)
                    record = known[0].stages[n]
                if out is None:
                    u_late, u_early, record = self._stage_bracket(direction, tau, root, side, n,
                                                                  T, beta, beta_p)
                    times = self._levels(record.returnTimes[0] + 2 * direction, t_eval)
                    fl, fe = en(u_late, times[0]), en(u_early, times[0])
                    if (fl > 0) == (fe > 0):
                        raise BracketLost("stage functional does not change sign across the "
                                          "target window", stage=n, j=j,
                                          values=[float(fl), float(fe)],
                                          returnTimes=list(record.returnTimes))
                    out = self._leaf_root(en, times, rate, xtol / gmpy2.exp(u_early),
                                          bracket=(u_late, u_early, fl, fe))
                a, b, fa, fb, sl = out
                s_a, s_b = root + side * gmpy2.exp(a), root + side * gmpy2.exp(b)
                u_star = (a + b) / 2
                new_root = root + side * gmpy2.exp(u_star)
                # loop side of the new leaf: the end whose functional is negative
                s_neg = s_a if fa < 0 else s_b
                side = 1 if s_neg > new_root else -1
                roots.append(u_star)
                slopes.append(sl)
                stages.append(record)
                returns.append((j, T))
                root = new_root
            offset = float(abs(root - leaf))
        return SearchResult(direction, float(tau), root, leaf, offset, stages, returns,
                            self.shots - shots0, roots, slopes, warm)

    def _stage_bracket(self, direction, tau, root, side, n, T, beta, beta_p):
        """ln-offsets whose n-th return lands just inside the target window, both ends."""
        o = self.opts
        B = beta_p - beta
        if direction > 0:
            late, early = beta_p - o.bracket_fraction * B, beta + o.bracket_fraction * B
        else:
            late, early = beta + o.bracket_fraction * B, beta_p - o.bracket_fraction * B
        horizon = (beta_p + 2) if direction > 0 else (beta - 2)

        def ret(u):
            return self.return_time(direction, tau, root + side * gmpy2.exp(u), n, horizon)
        u_late, r_late = self._solve_return(ret, late, float(tau), direction)
        u_early, r_early = self._solve_return(ret, early, float(tau), direction)
        monotone = (direction * (r_late - r_early) > 0) and u_late < u_early
        if not monotone:
            raise BracketLost("return time is not monotone on the stage bracket",
                              stage=n, returnTimes=[r_late, r_early])
        l0 = mpfr(self.l0)
        lo_s, hi_s = root + side * gmpy2.exp(u_late), root + side * gmpy2.exp(u_early)
        rec = tuple(sorted((float(lo_s - l0), float(hi_s - l0))))
        return u_late, u_early, StageRecord(n, T, rec, float(abs(hi_s - lo_s)), monotone,
                                            (r_late, r_early))

    def _solve_return(self, ret, target: float, tau: float, direction: int):
        """ln-offset u with return time near ``target``; the time grows like -u / Sigma."""
        k = self.consts
        Sigma = k.SigmaFwd if direction > 0 else k.SigmaBwd
        u = mpfr(-(abs(target - tau) - 3.0) / Sigma)
        r = ret(u)
        for _ in range(30):
            if math.isinf(r):
                u += 1
            else:
                err = direction * (r - target)
                if abs(err) < self.opts.return_tol:
                    return u, r
                u += mpfr(err / Sigma)
            r = ret(u)
        raise BracketLost("could not place the return time in the target window",
                          target=target, last=r)

    # -- gluing ----------------------------------------------------------
    def F(self, tau, window: dict):
        """(s^- - s^+, forward result, backward result) from full nested searches."""
        fwd = self.search(1, tau, {j: e for j, e in window.items() if j > 0})
        bwd = self.search(-1, tau, {j: e for j, e in window.items() if j < 0})
        with working_precision(self.bits):
            return bwd.s - fwd.s, fwd, bwd

    @staticmethod
    def _predict(known: list, tau):
        """Interpolate s(tau) from solved (tau, s) pairs; returns (prediction, spread)."""
        pts = sorted(known, key=lambda p: abs(p[0] - tau))[:3]
        (t1, s1), (t2, s2) = pts[0], pts[1]
        lin = s1 + (s2 - s1) * (tau - t1) / (t2 - t1)
        if len(pts) < 3:
            # the expansion loop absorbs an underestimate
            return lin, abs(s2 - s1) / 256
        t3, s3 = pts[2]
        d12 = (s2 - s1) / (t2 - t1)
        d23 = (s3 - s2) / (t3 - t2)
        quad = lin + (d23 - d12) / (t3 - t1) * (tau - t1) * (tau - t2)
        return quad, abs(quad - lin) * 4

    def sweep(self, lo: float, hi: float) -> list[tuple[float, float]]:
        """Leaf separation D(Ps, Pu) from the adaptive float integrator on the tau samples."""
        taus = np.linspace(lo, hi, self.opts.tau_samples)
        return [(float(t), self.leaves.endpoints(float(t)).separation) for t in taus]

    def glue(self, window: dict, tol: float | None = None, check_ends: bool = False,
             record: bool = True) -> ItineraryResult:
        if window.get(0) != 1:
            raise ValueError("gluing needs the centre symbol e_0 = 1")
        if any(abs(j) > self.depth for j in window):
            raise ValueError("window wider than the problem depth")
        tol = self.opts.shadow_tol if tol is None else tol
        lo, hi = self.seq.brackets[0]
        samples = self.sweep(lo, hi)
        T0 = self.seq.T[0]
        changes = [(a, b) for a, b in zip(samples[:-1], samples[1:])
                   if (a[1] > 0) != (b[1] > 0)]
        if not changes:
            raise NoSignChange("separation keeps one sign over [b0, b1]",
                               ends=[samples[0][1], samples[-1][1]])
        (ta, _), (tb, _) = min(changes, key=lambda c: abs(0.5 * (c[0][0] + c[1][0]) - T0))
        diag = {"bits": self.bits, "sweep": samples, "bracketTau": [ta, tb]}
        if check_ends:
            diag["endValues"] = [float(self.F(lo, window)[0]), float(self.F(hi, window)[0])]
        shots0 = self.shots
        with working_precision(self.bits):
            fa, fwd_a, bwd_a = self.F(mpfr(ta), window)
            fb, fwd_b, bwd_b = self.F(mpfr(tb), window)
            if (fa > 0) == (fb > 0):
                raise NoSignChange("glue functional keeps one sign on the sweep bracket",
                                   tau=[ta, tb], values=[float(fa), float(fb)])
            known = {1: [fwd_a, fwd_b], -1: [bwd_a, bwd_b]}
            half = {1: {j: e for j, e in window.items() if j > 0},
                    -1: {j: e for j, e in window.items() if j < 0}}
            results = {}

            def f(t):
                out = {d: self.search(d, t, half[d], known[d]) for d in (1, -1)}
                for d in (1, -1):
                    known[d].append(out[d])
                results[t] = out
                return out[-1].s - out[1].s
            span = abs(self.t_far(-1) - tb) + 1
            f_tol = mpfr(1e-6) * gmpy2.exp(-mpfr(self.dirs[-1].rate) * span)
            xtol = self._xtol()

            def done(a, b, ga, gb):
                return abs(ga) < f_tol or abs(gb) < f_tol or abs(b - a) < xtol
            a, b, ga, gb = self._illinois(f, mpfr(ta), mpfr(tb), fa, fb, done)
            tau_star = a if abs(ga) <= abs(gb) else b
            if tau_star not in results:
                f(tau_star)
            g_star = results[tau_star][-1].s - results[tau_star][1].s
            s_plus, s_minus = results[tau_star][1].s, results[tau_star][-1].s
            diag["tauIterations"] = len(results)
            diag["glueResidual"] = float(g_star)
            diag["glueTolerance"] = float(f_tol)
            if abs(g_star) > f_tol:
                diag["warning"] = "glue residual above tolerance"
            # full nested searches at tau*: honest nested intervals and an independent check
            fwd = self.search(1, tau_star, half[1])
            bwd = self.search(-1, tau_star, half[-1])
            diag["recheck"] = [float(fwd.s - s_plus), float(bwd.s - s_minus)]
            diag["shots"] = self.shots - shots0
            traj = self.long_orbit(tau_star, s_plus)
            xi = self.point(s_plus)
            xi_exact = f"{xi[0]!s},{xi[1]!s}"
            d_plus = float(s_plus - fwd.leaf)
            d_minus_hat = float(s_minus - fwd.leaf)
            stages_f = [st.bracket for st in fwd.stages]
            stages_b = [st.bracket for st in bwd.stages]
        windows = verify_property_C(traj, self.seq, window, self.homoclinic, tol,
                                    raise_missing=False)
        alphas = {w.j: w.alpha for w in windows if w.symbol == 1}
        sups = {w.j: w.sup for w in windows}
        alpha_ok = all(abs(a_) <= self._alpha_bound(j) for j, a_ in alphas.items()
                       if a_ is not None)
        nested_ok = all(s1.width > s2.width for s1, s2 in zip(fwd.stages, fwd.stages[1:])) and \
            all(s1.width > s2.width for s1, s2 in zip(bwd.stages, bwd.stages[1:]))
        diag["alphaBoundsHold"] = alpha_ok
        diag["nestedShrink"] = nested_ok
        diag["nestedWidths"] = {"forward": [float(st.width) for st in fwd.stages],
                                "backward": [float(st.width) for st in bwd.stages]}
        last = fwd.stages[-1] if fwd.stages else None
        final_bracket = last.bracket if last else (0.0, 0.0)
        verified = all(w.passed for w in windows) and alpha_ok and nested_ok
        return ItineraryResult(
            symbols=dict(window), xiStar=(float(xi[0]), float(xi[1])), xiExact=xi_exact,
            tauStar=float(tau_star), alphas=alphas, supDistances=sups,
            nestedIntervals={"forward": stages_f, "backward": stages_b},
            finalBracket=final_bracket, finalWidth=float(last.width) if last else 0.0,
            verified=verified, windows=windows, dPlus=d_plus, dMinusHat=d_minus_hat,
            gap=float(g_star), diagnostics=diag, trajectory=traj if record else None)

    def _alpha_bound(self, j: int) -> float:
        seq = self.seq
        if seq.mode == TAND_KNU and seq.Lambda1 is not None and seq.Lambda1 < 0.1:
            return seq.Lambda1
        return seq.B[2 * j]

    def long_orbit(self, tau, s) -> MergedTrajectory:
        """Integrate the glued point forward and backward over the whole window."""
        parts = {}
        for direction in (1, -1):
            d = self.dirs[direction]
            x0, y0 = self.point(s)
            n = self._n_steps(tau, self.t_far(direction))
            with working_precision(self.bits):
                run = self.flows[direction].run(tau, x0, y0, d.start_region, direction, n,
                                                None, record=True)
            parts[direction] = run
        bw, fw = parts[-1], parts[1]
        t = bw.t[::-1] + fw.t[1:]
        x = bw.x[::-1] + fw.x[1:]
        y = bw.y[::-1] + fw.y[1:]
        g0 = self.gamma0
        returns, inner = [], []
        for run, direction in ((bw, -1), (fw, 1)):
            d = self.dirs[direction]
            for ev in run.events:
                px, py = ev.point
                if math.hypot(px - g0[0], py - g0[1]) < self.opts.section_radius and \
                        ev.from_region == d.return_from:
                    returns.append(float(ev.time))
                elif math.hypot(px, py) < self.opts.section_radius:
                    inner.append(float(ev.time))
        returns.append(float(tau))
        return MergedTrajectory(t, x, y, sorted(set(returns)), sorted(inner))


# ------------------------------------------------------------------ verification

def verify_property_C(traj: MergedTrajectory, seq: TimeSequence, symbols: dict,
                      homoclinic: HomoclinicReference, tol: float,
                      raise_missing: bool = True) -> list[WindowReport]:
    """Per-window shadowing check on [T_{2j-1}, T_{2j+1}]."""
    out = []
    for j in sorted(symbols):
        lo, hi = seq.T[2 * j - 1], seq.T[2 * j + 1]
        idx = [i for i, t in enumerate(traj.t) if lo <= t <= hi]
        rets = [r for r in traj.returns if lo <= r <= hi]
        inner = [c for c in traj.inner if lo <= c <= hi]
        e = symbols[j]
        if e == 1:
            if not rets:
                if raise_missing:
                    raise MissingCrossing("no section crossing in a window with symbol 1", j=j,
                                          window=[lo, hi])
                sup = max((math.hypot(traj.x[i], traj.y[i]) for i in idx), default=math.inf)
                out.append(WindowReport(j, e, (lo, hi), None, sup, False, 0, len(inner),
                                        "missing crossing"))
                continue
            Tc = seq.T[2 * j]
            tc = min(rets, key=lambda r: abs(r - Tc))
            alpha = tc - Tc
            sup = 0.0
            for i in idx:
                gx, gy = homoclinic(traj.t[i] - Tc - alpha)
                sup = max(sup, math.hypot(traj.x[i] - gx, traj.y[i] - gy))
            ok = sup <= tol and len(rets) == 1
            out.append(WindowReport(j, e, (lo, hi), alpha, sup, ok, len(rets), len(inner),
                                    "" if ok else ("extra crossing" if len(rets) > 1
                                                   else "shadowing")))
        else:
            sup = max((math.hypot(traj.x[i], traj.y[i]) for i in idx), default=0.0)
            ok = sup <= tol and not rets
            out.append(WindowReport(j, e, (lo, hi), None, sup, ok, len(rets), len(inner),
                                    "" if ok else "not near the origin"))
    return out


def infer_coding(traj: MergedTrajectory, seq: TimeSequence, indices, homoclinic, tol) -> dict:
    """Symbol per window read off a trajectory: 1 (one loop), 0 (near origin) or None."""
    code = {}
    for j in indices:
        w1 = verify_property_C(traj, seq, {j: 1}, homoclinic, tol, raise_missing=False)[0]
        w0 = verify_property_C(traj, seq, {j: 0}, homoclinic, tol, raise_missing=False)[0]
        code[j] = 1 if w1.passed else 0 if w0.passed else None
    return code


@dataclass
class BernoulliReport:
    depth: int
    rows: list
    allPass: bool
    zeroFixedPoint: bool

    def to_dict(self) -> dict:
        return {"depth": self.depth, "allPass": self.allPass,
                "zeroFixedPoint": self.zeroFixedPoint, "rows": self.rows}


def zero_orbit(problem: ChaosProblem) -> MergedTrajectory:
    """The equilibrium at the origin sampled on the window grid."""
    lo, hi = problem.t_far(-1), problem.t_far(1)
    n = int(math.ceil((hi - lo) / problem.opts.h))
    t = [lo + i * (hi - lo) / n for i in range(n + 1)]
    return MergedTrajectory(t, [0.0] * len(t), [0.0] * len(t), [], [])


def bernoulli_check(problem: ChaosProblem, depth: int, windows: list | None = None,
                    tol: float | None = None, results: dict | None = None) -> BernoulliReport:
    """Psi(F(xi)) = sigma(Psi(xi)) on finite windows, F = flow from T_0 to T_2.

    The image F(xi) lies on the same solution, so its coding under the shifted sequence is read
    off the glued trajectory; the unshifted coding is read independently.
    """
    if depth > problem.depth:
        raise ValueError("depth exceeds the problem's window depth")
    tol = problem.opts.shadow_tol if tol is None else tol
    windows = windows or all_windows(depth)
    results = results if results is not None else {}
    rows = []
    shifted = problem.seq.shifted(1)
    for w in windows:
        key = window_label(w)
        res = results.get(key)
        if res is None:
            res = problem.glue(w, tol)
            results[key] = res
        traj = res.trajectory
        psi = infer_coding(traj, problem.seq, range(-depth, depth + 1), problem.homoclinic, tol)
        image = infer_coding(traj, shifted, range(-depth, depth), problem.homoclinic, tol)
        sigma_psi = {j: psi[j + 1] for j in range(-depth, depth)}
        ok = image == sigma_psi and None not in psi.values() and \
            all(psi[j] == w[j] for j in w)
        rows.append({"window": key, "psi": window_label(psi) if None not in psi.values()
                     else str(psi), "psiOfImage": str(image), "shiftOfPsi": str(sigma_psi),
                     "commutes": ok, "xiStar": list(res.xiStar)})
    zt = zero_orbit(problem)
    z_psi = infer_coding(zt, problem.seq, range(-depth, depth + 1), problem.homoclinic, tol)
    z_img = infer_coding(zt, shifted, range(-depth, depth), problem.homoclinic, tol)
    zero_ok = all(v == 0 for v in z_psi.values()) and all(v == 0 for v in z_img.values())
    return BernoulliReport(depth, rows, all(r["commutes"] for r in rows), zero_ok)
