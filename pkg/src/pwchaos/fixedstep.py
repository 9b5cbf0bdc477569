"""Fixed-step explicit Runge-Kutta flow over a uniform grid in arbitrary precision.

The map (start state -> state at grid times) is smooth in the start data: crossings of the
switching curve are resolved by solving for the partial step that lands on it, then the
remaining fraction of the step is taken with the other field. Forward and backward runs
use independent schemes (h > 0 and h < 0); they are not inverse to each other.
"""
from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field

import gmpy2
from gmpy2 import mpfr
from scipy.integrate._ivp import dop853_coefficients as _dop

from .errors import SlidingDetected
from .system import MINUS, PLUS, PiecewiseSystem

_NS = _dop.N_STAGES
_A = [[float(v) for v in _dop.A[s][:s]] for s in range(_NS)]
_B = [float(v) for v in _dop.B]
_C = [float(v) for v in _dop.C[:_NS]]

STOP = "stop"


@contextmanager
def working_precision(bits: int):
    with gmpy2.context(gmpy2.get_context(), precision=bits):
        yield


@dataclass
class SchemeEvent:
    time: object
    x: object
    y: object
    from_region: int
    to_region: int

    @property
    def point(self) -> tuple[float, float]:
        return float(self.x), float(self.y)


@dataclass
class SchemeRun:
    t: list = field(default_factory=list)        # floats, for reporting
    x: list = field(default_factory=list)
    y: list = field(default_factory=list)
    region: list = field(default_factory=list)
    events: list = field(default_factory=list)   # SchemeEvent (exact numbers)
    final: tuple | None = None                   # (t, x, y, region) exact
    reason: str = "end"
    steps: int = 0


class FixedStepFlow:
    """Order-8 explicit RK (12 stages) with constant step |h| in ``bits`` of precision."""

    def __init__(self, sys: PiecewiseSystem, eps: float, bits: int, h: float = 0.1,
                 tol_trans: float = 1e-8):
        self.sys, self.bits, self.h_abs, self.tol_trans = sys, bits, h, tol_trans
        with working_precision(bits):
            self.eps = mpfr(eps)
            self.A = [[(j, mpfr(a)) for j, a in enumerate(row) if a != 0.0] for row in _A]
            self.B = [(j, mpfr(b)) for j, b in enumerate(_B) if b != 0.0]
            self.C = [mpfr(c) for c in _C]
        self.rhs = {PLUS: sys.rhs(PLUS, bits), MINUS: sys.rhs(MINUS, bits)}
        self.G = sys.switching(bits)
        self.Gx = sys.G.diff("x")
        self.Gy = sys.G.diff("y")
        self._full = {}

    def _coeffs(self, h):
        key = (h > 0)
        if key not in self._full:
            self._full[key] = ([[(j, h * a) for j, a in row] for row in self.A],
                               [(j, h * b) for j, b in self.B],
                               [h * c for c in self.C])
        return self._full[key]

    def step(self, region: int, t, x, y, h, full: bool = False):
        f = self.rhs[region]
        eps = self.eps
        if full:
            A, B, C = self._coeffs(h)
        else:
            A = [[(j, h * a) for j, a in row] for row in self.A]
            B = [(j, h * b) for j, b in self.B]
            C = [h * c for c in self.C]
        kx, ky = [], []
        for s in range(_NS):
            xs, ys = x, y
            for j, a in A[s]:
                xs += a * kx[j]
                ys += a * ky[j]
            gx, gy = f(xs, ys, t + C[s], eps)
            kx.append(gx)
            ky.append(gy)
        xn, yn = x, y
        for j, b in B:
            xn += b * kx[j]
            yn += b * ky[j]
        return xn, yn

    def _g(self, x, y):
        return self.G(x, y, 0, 0)[0]

    def _locate(self, region, t, x, y, h, g0, g1):
        """Fraction theta in (0, 1] of the step landing on the switching curve (Illinois)."""
        a, b, fa, fb = mpfr(0), mpfr(1), g0, g1
        side = 0
        tol = mpfr(2) ** (-(self.bits - 8))
        th, xc, yc = b, None, None
        for _ in range(4 * self.bits):
            th = (a * fb - b * fa) / (fb - fa)
            xc, yc = self.step(region, t, x, y, th * h)
            fc = self._g(xc, yc)
            if fc == 0 or b - a < tol:
                break
            if (fc > 0) == (fb > 0):
                b, fb = th, fc
                if side == -1:
                    fa /= 2
                side = -1
            else:
                a, fa = th, fc
                if side == 1:
                    fb /= 2
                side = 1
            if abs(b - a) < tol:
                break
        return th, xc, yc

    def _classify(self, t, x, y, from_region: int, direction: int) -> int:
        xf, yf, tf = float(x), float(y), float(t)
        gx, gy = self.Gx(xf, yf), self.Gy(xf, yf)
        eps = float(self.eps)
        fp = self.sys.rhs(PLUS)(xf, yf, tf, eps)
        fm = self.sys.rhs(MINUS)(xf, yf, tf, eps)
        # normalised: both fields vanish at an equilibrium on the curve
        ng = math.hypot(gx, gy)
        tp = direction * (gx * fp[0] + gy * fp[1]) / (ng * math.hypot(*fp) or 1.0)
        tm = direction * (gx * fm[0] + gy * fm[1]) / (ng * math.hypot(*fm) or 1.0)
        to = -from_region
        # moving from Omega^- to Omega^+ needs grad G . f pointing toward +
        want = 1 if to == PLUS else -1
        if want * tp > self.tol_trans and want * tm > self.tol_trans:
            return to
        raise SlidingDetected("non-transversal contact in the fixed-step flow",
                              t=tf, point=[xf, yf], trans_plus=tp, trans_minus=tm)

    def run(self, t0, x0, y0, region: int, direction: int, n_steps: int, monitor=None,
            record: bool = False) -> SchemeRun:
        """Advance ``n_steps`` grid steps; ``monitor(k, t, x, y, region, event)`` may stop early."""
        out = SchemeRun()
        with working_precision(self.bits):
            h = mpfr(direction * self.h_abs)
            t0 = mpfr(t0)
            x, y, reg = mpfr(x0), mpfr(y0), region
            t = t0
            if record:
                self._rec(out, t, x, y, reg)
            for k in range(1, n_steps + 1):
                t_next = t0 + k * h
                xn, yn = self.step(reg, t, x, y, h, full=True)
                gn = self._g(xn, yn)
                rem_t, rem_h = t, h
                cx, cy = x, y
                guard = 0
                while (gn > 0 and reg == MINUS) or (gn < 0 and reg == PLUS):
                    guard += 1
                    if guard > 4:
                        raise SlidingDetected("repeated switching inside one step",
                                              t=float(rem_t))
                    g0 = self._g(cx, cy)
                    th, xc, yc = self._locate(reg, rem_t, cx, cy, rem_h, g0, gn)
                    tc = rem_t + th * rem_h
                    new = self._classify(tc, xc, yc, reg, direction)
                    ev = SchemeEvent(tc, xc, yc, reg, new)
                    out.events.append(ev)
                    if record:
                        self._rec(out, tc, xc, yc, new)
                    reg = new
                    rem_h = t_next - tc
                    rem_t, cx, cy = tc, xc, yc
                    if monitor is not None and monitor(k, tc, xc, yc, reg, ev):
                        out.reason = STOP
                        out.final = (tc, xc, yc, reg)
                        out.steps = k
                        return out
                    xn, yn = self.step(reg, rem_t, cx, cy, rem_h)
                    gn = self._g(xn, yn)
                t, x, y = t_next, xn, yn
                if record:
                    self._rec(out, t, x, y, reg)
                if monitor is not None and monitor(k, t, x, y, reg, None):
                    out.reason = STOP
                    out.final = (t, x, y, reg)
                    out.steps = k
                    return out
            out.final = (t, x, y, reg)
            out.steps = n_steps
        return out

    @staticmethod
    def _rec(out: SchemeRun, t, x, y, reg):
        out.t.append(float(t))
        out.x.append(float(x))
        out.y.append(float(y))
        out.region.append(reg)


def bits_for(span: float, rate: float, guard: int = 96) -> int:
    """Precision that keeps ``guard`` bits after amplification by exp(rate * span)."""
    return guard + int(math.ceil(abs(span) * rate / math.log(2)))
