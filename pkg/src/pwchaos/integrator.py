"""Adaptive event-located integration of the piecewise system in float64.

The stepper is an embedded 8(5,3) Runge-Kutta pair (the Dormand-Prince DOP853
tableau, taken from scipy) written for two scalar states. A step of size
``theta`` from the last accepted point serves as the continuous extension, so
switching-line crossings are located on an order-8 interpolant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from scipy.integrate._ivp import dop853_coefficients as _dop
from scipy.optimize import brentq

from .errors import (DomainExit, NoCrossing, SlidingDetected, StepUnderflow,
                     TangencyDetected)
from .system import MINUS, PLUS, PiecewiseSystem, region_name

_NS = _dop.N_STAGES
_A = [[float(v) for v in _dop.A[s][:s]] for s in range(_NS)]
_B = [float(v) for v in _dop.B]
_C = [float(v) for v in _dop.C[:_NS]]
_E3 = [float(v) for v in _dop.E3]
_E5 = [float(v) for v in _dop.E5]
_SAFETY, _MIN_FACTOR, _MAX_FACTOR = 0.9, 0.2, 10.0
_ERR_EXP = -1.0 / 8.0

CROSSING, SLIDING, TANGENCY = "Crossing", "SlidingOnset", "Tangency"


@dataclass(frozen=True)
class IntegratorOptions:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    tol_event: float = 1e-12
    tol_trans: float = 1e-8
    max_step: float = 0.1
    max_steps: int = 2_000_000


@dataclass(frozen=True)
class CrossingEvent:
    time: float
    point: tuple[float, float]
    from_region: int
    to_region: int
    trans_plus: float
    trans_minus: float
    kind: str

    def to_dict(self) -> dict:
        return {"time": self.time, "point": list(self.point),
                "fromRegion": region_name(self.from_region),
                "toRegion": region_name(self.to_region),
                "transversalityPlus": self.trans_plus,
                "transversalityMinus": self.trans_minus, "kind": self.kind}


@dataclass
class Trajectory:
    t: list = field(default_factory=list)
    x: list = field(default_factory=list)
    y: list = field(default_factory=list)
    region: list = field(default_factory=list)
    events: list = field(default_factory=list)
    stats: dict = field(default_factory=lambda: {"steps": 0, "rejected": 0, "max_error": 0.0})
    event_rows: set = field(default_factory=set)

    def append(self, t, x, y, region, is_event=False):
        if is_event:
            self.event_rows.add(len(self.t))
        self.t.append(t)
        self.x.append(x)
        self.y.append(y)
        self.region.append(region)

    @property
    def final(self) -> tuple[float, float, float]:
        return self.t[-1], self.x[-1], self.y[-1]

    def crossings(self) -> list:
        return [e for e in self.events if e.kind == CROSSING]

    def rows(self):
        for i, (t, x, y, r) in enumerate(zip(self.t, self.x, self.y, self.region)):
            yield t, x, y, r, int(i in self.event_rows)


def _dop_step(rhs, t, x, y, fx, fy, h, eps):
    kx = [fx]
    ky = [fy]
    for s in range(1, _NS):
        a = _A[s]
        dx = dy = 0.0
        for j in range(s):
            dx += a[j] * kx[j]
            dy += a[j] * ky[j]
        gx, gy = rhs(x + h * dx, y + h * dy, t + _C[s] * h, eps)
        kx.append(gx)
        ky.append(gy)
    sx = sy = 0.0
    for j in range(_NS):
        sx += _B[j] * kx[j]
        sy += _B[j] * ky[j]
    xn, yn = x + h * sx, y + h * sy
    fxn, fyn = rhs(xn, yn, t + h, eps)
    kx.append(fxn)
    ky.append(fyn)
    return xn, yn, fxn, fyn, kx, ky


def _error_norm(kx, ky, h, sx, sy):
    e5x = e5y = e3x = e3y = 0.0
    for j in range(_NS + 1):
        e5x += _E5[j] * kx[j]
        e5y += _E5[j] * ky[j]
        e3x += _E3[j] * kx[j]
        e3y += _E3[j] * ky[j]
    e5 = (e5x / sx) ** 2 + (e5y / sy) ** 2
    e3 = (e3x / sx) ** 2 + (e3y / sy) ** 2
    if e5 == 0.0 and e3 == 0.0:
        return 0.0
    return abs(h) * e5 / math.sqrt((e5 + 0.01 * e3) * 2)


class _Fields:
    """Compiled right-hand sides and switching function for one system."""

    def __init__(self, sys: PiecewiseSystem):
        self.sys = sys
        self.rhs = {PLUS: sys.rhs(PLUS), MINUS: sys.rhs(MINUS)}
        self.G = sys.G.compiled
        self.Gx = sys.G.diff("x").compiled
        self.Gy = sys.G.diff("y").compiled

    def transversality(self, x, y, t, eps):
        gx, gy = self.Gx(x, y, t, eps), self.Gy(x, y, t, eps)
        px, py = self.rhs[PLUS](x, y, t, eps)
        mx, my = self.rhs[MINUS](x, y, t, eps)
        return gx * px + gy * py, gx * mx + gy * my

    def crossing_cosines(self, x, y, t, eps):
        """grad G . f / (|grad G| |f|) for both fields; scale-free near equilibria."""
        gx, gy = self.Gx(x, y, t, eps), self.Gy(x, y, t, eps)
        ng = math.hypot(gx, gy) or 1.0
        out = []
        for region in (PLUS, MINUS):
            fx, fy = self.rhs[region](x, y, t, eps)
            out.append((gx * fx + gy * fy) / (ng * (math.hypot(fx, fy) or 1.0)))
        return tuple(out)


_FIELDS_CACHE: dict = {}


def fields_for(sys: PiecewiseSystem) -> _Fields:
    key = id(sys)
    entry = _FIELDS_CACHE.get(key)
    if entry is None or entry.sys is not sys:
        entry = _Fields(sys)
        _FIELDS_CACHE[key] = entry
    return entry


def classify_contact(tp: float, tm: float, from_region: int, direction: int,
                     tol_trans: float) -> str:
    """Kind of contact for a trajectory reaching the switching line from ``from_region``."""
    if abs(tp) <= tol_trans or abs(tm) <= tol_trans:
        return TANGENCY
    # effective rate of change of G along the integration direction
    dp, dm = direction * tp, direction * tm
    if from_region == MINUS:
        return CROSSING if dp > 0 and dm > 0 else SLIDING
    return CROSSING if dp < 0 and dm < 0 else SLIDING


def initial_region(fields: _Fields, x, y, t, eps, direction, opts) -> int:
    g = fields.G(x, y, t, eps)
    if abs(g) > opts.tol_event:
        return PLUS if g > 0 else MINUS
    tp, tm = fields.transversality(x, y, t, eps)
    cp, cm = fields.crossing_cosines(x, y, t, eps)
    dp, dm = direction * cp, direction * cm
    if dp > opts.tol_trans and dm > opts.tol_trans:
        return PLUS
    if dp < -opts.tol_trans and dm < -opts.tol_trans:
        return MINUS
    fp = fields.rhs[PLUS](x, y, t, eps)
    fm = fields.rhs[MINUS](x, y, t, eps)
    if max(map(abs, fp + fm)) <= opts.abs_tol:
        return PLUS if g >= 0 else MINUS
    raise SlidingDetected("start point on the switching line is not a transversal crossing",
                          t=t, point=[x, y], transversality=[tp, tm])


StopFn = Callable[[float, float, float, int, "CrossingEvent | None"], bool]


def integrate(sys: PiecewiseSystem, t0: float, x0, t1: float, eps: float,
              opts: IntegratorOptions | None = None, region: int | None = None,
              stop: StopFn | None = None, record: bool = True) -> Trajectory:
    """Integrate from (t0, x0) to t1 (t1 < t0 integrates backward).

    ``stop(t, x, y, region, event)`` is called after each accepted step and each
    crossing; returning True ends the integration there.
    """
    opts = opts or IntegratorOptions()
    if t1 == t0:
        raise ValueError("t1 must differ from t0")
    direction = 1 if t1 > t0 else -1
    fl = fields_for(sys)
    G = fl.G
    x, y = float(x0[0]), float(x0[1])
    if not sys.in_box(x, y):
        raise DomainExit("initial point outside the domain box", point=[x, y])
    t = float(t0)
    reg = region if region is not None else initial_region(fl, x, y, t, eps, direction, opts)
    rhs = fl.rhs[reg]
    traj = Trajectory()
    traj.append(t, x, y, reg)
    fx, fy = rhs(x, y, t, eps)
    h_abs = min(opts.max_step, 0.01)
    rtol, atol = opts.rel_tol, opts.abs_tol
    steps = 0
    while direction * (t1 - t) > 0:
        steps += 1
        if steps > opts.max_steps:
            raise StepUnderflow("step budget exhausted", t=t, point=[x, y])
        min_step = 10 * abs(math.nextafter(t, direction * math.inf) - t)
        h_abs = min(h_abs, opts.max_step)
        while True:
            if h_abs < min_step:
                raise StepUnderflow("step size underflow", t=t, point=[x, y])
            h = h_abs * direction
            if direction * (t + h - t1) > 0:
                h = t1 - t
                h_abs = abs(h)
            xn, yn, fxn, fyn, kx, ky = _dop_step(rhs, t, x, y, fx, fy, h, eps)
            sx = atol + max(abs(x), abs(xn)) * rtol
            sy = atol + max(abs(y), abs(yn)) * rtol
            err = _error_norm(kx, ky, h, sx, sy)
            if err < 1:
                factor = _MAX_FACTOR if err == 0 else min(_MAX_FACTOR, _SAFETY * err ** _ERR_EXP)
                traj.stats["max_error"] = max(traj.stats["max_error"], err)
                break
            h_abs *= max(_MIN_FACTOR, _SAFETY * err ** _ERR_EXP)
            traj.stats["rejected"] += 1
        traj.stats["steps"] += 1
        gn = G(xn, yn, t + h, eps)
        if (gn > 0 and reg == MINUS) or (gn < 0 and reg == PLUS):
            ev = _locate(fl, rhs, t, x, y, fx, fy, h, eps, reg, direction, opts)
            traj.append(ev.time, ev.point[0], ev.point[1], reg, is_event=True)
            traj.events.append(ev)
            if ev.kind == SLIDING:
                raise SlidingDetected("sliding onset on the switching line",
                                      event=ev.to_dict(), trajectory=traj)
            if ev.kind == TANGENCY:
                raise TangencyDetected("tangential contact with the switching line",
                                       event=ev.to_dict(), trajectory=traj)
            t, (x, y) = ev.time, ev.point
            reg = ev.to_region
            rhs = fl.rhs[reg]
            fx, fy = rhs(x, y, t, eps)
            if stop is not None and stop(t, x, y, reg, ev):
                return traj
            h_abs = max(abs(h) * 0.5, min_step * 10)
            continue
        t, x, y, fx, fy = t + h, xn, yn, fxn, fyn
        if not sys.in_box(x, y):
            traj.append(t, x, y, reg)
            raise DomainExit("trajectory left the domain box", t=t, point=[x, y],
                             trajectory=traj)
        if record or stop is None:
            traj.append(t, x, y, reg)
        if stop is not None and stop(t, x, y, reg, None):
            if not record:
                traj.append(t, x, y, reg)
            return traj
        h_abs *= factor
    if not record and traj.t[-1] != t:
        traj.append(t, x, y, reg)
    return traj


def _locate(fl: _Fields, rhs, t, x, y, fx, fy, h, eps, reg, direction, opts) -> CrossingEvent:
    G = fl.G

    def g_at(theta):
        xs, ys = _dop_step(rhs, t, x, y, fx, fy, theta, eps)[:2]
        return G(xs, ys, t + theta, eps)

    lo, hi = 0.0, h
    theta = brentq(lambda s: g_at(s * h), 0.0, 1.0, xtol=1e-16, rtol=1e-15, maxiter=200) * h
    xs, ys = _dop_step(rhs, t, x, y, fx, fy, theta, eps)[:2]
    gv = G(xs, ys, t + theta, eps)
    if abs(gv) >= opts.tol_event:
        # polish with a secant step on theta
        g_lo, g_hi = g_at(lo), g_at(hi)
        for _ in range(60):
            theta = lo - g_lo * (hi - lo) / (g_hi - g_lo)
            gv = g_at(theta)
            if abs(gv) < opts.tol_event:
                break
            if (gv > 0) == (g_lo > 0):
                lo, g_lo = theta, gv
            else:
                hi, g_hi = theta, gv
        xs, ys = _dop_step(rhs, t, x, y, fx, fy, theta, eps)[:2]
    te = t + theta
    tp, tm = fl.transversality(xs, ys, te, eps)
    kind = classify_contact(*fl.crossing_cosines(xs, ys, te, eps), reg, direction,
                            opts.tol_trans)
    return CrossingEvent(te, (xs, ys), reg, -reg, tp, tm, kind)


def step_map(sys: PiecewiseSystem, region: int, t: float, x0, h: float, eps: float):
    """One DOP853 step of size h without error control (used by tests)."""
    rhs = fields_for(sys).rhs[region]
    fx, fy = rhs(x0[0], x0[1], t, eps)
    return _dop_step(rhs, t, x0[0], x0[1], fx, fy, h, eps)[:2]


# ---------------------------------------------------------------- sections

OMEGA_ZERO = "OmegaZero"
NEAR_ORIGIN = "NearOriginSegment"


def default_budget(lambda_lo: float, eps: float) -> float:
    """Time budget 50 |ln eps| / lambda_lo, with eps floored at 1e-8."""
    return 50.0 / lambda_lo * abs(math.log(max(eps, 1e-8)))


def default_delta(eps: float) -> float:
    """Half-width of the near-origin segment: sqrt(eps), or 0.1 when eps = 0."""
    return math.sqrt(eps) if eps > 0 else 0.1


def flow_to_section(sys: PiecewiseSystem, t0: float, x0, eps: float, direction: int = 1,
                    section: str = OMEGA_ZERO, opts: IntegratorOptions | None = None,
                    delta: float | None = None, budget: float | None = None,
                    lambda_lo: float = 1.0, region: int | None = None,
                    record: bool = True) -> tuple[CrossingEvent, Trajectory]:
    """Integrate until the first transversal crossing of the requested section."""
    if delta is None:
        delta = default_delta(eps)
    if budget is None:
        budget = default_budget(lambda_lo, eps)
    found = []

    def stop(t, x, y, reg, ev):
        if ev is None or ev.kind != CROSSING:
            return False
        if section == NEAR_ORIGIN and math.hypot(*ev.point) >= delta:
            return False
        found.append(ev)
        return True

    traj = integrate(sys, t0, x0, t0 + direction * budget, eps, opts, region=region,
                     stop=stop, record=record)
    if not found:
        raise NoCrossing(f"no crossing of {section} within the time budget",
                         budget=budget, final=list(traj.final))
    return found[0], traj
