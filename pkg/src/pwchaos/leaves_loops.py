"""Leaf endpoints on the transversal section, loop maps and the separation fit."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .errors import BisectionBracketFails, DomainExit, NoCrossing, OutOfRegime
from .integrator import (CROSSING, NEAR_ORIGIN, OMEGA_ZERO, IntegratorOptions, default_delta,
                         flow_to_section, integrate)
from .melnikov import FULL_TRACE, MODES, MelnikovIntegrand, MelnikovOptions
from .spectral import ConstantsTable, SpectralReport, analyze_origin, derived_constants
from .system import MINUS, PLUS, HomoclinicReference, PiecewiseSystem

FORWARD, BACKWARD = 1, -1


def _direction(value) -> int:
    if value in (FORWARD, "Forward", "forward", "fwd"):
        return FORWARD
    if value in (BACKWARD, "Backward", "backward", "bwd"):
        return BACKWARD
    raise ValueError(f"unknown direction {value!r}")


# ------------------------------------------------------------------ section coordinates

class SectionCoordinates:
    """Arc length along the switching curve, zero at the origin, positive toward gamma(0)."""

    def __init__(self, sys: PiecewiseSystem, homoclinic: HomoclinicReference, eps: float = 0.0):
        self.sys = sys
        self.half_width = math.sqrt(eps) if eps > 0 else default_delta(0.0)
        gx, gy = sys.G.diff("x"), sys.G.diff("y")
        self.linear = not any(g.depends_on(v) for g in (gx, gy) for v in ("x", "y"))
        p = homoclinic.crossing_point
        if self.linear:
            a, b = gx(0.0, 0.0), gy(0.0, 0.0)
            n = math.hypot(a, b)
            u = (-b / n, a / n)
            if u[0] * p[0] + u[1] * p[1] < 0:
                u = (-u[0], -u[1])
            self.u = u
        else:
            self._build_curve(p)
        self.l0 = self.arc(p)

    # nonlinear switching curves: follow the unit tangent from the origin
    def _tangent(self, x, y):
        a, b = self.sys.grad_G(x, y)
        n = math.hypot(a, b)
        return (-b * self._orient / n, a * self._orient / n)

    def _project(self, x, y):
        for _ in range(8):
            g = self.sys.G(x, y)
            a, b = self.sys.grad_G(x, y)
            n2 = a * a + b * b
            x, y = x - g * a / n2, y - g * b / n2
            if abs(g) < 1e-15:
                break
        return x, y

    def _build_curve(self, p):
        self._orient = 1.0
        a, b = self.sys.grad_G(0.0, 0.0)
        if -b * p[0] + a * p[1] < 0:
            self._orient = -1.0
        span = 2.0 * math.hypot(*p) + 1.0
        f = lambda s, z: self._tangent(z[0], z[1])
        kw = dict(method="DOP853", rtol=1e-13, atol=1e-15, dense_output=True)
        self._fwd = solve_ivp(f, (0.0, span), (0.0, 0.0), **kw)
        self._bwd = solve_ivp(f, (0.0, -span), (0.0, 0.0), **kw)
        self._span = span

    def point(self, s: float) -> tuple[float, float]:
        if self.linear:
            return (s * self.u[0], s * self.u[1])
        if abs(s) > self._span:
            raise ValueError("arc length outside the tabulated switching curve")
        sol = self._fwd if s >= 0 else self._bwd
        z = sol.sol(s)
        return self._project(float(z[0]), float(z[1]))

    def arc(self, point) -> float:
        x, y = point
        if self.linear:
            return x * self.u[0] + y * self.u[1]

        def tangential(s):
            px, py = self.point(s)
            tx, ty = self._tangent(px, py)
            return (x - px) * tx + (y - py) * ty
        guess = math.hypot(x, y)
        lo, hi = -self._span, self._span
        for a, b in ((guess - 0.2, guess + 0.2), (-guess - 0.2, -guess + 0.2), (lo, hi)):
            a, b = max(a, lo), min(b, hi)
            if tangential(a) * tangential(b) <= 0:
                return brentq(tangential, a, b, xtol=1e-15)
        raise ValueError("point is not on the tabulated switching curve")

    def distance(self, q, p) -> float:
        """Directed distance D(Q, P) = l(P) - l(Q)."""
        return self.arc(p) - self.arc(q)


# ------------------------------------------------------------------ leaf endpoints

@dataclass
class LeafEndpoints:
    tau: float
    eps: float
    Ps: tuple[float, float]
    Pu: tuple[float, float]
    sPs: float
    sPu: float
    separation: float                 # D(Ps, Pu) = l(Pu) - l(Ps)
    loopSideFwd: int                  # +1 when larger arc length loops forward
    loopSideBwd: int
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def _decompose(v_a, v_b, x, y) -> tuple[float, float]:
    """Coefficients (a, b) with (x, y) = a v_a + b v_b."""
    det = v_a[0] * v_b[1] - v_a[1] * v_b[0]
    a = (x * v_b[1] - y * v_b[0]) / det
    b = (v_a[0] * y - v_a[1] * x) / det
    return a, b


class _Dichotomy:
    """Loop (-1) or escape (+1) verdict of the orbit through a section point."""

    def __init__(self, sys, report: SpectralReport, eps: float, direction: int, r0: float,
                 opts: IntegratorOptions, budget: float):
        self.sys, self.eps, self.direction = sys, eps, direction
        self.r0, self.opts, self.budget = r0, opts, budget
        if direction == FORWARD:
            self.basis = (report.vSPlus, report.vUPlus)
        else:
            self.basis = (report.vUMinus, report.vSMinus)
        self.calls = 0

    def __call__(self, tau: float, point) -> int:
        self.calls += 1
        r0 = self.r0
        state = {"inside": False, "verdict": 0}

        def stop(t, x, y, reg, ev):
            rad = math.hypot(x, y)
            if ev is not None:
                if ev.kind == CROSSING and state["inside"]:
                    state["verdict"] = -1
                    return True
                return False
            if not state["inside"]:
                if rad < r0:
                    state["inside"] = True
                return False
            if rad >= r0:
                b = _decompose(*self.basis, x, y)[1]
                state["verdict"] = 1 if b > 0 else -1
                return True
            return False

        try:
            traj = integrate(self.sys, tau, point, tau + self.direction * self.budget, self.eps,
                             self.opts, stop=stop, record=False)
        except DomainExit:
            return 1
        if state["verdict"] == 0:
            _, x, y = traj.final
            b = _decompose(*self.basis, x, y)[1]
            return 1 if b > 0 else -1
        return state["verdict"]


def _bisect_leaf(verdict, tau, coords: SectionCoordinates, lo: float, hi: float, tol: float,
                 which: str) -> tuple[float, int, dict]:
    vlo, vhi = verdict(tau, coords.point(lo)), verdict(tau, coords.point(hi))
    if vlo == vhi:
        raise BisectionBracketFails(f"{which} leaf: bracket ends behave alike",
                                    tau=tau, bracket=[lo, hi], verdict=vlo)
    widths = [hi - lo]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        v = verdict(tau, coords.point(mid))
        if v == vlo:
            lo = mid
        else:
            hi = mid
        widths.append(hi - lo)
    loop_side = 1 if vhi < 0 else -1
    return 0.5 * (lo + hi), loop_side, {"iterations": len(widths) - 1, "width": hi - lo,
                                        "ends": [lo, hi], "verdicts": [vlo, vhi]}


@dataclass(frozen=True)
class LeafOptions:
    tol: float | None = None          # None: 1e-3 * eps
    r0_factor: float = 10.0
    bracket_factor: float = 1.0       # bracket half-width in units of sqrt(eps)
    integrator: IntegratorOptions = IntegratorOptions()
    budget: float | None = None


class LeafSolver:
    """Caches spectral data and coordinates for repeated leaf computations at one eps."""

    def __init__(self, sys: PiecewiseSystem, homoclinic: HomoclinicReference, eps: float,
                 opts: LeafOptions = LeafOptions(), report: SpectralReport | None = None):
        self.sys, self.homoclinic, self.eps, self.opts = sys, homoclinic, eps, opts
        self.report = report or analyze_origin(sys, homoclinic)
        self.consts: ConstantsTable = derived_constants(self.report)
        self.coords = SectionCoordinates(sys, homoclinic, eps)
        r0 = opts.r0_factor * math.sqrt(eps) if eps > 0 else 0.1
        budget = opts.budget or 20.0 / self.consts.lambdaLo * max(1.0, abs(math.log(eps or 1)))
        self.tol = opts.tol if opts.tol is not None else 1e-3 * eps
        self.fwd = _Dichotomy(sys, self.report, eps, FORWARD, r0, opts.integrator, budget)
        self.bwd = _Dichotomy(sys, self.report, eps, BACKWARD, r0, opts.integrator, budget)
        self._cache: dict[float, LeafEndpoints] = {}

    def endpoints(self, tau: float) -> LeafEndpoints:
        if tau in self._cache:
            return self._cache[tau]
        c = self.coords
        if self.eps == 0:
            p = self.homoclinic.crossing_point
            s = c.l0
            side_f = self._side(tau, FORWARD, s)
            side_b = self._side(tau, BACKWARD, s)
            res = LeafEndpoints(tau, 0.0, p, p, s, s, 0.0, side_f, side_b,
                                {"seeded": True})
        else:
            w = self.opts.bracket_factor * math.sqrt(self.eps)
            lo, hi = c.l0 - w, c.l0 + w
            sps, side_f, dps = _bisect_leaf(self.fwd, tau, c, lo, hi, self.tol, "stable")
            spu, side_b, dpu = _bisect_leaf(self.bwd, tau, c, lo, hi, self.tol, "unstable")
            res = LeafEndpoints(tau, self.eps, c.point(sps), c.point(spu), sps, spu, spu - sps,
                                side_f, side_b, {"stable": dps, "unstable": dpu})
        self._cache[tau] = res
        return res

    def _side(self, tau: float, direction: int, s: float) -> int:
        probe = 1e-3
        dich = self.fwd if direction == FORWARD else self.bwd
        return 1 if dich(tau, self.coords.point(s + probe)) < 0 else -1

    def time_to_ball(self, tau: float, radius: float) -> float:
        """First time (after tau) the forward orbit of Ps enters B(0, radius)."""
        ends = self.endpoints(tau)
        hit = {}

        def stop(t, x, y, reg, ev):
            if math.hypot(x, y) < radius:
                hit["t"] = t
                return True
            return False
        try:
            integrate(self.sys, tau, ends.Ps, tau + 100.0, self.eps, self.opts.integrator,
                      stop=stop, record=False)
        except DomainExit:
            return math.inf
        return hit.get("t", math.inf) - tau


def leaf_endpoints(sys, homoclinic, tau: float, eps: float,
                   opts: LeafOptions = LeafOptions()) -> LeafEndpoints:
    return LeafSolver(sys, homoclinic, eps, opts).endpoints(tau)


# ------------------------------------------------------------------ loop map

@dataclass
class LoopMapResult:
    d: float
    tau: float
    direction: int
    tHalf: float
    pHalf: tuple[float, float]
    t1: float
    p1: tuple[float, float]
    d1: float                   # offset of P1 from the stable (forward) leaf, loop side positive
    returnOffset: float         # offset of P1 from the unstable (forward) leaf
    regions: list
    boundsReport: dict
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def loop_map(solver: LeafSolver, d: float, tau: float, direction=FORWARD, nu: float | None = None,
             mu: float | None = None, strict: bool = False, record: bool = False) -> LoopMapResult:
    """One passage near the loop from Q at offset d off the leaf (stable forward, unstable backward)."""
    direction = _direction(direction)
    sys, eps, c, k = solver.sys, solver.eps, solver.coords, solver.consts
    nu = k.nu0 if nu is None else nu
    mu = k.mu0 / 2 if mu is None else mu
    if not d > 0:
        raise ValueError("d must be positive")
    regime_hi = eps ** ((1 + nu) / k.sigmaLo) if eps > 0 else math.inf
    in_regime = d <= regime_hi
    if strict and not in_regime:
        raise OutOfRegime("d outside J0", d=d, upper=regime_hi)
    ends = solver.endpoints(tau)
    if direction == FORWARD:
        s_start, side = ends.sPs, ends.loopSideFwd
    else:
        s_start, side = ends.sPu, ends.loopSideBwd
    q = c.point(s_start + side * d)
    opts = solver.opts.integrator
    budget = max(40.0, 4 * (k.SigmaHi + mu) * abs(math.log(d))) / k.lambdaLo
    ev_half, tr_half = flow_to_section(sys, tau, q, eps, direction, NEAR_ORIGIN, opts,
                                       budget=budget, record=record)
    ev1, tr1 = flow_to_section(sys, ev_half.time, ev_half.point, eps, direction, OMEGA_ZERO,
                               opts, budget=budget, region=ev_half.to_region, record=record)
    t1, p1 = ev1.time, ev1.point
    later = solver.endpoints(t1)
    s1 = c.arc(p1)
    if direction == FORWARD:
        d1 = side * (s1 - later.sPs)
        ret = side * (s1 - later.sPu)
        sigma, Sigma = k.sigmaFwd, k.SigmaFwd
    else:
        d1 = later.loopSideBwd * (s1 - later.sPu)
        ret = later.loopSideBwd * (s1 - later.sPs)
        sigma, Sigma = k.sigmaBwd, k.SigmaBwd
    ln_d = abs(math.log(d))
    fly = direction * (t1 - tau)
    lo_off, hi_off = d ** (sigma + mu), d ** (sigma - mu)
    lo_t, hi_t = (Sigma - mu) * ln_d, (Sigma + mu) * ln_d
    bounds = {
        "inRegime": in_regime, "regimeUpper": regime_hi, "mu": mu,
        "sigma": sigma, "Sigma": Sigma,
        "offsetLo": lo_off, "offsetHi": hi_off,
        "offsetPass": lo_off <= ret <= hi_off,
        "flyLo": lo_t, "flyHi": hi_t, "fly": fly,
        "flyPass": lo_t <= fly <= hi_t,
    }
    regions = [(ev_half.from_region, ev_half.to_region), (ev1.from_region, ev1.to_region)]
    diag = {}
    if record and eps > 0:
        ta = abs(math.log(eps)) / (k.lambdaUMinus if direction == FORWARD else k.lambdaUPlus)
        tb = abs(math.log(eps)) / abs(k.lambdaLo)
        ts = tr_half.t + tr1.t
        xs = tr_half.x + tr1.x
        ys = tr_half.y + tr1.y
        a, b = sorted((tau + direction * tb, t1 - direction * ta))
        mid = [math.hypot(x, y) for t, x, y in zip(ts, xs, ys) if a <= t <= b]
        diag["midLoopMax"] = max(mid) if mid else None
        diag["midLoopWindow"] = [a, b]
    return LoopMapResult(d, tau, direction, ev_half.time, ev_half.point, t1, p1, d1, ret,
                         regions, bounds, diag)


def fly_time_scaling(solver: LeafSolver, tau: float, ds, direction=FORWARD) -> dict:
    """Regression slope of the fly time against |ln d| and log d1 / log d per sample."""
    rows = [loop_map(solver, d, tau, direction) for d in ds]
    x = np.array([abs(math.log(d)) for d in ds])
    y = np.array([_direction(direction) * (r.t1 - tau) for r in rows])
    slope, intercept = np.polyfit(x, y, 1)
    expo = [math.log(abs(r.returnOffset)) / math.log(d) for r, d in zip(rows, ds)]
    return {"slope": float(slope), "intercept": float(intercept), "exponents": expo,
            "rows": rows}


# ------------------------------------------------------------------ separation fit

@dataclass
class SeparationFit:
    taus: list
    eps: list
    separations: dict           # eps -> list of D(Ps, Pu)
    melnikov: dict              # mode -> list of M(tau)
    fits: dict                  # mode -> {eps: {c, residual, correlation}}
    c: float | None
    modeVerdict: str | None
    degenerate: bool
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["separations"] = {str(k): v for k, v in self.separations.items()}
        d["fits"] = {m: {str(k): v for k, v in f.items()} for m, f in self.fits.items()}
        return d


def _fit(s: np.ndarray, m: np.ndarray) -> dict:
    mm = float(m @ m)
    if mm == 0 or not np.any(s):
        return {"c": None, "residual": float(np.sqrt(np.mean(s ** 2))), "correlation": None}
    c = float(s @ m) / mm
    res = s - c * m
    corr = float(np.corrcoef(s, m)[0, 1]) if np.std(s) > 0 and np.std(m) > 0 else None
    return {"c": c, "residual": float(np.sqrt(np.mean(res ** 2))), "correlation": corr}


def separation_fit(sys, homoclinic, taus, eps_list, leaf_opts: LeafOptions = LeafOptions(),
                   modes=MODES, solvers: dict | None = None) -> SeparationFit:
    """Least squares c in D(Ps, Pu)(tau) / eps ~ c M(tau), for each Melnikov mode."""
    taus = list(taus)
    seps = {}
    for eps in eps_list:
        solver = (solvers or {}).get(eps) or LeafSolver(sys, homoclinic, eps, leaf_opts)
        seps[eps] = [solver.endpoints(t).separation for t in taus]
    mel = {}
    if sys.has_perturbation():
        for mode in modes:
            ev = MelnikovIntegrand(sys, homoclinic, MelnikovOptions(mode=mode))
            mel[mode] = [ev.evaluate(t)[0] for t in taus]
    else:
        mel = {mode: [0.0] * len(taus) for mode in modes}
    fits = {mode: {eps: _fit(np.array(seps[eps]) / eps, np.array(mel[mode]))
                   for eps in eps_list} for mode in modes}
    degenerate = all(not any(v) for v in seps.values()) or not sys.has_perturbation()
    notes = []
    verdict, c = None, None
    if degenerate:
        notes.append("separation vanishes identically; fit is degenerate")
    else:
        def score(mode):
            corr = [f["correlation"] or 0.0 for f in fits[mode].values()]
            cs = [abs(f["c"]) for f in fits[mode].values() if f["c"] is not None]
            return (round(min(corr), 3), -max(abs(x - 1) for x in cs) if cs else -math.inf)
        verdict = max(modes, key=score)
        c = fits[verdict][eps_list[0]]["c"]
        if len(modes) > 1:
            others = [m for m in modes if m != verdict]
            if all(round(min((f["correlation"] or 0) for f in fits[m].values()), 3)
                   == score(verdict)[0] for m in others):
                notes.append("modes are equally correlated; verdict taken from |c| closest to 1")
    return SeparationFit(taus, list(eps_list), seps, mel, fits, c, verdict, degenerate, notes)
