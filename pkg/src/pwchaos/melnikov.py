"""Melnikov function of a piecewise smooth homoclinic loop and its time derivative."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import quad

from .errors import MelnikovError
from .expression import Expression
from .system import MINUS, PLUS, HomoclinicReference, PiecewiseSystem

FULL_TRACE = "FullTrace"
TRACE_FREE = "SimplifiedTraceFree"
MODES = (FULL_TRACE, TRACE_FREE)

_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)


@dataclass(frozen=True)
class MelnikovOptions:
    mode: str = FULL_TRACE
    t_cut: float | None = None   # None: 40 / lambda_lo
    tol: float = 1e-10
    limit: int = 2000
    lambda_lo: float | None = None   # None: taken from the spectral analysis

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


@dataclass
class MelnikovProfile:
    grid: list
    values: list
    derivatives: list | None
    t_cut: float
    errors: list
    mode: str
    deriv_errors: list | None = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def rows(self):
        for i, tau in enumerate(self.grid):
            mp = self.derivatives[i] if self.derivatives is not None else math.nan
            err = self.errors[i]
            if self.deriv_errors is not None:
                err = max(err, self.deriv_errors[i])
            yield tau, self.values[i], mp, err


def closed_form_A(k: float, theta: float) -> float:
    """2k / (4 pi^2 + k^2) * sin(2 pi theta)."""
    if k <= 0:
        raise ValueError("k must be positive")
    return 2 * k / (4 * math.pi ** 2 + k ** 2) * math.sin(2 * math.pi * theta)


def closed_form_M(theta: float) -> float:
    """Trace-free Melnikov function of the periodically forced loop example."""
    return 2 * closed_form_A(3, theta) - closed_form_A(2, theta)


C1 = (8 * math.pi ** 2 + 3) / ((4 * math.pi ** 2 + 9) * (math.pi ** 2 + 1))


class _TraceWeight:
    """exp(-int_0^t tr f_x(gamma(s)) ds) on one half-line.

    The exponent is tabulated on a fine grid (Gauss-Legendre per cell) and interpolated by a
    cubic Hermite spline whose slopes are the exact trace values.
    """

    _STEP = 0.01

    def __init__(self, trace, gamma, side: int, reach: float):
        self.trace = trace
        self.gamma = gamma
        self.side = side
        n = int(math.ceil(reach / self._STEP)) + 2
        knots = side * self._STEP * np.arange(n)
        cum = np.zeros(n)
        for i in range(1, n):
            cum[i] = cum[i - 1] + self._integral(knots[i - 1], knots[i])
        slopes = np.array([self._tr(t) for t in knots])
        self.reach = float(knots[-1])
        self.cum, self.slopes = cum.tolist(), slopes.tolist()

    def _tr(self, s: float) -> float:
        x, y = self.gamma(s)
        return self.trace(x, y, s, 0.0)

    def _integral(self, a: float, b: float) -> float:
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        return half * sum(w * self._tr(mid + half * x) for x, w in zip(_GL_X, _GL_W))

    def _exponent(self, t: float) -> float:
        h = self._STEP
        u = abs(t) / h
        i = min(int(u), len(self.cum) - 2)
        w = u - i
        # Hermite basis on the cell, slopes scaled to the local variable
        y0, y1 = self.cum[i], self.cum[i + 1]
        m0, m1 = self.side * h * self.slopes[i], self.side * h * self.slopes[i + 1]
        w2, w3 = w * w, w * w * w
        return ((2 * w3 - 3 * w2 + 1) * y0 + (w3 - 2 * w2 + w) * m0
                + (-2 * w3 + 3 * w2) * y1 + (w3 - w2) * m1)

    def __call__(self, t: float) -> float:
        if abs(t) <= abs(self.reach):
            return math.exp(-self._exponent(t))
        return math.exp(-(self.cum[-1] + self._integral(self.reach, t)))


def _trace_expression(f: tuple[Expression, Expression]) -> Expression:
    return Expression.parse(f"({f[0].diff('x')}) + ({f[1].diff('y')})")


def _time_derivative(g: tuple[Expression, Expression], h: float = 1e-5):
    """d/dt of g as a float closure; symbolic when possible, central differences otherwise."""
    try:
        dg = tuple(c.diff("t").compiled for c in g)
        return lambda x, y, t: (dg[0](x, y, t, 0.0), dg[1](x, y, t, 0.0))
    except Exception:
        gx, gy = g[0].compiled, g[1].compiled

        def fd(x, y, t):
            return ((gx(x, y, t + h, 0.0) - gx(x, y, t - h, 0.0)) / (2 * h),
                    (gy(x, y, t + h, 0.0) - gy(x, y, t - h, 0.0)) / (2 * h))
        return fd


def transversality_factors(sys: PiecewiseSystem, homoclinic: HomoclinicReference):
    """c_perp^± = |grad G| / (grad G . f^±) at gamma(0)."""
    p = homoclinic.crossing_point
    gx, gy = sys.grad_G(*p)
    norm = math.hypot(gx, gy)
    out = {}
    for region in (PLUS, MINUS):
        fx, fy = sys.rhs(region)(p[0], p[1], 0.0, 0.0)
        dot = gx * fx + gy * fy
        if dot <= 0:
            raise MelnikovError("homoclinic crossing is not transversal",
                                region=region, dot=dot)
        out[region] = norm / dot
    return out


def _lambda_lo(sys: PiecewiseSystem) -> float:
    from .spectral import analyze_origin, derived_constants
    return derived_constants(analyze_origin(sys)).lambdaLo


class MelnikovIntegrand:
    """Everything needed to evaluate M or M' for one system; reusable across alpha."""

    def __init__(self, sys: PiecewiseSystem, homoclinic: HomoclinicReference,
                 opts: MelnikovOptions = MelnikovOptions()):
        self.sys = sys
        self.opts = opts
        self.cperp = transversality_factors(sys, homoclinic)
        lam = opts.lambda_lo if opts.lambda_lo is not None else _lambda_lo(sys)
        self.lambda_lo = lam
        self.t_cut = opts.t_cut if opts.t_cut is not None else 40.0 / lam
        self.zero = not sys.has_perturbation()
        gm = tuple(c.compiled for c in homoclinic.minus)
        gp = tuple(c.compiled for c in homoclinic.plus)
        self.gamma = {MINUS: lambda t: (gm[0](0.0, 0.0, t, 0.0), gm[1](0.0, 0.0, t, 0.0)),
                      PLUS: lambda t: (gp[0](0.0, 0.0, t, 0.0), gp[1](0.0, 0.0, t, 0.0))}
        self.field = {r: sys.unperturbed().rhs(r) for r in (PLUS, MINUS)}
        gx, gy = sys.g[0].compiled, sys.g[1].compiled
        self.g = lambda x, y, t: (gx(x, y, t, 0.0), gy(x, y, t, 0.0))
        self._dg = None
        self.weight = {}
        if opts.mode == FULL_TRACE:
            for r, side in ((MINUS, -1), (PLUS, 1)):
                f = sys.f_plus if r == PLUS else sys.f_minus
                tr = _trace_expression(f).compiled
                self.weight[r] = _TraceWeight(tr, self.gamma[r], side, self.t_cut + 1)

    @property
    def dg(self):
        if self._dg is None:
            self._dg = _time_derivative(self.sys.g)
        return self._dg

    def _integrand(self, region: int, alpha: float, forcing):
        gamma, field_, c = self.gamma[region], self.field[region], self.cperp[region]
        weight = self.weight.get(region)

        def h(t):
            x, y = gamma(t)
            fx, fy = field_(x, y, t, 0.0)
            ax, ay = forcing(x, y, t + alpha)
            v = c * (fx * ay - fy * ax)
            return v * weight(t) if weight is not None else v
        return h

    def _tail(self, region: int, alpha: float, forcing) -> float:
        """Crude bound on the integral beyond T_cut: |integrand| / lambda_lo, sampled."""
        side = 1 if region == PLUS else -1
        h = self._integrand(region, alpha, forcing)
        peak = max(abs(h(side * (self.t_cut + s))) for s in (0.0, 0.13, 0.29, 0.41, 0.77))
        return 2 * peak / self.lambda_lo

    def evaluate(self, alpha: float, derivative: bool = False) -> tuple[float, float]:
        if self.zero:
            return 0.0, 0.0
        forcing = self.dg if derivative else self.g
        total, err = 0.0, 0.0
        for region, (a, b) in ((MINUS, (-self.t_cut, 0.0)), (PLUS, (0.0, self.t_cut))):
            h = self._integrand(region, alpha, forcing)
            pts = [-alpha] if a < -alpha < b else None
            val, e = quad(h, a, b, points=pts, epsabs=self.opts.tol / 4, epsrel=1e-13,
                          limit=self.opts.limit)
            total += val
            err += e + self._tail(region, alpha, forcing)
        if not math.isfinite(total) or err > self.opts.tol:
            raise MelnikovError("quadrature tolerance not met; raise T_cut or limit",
                                alpha=alpha, estimate=err, tol=self.opts.tol,
                                t_cut=self.t_cut)
        return total, err


def melnikov_at(sys, homoclinic, alpha: float, opts: MelnikovOptions = MelnikovOptions()):
    """(M(alpha), error estimate)."""
    return MelnikovIntegrand(sys, homoclinic, opts).evaluate(alpha)


def melnikov_deriv_at(sys, homoclinic, alpha: float, opts: MelnikovOptions = MelnikovOptions()):
    """(M'(alpha), error estimate), with dg/dt in the integrand."""
    return MelnikovIntegrand(sys, homoclinic, opts).evaluate(alpha, derivative=True)


def uniform_grid(start: float, stop: float, step: float) -> list[float]:
    if step <= 0:
        raise ValueError("step must be positive")
    if stop < start:
        raise ValueError("empty range")
    n = int(math.floor((stop - start) / step + 1e-9))
    return [start + i * step for i in range(n + 1)]


def _profile_chunk(args):
    sys, hom, opts, taus, deriv = args
    ev = MelnikovIntegrand(sys, hom, opts)
    out = []
    for tau in taus:
        m = ev.evaluate(tau)
        d = ev.evaluate(tau, derivative=True) if deriv else (math.nan, math.nan)
        out.append((m, d))
    return out


def melnikov_profile(sys, homoclinic, start: float, stop: float, step: float,
                     opts: MelnikovOptions = MelnikovOptions(), deriv: bool = False,
                     threads: int = 1) -> MelnikovProfile:
    """Sample M (and optionally M') on a uniform grid.

    With ``threads > 1`` the grid is split into contiguous chunks evaluated in worker
    processes; each sample is computed independently so results do not depend on scheduling.
    """
    grid = uniform_grid(start, stop, step)
    if threads > 1 and len(grid) > 1:
        chunks = [grid[i::threads] for i in range(threads)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_profile_chunk,
                                  [(sys, homoclinic, opts, c, deriv) for c in chunks]))
        results = [None] * len(grid)
        for i, part in enumerate(parts):
            for j, r in enumerate(part):
                results[i + j * threads] = r
    else:
        results = _profile_chunk((sys, homoclinic, opts, grid, deriv))
    t_cut = opts.t_cut if opts.t_cut is not None else 40.0 / (
        opts.lambda_lo if opts.lambda_lo is not None else _lambda_lo(sys))
    return MelnikovProfile(
        grid=grid,
        values=[r[0][0] for r in results],
        errors=[r[0][1] for r in results],
        derivatives=[r[1][0] for r in results] if deriv else None,
        deriv_errors=[r[1][1] for r in results] if deriv else None,
        t_cut=t_cut, mode=opts.mode)
