"""Linearization at the origin, hypothesis verdicts, scenario label and constants."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import SpectralError
from .system import MINUS, PLUS, HomoclinicReference, PiecewiseSystem

DEGENERACY_TOL = 1e-8
PROBE_RADIUS = 1e-3


def jacobian(sys: PiecewiseSystem, region: int, point=(0.0, 0.0), step: float = 1e-6,
             force_fd: bool = False) -> np.ndarray:
    """Jacobian of f^region (eps = 0). Analytic for polynomial formulas."""
    f = sys.f_plus if region == PLUS else sys.f_minus
    x0, y0 = point
    if not force_fd and all(c.is_polynomial() for c in f):
        return np.array([[c.diff(v)(x0, y0) for v in ("x", "y")] for c in f])
    jac = np.empty((2, 2))
    for j, (dx, dy) in enumerate(((step, 0.0), (0.0, step))):
        for i, c in enumerate(f):
            jac[i, j] = (c(x0 + dx, y0 + dy) - c(x0 - dx, y0 - dy)) / (2 * step)
    return jac


def _unit(v) -> tuple[float, float]:
    n = math.hypot(v[0], v[1])
    return (v[0] / n, v[1] / n)


def _angle(v) -> float:
    return math.atan2(v[1], v[0]) % (2 * math.pi)


def winding_number(point, polygon) -> int:
    """Winding number of a closed polyline around ``point``."""
    px, py = point
    wn = 0
    n = len(polygon)
    for i in range(n):
        x0, y0 = polygon[i]
        x1, y1 = polygon[(i + 1) % n]
        cross = (x1 - x0) * (py - y0) - (px - x0) * (y1 - y0)
        if y0 <= py < y1 and cross > 0:
            wn += 1
        elif y1 <= py < y0 and cross < 0:
            wn -= 1
    return wn


@dataclass
class SpectralReport:
    lambdaSPlus: float
    lambdaUPlus: float
    lambdaSMinus: float
    lambdaUMinus: float
    vSPlus: tuple[float, float]
    vUPlus: tuple[float, float]
    vSMinus: tuple[float, float]
    vUMinus: tuple[float, float]
    gradG0: tuple[float, float]
    verdicts: dict
    scenario: int | None
    f2Labeling: str | None = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def hypotheses_hold(self) -> bool:
        return all(self.verdicts.get(k) for k in ("F0", "F1", "F2", "K"))


@dataclass(frozen=True)
class ConstantsTable:
    sigmaFwdPlus: float
    sigmaFwdMinus: float
    sigmaFwd: float
    sigmaBwdPlus: float
    sigmaBwdMinus: float
    sigmaBwd: float
    sigmaLo: float
    sigmaHi: float
    SigmaFwdPlus: float
    SigmaBwdMinus: float
    SigmaFwd: float
    SigmaBwd: float
    SigmaLo: float
    SigmaHi: float
    lambdaLo: float
    lambdaHi: float
    K0: float
    nu0: float
    mu0: float

    def to_dict(self) -> dict:
        return asdict(self)


def _eigen(jac: np.ndarray):
    vals, vecs = np.linalg.eig(jac)
    if np.iscomplexobj(vals) and np.any(np.abs(vals.imag) > 0):
        return None
    vals = vals.real
    vecs = vecs.real
    i_s, i_u = (0, 1) if vals[0] < vals[1] else (1, 0)
    return (float(vals[i_s]), _unit(vecs[:, i_s]), float(vals[i_u]), _unit(vecs[:, i_u]))


def _orient(v, grad, want_positive: bool):
    """Flip v so that sign(grad . v) matches; None when grad . v vanishes."""
    s = grad[0] * v[0] + grad[1] * v[1]
    if abs(s) <= DEGENERACY_TOL:
        return None
    if (s > 0) != want_positive:
        v = (-v[0], -v[1])
    return v


def f2_labeling(v_u_plus, v_u_minus, v_s_plus, v_s_minus) -> tuple[bool, str]:
    """Position of v_s^± relative to the polyline of the two unstable rays.

    Sector 1 is swept counterclockwise from the ray of v_u^+ to the ray of v_u^-.
    """
    a0 = _angle(v_u_plus)
    width = (_angle(v_u_minus) - a0) % (2 * math.pi)

    def sector(v):
        rel = (_angle(v) - a0) % (2 * math.pi)
        return 1 if 0 < rel < width else 2

    sp, sm = sector(v_s_plus), sector(v_s_minus)
    label = f"vS+ in Pi{sp}, vS- in Pi{sm}"
    return sp != sm, label


def classify_scenario(v_u_plus, v_s_minus, homoclinic: HomoclinicReference,
                      rho: float = PROBE_RADIUS, samples: int = 2000) -> int:
    poly = homoclinic.polyline(samples)

    def inside(v):
        return winding_number((rho * v[0], rho * v[1]), poly) != 0

    iu, isn = inside(v_u_plus), inside(v_s_minus)
    if not iu and not isn:
        return 1
    if iu and isn:
        return 2
    if iu and not isn:
        return 3
    return 4


def analyze_origin(sys: PiecewiseSystem, homoclinic: HomoclinicReference | None = None,
                   fd_step: float = 1e-6, strict: bool = False) -> SpectralReport:
    """Eigendata of both one-sided fields at 0 and verdicts on F0, F1, F2, K."""
    notes = []
    if not sys.in_box(0.0, 0.0):
        raise SpectralError("origin outside the domain box")
    fp0 = sys.rhs(PLUS)(0.0, 0.0, 0.0, 0.0)
    fm0 = sys.rhs(MINUS)(0.0, 0.0, 0.0, 0.0)
    equilibrium = max(map(abs, fp0 + fm0)) <= 1e-12 and abs(sys.G(0.0, 0.0)) <= 1e-12
    grad = sys.grad_G(0.0, 0.0)
    eig = {}
    for region in (PLUS, MINUS):
        e = _eigen(jacobian(sys, region, step=fd_step))
        if e is None:
            msg = f"complex eigenvalues for f{'+' if region == PLUS else '-'}"
            if strict:
                raise SpectralError(msg)
            notes.append(msg)
        eig[region] = e
    nan2 = (math.nan, math.nan)
    if eig[PLUS] is None or eig[MINUS] is None:
        verdicts = {"F0": False, "F1": False, "F2": False, "K": None}
        return SpectralReport(math.nan, math.nan, math.nan, math.nan, nan2, nan2, nan2, nan2,
                              grad, verdicts, None, None, notes)
    ls_p, vs_p, lu_p, vu_p = eig[PLUS]
    ls_m, vs_m, lu_m, vu_m = eig[MINUS]
    f0 = equilibrium and ls_p < 0 < lu_p and ls_m < 0 < lu_m
    if not f0:
        notes.append("origin is not a saddle of both fields")
    oriented = [_orient(vu_p, grad, True), _orient(vu_m, grad, False),
                _orient(vs_p, grad, True), _orient(vs_m, grad, False)]
    f1 = all(v is not None for v in oriented)
    if f1:
        vu_p, vu_m, vs_p, vs_m = oriented
    else:
        notes.append("an eigenvector is tangent to the switching line")
        if strict:
            raise SpectralError("F1 degenerate: eigenvector orthogonal to grad G(0)")
    f2, labeling = (False, None)
    if f0 and f1:
        f2, labeling = f2_labeling(vu_p, vu_m, vs_p, vs_m)
    k_ok = None
    scenario = None
    if homoclinic is not None:
        p = homoclinic.crossing_point
        gp = sys.grad_G(*p)
        tp = gp[0] * sys.f_plus[0](*p) + gp[1] * sys.f_plus[1](*p)
        tm = gp[0] * sys.f_minus[0](*p) + gp[1] * sys.f_minus[1](*p)
        k_ok = tp > 0 and tm > 0 and abs(sys.G(*p)) <= 1e-12
        if f0 and f1:
            scenario = classify_scenario(vu_p, vs_m, homoclinic)
    verdicts = {"F0": f0, "F1": f1, "F2": f2, "K": k_ok}
    return SpectralReport(ls_p, lu_p, ls_m, lu_m, vs_p, vu_p, vs_m, vu_m, grad,
                          verdicts, scenario, labeling, notes)


def derived_constants(report: SpectralReport) -> ConstantsTable:
    if not report.verdicts.get("F0"):
        raise SpectralError("constants need a saddle at the origin (F0)")
    lu_p, ls_p = report.lambdaUPlus, abs(report.lambdaSPlus)
    lu_m, ls_m = report.lambdaUMinus, abs(report.lambdaSMinus)
    sf_p = ls_p / (lu_p + ls_p)
    sf_m = (lu_m + ls_m) / lu_m
    sb_p, sb_m = 1 / sf_p, 1 / sf_m
    s_lo, s_hi = min(sf_p, sb_m), max(sf_p, sb_m)
    Sf_p = 1 / (lu_p + ls_p)
    Sb_m = 1 / (lu_m + ls_m)
    Sf = (lu_m + ls_p) / (lu_m * (lu_p + ls_p))
    Sb = (lu_m + ls_p) / (ls_p * (lu_m + ls_m))
    S_lo, S_hi = min(Sf, Sb), max(Sf, Sb)
    lams = (lu_p, ls_p, lu_m, ls_m)
    return ConstantsTable(
        sigmaFwdPlus=sf_p, sigmaFwdMinus=sf_m, sigmaFwd=sf_p * sf_m,
        sigmaBwdPlus=sb_p, sigmaBwdMinus=sb_m, sigmaBwd=sb_p * sb_m,
        sigmaLo=s_lo, sigmaHi=s_hi,
        SigmaFwdPlus=Sf_p, SigmaBwdMinus=Sb_m, SigmaFwd=Sf, SigmaBwd=Sb,
        SigmaLo=S_lo, SigmaHi=S_hi,
        lambdaLo=min(lams), lambdaHi=max(lams),
        K0=3 * S_hi / (2 * s_lo), nu0=max(3 * s_hi - 1, 1.0),
        mu0=0.25 * min(Sf_p, Sb_m, s_lo ** 2))


def gap_constant(consts: ConstantsTable, eps: float, nu: float) -> float:
    """K0 (1 + nu) |ln eps|, the minimal spacing term of admissible sequences."""
    return consts.K0 * (1 + nu) * abs(math.log(eps))


def ogap(consts: ConstantsTable, eps: float, nu: float) -> int:
    """Integer spacing floor(K0 (1 + nu) |ln eps| + 2) of a periodic sequence."""
    return math.floor(gap_constant(consts, eps, nu) + 2)
