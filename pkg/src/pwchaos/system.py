"""Piecewise-smooth planar systems, configuration files and built-in examples.

A system is ``x' = f±(x) + eps*g(t, x, eps)`` with ``f+`` used where ``G > 0``
and ``f-`` where ``G < 0``.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from typing import Callable

from .errors import ConfigError, ExampleError, ExpressionSyntaxError
from .expression import BinOp, Expression, Var, compile_vector

PLUS = 1
MINUS = -1

DEFAULT_BOX = (-2.0, 2.0, -2.0, 2.0)


def region_name(region: int) -> str:
    return "Plus" if region == PLUS else "Minus"


def parse_region(value) -> int:
    if value in (PLUS, MINUS):
        return value
    key = str(value).lower()
    if key in ("plus", "+", "+1", "1"):
        return PLUS
    if key in ("minus", "-", "-1"):
        return MINUS
    raise ValueError(f"unknown region {value!r}")


def _with_perturbation(f: Expression, g: Expression) -> Expression:
    if g.is_zero():
        return f
    return Expression(BinOp("+", f.tree, BinOp("*", Var("eps"), g.tree)))


@dataclass(frozen=True)
class PiecewiseSystem:
    f_plus: tuple[Expression, Expression]
    f_minus: tuple[Expression, Expression]
    g: tuple[Expression, Expression]
    G: Expression
    box: tuple[float, float, float, float] = DEFAULT_BOX
    r: float = 2.0
    name: str = field(default="custom", compare=False)
    checks: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not self.checks:
            object.__setattr__(self, "checks", self._invariant_checks())

    # -- invariants -----------------------------------------------------
    def _invariant_checks(self) -> dict:
        g0 = self.G(0.0, 0.0)
        origin_ok = abs(g0) <= 1e-12
        pert_ok = True
        for t in (-3.7, -1.0, 0.0, 0.3, 1.0, 2.5, 11.0):
            for eps in (0.0, 1e-3, 0.1):
                gx, gy = self.g[0](0.0, 0.0, t, eps), self.g[1](0.0, 0.0, t, eps)
                if abs(gx) > 1e-12 or abs(gy) > 1e-12:
                    pert_ok = False
        return {"origin_on_switching_manifold": origin_ok,
                "perturbation_vanishes_at_origin": pert_ok,
                "smoothness_order_above_one": self.r > 1}

    # -- evaluation -----------------------------------------------------
    def with_perturbation(self, g: tuple[Expression, Expression], name: str | None = None):
        return PiecewiseSystem(self.f_plus, self.f_minus, g, self.G, self.box, self.r,
                               name or self.name)

    def unperturbed(self) -> "PiecewiseSystem":
        zero = Expression.parse("0")
        return self.with_perturbation((zero, zero), self.name + "_unperturbed")

    def has_perturbation(self) -> bool:
        return not (self.g[0].is_zero() and self.g[1].is_zero())

    def field_expressions(self, region: int) -> tuple[Expression, Expression]:
        f = self.f_plus if region == PLUS else self.f_minus
        return (_with_perturbation(f[0], self.g[0]), _with_perturbation(f[1], self.g[1]))

    def rhs(self, region: int, precision: int | None = None) -> Callable:
        """Closure ``(x, y, t, eps) -> (dx, dy)`` for one region."""
        return compile_vector(self.field_expressions(region), precision)

    def switching(self, precision: int | None = None) -> Callable:
        return compile_vector((self.G,), precision)

    def grad_G(self, x: float, y: float) -> tuple[float, float]:
        return (self.G.diff("x")(x, y), self.G.diff("y")(x, y))

    def region_of(self, x: float, y: float) -> int:
        """PLUS, MINUS, or 0 on the switching manifold."""
        v = self.G(x, y)
        return PLUS if v > 0 else MINUS if v < 0 else 0

    def in_box(self, x: float, y: float) -> bool:
        x0, x1, y0, y1 = self.box
        return x0 < x < x1 and y0 < y < y1


def eval_field(sys: PiecewiseSystem, region, x, t: float, eps: float) -> tuple[float, float]:
    """f^region(x) + eps*g(t, x, eps)."""
    return sys.rhs(parse_region(region))(x[0], x[1], t, eps)


# ---------------------------------------------------------------- homoclinic reference

@dataclass(frozen=True)
class HomoclinicReference:
    """Analytic homoclinic orbit: ``minus`` branch for t <= 0, ``plus`` for t > 0."""

    minus: tuple[Expression, Expression]
    plus: tuple[Expression, Expression]

    def __call__(self, t: float) -> tuple[float, float]:
        br = self.minus if t <= 0 else self.plus
        return (br[0](0.0, 0.0, t), br[1](0.0, 0.0, t))

    def velocity(self, t: float) -> tuple[float, float]:
        br = self.minus if t <= 0 else self.plus
        return (br[0].diff("t")(0.0, 0.0, t), br[1].diff("t")(0.0, 0.0, t))

    @property
    def crossing_time(self) -> float:
        return 0.0

    @property
    def crossing_point(self) -> tuple[float, float]:
        return self(0.0)

    def polyline(self, n: int = 2000, t_max: float = 30.0) -> list[tuple[float, float]]:
        """Closed sampling of the loop, origin included."""
        pts = [(0.0, 0.0)]
        for i in range(n):
            t = -t_max + 2 * t_max * i / (n - 1)
            pts.append(self(t))
        return pts


def homoclinic_residual(sys: PiecewiseSystem, ref: HomoclinicReference, t_grid) -> float:
    """max over the grid of |gamma'(t) - f^region(gamma(t))| with the analytic derivative."""
    worst = 0.0
    fp, fm = sys.rhs(PLUS), sys.rhs(MINUS)
    for t in t_grid:
        if t == 0:
            raise ValueError("t = 0 is excluded from the residual grid")
        x, y = ref(t)
        vx, vy = ref.velocity(t)
        fx, fy = (fm if t < 0 else fp)(x, y, t, 0.0)
        worst = max(worst, math.hypot(vx - fx, vy - fy))
    return worst


# ---------------------------------------------------------------- configuration files

_REQUIRED = {
    "system": ("f_plus_x", "f_plus_y", "f_minus_x", "f_minus_y", "G"),
    "perturbation": ("g_x", "g_y"),
}
_HOMOCLINIC_KEYS = ("minus_x", "minus_y", "plus_x", "plus_y")


def _key_line(text: str, section: str, key: str) -> tuple[int, int]:
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
            continue
        if current == section:
            m = re.match(rf"\s*{re.escape(key)}\s*[=:]\s*", line)
            if m:
                return lineno, m.end()
    return 0, 0


def _parse_expr(text: str, section: str, key: str, value: str) -> Expression:
    try:
        return Expression.parse(value)
    except ExpressionSyntaxError as exc:
        line, offset = _key_line(text, section, key)
        col = exc.details["column"] + offset
        raise ConfigError(f"[{section}] {key}: {exc}", line=line, column=col,
                          key=key) from None


def parse_system(text: str) -> tuple[PiecewiseSystem, HomoclinicReference | None]:
    """Parse a configuration text. Returns the system and the optional homoclinic."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    exprs = {}
    for section, keys in _REQUIRED.items():
        for key in keys:
            if not cp.has_option(section, key):
                raise ConfigError(f"missing required key {key!r} in [{section}]",
                                  section=section, key=key)
            exprs[key] = _parse_expr(text, section, key, cp.get(section, key))
    r = cp.getfloat("system", "r", fallback=2.0)
    name = cp.get("system", "name", fallback="custom")
    box = DEFAULT_BOX
    if cp.has_option("domain", "box"):
        parts = [float(p) for p in cp.get("domain", "box").replace(",", " ").split()]
        if len(parts) != 4 or parts[0] >= parts[1] or parts[2] >= parts[3]:
            raise ConfigError("box must be 'xmin, xmax, ymin, ymax'", key="box")
        box = tuple(parts)
    sys = PiecewiseSystem(
        f_plus=(exprs["f_plus_x"], exprs["f_plus_y"]),
        f_minus=(exprs["f_minus_x"], exprs["f_minus_y"]),
        g=(exprs["g_x"], exprs["g_y"]),
        G=exprs["G"], box=box, r=r, name=name)
    hom = None
    if cp.has_section("homoclinic"):
        hk = {}
        for key in _HOMOCLINIC_KEYS:
            if not cp.has_option("homoclinic", key):
                raise ConfigError(f"missing required key {key!r} in [homoclinic]",
                                  section="homoclinic", key=key)
            hk[key] = _parse_expr(text, "homoclinic", key, cp.get("homoclinic", key))
        hom = HomoclinicReference((hk["minus_x"], hk["minus_y"]), (hk["plus_x"], hk["plus_y"]))
    return sys, hom


def load_system(path) -> tuple[PiecewiseSystem, HomoclinicReference | None]:
    with open(path, encoding="utf-8") as fh:
        return parse_system(fh.read())


def system_to_config(sys: PiecewiseSystem, hom: HomoclinicReference | None = None) -> str:
    lines = ["[system]", f"name = {sys.name}",
             f"f_plus_x = {sys.f_plus[0]}", f"f_plus_y = {sys.f_plus[1]}",
             f"f_minus_x = {sys.f_minus[0]}", f"f_minus_y = {sys.f_minus[1]}",
             f"G = {sys.G}", f"r = {sys.r!r}", "",
             "[perturbation]", f"g_x = {sys.g[0]}", f"g_y = {sys.g[1]}", "",
             "[domain]", "box = " + ", ".join(repr(v) for v in sys.box)]
    if hom is not None:
        lines += ["", "[homoclinic]",
                  f"minus_x = {hom.minus[0]}", f"minus_y = {hom.minus[1]}",
                  f"plus_x = {hom.plus[0]}", f"plus_y = {hom.plus[1]}"]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- built-in examples

_BASE = {
    "f_plus": ("y - x^2", "x - 2*x^2"),
    "f_minus": ("y + x^2", "x - 2*x^2"),
    "G": "-y",
}
LOOP_HOMOCLINIC = ("exp(t)", "exp(t) - exp(2*t)", "exp(-t)", "-exp(-t) + exp(-2*t)")

DEFAULT_NOISE = {
    "exgen0": "cos(sqrt(2)*t)",
    "exgen2": "tanh(t)*sin(log(1 + t^2))",
}


def _forcing(name: str, params: dict) -> str:
    if name == "ex1":
        return "sin(2*pi*t)"
    if name == "ex_quasiperiodic":
        return "sin(t) + sin(2*pi*t)"
    if name == "exgen0":
        noise = params.get("noise", DEFAULT_NOISE["exgen0"])
        return f"3*sin(2*pi*t) + ({noise})"
    if name == "exgen":
        r = params.get("r")
        if not isinstance(r, int) or isinstance(r, bool) or r < 2:
            raise ExampleError("exgen requires an integer r >= 2", r=r)
        return f"sign(t)*sin(sqrt(abs(t)))^{2 * r + 1}"
    if name == "exgen2":
        return params.get("noise", DEFAULT_NOISE["exgen2"])
    raise ExampleError(f"unknown example {name!r}", name=name)


EXAMPLE_NAMES = ("ex1", "ex_quasiperiodic", "exgen0", "exgen", "exgen2", "unperturbed")


def loop_homoclinic() -> HomoclinicReference:
    p = [Expression.parse(s) for s in LOOP_HOMOCLINIC]
    return HomoclinicReference((p[0], p[1]), (p[2], p[3]))


def builtin_example(name: str, params: dict | None = None
                    ) -> tuple[PiecewiseSystem, HomoclinicReference]:
    params = dict(params or {})
    if name == "unperturbed":
        gx = "0"
    else:
        gx = f"x*({_forcing(name, params)})"
        try:
            Expression.parse(gx)
        except ExpressionSyntaxError as exc:
            raise ExampleError(f"invalid noise expression: {exc}") from None
    r = float(params.get("r", 2)) if name == "exgen" else 2.0
    sys = PiecewiseSystem(
        f_plus=tuple(Expression.parse(s) for s in _BASE["f_plus"]),
        f_minus=tuple(Expression.parse(s) for s in _BASE["f_minus"]),
        g=(Expression.parse(gx), Expression.parse("0")),
        G=Expression.parse(_BASE["G"]), r=r, name=name)
    return sys, loop_homoclinic()
