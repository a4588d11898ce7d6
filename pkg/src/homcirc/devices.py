"""Branch characteristics as global parametrizations (psi, zeta).

Every smooth two-terminal device is a planar curve parametrized by one
homogeneous variable living on the line or on the circle:

    resistor   (i, v)       = (psi(u), zeta(u))
    capacitor  (sigma, v)   = (psi(u), zeta(u))
    inductor   (i, phi)     = (psi(u), zeta(u))
    memristor  (sigma, phi) = (psi(u), zeta(u))

The incremental parameters are p(u) = psi'(u), q(u) = zeta'(u).  Controlled
sources and linearly coupled inductors are represented as small coupled
blocks whose maps act on two homogeneous variables at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expr
from .expr import Node, parse_expression

TWO_PI = 2.0 * math.pi

ROLE_PAIRS = {"r": ("i", "v"), "c": ("sigma", "v"), "l": ("i", "phi"), "m": ("sigma", "phi")}


class CharacteristicError(ValueError):
    pass


@dataclass(frozen=True)
class Characteristic:
    """Scalar device parametrization with cached symbolic derivatives."""

    role: str                    # "r" | "c" | "l" | "m"
    domain: str                  # "line" | "circle"
    psi: Node
    zeta: Node
    model: str = "param"
    psi_d: Node = field(init=False)
    zeta_d: Node = field(init=False)
    psi_dd: Node = field(init=False)
    zeta_dd: Node = field(init=False)

    def __post_init__(self):
        if self.role not in ROLE_PAIRS:
            raise CharacteristicError(f"unknown role {self.role!r}")
        if self.domain not in ("line", "circle"):
            raise CharacteristicError(f"unknown domain {self.domain!r}")
        object.__setattr__(self, "psi_d", expr.differentiate(self.psi))
        object.__setattr__(self, "zeta_d", expr.differentiate(self.zeta))
        object.__setattr__(self, "psi_dd", expr.differentiate(self.psi_d))
        object.__setattr__(self, "zeta_dd", expr.differentiate(self.zeta_d))


def evaluate(c: Characteristic, u: float) -> tuple[float, float]:
    """(psi(u), zeta(u)); meaning of the pair depends on the role."""
    return expr.evaluate_at(c.psi, u), expr.evaluate_at(c.zeta, u)


def incremental_pq(c: Characteristic, u: float) -> tuple[float, float]:
    """Incremental parameters (p, q) = (psi'(u), zeta'(u))."""
    return expr.evaluate_at(c.psi_d, u), expr.evaluate_at(c.zeta_d, u)


def curvature(c: Characteristic, u: float) -> float:
    """Curvature of the characteristic curve at parameter u."""
    p = expr.evaluate_at(c.psi_d, u)
    q = expr.evaluate_at(c.zeta_d, u)
    speed_sq = p * p + q * q
    if speed_sq <= 0.0:
        raise CharacteristicError(f"degenerate parametrization point at u={u!r}")
    pp = expr.evaluate_at(c.psi_dd, u)
    qq = expr.evaluate_at(c.zeta_dd, u)
    return abs(p * qq - pp * q) / speed_sq ** 1.5


def _on_grid(node: Node, us: np.ndarray) -> np.ndarray:
    """Evaluate over a grid, broadcasting constant subexpressions."""
    value = expr.evaluate_vec(node, {"u": us})
    return np.broadcast_to(np.asarray(value, dtype=float), us.shape).copy()


@dataclass
class NonlinearityReport:
    grid: int
    max_flat_run: int
    locally_nonlinear: bool


def local_nonlinearity_check(c: Characteristic, grid: int = 1000,
                             lo: float = -TWO_PI, hi: float = TWO_PI) -> NonlinearityReport:
    """Sampled sufficient check that the curvature has no flat stretch.

    Flags the device locally nonlinear when no run of more than two
    consecutive grid points has curvature below 1e-12.  Not a proof.
    """
    if grid < 100:
        raise ValueError("grid must be at least 100")
    if c.domain == "circle":
        us = np.linspace(0.0, TWO_PI, grid, endpoint=False)
    else:
        us = np.linspace(lo, hi, grid)
    p = _on_grid(c.psi_d, us)
    q = _on_grid(c.zeta_d, us)
    pp = _on_grid(c.psi_dd, us)
    qq = _on_grid(c.zeta_dd, us)
    kappa = np.abs(p * qq - pp * q) / np.maximum(p * p + q * q, 1e-300) ** 1.5
    flat = kappa < 1e-12
    run = best = 0
    for is_flat in flat:
        run = run + 1 if is_flat else 0
        best = max(best, run)
    return NonlinearityReport(grid=grid, max_flat_run=best, locally_nonlinear=best <= 2)


@dataclass
class RegularityGridReport:
    points: int
    min_speed_sq: float
    regular: bool
    periodic: bool | None      # None for line-domain devices


def regularity_grid_check(c: Characteristic, points: int = 10_000,
                          lo: float = -10.0, hi: float = 10.0) -> RegularityGridReport:
    """Dense-sampling validation of regularity (and 2*pi periodicity on circles)."""
    if c.domain == "circle":
        us = np.linspace(0.0, TWO_PI, points, endpoint=False)
    else:
        # odd point count puts a sample exactly on the midpoint of the range
        us = np.linspace(lo, hi, points | 1)
    p = _on_grid(c.psi_d, us)
    q = _on_grid(c.zeta_d, us)
    speed_sq = p * p + q * q
    min_speed = float(np.min(speed_sq)) if len(us) else math.inf
    periodic = None
    if c.domain == "circle":
        periodic = True
        probe = np.linspace(0.0, TWO_PI, 257)
        for node in (c.psi, c.zeta):
            a = _on_grid(node, probe)
            b = _on_grid(node, probe + TWO_PI)
            if np.max(np.abs(a - b)) > 1e-12:
                periodic = False
    regular = bool(np.all(np.isfinite(speed_sq))) and min_speed > 1e-12
    return RegularityGridReport(points=points, min_speed_sq=min_speed,
                                regular=regular, periodic=periodic)


def validate_characteristic(c: Characteristic, points: int = 10_000) -> None:
    report = regularity_grid_check(c, points)
    if not report.regular:
        raise CharacteristicError(
            f"{c.model}: parametrization is not regular on the sample grid "
            f"(min psi'^2+zeta'^2 = {report.min_speed_sq:.3e})")
    if report.periodic is False:
        raise CharacteristicError(f"{c.model}: circle-domain maps are not 2*pi periodic")


# --- Coupled blocks ---------------------------------------------------------

class CoupledBlock:
    """Vector parametrization over k homogeneous variables (k = 2 here)."""

    size: int
    role: str

    def values(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def jacobians(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError


class CoupledInductors(CoupledBlock):
    """i_k = u_k, (phi_1, phi_2) = [[L1, M], [M, L2]] (u_1, u_2)."""

    def __init__(self, L1: float, L2: float, M: float):
        self.size = 2
        self.role = "l"
        self.model = "coupled_l"
        self.L = np.array([[L1, M], [M, L2]], dtype=float)

    def values(self, u):
        u = np.asarray(u, dtype=float)
        return u.copy(), self.L @ u

    def jacobians(self, u):
        return np.eye(2), self.L.copy()


class ControlledSource(CoupledBlock):
    """Controlled source with residual p2*v2 - q2*i2 + f2(i1, v1) = 0.

    Branch 1 is the controlling resistor; branch 2 the source.  f2 is an
    expression in the two slots x1 = psi1(u1), x2 = zeta1(u1).
    """

    def __init__(self, p2: float, q2: float, f2: Node, controller: Characteristic):
        if p2 == 0.0 and q2 == 0.0:
            raise CharacteristicError("controlled source requires p2^2 + q2^2 > 0")
        self.size = 2
        self.role = "r"
        self.model = "controlled_src"
        self.p2 = float(p2)
        self.q2 = float(q2)
        self.f2 = f2
        self.f2_x1 = expr.differentiate(f2, "x1")
        self.f2_x2 = expr.differentiate(f2, "x2")
        self.controller = controller

    def _source_term(self, u1: float) -> tuple[float, float]:
        x1, x2 = evaluate(self.controller, u1)
        f = expr.evaluate(self.f2, {"x1": x1, "x2": x2})
        p1, q1 = incremental_pq(self.controller, u1)
        df = (expr.evaluate(self.f2_x1, {"x1": x1, "x2": x2}) * p1
              + expr.evaluate(self.f2_x2, {"x1": x1, "x2": x2}) * q1)
        return f, df

    def values(self, u):
        u1, u2 = float(u[0]), float(u[1])
        i1, v1 = evaluate(self.controller, u1)
        f, _ = self._source_term(u1)
        scale = 1.0 / (self.p2 ** 2 + self.q2 ** 2)
        i2 = self.p2 * u2 + self.q2 * scale * f
        v2 = self.q2 * u2 - self.p2 * scale * f
        return np.array([i1, i2]), np.array([v1, v2])

    def jacobians(self, u):
        u1 = float(u[0])
        p1, q1 = incremental_pq(self.controller, u1)
        _, df = self._source_term(u1)
        scale = 1.0 / (self.p2 ** 2 + self.q2 ** 2)
        dpsi = np.array([[p1, 0.0], [self.q2 * scale * df, self.p2]])
        dzeta = np.array([[q1, 0.0], [-self.p2 * scale * df, self.q2]])
        return dpsi, dzeta


def controlled_source_parametrization(p2: float, q2: float, f2: Node,
                                      controller: Characteristic) -> ControlledSource:
    return ControlledSource(p2, q2, f2, controller)


def coupled_inductor_parametrization(L1: float, L2: float, M: float) -> CoupledInductors:
    return CoupledInductors(L1, L2, M)


# --- Catalog ----------------------------------------------------------------

def _const_times_u(value: float) -> Node:
    return expr.fold(expr.Mul(expr.Const(float(value)), expr.Var("u")))


def linear_r(p: float, q: float) -> Characteristic:
    return Characteristic(role="r", domain="line",
                          psi=_const_times_u(p), zeta=_const_times_u(q),
                          model=f"linear_r(p={p},q={q})")


def linear_c(C: float) -> Characteristic:
    return Characteristic(role="c", domain="line",
                          psi=_const_times_u(C), zeta=expr.Var("u"),
                          model=f"linear_c(C={C})")


def linear_l(L: float) -> Characteristic:
    return Characteristic(role="l", domain="line",
                          psi=expr.Var("u"), zeta=_const_times_u(L),
                          model=f"linear_l(L={L})")


def vcontrolled(g_expr: str | Node) -> Characteristic:
    g = parse_expression(g_expr) if isinstance(g_expr, str) else g_expr
    return Characteristic(role="r", domain="line", psi=g, zeta=expr.Var("u"),
                          model="vcontrolled")


def ccontrolled(r_expr: str | Node) -> Characteristic:
    r = parse_expression(r_expr) if isinstance(r_expr, str) else r_expr
    return Characteristic(role="r", domain="line", psi=expr.Var("u"), zeta=r,
                          model="ccontrolled")


def param(psi: str | Node, zeta: str | Node, domain: str = "line",
          role: str = "r") -> Characteristic:
    psi_ast = parse_expression(psi) if isinstance(psi, str) else psi
    zeta_ast = parse_expression(zeta) if isinstance(zeta, str) else zeta
    return Characteristic(role=role, domain=domain, psi=psi_ast, zeta=zeta_ast,
                          model="param")


def lapshin(m: int, n: int, alpha: float, beta: float, gamma: float,
            delta: float, role: str = "l") -> Characteristic:
    """Closed hysteresis-style loop: i = alpha*cos(u)^m + beta*sin(u+delta)^n,
    phi = gamma*sin(u), on the circle."""
    psi = expr.fold(expr.Add(
        expr.Mul(expr.Const(float(alpha)), expr.Pow(expr.Cos(expr.Var("u")), int(m))),
        expr.Mul(expr.Const(float(beta)),
                 expr.Pow(expr.Sin(expr.Add(expr.Var("u"), expr.Const(float(delta)))), int(n)))))
    zeta = expr.fold(expr.Mul(expr.Const(float(gamma)), expr.Sin(expr.Var("u"))))
    return Characteristic(role=role, domain="circle", psi=psi, zeta=zeta,
                          model=f"lapshin(m={m},n={n})")


# --- Stacked per-role evaluation ---------------------------------------------

@dataclass
class DeviceSet:
    """All devices of one role, evaluated as stacked vector maps.

    ``units`` lists (positions, device) pairs where positions index into the
    role block; scalar characteristics occupy one position, coupled blocks
    several.  Jacobians are diagonal except across coupled blocks.
    """

    role: str
    size: int
    units: list[tuple[tuple[int, ...], object]]

    def __post_init__(self):
        covered = [p for positions, _ in self.units for p in positions]
        if sorted(covered) != list(range(self.size)):
            raise CharacteristicError(
                f"device units do not cover the {self.role} block exactly: {covered}")

    def _gather(self, u, which: str) -> np.ndarray:
        out = np.zeros(self.size)
        for positions, dev in self.units:
            if isinstance(dev, Characteristic):
                node = dev.psi if which == "psi" else dev.zeta
                out[positions[0]] = expr.evaluate_at(node, float(u[positions[0]]))
            else:
                values = dev.values(u[list(positions)])
                out[list(positions)] = values[0 if which == "psi" else 1]
        return out

    def psi(self, u) -> np.ndarray:
        return self._gather(u, "psi")

    def zeta(self, u) -> np.ndarray:
        return self._gather(u, "zeta")

    def _jacobian(self, u, which: str) -> np.ndarray:
        out = np.zeros((self.size, self.size))
        for positions, dev in self.units:
            if isinstance(dev, Characteristic):
                node = dev.psi_d if which == "psi" else dev.zeta_d
                k = positions[0]
                out[k, k] = expr.evaluate_at(node, float(u[k]))
            else:
                jac = dev.jacobians(u[list(positions)])[0 if which == "psi" else 1]
                out[np.ix_(positions, positions)] = jac
        return out

    def dpsi(self, u) -> np.ndarray:
        return self._jacobian(u, "psi")

    def dzeta(self, u) -> np.ndarray:
        return self._jacobian(u, "zeta")

    def diag_dpsi(self, u) -> np.ndarray:
        return np.diag(self.dpsi(u)).copy()

    def diag_dzeta(self, u) -> np.ndarray:
        return np.diag(self.dzeta(u)).copy()

    def scalar_at(self, pos: int) -> Characteristic | None:
        for positions, dev in self.units:
            if pos in positions:
                return dev if isinstance(dev, Characteristic) else None
        return None


def empty_device_set(role: str) -> DeviceSet:
    return DeviceSet(role=role, size=0, units=[])


CUBIC = "-u + u^3"


def cubic_memristor(control: str = "flux") -> Characteristic:
    """Cubic charge-flux memristor; ``control`` picks which map is the identity."""
    chi = parse_expression(CUBIC)
    if control == "flux":
        return Characteristic(role="m", domain="line", psi=chi, zeta=expr.Var("u"),
                              model="cubic_memristor(flux)")
    if control == "charge":
        return Characteristic(role="m", domain="line", psi=expr.Var("u"), zeta=chi,
                              model="cubic_memristor(charge)")
    raise CharacteristicError(f"unknown memristor control {control!r}")
