"""Equilibrium and linearization analysis of the homogeneous model.

Equilibria solve the non-differentiated part H(u) = 0 (Kirchhoff sums of
the static branch maps); the nullspace dimension of dH separates isolated
equilibria from equilibrium lines.  Linearizations are matrix pencils
lambda*E + F with E the derivative-coefficient matrix, whose generalized
eigenvalues are classified as zero / finite / infinite; infinite
eigenvalues flag rank deficiency of E (impasse side), zero crossings of
the nontrivial eigenvalue flag stability changes along equilibrium lines.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .homomodel import HomogeneousModel, UnsupportedOperation

PENCIL_ORDER_CAP = 6


@dataclass
class Equilibrium:
    state: np.ndarray
    residual: float
    nullspace_dim: int


def find_equilibria(model: HomogeneousModel, seeds, tol: float = 1e-10,
                    max_iter: int = 80) -> list[Equilibrium]:
    """Newton (least-squares step) on H(u) = 0 from each seed, deduplicated.

    The least-squares step handles the rank-deficient Jacobians that occur
    on equilibrium lines; convergence is still measured by the residual.
    """
    found: list[Equilibrium] = []
    converged_any = False
    for seed in seeds:
        u = np.asarray(seed, dtype=float).copy()
        ok = False
        for _ in range(max_iter):
            res = model.nondiff(u)
            if float(np.max(np.abs(res), initial=0.0)) <= tol:
                ok = True
                break
            jac = model.nondiff_jacobian(u)
            step, *_ = np.linalg.lstsq(jac, -res, rcond=None)
            if not np.all(np.isfinite(step)):
                break
            u = u + step
        if not ok:
            continue
        converged_any = True
        if any(np.max(np.abs(u - e.state)) <= 1e-6 * (1 + np.max(np.abs(u)))
               for e in found):
            continue
        jac = model.nondiff_jacobian(u)
        sv = np.linalg.svd(jac, compute_uv=False)
        rank = int(np.sum(sv > 1e-10 * max(1.0, float(sv[0]))))
        found.append(Equilibrium(state=u,
                                 residual=float(np.max(np.abs(model.nondiff(u)), initial=0.0)),
                                 nullspace_dim=model.m - rank))
    if not converged_any:
        raise ArithmeticError("no seed converged to an equilibrium")
    return found


# --- matrix pencils ---------------------------------------------------------

@dataclass
class PencilLinearization:
    E: np.ndarray
    F: np.ndarray
    point: np.ndarray
    char_coeffs: np.ndarray            # det(lambda E + F), ascending powers
    finite_eigenvalues: list[complex]
    infinite_count: int
    rank_E: int

    @property
    def order(self) -> int:
        return self.E.shape[0]

    def classified(self) -> list[tuple[complex | None, str]]:
        scale = max([1.0] + [abs(ev) for ev in self.finite_eigenvalues])
        out: list[tuple[complex | None, str]] = []
        for ev in self.finite_eigenvalues:
            kind = "zero" if abs(ev) <= 1e-9 * scale else "finite"
            out.append((ev, kind))
        out.extend((None, "infinite") for _ in range(self.infinite_count))
        return out

    def nontrivial_eigenvalue(self) -> complex | None:
        """The finite eigenvalue farthest from zero, or None."""
        finite = [(ev, kind) for ev, kind in self.classified() if kind == "finite"]
        if not finite:
            return None
        return max(finite, key=lambda pair: abs(pair[0]))[0]


def _char_poly(E: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Coefficients of det(lambda E + F), ascending, by exact expansion."""
    n = E.shape[0]
    coeffs = np.zeros(n + 1)
    if n == 0:
        coeffs_empty = np.zeros(1)
        coeffs_empty[0] = 1.0
        return coeffs_empty
    for perm in itertools.permutations(range(n)):
        poly = np.array([1.0])
        for i, j in enumerate(perm):
            poly = np.convolve(poly, np.array([F[i, j], E[i, j]]))
        coeffs[:len(poly)] += _perm_sign(perm) * poly
    return coeffs


def _perm_sign(perm) -> int:
    sign = 1
    seen = [False] * len(perm)
    for start in range(len(perm)):
        if seen[start]:
            continue
        length = 0
        j = start
        while not seen[j]:
            seen[j] = True
            j = perm[j]
            length += 1
        if length % 2 == 0:
            sign = -sign
    return sign


def linearization_pencil(model: HomogeneousModel, point: np.ndarray) -> PencilLinearization:
    """Pencil lambda*E + F of the linearized model at an equilibrium point."""
    if model.m > PENCIL_ORDER_CAP:
        raise UnsupportedOperation(
            f"pencil expansion is implemented for orders <= {PENCIL_ORDER_CAP}")
    point = np.asarray(point, dtype=float)
    G = model.derivative_matrix(point)
    E = np.zeros((model.m, model.m))
    E[:, :G.shape[1]] = G                     # u_r' never appears: zero columns
    F = model.nondiff_jacobian(point)
    coeffs = _char_poly(E, F)
    top = float(np.max(np.abs(coeffs), initial=0.0))
    tol = 1e-12 * max(1.0, top)
    degree = 0
    for k in range(len(coeffs) - 1, -1, -1):
        if abs(coeffs[k]) > tol:
            degree = k
            break
    if degree == 0 and abs(coeffs[0]) <= tol:
        finite: list[complex] = []            # identically singular pencil
    elif degree == 0:
        finite = []
    else:
        finite = list(np.roots(coeffs[degree::-1]))
    sv = np.linalg.svd(E, compute_uv=False)
    rank_E = int(np.sum(sv > 1e-10 * max(1.0, float(sv[0]) if len(sv) else 1.0)))
    return PencilLinearization(E=E, F=F, point=point.copy(),
                               char_coeffs=coeffs,
                               finite_eigenvalues=finite,
                               infinite_count=model.m - degree,
                               rank_E=rank_E)


@dataclass
class SymmetryReport:
    u_m: float
    lambda_flux: complex | None
    lambda_charge: complex | None
    product: complex | None
    reciprocal: bool


def eigenvalue_symmetry_check(model_flux: HomogeneousModel,
                              model_charge: HomogeneousModel,
                              u_m: float, rel_tol: float = 1e-10) -> SymmetryReport:
    """Swap symmetry of the dual memristor models: lambda -> 1/lambda.

    Both models are evaluated at the equilibrium with v_c = 0 and the given
    memristor variable.
    """
    lam = {}
    for tag, model in (("flux", model_flux), ("charge", model_charge)):
        mem_ids = model.role_branch_ids("m")
        if len(mem_ids) != 1:
            raise UnsupportedOperation("symmetry check expects one memristor")
        point = model.initial_state({mem_ids[0]: u_m})
        lam[tag] = linearization_pencil(model, point).nontrivial_eigenvalue()
    lf, lc = lam["flux"], lam["charge"]
    if lf is None and lc is None:
        raise ArithmeticError("both pencil eigenvalues are degenerate")
    product = None
    reciprocal = False
    if lf is not None and lc is not None:
        product = lf * lc
        reciprocal = abs(product - 1.0) <= rel_tol * max(1.0, abs(product))
    return SymmetryReport(u_m=u_m, lambda_flux=lf, lambda_charge=lc,
                          product=product, reciprocal=reciprocal)


def memristor_degeneracy_loci(model: HomogeneousModel, lo: float = -2.0,
                              hi: float = 2.0, grid: int = 400,
                              tol: float = 1e-12) -> dict[str, list[float]]:
    """Zero- and infinite-eigenvalue loci along a memristive equilibrium line.

    Scans the equilibrium line (v_c = 0, u_m free) and root-polishes sign
    changes of the relevant characteristic-polynomial coefficients: the
    linear coefficient vanishing gives a second zero eigenvalue, the leading
    coefficient vanishing gives an infinite eigenvalue.
    """
    mem_ids = model.role_branch_ids("m")
    if len(mem_ids) != 1:
        raise UnsupportedOperation("degeneracy scan expects exactly one memristor")
    bid = mem_ids[0]

    def coeffs_at(u_m: float) -> np.ndarray:
        return linearization_pencil(model, model.initial_state({bid: u_m})).char_coeffs

    order = model.m
    us = np.linspace(lo, hi, grid + 1)
    table = np.array([coeffs_at(u) for u in us])
    loci = {"zero": [], "infinite": []}
    for key, col in (("zero", 1), ("infinite", order)):
        values = table[:, col]
        for k in range(grid):
            a, b = values[k], values[k + 1]
            if a == 0.0:
                loci[key].append(float(us[k]))
                continue
            if a * b >= 0.0:
                continue
            lo_u, hi_u, f_lo = us[k], us[k + 1], a
            while hi_u - lo_u > tol:
                mid = 0.5 * (lo_u + hi_u)
                f_mid = coeffs_at(mid)[col]
                if f_lo * f_mid <= 0.0:
                    hi_u = mid
                else:
                    lo_u, f_lo = mid, f_mid
            loci[key].append(0.5 * (lo_u + hi_u))
    return loci


# --- singular-set scanning -----------------------------------------------------

@dataclass
class ScanReport:
    branch_id: int
    lo: float
    hi: float
    cells: int
    flagged: list[int]
    fraction: float


def singular_scan(model: HomogeneousModel, branch_id: int, lo: float, hi: float,
                  cells: int, fixed: dict[int, float] | None = None) -> ScanReport:
    """1-D scan of K(u_r) along one resistive variable.

    Cells where K changes sign or |K| falls below 1e-12 times the grid scale
    are flagged; the flagged fraction estimates the thinness of the singular
    set at this resolution.
    """
    if model.m_m:
        raise UnsupportedOperation("singular scan applies to RLC circuits")
    r_ids = model.role_branch_ids("r")
    if branch_id not in r_ids:
        raise KeyError(f"branch {branch_id} is not resistive")
    fixed = fixed or {}
    u_r = np.zeros(model.m_r)
    for pos, bid in enumerate(r_ids):
        if bid in fixed:
            u_r[pos] = fixed[bid]
    axis = r_ids.index(branch_id)
    nodes = np.linspace(lo, hi, cells + 1)
    values = np.empty(cells + 1)
    for k, un in enumerate(nodes):
        u_r[axis] = un
        values[k] = model.K_value(u_r)
    scale = float(np.max(np.abs(values), initial=0.0))
    tol = 1e-12 * max(1.0, scale)
    flagged = [k for k in range(cells)
               if values[k] * values[k + 1] < 0.0
               or abs(values[k]) <= tol or abs(values[k + 1]) <= tol]
    return ScanReport(branch_id=branch_id, lo=lo, hi=hi, cells=cells,
                      flagged=flagged, fraction=len(flagged) / cells)
