"""Homogeneous DAE model: assembly, splitting and regularity diagnostics.

The circuit equations in homogeneous variables u = (u_c, u_l, u_m, u_r) are

    A_c psi_c'(u_c) u_c' + A_m psi_m'(u_m) u_m' + A_l psi_l(u_l) + A_r psi_r(u_r) = 0
    B_l zeta_l'(u_l) u_l' + B_m zeta_m'(u_m) u_m' + B_c zeta_c(u_c) + B_r zeta_r(u_r) = 0.

For RLC circuits the splitting matrices A_c^- = (A_c^T A_c)^-1 A_c^T,
A_c^perp, B_l^-, B_l^perp (computed exactly over the rationals) separate
the system into quasilinear differential equations on (u_c, u_l) and m_r
algebraic constraints whose Jacobian in u_r encodes the regular set.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import ratmat, treepoly
from .devices import DeviceSet, incremental_pq
from .graph import (CircuitGraph, GraphError, TopologyMatrices,
                    nondegeneracy_check, topology_matrices)
from .netlist import Circuit

ROLES = ("c", "l", "m", "r")


class DegenerateTopologyError(GraphError):
    def __init__(self, report):
        self.report = report
        problems = []
        if report.capacitor_loop:
            problems.append("capacitor-only loop (rank A_c deficient)")
        if report.inductor_cutset:
            problems.append("inductor-only cutset (rank B_l deficient)")
        super().__init__("degenerate topology: " + "; ".join(problems))


class UnsupportedOperation(GraphError):
    pass


class LeadingCoefficientError(ArithmeticError):
    """A psi_c' / zeta_l' block is singular: no explicit state model here."""


@dataclass
class RegularityReport:
    psi_c_values: np.ndarray
    zeta_l_values: np.ndarray
    psi_c_flags: np.ndarray          # True where the component is nonzero
    zeta_l_flags: np.ndarray
    det_jacobian: float
    det_threshold: float
    K_value: float | None
    regular: bool


@dataclass
class ManifoldRankReport:
    psi_l_nonzero: bool
    zeta_c_nonzero: bool
    rank: int
    m_r: int
    manifold_guaranteed: bool


FLAG_TOL = 1e-12


class HomogeneousModel:
    def __init__(self, circuit: Circuit, topo: TopologyMatrices):
        self.circuit = circuit
        self.graph: CircuitGraph = circuit.graph
        self.topo = topo
        self.devices: dict[str, DeviceSet] = circuit.devices
        g = self.graph
        self.n = g.n
        self.m = g.m
        self.dims = {role: g.count(role) for role in ROLES}
        self.m_c, self.m_l = self.dims["c"], self.dims["l"]
        self.m_m, self.m_r = self.dims["m"], self.dims["r"]

        self.A = ratmat.to_float(topo.A) if topo.A else np.zeros((0, self.m))
        self.B = ratmat.to_float(topo.B) if topo.B else np.zeros((0, self.m))
        self.A_blk = {}
        self.B_blk = {}
        offset = 0
        self.slices = {}
        for role in ROLES:
            cols = g.block_indices(role)
            self.A_blk[role] = self.A[:, cols] if cols else np.zeros((self.A.shape[0], 0))
            self.B_blk[role] = self.B[:, cols] if cols else np.zeros((self.B.shape[0], 0))
            self.slices[role] = slice(offset, offset + len(cols))
            offset += len(cols)

        self._build_splitting()

    # --- exact splitting ------------------------------------------------

    def _build_splitting(self):
        topo = self.topo
        n1 = self.n - 1
        mn1 = self.m - self.n + 1
        Ac = topo.A_block("c") if self.m_c else []
        Bl = topo.B_block("l") if self.m_l else []

        if self.m_c:
            AtA = ratmat.matmul(ratmat.transpose(Ac), Ac)
            Ac_minus = ratmat.matmul(ratmat.inverse(AtA), ratmat.transpose(Ac))
            perp = ratmat.nullspace(ratmat.transpose(Ac))  # rows x: x^T A_c = 0
            Ac_perp = perp
        else:
            Ac_minus = []
            Ac_perp = [row for row in ratmat.identity(n1)]
        if self.m_l:
            BtB = ratmat.matmul(ratmat.transpose(Bl), Bl)
            Bl_minus = ratmat.matmul(ratmat.inverse(BtB), ratmat.transpose(Bl))
            Bl_perp = ratmat.nullspace(ratmat.transpose(Bl))
        else:
            Bl_minus = []
            Bl_perp = [row for row in ratmat.identity(mn1)]

        self.exact = {"Ac_minus": Ac_minus, "Ac_perp": Ac_perp,
                      "Bl_minus": Bl_minus, "Bl_perp": Bl_perp}
        self.Ac_minus = _to_float(Ac_minus, (self.m_c, n1))
        self.Ac_perp = _to_float(Ac_perp, (n1 - self.m_c, n1))
        self.Bl_minus = _to_float(Bl_minus, (self.m_l, mn1))
        self.Bl_perp = _to_float(Bl_perp, (mn1 - self.m_l, mn1))

        # exact identities: A_c^- A_c = I, A_c^perp A_c = 0 (likewise for B_l)
        if self.m_c:
            assert ratmat.matmul(Ac_minus, Ac) == ratmat.identity(self.m_c)
            if Ac_perp:
                assert ratmat.is_zero(ratmat.matmul(Ac_perp, Ac))
        if self.m_l:
            assert ratmat.matmul(Bl_minus, Bl) == ratmat.identity(self.m_l)
            if Bl_perp:
                assert ratmat.is_zero(ratmat.matmul(Bl_perp, Bl))

    # --- state handling ----------------------------------------------------

    def part(self, u: np.ndarray, role: str) -> np.ndarray:
        return np.asarray(u, dtype=float)[self.slices[role]]

    def role_branch_ids(self, role: str) -> list[int]:
        return [self.graph.branches[j].branch_id for j in self.graph.block_indices(role)]

    def state_labels(self) -> list[str]:
        return [f"u_{self.graph.branches[j].branch_id}"
                for role in ROLES for j in self.graph.block_indices(role)]

    def index_of(self, branch_id: int) -> int:
        position = 0
        for role in ROLES:
            for j in self.graph.block_indices(role):
                if self.graph.branches[j].branch_id == branch_id:
                    return position
                position += 1
        raise KeyError(f"unknown branch id {branch_id}")

    def initial_state(self, values: dict[int, float] | None = None) -> np.ndarray:
        u = np.zeros(self.m)
        for branch_id, value in (values or {}).items():
            u[self.index_of(int(branch_id))] = float(value)
        return u

    # --- model pieces --------------------------------------------------------

    def kcl_nondiff(self, u: np.ndarray) -> np.ndarray:
        u_l, u_r = self.part(u, "l"), self.part(u, "r")
        return (self.A_blk["l"] @ self.devices["l"].psi(u_l)
                + self.A_blk["r"] @ self.devices["r"].psi(u_r))

    def kvl_nondiff(self, u: np.ndarray) -> np.ndarray:
        u_c, u_r = self.part(u, "c"), self.part(u, "r")
        return (self.B_blk["c"] @ self.devices["c"].zeta(u_c)
                + self.B_blk["r"] @ self.devices["r"].zeta(u_r))

    def nondiff(self, u: np.ndarray) -> np.ndarray:
        """All non-differentiated terms; zero exactly at equilibria."""
        return np.concatenate([self.kcl_nondiff(u), self.kvl_nondiff(u)])

    def nondiff_jacobian(self, u: np.ndarray) -> np.ndarray:
        n1 = self.n - 1
        jac = np.zeros((self.m, self.m))
        u_c, u_l, u_r = (self.part(u, "c"), self.part(u, "l"), self.part(u, "r"))
        jac[:n1, self.slices["l"]] = self.A_blk["l"] @ self.devices["l"].dpsi(u_l)
        jac[:n1, self.slices["r"]] = self.A_blk["r"] @ self.devices["r"].dpsi(u_r)
        jac[n1:, self.slices["c"]] = self.B_blk["c"] @ self.devices["c"].dzeta(u_c)
        jac[n1:, self.slices["r"]] = self.B_blk["r"] @ self.devices["r"].dzeta(u_r)
        return jac

    def derivative_matrix(self, u: np.ndarray) -> np.ndarray:
        """Coefficient matrix of (u_c', u_l', u_m') in the full model."""
        n1 = self.n - 1
        cols = self.m_c + self.m_l + self.m_m
        G = np.zeros((self.m, cols))
        u_c, u_l, u_m = (self.part(u, "c"), self.part(u, "l"), self.part(u, "m"))
        G[:n1, :self.m_c] = self.A_blk["c"] @ self.devices["c"].dpsi(u_c)
        G[:n1, self.m_c + self.m_l:] = self.A_blk["m"] @ self.devices["m"].dpsi(u_m)
        G[n1:, self.m_c:self.m_c + self.m_l] = self.B_blk["l"] @ self.devices["l"].dzeta(u_l)
        G[n1:, self.m_c + self.m_l:] = self.B_blk["m"] @ self.devices["m"].dzeta(u_m)
        return G

    # --- constraints (RLC splitting) ------------------------------------------

    def _require_constraint_split(self):
        if self.m_m and self.m_r:
            raise UnsupportedOperation(
                "constraint splitting is supported for RLC circuits and for "
                "memristive circuits without resistors")

    def constraint_residual(self, u: np.ndarray) -> np.ndarray:
        self._require_constraint_split()
        if self.m_m:
            return np.zeros(0)
        return np.concatenate([self.Ac_perp @ self.kcl_nondiff(u),
                               self.Bl_perp @ self.kvl_nondiff(u)])

    def constraint_jacobian_ur(self, u_r: np.ndarray) -> np.ndarray:
        self._require_constraint_split()
        if self.m_m:
            return np.zeros((0, 0))
        u_r = np.asarray(u_r, dtype=float)
        dpsi = self.devices["r"].dpsi(u_r)
        dzeta = self.devices["r"].dzeta(u_r)
        return np.vstack([self.Ac_perp @ self.A_blk["r"] @ dpsi,
                          self.Bl_perp @ self.B_blk["r"] @ dzeta])

    def full_constraint_jacobian(self, u: np.ndarray) -> np.ndarray:
        self._require_constraint_split()
        if self.m_m:
            return np.zeros((0, self.m))
        u_c, u_l, u_r = (self.part(u, "c"), self.part(u, "l"), self.part(u, "r"))
        rows_a = self.Ac_perp.shape[0]
        jac = np.zeros((self.m_r, self.m))
        jac[:rows_a, self.slices["l"]] = self.Ac_perp @ self.A_blk["l"] @ self.devices["l"].dpsi(u_l)
        jac[:rows_a, self.slices["r"]] = self.Ac_perp @ self.A_blk["r"] @ self.devices["r"].dpsi(u_r)
        jac[rows_a:, self.slices["c"]] = self.Bl_perp @ self.B_blk["c"] @ self.devices["c"].dzeta(u_c)
        jac[rows_a:, self.slices["r"]] = self.Bl_perp @ self.B_blk["r"] @ self.devices["r"].dzeta(u_r)
        return jac

    # --- state-space pieces ----------------------------------------------------

    def rhs_numerators(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(-A_c^- KCL, -B_l^- KVL): right-hand sides before leading-coefficient solves."""
        return (-(self.Ac_minus @ self.kcl_nondiff(u)),
                -(self.Bl_minus @ self.kvl_nondiff(u)))

    def state_rhs(self, u: np.ndarray,
                  leading_tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
        """Explicit (u_c', u_l') where the leading coefficients are nonsingular.

        ``leading_tol = 0`` skips the vanishing-coefficient signal; the
        integrator uses that near balanced singularity crossings, where the
        quotient stays bounded although the coefficient does not.
        """
        if self.m_m:
            raise UnsupportedOperation("state_rhs applies to RLC circuits; "
                                       "use quasilinear_rhs for memristive ones")
        u_c, u_l = self.part(u, "c"), self.part(u, "l")
        rc, rl = self.rhs_numerators(u)
        Pc = self.devices["c"].dpsi(u_c)
        Ql = self.devices["l"].dzeta(u_l)
        return (_leading_solve(Pc, rc, "psi_c'", leading_tol),
                _leading_solve(Ql, rl, "zeta_l'", leading_tol))

    def quasilinear_rhs(self, u: np.ndarray) -> np.ndarray:
        """x' for x = (u_c, u_l, u_m) when there are no resistive branches."""
        if self.m_r:
            raise UnsupportedOperation("quasilinear_rhs requires m_r == 0")
        G = self.derivative_matrix(u)
        h = self.nondiff(u)
        try:
            return np.linalg.solve(G, -h)
        except np.linalg.LinAlgError:
            raise LeadingCoefficientError("derivative coefficient matrix is singular")

    # --- diagnostics -----------------------------------------------------------

    @cached_property
    def _proper_K(self):
        if self.m_m:
            return None
        try:
            return treepoly.proper_K_support(self.graph)
        except GraphError:
            return None

    def K_value(self, u_r: np.ndarray) -> float | None:
        k = self._proper_K
        if k is None:
            return None
        pq = {}
        for pos, bid in enumerate(self.role_branch_ids("r")):
            ch = self.devices["r"].scalar_at(pos)
            if ch is None:    # coupled resistive block: K is not defined
                return None
            pq[bid] = incremental_pq(ch, float(u_r[pos]))
        return treepoly.evaluate_K(k, pq)

    def regularity_check(self, u: np.ndarray) -> RegularityReport:
        u_c, u_l, u_r = (self.part(u, "c"), self.part(u, "l"), self.part(u, "r"))
        psi_c = self.devices["c"].diag_dpsi(u_c)
        zeta_l = self.devices["l"].diag_dzeta(u_l)
        if self.m_m or self.m_r == 0:
            jac = np.zeros((0, 0))
        else:
            jac = self.constraint_jacobian_ur(u_r)
        det = float(np.linalg.det(jac)) if jac.size else 1.0
        threshold = det_threshold(jac)
        flags_c = np.abs(psi_c) > FLAG_TOL
        flags_l = np.abs(zeta_l) > FLAG_TOL
        regular = bool(flags_c.all() and flags_l.all() and abs(det) > threshold)
        return RegularityReport(
            psi_c_values=psi_c, zeta_l_values=zeta_l,
            psi_c_flags=flags_c, zeta_l_flags=flags_l,
            det_jacobian=det, det_threshold=threshold,
            K_value=self.K_value(u_r) if self.m_r else None,
            regular=regular)

    def manifold_rank_check(self, u: np.ndarray) -> ManifoldRankReport:
        u_c, u_l, u_r = (self.part(u, "c"), self.part(u, "l"), self.part(u, "r"))
        psi_l = self.devices["l"].diag_dpsi(u_l)
        zeta_c = self.devices["c"].diag_dzeta(u_c)
        stacked = np.vstack([self.A_blk["r"] @ self.devices["r"].dpsi(u_r),
                             self.B_blk["r"] @ self.devices["r"].dzeta(u_r)])
        if stacked.size:
            rank = int(np.linalg.matrix_rank(
                stacked, tol=1e-10 * max(1.0, float(np.linalg.norm(stacked)))))
        else:
            rank = 0
        psi_l_ok = bool((np.abs(psi_l) > FLAG_TOL).all())
        zeta_c_ok = bool((np.abs(zeta_c) > FLAG_TOL).all())
        return ManifoldRankReport(
            psi_l_nonzero=psi_l_ok, zeta_c_nonzero=zeta_c_ok,
            rank=rank, m_r=self.m_r,
            manifold_guaranteed=psi_l_ok and zeta_c_ok and rank == self.m_r)


def det_threshold(jac: np.ndarray) -> float:
    """Scaled nonsingularity threshold: 1e-10 times the Hadamard bound."""
    if jac.size == 0:
        return 1e-10
    hadamard = float(np.prod(np.linalg.norm(jac, axis=1)))
    return 1e-10 * max(1.0, hadamard)


def _leading_solve(coeff: np.ndarray, rhs: np.ndarray, label: str,
                   tol: float = 1e-12) -> np.ndarray:
    if coeff.size == 0:
        return np.zeros(0)
    diag = np.diag(coeff)
    if np.all(coeff == np.diag(diag)):
        if np.any(np.abs(diag) <= max(tol, 1e-300)):
            raise LeadingCoefficientError(f"{label} has a vanishing component")
        return rhs / diag
    if tol > 0 and np.linalg.svd(coeff, compute_uv=False)[-1] <= tol:
        raise LeadingCoefficientError(f"{label} block is singular")
    try:
        return np.linalg.solve(coeff, rhs)
    except np.linalg.LinAlgError:
        raise LeadingCoefficientError(f"{label} block is singular")


def _to_float(rows, shape_hint: tuple[int, int]) -> np.ndarray:
    if not rows:
        return np.zeros(shape_hint)
    out = ratmat.to_float(rows)
    if out.shape[0] != shape_hint[0] or out.shape[1] != shape_hint[1]:
        raise AssertionError(f"splitting matrix shape {out.shape} != {shape_hint}")
    return out


def assemble(circuit: Circuit, topo: TopologyMatrices | None = None) -> HomogeneousModel:
    """Build the homogeneous model; rejects degenerate topologies."""
    topo = topo or topology_matrices(circuit.graph)
    report = nondegeneracy_check(circuit.graph, topo)
    if not report.nondegenerate:
        raise DegenerateTopologyError(report)
    return HomogeneousModel(circuit, topo)
