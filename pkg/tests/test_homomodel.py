import math
import random

import numpy as np
import pytest

from homcirc import builtins, homomodel, netlist
from homcirc.homomodel import (
    DegenerateTopologyError, LeadingCoefficientError, UnsupportedOperation,
    assemble,
)

from randcircuits import random_rlc_circuit

VDP_CUBIC_CC = """\
circuit vdp_cubic_cc
ground 0
node 0 1
branch 1 kind=capacitor from=1 to=0 model=linear_c C=1
branch 2 kind=inductor from=0 to=1 model=linear_l L=1
branch 3 kind=resistor from=1 to=0 model=ccontrolled r="-u + u^3"
"""

RC_SHORT = """\
circuit rc_short
ground 0
node 0 1
branch 1 kind=capacitor from=1 to=0 model=linear_c C=1
branch 2 kind=resistor from=1 to=0 model=linear_r p=1 q=0
"""

C_LOOP = """\
circuit cloop
ground 0
node 0 1
branch 1 kind=capacitor from=1 to=0 model=linear_c C=1
branch 2 kind=capacitor from=1 to=0 model=linear_c C=2
branch 3 kind=resistor from=1 to=0 model=linear_r p=1 q=1
"""


def vdp_model():
    return assemble(builtins.load("vdp_lapshin", validate=False))


class TestAssemble:
    def test_vdp_splitting_matrices(self):
        model = vdp_model()
        np.testing.assert_allclose(model.Ac_minus, [[1.0]])
        assert model.Ac_perp.shape == (0, 1)
        assert model.Bl_minus.shape == (1, 2)
        assert model.Bl_perp.shape == (1, 2)
        # defining identities, exact
        np.testing.assert_array_equal(model.Bl_minus @ model.B_blk["l"], [[1.0]])
        np.testing.assert_array_equal(model.Bl_perp @ model.B_blk["l"], [[0.0]])

    def test_mlc_residual_dimension(self):
        model = assemble(builtins.load("mlc_coupled", validate=False))
        assert model.m_r == 5
        u = model.initial_state({1: 0.1, 6: 0.2})
        assert model.constraint_residual(u).shape == (5,)

    def test_c_loop_rejected(self):
        with pytest.raises(DegenerateTopologyError, match="capacitor-only loop"):
            assemble(netlist.load(C_LOOP, validate=False))


class TestConstraintResidual:
    def test_vdp_single_constraint(self):
        model = vdp_model()
        u = model.initial_state({1: 0.7, 2: -1.0, 3: 0.3})
        # the constraint is zeta_c(u_c) - zeta_r(u_r) up to a sign
        expected = 0.7 - 0.3
        res = model.constraint_residual(u)
        assert res.shape == (1,)
        assert abs(abs(res[0]) - abs(expected)) < 1e-14

    def test_all_linear_zero_state(self):
        model = assemble(builtins.load("rc_linear", validate=False))
        np.testing.assert_allclose(model.constraint_residual(np.zeros(model.m)), 0.0)


class TestConstraintJacobian:
    def test_vdp_is_zeta_r_prime(self):
        model = vdp_model()
        for u_r in (-1.2, 0.0, 0.8):
            jac = model.constraint_jacobian_ur(np.array([u_r]))
            assert jac.shape == (1, 1)
            assert abs(jac[0, 0]) == pytest.approx(1.0)  # zeta_r = id

    def test_depends_only_on_ur(self):
        model = assemble(builtins.load("mlc_coupled", validate=False))
        u_r = np.array([0.3, -0.4, 1.1, 0.2, -0.9])
        j1 = model.constraint_jacobian_ur(u_r)
        j2 = model.constraint_jacobian_ur(u_r)
        np.testing.assert_array_equal(j1, j2)

    def test_full_jacobian_rank_at_regular_point(self):
        model = vdp_model()
        u = model.initial_state({1: 0.5, 2: -1.805, 3: 0.5})
        jac = model.full_constraint_jacobian(u)
        assert jac.shape == (1, 3)
        assert np.linalg.matrix_rank(jac, tol=1e-10) == 1

    def test_full_jacobian_rank_at_impasse(self):
        # current-controlled cubic: zeta_r'(u*) = 0 at u* = 1/sqrt(3), but
        # zeta_c' = 1 keeps the full Jacobian at maximal rank (manifold case)
        model = assemble(netlist.load(VDP_CUBIC_CC, validate=False))
        u_star = 1.0 / math.sqrt(3.0)
        u = model.initial_state({1: -2.0 / (3.0 * math.sqrt(3.0)), 2: 0.1, 3: u_star})
        jac_ur = model.constraint_jacobian_ur(np.array([u_star]))
        assert abs(jac_ur[0, 0]) < 1e-12
        full = model.full_constraint_jacobian(u)
        assert np.linalg.matrix_rank(full, tol=1e-10) == 1

    def test_manifold_rank_check(self):
        model = assemble(netlist.load(VDP_CUBIC_CC, validate=False))
        u_star = 1.0 / math.sqrt(3.0)
        u = model.initial_state({1: -2.0 / (3.0 * math.sqrt(3.0)), 2: 0.1, 3: u_star})
        report = model.manifold_rank_check(u)
        assert report.manifold_guaranteed
        # a point where psi_r' = zeta_r' = 0 on some branch loses the rank
        degenerate = netlist.load("""\
circuit deg
ground 0
node 0 1
branch 1 kind=capacitor from=1 to=0 model=linear_c C=1
branch 2 kind=resistor from=1 to=0 model=param psi="sin(u)^2" zeta="cos(u)^2"
""", validate=False)
        model2 = assemble(degenerate)
        # at u = pi both derivatives 2*sin*cos and -2*cos*sin vanish... use u=pi/2
        u2 = model2.initial_state({1: 0.0, 2: math.pi / 2})
        report2 = model2.manifold_rank_check(u2)
        assert report2.rank < report2.m_r
        assert not report2.manifold_guaranteed


class TestRegularity:
    def test_vdp_lapshin_flux_extremum_flagged(self):
        model = vdp_model()
        u = model.initial_state({1: 0.0, 2: math.pi / 2, 3: 0.0})
        report = model.regularity_check(u)
        assert not report.zeta_l_flags[0]
        assert not report.regular

    def test_linear_rc_regular_everywhere(self):
        model = assemble(builtins.load("rc_linear", validate=False))
        rng = np.random.default_rng(0)
        for _ in range(50):
            u = rng.uniform(-3, 3, model.m)
            assert model.regularity_check(u).regular

    def test_linear_rc_short_singular_everywhere(self):
        model = assemble(netlist.load(RC_SHORT, validate=False))
        rng = np.random.default_rng(0)
        for _ in range(50):
            u = rng.uniform(-3, 3, model.m)
            assert not model.regularity_check(u).regular

    def test_cartesian_structure(self):
        model = vdp_model()
        rng = np.random.default_rng(1)
        base = model.initial_state({1: 0.3, 2: 1.0, 3: 0.3})
        flags = model.regularity_check(base).psi_c_flags
        for _ in range(10):
            u = base.copy()
            u[model.slices["l"]] = rng.uniform(-3, 3, model.m_l)
            u[model.slices["r"]] = rng.uniform(-3, 3, model.m_r)
            np.testing.assert_array_equal(model.regularity_check(u).psi_c_flags, flags)


class TestStateRhs:
    def test_vdp_reduces_to_paper_equations(self):
        model = vdp_model()
        circuit = model.circuit
        from homcirc import devices as dv
        lap = circuit.devices["l"].scalar_at(0)
        u = model.initial_state({1: 0.5, 2: -1.805, 3: 0.5})
        uc_dot, ul_dot = model.state_rhs(u)
        psi_l = dv.evaluate(lap, -1.805)[0]
        psi_r = -0.5 + 0.5 ** 3
        C = circuit.devices["c"].diag_dpsi(np.array([0.5]))[0]
        assert uc_dot[0] == pytest.approx((psi_l - psi_r) / C)
        zeta_l_d = dv.incremental_pq(lap, -1.805)[1]
        assert ul_dot[0] == pytest.approx(-0.5 / zeta_l_d)

    def test_linear_rc_decay_rate(self):
        model = assemble(builtins.load("rc_linear", validate=False))
        u = model.initial_state({1: 1.0, 2: 1.0})   # v_c = 1, consistent u_r
        uc_dot, _ = model.state_rhs(u)
        assert uc_dot[0] == pytest.approx(-1.0)

    def test_equilibrium_gives_zero(self):
        model = assemble(builtins.load("rc_linear", validate=False))
        uc_dot, ul_dot = model.state_rhs(np.zeros(model.m))
        np.testing.assert_allclose(uc_dot, 0.0)
        assert ul_dot.shape == (0,)

    def test_vanishing_leading_coefficient_signals(self):
        model = vdp_model()
        u = model.initial_state({1: 0.1, 2: math.pi / 2, 3: 0.1})
        with pytest.raises(LeadingCoefficientError):
            model.state_rhs(u)

    def test_memristive_needs_quasilinear(self):
        model = assemble(builtins.load("mc_flux", validate=False))
        with pytest.raises(UnsupportedOperation):
            model.state_rhs(np.zeros(model.m))
        xdot = model.quasilinear_rhs(model.initial_state({1: 0.4, 2: 0.0}))
        assert xdot.shape == (2,)


class TestSplittingIdentity:
    def core_residuals(self, model, u, uc_dot, ul_dot):
        u_c, u_l = model.part(u, "c"), model.part(u, "l")
        r_kcl = (model.A_blk["c"] @ model.devices["c"].dpsi(u_c) @ uc_dot
                 + model.kcl_nondiff(u))
        r_kvl = (model.B_blk["l"] @ model.devices["l"].dzeta(u_l) @ ul_dot
                 + model.kvl_nondiff(u))
        return r_kcl, r_kvl

    def test_premultiplication_reproduces_split(self):
        rng = random.Random(77)
        np_rng = np.random.default_rng(77)
        for _ in range(20):
            circuit = random_rlc_circuit(rng)
            model = assemble(circuit)
            u = np_rng.uniform(-1.5, 1.5, model.m)
            uc_dot = np_rng.uniform(-1, 1, model.m_c)
            ul_dot = np_rng.uniform(-1, 1, model.m_l)
            r_kcl, r_kvl = self.core_residuals(model, u, uc_dot, ul_dot)
            A0 = np.vstack([model.Ac_minus, model.Ac_perp])
            B0 = np.vstack([model.Bl_perp, model.Bl_minus])
            # split residuals assembled directly from the split equations
            u_c, u_l = model.part(u, "c"), model.part(u, "l")
            rc_num, rl_num = model.rhs_numerators(u)
            diff_c = model.devices["c"].dpsi(u_c) @ uc_dot - rc_num
            diff_l = model.devices["l"].dzeta(u_l) @ ul_dot - rl_num
            alg = model.constraint_residual(u)
            rows_a = model.Ac_perp.shape[0]
            recombined_A = np.concatenate([diff_c, alg[:rows_a]])
            recombined_B = np.concatenate([alg[rows_a:], diff_l])
            np.testing.assert_allclose(A0 @ r_kcl, recombined_A, atol=1e-12)
            np.testing.assert_allclose(B0 @ r_kvl, recombined_B, atol=1e-12)


class TestTheorem1Equivalence:
    def test_det_sign_pattern_matches_scaled_K(self):
        rng = random.Random(2024)
        np_rng = np.random.default_rng(2024)
        for _ in range(5):
            circuit = random_rlc_circuit(rng)
            model = assemble(circuit)
            if model.m_r == 0:
                continue
            scale = None
            for _ in range(200):
                u_r = np_rng.uniform(-2, 2, model.m_r)
                det = float(np.linalg.det(model.constraint_jacobian_ur(u_r)))
                K = model.K_value(u_r)
                if scale is None:
                    scale = det / K if K else None
                    continue
                if scale is not None:
                    assert det == pytest.approx(scale * K, rel=1e-8, abs=1e-9)
