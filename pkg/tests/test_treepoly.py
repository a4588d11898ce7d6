import random
from fractions import Fraction

import numpy as np
import pytest

from homcirc import builtins, ratmat, treepoly
from homcirc.graph import Branch, CircuitGraph, GraphError, topology_matrices
from homcirc.treepoly import (
    SymPoly, UnsupportedCircuit, dehomogenize, evaluate_K,
    kirchhoff_polynomial, proper_K_support,
)

from randcircuits import random_connected_multigraph


def vdp_graph():
    return CircuitGraph(nodes=[0, 1], ground=0, branches=[
        Branch(1, "c", 1, 0), Branch(2, "l", 0, 1), Branch(3, "r", 1, 0)])


# the eight proper-tree monomials of the coupled-MLC circuit, as
# {p flags} / {q flags} over the resistor ids 1..5
MLC_MONOMIALS = [
    ({1, 3}, {2, 4, 5}),
    ({1, 4}, {2, 3, 5}),
    ({2, 3}, {1, 4, 5}),
    ({2, 4}, {1, 3, 5}),
    ({1, 5}, {2, 3, 4}),
    ({2, 5}, {1, 3, 4}),
    ({3, 5}, {1, 2, 4}),
    ({4, 5}, {1, 2, 3}),
]


class TestKirchhoffPolynomial:
    def test_vdp_three_terms(self):
        k = kirchhoff_polynomial(vdp_graph())
        assert str(k) == "p1*q2*q3 + q1*p2*q3 + q1*q2*p3"

    def test_single_branch(self):
        g = CircuitGraph(nodes=[0, 1], ground=0, branches=[Branch(1, "r", 1, 0)])
        assert str(kirchhoff_polynomial(g)) == "p1"

    def test_mlc_proper_support_matches_paper(self):
        g = builtins.load("mlc_coupled", validate=False).graph
        k = proper_K_support(g)
        got = {(frozenset(f["p"]), frozenset(f["q"])) for f in k.flags()}
        expected = {(frozenset(p), frozenset(q)) for p, q in MLC_MONOMIALS}
        assert got == expected

    def test_vdp_proper_support_is_qr(self):
        k = proper_K_support(vdp_graph())
        assert str(k) == "q3"

    def test_capacitor_loop_errors(self):
        g = CircuitGraph(nodes=[0, 1], ground=0, branches=[
            Branch(1, "c", 1, 0), Branch(2, "c", 1, 0), Branch(3, "r", 1, 0)])
        with pytest.raises(GraphError, match="no proper tree"):
            proper_K_support(g)

    def test_memristive_unsupported(self):
        g = builtins.load("mc_flux", validate=False).graph
        with pytest.raises(UnsupportedCircuit):
            proper_K_support(g)


class TestEvaluate:
    def test_all_ones_counts_proper_trees(self):
        g = builtins.load("mlc_coupled", validate=False).graph
        k = proper_K_support(g)
        value = evaluate_K(k, {i: (1.0, 1.0) for i in range(1, 6)})
        assert value == pytest.approx(8.0)

    def test_missing_value(self):
        k = proper_K_support(vdp_graph())
        with pytest.raises(KeyError):
            evaluate_K(k, {})

    def test_empty_polynomial_evaluates_to_zero(self):
        k = treepoly.KirchhoffPolynomial(branch_ids=(1,), monomials=frozenset(),
                                         restriction="all", symbolic=(0,))
        assert evaluate_K(k, {1: (2.0, 3.0)}) == 0.0


class TestDehomogenize:
    def mlc_poly(self):
        g = builtins.load("mlc_coupled", validate=False).graph
        return proper_K_support(g)

    def test_grouped_display(self):
        # divide by p1*p3*p5: p2*p4*r1*r3*r5 + p2*q4*(r1*r3 + r1*r5)
        #                   + q2*p4*(r1*r3 + r3*r5) + q2*q4*(r1 + r3 + r5)
        poly = dehomogenize(self.mlc_poly(), {1: "r", 3: "r", 5: "r"})
        expected = SymPoly({
            frozenset({"p2", "p4", "r1", "r3", "r5"}): Fraction(1),
            frozenset({"p2", "q4", "r1", "r3"}): Fraction(1),
            frozenset({"p2", "q4", "r1", "r5"}): Fraction(1),
            frozenset({"q2", "p4", "r1", "r3"}): Fraction(1),
            frozenset({"q2", "p4", "r3", "r5"}): Fraction(1),
            frozenset({"q2", "q4", "r1"}): Fraction(1),
            frozenset({"q2", "q4", "r3"}): Fraction(1),
            frozenset({"q2", "q4", "r5"}): Fraction(1),
        })
        assert poly == expected

    def test_voltage_controlled_resistor_four(self):
        # additionally divide by q4 to expose the conductance g4
        poly = dehomogenize(self.mlc_poly(), {1: "r", 3: "r", 5: "r", 4: "g"})
        expected = SymPoly({
            frozenset({"p2", "g4", "r1", "r3", "r5"}): Fraction(1),
            frozenset({"p2", "r1", "r3"}): Fraction(1),
            frozenset({"p2", "r1", "r5"}): Fraction(1),
            frozenset({"q2", "g4", "r1", "r3"}): Fraction(1),
            frozenset({"q2", "g4", "r3", "r5"}): Fraction(1),
            frozenset({"q2", "r1"}): Fraction(1),
            frozenset({"q2", "r3"}): Fraction(1),
            frozenset({"q2", "r5"}): Fraction(1),
        })
        assert poly == expected

    def test_fix_nothing_is_identity(self):
        k = self.mlc_poly()
        poly = dehomogenize(k, {})
        monos = {frozenset(f"p{i}" for i in f["p"]) | frozenset(f"q{i}" for i in f["q"])
                 for f in k.flags()}
        assert set(poly.terms) == monos
        assert all(c == 1 for c in poly.terms.values())

    def test_short_circuit_fault_conductance(self):
        # r1 = r3 = r5 = 1, short on resistor 2 (q2 = 0, p2 = 1):
        # singular conductance g4 = -(r1*r3 + r1*r5)/(r1*r3*r5) = -2
        poly = dehomogenize(self.mlc_poly(), {1: "r", 3: "r", 5: "r", 4: "g"})
        reduced = poly.substitute({"r1": 1.0, "r3": 1.0, "r5": 1.0,
                                   "p2": 1.0, "q2": 0.0})
        linear_coeff = reduced.coefficient_of("g4").constant_term()
        constant = reduced.without("g4").constant_term()
        g4_singular = -constant / linear_coeff
        assert float(g4_singular) == pytest.approx(-2.0, abs=1e-12)

    def test_fixed_flag_rejected(self):
        with pytest.raises(GraphError, match="fixed, not symbolic"):
            dehomogenize(self.mlc_poly(), {6: "r"})  # branch 6 is a capacitor


class TestWeightedMatrixTree:
    def det_ap_bq(self, t, p, q):
        A = ratmat.to_float(t.A)
        B = ratmat.to_float(t.B) if t.B else np.zeros((0, A.shape[1]))
        top = A * p[None, :]
        bottom = B * q[None, :]
        return float(np.linalg.det(np.vstack([top, bottom])))

    def test_lemma1_constant_ratio(self):
        rng = random.Random(42)
        np_rng = np.random.default_rng(42)
        for _ in range(10):
            g = random_connected_multigraph(rng, max_nodes=6, max_branches=10)
            t = topology_matrices(g)
            k = kirchhoff_polynomial(g)
            ids = g.branch_ids()
            ratios = []
            for _ in range(8):
                p = np_rng.uniform(0.5, 2.0, g.m)
                q = np_rng.uniform(0.5, 2.0, g.m)
                det = self.det_ap_bq(t, p, q)
                value = evaluate_K(k, {bid: (p[j], q[j]) for j, bid in enumerate(ids)})
                assert value > 0
                ratios.append(det / value)
            ratios = np.array(ratios)
            assert ratios[0] != 0.0
            assert np.max(np.abs(ratios - ratios[0])) <= 1e-9 * abs(ratios[0])

    def test_multihomogeneity(self):
        rng = random.Random(7)
        np_rng = np.random.default_rng(7)
        g = random_connected_multigraph(rng, max_nodes=5, max_branches=8)
        k = kirchhoff_polynomial(g)
        ids = g.branch_ids()
        p = np_rng.uniform(0.5, 2.0, g.m)
        q = np_rng.uniform(0.5, 2.0, g.m)
        base = evaluate_K(k, {bid: (p[j], q[j]) for j, bid in enumerate(ids)})
        for j, bid in enumerate(ids):
            scaled = {b: (p[i], q[i]) for i, b in enumerate(ids)}
            scaled[bid] = (3.0 * p[j], 3.0 * q[j])
            assert evaluate_K(k, scaled) == pytest.approx(3.0 * base, rel=1e-12)


class TestTheorem1Oracle:
    def test_det_matches_scaled_K(self):
        # cross-check on the worked example: the constraint Jacobian in u_r of
        # the coupled-MLC circuit must be a constant multiple of K(u_r)
        from homcirc import homomodel

        circuit = builtins.load("mlc_coupled", validate=False)
        model = homomodel.assemble(circuit)
        k = proper_K_support(circuit.graph)
        rng = np.random.default_rng(3)
        scale = None
        for _ in range(200):
            u_r = rng.uniform(-2.0, 2.0, 5)
            jac = model.constraint_jacobian_ur(u_r)
            det = float(np.linalg.det(jac))
            pq = {}
            for pos, bid in enumerate(model.role_branch_ids("r")):
                ch = circuit.devices["r"].scalar_at(pos)
                from homcirc.devices import incremental_pq
                pq[bid] = incremental_pq(ch, u_r[pos])
            value = evaluate_K(k, pq)
            if scale is None:
                scale = det / value
            assert det == pytest.approx(scale * value, rel=1e-8, abs=1e-10)
