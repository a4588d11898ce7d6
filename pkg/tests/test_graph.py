import random
from fractions import Fraction

import pytest

from homcirc import builtins, ratmat
from homcirc.graph import (
    Branch, CircuitGraph, EnumerationCapExceeded, GraphError,
    nondegeneracy_check, proper_trees, spanning_trees, topology_matrices,
)

from randcircuits import random_connected_multigraph


def vdp_graph() -> CircuitGraph:
    return CircuitGraph(nodes=[0, 1], ground=0, branches=[
        Branch(1, "c", 1, 0), Branch(2, "l", 0, 1), Branch(3, "r", 1, 0)])


def mlc_graph() -> CircuitGraph:
    return builtins.load("mlc_coupled", validate=False).graph


class TestTopologyMatrices:
    def test_vdp_matrices(self):
        t = topology_matrices(vdp_graph())
        assert t.A == ratmat.mat([[1, -1, 1]])
        paper_B = ratmat.mat([[1, 1, 0], [1, 0, -1]])
        assert ratmat.row_space_equal(t.B, paper_B)
        assert ratmat.is_zero(ratmat.matmul(t.A, ratmat.transpose(t.B)))

    def test_single_branch(self):
        g = CircuitGraph(nodes=[0, 1], ground=0, branches=[Branch(1, "r", 1, 0)])
        t = topology_matrices(g)
        assert t.A == ratmat.mat([[1]])
        assert t.B == []

    def test_mlc_shapes_and_orthogonality(self):
        g = mlc_graph()
        t = topology_matrices(g)
        assert len(t.A) == 4 and len(t.B) == 5
        assert ratmat.is_zero(ratmat.matmul(t.A, ratmat.transpose(t.B)))
        assert ratmat.rank(t.A) == 4
        assert ratmat.rank(t.B) == 5

    def test_disconnected_graph_rejected(self):
        with pytest.raises(GraphError, match="disconnected"):
            CircuitGraph(nodes=[0, 1, 2], ground=0, branches=[Branch(1, "r", 1, 0)])


class TestSpanningTrees:
    def test_vdp_three_parallel(self):
        trees = spanning_trees(vdp_graph())
        assert trees == [frozenset({0}), frozenset({1}), frozenset({2})]

    def test_triangle(self):
        g = CircuitGraph(nodes=[0, 1, 2], ground=0, branches=[
            Branch(1, "r", 0, 1), Branch(2, "r", 1, 2), Branch(3, "r", 2, 0)])
        assert len(spanning_trees(g)) == 3

    def test_mlc_count_matches_matrix_tree(self):
        g = mlc_graph()
        t = topology_matrices(g)
        count = ratmat.det(ratmat.matmul(t.A, ratmat.transpose(t.A)))
        assert Fraction(len(spanning_trees(g))) == count

    def test_cap_exceeded(self):
        g = CircuitGraph(nodes=[0, 1], ground=0, branches=[
            Branch(i, "r", 0, 1) for i in range(1, 30)])
        with pytest.raises(EnumerationCapExceeded):
            spanning_trees(g)


class TestProperTrees:
    def test_vdp_unique_proper_tree(self):
        assert proper_trees(vdp_graph()) == [frozenset({0})]

    def test_mlc_has_eight(self):
        assert len(proper_trees(mlc_graph())) == 8

    def test_capacitor_cycle_gives_none(self):
        g = CircuitGraph(nodes=[0, 1], ground=0, branches=[
            Branch(1, "c", 1, 0), Branch(2, "c", 1, 0), Branch(3, "r", 1, 0)])
        assert proper_trees(g) == []


class TestNondegeneracy:
    def test_vdp_nondegenerate(self):
        g = vdp_graph()
        report = nondegeneracy_check(g, topology_matrices(g))
        assert report.nondegenerate
        assert report.rank_Ac == 1 and report.rank_Bl == 1

    def test_capacitor_loop_flagged(self):
        g = CircuitGraph(nodes=[0, 1], ground=0, branches=[
            Branch(1, "c", 1, 0), Branch(2, "c", 1, 0), Branch(3, "r", 1, 0)])
        report = nondegeneracy_check(g, topology_matrices(g))
        assert not report.nondegenerate and report.capacitor_loop

    def test_inductor_bridge_is_a_cutset(self):
        # a lone inductor branch is an inductor-only cutset
        g = CircuitGraph(nodes=[0, 1], ground=0, branches=[Branch(1, "l", 1, 0)])
        report = nondegeneracy_check(g, topology_matrices(g))
        assert not report.nondegenerate and report.inductor_cutset

    def test_inductor_in_a_loop_is_fine(self):
        g = CircuitGraph(nodes=[0, 1, 2], ground=0, branches=[
            Branch(1, "c", 1, 0), Branch(2, "l", 1, 2), Branch(3, "r", 2, 0)])
        report = nondegeneracy_check(g, topology_matrices(g))
        assert report.nondegenerate


class TestRandomCorpus:
    def test_fifty_random_multigraphs(self):
        rng = random.Random(1234)
        for _ in range(50):
            g = random_connected_multigraph(rng)
            t = topology_matrices(g)
            if t.B:  # orthogonality is vacuous for tree graphs
                assert ratmat.is_zero(ratmat.matmul(t.A, ratmat.transpose(t.B)))
            trees = spanning_trees(g)
            count = ratmat.det(ratmat.matmul(t.A, ratmat.transpose(t.A)))
            assert Fraction(len(trees)) == count
            proper = proper_trees(g)
            assert set(proper) <= set(trees)
            cap_set = set(g.block_indices("c"))
            ind_set = set(g.block_indices("l"))
            filtered = [T for T in trees if cap_set <= T and not (T & ind_set)]
            assert sorted(filtered, key=sorted) == proper
            report = nondegeneracy_check(g, t)
            assert report.nondegenerate == bool(proper)
