"""Multihomogeneous tree-enumerator (Kirchhoff) polynomial.

Every spanning tree T contributes one monomial, with the flag p_i when
branch i is in T and q_i when it is in the cotree.  The nonlinear
specialization keeps the resistive flags symbolic over the proper trees
(all capacitors in the tree, no inductors) and fixes the reactive flags to
one; its evaluation at the incremental parameters characterizes the
regular set.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .graph import (CircuitGraph, DEFAULT_ENUMERATION_CAP, GraphError,
                    proper_trees, spanning_trees)


class UnsupportedCircuit(GraphError):
    pass


@dataclass(frozen=True)
class KirchhoffPolynomial:
    branch_ids: tuple[int, ...]                 # column order -> branch id
    monomials: frozenset[frozenset[int]]        # tree columns (P flags)
    restriction: str                            # "all" | "proper"
    symbolic: tuple[int, ...]                   # columns with symbolic flags

    @property
    def m(self) -> int:
        return len(self.branch_ids)

    def sorted_monomials(self) -> list[tuple[int, ...]]:
        return sorted(tuple(sorted(t)) for t in self.monomials)

    def flags(self) -> list[dict[str, list[int]]]:
        """Monomials as {p: [branch ids], q: [branch ids]} over symbolic columns."""
        out = []
        for tree in self.sorted_monomials():
            tree_set = set(tree)
            p = [self.branch_ids[c] for c in self.symbolic if c in tree_set]
            q = [self.branch_ids[c] for c in self.symbolic if c not in tree_set]
            out.append({"p": p, "q": q})
        return out

    def __str__(self) -> str:
        terms = []
        for tree in self.sorted_monomials():
            tree_set = set(tree)
            factors = [f"{'p' if c in tree_set else 'q'}{self.branch_ids[c]}"
                       for c in self.symbolic]
            terms.append("*".join(factors) if factors else "1")
        return " + ".join(terms) if terms else "0"


def kirchhoff_polynomial(g: CircuitGraph, cap: int = DEFAULT_ENUMERATION_CAP) -> KirchhoffPolynomial:
    """The full tree-enumerator polynomial over all spanning trees."""
    trees = spanning_trees(g, cap)
    return KirchhoffPolynomial(
        branch_ids=tuple(g.branch_ids()),
        monomials=frozenset(trees),
        restriction="all",
        symbolic=tuple(range(g.m)),
    )


def proper_K_support(g: CircuitGraph, cap: int = DEFAULT_ENUMERATION_CAP) -> KirchhoffPolynomial:
    """Restriction to proper trees with reactive flags fixed to one.

    Only resistive flags stay symbolic; evaluating the result at
    (p_r(u_r), q_r(u_r)) yields the regular-set function K(u_r).
    """
    if g.count("m"):
        raise UnsupportedCircuit(
            "proper-tree analysis is defined for RLC circuits; "
            "memristive branches are not supported")
    trees = proper_trees(g, cap)
    if not trees:
        raise GraphError("degenerate topology: no proper tree exists")
    return KirchhoffPolynomial(
        branch_ids=tuple(g.branch_ids()),
        monomials=frozenset(trees),
        restriction="proper",
        symbolic=tuple(g.block_indices("r")),
    )


def evaluate_K(k: KirchhoffPolynomial, pq: dict[int, tuple[float, float]]) -> float:
    """Sum over monomials of prod p_i (tree) * prod q_j (cotree); ``pq`` is
    keyed by branch id and must cover every symbolic flag."""
    for c in k.symbolic:
        if k.branch_ids[c] not in pq:
            raise KeyError(f"missing (p, q) value for branch {k.branch_ids[c]}")
    total = 0.0
    for tree in k.monomials:
        prod = 1.0
        for c in k.symbolic:
            p, q = pq[k.branch_ids[c]]
            prod *= p if c in tree else q
        total += prod
    return total


def membership_matrix(k: KirchhoffPolynomial):
    """(monomials x symbolic-columns) boolean tree-membership matrix, with the
    monomials in the canonical sorted order."""
    import numpy as np

    trees = k.sorted_monomials()
    mat = np.zeros((len(trees), len(k.symbolic)), dtype=bool)
    for row, tree in enumerate(trees):
        tree_set = set(tree)
        for col, c in enumerate(k.symbolic):
            mat[row, col] = c in tree_set
    return mat


def evaluate_K_columns(k: KirchhoffPolynomial, membership, p, q) -> float:
    """Vectorized evaluation with per-symbolic-column value arrays."""
    import numpy as np

    factors = np.where(membership, p[None, :], q[None, :])
    return float(factors.prod(axis=1).sum())


# --- Dehomogenization --------------------------------------------------------

@dataclass
class SymPoly:
    """Multi-affine polynomial: monomials are sets of symbols, one power each."""

    terms: dict[frozenset[str], Fraction]

    def __post_init__(self):
        self.terms = {k: v for k, v in self.terms.items() if v != 0}

    def __eq__(self, other):
        if not isinstance(other, SymPoly):
            return NotImplemented
        return self.terms == other.terms

    def symbols(self) -> set[str]:
        out: set[str] = set()
        for mono in self.terms:
            out |= mono
        return out

    def coefficient_of(self, symbol: str) -> "SymPoly":
        return SymPoly({mono - {symbol}: c for mono, c in self.terms.items()
                        if symbol in mono})

    def without(self, symbol: str) -> "SymPoly":
        return SymPoly({mono: c for mono, c in self.terms.items() if symbol not in mono})

    def substitute(self, values: dict[str, float]) -> "SymPoly":
        out: dict[frozenset[str], Fraction] = {}
        for mono, coeff in self.terms.items():
            factor = coeff
            remaining = set(mono)
            for sym in mono:
                if sym in values:
                    factor *= Fraction(values[sym])
                    remaining.discard(sym)
            key = frozenset(remaining)
            out[key] = out.get(key, Fraction(0)) + factor
        return SymPoly(out)

    def evaluate(self, values: dict[str, float]) -> float:
        result = self.substitute(values)
        leftover = result.symbols()
        if leftover:
            raise KeyError(f"unresolved symbols {sorted(leftover)}")
        return float(sum(result.terms.values(), Fraction(0)))

    def constant_term(self) -> Fraction:
        return self.terms.get(frozenset(), Fraction(0))

    def __str__(self) -> str:
        if not self.terms:
            return "0"
        parts = []
        for mono in sorted(self.terms, key=lambda s: (len(s), sorted(s))):
            coeff = self.terms[mono]
            body = "*".join(sorted(mono, key=_symbol_key))
            if not body:
                parts.append(str(coeff))
            elif coeff == 1:
                parts.append(body)
            else:
                parts.append(f"{coeff}*{body}")
        return " + ".join(parts)


def _symbol_key(sym: str) -> tuple[str, int, str]:
    head = sym.rstrip("0123456789")
    tail = sym[len(head):]
    return (head, int(tail) if tail else -1, sym)


def dehomogenize(k: KirchhoffPolynomial, fixed: dict[int, object]) -> SymPoly:
    """Partially dehomogenize the polynomial.

    ``fixed`` maps a branch id to one of
      * ``"r"``  -- divide by p_i, keeping the resistance ratio r_i = q_i/p_i,
      * ``"g"``  -- divide by q_i, keeping the conductance ratio g_i = p_i/q_i,
      * a numeric pair ``(p, q)`` substituted directly.

    Branches absent from ``fixed`` keep their symbolic p_i/q_i flags.
    """
    symbolic_ids = {k.branch_ids[c] for c in k.symbolic}
    for bid in fixed:
        if bid not in symbolic_ids:
            raise GraphError(
                f"cannot dehomogenize branch {bid}: its flag is fixed, not symbolic")
    terms: dict[frozenset[str], Fraction] = {}
    for tree in k.monomials:
        symbols: set[str] = set()
        coeff = Fraction(1)
        for c in k.symbolic:
            bid = k.branch_ids[c]
            in_tree = c in tree
            spec = fixed.get(bid)
            if spec is None:
                symbols.add(f"{'p' if in_tree else 'q'}{bid}")
            elif spec == "r":
                if not in_tree:
                    symbols.add(f"r{bid}")
            elif spec == "g":
                if in_tree:
                    symbols.add(f"g{bid}")
            else:
                p, q = spec  # numeric pair
                coeff *= Fraction(p if in_tree else q)
        if coeff != 0:
            key = frozenset(symbols)
            terms[key] = terms.get(key, Fraction(0)) + coeff
    return SymPoly(terms)
