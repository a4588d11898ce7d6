"""Circuit graph, exact topology matrices and tree enumeration.

Branches are kept in the column-block order capacitors, inductors,
memristors, resistors.  The reduced cut matrix is the incidence matrix with
the ground row deleted; the cycle matrix comes from a fundamental cycle
basis of a deterministic spanning tree.  Everything here is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from . import ratmat

KIND_ORDER = ("c", "l", "m", "r")
KIND_NAMES = {"capacitor": "c", "inductor": "l", "memristor": "m", "resistor": "r"}

DEFAULT_ENUMERATION_CAP = 24


class GraphError(ValueError):
    pass


class EnumerationCapExceeded(GraphError):
    pass


@dataclass(frozen=True)
class Branch:
    branch_id: int
    kind: str          # one of "c", "l", "m", "r"
    tail: int
    head: int


@dataclass
class CircuitGraph:
    """Directed multigraph with branches sorted into the c/l/m/r blocks."""

    nodes: list[int]
    ground: int
    branches: list[Branch]

    def __post_init__(self):
        if self.ground not in self.nodes:
            raise GraphError(f"ground node {self.ground} not among nodes")
        order = {k: i for i, k in enumerate(KIND_ORDER)}
        self.branches = sorted(self.branches, key=lambda b: order[b.kind])
        self._check_connected()

    def _check_connected(self):
        if not self.nodes:
            raise GraphError("empty node set")
        adjacency = {n: set() for n in self.nodes}
        for b in self.branches:
            adjacency[b.tail].add(b.head)
            adjacency[b.head].add(b.tail)
        seen = {self.nodes[0]}
        stack = [self.nodes[0]]
        while stack:
            for neighbor in adjacency[stack.pop()]:
                if neighbor not in seen:
                    seen.add(neighbor)
                    stack.append(neighbor)
        if seen != set(self.nodes):
            missing = sorted(set(self.nodes) - seen)
            raise GraphError(f"graph is disconnected; unreachable nodes {missing}")

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def m(self) -> int:
        return len(self.branches)

    def count(self, kind: str) -> int:
        return sum(1 for b in self.branches if b.kind == kind)

    def block_indices(self, kind: str) -> list[int]:
        return [i for i, b in enumerate(self.branches) if b.kind == kind]

    def branch_ids(self) -> list[int]:
        return [b.branch_id for b in self.branches]


@dataclass
class TopologyMatrices:
    A: ratmat.Matrix                      # (n-1) x m reduced cut matrix
    B: ratmat.Matrix                      # (m-n+1) x m cycle matrix
    blocks: dict[str, list[int]] = field(default_factory=dict)

    def columns(self, matrix: ratmat.Matrix, kind: str) -> ratmat.Matrix:
        cols = self.blocks[kind]
        return [[row[j] for j in cols] for row in matrix]

    def A_block(self, kind: str) -> ratmat.Matrix:
        return self.columns(self.A, kind)

    def B_block(self, kind: str) -> ratmat.Matrix:
        return self.columns(self.B, kind)


def topology_matrices(g: CircuitGraph) -> TopologyMatrices:
    """Reduced incidence matrix plus a fundamental cycle basis."""
    non_ground = [n for n in g.nodes if n != g.ground]
    row_of = {n: i for i, n in enumerate(non_ground)}
    A = ratmat.zeros(len(non_ground), g.m)
    for j, b in enumerate(g.branches):
        if b.tail != g.ground:
            A[row_of[b.tail]][j] += 1
        if b.head != g.ground:
            A[row_of[b.head]][j] -= 1

    tree = _bfs_spanning_tree(g)
    cotree = [j for j in range(g.m) if j not in tree]
    B = ratmat.zeros(len(cotree), g.m)
    parent = _tree_parents(g, tree)
    for row, j in enumerate(cotree):
        b = g.branches[j]
        B[row][j] = Fraction(1)
        for k, sign in _tree_path(parent, b.head, b.tail):
            B[row][k] += sign
    blocks = {kind: g.block_indices(kind) for kind in KIND_ORDER}
    return TopologyMatrices(A=A, B=B, blocks=blocks)


def _bfs_spanning_tree(g: CircuitGraph) -> set[int]:
    seen = {g.nodes[0]}
    tree: set[int] = set()
    frontier = True
    while frontier:
        frontier = False
        for j, b in enumerate(g.branches):
            if j in tree:
                continue
            if (b.tail in seen) != (b.head in seen):
                tree.add(j)
                seen.add(b.tail if b.head in seen else b.head)
                frontier = True
    return tree


def _tree_parents(g: CircuitGraph, tree: set[int]) -> dict[int, tuple[int, int, int]]:
    """Map node -> (parent node, branch index, orientation) rooted at ground."""
    parent: dict[int, tuple[int, int, int]] = {}
    seen = {g.ground}
    frontier = [g.ground]
    while frontier:
        node = frontier.pop()
        for j in tree:
            b = g.branches[j]
            for near, far, sign in ((b.tail, b.head, -1), (b.head, b.tail, +1)):
                # sign is the branch orientation when walking far -> near
                if near == node and far not in seen:
                    parent[far] = (node, j, sign)
                    seen.add(far)
                    frontier.append(far)
    return parent


def _tree_path(parent, start: int, end: int) -> list[tuple[int, int]]:
    """Tree path start -> end as (branch index, +-1 traversal sign) pairs."""

    def to_root(node):
        chain = []
        while node in parent:
            up, j, sign = parent[node]
            chain.append((node, up, j, sign))
            node = up
        return chain

    up_start = to_root(start)
    up_end = to_root(end)
    nodes_start = [start] + [step[1] for step in up_start]
    nodes_end = [end] + [step[1] for step in up_end]
    common = next(n for n in nodes_start if n in set(nodes_end))
    path = []
    for node, up, j, sign in up_start:
        if node == common:
            break
        path.append((j, sign))
        if up == common:
            break
    down = []
    for node, up, j, sign in up_end:
        if node == common:
            break
        down.append((j, -sign))
        if up == common:
            break
    path.extend(reversed(down))
    return path


# --- Tree enumeration -------------------------------------------------------

def spanning_trees(g: CircuitGraph, cap: int = DEFAULT_ENUMERATION_CAP) -> list[frozenset[int]]:
    """All spanning trees as sets of branch indices (contraction-deletion)."""
    if g.m > cap:
        raise EnumerationCapExceeded(f"{g.m} branches exceeds enumeration cap {cap}")
    edges = [(j, b.tail, b.head) for j, b in enumerate(g.branches)]
    trees = _enumerate(set(g.nodes), edges, frozenset())
    return sorted(trees, key=sorted)


def _connected(nodes: set, edges: list) -> bool:
    if len(nodes) <= 1:
        return True
    adjacency = {n: [] for n in nodes}
    for _, a, b in edges:
        adjacency[a].append(b)
        adjacency[b].append(a)
    start = next(iter(nodes))
    seen = {start}
    stack = [start]
    while stack:
        for neighbor in adjacency[stack.pop()]:
            if neighbor not in seen:
                seen.add(neighbor)
                stack.append(neighbor)
    return len(seen) == len(nodes)


def _enumerate(nodes: set, edges: list, chosen: frozenset) -> list[frozenset]:
    if len(nodes) == 1:
        return [chosen]
    if not edges or len(edges) < len(nodes) - 1:
        return []
    if not _connected(nodes, edges):
        return []
    idx, a, b = edges[0]
    rest = edges[1:]
    results = []
    if a != b:
        # contract: merge b into a
        merged_nodes = set(nodes)
        merged_nodes.discard(b)
        contracted = []
        for j, x, y in rest:
            x2 = a if x == b else x
            y2 = a if y == b else y
            if x2 != y2:
                contracted.append((j, x2, y2))
        results.extend(_enumerate(merged_nodes, contracted, chosen | {idx}))
    # delete
    results.extend(_enumerate(nodes, rest, chosen))
    return results


def proper_trees(g: CircuitGraph, cap: int = DEFAULT_ENUMERATION_CAP) -> list[frozenset[int]]:
    """Spanning trees containing every capacitor and no inductor.

    Memristors are treated like resistors here: free to sit in either the
    tree or the cotree.
    """
    if g.m > cap:
        raise EnumerationCapExceeded(f"{g.m} branches exceeds enumeration cap {cap}")
    cap_idx = g.block_indices("c")
    ind_idx = set(g.block_indices("l"))

    # contract all capacitors up front; a self-loop means a capacitor-only cycle
    node_alias = {n: n for n in g.nodes}

    def find(n):
        while node_alias[n] != n:
            node_alias[n] = node_alias[node_alias[n]]
            n = node_alias[n]
        return n

    for j in cap_idx:
        b = g.branches[j]
        ta, he = find(b.tail), find(b.head)
        if ta == he:
            return []
        node_alias[he] = ta

    nodes = {find(n) for n in g.nodes}
    edges = []
    for j, b in enumerate(g.branches):
        if j in ind_idx or b.kind == "c":
            continue
        ta, he = find(b.tail), find(b.head)
        if ta != he:
            edges.append((j, ta, he))
    base = frozenset(cap_idx)
    trees = _enumerate(nodes, edges, base)
    return sorted(trees, key=sorted)


# --- Nondegeneracy -----------------------------------------------------------

@dataclass
class NondegeneracyReport:
    rank_Ac: int
    rank_Bl: int
    m_c: int
    m_l: int

    @property
    def capacitor_loop(self) -> bool:
        return self.rank_Ac < self.m_c

    @property
    def inductor_cutset(self) -> bool:
        return self.rank_Bl < self.m_l

    @property
    def nondegenerate(self) -> bool:
        return not (self.capacitor_loop or self.inductor_cutset)


def nondegeneracy_check(g: CircuitGraph, t: TopologyMatrices) -> NondegeneracyReport:
    """Exact column-rank test of A_c and B_l (no C-loops, no L-cutsets)."""
    Ac = t.A_block("c")
    Bl = t.B_block("l")
    return NondegeneracyReport(
        rank_Ac=ratmat.rank(Ac),
        rank_Bl=ratmat.rank(Bl),
        m_c=g.count("c"),
        m_l=g.count("l"),
    )
