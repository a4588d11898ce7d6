"""Random circuit/graph generators shared by property and acceptance tests."""

import random

from homcirc import devices
from homcirc.devices import DeviceSet
from homcirc.graph import Branch, CircuitGraph, nondegeneracy_check, topology_matrices
from homcirc.netlist import Circuit


def random_connected_multigraph(rng: random.Random, max_nodes: int = 8,
                                max_branches: int = 14,
                                kinds: str = "clr") -> CircuitGraph:
    """Connected directed multigraph: random spanning tree plus chords."""
    n = rng.randint(2, max_nodes)
    branches = []
    next_id = 1
    for node in range(1, n):
        parent = rng.randrange(node)
        tail, head = (node, parent) if rng.random() < 0.5 else (parent, node)
        branches.append((next_id, rng.choice(kinds), tail, head))
        next_id += 1
    extra = rng.randint(0, max(0, max_branches - (n - 1)))
    for _ in range(extra):
        tail = rng.randrange(n)
        head = rng.randrange(n)
        if tail == head:
            continue
        branches.append((next_id, rng.choice(kinds), tail, head))
        next_id += 1
    return CircuitGraph(
        nodes=list(range(n)), ground=0,
        branches=[Branch(i, k, t, h) for i, k, t, h in branches])


_RESISTOR_MAKERS = [
    lambda rng: devices.vcontrolled(f"{rng.uniform(-2, 2):.4f}*u + {rng.uniform(0.2, 1.5):.4f}*u^3"),
    lambda rng: devices.ccontrolled(f"{rng.uniform(0.3, 2.0):.4f}*u + {rng.uniform(-0.8, 0.8):.4f}*sin(u)"),
    lambda rng: devices.param(f"u + {rng.uniform(-0.5, 0.5):.4f}*sin(u)",
                              f"{rng.uniform(0.4, 1.6):.4f}*u + {rng.uniform(-0.9, 0.9):.4f}*cos(u)",
                              role="r"),
    lambda rng: devices.linear_r(rng.uniform(0.5, 2.0), rng.uniform(0.5, 2.0)),
]


def random_rlc_circuit(rng: random.Random, max_nodes: int = 6,
                       max_branches: int = 9) -> Circuit:
    """Random topologically nondegenerate RLC circuit with nonlinear resistors."""
    while True:
        g = random_connected_multigraph(rng, max_nodes, max_branches, kinds="clrr")
        if g.count("r") == 0 or g.count("c") == 0:
            continue
        t = topology_matrices(g)
        if not nondegeneracy_check(g, t).nondegenerate:
            continue
        break
    dsets = {}
    for role in ("c", "l", "m", "r"):
        units = []
        for pos in range(g.count(role)):
            if role == "c":
                ch = devices.linear_c(rng.uniform(0.5, 2.0))
            elif role == "l":
                ch = devices.linear_l(rng.uniform(0.5, 2.0))
            elif role == "r":
                ch = rng.choice(_RESISTOR_MAKERS)(rng)
            else:
                ch = devices.cubic_memristor()
            units.append(((pos,), ch))
        dsets[role] = DeviceSet(role=role, size=g.count(role), units=units)
    return Circuit(name="random", graph=g, devices=dsets, doc=None)
