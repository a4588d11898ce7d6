"""Line-oriented netlist parsing and elaboration to a circuit.

Format (UTF-8, ``#`` starts a comment):

    circuit <name>
    ground <node>
    node <id>...
    branch <id> kind=<resistor|capacitor|inductor|memristor> from=<n> to=<n>
           model=<name> [key=value]... [psi="expr"] [zeta="expr"]
           [domain=line|circle]

Built-in models: linear_r(p,q), linear_c(C), linear_l(L), vcontrolled(g),
ccontrolled(r), param(psi,zeta,domain), lapshin(m,n,alpha,beta,gamma,delta),
cubic_memristor(control=flux|charge), coupled_l(L1,L2,M,partner),
controlled_src(p2,q2,f2,controller).
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass, field

from . import devices, expr
from .devices import Characteristic, DeviceSet
from .graph import Branch, CircuitGraph, GraphError, KIND_NAMES

VALID_KINDS = tuple(KIND_NAMES)


class NetlistError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass
class BranchRecord:
    branch_id: int
    kind: str
    tail: int
    head: int
    model: str
    params: dict[str, str] = field(default_factory=dict)
    line: int = 0


@dataclass
class NetlistDocument:
    name: str
    nodes: list[int]
    ground: int
    branches: list[BranchRecord]

    def branch(self, branch_id: int) -> BranchRecord:
        for b in self.branches:
            if b.branch_id == branch_id:
                return b
        raise KeyError(branch_id)


def parse_netlist(text: str) -> NetlistDocument:
    """Parse and validate a netlist document; diagnostics carry line numbers."""
    name = "circuit"
    nodes: list[int] = []
    ground: int | None = None
    branches: list[BranchRecord] = []
    seen_ids: set[int] = set()

    for line_no, raw in enumerate(text.splitlines(), start=1):
        try:
            tokens = shlex.split(raw, comments=True)
        except ValueError as exc:
            raise NetlistError(f"malformed line: {exc}", line_no)
        if not tokens:
            continue
        head, rest = tokens[0], tokens[1:]
        if head == "circuit":
            if len(rest) != 1:
                raise NetlistError("circuit line expects exactly one name", line_no)
            name = rest[0]
        elif head == "ground":
            if len(rest) != 1:
                raise NetlistError("ground line expects exactly one node id", line_no)
            ground = _node_id(rest[0], line_no)
        elif head == "node":
            if not rest:
                raise NetlistError("node line expects at least one id", line_no)
            for tok in rest:
                node = _node_id(tok, line_no)
                if node not in nodes:
                    nodes.append(node)
        elif head == "branch":
            branches.append(_parse_branch(rest, line_no, seen_ids))
        else:
            raise NetlistError(f"unknown directive {head!r}", line_no)

    if ground is None:
        raise NetlistError("missing ground declaration")
    if ground not in nodes:
        raise NetlistError(f"ground node {ground} is not declared")
    declared = set(nodes)
    for b in branches:
        for endpoint in (b.tail, b.head):
            if endpoint not in declared:
                raise NetlistError(f"undeclared node {endpoint}", b.line)
    return NetlistDocument(name=name, nodes=nodes, ground=ground, branches=branches)


def _node_id(token: str, line_no: int) -> int:
    try:
        value = int(token)
    except ValueError:
        raise NetlistError(f"node id must be an integer, got {token!r}", line_no)
    if value < 0:
        raise NetlistError(f"node id must be non-negative, got {value}", line_no)
    return value


def _parse_branch(rest: list[str], line_no: int, seen_ids: set[int]) -> BranchRecord:
    if not rest:
        raise NetlistError("branch line expects an id", line_no)
    try:
        branch_id = int(rest[0])
    except ValueError:
        raise NetlistError(f"branch id must be an integer, got {rest[0]!r}", line_no)
    if branch_id in seen_ids:
        raise NetlistError(f"duplicate branch id {branch_id}", line_no)
    seen_ids.add(branch_id)

    params: dict[str, str] = {}
    for tok in rest[1:]:
        if "=" not in tok:
            raise NetlistError(f"expected key=value, got {tok!r}", line_no)
        key, value = tok.split("=", 1)
        if key in params:
            raise NetlistError(f"duplicate key {key!r}", line_no)
        params[key] = value

    kind = params.pop("kind", None)
    if kind not in VALID_KINDS:
        raise NetlistError(f"branch kind must be one of {VALID_KINDS}, got {kind!r}", line_no)
    try:
        tail = _node_id(params.pop("from"), line_no)
        head = _node_id(params.pop("to"), line_no)
    except KeyError as exc:
        raise NetlistError(f"branch is missing {exc.args[0]!r}=", line_no)
    if tail == head:
        raise NetlistError(f"branch endpoints coincide (node {tail})", line_no)
    model = params.pop("model", None)
    if model is None:
        if "psi" in params and "zeta" in params:
            model = "param"
        else:
            raise NetlistError("branch is missing model=", line_no)
    return BranchRecord(branch_id=branch_id, kind=kind, tail=tail, head=head,
                        model=model, params=params, line=line_no)


# --- Elaboration -------------------------------------------------------------

@dataclass
class Circuit:
    name: str
    graph: CircuitGraph
    devices: dict[str, DeviceSet]
    doc: NetlistDocument

    def device_for(self, branch_id: int):
        role, pos = self.position(branch_id)
        for positions, dev in self.devices[role].units:
            if pos in positions:
                return dev
        raise KeyError(branch_id)

    def position(self, branch_id: int) -> tuple[str, int]:
        for kind in ("c", "l", "m", "r"):
            for pos, idx in enumerate(self.graph.block_indices(kind)):
                if self.graph.branches[idx].branch_id == branch_id:
                    return kind, pos
        raise KeyError(branch_id)


def _float(record: BranchRecord, key: str) -> float:
    if key not in record.params:
        raise NetlistError(
            f"model {record.model!r} requires parameter {key!r}", record.line)
    try:
        return float(record.params[key])
    except ValueError:
        raise NetlistError(f"parameter {key!r} must be a number", record.line)


def _int(record: BranchRecord, key: str) -> int:
    value = _float(record, key)
    if value != int(value):
        raise NetlistError(f"parameter {key!r} must be an integer", record.line)
    return int(value)


def _expr_param(record: BranchRecord, key: str,
                variables: tuple[str, ...] = ("u",)) -> expr.Node:
    if key not in record.params:
        raise NetlistError(
            f"model {record.model!r} requires expression parameter {key!r}", record.line)
    try:
        return expr.parse_expression(record.params[key], variables)
    except expr.ExpressionError as exc:
        raise NetlistError(f"in parameter {key!r}: {exc}", record.line)


_SCALAR_BUILDERS = {
    "linear_r": ("r", lambda rec: devices.linear_r(_float(rec, "p"), _float(rec, "q"))),
    "linear_c": ("c", lambda rec: devices.linear_c(_float(rec, "C"))),
    "linear_l": ("l", lambda rec: devices.linear_l(_float(rec, "L"))),
    "vcontrolled": ("r", lambda rec: devices.vcontrolled(_expr_param(rec, "g"))),
    "ccontrolled": ("r", lambda rec: devices.ccontrolled(_expr_param(rec, "r"))),
    "cubic_memristor": ("m", lambda rec: devices.cubic_memristor(
        rec.params.get("control", "flux"))),
}


def _scalar_device(record: BranchRecord) -> Characteristic:
    role = KIND_NAMES[record.kind]
    if record.model in _SCALAR_BUILDERS:
        expected_role, builder = _SCALAR_BUILDERS[record.model]
        if role != expected_role:
            raise NetlistError(
                f"model {record.model!r} applies to {expected_role!r} branches, "
                f"not {record.kind}", record.line)
        return builder(record)
    if record.model == "param":
        domain = record.params.get("domain", "line")
        return devices.param(_expr_param(record, "psi"), _expr_param(record, "zeta"),
                             domain=domain, role=role)
    if record.model == "lapshin":
        return devices.lapshin(
            _int(record, "m"), _int(record, "n"), _float(record, "alpha"),
            _float(record, "beta"), _float(record, "gamma"), _float(record, "delta"),
            role=role)
    raise NetlistError(f"unknown model {record.model!r}", record.line)


def build(doc: NetlistDocument, validate: bool = True,
          validation_points: int = 2048) -> Circuit:
    """Elaborate a parsed document into a graph plus per-role device sets."""
    graph_branches = [Branch(b.branch_id, KIND_NAMES[b.kind], b.tail, b.head)
                      for b in doc.branches]
    try:
        graph = CircuitGraph(nodes=list(doc.nodes), ground=doc.ground,
                             branches=graph_branches)
    except GraphError as exc:
        raise NetlistError(str(exc))

    position = {}
    for kind in ("c", "l", "m", "r"):
        for pos, idx in enumerate(graph.block_indices(kind)):
            position[graph.branches[idx].branch_id] = (kind, pos)

    # pair up coupled models first
    records = {b.branch_id: b for b in doc.branches}
    consumed: set[int] = set()
    units: dict[str, list] = {"c": [], "l": [], "m": [], "r": []}

    for record in doc.branches:
        if record.branch_id in consumed or record.model != "coupled_l":
            continue
        partner_id = _partner_ref(record, "partner", records)
        partner = records[partner_id]
        if partner.model != "coupled_l":
            raise NetlistError(
                f"partner branch {partner_id} must also use model=coupled_l", record.line)
        if record.kind != "inductor" or partner.kind != "inductor":
            raise NetlistError("coupled_l applies to inductor branches", record.line)
        carrier = record if all(k in record.params for k in ("L1", "L2", "M")) else partner
        block = devices.coupled_inductor_parametrization(
            _float(carrier, "L1"), _float(carrier, "L2"), _float(carrier, "M"))
        pos_a = position[record.branch_id][1]
        pos_b = position[partner_id][1]
        units["l"].append(((pos_a, pos_b), block))
        consumed.update((record.branch_id, partner_id))

    for record in doc.branches:
        if record.branch_id in consumed or record.model != "controlled_src":
            continue
        controller_id = _partner_ref(record, "controller", records)
        controller = records[controller_id]
        if record.kind != "resistor" or controller.kind != "resistor":
            raise NetlistError("controlled_src applies to resistor branches", record.line)
        if controller.branch_id in consumed:
            raise NetlistError(
                f"controller branch {controller_id} is already part of a coupled block",
                record.line)
        controller_char = _scalar_device(controller)
        block = devices.controlled_source_parametrization(
            _float(record, "p2"), _float(record, "q2"),
            _expr_param(record, "f2", variables=("x1", "x2")), controller_char)
        pos_ctl = position[controller_id][1]
        pos_src = position[record.branch_id][1]
        units["r"].append(((pos_ctl, pos_src), block))
        consumed.update((record.branch_id, controller_id))

    for record in doc.branches:
        if record.branch_id in consumed:
            continue
        char = _scalar_device(record)
        role, pos = position[record.branch_id]
        if char.role != role:
            raise NetlistError(
                f"model {record.model!r} produced a {char.role!r} characteristic "
                f"for a {record.kind} branch", record.line)
        units[role].append(((pos,), char))

    device_sets = {}
    for role in ("c", "l", "m", "r"):
        device_sets[role] = DeviceSet(role=role, size=graph.count(role),
                                      units=sorted(units[role], key=lambda u: u[0]))

    circuit = Circuit(name=doc.name, graph=graph, devices=device_sets, doc=doc)
    if validate:
        validate_devices(circuit, points=validation_points)
    return circuit


def _partner_ref(record: BranchRecord, key: str, records: dict) -> int:
    if key not in record.params:
        raise NetlistError(f"model {record.model!r} requires {key}=<branch>", record.line)
    try:
        ref = int(record.params[key])
    except ValueError:
        raise NetlistError(f"{key} must be a branch id", record.line)
    if ref not in records:
        raise NetlistError(f"{key} references unknown branch {ref}", record.line)
    if ref == record.branch_id:
        raise NetlistError(f"{key} must reference a different branch", record.line)
    return ref


def validate_devices(circuit: Circuit, points: int = 10_000) -> None:
    """Regularity / periodicity grid validation of every scalar characteristic."""
    for role, dset in circuit.devices.items():
        for positions, dev in dset.units:
            if isinstance(dev, Characteristic):
                devices.validate_characteristic(dev, points=points)


def load(text: str, validate: bool = True) -> Circuit:
    """Parse + elaborate a netlist string."""
    return build(parse_netlist(text), validate=validate)
