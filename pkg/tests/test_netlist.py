import pytest

from homcirc import builtins, netlist
from homcirc.devices import ControlledSource, CoupledInductors
from homcirc.netlist import NetlistError, parse_netlist


class TestParse:
    def test_vdp_parallel(self):
        doc = parse_netlist(builtins.netlist_text("vdp_lapshin"))
        assert doc.name == "vdp_lapshin"
        assert sorted(doc.nodes) == [0, 1]
        assert len(doc.branches) == 3
        kinds = [b.kind for b in doc.branches]
        assert kinds == ["capacitor", "inductor", "resistor"]

    def test_mlc_nine_branches(self):
        doc = parse_netlist(builtins.netlist_text("mlc_coupled"))
        assert len(doc.branches) == 9
        assert sorted(doc.nodes) == [0, 1, 2, 3, 4]

    def test_undeclared_node(self):
        text = """\
circuit bad
ground 0
node 0 1
branch 1 kind=resistor from=1 to=7 model=linear_r p=1 q=1
"""
        with pytest.raises(NetlistError, match="undeclared node 7"):
            parse_netlist(text)

    def test_duplicate_branch_id(self):
        text = """\
circuit bad
ground 0
node 0 1
branch 1 kind=resistor from=1 to=0 model=linear_r p=1 q=1
branch 1 kind=resistor from=0 to=1 model=linear_r p=1 q=1
"""
        with pytest.raises(NetlistError, match="line 5: duplicate branch id 1"):
            parse_netlist(text)

    def test_coincident_endpoints(self):
        text = "circuit x\nground 0\nnode 0 1\nbranch 1 kind=resistor from=1 to=1 model=linear_r p=1 q=1\n"
        with pytest.raises(NetlistError, match="coincide"):
            parse_netlist(text)

    def test_missing_ground(self):
        with pytest.raises(NetlistError, match="missing ground"):
            parse_netlist("circuit x\nnode 0 1\n")

    def test_malformed_token_reports_line(self):
        text = "circuit x\nground 0\nnode 0 1\nbranch 1 resistor from=1 to=0\n"
        with pytest.raises(NetlistError, match="line 4"):
            parse_netlist(text)

    def test_comments_and_blank_lines(self):
        text = """
# full-line comment
circuit c
ground 0
node 0 1   # trailing comment
branch 1 kind=resistor from=1 to=0 model=linear_r p=1 q=1
"""
        doc = parse_netlist(text)
        assert doc.name == "c" and len(doc.branches) == 1


class TestElaboration:
    def test_missing_model_parameter(self):
        text = "circuit x\nground 0\nnode 0 1\nbranch 1 kind=capacitor from=1 to=0 model=linear_c\n"
        with pytest.raises(NetlistError, match="requires parameter 'C'"):
            netlist.load(text)

    def test_unknown_model(self):
        text = "circuit x\nground 0\nnode 0 1\nbranch 1 kind=resistor from=1 to=0 model=mystery\n"
        with pytest.raises(NetlistError, match="unknown model"):
            netlist.load(text)

    def test_kind_model_mismatch(self):
        text = "circuit x\nground 0\nnode 0 1\nbranch 1 kind=capacitor from=1 to=0 model=linear_r p=1 q=1\n"
        with pytest.raises(NetlistError, match="applies to 'r' branches"):
            netlist.load(text)

    def test_expression_error_reports_line(self):
        text = 'circuit x\nground 0\nnode 0 1\nbranch 1 kind=resistor from=1 to=0 model=vcontrolled g="u +"\n'
        with pytest.raises(NetlistError, match="line 4"):
            netlist.load(text)

    def test_coupled_inductors(self):
        text = """\
circuit pair
ground 0
node 0 1 2
branch 1 kind=inductor from=1 to=0 model=coupled_l L1=1 L2=1 M=0.5 partner=2
branch 2 kind=inductor from=2 to=0 model=coupled_l partner=1
branch 3 kind=resistor from=1 to=2 model=linear_r p=1 q=1
branch 4 kind=capacitor from=1 to=0 model=linear_c C=1
"""
        circuit = netlist.load(text)
        blocks = [dev for _, dev in circuit.devices["l"].units]
        assert len(blocks) == 1 and isinstance(blocks[0], CoupledInductors)

    def test_controlled_source(self):
        text = """\
circuit ctl
ground 0
node 0 1 2
branch 1 kind=resistor from=1 to=0 model=linear_r p=1 q=0
branch 2 kind=resistor from=2 to=0 model=controlled_src p2=0 q2=1 f2="x1" controller=1
branch 3 kind=capacitor from=1 to=0 model=linear_c C=1
branch 4 kind=resistor from=1 to=2 model=linear_r p=1 q=1
"""
        circuit = netlist.load(text)
        blocks = [dev for _, dev in circuit.devices["r"].units
                  if isinstance(dev, ControlledSource)]
        assert len(blocks) == 1
        assert blocks[0].p2 == 0.0 and blocks[0].q2 == 1.0

    def test_partner_must_exist(self):
        text = """\
circuit pair
ground 0
node 0 1
branch 1 kind=inductor from=1 to=0 model=coupled_l L1=1 L2=1 M=0.2 partner=9
"""
        with pytest.raises(NetlistError, match="unknown branch 9"):
            netlist.load(text)

    def test_builtins_all_load_and_validate(self):
        for name in builtins.names():
            circuit = builtins.load(name, validate=True)
            assert circuit.graph.m == len(circuit.doc.branches)


class TestFuzzing:
    def test_mutated_netlists_fail_with_diagnostics_not_crashes(self):
        import random

        rng = random.Random(123)
        base = builtins.netlist_text("mlc_coupled")
        mutations = ["", "=", "kind=", "branch", "node x", "ground", "#",
                     'psi="(', "from=", "model=linear_r p=", "^", '"']
        for _ in range(200):
            lines = base.splitlines()
            k = rng.randrange(len(lines))
            op = rng.random()
            if op < 0.4:
                lines[k] = rng.choice(mutations)
            elif op < 0.7:
                tokens = lines[k].split()
                if tokens:
                    tokens[rng.randrange(len(tokens))] = rng.choice(mutations)
                lines[k] = " ".join(tokens)
            else:
                del lines[k]
            text = "\n".join(lines)
            try:
                netlist.load(text, validate=False)
            except NetlistError:
                pass   # diagnostic, as required
            # anything else escaping would fail the test with a crash
