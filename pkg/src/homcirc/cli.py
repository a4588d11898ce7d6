"""Command-line front end.

Subcommands: analyze, simulate, polynomial, equilibria, validate.  Inputs
come from --netlist files or the embedded --builtin circuits; structured
reports are JSON, trajectories are CSV with an events sidecar, and every
file-producing run writes a manifest for reproducibility.

Exit codes: 0 ok, 2 parse error, 3 degenerate topology, 4 numeric failure,
5 validation failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__, analysis, builtins, homomodel, netlist, ratmat, solver, treepoly
from .devices import CharacteristicError
from .graph import GraphError, nondegeneracy_check, proper_trees, spanning_trees
from .netlist import NetlistError

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_TOPOLOGY = 3
EXIT_NUMERIC = 4
EXIT_VALIDATION = 5


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (NetlistError, CharacteristicError, json.JSONDecodeError, OSError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except homomodel.DegenerateTopologyError as exc:
        print(f"topology error: {exc}", file=sys.stderr)
        return EXIT_TOPOLOGY
    except GraphError as exc:
        print(f"topology error: {exc}", file=sys.stderr)
        return EXIT_TOPOLOGY
    except (solver.ConstraintSolveError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="homcirc",
        description="Homogeneous-variable modelling and simulation of smooth "
                    "nonlinear circuits")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--netlist", type=Path, help="netlist file")
        src.add_argument("--builtin", choices=builtins.names(),
                         help="embedded example circuit")
        p.add_argument("--out", type=Path, default=None,
                       help="output directory (reports written here)")
        p.add_argument("--seed", type=int, default=0, help="seed for randomized checks")

    p = sub.add_parser("analyze", help="graph, dimensions, trees and splitting")
    add_common(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="integrate a scenario; CSV + events JSON")
    add_common(p)
    p.add_argument("--config", type=Path, default=None, help="simulation config JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("polynomial", help="tree-enumerator polynomial")
    add_common(p)
    p.add_argument("--proper", action="store_true",
                   help="restrict to proper trees (regular-set function K)")
    p.add_argument("--dehomogenize", default=None,
                   help="comma list like r1,r3,g4: divide out ratios per branch")
    p.set_defaults(func=cmd_polynomial)

    p = sub.add_parser("equilibria", help="equilibria, pencils and eigenvalues")
    add_common(p)
    p.add_argument("--grid", type=int, default=400, help="scan resolution")
    p.set_defaults(func=cmd_equilibria)

    p = sub.add_parser("validate", help="run the invariant suite on a circuit")
    add_common(p)
    p.set_defaults(func=cmd_validate)
    return parser


# --- helpers -------------------------------------------------------------------

def _load_circuit(args):
    """Builtins are pre-validated by the test suite; user files get the
    regularity/periodicity grid check at load."""
    if args.builtin:
        return builtins.load(args.builtin, validate=False), args.builtin
    text = args.netlist.read_text(encoding="utf-8")
    return netlist.load(text, validate=True), str(args.netlist)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _json_dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_outputs(args, source: str, files: dict[str, str]) -> None:
    """Write output files plus the run manifest into --out."""
    if args.out is None:
        return
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    for name, payload in files.items():
        (out / name).write_text(payload, encoding="utf-8")
    manifest = {
        "command": args.command,
        "source": source,
        "config": str(getattr(args, "config", None)),
        "seed": args.seed,
        "version": __version__,
        "outputs": sorted(files),
    }
    (out / "manifest.json").write_text(_json_dump(manifest), encoding="utf-8")


def _exact_matrix(rows) -> list[list[str]]:
    return [[str(Fraction(x)) for x in row] for row in rows]


# --- analyze ---------------------------------------------------------------------

def cmd_analyze(args) -> int:
    circuit, source = _load_circuit(args)
    model = homomodel.assemble(circuit)
    g = circuit.graph
    trees = spanning_trees(g)
    proper = proper_trees(g)
    report = {
        "circuit": circuit.name,
        "dimensions": {"nodes": g.n, "branches": g.m,
                       "m_c": model.m_c, "m_l": model.m_l,
                       "m_m": model.m_m, "m_r": model.m_r},
        "nondegenerate": nondegeneracy_check(g, model.topo).nondegenerate,
        "ranks": {"A": g.n - 1, "B": g.m - g.n + 1},
        "spanning_trees": len(trees),
        "proper_trees": len(proper),
        "splitting": {
            "Ac_minus": _exact_matrix(model.exact["Ac_minus"]),
            "Ac_perp": _exact_matrix(model.exact["Ac_perp"]),
            "Bl_minus": _exact_matrix(model.exact["Bl_minus"]),
            "Bl_perp": _exact_matrix(model.exact["Bl_perp"]),
        },
    }
    if model.m_m == 0:
        k = treepoly.proper_K_support(g)
        report["polynomial"] = {"text": str(k), "monomials": k.flags()}
    payload = _json_dump(report)
    sys.stdout.write(payload)
    _write_outputs(args, source, {"analyze.json": payload})
    return EXIT_OK


# --- simulate ---------------------------------------------------------------------

def _scenario(args, name: str) -> dict:
    scenario = builtins.default_scenario(name) if args.builtin else {"initial": {}, "t_end": 1.0}
    if args.config is not None:
        scenario.update(json.loads(args.config.read_text(encoding="utf-8")))
    return scenario


def _config_from_scenario(scenario: dict) -> solver.SimulationConfig:
    keys = ("t_end", "initial_step", "newton_tol", "newton_max_iter", "abs_tol",
            "rel_tol", "event_tol", "impasse_tol", "max_step", "min_step")
    kwargs = {k: scenario[k] for k in keys if k in scenario}
    kwargs.setdefault("max_step", 0.02)
    return solver.SimulationConfig(**kwargs)


def trajectory_csv(traj: solver.Trajectory) -> str:
    model = traj.model
    ids = [model.graph.branches[j].branch_id
           for role in ("c", "l", "m", "r") for j in model.graph.block_indices(role)]
    cap_mem = model.role_branch_ids("c") + model.role_branch_ids("m")
    ind_mem = model.role_branch_ids("l") + model.role_branch_ids("m")
    header = (["t"] + [f"u_{b}" for b in ids] + [f"i_{b}" for b in ids]
              + [f"v_{b}" for b in ids] + [f"sigma_{b}" for b in cap_mem]
              + [f"phi_{b}" for b in ind_mem])
    out = traj.branch_outputs()
    lines = [",".join(header)]
    for k, t in enumerate(traj.times):
        row = [t, *traj.states[k], *out["i"][k], *out["v"][k],
               *out["sigma"][k], *out["phi"][k]]
        lines.append(",".join(_fmt(x) for x in row))
    return "\n".join(lines) + "\n"


def events_json(traj: solver.Trajectory) -> str:
    model = traj.model
    labels = model.state_labels()
    events = [{
        "time": e.time,
        "kind": e.kind,
        "branch": e.branch_id,
        "state": {label: float(val) for label, val in zip(labels, e.state)},
    } for e in traj.events]
    return _json_dump({"status": traj.status, "diagnostic": traj.diagnostic,
                       "events": events})


def cmd_simulate(args) -> int:
    circuit, source = _load_circuit(args)
    model = homomodel.assemble(circuit)
    name = args.builtin or circuit.name
    scenario = _scenario(args, name)
    cfg = _config_from_scenario(scenario)
    initial = {int(k): float(v) for k, v in scenario.get("initial", {}).items()}
    init = solver.consistent_init(model, model.initial_state(initial),
                                  solver.SimulationConfig(newton_tol=cfg.newton_tol))
    traj = solver.integrate(model, init, cfg)
    csv_payload = trajectory_csv(traj)
    events_payload = events_json(traj)
    print(f"{circuit.name}: status={traj.status} samples={traj.sample_count()} "
          f"events={len(traj.events)} "
          f"max_constraint_residual={traj.max_constraint_residual:.3e}")
    _write_outputs(args, source, {"trajectory.csv": csv_payload,
                                  "events.json": events_payload})
    if traj.status == "newton_failure":
        return EXIT_NUMERIC
    return EXIT_OK


# --- polynomial -------------------------------------------------------------------

def _parse_dehomogenize(spec: str) -> dict[int, str]:
    fixed = {}
    for token in spec.split(","):
        token = token.strip()
        if not token:
            continue
        kind, digits = token[0], token[1:]
        if kind not in ("r", "g") or not digits.isdigit():
            raise NetlistError(f"bad dehomogenize token {token!r}; expected e.g. r1 or g4")
        fixed[int(digits)] = kind
    return fixed


def cmd_polynomial(args) -> int:
    circuit, source = _load_circuit(args)
    g = circuit.graph
    k = treepoly.proper_K_support(g) if args.proper else treepoly.kirchhoff_polynomial(g)
    report = {"circuit": circuit.name,
              "restriction": k.restriction,
              "text": str(k),
              "monomials": k.flags()}
    if args.dehomogenize:
        poly = treepoly.dehomogenize(k, _parse_dehomogenize(args.dehomogenize))
        report["dehomogenized"] = str(poly)
    payload = _json_dump(report)
    sys.stdout.write(payload)
    _write_outputs(args, source, {"polynomial.json": payload})
    return EXIT_OK


# --- equilibria --------------------------------------------------------------------

def cmd_equilibria(args) -> int:
    circuit, source = _load_circuit(args)
    model = homomodel.assemble(circuit)
    rng = np.random.default_rng(args.seed)
    seeds = [np.zeros(model.m)]
    seeds += [rng.uniform(-1.5, 1.5, model.m) for _ in range(6)]
    if model.m_m == 1:
        bid = model.role_branch_ids("m")[0]
        seeds += [model.initial_state({bid: u}) for u in np.linspace(-1.5, 1.5, 7)]
    equilibria = analysis.find_equilibria(model, seeds)
    labels = model.state_labels()
    report = {"circuit": circuit.name, "equilibria": []}
    for eq in equilibria:
        entry = {
            "state": {label: float(v) for label, v in zip(labels, eq.state)},
            "nullspace_dim": eq.nullspace_dim,
        }
        if model.m <= analysis.PENCIL_ORDER_CAP:
            pencil = analysis.linearization_pencil(model, eq.state)
            entry["eigenvalues"] = [
                {"value": None if value is None else [value.real, value.imag],
                 "class": kind}
                for value, kind in pencil.classified()]
        report["equilibria"].append(entry)
    if model.m_m == 1 and model.m <= analysis.PENCIL_ORDER_CAP:
        loci = analysis.memristor_degeneracy_loci(model, -2.0, 2.0, grid=args.grid)
        report["degeneracy_loci"] = loci
    payload = _json_dump(report)
    sys.stdout.write(payload)
    _write_outputs(args, source, {"equilibria.json": payload})
    return EXIT_OK


# --- validate ----------------------------------------------------------------------

def cmd_validate(args) -> int:
    circuit, source = _load_circuit(args)
    checks: list[tuple[str, bool, str]] = []

    def check(name: str, fn):
        try:
            fn()
            checks.append((name, True, ""))
        except AssertionError as exc:
            checks.append((name, False, str(exc)))
        except Exception as exc:                      # surface, never crash
            checks.append((name, False, f"{type(exc).__name__}: {exc}"))

    g = circuit.graph
    from .graph import topology_matrices
    topo = topology_matrices(g)

    def chk_orthogonality():
        if topo.B:
            assert ratmat.is_zero(ratmat.matmul(topo.A, ratmat.transpose(topo.B)))

    def chk_ranks():
        assert ratmat.rank(topo.A) == g.n - 1
        assert ratmat.rank(topo.B) == g.m - g.n + 1

    def chk_tree_count():
        trees = spanning_trees(g)
        count = ratmat.det(ratmat.matmul(topo.A, ratmat.transpose(topo.A)))
        assert Fraction(len(trees)) == count, f"{len(trees)} != {count}"

    def chk_proper_subset():
        trees = set(spanning_trees(g))
        proper = proper_trees(g)
        assert set(proper) <= trees
        cap_set = set(g.block_indices("c"))
        ind_set = set(g.block_indices("l"))
        filtered = sorted((T for T in trees if cap_set <= T and not (T & ind_set)),
                          key=sorted)
        assert filtered == proper
        report = nondegeneracy_check(g, topo)
        assert report.nondegenerate == bool(proper)

    def chk_weighted_matrix_tree():
        rng = np.random.default_rng(args.seed)
        k = treepoly.kirchhoff_polynomial(g)
        ids = g.branch_ids()
        A = ratmat.to_float(topo.A) if topo.A else np.zeros((0, g.m))
        B = ratmat.to_float(topo.B) if topo.B else np.zeros((0, g.m))
        ratio = None
        for _ in range(20):
            p = rng.uniform(0.5, 2.0, g.m)
            q = rng.uniform(0.5, 2.0, g.m)
            det = float(np.linalg.det(np.vstack([A * p[None, :], B * q[None, :]])))
            value = treepoly.evaluate_K(k, {b: (p[j], q[j]) for j, b in enumerate(ids)})
            current = det / value
            if ratio is None:
                ratio = current
            assert abs(current - ratio) <= 1e-9 * abs(ratio), f"{current} vs {ratio}"

    def chk_devices():
        netlist.validate_devices(circuit, points=10_000)

    def chk_splitting():
        model = homomodel.assemble(circuit)
        rng = np.random.default_rng(args.seed + 1)
        if model.m_m:
            return
        for _ in range(10):
            u = rng.uniform(-1.0, 1.0, model.m)
            uc_dot = rng.uniform(-1, 1, model.m_c)
            ul_dot = rng.uniform(-1, 1, model.m_l)
            u_c, u_l = model.part(u, "c"), model.part(u, "l")
            r_kcl = (model.A_blk["c"] @ model.devices["c"].dpsi(u_c) @ uc_dot
                     + model.kcl_nondiff(u))
            r_kvl = (model.B_blk["l"] @ model.devices["l"].dzeta(u_l) @ ul_dot
                     + model.kvl_nondiff(u))
            A0 = np.vstack([model.Ac_minus, model.Ac_perp])
            B0 = np.vstack([model.Bl_perp, model.Bl_minus])
            rc_num, rl_num = model.rhs_numerators(u)
            alg = model.constraint_residual(u)
            rows_a = model.Ac_perp.shape[0]
            diff_c = model.devices["c"].dpsi(u_c) @ uc_dot - rc_num
            diff_l = model.devices["l"].dzeta(u_l) @ ul_dot - rl_num
            assert np.allclose(A0 @ r_kcl, np.concatenate([diff_c, alg[:rows_a]]),
                               atol=1e-12)
            assert np.allclose(B0 @ r_kvl, np.concatenate([alg[rows_a:], diff_l]),
                               atol=1e-12)

    def chk_regression_run():
        model = homomodel.assemble(circuit)
        name = args.builtin or circuit.name
        scenario = builtins.default_scenario(name)
        initial = {int(k): float(v) for k, v in scenario.get("initial", {}).items()}
        cfg = solver.SimulationConfig(t_end=min(float(scenario.get("t_end", 1.0)), 1.0),
                                      max_step=0.02)
        init = solver.consistent_init(model, model.initial_state(initial))
        traj = solver.integrate(model, init, cfg)
        assert traj.status in ("completed", "impasse"), traj.status
        assert traj.max_constraint_residual <= 1e-9, traj.max_constraint_residual
        res_i, res_v = traj.kirchhoff_residuals()
        assert res_i <= 1e-8 and res_v <= 1e-8, (res_i, res_v)

    check("cut/cycle orthogonality (exact)", chk_orthogonality)
    check("reduced matrix ranks", chk_ranks)
    check("matrix-tree count", chk_tree_count)
    check("proper trees vs nondegeneracy", chk_proper_subset)
    check("weighted matrix-tree constant ratio", chk_weighted_matrix_tree)
    check("device regularity grids (1e4 points)", chk_devices)
    check("splitting identity recombination", chk_splitting)
    check("regression integration residuals", chk_regression_run)

    failed = False
    lines = []
    for name, ok, detail in checks:
        stamp = "PASS" if ok else "FAIL"
        line = f"{stamp} {name}" + (f": {detail}" if detail else "")
        print(line)
        lines.append(line)
        failed = failed or not ok
    _write_outputs(args, source, {"validate.txt": "\n".join(lines) + "\n"})
    return EXIT_VALIDATION if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
