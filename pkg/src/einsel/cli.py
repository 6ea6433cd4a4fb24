"""Command-line front end: ``einsel {validate,run,analyze,fsm}``."""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import einselect, qcore, vmx
from .errors import EinselError, NumericError, ValidationError
from .observer import format_trace, parse_trace, recheck_dominance, run_trajectory
from .povm import recognized_support
from .scenario import Scenario, ScenarioError, load_scenario

EXIT_CODES = {"parse": 3, "validation": 4, "numeric": 5, "capacity": 6, "error": 1}


def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats become null."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def dumps(report: dict) -> str:
    return json.dumps(_clean(report), indent=2, ensure_ascii=False) + "\n"


def run_report(sc: Scenario) -> tuple[dict, str, str]:
    """Simulate a scenario; returns (report, trace text, graph text)."""
    psi0 = sc.state()
    povm = sc.povm()
    rule = sc.rule
    trace = run_trajectory(psi0, sc.hamiltonian, sc.schedule, povm, rule, sc.seed, scenario_id=sc.id)
    fsm = vmx.infer_fsm(trace, sc.gap_policy)
    report: dict = {"scenario": sc.echo()}
    if sc.analysis is not None:
        a = sc.analysis
        report["einselect"] = einselect.check_conditions(sc.hamiltonian, a.system, a.fragment, a.eta).to_dict()
    delta = sc.analysis.delta if sc.analysis is not None else 1e-6
    report["recognized_support"] = recognized_support(povm, sc.entity_count, delta).to_dict()
    report["trace"] = {
        "records": len(trace),
        "none_count": trace.none_count,
        "dominance_violations": len(recheck_dominance(trace)),
    }
    report["fsm"] = fsm.to_dict()
    if rule.mode == "witness":
        pred = vmx.predict_transitions(psi0, sc.hamiltonian, sc.schedule, povm, rule, sc.gap_policy)
        report["prediction"] = pred.to_dict()
        if set(pred.states) == set(fsm.states):
            report["diff"] = vmx.fsm_diff(fsm, pred).to_dict()
        else:
            # a state predicted with tiny probability may never be seen
            report["diff"] = {"error": f"label mismatch: empirical {list(fsm.states)} vs predicted {list(pred.states)}"}
    else:
        report["prediction"] = None
        report["diff"] = None
    return report, format_trace(trace), vmx.export_graph(fsm)


def analyze_report(sc: Scenario) -> dict:
    if sc.analysis is None:
        raise ValidationError("analysis: scenario has no [analysis] section")
    a = sc.analysis
    h = sc.hamiltonian
    report: dict = {"scenario": sc.echo()}
    report["conditions"] = einselect.check_conditions(h, a.system, a.fragment, a.eta).to_dict()
    report["halo"] = [e.to_dict() for e in einselect.halo_scan(h, a.system, a.fragment, a.eta, swaps=a.swaps)]
    report["growth"] = [sorted(s) for s in einselect.halo_growth(h, a.system, a.fragment, a.eta)]
    h_int = h.restrict(set(a.system) | set(a.fragment)).select(
        lambda sup: bool(sup & set(a.system)) and bool(sup & set(a.fragment))
    )
    try:
        pb = einselect.pointer_basis(h_int, a.system, a.fragment)
        report["pointer_basis"] = pb.to_dict()
    except NumericError as exc:
        report["pointer_basis"] = {"error": str(exc)}
    if a.system2:
        report["exclusion"] = einselect.exclusion_check(h, a.system, a.system2, a.eta).to_dict()
    if a.f1:
        psi = qcore.evolve(sc.state(), h.to_dense(), a.time)
        report["separability"] = {"time": a.time, **einselect.fragment_separability(psi, a.f1, a.f2, a.tol).to_dict()}
    report["recognized_support"] = recognized_support(sc.povm(), sc.entity_count, a.delta).to_dict()
    return report


def _write(out_dir: Path, name: str, text: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    path.write_text(text, encoding="utf-8", newline="\n")
    return path


def _scenario_arg(args) -> Scenario:
    path = args.scenario_opt or args.scenario
    if not path:
        raise ValidationError("no scenario given (positional path or --scenario)")
    if not Path(path).is_file():
        raise ValidationError(f"scenario file not found: {path}")
    sc = load_scenario(path)
    return sc.with_overrides(seed=args.seed, epsilon=args.epsilon, eta=args.eta)


def cmd_validate(args) -> int:
    sc = _scenario_arg(args)
    print(f"ok: {sc.id} ({sc.entity_count} entities, {len(sc.hamiltonian)} terms, {len(sc.povm_blocks)} effects)")
    return 0


def cmd_run(args) -> int:
    sc = _scenario_arg(args)
    start = time.perf_counter()
    report, trace_text, graph_text = run_report(sc)
    elapsed = time.perf_counter() - start
    out = Path(args.out_dir)
    _write(out, f"{sc.id}.trace.csv", trace_text)
    _write(out, f"{sc.id}.graph.txt", graph_text)
    _write(out, f"{sc.id}.report.json", dumps(report))
    # timings live outside the report so that the report stays reproducible
    _write(out, f"{sc.id}.timings.json", dumps({"run_seconds": elapsed}))
    print(f"wrote {sc.id}.trace.csv, {sc.id}.graph.txt, {sc.id}.report.json to {out}")
    return 0


def cmd_analyze(args) -> int:
    sc = _scenario_arg(args)
    text = dumps(analyze_report(sc))
    if args.out_dir:
        _write(Path(args.out_dir), f"{sc.id}.analysis.json", text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_fsm(args) -> int:
    path = Path(args.trace)
    if not path.is_file():
        raise ValidationError(f"trace file not found: {path}")
    trace = parse_trace(path.read_text(encoding="utf-8"))
    fsm = vmx.infer_fsm(trace, args.gap_policy, args.alpha)
    graph = vmx.export_graph(fsm)
    if args.out_dir:
        out = Path(args.out_dir)
        _write(out, f"{trace.scenario_id}.graph.txt", graph)
        _write(out, f"{trace.scenario_id}.fsm.json", dumps(fsm.to_dict()))
    else:
        sys.stdout.write(graph)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="einsel", description="Einselection and observer-record toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_cmd(name: str, help_text: str, *, out_required: bool = False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("scenario", nargs="?", help="scenario file")
        p.add_argument("--scenario", dest="scenario_opt", metavar="PATH", help="scenario file (alternative to positional)")
        p.add_argument("--out-dir", required=out_required, help="output directory")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--epsilon", type=float, help="override the dominance threshold")
        p.add_argument("--eta", type=float, help="override the analysis eta")
        return p

    scenario_cmd("validate", "load and validate a scenario").set_defaults(func=cmd_validate)
    scenario_cmd("run", "simulate and extract the record machine", out_required=True).set_defaults(func=cmd_run)
    scenario_cmd("analyze", "einselection analysis of the [analysis] section").set_defaults(func=cmd_analyze)

    p = sub.add_parser("fsm", help="infer a machine from an existing trace file")
    p.add_argument("trace", help="trace CSV written by 'run'")
    p.add_argument("--gap-policy", choices=vmx.GAP_POLICIES, default="break")
    p.add_argument("--alpha", type=float, default=0.0, help="Laplace smoothing")
    p.add_argument("--out-dir", help="write graph and fsm json here instead of stdout")
    p.set_defaults(func=cmd_fsm)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        for err in exc.errors:
            print(f"error[{err.category}]: {err}", file=sys.stderr)
        return EXIT_CODES[exc.category]
    except EinselError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return EXIT_CODES.get(exc.category, 1)
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
