"""Command-line front end (``mwkb``).

Subcommands::

    run            full scenario: grids, sheet tables, checks and summary
    flow           one trajectory with its Jacobian and action
    sheets         boundary-problem sheets at one (t, x)
    propagate-u    propagator symbol grids
    propagate-rho  density symbol grids (``--hbar-sweep`` prints an error table)
    star           star product of two grid files
    oracle         split-step reference symbols
    check          only the scenario's checks

``--scenario`` accepts a path or the name of a bundled scenario.  Exit codes:
0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checks import RunContext, hbar_order_table, number, run_check
from .classical_flow import flow
from .config import thread_count
from .errors import NumericalError, ScenarioError
from .quantum_oracle import SplitStepConfig, density_symbols
from .scenario import Scenario, bundled_scenarios, load_scenario
from .sps_dynamics import ProblemKind
from .symbol_grid import STATUS_CODES, SymbolGrid, grid_points
from .symbol_io import dumps_json, read_grid, write_grid, write_grid_csv, write_json
from .weyl_calculus import WeylGrid, star_product
from .wkb_evolution import evaluate_points

EXIT_OK, EXIT_SCHEMA, EXIT_NUMERICAL = 0, 2, 3
_STATUS_NAMES = {v: k for k, v in STATUS_CODES.items()}


def _resolve_scenario(name: str) -> Scenario:
    path = Path(name)
    if not path.exists():
        bundled = bundled_scenarios()
        if name in bundled:
            path = bundled[name]
    return load_scenario(path)


def _parse_floats(text: str, what: str) -> list:
    try:
        return [number(v) for v in text.split(",") if v.strip()]
    except (ValueError, ScenarioError) as exc:
        raise ScenarioError(f"cannot parse {what} {text!r}: {exc}") from exc


def _apply_overrides(sc: Scenario, args) -> Scenario:
    if getattr(args, "hbar", None):
        sc.hbars = _parse_floats(args.hbar, "--hbar")
    if getattr(args, "t", None):
        sc.times = _parse_floats(args.t, "--t")
    return sc


def _tag(i: int, j: int | None = None) -> str:
    return f"t{i:02d}" if j is None else f"t{i:02d}_h{j:02d}"


# ---------------------------------------------------------------------------
# products
# ---------------------------------------------------------------------------

def _sheet_table(ev, t: float) -> dict:
    points = []
    for x, st, sheets, vals, diag in zip(ev.points, ev.status, ev.sheets, ev.values, ev.diagnostics):
        rows = []
        for k, sh in enumerate(sheets):
            row = sh.as_dict()
            if k < len(vals):
                row["phase"] = vals[k].phase
                row["amplitude"] = vals[k].amplitude
            rows.append(row)
        points.append({"x": x, "status": _STATUS_NAMES[int(st)], "sheets": rows, "diagnostics": diag})
    return {"t": t, "points": points, "pc_defect": ev.pc_defect}


def _field_grids(sc: Scenario, kind: ProblemKind, out: Path, ctx: RunContext, write_sheets: bool,
                 write_csv: bool) -> list:
    """Evaluate every time once and write one grid per ``(t, hbar)``."""
    X = grid_points(sc.axes)
    shape = tuple(len(a) for a in sc.axes)
    files = []
    cos_mode = sc.cos_mode and kind is ProblemKind.HEISENBERG
    for i, t in enumerate(sc.times):
        ev = evaluate_points(sc.H, kind, sc.phase0, t, X, threads=ctx.threads,
                             resolution=sc.manifold_resolution)
        for sheets in ev.sheets:
            ctx.forward_residuals.extend(s.residual for s in sheets)
        if write_sheets:
            table = _sheet_table(ev, t)
            table.update(scenario_hash=sc.hash, hbar=sc.hbars)
            files.append(write_json(out / "sheets" / f"{_tag(i)}.json", table))
        for j, hbar in enumerate(sc.hbars):
            meta = {"scenario_hash": sc.hash, "scenario": sc.name, "pc_defect": ev.pc_defect,
                    "cos_mode": cos_mode}
            g = SymbolGrid(sc.axes, ev.field(hbar, cos_mode).reshape(shape), t, hbar, kind.value,
                           ev.status.reshape(shape), None, meta)
            files.append(write_grid(out / "grids" / f"{kind.value}_{_tag(i, j)}.mwkb", g, sc.hash))
            if write_csv:
                files.append(write_grid_csv(out / "grids" / f"{kind.value}_{_tag(i, j)}.csv", g, sc.hash))
    return files


def _oracle_grids(sc: Scenario, out: Path) -> list:
    if sc.kind is not ProblemKind.HEISENBERG:
        raise ScenarioError("oracle grids are produced for Heisenberg scenarios", "outputs.products")
    settings = sc.oracle_settings()
    files = []
    for j, hbar in enumerate(sc.hbars):
        lo, hi = settings["q_range"]
        W = WeylGrid(lo, hi, int(settings["n_points"]), hbar, settings.get("n_p"))
        cfg = SplitStepConfig.from_hamiltonian(sc.H, W.kernel_q, hbar, settings["dt"])
        rho0 = W.symbol_grid(W.sample(lambda X: sc.phase0.amplitude(X) * np.exp(1j * sc.phase0.phase(X) / hbar)))
        method = "strang" if sc.H.time_dependent else settings["method"]
        for i, g in enumerate(density_symbols(rho0, cfg, sc.times, method)):
            g.meta.clear()
            g.meta.update(scenario_hash=sc.hash, scenario=sc.name, method=method)
            files.append(write_grid(out / "oracle" / f"rho_{_tag(i, j)}.mwkb", g, sc.hash))
    return files


def _ordered_checks(sc: Scenario) -> list:
    # bc_contract reads the residuals gathered by everything before it
    checks = list(sc.checks)
    return [c for c in checks if c["name"] != "bc_contract"] + [c for c in checks if c["name"] == "bc_contract"]


def _run_checks(sc: Scenario, out: Path | None, ctx: RunContext) -> list:
    results = []
    for spec in _ordered_checks(sc):
        params = {k: v for k, v in spec.items() if k != "name"}
        res = run_check(spec["name"], sc, params, ctx)
        results.append(res)
        if out is not None:
            report = res.as_dict()
            report.update(scenario_hash=sc.hash, hbar=sc.hbars)
            write_json(out / "checks" / f"{res.name}.json", report)
    return results


def _summary(sc: Scenario, results: list, ctx: RunContext, files: list, out: Path) -> dict:
    criteria: dict = {}
    for r in results:
        if r.criterion is not None:
            key = str(r.criterion)
            criteria[key] = "pass" if r.passed and criteria.get(key, "pass") == "pass" else "fail"
    return {
        "scenario": sc.name,
        "scenario_hash": sc.hash,
        "hbar": sc.hbars,
        "times": sc.times,
        "kind": sc.kind.value,
        "hamiltonian": sc.H.label,
        "version": __version__,
        "checks": {r.name: "pass" if r.passed else "fail" for r in results},
        "criteria": criteria,
        "max_forward_residual": ctx.max_forward_residual,
        "emitted_sheets": len(ctx.forward_residuals),
        "files": sorted(str(Path(f).relative_to(out)) for f in files),
        "passed": all(r.passed for r in results),
    }


def run_scenario(sc: Scenario, out: Path, threads: int = 1, checks: bool = True, products: bool = True) -> dict:
    """Produce the artifact directory of one scenario and return its summary."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(threads=threads)
    files = [write_json(out / "scenario.json", sc.doc)]
    if products:
        if "grids" in sc.products or "sheets" in sc.products:
            files += _field_grids(sc, sc.kind, out, ctx, "sheets" in sc.products, "csv" in sc.products)
        if "oracle" in sc.products:
            files += _oracle_grids(sc, out)
    results = _run_checks(sc, out, ctx) if checks else []
    files += [out / "checks" / f"{r.name}.json" for r in results]
    summary = _summary(sc, results, ctx, files, out)
    write_json(out / "summary.json", summary)
    return summary


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_run(args) -> int:
    sc = _apply_overrides(_resolve_scenario(args.scenario), args)
    summary = run_scenario(sc, Path(args.out), thread_count(args.threads))
    print(dumps_json({"scenario": summary["scenario"], "criteria": summary["criteria"],
                      "checks": summary["checks"], "passed": summary["passed"]}), end="")
    return EXIT_OK


def _cmd_check(args) -> int:
    sc = _apply_overrides(_resolve_scenario(args.scenario), args)
    summary = run_scenario(sc, Path(args.out), thread_count(args.threads), products=False)
    print(dumps_json({"criteria": summary["criteria"], "checks": summary["checks"]}), end="")
    return EXIT_OK


def _cmd_flow(args) -> int:
    sc = _resolve_scenario(args.scenario)
    x = _parse_floats(args.x, "--x")
    t = number(args.t)
    if len(x) != sc.H.dim:
        raise ScenarioError(f"--x needs {sc.H.dim} components")
    traj = flow(sc.H, np.array(x), t)
    _emit(args, {"x0": traj.start, "x_t": traj.end, "t": t, "jacobian": traj.jacobi,
                 "action": traj.action, "ham_integral": traj.ham_integral,
                 "energy_drift": traj.energy_drift(sc.H), "symplecticity_defect": traj.symplecticity_defect()})
    return EXIT_OK


def _cmd_sheets(args) -> int:
    sc = _resolve_scenario(args.scenario)
    x = _parse_floats(args.x, "--x")
    if len(x) != sc.H.dim:
        raise ScenarioError(f"--x needs {sc.H.dim} components")
    t = number(args.t)
    ev = evaluate_points(sc.H, sc.kind, sc.phase0, t, np.array([x]), threads=thread_count(args.threads))
    table = _sheet_table(ev, t)["points"][0]
    table.update(t=t, kind=sc.kind.value, scenario_hash=sc.hash, hbar=sc.hbars)
    _emit(args, table)
    return EXIT_OK


def _cmd_propagate(args, kind: ProblemKind) -> int:
    sc = _apply_overrides(_resolve_scenario(args.scenario), args)
    out = Path(args.out)
    ctx = RunContext(threads=thread_count(args.threads))
    if kind is ProblemKind.HEISENBERG and getattr(args, "hbar_sweep", False):
        hbars = sc.hbars if args.hbar else [0.5, 0.25, 0.125]
        t = sc.times[0]
        rows = hbar_order_table(sc.H, sc.phase0, t, hbars, sc.oracle_settings(), sc.doc["grid"]["domain"],
                                threads=ctx.threads)
        table = {"scenario": sc.name, "scenario_hash": sc.hash, "t": t, "rows": rows}
        write_json(out / "hbar_sweep.json", table)
        print(dumps_json(table), end="")
        return EXIT_OK
    files = _field_grids(sc, kind, out, ctx, True, "csv" in sc.products)
    print(dumps_json({"files": sorted(str(Path(f).relative_to(out)) for f in files)}), end="")
    return EXIT_OK


def _cmd_star(args) -> int:
    f, g = read_grid(args.lhs), read_grid(args.rhs)
    h = star_product(f, g)
    h.meta.pop("weyl_grid", None)
    write_grid(args.out, h, f.meta.get("scenario_hash", ""))
    print(dumps_json({"out": args.out, "shape": list(h.shape), "hbar": h.hbar}), end="")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    sc = _apply_overrides(_resolve_scenario(args.scenario), args)
    files = _oracle_grids(sc, Path(args.out))
    print(dumps_json({"files": sorted(str(Path(f).relative_to(args.out)) for f in files)}), end="")
    return EXIT_OK


def _emit(args, obj) -> None:
    text = dumps_json(obj)
    if getattr(args, "out", None):
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mwkb", description="Semiclassical Weyl-symbol propagation.")
    parser.add_argument("--version", action="version", version=f"mwkb {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=True, scenario=True):
        if scenario:
            p.add_argument("--scenario", required=True, help="scenario file or bundled scenario name")
        p.add_argument("--out", required=out_required, help="output directory or file")
        p.add_argument("--threads", type=int, default=None, help="worker count (default: MWKB_THREADS or 1)")

    p = sub.add_parser("run", help="run a full scenario")
    common(p)
    p.add_argument("--hbar", help="override hbar values, comma separated")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("check", help="run the scenario's checks only")
    common(p)
    p.add_argument("--hbar", help="override hbar values, comma separated")
    p.set_defaults(func=_cmd_check)

    p = sub.add_parser("flow", help="integrate one trajectory")
    common(p, out_required=False)
    p.add_argument("--x", required=True, help="initial point, comma separated (q.., p..)")
    p.add_argument("--t", required=True, help="final time")
    p.set_defaults(func=_cmd_flow)

    p = sub.add_parser("sheets", help="boundary-problem sheets at one point")
    common(p, out_required=False)
    p.add_argument("--x", required=True, help="target point, comma separated")
    p.add_argument("--t", required=True, help="time")
    p.set_defaults(func=_cmd_sheets)

    for name, kind in (("propagate-u", ProblemKind.SCHRODINGER), ("propagate-rho", ProblemKind.HEISENBERG)):
        p = sub.add_parser(name, help=f"{kind.value} symbol grids")
        common(p)
        p.add_argument("--hbar", help="override hbar values, comma separated")
        p.add_argument("--t", help="override times, comma separated")
        if kind is ProblemKind.HEISENBERG:
            p.add_argument("--hbar-sweep", action="store_true", help="error-versus-hbar table against the oracle")
        p.set_defaults(func=lambda a, k=kind: _cmd_propagate(a, k))

    p = sub.add_parser("star", help="star product of two grid files")
    p.add_argument("--lhs", required=True)
    p.add_argument("--rhs", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_star)

    p = sub.add_parser("oracle", help="split-step reference density symbols")
    common(p)
    p.add_argument("--hbar", help="override hbar values, comma separated")
    p.add_argument("--t", help="override times, comma separated")
    p.set_defaults(func=_cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"mwkb: error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except NumericalError as exc:
        print(f"mwkb: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
