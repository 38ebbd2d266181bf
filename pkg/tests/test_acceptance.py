"""End-to-end acceptance checks, one test per criterion.

The bundled scenario set is run twice into temporary directories; several
criteria read the artifacts of the first run, and the determinism criterion
compares both runs byte for byte.
"""

import json

import numpy as np
import pytest

from mwkb.checks import RunContext, check_caustic_time, husimi_sign_test, star_suite
from mwkb.cli import main
from mwkb.hamiltonian_model import harmonic_oscillator, zero_phase_data
from mwkb.scenario import bundled_scenarios, load_scenario
from mwkb.symbol_grid import grid_points
from mwkb.wkb_evolution import caustic_times, quadratic_exact_u, u_semiclassical

pytestmark = pytest.mark.slow


def _run_all(root):
    out = {}
    for name, path in bundled_scenarios().items():
        assert main(["run", "--scenario", str(path), "--out", str(root / name)]) == 0
        out[name] = json.loads((root / name / "summary.json").read_text())
    return out


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    a = tmp_path_factory.mktemp("run_a")
    b = tmp_path_factory.mktemp("run_b")
    return a, _run_all(a), b, _run_all(b)


def _check(runs, scenario, name):
    root = runs[0]
    return json.loads((root / scenario / "checks" / f"{name}.json").read_text())


def test_criterion_1_quadratic_rho_exactness(runs, acceptance_report):
    worst, covered = 0.0, {}
    for scenario in ("ho_quadratic_exactness", "driven_quadratic"):
        rows = _check(runs, scenario, "quadratic_exact_rho")["metrics"]["rows"]
        covered[scenario] = sorted({(r["t"], r["hbar"]) for r in rows})
        for r in rows:
            assert r["points"] > 100
            worst = max(worst, r["sc_vs_exact"], r["sc_vs_oracle"], r["exact_vs_oracle"])
    want = sorted((t, h) for t in (0.5, 1.0, 2.0) for h in (1.0, 0.5))
    ok = all(v == want for v in covered.values()) and worst < 1e-6
    acceptance_report(1, ok, f"worst pointwise deviation {worst:.2e} (tol 1e-06) over HO and driven cases")


def test_criterion_2_quadratic_u_exactness(acceptance_report):
    H = harmonic_oscillator()
    axes = (np.linspace(-3, 3, 25),) * 2
    worst, amp_dev = 0.0, None
    for t in (0.5, np.pi / 2, 2.5):
        g = u_semiclassical(H, None, t, axes, 1.0)
        ex = quadratic_exact_u(H, 0.0, t, axes, 1.0)
        mask = g.mask("nonfocal")
        assert mask.all()
        worst = max(worst, float(np.max(np.abs(g.values - ex.values))))
        if t == np.pi / 2:
            amp_dev = max(abs(v.amplitude - np.sqrt(2)) for vals in g.sheets for v in vals)
    X = np.random.default_rng(3).uniform(-1, 1, (20, 2))
    sign = husimi_sign_test(H, [np.pi - 0.6, np.pi + 0.6], X, (np.linspace(-6, 6, 241),) * 2)
    aligned = all(r["min_alignment"] > 0 for r in sign)
    flipped = sign[0]["maslov"] == [0] and sign[1]["maslov"] == [2]
    # past the half period the closed form carries the negative factor sec(t/2)
    t = np.pi + 0.6
    g = u_semiclassical(H, None, t, axes, 1.0)
    P = grid_points(axes)
    ref = np.exp(-1j * np.tan(t / 2) * np.sum(P ** 2, axis=-1)) / np.cos(t / 2)
    past = float(np.max(np.abs(g.values.reshape(-1) - ref)))
    ok = worst < 1e-6 and amp_dev < 1e-8 and aligned and flipped and past < 1e-6
    acceptance_report(2, ok, f"max |u_sc - u_exact| {worst:.2e}, sqrt2 amplitude dev {amp_dev:.1e}, "
                             f"Husimi sign agreement at 20 points {aligned}, Maslov 0 -> 2 {flipped}")


def test_criterion_3_caustic_detection(acceptance_report):
    H = harmonic_oscillator()
    events = caustic_times(H, "schrodinger", zero_phase_data(1), 2.5, 4.0,
                           np.random.default_rng(14).uniform(-2, 2, (8, 2)))
    tc = events[0].t
    sc = load_scenario(bundled_scenarios()["ho_caustic"])
    res = check_caustic_time(sc, {"t_range": [2.5, 4.0], "offsets": [0.0, 0.0009, -0.0009, 0.0005]}, RunContext())
    fractions = [c["caustic_fraction"] for c in res.metrics["classification"]]
    ok = (len(events) == 1 and abs(tc - np.pi) < 1e-3 and abs(res.metrics["det_root"] - np.pi) < 1e-6
          and all(f == 1.0 for f in fractions) and res.passed)
    acceptance_report(3, ok, f"bisection t_c = {tc:.10f}, |t_c - pi| = {abs(tc - np.pi):.1e}, "
                             f"caustic fractions {fractions}")


def test_criterion_4_hbar_order(runs, acceptance_report):
    m = _check(runs, "quartic_hbar_order", "hbar_order")["metrics"]
    rows = m["rows"]
    assert [r["hbar"] for r in rows] == [0.5, 0.25, 0.125]
    ratios = [a["error"] / b["error"] for a, b in zip(rows, rows[1:])]
    ok = all(3.0 <= r <= 5.0 for r in ratios)
    errs = ", ".join(f"{r['error']:.3e}" for r in rows)
    acceptance_report(4, ok, f"E = [{errs}], ratios {[round(r, 3) for r in ratios]} (bounds [3, 5])")


def test_criterion_5_composition(runs, acceptance_report):
    rows = _check(runs, "composition", "composition")["metrics"]["rows"]
    labels = sorted(r["hamiltonian"] for r in rows)
    worst = max(r["deviation"] for r in rows)
    ok = labels == ["harmonic_oscillator", "quartic_oscillator"] and all(r["points"] == 50 for r in rows) \
        and worst < 1e-5
    acceptance_report(5, ok, f"worst |composed - direct| {worst:.2e} at 50 points per Hamiltonian (tol 1e-05)")


def test_criterion_6_star_product(acceptance_report):
    m = star_suite()
    ok = m["unit"] < 1e-10 and m["commutator"] < 1e-6 and m["idempotence"] < 1e-6
    acceptance_report(6, ok, f"unit {m['unit']:.1e}, commutator {m['commutator']:.1e}, "
                             f"idempotence {m['idempotence']:.1e}")


def test_criterion_7_geometry_suite(runs, acceptance_report):
    m = _check(runs, "pendulum_invariants", "geometry_suite")["metrics"]
    poly = max(m["polygon"].values())
    orders = {k: v["order"] for k, v in m["hj"].items()}
    ok = (poly < 1e-12 and m["loop_closure"] < 1e-9 and m["poincare_cartan"] < 1e-6
          and m["additivity"] < 1e-6 and m["additivity_inconclusive"] == 0
          and set(orders) == {"schrodinger", "heisenberg"} and min(orders.values()) >= 1.8)
    acceptance_report(7, ok, f"polygon {poly:.1e}, loop closure {m['loop_closure']:.1e}, "
                             f"Poincare-Cartan {m['poincare_cartan']:.1e}, additivity {m['additivity']:.1e}, "
                             f"H-J orders {', '.join(f'{k} {v:.2f}' for k, v in sorted(orders.items()))}")


def test_criterion_8_bc_contract(runs, acceptance_report):
    summaries = runs[1]
    worst = max(s["max_forward_residual"] for s in summaries.values())
    sheets = sum(s["emitted_sheets"] for s in summaries.values())
    probes = _check(runs, "pendulum_invariants", "bc_contract")["metrics"]["contraction"]
    ok = worst < 1e-9 and sheets > 0 and probes["probes"] == 1000 and probes["failures"] == 0 \
        and probes["max_residual"] < 1e-9 and abs(probes["horizon"] - np.log(1.5)) < 1e-12
    acceptance_report(8, ok, f"max forward residual {worst:.1e} over {sheets} sheets; "
                             f"{probes['probes']} pendulum probes, {probes['failures']} failures")


def test_criterion_9_determinism(runs, acceptance_report):
    a, _, b, _ = runs
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    differing = [str(f) for f in files_a if (a / f).read_bytes() != (b / f).read_bytes()]
    ok = files_a == files_b and not differing and len(files_a) > 0
    acceptance_report(9, ok, f"{len(files_a)} files compared, {len(differing)} differ")


def test_every_run_passes_its_own_checks(runs):
    for name, summary in runs[1].items():
        assert summary["passed"], name
