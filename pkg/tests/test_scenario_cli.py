import json

import numpy as np
import pytest

from mwkb.cli import main, run_scenario
from mwkb.errors import ScenarioError
from mwkb.scenario import bundled_scenarios, canonical_hash, load_scenario, scenario_from_dict
from mwkb.sps_dynamics import ProblemKind
from mwkb.symbol_io import read_grid


def small_doc(**extra):
    doc = {
        "name": "small",
        "hamiltonian": {"builtin": "quartic_oscillator", "params": {"lam": 0.1}},
        "initial_state": {"kind": "heisenberg", "amplitude": "exp(-(q^2+p^2))", "phase": "0"},
        "grid": {"domain": [[-1, 1], [-1, 1]], "resolution": [4, 3]},
        "times": [0.5],
        "hbar": [1.0, 0.5],
        "outputs": {"products": ["grids", "sheets", "csv"], "checks": [{"name": "egorov"}, {"name": "bc_contract", "probes": 0}]},
    }
    doc.update(extra)
    return doc


def write(tmp_path, doc, name="s.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return path


def test_scenario_builds():
    sc = scenario_from_dict(small_doc())
    assert sc.kind is ProblemKind.HEISENBERG
    assert [len(a) for a in sc.axes] == [4, 3]
    assert sc.hbars == [1.0, 0.5]
    assert sc.hash == canonical_hash(small_doc())
    assert sc.oracle_settings()["method"] == "strang"


@pytest.mark.parametrize("patch, path", [
    ({"times": "soon"}, "times"),
    ({"grid": {"domain": [[-1, 1], [-1, 1]], "resolution": [4, 1]}}, "grid.resolution[1]"),
    ({"hamiltonian": {"builtin": "rotor"}}, "hamiltonian.builtin"),
    ({"hbar": -1.0}, "hbar"),
    ({"grid": {"domain": [[1, -1], [-1, 1]], "resolution": [4, 3]}}, "grid.domain[0]"),
    ({"times": [0.5, 80.0]}, "times[1]"),
    ({"initial_state": {"kind": "heisenberg", "amplitude": "exp(-zz)"}}, "initial_state"),
])
def test_invalid_documents_name_the_field(patch, path):
    with pytest.raises(ScenarioError) as info:
        scenario_from_dict(small_doc(**patch))
    assert info.value.path == path


def test_oracle_needs_separable_hamiltonian():
    doc = small_doc(hamiltonian={"expression": "p^2/2 + q^2*p^2"}, oracle={"n_points": 64})
    with pytest.raises(ScenarioError) as info:
        scenario_from_dict(doc)
    assert info.value.path == "oracle"


def test_bundled_scenarios_validate():
    names = bundled_scenarios()
    assert len(names) >= 8
    for path in names.values():
        load_scenario(path)


def test_cli_rejects_malformed_scenario(tmp_path, capsys):
    path = write(tmp_path, small_doc(grid={"domain": [[-1, 1]], "resolution": [4, 3]}))
    assert main(["run", "--scenario", str(path), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "grid.domain" in err


def test_contraction_probes_need_a_hessian_bound(tmp_path, capsys):
    doc = small_doc(outputs={"checks": [{"name": "bc_contract", "probes": 5}]})
    assert main(["check", "--scenario", str(write(tmp_path, doc)), "--out", str(tmp_path / "o")]) == 2
    assert "Hessian bound" in capsys.readouterr().err


def test_cli_rejects_bad_json(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{\"times\": [1,}")
    assert main(["check", "--scenario", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "invalid JSON" in capsys.readouterr().err


def test_cli_flow_and_sheets(tmp_path, capsys):
    path = write(tmp_path, small_doc(hamiltonian={"builtin": "harmonic_oscillator"}))
    assert main(["flow", "--scenario", str(path), "--x", "1,0", "--t", "pi/2"]) == 0
    out = json.loads(capsys.readouterr().out)
    np.testing.assert_allclose(out["x_t"], [0.0, -1.0], atol=1e-9)
    target = tmp_path / "sheets.json"
    assert main(["sheets", "--scenario", str(path), "--x", "1,0", "--t", "pi/2", "--out", str(target)]) == 0
    table = json.loads(target.read_text())
    assert table["status"] == "nonfocal"
    assert len(table["sheets"]) == 1
    np.testing.assert_allclose(table["sheets"][0]["x0"], [0.0, 1.0], atol=1e-9)
    assert main(["flow", "--scenario", str(path), "--x", "1,0,0", "--t", "1"]) == 2


def test_run_writes_artifacts(tmp_path):
    sc = load_scenario(write(tmp_path, small_doc()))
    summary = run_scenario(sc, tmp_path / "out")
    assert summary["passed"]
    assert summary["checks"] == {"bc_contract": "pass", "egorov": "pass"}
    files = summary["files"]
    assert "grids/heisenberg_t00_h01.mwkb" in files
    assert "grids/heisenberg_t00_h00.csv" in files
    assert "sheets/t00.json" in files
    g = read_grid(tmp_path / "out" / "grids" / "heisenberg_t00_h01.mwkb")
    assert g.hbar == 0.5 and g.meta["scenario_hash"] == sc.hash
    assert summary["max_forward_residual"] < 1e-9


def test_run_is_byte_reproducible(tmp_path):
    path = write(tmp_path, small_doc())
    for name in ("a", "b"):
        assert main(["run", "--scenario", str(path), "--out", str(tmp_path / name)]) == 0
    for f in sorted((tmp_path / "a").rglob("*")):
        if f.is_file():
            assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes(), f


def test_star_subcommand(tmp_path):
    from mwkb.symbol_io import write_grid
    from mwkb.weyl_calculus import WeylGrid

    W = WeylGrid(-8, 8, 256, 1.0)
    g = W.symbol_grid(W.sample(lambda X: 2 * np.exp(-np.sum(X ** 2, axis=-1))))
    write_grid(tmp_path / "f.mwkb", g)
    assert main(["star", "--lhs", str(tmp_path / "f.mwkb"), "--rhs", str(tmp_path / "f.mwkb"),
                 "--out", str(tmp_path / "ff.mwkb")]) == 0
    np.testing.assert_allclose(read_grid(tmp_path / "ff.mwkb").values, g.values, atol=1e-6)


def test_outputs_embed_hash_and_hbar(tmp_path):
    sc = load_scenario(write(tmp_path, small_doc()))
    run_scenario(sc, tmp_path / "out")
    for f in sorted((tmp_path / "out").rglob("*.json")):
        if f.name == "scenario.json":
            continue
        doc = json.loads(f.read_text())
        assert doc["scenario_hash"] == sc.hash, f
        assert doc["hbar"] == [1.0, 0.5], f


def test_hbar_sweep_table(tmp_path, capsys):
    doc = small_doc(hamiltonian={"builtin": "harmonic_oscillator"}, oracle={"n_points": 128, "method": "spectral"})
    path = write(tmp_path, doc)
    assert main(["propagate-rho", "--scenario", str(path), "--out", str(tmp_path / "o"), "--hbar-sweep",
                 "--hbar", "1,0.5"]) == 0
    table = json.loads(capsys.readouterr().out)
    assert [r["hbar"] for r in table["rows"]] == [1.0, 0.5]
    assert table["rows"][1]["ratio"] > 0
    assert max(r["error"] for r in table["rows"]) < 1e-6
