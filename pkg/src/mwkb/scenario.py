"""Scenario documents: schema validation, canonical hashing and builders.

A scenario is a JSON object::

    {
      "name": "ho_quadratic_exactness",
      "hamiltonian": {"builtin": "harmonic_oscillator"},
      "initial_state": {"kind": "heisenberg", "amplitude": "exp(-(q^2+p^2)/2)", "phase": "0"},
      "grid": {"domain": [[-3, 3], [-3, 3]], "resolution": [31, 31]},
      "times": [0.5, 1.0],
      "hbar": [1.0, 0.5],
      "oracle": {"q_range": [-8, 8], "n_points": 256, "dt": 1e-3},
      "outputs": {"products": ["grids", "sheets"], "checks": [{"name": "quadratic_exact_rho"}]},
      "seed": 0
    }

Only ``hamiltonian``, ``initial_state``, ``grid`` and ``times`` are required.
Validation errors carry the dotted path of the offending field.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .errors import ScenarioError
from .hamiltonian_model import (
    HamiltonianModel,
    InitialPhaseData,
    driven_oscillator,
    free_particle,
    gaussian_symbol_data,
    hamiltonian_from_expression,
    harmonic_oscillator,
    initial_data_from_expressions,
    pendulum,
    quadratic_hamiltonian,
    quartic_oscillator,
)
from .sps_dynamics import ProblemKind

__all__ = ["SCHEMA", "Scenario", "load_scenario", "scenario_from_dict", "canonical_hash", "bundled_scenarios"]

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_RANGE = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}
_MATRIX = {"type": "array", "items": {"type": "array", "items": _NUM}}
_PARAMS = {"type": "object", "additionalProperties": _NUM}

BUILTINS = {
    "harmonic_oscillator": harmonic_oscillator,
    "free_particle": free_particle,
    "quartic_oscillator": quartic_oscillator,
    "pendulum": pendulum,
    "driven_oscillator": driven_oscillator,
}

SCHEMA = {
    "type": "object",
    "required": ["hamiltonian", "initial_state", "grid", "times"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "hamiltonian": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "builtin": {"enum": sorted(BUILTINS)},
                "params": _PARAMS,
                "expression": {"type": "string"},
                "n": {"type": "integer", "minimum": 1},
                "quadratic": {
                    "type": "object",
                    "required": ["hess"],
                    "additionalProperties": False,
                    "properties": {"hess": _MATRIX, "lin": {"type": "array", "items": _NUM}},
                },
                "c1_bound": _POS,
            },
            "oneOf": [{"required": ["builtin"]}, {"required": ["expression"]}, {"required": ["quadratic"]}],
        },
        "initial_state": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["schrodinger", "heisenberg"]},
                "amplitude": {"type": "string"},
                "phase": {"type": "string"},
                "params": _PARAMS,
                "gaussian": {
                    "type": "object",
                    "required": ["center", "widths"],
                    "additionalProperties": False,
                    "properties": {
                        "center": {"type": "array", "items": _NUM},
                        "widths": {"type": "array", "items": _POS},
                        "height": _NUM,
                        "quad": _MATRIX,
                        "lin": {"type": "array", "items": _NUM},
                    },
                },
                "support": {"type": "array", "items": {"type": "array", "items": _NUM}, "minItems": 2,
                            "maxItems": 2},
                "cos_mode": {"type": "boolean"},
            },
            "not": {"required": ["gaussian", "amplitude"]},
        },
        "grid": {
            "type": "object",
            "required": ["domain", "resolution"],
            "additionalProperties": False,
            "properties": {
                "domain": {"type": "array", "items": _RANGE, "minItems": 2},
                "resolution": {"type": "array", "items": {"type": "integer", "minimum": 2, "maximum": 1024},
                               "minItems": 2},
                "manifold_resolution": {"type": "integer", "minimum": 4, "maximum": 512},
            },
        },
        "times": {"type": "array", "items": _NUM, "minItems": 1},
        "hbar": {"oneOf": [_POS, {"type": "array", "items": _POS, "minItems": 1}]},
        "oracle": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "q_range": _RANGE,
                "n_points": {"type": "integer", "minimum": 16, "maximum": 2048},
                "n_p": {"type": "integer", "minimum": 16},
                "dt": _POS,
                "method": {"enum": ["strang", "spectral"]},
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "products": {"type": "array", "items": {"enum": ["grids", "sheets", "csv", "oracle"]},
                             "uniqueItems": True},
                "checks": {
                    "type": "array",
                    "items": {"type": "object", "required": ["name"], "properties": {"name": {"type": "string"}}},
                },
            },
        },
        "seed": {"type": "integer", "minimum": 0},
    },
}


def _path(err: jsonschema.ValidationError) -> str:
    parts = [str(p) if not isinstance(p, int) else f"[{p}]" for p in err.absolute_path]
    text = "".join(p if p.startswith("[") else f".{p}" for p in parts).lstrip(".")
    return text or "<root>"


def canonical_hash(doc: dict) -> str:
    """SHA-256 of the canonical JSON form (sorted keys, compact separators)."""
    text = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(text.encode("ascii")).hexdigest()


@dataclass
class Scenario:
    """A validated scenario with its built Hamiltonian and initial data."""

    doc: dict
    H: HamiltonianModel
    phase0: InitialPhaseData
    kind: ProblemKind
    axes: tuple
    times: list
    hbars: list
    seed: int
    checks: list = field(default_factory=list)
    products: list = field(default_factory=list)
    source: str = "<dict>"

    @property
    def name(self) -> str:
        return self.doc.get("name", "scenario")

    @property
    def hash(self) -> str:
        return canonical_hash(self.doc)

    @property
    def cos_mode(self) -> bool:
        return bool(self.doc["initial_state"].get("cos_mode", False))

    @property
    def manifold_resolution(self) -> int:
        return int(self.doc["grid"].get("manifold_resolution", 48))

    def oracle_settings(self) -> dict:
        o = dict(self.doc.get("oracle", {}))
        o.setdefault("q_range", [-8.0, 8.0])
        o.setdefault("n_points", 256)
        o.setdefault("dt", 1e-3)
        o.setdefault("method", "strang")
        return o


def _build_hamiltonian(sec: dict) -> HamiltonianModel:
    params = dict(sec.get("params", {}))
    try:
        if "builtin" in sec:
            fn = BUILTINS[sec["builtin"]]
            if sec["builtin"] == "quartic_oscillator":
                return fn(params.get("lam", 0.1), sec.get("c1_bound"))
            if sec["builtin"] == "driven_oscillator":
                return fn(params.get("force", 0.3), params.get("omega", 1.3))
            if sec["builtin"] == "free_particle":
                return fn(sec.get("n", 1), params.get("mass", 1.0))
            if sec["builtin"] == "harmonic_oscillator":
                return fn(sec.get("n", 1))
            return fn()
        if "expression" in sec:
            return hamiltonian_from_expression(sec["expression"], sec.get("n", 1), params, sec.get("c1_bound"))
        q = sec["quadratic"]
        return quadratic_hamiltonian(q["hess"], q.get("lin"))
    except ScenarioError as exc:
        raise ScenarioError(str(exc), "hamiltonian") from exc


def _build_initial(sec: dict, n: int) -> InitialPhaseData:
    support = (None, None)
    if "support" in sec:
        lo, hi = (np.asarray(v, dtype=float) for v in sec["support"])
        if lo.shape != (2 * n,) or hi.shape != (2 * n,) or np.any(lo >= hi):
            raise ScenarioError("support must be two corners lo < hi of length 2n", "initial_state.support")
        support = (lo, hi)
    try:
        if "gaussian" in sec:
            g = sec["gaussian"]
            if len(g["center"]) != 2 * n:
                raise ScenarioError(f"center needs {2 * n} entries", "initial_state.gaussian.center")
            data = gaussian_symbol_data(g["center"], g["widths"], g.get("height", 1.0), g.get("quad"), g.get("lin"))
            if support[0] is not None:
                data = InitialPhaseData(data.n, data.amplitude, data.phase, data.phase_grad, data.phase_hess,
                                        support, data.zero_phase, data.spec)
            return data
        return initial_data_from_expressions(sec.get("amplitude", "1"), sec.get("phase", "0"), n,
                                             sec.get("params"), support)
    except ScenarioError as exc:
        if exc.path:
            raise
        raise ScenarioError(str(exc), "initial_state") from exc


def scenario_from_dict(doc: dict, source: str = "<dict>") -> Scenario:
    """Validate ``doc`` and build the scenario.

    Raises
    ------
    ScenarioError
        With ``path`` set to the dotted location of the first problem.
    """
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        err = errors[0]
        raise ScenarioError(err.message, _path(err))
    H = _build_hamiltonian(doc["hamiltonian"])
    d = H.dim
    grid = doc["grid"]
    if len(grid["domain"]) != d or len(grid["resolution"]) != d:
        raise ScenarioError(f"need {d} domain ranges and resolutions", "grid")
    for i, (lo, hi) in enumerate(grid["domain"]):
        if not lo < hi:
            raise ScenarioError("range must be increasing", f"grid.domain[{i}]")
    axes = tuple(np.linspace(lo, hi, k) for (lo, hi), k in zip(grid["domain"], grid["resolution"]))
    phase0 = _build_initial(doc["initial_state"], H.n)
    kind = ProblemKind.parse(doc["initial_state"]["kind"])
    hb = doc.get("hbar", 1.0)
    hbars = [float(v) for v in (hb if isinstance(hb, list) else [hb])]
    for i, t in enumerate(doc["times"]):
        if abs(t) > 50.0:
            raise ScenarioError("|t| may not exceed 50", f"times[{i}]")
    if "oracle" in doc:
        if H.n != 1 or not H.is_separable:
            raise ScenarioError("the oracle needs a separable one-dimensional Hamiltonian", "oracle")
        lo, hi = doc["oracle"].get("q_range", [-8.0, 8.0])
        if not lo < hi:
            raise ScenarioError("range must be increasing", "oracle.q_range")
    out = doc.get("outputs", {})
    return Scenario(doc, H, phase0, kind, axes, [float(t) for t in doc["times"]], hbars,
                    int(doc.get("seed", 0)), list(out.get("checks", [])),
                    list(out.get("products", ["grids", "sheets"])), source)


def load_scenario(path) -> Scenario:
    """Read, validate and build a scenario file."""
    path = Path(path)
    if not path.is_file():
        raise ScenarioError(f"scenario file {str(path)!r} not found")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"invalid JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})") from exc
    if not isinstance(doc, dict):
        raise ScenarioError("top level must be an object")
    return scenario_from_dict(doc, str(path))


def bundled_scenarios() -> dict:
    """Name to path of every scenario shipped with the package, sorted by name."""
    root = Path(__file__).with_name("scenarios")
    return {p.stem: p for p in sorted(root.glob("*.json"))}
