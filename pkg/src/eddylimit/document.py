"""Scenario documents: JSON in, validated and default-filled, out to a Setup."""
from __future__ import annotations

import copy
import json
from importlib import resources

import jsonschema

from .harness import Setup, digest
from .materials import Coefficients
from .mesh import BoundarySplit
from .scenarios import (
    CoilLoop,
    LaminatedCoreScenario,
    TimeProfile,
    build_laminated_core,
    build_unit_test_scenario,
)


class DocumentError(ValueError):
    """Unreadable, malformed or schema-invalid scenario document."""


def schema() -> dict:
    return json.loads(resources.files("eddylimit").joinpath("data/scenario.schema.json").read_text())


def default_document_text() -> str:
    return resources.files("eddylimit").joinpath("data/laminated_core.json").read_text()


def _fill(node: dict, value, root: dict):
    """Recursively apply schema ``default`` values."""
    if "$ref" in node:
        node = root["$defs"][node["$ref"].rsplit("/", 1)[-1]]
    if value is None and "default" in node:
        value = copy.deepcopy(node["default"])
    if isinstance(value, dict) and "properties" in node:
        for key, sub in node["properties"].items():
            filled = _fill(sub, value.get(key), root)
            if filled is not None or key in value or "default" in sub:
                value[key] = filled
    return value


def parse_document(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    sch = schema()
    try:
        jsonschema.validate(doc, sch)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise DocumentError(f"schema violation at {where}: {exc.message}") from None
    return _fill(sch, doc, sch)


def load_document(path) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise DocumentError(f"cannot read {path}: {exc}") from None
    return parse_document(text)


def _profile(doc: dict) -> TimeProfile:
    coil = doc["geometry"]["coil"]
    prof = coil["profile"]
    return TimeProfile(prof["kind"], coil["amplitude"], prof["onset"], prof["width"], prof["frequency"])


def scenario_from_document(doc: dict) -> LaminatedCoreScenario:
    geo, disc = doc["geometry"], doc["discretization"]
    coil_doc = geo["coil"]
    coil = None
    if all(k in coil_doc for k in ("axis", "position", "lo", "hi")):
        coil = CoilLoop(coil_doc["axis"], coil_doc["position"], tuple(coil_doc["lo"]), tuple(coil_doc["hi"]))

    def rng(r):
        return None if r is None else (tuple(r["lo"]), tuple(r["hi"]))

    return LaminatedCoreScenario(
        outer_box_cells=tuple(disc["cells"]),
        spacing=disc["spacing"],
        core_lo=tuple(geo["core"]["lo"]),
        core_hi=tuple(geo["core"]["hi"]),
        lamination_axis=geo["laminations"]["axis"],
        lamination_period=geo["laminations"]["period"],
        window=rng(geo["window"]),
        air_gap=rng(geo["gap"]),
        coil=coil,
        profile=_profile(doc),
        coeffs=Coefficients(**doc["materials"]),
        boundary_split=BoundarySplit.from_json(geo["boundary_split"]),
    )


def setup_from_document(doc: dict) -> Setup:
    """Build grid, materials and forcing; raises ScenarioError/ModelInvalidError."""
    disc, study = doc["discretization"], doc["study"]
    tau, T, rho = disc["tau"], disc["T"], doc["weight"]["rho"]
    ratio = T / tau
    if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
        raise DocumentError(f"T / tau = {ratio:g} must be an integer step count")
    kind = doc["geometry"]["kind"]
    profile = _profile(doc)
    if kind == "laminated_core":
        built = build_laminated_core(scenario_from_document(doc), tau, T, rho)
    else:
        cells = disc["cells"]
        if len(set(cells)) != 1:
            raise DocumentError(f"{kind} needs a cubic cell count")
        built = build_unit_test_scenario(kind, tau, T, rho, cells=cells[0], profile=profile)
    return Setup(built, tau, T, rho, lin_tol=study["lin_tol"], solver=study["solver"],
                 scenario_digest=digest(doc), profile=profile)
