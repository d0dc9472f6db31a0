"""Command-line entry point.

Exit codes: 0 pass, 1 usage or parse error, 2 model invalid (c <= 0),
3 linear solver failure, 4 study ran but a pass criterion failed.
"""
from __future__ import annotations

import argparse
import copy
import csv
import logging
import sys
from pathlib import Path

from . import harness
from .document import DocumentError, load_document, setup_from_document
from .evolution import LinearSolverError
from .materials import ModelInvalidError, uniform_family_bound
from .scenarios import ScenarioError

EXIT_OK, EXIT_USAGE, EXIT_MODEL, EXIT_SOLVER, EXIT_FAILED = 0, 1, 2, 3, 4
STUDIES = ("structure", "bound", "causality", "identity", "rate", "smoothed")
SWEEP_AXES = ("rho", "tau", "grid")

log = logging.getLogger("eddylimit")


def run_study(doc: dict, name: str) -> harness.StudyReport:
    study = doc["study"]
    tol = study["tolerances"]
    setup = setup_from_document(doc)
    if name == "structure":
        rep = harness.study_structure_checks(setup.grid, seed=study["seed"], tol=tol["structure"])
    elif name == "bound":
        rep = harness.study_uniform_bound(setup, study["bound_s_values"], slack=tol["slack"])
    elif name == "causality":
        cut = [f * setup.T for f in study["causality_cutoffs"]]
        rep = harness.study_causality(setup, cut, s_values=sorted({0.0, *study["bound_s_values"]}),
                                      tol=tol["causality"])
    elif name == "identity":
        rep = harness.study_resolvent_identity(setup, study["identity_s"], defect_factor=tol["identity_factor"])
    elif name == "rate":
        rep = harness.study_convergence_rate(setup, [s for s in study["s_values"] if s > 0],
                                             band=tuple(tol["rate_band"]))
    elif name == "smoothed":
        rep = harness.study_smoothed_operator_convergence(setup, study["s_values"], study["n_samples"],
                                                          study["seed"])
    else:
        raise ValueError(name)
    rep.scenario_digest = setup.scenario_digest
    return rep


def write_report(rep: harness.StudyReport, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(rep.to_json() + "\n")
    rep.write_csv(out_dir / "table.csv")


def _guarded(fn):
    """Map library exceptions onto the exit-code contract."""
    try:
        return fn()
    except DocumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ScenarioError as exc:
        print(f"error: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ModelInvalidError as exc:
        print(f"model invalid: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except LinearSolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def cmd_check(path) -> int:
    def go():
        doc = load_document(path)
        setup = setup_from_document(doc)
        grid = setup.grid
        study = doc["study"]
        s_set = sorted({0.0, 1.0, *study["s_values"], *study["bound_s_values"]})
        c = uniform_family_bound(setup.family, s_set, setup.rho)
        print(f"grid {tuple(grid.cells_per_axis)} h={grid.spacing:g}: {grid.n_e} E edges, {grid.n_h} H faces")
        print(f"wellposedness constant c = {c:.6g} (rho = {setup.rho:g}, s in {s_set})")
        return EXIT_OK

    return _guarded(go)


def cmd_run(path, study_name, out_dir, seed=None) -> int:
    if study_name not in STUDIES:
        print(f"error: unknown study {study_name!r}; choose from {', '.join(STUDIES)}", file=sys.stderr)
        return EXIT_USAGE

    def go():
        doc = load_document(path)
        if seed is not None:
            doc["study"]["seed"] = seed
        rep = run_study(doc, study_name)
        write_report(rep, Path(out_dir))
        for line in rep.summary_lines():
            print(line)
        return EXIT_OK if rep.passed else EXIT_FAILED

    return _guarded(go)


def _scale_geometry(doc: dict, n: int) -> dict:
    doc = copy.deepcopy(doc)
    disc, geo = doc["discretization"], doc["geometry"]
    base = disc["cells"]
    if len(set(base)) != 1:
        raise DocumentError("grid sweeps need a cubic base grid")
    factor = n / base[0]

    def scale(v):
        x = v * factor
        if abs(x - round(x)) > 1e-9:
            raise DocumentError(f"grid value {n} does not scale geometry coordinate {v} to an integer")
        return int(round(x))

    disc["cells"] = [n, n, n]
    disc["spacing"] = disc["spacing"] / factor
    if geo["kind"] == "laminated_core":
        for key in ("core", "window", "gap"):
            if geo.get(key):
                geo[key] = {k: [scale(v) for v in geo[key][k]] for k in ("lo", "hi")}
        coil = geo["coil"]
        if "position" in coil:
            coil["position"] = scale(coil["position"])
            coil["lo"] = [scale(v) for v in coil["lo"]]
            coil["hi"] = [scale(v) for v in coil["hi"]]
        geo["laminations"]["period"] = scale(geo["laminations"]["period"])
    return doc


def _with_value(doc: dict, axis: str, value: str) -> dict:
    doc = copy.deepcopy(doc)
    if axis == "rho":
        doc["weight"]["rho"] = float(value)
    elif axis == "tau":
        doc["discretization"]["tau"] = float(value)
    else:
        doc = _scale_geometry(doc, int(value))
    return doc


def cmd_sweep(path, axis, values, out_dir, study_name=None) -> int:
    if axis not in SWEEP_AXES:
        print(f"error: unknown sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}", file=sys.stderr)
        return EXIT_USAGE
    vals = [v.strip() for v in (values or "").split(",") if v.strip()]
    if not vals:
        print("error: empty value list", file=sys.stderr)
        return EXIT_USAGE

    def go():
        doc = load_document(path)
        name = study_name or doc["study"]["kind"]
        try:
            docs = [(v, _with_value(doc, axis, v)) for v in vals]
        except ValueError as exc:
            raise DocumentError(f"cannot parse sweep value: {exc}") from None
        out = Path(out_dir)
        rows, worst = [], EXIT_OK
        for v, d in docs:
            rep = run_study(d, name)
            write_report(rep, out / f"{axis}_{v}")
            flat = {k: val for k, val in rep.to_dict()["measured"].items() if isinstance(val, (int, float))}
            if rep.fitted_rate:
                flat["slope"] = rep.fitted_rate["slope"]
            rows.append({"axis": axis, "value": v, "study": name, "passed": rep.passed, **flat})
            print(f"{'PASS' if rep.passed else 'FAIL'} {name} {axis}={v}")
            if not rep.passed:
                worst = EXIT_FAILED
        fields = []
        for r in rows:
            fields += [k for k in r if k not in fields]
        with open(out / "sweep.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fields)
            w.writeheader()
            w.writerows(rows)
        return worst

    return _guarded(go)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eddylimit", description="Eddy-current limit studies for the discrete Maxwell system")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("check", help="validate a scenario document and print c")
    c.add_argument("file")

    r = sub.add_parser("run", help="run one study and write report.json")
    r.add_argument("file")
    r.add_argument("--study", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--seed", type=int)

    s = sub.add_parser("sweep", help="run the document's study over parameter values")
    s.add_argument("file")
    s.add_argument("--axis", required=True)
    s.add_argument("--values", required=True, help="comma-separated list")
    s.add_argument("--out", required=True)
    s.add_argument("--study", help="override the document's study.kind")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "check":
        return cmd_check(args.file)
    if args.command == "run":
        return cmd_run(args.file, args.study, args.out, args.seed)
    if args.study is not None and args.study not in STUDIES:
        print(f"error: unknown study {args.study!r}", file=sys.stderr)
        return EXIT_USAGE
    return cmd_sweep(args.file, args.axis, args.values, args.out, args.study)


if __name__ == "__main__":
    sys.exit(main())
