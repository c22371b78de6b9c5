"""Scenario files: parse, validate, run, and write reports.

A scenario is a YAML mapping::

    name: unipotent.critical
    seed: 7
    ensemble: {gallery: unipotent}        # or {file: path} or {atoms: ..., weights: ..., mode: ...}
    subspaces:
      e1: {coordinate: [0]}               # or {vectors: [[1, 0]]}
    points:
      x0: [0.3, 1]
    tasks:
      - filtration: {n_steps: 20000}
      - escape: {subspace: e1, x0: x0}

Validation errors carry the line of the offending node.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import gallery, linalg
from .classify import critical_semisimplicity_check, decide_lift_existence, find_stationary_measures, \
    orbit_compactness_probe
from .ensemble import INVARIANCE_TOL, MatrixEnsemble, Subspace, ensemble_from_dict, invariance_residual, \
    load_ensemble, restrict_quotient
from .errors import EnsembleError, ProjmeasError, ScenarioError
from .invariant import fkh_filtration, invariant_subspace_lattice
from .lyapunov import BlockSpec, estimate_spectrum, recurrence_ratio_probe
from .report import TaskResult, emit_report, gnuplot_script, histogram_script
from .stationary import (
    DEFAULT_CAP,
    DEFAULT_SCHEDULE,
    backward_limit_measure,
    cesaro_measure,
    escape_mass_profile,
    measure_distance,
    stationarity_residual,
    support_diameter,
)

__all__ = ["Scenario", "load_scenario", "parse_scenario", "run_scenario", "execute", "shipped_scenarios",
           "OUT_ENV", "UNDECIDED_VERDICTS"]

OUT_ENV = "PROJMEAS_OUT"
UNDECIDED_VERDICTS = {"UNDECIDED", "UNKNOWN"}
TOP_KEYS = {"name", "description", "seed", "ensemble", "subspaces", "points", "tasks", "out"}


# ---------------------------------------------------------------------------
# YAML with line numbers


class _Map(dict):
    line = None
    key_lines: dict = {}


class _Seq(list):
    line = None


class _Loader(yaml.SafeLoader):
    pass


def _construct_map(loader, node):
    out = _Map()
    out.line = node.start_mark.line + 1
    out.key_lines = {}
    for knode, vnode in node.value:
        key = loader.construct_object(knode, deep=True)
        if key in out:
            raise ScenarioError(f"duplicate key {key!r}", knode.start_mark.line + 1)
        out[key] = loader.construct_object(vnode, deep=True)
        out.key_lines[key] = knode.start_mark.line + 1
    return out


def _construct_seq(loader, node):
    out = _Seq(loader.construct_object(n, deep=True) for n in node.value)
    out.line = node.start_mark.line + 1
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_map)
_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_SEQUENCE_TAG, _construct_seq)


def _line(node, key=None, default=None):
    if key is not None and isinstance(node, _Map) and key in node.key_lines:
        return node.key_lines[key]
    return getattr(node, "line", None) or default


# ---------------------------------------------------------------------------
# task parameter schemas: name -> (default, type check)


def _int(v):
    return isinstance(v, int) and not isinstance(v, bool) and v >= 0


def _pos(v):
    return _int(v) and v > 0


def _num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _name(v):
    return isinstance(v, str) or isinstance(v, list)


TASKS = {
    "spectrum": {"n_steps": (100_000, _pos), "n_trials": (4, _pos), "subspace": (None, _name),
                 "quotient": (None, _name), "seed": (None, _int)},
    "filtration": {"n_steps": (20_000, _pos), "n_trials": (4, _pos), "seed": (None, _int)},
    "stationary": {"method": ("cesaro", lambda v: v in ("cesaro", "backward")), "n": (10_000, _pos),
                   "burn_in": (0, _int), "thinning": (1, _pos), "x0": (None, _name), "cap": (DEFAULT_CAP, _pos),
                   "compare_seed": (None, _int), "seed": (None, _int)},
    "escape": {"subspace": (None, _name), "x0": (None, _name), "delta": (0.05, _num),
               "schedule": (list(DEFAULT_SCHEDULE), lambda v: isinstance(v, list) and all(_pos(x) for x in v)),
               "n_chains": (1, _pos), "seed": (None, _int)},
    "lift": {"subspace": (None, _name), "nubar": (None, _name), "n_steps": (20_000, _pos), "seed": (None, _int)},
    "critical": {"n": (10_000, _pos), "n_steps": (20_000, _pos), "seed": (None, _int)},
    "orbit": {"x": (None, _name), "n_samples": (4, _pos), "n_steps": (100_000, _pos), "seed": (None, _int)},
    "recurrence": {"a": ("full", lambda v: isinstance(v, (str, dict))), "b": ("full", lambda v: isinstance(v, (str, dict))),
                   "n_steps": (1_000_000, _pos), "lyapunov_steps": (20_000, _pos), "band": (1.0, _num),
                   "every": (100, _pos), "seed": (None, _int)},
}
REQUIRED = {"escape": ["subspace"], "lift": ["subspace"], "orbit": ["x"]}


@dataclass
class Task:
    kind: str
    params: dict
    line: int | None


@dataclass
class Scenario:
    name: str
    seed: int
    ensemble: MatrixEnsemble
    subspaces: dict = field(default_factory=dict)
    points: dict = field(default_factory=dict)
    tasks: list = field(default_factory=list)
    out: str | None = None
    source: str = ""


# ---------------------------------------------------------------------------
# parsing


def _ensemble(spec, base_dir, line):
    if not isinstance(spec, dict):
        raise ScenarioError("ensemble must be a mapping", line)
    keys = {"gallery", "file", "atoms"} & set(spec)
    if len(keys) != 1:
        raise ScenarioError("ensemble needs exactly one of: gallery, file, atoms", _line(spec, default=line))
    mode = spec.get("mode")
    try:
        if "gallery" in spec:
            return gallery.build(str(spec["gallery"]), mode)
        if "file" in spec:
            E = load_ensemble(Path(base_dir) / str(spec["file"]))
        else:
            data = {k: spec[k] for k in ("dim", "atoms", "weights", "mode") if k in spec}
            data.setdefault("format", "projmeas-ensemble/1")
            if "dim" not in data and isinstance(data["atoms"], list) and data["atoms"]:
                data["dim"] = len(data["atoms"][0])
            E = ensemble_from_dict(data)
        if mode and mode != E.mode:
            E = _convert(E, mode)
        return E
    except (EnsembleError, ValueError, KeyError, TypeError) as exc:
        msg = exc.args[0] if exc.args else str(exc)
        key = "weights" if "weight" in str(msg) else ("atoms" if "atom" in str(msg) else None)
        raise ScenarioError(f"invalid ensemble: {msg}", _line(spec, key, line)) from None


def _convert(E: MatrixEnsemble, mode: str) -> MatrixEnsemble:
    if mode == E.mode:
        return E
    if mode == "rational":
        return MatrixEnsemble.create([linalg.as_exact(a) for a in E.atoms], E.weights, "rational", E.name)
    if mode == "float":
        return MatrixEnsemble.create(np.array(E.atoms), E.weights, "float", E.name)
    raise ValueError(f"unknown mode {mode!r}")


def _vector(v, d, line):
    if not isinstance(v, list) or len(v) != d:
        raise ScenarioError(f"expected a list of {d} numbers", line)
    try:
        return linalg.as_float(linalg.as_exact(v))
    except (ValueError, ZeroDivisionError):
        raise ScenarioError("vector entries must be numbers or 'p/q' strings", line) from None


def _subspace(spec, E, name, line):
    d = E.dim
    if not isinstance(spec, dict) or len({"coordinate", "vectors"} & set(spec)) != 1:
        raise ScenarioError(f"subspace {name!r} needs one of: coordinate, vectors", line)
    try:
        if "coordinate" in spec:
            idx = spec["coordinate"]
            if not isinstance(idx, list) or not all(_int(i) and i < d for i in idx):
                raise ScenarioError(f"coordinate indices must lie in 0..{d - 1}", _line(spec, "coordinate", line))
            S = Subspace.coordinate(d, idx, name)
        else:
            vecs = spec["vectors"]
            if not isinstance(vecs, list) or not vecs:
                raise ScenarioError("vectors must be a nonempty list", _line(spec, "vectors", line))
            for v in vecs:
                _vector(v, d, _line(v, default=line))
            M = linalg.as_exact(np.array(vecs, dtype=object).T) if E.is_exact else np.array(vecs, dtype=float).T
            S = Subspace.span(M, name, dim=d)
    except ProjmeasError:
        raise
    except Exception as exc:  # noqa: BLE001 - surface as a validation error
        raise ScenarioError(f"subspace {name!r}: {exc}", line) from None
    return S if E.is_exact or S.exact is None else Subspace(S.basis, name)


def parse_scenario(text: str, source: str = "<string>", base_dir=".") -> Scenario:
    try:
        doc = yaml.load(text, Loader=_Loader)
    except ScenarioError:
        raise
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ScenarioError(f"YAML: {exc.problem}", mark.line + 1 if mark else None) from None
    if not isinstance(doc, dict):
        raise ScenarioError("scenario must be a mapping", 1)
    for k in doc:
        if k not in TOP_KEYS:
            raise ScenarioError(f"unknown key {k!r}", _line(doc, k))
    if "seed" not in doc:
        raise ScenarioError("seed is mandatory", _line(doc, default=1))
    if not _int(doc["seed"]):
        raise ScenarioError("seed must be a nonnegative integer", _line(doc, "seed"))
    if "ensemble" not in doc:
        raise ScenarioError("ensemble is mandatory", _line(doc, default=1))
    E = _ensemble(doc["ensemble"], base_dir, _line(doc, "ensemble"))
    subspaces = {}
    subs = doc.get("subspaces") or {}
    if not isinstance(subs, dict):
        raise ScenarioError("subspaces must be a mapping", _line(doc, "subspaces"))
    for name, spec in subs.items():
        subspaces[str(name)] = _subspace(spec, E, str(name), _line(subs, name))
    points = {}
    pts = doc.get("points") or {}
    if not isinstance(pts, dict):
        raise ScenarioError("points must be a mapping", _line(doc, "points"))
    for name, v in pts.items():
        points[str(name)] = _vector(v, E.dim, _line(pts, name))
    tasks = []
    raw = doc.get("tasks")
    raw = [] if raw is None else raw
    if not isinstance(raw, list):
        raise ScenarioError("tasks must be a list", _line(doc, "tasks"))
    for item in raw:
        tasks.append(_task(item, E, subspaces, points, _line(item, default=_line(raw))))
    name = doc.get("name") or Path(source).stem
    out = doc.get("out")
    return Scenario(str(name), int(doc["seed"]), E, subspaces, points, tasks, None if out is None else str(out),
                    source)


def _task(item, E, subspaces, points, line):
    if isinstance(item, str):
        kind, params = item, {}
    elif isinstance(item, dict) and len(item) == 1:
        kind, params = next(iter(item.items()))
        params = {} if params is None else params
    else:
        raise ScenarioError("each task is a single-key mapping such as {spectrum: {...}}", line)
    if kind not in TASKS:
        raise ScenarioError(f"unknown task {kind!r}; expected one of {', '.join(sorted(TASKS))}", line)
    if not isinstance(params, dict):
        raise ScenarioError(f"parameters of {kind} must be a mapping", line)
    schema = TASKS[kind]
    resolved = {}
    for k, v in params.items():
        if k not in schema:
            raise ScenarioError(f"{kind}: unknown parameter {k!r}", _line(params, k, line))
        if not schema[k][1](v):
            raise ScenarioError(f"{kind}: invalid value for {k!r}: {v!r}", _line(params, k, line))
        resolved[k] = v
    for k in REQUIRED.get(kind, []):
        if k not in resolved:
            raise ScenarioError(f"{kind}: missing parameter {k!r}", line)
    for k, (default, _) in schema.items():
        resolved.setdefault(k, default)
    for k in ("subspace", "quotient", "nubar"):
        v = resolved.get(k)
        if isinstance(v, str) and v not in subspaces:
            raise ScenarioError(f"{kind}: undefined subspace {v!r}", _line(params, k, line))
        if isinstance(v, list):
            raise ScenarioError(f"{kind}: {k} must name a subspace", _line(params, k, line))
    for k in ("x0", "x"):
        v = resolved.get(k)
        if isinstance(v, str) and v not in points:
            raise ScenarioError(f"{kind}: undefined point {v!r}", _line(params, k, line))
        if isinstance(v, list):
            _vector(v, E.dim, _line(params, k, line))
    if kind == "recurrence":
        for k in ("a", "b"):
            b = _blockspec(resolved[k], subspaces, _line(params, k, line))
            if b is not None:
                _require_invariant(E, b.subspace, kind, _line(params, k, line))
    if kind in ("spectrum", "lift"):
        for k in ("subspace", "quotient"):
            if resolved.get(k) is not None:
                _require_invariant(E, subspaces[resolved[k]], kind, _line(params, k, line))
    return Task(kind, dict(resolved), line)


def _require_invariant(E, S, kind, line):
    res, atom = invariance_residual(E, S)
    if res > INVARIANCE_TOL:
        raise ScenarioError(f"{kind}: subspace {S.label!r} is not invariant (atom {atom}, residual {res:.3g})", line)


def _blockspec(spec, subspaces, line) -> BlockSpec | None:
    if spec == "full":
        return None
    if not isinstance(spec, dict) or spec.get("subspace") not in subspaces:
        raise ScenarioError("block must be 'full' or {subspace: name, kind: restrict|quotient}", line)
    kind = spec.get("kind", "restrict")
    if kind not in ("restrict", "quotient"):
        raise ScenarioError("block kind must be restrict or quotient", line)
    return BlockSpec(subspaces[spec["subspace"]], kind)


def shipped_scenarios() -> dict:
    """Name -> text of the scenarios shipped with the package."""
    root = resources.files("projmeas") / "scenarios"
    return {p.name[:-5]: p.read_text() for p in sorted(root.iterdir(), key=lambda p: p.name)
            if p.name.endswith(".yaml")}


def load_scenario(path) -> Scenario:
    """Parse a scenario file, or a shipped scenario given by name."""
    p = Path(path)
    if p.exists():
        return parse_scenario(p.read_text(), p.name, p.parent)
    shipped = shipped_scenarios()
    key = str(path)[:-5] if str(path).endswith(".yaml") else str(path)
    if key in shipped:
        return parse_scenario(shipped[key], f"{key}.yaml", ".")
    raise ScenarioError(f"scenario {path!s} not found")


# ---------------------------------------------------------------------------
# execution


def _point(v, sc):
    if v is None:
        return None
    if isinstance(v, str):
        return sc.points[v]
    return linalg.as_float(linalg.as_exact(v))


def _sub(v, sc):
    return None if v is None else sc.subspaces[v]


def _header(op, seed, params):
    p = {k: v for k, v in params.items() if k != "seed"}
    return {"operation": op, "seed": seed, "parameters": p}


def _run_spectrum(sc, p, seed, workers):
    E = sc.ensemble
    if p["subspace"]:
        E = restrict_quotient(E, _sub(p["subspace"], sc), "restrict")
    if p["quotient"]:
        E = restrict_quotient(E, _sub(p["quotient"], sc), "quotient")
    rep = estimate_spectrum(E, n_steps=p["n_steps"], n_trials=p["n_trials"], seed=seed, workers=workers)
    body = _header("estimate_spectrum", seed, p)
    body.update(rep.to_dict())
    d = len(rep.exponents)
    return TaskResult("spectrum", body, None, {"convergence": rep.write_csv},
                      {"convergence": ("convergence", gnuplot_script("{csv}", "exponent convergence", "steps",
                                                                     "nats/step", range(2, d + 2)))})


def _run_filtration(sc, p, seed, workers):
    lat = invariant_subspace_lattice(sc.ensemble, seed=seed)
    rep = fkh_filtration(sc.ensemble, n_steps=p["n_steps"], n_trials=p["n_trials"], seed=seed, lattice=lat)
    body = _header("fkh_filtration", seed, p)
    body.update(rep.to_dict())
    body["lattice"] = {"dims": [U.dim for U in lat.subspaces], "jordan_holder_factor_dims": lat.factor_dims,
                       "complete": lat.complete, "notes": lat.notes}
    return TaskResult("filtration", body, "CRITICAL" if rep.critical else "NOT_CRITICAL")


def _run_stationary(sc, p, seed, workers):
    E = sc.ensemble
    if p["method"] == "cesaro":
        nu = cesaro_measure(E, _point(p["x0"], sc), n=p["n"], burn_in=p["burn_in"], thinning=p["thinning"],
                            seed=seed, cap=p["cap"])
    else:
        nu = backward_limit_measure(E, p["n"], seed=seed)
    body = _header("cesaro_measure" if p["method"] == "cesaro" else "backward_limit_measure", seed, p)
    body.update({"measure": nu.header(), "span_dim": nu.span_estimate.dim,
                 "support_diameter": support_diameter(nu), "stationarity_residual": stationarity_residual(E, nu, seed)})
    if p["compare_seed"] is not None and p["method"] == "cesaro":
        other = cesaro_measure(E, _point(p["x0"], sc), n=p["n"], burn_in=p["burn_in"], thinning=p["thinning"],
                               seed=p["compare_seed"], cap=p["cap"])
        body["distance_to_compare_seed"] = measure_distance(nu, other, seed)
    d = nu.dim
    return TaskResult("stationary", body, None, {"atoms": nu.write_csv},
                      {"histogram": ("atoms", histogram_script("{csv}", "first coordinate of atoms", 1, d + 1))})


def _run_escape(sc, p, seed, workers):
    prof = escape_mass_profile(sc.ensemble, _sub(p["subspace"], sc), _point(p["x0"], sc), delta=p["delta"],
                               schedule=p["schedule"], seed=seed, n_chains=p["n_chains"])
    body = _header("escape_mass_profile", seed, p)
    body.update(prof.to_dict())
    return TaskResult("escape", body, prof.verdict, {"profile": prof.write_csv},
                      {"profile": ("profile", gnuplot_script("{csv}", "mass near P(W)", "n", "mass", [2], True))})


def _run_lift(sc, p, seed, workers):
    dec = decide_lift_existence(sc.ensemble, _sub(p["subspace"], sc), _sub(p["nubar"], sc), n_steps=p["n_steps"],
                                seed=seed)
    body = _header("decide_lift_existence", seed, p)
    body.update(dec.to_dict())
    csvs, plots = {}, {}
    if dec.corroboration is not None:
        csvs["profile"] = dec.corroboration.write_csv
        plots["profile"] = ("profile", gnuplot_script("{csv}", "mass near P(W)", "n", "mass", [2], True))
    return TaskResult("lift", body, dec.answer, csvs, plots)


def _run_critical(sc, p, seed, workers):
    E = sc.ensemble
    lat = invariant_subspace_lattice(E, seed=seed)
    filt = fkh_filtration(E, n_steps=p["n_steps"], seed=seed, lattice=lat)
    body = _header("critical_semisimplicity_check", seed, p)
    if not filt.critical:
        cert = critical_semisimplicity_check(E, [], lattice=lat, filtration=filt, seed=seed)
        body.update(cert.to_dict())
        return TaskResult("critical", body, cert.verdict)
    found, discarded = find_stationary_measures(E, lat, n=p["n"], seed=seed)
    cert = critical_semisimplicity_check(E, [f.measure for f in found], lattice=lat, filtration=filt, seed=seed)
    body.update(cert.to_dict())
    body["measures"] = [f.to_dict() for f in found]
    body["discarded_starts"] = [{"subspace": U.label, "dim": U.dim,
                                 "escape": {k: v.verdict for k, v in prof.items()}} for U, prof in discarded]
    return TaskResult("critical", body, cert.verdict)


def _run_orbit(sc, p, seed, workers):
    probe = orbit_compactness_probe(sc.ensemble, _point(p["x"], sc), n_samples=p["n_samples"], n_steps=p["n_steps"],
                                    seed=seed)
    body = _header("orbit_compactness_probe", seed, p)
    body.update(probe.to_dict())
    return TaskResult("orbit", body, probe.verdict)


def _run_recurrence(sc, p, seed, workers):
    full = BlockSpec(Subspace(np.eye(sc.ensemble.dim), "V"), "full")
    a = _blockspec(p["a"], sc.subspaces, None) or full
    b = _blockspec(p["b"], sc.subspaces, None) or full
    rep = recurrence_ratio_probe(sc.ensemble, a, b, n_steps=p["n_steps"], seed=seed,
                                 lyapunov_steps=p["lyapunov_steps"], band=p["band"])
    body = _header("recurrence_ratio_probe", seed, p)
    body.update(rep.to_dict())
    every = p["every"]
    return TaskResult("recurrence", body, rep.verdict, {"series": lambda path: rep.write_csv(path, every)},
                      {"series": ("series", gnuplot_script("{csv}", "log norm ratio", "n", "nats", [2], True))})


RUNNERS = {
    "spectrum": _run_spectrum,
    "filtration": _run_filtration,
    "stationary": _run_stationary,
    "escape": _run_escape,
    "lift": _run_lift,
    "critical": _run_critical,
    "orbit": _run_orbit,
    "recurrence": _run_recurrence,
}


def execute(sc: Scenario, workers: int = 1):
    """Run every task; errors become error reports instead of aborting."""
    results = []
    for t in sc.tasks:
        seed = sc.seed if t.params.get("seed") is None else t.params["seed"]
        try:
            results.append(RUNNERS[t.kind](sc, t.params, seed, workers))
        except (ProjmeasError, ValueError, np.linalg.LinAlgError) as exc:
            body = _header(t.kind, seed, t.params)
            body["error"] = f"{type(exc).__name__}: {exc}"
            body["line"] = t.line
            results.append(TaskResult(t.kind, body, "ERROR"))
    return results


def exit_code(results) -> int:
    verdicts = [r.verdict for r in results]
    if "ERROR" in verdicts:
        return 1
    if any(v in UNDECIDED_VERDICTS for v in verdicts):
        return 2
    return 0


def resolve_out(sc: Scenario, out=None) -> Path:
    """``out`` argument, else ``$PROJMEAS_OUT/<name>``, else the scenario's ``out``, else ``projmeas-out/<name>``."""
    if out:
        return Path(out)
    env = os.environ.get(OUT_ENV)
    if env:
        return Path(env) / sc.name
    if sc.out:
        return Path(sc.out)
    return Path("projmeas-out") / sc.name


def run_scenario(path, out=None, workers: int = 1):
    """Parse, run, and report one scenario.  Returns ``(exit_code, summary)``.

    Parse and validation failures raise :class:`ScenarioError` (with the line
    number when known).
    """
    sc = path if isinstance(path, Scenario) else load_scenario(path)
    return run_parsed(sc, out, workers)


def run_parsed(sc: Scenario, out=None, workers: int = 1):
    results = execute(sc, workers)
    code = exit_code(results)
    E = sc.ensemble
    meta = {"scenario": sc.name, "source": sc.source, "seed": sc.seed,
            "ensemble": {"name": E.name, "dim": E.dim, "atoms": E.size, "mode": E.mode},
            "exit_code": code}
    summary = emit_report(results, resolve_out(sc, out), meta)
    return code, summary
