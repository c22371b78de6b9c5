"""Command line entry point: ``projmeas <task> ...`` or ``projmeas run <scenario>``.

Single-task subcommands build a one-task scenario in memory, so they share
validation and report layout with ``run``.  Exit codes: 0 success, 2 some
verdict UNDECIDED, 1 errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import yaml

from . import gallery
from .errors import ProjmeasError
from .scenario import TASKS, parse_scenario, run_parsed, shipped_scenarios, load_scenario


def _indices(text):
    return [int(t) for t in text.split(",") if t.strip()]


def _vector(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _common(p):
    p.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
    p.add_argument("--workers", type=int, default=1, help="worker processes for trial-parallel loops")
    p.add_argument("--out", help="output directory (overrides $PROJMEAS_OUT)")


def _ensemble_args(p):
    p.add_argument("ensemble", help="gallery name or path to an ensemble JSON file")
    p.add_argument("--mode", choices=["float", "rational"], help="arithmetic mode")
    _common(p)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="projmeas", description="Stationary measures of random matrix products.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a scenario file or a shipped scenario by name")
    p.add_argument("scenario")
    _common(p)

    sub.add_parser("list", help="list gallery ensembles and shipped scenarios")

    p = sub.add_parser("spectrum", help="Lyapunov spectrum")
    _ensemble_args(p)
    p.add_argument("--n-steps", type=int)
    p.add_argument("--n-trials", type=int)
    p.add_argument("--restrict", type=_indices, help="coordinate indices of an invariant subspace")
    p.add_argument("--quotient", type=_indices, help="coordinate indices of an invariant subspace")

    p = sub.add_parser("filtration", help="invariant lattice and filtration with exponents")
    _ensemble_args(p)
    p.add_argument("--n-steps", type=int)

    p = sub.add_parser("stationary", help="Cesaro or backward-limit empirical measure")
    _ensemble_args(p)
    p.add_argument("--method", choices=["cesaro", "backward"])
    p.add_argument("--n", type=int)
    p.add_argument("--burn-in", type=int)
    p.add_argument("--thinning", type=int)
    p.add_argument("--cap", type=int)
    p.add_argument("--x0", type=_vector, help="comma-separated start vector")
    p.add_argument("--compare-seed", type=int)

    p = sub.add_parser("escape", help="Cesaro mass near P(W) over a checkpoint schedule")
    _ensemble_args(p)
    p.add_argument("--subspace", type=_indices, required=True, help="coordinate indices spanning W")
    p.add_argument("--x0", type=_vector)
    p.add_argument("--delta", type=float)
    p.add_argument("--schedule", type=_indices)
    p.add_argument("--n-chains", type=int)

    p = sub.add_parser("lift", help="decide lift existence off P(W)")
    _ensemble_args(p)
    p.add_argument("--subspace", type=_indices, required=True, help="coordinate indices spanning W")
    p.add_argument("--nubar", type=_indices, help="coordinate indices spanning V_nubar (default: all of V/W)")
    p.add_argument("--n-steps", type=int)

    p = sub.add_parser("critical", help="support-span semisimplicity in the critical case")
    _ensemble_args(p)
    p.add_argument("--n", type=int)
    p.add_argument("--n-steps", type=int)

    p = sub.add_parser("orbit", help="compact-orbit probe from a point")
    _ensemble_args(p)
    p.add_argument("--x", type=_vector, required=True)
    p.add_argument("--n-samples", type=int)
    p.add_argument("--n-steps", type=int)

    p = sub.add_parser("recurrence", help="norm-ratio recurrence probe between two blocks")
    _ensemble_args(p)
    p.add_argument("--a", default="full", help="full, restrict:I,J or quotient:I,J")
    p.add_argument("--b", default="full", help="full, restrict:I,J or quotient:I,J")
    p.add_argument("--n-steps", type=int)
    p.add_argument("--lyapunov-steps", type=int)
    p.add_argument("--band", type=float)
    p.add_argument("--every", type=int)
    return ap


def _ensemble_spec(args):
    spec = {"gallery": args.ensemble} if args.ensemble in gallery.GALLERY else {"file": str(Path(args.ensemble).resolve())}
    if args.mode:
        spec["mode"] = args.mode
    return spec


def _block(text, subspaces):
    if text == "full":
        return "full"
    kind, _, idx = text.partition(":")
    name = f"{kind}_{idx.replace(',', '_')}"
    subspaces[name] = {"coordinate": _indices(idx)}
    return {"subspace": name, "kind": kind}


def scenario_doc(args) -> dict:
    """Scenario mapping equivalent to one single-task command line."""
    cmd = args.command
    subspaces, points, params = {}, {}, {}
    skip = {"command", "ensemble", "mode", "seed", "workers", "out"}
    for key, value in vars(args).items():
        if key in skip or value is None:
            continue
        if key in ("restrict", "subspace", "quotient", "nubar"):
            subspaces[key] = {"coordinate": value}
            params["subspace" if key == "restrict" else key] = key
        elif key in ("x0", "x"):
            points[key] = value
            params[key] = key
        elif key in ("a", "b"):
            params[key] = _block(value, subspaces)
        else:
            params[key] = value
    unknown = set(params) - set(TASKS[cmd])
    if unknown:
        raise ProjmeasError(f"unsupported options for {cmd}: {sorted(unknown)}")
    doc = {"name": cmd, "seed": args.seed, "ensemble": _ensemble_spec(args), "tasks": [{cmd: params}]}
    if subspaces:
        doc["subspaces"] = subspaces
    if points:
        doc["points"] = points
    return doc


def _table(summary) -> str:
    rows = [("#", "task", "verdict", "files")]
    for i, t in enumerate(summary["tasks"], 1):
        rows.append((str(i), t["task"], str(t["verdict"] or "-"), " ".join(t["files"])))
    widths = [max(len(r[c]) for r in rows) for c in range(3)]
    lines = ["  ".join(r[c].ljust(widths[c]) for c in range(3)) + "  " + r[3] for r in rows]
    lines.append(f"exit code {summary['exit_code']}")
    return "\n".join(lines)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "list":
            print("gallery:", " ".join(gallery.names()))
            print("scenarios:", " ".join(shipped_scenarios()))
            return 0
        if args.command == "run":
            sc = load_scenario(args.scenario)
        else:
            sc = parse_scenario(yaml.safe_dump(scenario_doc(args), sort_keys=False), f"<{args.command}>")
        code, summary = run_parsed(sc, args.out, args.workers)
    except ProjmeasError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(_table(summary))
    for t in summary["tasks"]:
        if t["verdict"] == "ERROR":
            print(f"task {t['task']} failed; see {t['files'][0]}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
