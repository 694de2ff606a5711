"""Command-line entry point.

Exit codes: 0 success, 2 invalid configuration or arguments, 3 numerical
failure (a single computation failed, or every sweep point errored).
"""
from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .invariants import (S3_BOUNDS, S4_BOUNDS, SPHERE2D_BOUNDS, QuadratureGrid, dd_invariant,
                         first_chern_4d, nt_chern_2d, second_chern, thermal_chern_2d)
from .geometry import uhlmann_phase
from .models import Embedding, Family, ModelSpec
from .numerics import NumericsError
from .sweeps import FIGURES, ConfigError, emit_figure, render_csv, run_config_file
from .thermal import CONVENTIONS

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _grid(text: str | None, bounds):
    if text is None:
        return None
    try:
        dims = tuple(int(n) for n in text.lower().split("x"))
    except ValueError as exc:
        raise ConfigError(f"grid must look like 200x400, got {text!r}") from exc
    if len(dims) != len(bounds):
        raise ConfigError(f"grid needs {len(bounds)} sizes")
    return QuadratureGrid(dims, bounds)


def _add_model_flags(p, model_choices, default_model, radius_default=2.0):
    p.add_argument("--model", choices=model_choices, default=default_model)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--temperature", type=float, default=0.5)
    p.add_argument("--radius", type=float, default=radius_default)
    p.add_argument("--weight-convention", choices=CONVENTIONS, default="abs")
    p.add_argument("--threads", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mixtopo", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phase", help="Uhlmann phase of a loop")
    _add_model_flags(p, ["NH2", "NH4"], "NH2")
    p.add_argument("--displacement", type=float, default=2.5)
    p.add_argument("--windings", type=int, default=2)
    p.add_argument("--samples", type=int, default=800)

    p = sub.add_parser("chern", help="thermal and NT Chern numbers on the two-sphere")
    _add_model_flags(p, ["NH2"], "NH2")
    p.add_argument("--grid")

    p = sub.add_parser("dd", help="thermal and NT DD invariants on the three-sphere")
    _add_model_flags(p, ["NH3", "Hermitian3"], "Hermitian3", radius_default=1.0)
    p.add_argument("--grid")

    p = sub.add_parser("chern2", help="first and second Chern numbers on the four-sphere")
    _add_model_flags(p, ["NH4"], "NH4")
    p.add_argument("--grid")

    p = sub.add_parser("sweep", help="run a sweep described by a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("figure", help="regenerate figure data, plot script and PNG")
    p.add_argument("figure_id", choices=FIGURES)
    p.add_argument("--out", default=".")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--no-plot", action="store_true")

    p = sub.add_parser("check", help="run the algebra and cross-check suites")
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    return ap


def _print(obj):
    print(json.dumps(obj, indent=2, sort_keys=True, default=float))


def _cmd_phase(a):
    emb = Embedding.LOOP2D if a.model == "NH2" else Embedding.LOOP4D
    spec = ModelSpec(Family(a.model), emb, gamma=a.gamma, r=a.radius, d=a.displacement)
    hol = uhlmann_phase(spec, a.windings, a.temperature, a.samples, a.weight_convention)
    _print({"phase": hol.phase, "unwrapped_phase": hol.unwrapped_phase})


def _cmd_chern(a):
    spec = ModelSpec(Family.NH2, Embedding.SPHERE2D, gamma=a.gamma, R=a.radius)
    g = _grid(a.grid, SPHERE2D_BOUNDS)
    w = thermal_chern_2d(spec, a.radius, a.temperature, g, a.weight_convention, threads=a.threads)
    nt = nt_chern_2d(spec, a.radius, a.temperature, g, a.weight_convention, threads=a.threads)
    _print({"C_U": w.value, "C_U_refinement_delta": w.refinement_delta,
            "C_U_nt": nt.value, "excluded": w.excluded_points})


def _cmd_dd(a):
    spec = ModelSpec(Family(a.model), Embedding.S3, gamma=a.gamma, R=a.radius)
    g = _grid(a.grid, S3_BOUNDS)
    w = dd_invariant(spec, a.radius, a.temperature, g, True, a.weight_convention, threads=a.threads)
    nt = dd_invariant(spec, a.radius, a.temperature, g, False, a.weight_convention, refine=False,
                      threads=a.threads)
    _print({"DD_B": w.value, "DD_B_refinement_delta": w.refinement_delta, "DD_B_nt": nt.value,
            "excluded": w.excluded_points})


def _cmd_chern2(a):
    spec = ModelSpec(Family.NH4, Embedding.S4, gamma=a.gamma, R=a.radius)
    g = _grid(a.grid, S4_BOUNDS)
    c1 = first_chern_4d(spec, a.radius, a.temperature, convention=a.weight_convention)
    w = second_chern(spec, a.radius, a.temperature, g, True, a.weight_convention, threads=a.threads)
    nt = second_chern(spec, a.radius, a.temperature, None, False, a.weight_convention,
                      threads=a.threads)
    _print({"C_U1": c1.value, "C_U2": w.value, "C_U2_refinement_delta": w.refinement_delta,
            "C_U2_nt": nt.value, "C_U2_nt_oracle_4d": nt.extras["oracle_4d"]})


def _cmd_sweep(a):
    config, recs = run_config_file(a.config, a.out, a.threads)
    sys.stdout.write(render_csv({config.label or config.invariant: recs}))
    if recs and all(r.error for r in recs):
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_figure(a):
    res = emit_figure(a.figure_id, a.out, a.threads, plot=not a.no_plot)
    for key, path in res["paths"].items():
        print(f"{key}: {path}")
    if res["crossings"]:
        print("crossings: " + ", ".join(f"{x:.4f}" for x in res["crossings"]))
    recs = [r for s in res["series"].values() for r in s]
    if recs and all(r.error for r in recs):
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_check(a):
    from .checks import run_checks
    results = run_checks(np.random.default_rng(a.seed), a.points)
    ok = True
    for name, passed, detail in results:
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
    return EXIT_OK if ok else EXIT_NUMERIC


COMMANDS = {"phase": _cmd_phase, "chern": _cmd_chern, "dd": _cmd_dd, "chern2": _cmd_chern2,
            "sweep": _cmd_sweep, "figure": _cmd_figure, "check": _cmd_check}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        code = COMMANDS[args.command](args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericsError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
