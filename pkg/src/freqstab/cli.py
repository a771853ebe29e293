"""Command-line entry point ``freqstab``.

Exit status: 0 on success, 1 on invalid input or usage, 2 when an
identification cannot be carried out.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from .errors import FreqStabError, SolverFailure, UnidentifiableInput
from .io import ResultBundle, dump_json, parse_config, read_results, read_trace_csv, write_results, write_trace_csv
from .pipeline import (
    channel_metrics,
    identify_project_grid,
    identify_units,
    model_trace,
    scenario_trace,
    unit_model_traces,
    with_area_params,
    with_unit_params,
)
from .synth import SynthSpec, generate

SEED_ENV = "FREQSTAB_SEED"
EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2


class _Usage(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _Usage(f"{self.prog}: error: {message}")


def _seed(args, default: int) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None or env == "":
        return default
    try:
        return int(env)
    except ValueError:
        raise _Usage(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _ident_cfg(project, args):
    cfg = replace(project.ident, rng_seed=_seed(args, project.ident.rng_seed))
    if getattr(args, "starts", None) is not None:
        cfg = replace(cfg, n_starts=args.starts)
    return cfg


def _cmd_simulate(args) -> int:
    project = parse_config(args.config)
    tr = scenario_trace(project, project.scenario(args.scenario))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{args.scenario}.csv"
    write_trace_csv(tr, path)
    print(path)
    return EXIT_OK


def _cmd_gen_synth(args) -> int:
    project = parse_config(args.config)
    spec = SynthSpec(project.area_specs(), project.scenario(args.scenario), project.ties, project.base,
                     noise_std=args.noise, seed=_seed(args, project.ident.rng_seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "measured.csv"
    write_trace_csv(generate(spec), path)
    print(path)
    return EXIT_OK


def _cmd_identify_units(args) -> int:
    project = parse_config(args.config)
    measured = read_trace_csv(args.traces)
    results = identify_units(project, measured, _ident_cfg(project, args))
    fitted = with_unit_params(project, {n: r.best_params for n, r in results.items()})
    model = unit_model_traces(fitted, measured)
    bundle = ResultBundle(units=results, metrics=channel_metrics(model, measured), traces={"model": model})
    write_results(bundle, args.out)
    print(dump_json({n: r.best_params for n, r in results.items()}), end="")
    return EXIT_OK


def _cmd_identify_grid(args) -> int:
    project = parse_config(args.config)
    measured = read_trace_csv(args.traces)
    if args.units:
        units = read_results(args.units).get("units", {})
        project = with_unit_params(project, {n: u["params"] for n, u in units.items()})
    result = identify_project_grid(project, measured, _ident_cfg(project, args))
    fitted = with_area_params(project, result.best_params)
    model = model_trace(fitted, measured)
    bundle = ResultBundle(grid=result, metrics=channel_metrics(model, measured), traces={"model": model})
    write_results(bundle, args.out)
    print(dump_json(bundle.to_dict()["grid"]["areas"]), end="")
    return EXIT_OK


def _cmd_metrics(args) -> int:
    m = channel_metrics(read_trace_csv(args.model), read_trace_csv(args.measured))
    if args.out:
        write_results(ResultBundle(metrics=m), args.out)
    print(dump_json(m), end="")
    return EXIT_OK


def _cmd_bounds(args) -> int:
    project = parse_config(args.config)
    b = project.grid_bounds()
    rows = [{"area": a.id, "H": list(b.to_dict()[f"H_{a.id}"]), "D": list(b.to_dict()[f"D_{a.id}"])}
            for a in project.areas]
    print(dump_json(rows), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="freqstab", description="Frequency-response modelling and identification of multi-area grids.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def seed(sp):
        sp.add_argument("--seed", type=int, default=None,
                        help=f"random seed; defaults to ${SEED_ENV}, then the config value")

    s = sub.add_parser("simulate", help="simulate a configured scenario")
    s.add_argument("config")
    s.add_argument("scenario")
    s.add_argument("--out", default=".", help="output directory (default: current)")
    s.set_defaults(func=_cmd_simulate)

    s = sub.add_parser("gen-synth", help="generate a synthetic measured trace")
    s.add_argument("config")
    s.add_argument("scenario")
    s.add_argument("--noise", type=float, default=0.0, help="white noise std in pu (default 0)")
    s.add_argument("--out", default=".", help="output directory for measured.csv")
    seed(s)
    s.set_defaults(func=_cmd_gen_synth)

    s = sub.add_parser("identify-units", help="step 1: fit unit parameters")
    s.add_argument("config")
    s.add_argument("traces")
    s.add_argument("--out", default="units", help="result directory")
    s.add_argument("--starts", type=int, default=None, help="override the number of starts")
    seed(s)
    s.set_defaults(func=_cmd_identify_units)

    s = sub.add_parser("identify-grid", help="step 2: fit area inertia and damping")
    s.add_argument("config")
    s.add_argument("traces")
    s.add_argument("--units", default=None, help="results.json of identify-units to use for the unit models")
    s.add_argument("--out", default="grid", help="result directory")
    s.add_argument("--starts", type=int, default=None, help="override the number of starts")
    seed(s)
    s.set_defaults(func=_cmd_identify_grid)

    s = sub.add_parser("metrics", help="R² and RMS error per shared channel")
    s.add_argument("model")
    s.add_argument("measured")
    s.add_argument("--out", default=None, help="also write results.json here")
    s.set_defaults(func=_cmd_metrics)

    s = sub.add_parser("bounds", help="print the resolved H and D bounds per area")
    s.add_argument("config")
    s.set_defaults(func=_cmd_bounds)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _Usage as e:
        print(e, file=sys.stderr)
        return EXIT_INVALID
    except (UnidentifiableInput, SolverFailure) as e:
        print(f"freqstab: identification failed: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except FreqStabError as e:
        print(f"freqstab: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
