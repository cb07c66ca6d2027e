"""Command-line interface.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O failure.
"""
import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, io, pipeline
from .doc import SimStudyConfig, run_sim_study
from .scmc import ConstraintSpec

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("docemu")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")


def _pair(text):
    vals = _float_list(text)
    if len(vals) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}")
    return vals


# --- subcommand handlers -------------------------------------------------

def cmd_sample_simplex(args):
    spec = ConstraintSpec.from_dict(io.load_json_arg(args.bounds))
    points = pipeline.stage_sample_simplex(spec, args.n, args.seed)
    io.write_points(args.out, points)


def cmd_design(args):
    if args.bounds:
        spec = ConstraintSpec.from_dict(io.load_json_arg(args.bounds))
        if not args.or_grid:
            raise ValueError("--or-grid is required with --bounds")
        design, cover = pipeline.stage_design(spec, args.k, args.or_grid, args.seed,
                                              args.kind, args.n_cover)
        if args.cover_out:
            io.write_points(args.cover_out, cover)
    elif args.p0_range:
        if not (args.or_range and args.grid):
            raise ValueError("--p0-range needs --or-range and --grid")
        design = pipeline.stage_grid_design(args.p0_range, args.or_range,
                                            int(args.grid[0]), int(args.grid[1]), args.kind)
    else:
        raise ValueError("give either --bounds (simplex design) or --p0-range (binary grid)")
    io.write_design(args.out, design)


def cmd_simulate(args):
    design = io.read_design(args.design)
    extra = io.load_json_arg(args.trial) if args.trial else {}
    trial = dict(extra, n_total=args.n, replicates=args.replicates,
                 posterior_draws=args.posterior_draws)
    tc = pipeline.RunConfig(seed=args.seed, model=args.model, trial=trial).trial_config()
    samples = pipeline.stage_simulate(design, args.model, tc, args.threads)
    io.write_pi_samples(args.out, samples)


def cmd_fit(args):
    design = io.read_design(args.design)
    pis = io.read_pi_samples(args.pi_samples)
    if len(pis) != len(design):
        raise ValueError(f"{len(pis)} pi samples for {len(design)} design points")
    params = io.load_json_arg(args.emulator) if args.emulator else {}
    em = pipeline.stage_fit(design, pis, args.seed, **params)
    io.write_json(args.out, pipeline.model_document(em, design))


def cmd_predict(args):
    em, _ = pipeline.load_model(args.model)
    test = io.read_design(args.test)
    preds = pipeline.stage_predict(em, test, args.draws, args.seed)
    pipeline.write_predictions(args.out, test, preds)


def cmd_doc(args):
    em, _ = pipeline.load_model(args.model)
    test = io.read_design(args.test)
    stat = {"sup": "superiority", "fut": "futility"}[args.stat]
    est = pipeline.stage_doc(em, test, stat, args.threshold, args.draws, args.seed)
    pipeline.write_doc(args.out, test, est)


def cmd_simstudy(args):
    conf = io.load_json_arg(args.config) if args.config else {}
    if args.seed is not None:
        conf["seed"] = args.seed
    report = run_sim_study(SimStudyConfig.from_dict(conf),
                           progress=lambda r: log.info("replication %d complete", r))
    pipeline.write_simstudy(args.out, report)
    log.info("mean rmse %.4f, mean |bias| %.4f", report.mean_rmse, report.mean_abs_bias)


def cmd_run(args):
    conf = io.load_json_arg(args.config)
    if args.seed is not None:
        conf["seed"] = args.seed
    manifest = pipeline.run_pipeline(pipeline.RunConfig.from_dict(conf), args.out, args.threads)
    log.info("wrote %d artifacts to %s", len(manifest["artifacts"]), args.out)


def cmd_figures(args):
    ids = pipeline.FIGURES if args.figure == "all" else [args.figure]
    out = Path(args.out) if args.out else Path(args.run_dir) / "figures"
    for fig in ids:
        try:
            path = pipeline.emit_figure_data(args.run_dir, fig, out / f"{fig}.csv", args.threshold)
        except pipeline.MissingStageError as exc:
            if args.figure != "all":
                raise
            log.warning("skipping %s: %s", fig, exc)
            continue
        print(path)


# --- parser --------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="docemu", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample-simplex", help="SCMC sample of the constrained simplex")
    s.add_argument("--bounds", required=True, help="JSON with 'lower' and 'upper' (inline or path)")
    s.add_argument("--n", type=int, default=2000)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample_simplex)

    s = sub.add_parser("design", help="space-filling design crossed with an OR grid")
    s.add_argument("--bounds", help="JSON box constraints for the ordinal simplex design")
    s.add_argument("--k", type=int, default=20)
    s.add_argument("--or-grid", type=_float_list)
    s.add_argument("--n-cover", type=int, default=2000, help="size of the covering sample")
    s.add_argument("--cover-out", help="also write the covering sample to this CSV")
    s.add_argument("--p0-range", type=_pair, help="binary grid: p0 range lo,hi")
    s.add_argument("--or-range", type=_pair, help="binary grid: OR range lo,hi")
    s.add_argument("--grid", type=_pair, help="binary grid: n_p0,n_or")
    s.add_argument("--kind", choices=("training", "test"), default="training")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_design)

    s = sub.add_parser("simulate", help="simulate trials at each design point")
    s.add_argument("--design", required=True)
    s.add_argument("--model", choices=("binary", "ordinal"), required=True)
    s.add_argument("--n", type=int, default=1000, help="total sample size")
    s.add_argument("--replicates", type=int, default=1000)
    s.add_argument("--posterior-draws", type=int, default=2000)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--trial", help="JSON of extra sampler settings and priors (inline or path)")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("fit", help="fit Beta shapes and GP surfaces")
    s.add_argument("--pi-samples", required=True)
    s.add_argument("--design", required=True)
    s.add_argument("--seed", type=int, default=0, help="seeds the optimizer restarts")
    s.add_argument("--emulator", help="JSON of emulator settings (inline or path)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("predict", help="predictive (a, b) draws at test points")
    s.add_argument("--model", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--draws", type=int, default=1000)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("doc", help="emulated operating characteristic with intervals")
    s.add_argument("--model", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--stat", choices=("sup", "fut"), required=True)
    s.add_argument("--threshold", type=float, required=True)
    s.add_argument("--draws", type=int, default=1000)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_doc)

    s = sub.add_parser("simstudy", help="repeated binary emulation study")
    s.add_argument("--config", help="JSON study settings (inline or path)")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simstudy)

    s = sub.add_parser("run", help="full pipeline from one JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int, help="overrides the config seed")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("figures", help="long-format data behind each figure")
    s.add_argument("--run-dir", required=True)
    s.add_argument("--figure", choices=("all",) + pipeline.FIGURES, default="all")
    s.add_argument("--threshold", type=float, default=0.95)
    s.add_argument("--out", help="directory for the CSVs (default RUN_DIR/figures)")
    s.set_defaults(func=cmd_figures)
    return p


def exit_code_for(exc):
    """Map an exception (following its cause chain) to an exit code."""
    seen = exc
    while seen is not None:
        if isinstance(seen, (ArithmeticError, np.linalg.LinAlgError)):
            return EXIT_NUMERIC
        if isinstance(seen, OSError):
            return EXIT_IO
        if isinstance(seen, (ValueError, KeyError, TypeError, json.JSONDecodeError)):
            return EXIT_CONFIG
        seen = seen.__cause__
    return EXIT_NUMERIC


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except Exception as exc:
        stage = f" [{exc.stage}]" if isinstance(exc, pipeline.PipelineError) else ""
        print(f"docemu {args.command}{stage}: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
