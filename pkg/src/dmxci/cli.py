"""Command-line entry point.

Exit status: 0 success, 2 invalid input, 3 numeric failure. The worker
count for scenario-level parallelism comes from ``DMXCI_WORKERS``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .analysis import NonPeriodicError
from .campaign import MissingTraceError, correlation_sets, run_many, run_paper_matrix
from .config import Config, ConfigError, load_config
from .gnmodel import GnConvergenceError
from .report import (
    read_summary_metadata, read_traces, summary, trace_asymptotes, write_dispersion_map,
    write_json, write_scatter, write_traces,
)

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("dmxci")


class NumericFailure(RuntimeError):
    pass


def _config(args) -> Config:
    cfg = load_config(args.config) if getattr(args, "config", None) else Config()
    return cfg.with_overrides(getattr(args, "seed", None), getattr(args, "scale", None), getattr(args, "out", None))


def _provenance(cfg: Config) -> dict:
    return {"config_hash": cfg.hash(), "seed": cfg.campaign.seed, "code_version": __version__}


def _outdir(cfg: Config) -> Path:
    return Path(cfg.output.directory)


def _emit(cfg: Config, traces, failures) -> None:
    out, prov = _outdir(cfg), _provenance(cfg)
    write_traces(out / cfg.output.traces, traces, prov)
    write_json(out / cfg.output.summary, summary(traces, correlation_sets(traces), prov, failures))
    print(f"wrote {len(traces)} trace(s) to {out / cfg.output.traces}")


def cmd_run(args) -> int:
    cfg = _config(args)
    traces, failures = run_many(cfg.scenarios(), args.workers)
    _emit(cfg, traces, failures)
    if failures:
        raise NumericFailure("; ".join(f["error"] for f in failures))
    return EXIT_OK


def cmd_gn(args) -> int:
    cfg = _config(args)
    cfg = replace(cfg, campaign=replace(cfg.campaign, modes=("ign",)))
    scn = cfg.scenarios()
    traces, failures = run_many(scn, 1)
    if failures:
        raise NumericFailure(failures[0]["error"])
    t = traces[0]
    print("span  sigma2_dbm  p_xci_dbm  snr_xci_db")
    for k in range(len(t)):
        print(f"{int(t.span_index[k]):4d}  {t.delta_p_db[k]:10.3f}  {t.p_xci_dbm[k]:9.3f}  {t.snr_xci_db[k]:10.3f}")
    _emit(cfg, traces, [])
    return EXIT_OK


def cmd_matrix(args) -> int:
    cfg = _config(args)
    res = run_paper_matrix(
        scale=cfg.campaign.scale, seed=cfg.campaign.seed, plan=cfg.channels, rx=cfg.rx,
        policy=cfg.policy(), n_symbols=cfg.n_symbols(), workers=args.workers, gn=cfg.gn,
    )
    out = _outdir(cfg)
    write_traces(out / cfg.output.traces, res.traces, res.provenance)
    write_json(out / cfg.output.summary, summary(res.traces, res.correlations, res.provenance, res.failures))
    rows = write_scatter(out / cfg.output.scatter, res.correlations, res.provenance)
    print(f"wrote {len(res.traces)} trace(s) and {rows} scatter row(s) to {out}")
    if res.failures:
        raise NumericFailure(f"{len(res.failures)} scenario(s) failed; partial results were written")
    return EXIT_OK


def cmd_dispersion_map(args) -> int:
    cfg = _config(args)
    path = _outdir(cfg) / cfg.output.dispersion_map
    write_dispersion_map(path, cfg.segment.build(), _provenance(cfg))
    print(f"wrote {path}")
    return EXIT_OK


def _load_traces(args):
    src = Path(args.traces)
    if not src.is_file():
        raise ConfigError(f"trace file not found: {src}")
    meta_path = Path(args.summary) if args.summary else src.with_name("summary.json")
    if not meta_path.is_file():
        raise ConfigError(f"summary file not found: {meta_path} (needed for scenario metadata)")
    return read_traces(src, read_summary_metadata(meta_path))


def cmd_scatter(args) -> int:
    prov, traces = _load_traces(args)
    sets = correlation_sets(traces, strict=True)
    if not sets:
        raise MissingTraceError("no cumulative/intrinsic trace pairs in the input")
    out = Path(args.output) if args.output else Path(args.traces).with_name("scatter.csv")
    rows = write_scatter(out, sets, prov)
    print(f"wrote {rows} scatter row(s) to {out}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    prov, traces = _load_traces(args)
    doc = {
        "provenance": prov,
        "traces": [
            {"key": f"{t.scenario_id}/{t.mode}", "asymptotes": trace_asymptotes(t, args.tail, args.band_db)}
            for t in traces
        ],
    }
    if args.output:
        write_json(args.output, doc)
    else:
        json.dump(doc, sys.stdout, indent=2)
        sys.stdout.write("\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dmxci", description="XCI memory-effect simulation campaign")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def overrides(sp, config_required=True):
        if config_required:
            sp.add_argument("config", help="JSON configuration file")
        else:
            sp.add_argument("--config", help="JSON configuration file (defaults when omitted)")
        sp.add_argument("--seed", type=int, help="override campaign.seed")
        sp.add_argument("--scale", choices=("desk", "full"), help="override campaign.scale")
        sp.add_argument("--out", help="override output.directory")

    sp = sub.add_parser("run", help="run the configured scenario traces")
    overrides(sp)
    sp.add_argument("--workers", type=int, help="worker processes (default: DMXCI_WORKERS or 1)")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("matrix", help="run the full six-panel matrix plus correlation runs")
    overrides(sp, config_required=False)
    sp.add_argument("--workers", type=int, help="worker processes (default: DMXCI_WORKERS or 1)")
    sp.set_defaults(func=cmd_matrix)

    sp = sub.add_parser("gn", help="incoherent GN-model trace of the configured segment")
    overrides(sp)
    sp.set_defaults(func=cmd_gn)

    sp = sub.add_parser("dispersion-map", help="accumulated dispersion per stage")
    overrides(sp)
    sp.set_defaults(func=cmd_dispersion_map)

    for name, func, helptext in (
        ("scatter", cmd_scatter, "coherency coefficients against normalized dispersion"),
        ("analyze", cmd_analyze, "asymptote levels and settling spans of stored traces"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("traces", help="trace CSV written by run or matrix")
        sp.add_argument("--summary", help="JSON summary with scenario metadata (default: next to the CSV)")
        sp.add_argument("-o", "--output", help="output file")
        if name == "analyze":
            sp.add_argument("--tail", type=int, default=3, help="spans averaged for the asymptote")
            sp.add_argument("--band-db", type=float, default=0.5, help="settling band")
        sp.set_defaults(func=func)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return args.func(args)
    except (ConfigError, MissingTraceError, NonPeriodicError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericFailure, GnConvergenceError, ArithmeticError, RuntimeError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
