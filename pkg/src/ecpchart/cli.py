"""``ecpchart`` command line.

Exit codes: 0 ok, 2 usage, 3 validation or I/O, 4 calibration did not
converge, 5 monitoring raised a signal.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__, _kernels
from .chart import DEFAULT_SEED, Variant, make_limits
from .config import digest, load_config, public, resolve
from .engine import STREAMS, calibrate_l, estimate_arl, make_shift
from .errors import CalibrationError, ChartError, ValidationError
from .misclass import ValidationCounts, correct_proportion, estimate_pi
from .monitor import ingest_counts, p0_star_from_data, run_chart, write_chart
from . import reproduce

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NONCONVERGENCE, EXIT_SIGNAL = 0, 2, 3, 4, 5

log = logging.getLogger("ecpchart")


class UsageError(Exception):
    pass


def _emit(text, out):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _manifest(args, command, resolved=None, **extra):
    if not getattr(args, "manifest", None):
        return
    doc = {
        "command": command,
        "tool_version": __version__,
        "backend": _kernels.BACKEND,
        "elapsed_seconds": round(time.perf_counter() - args._t0, 3),
    }
    if resolved is not None:
        doc.update(config_digest=digest(resolved), seed=resolved["seed"], M=resolved["replicates"],
                   config=public(resolved))
    doc.update(extra)
    Path(args.manifest).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _stream(args, resolved):
    return args.stream or resolved["stream"]


def cmd_calibrate(args):
    resolved = resolve(load_config(args.config))
    cfg, pi = resolved["_cfg"], resolved["_pi"]
    stream = _stream(args, resolved)
    results = []
    ok = True
    for variant in resolved["variants"]:
        try:
            cal = calibrate_l(variant, cfg, pi, stream=stream, threads=args.threads)
        except CalibrationError as exc:
            log.error("%s: %s", variant, exc)
            cal, ok = exc.result, False
        entry = {"limits": make_limits(variant, cal.l_star, cfg, pi).to_dict(), "calibration": cal.to_dict()}
        results.append(entry)
    doc = {"stream": stream, "config": public(resolved), "results": results}
    _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", args.out)
    _manifest(args, "calibrate", resolved)
    return EXIT_OK if ok else EXIT_NONCONVERGENCE


def _parse_deltas(text):
    if text is None:
        return None
    items = [s for s in text.split(",") if s.strip()]
    if not items:
        raise UsageError("--delta needs at least one value")
    try:
        return [float(s) for s in items]
    except ValueError:
        raise UsageError(f"bad --delta list {text!r}") from None


def cmd_arl(args):
    resolved = resolve(load_config(args.config))
    cfg, pi = resolved["_cfg"], resolved["_pi"]
    stream = _stream(args, resolved)
    deltas = _parse_deltas(args.delta)
    if deltas is None:
        deltas = resolved["deltas"]
    if not deltas:
        raise UsageError("no shifts given: pass --delta or set 'deltas' in the config")
    lines = ["variant,delta,p1,p1_star,L,arl,std_error,censored,replicates"]
    for variant in resolved["variants"]:
        if args.calibrate:
            l_val = calibrate_l(variant, cfg, pi, stream=stream, threads=args.threads).l_star
        elif variant in resolved["L"]:
            l_val = resolved["L"][variant]
        else:
            raise UsageError(f"no L for variant {variant!r} in the config; add it or pass --calibrate")
        for delta in deltas:
            shift = make_shift(cfg.p0, delta, pi)
            est = estimate_arl(variant, l_val, cfg, pi, p=shift.p1, stream=stream, threads=args.threads)
            lines.append(",".join([variant, f"{delta:.6g}", f"{shift.p1:.6g}", f"{shift.p1_star:.6g}", f"{l_val:.6g}",
                                   f"{est.mean_rl:.6g}", f"{est.std_error:.6g}", str(est.censored),
                                   str(est.replicates)]))
    _emit("\n".join(lines) + "\n", args.out)
    _manifest(args, "arl", resolved, deltas=deltas, stream=stream)
    return EXIT_OK


def cmd_simulate(args):
    table = args.table
    if table not in range(1, 9):
        raise UsageError(f"unknown table id {table}; expected 1-8")
    cells = reproduce.parse_cells(args.cells)
    seed = DEFAULT_SEED if args.seed is None else args.seed

    def progress(rec):
        log.info("table %s n=%s p0=%s %s: %s", rec["table"], rec["n"], rec["p0"], rec["variant"], rec["status"])

    if table <= 4:
        records, p0s = reproduce.reproduce_limits(table, cells, args.m, seed, args.stream, args.threads, progress)
        text = reproduce.limits_csv(table, records, p0s)
    else:
        records, p0s = reproduce.reproduce_arl1(table, cells, args.m, seed, args.stream, args.threads, progress)
        text = reproduce.arl1_csv(table, records, p0s)
    if not records:
        raise UsageError("--cells selects no table cells")
    _emit(text, args.out)
    diff = reproduce.diff_csv(reproduce.diff_report(table, records))
    if args.diff:
        Path(args.diff).write_text(diff, encoding="utf-8")
    else:
        sys.stderr.write(diff)
    lam, pi_val = reproduce.TABLE_PARAMS[table]
    _manifest(args, "simulate", None, seed=seed, M=args.m, stream=args.stream,
              grid={"table": table, "lambda": lam, "pi": pi_val, "cells": args.cells or "all"})
    failed = [r for r in records if r["status"] != "ok"]
    return EXIT_NONCONVERGENCE if failed else EXIT_OK


def cmd_monitor(args):
    raw = load_config(args.config)
    series = ingest_counts(args.data)
    if args.p0_from_data:
        raw.pop("p0", None)
        raw["p0_star"] = p0_star_from_data(series, args.ic_phase)
    resolved = resolve(raw)
    cfg, pi = resolved["_cfg"], resolved["_pi"]
    if args.phase:
        series = series.select(args.phase)
    variant = Variant.parse(args.variant).value
    if variant in resolved["L"]:
        l_val = resolved["L"][variant]
    else:
        l_val = calibrate_l(variant, cfg, pi, stream=_stream(args, resolved), threads=args.threads).l_star
    limits = make_limits(variant, l_val, cfg, pi)
    cs = run_chart(series, limits)
    _emit(cs.to_csv(), args.out)
    if args.render:
        write_chart(cs, args.render)
    _manifest(args, "monitor", resolved, data=str(args.data), variant=variant, first_signal=cs.first_signal)
    if cs.first_signal is not None:
        log.warning("signal raised at period %s (%d signalling periods)", cs.first_signal, cs.n_signals)
        return EXIT_SIGNAL
    return EXIT_OK


def cmd_estimate_pi(args):
    counts = ValidationCounts.read_csv(args.validation)
    pi = estimate_pi(counts)
    doc = dict(pi.to_dict(), determinant=pi.determinant,
               counts={"n11": counts.n11, "n10": counts.n10, "n01": counts.n01, "n00": counts.n00})
    _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", args.out)
    _manifest(args, "estimate-pi", None, validation=str(args.validation))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="ecpchart", description="Misclassification-corrected EWMA p charts")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, threads=True):
        p.add_argument("--out", help="write the primary output here instead of stdout")
        p.add_argument("--manifest", help="write a JSON run manifest to this path")
        if threads:
            p.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
            p.add_argument("--stream", choices=STREAMS, default=None,
                           help="corrected-chart simulation stream (default: config value or 'surrogate')")

    p = sub.add_parser("calibrate", help="calibrate L for each variant to the target ARL0")
    p.add_argument("config")
    common(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("arl", help="estimate ARL1 for a list of relative shifts")
    p.add_argument("config")
    p.add_argument("--delta", help="comma-separated shifts, e.g. 0,0.1,0.2")
    p.add_argument("--calibrate", action="store_true", help="calibrate L instead of reading it from the config")
    common(p)
    p.set_defaults(func=cmd_arl)

    p = sub.add_parser("simulate", help="reproduce one of the reference tables 1-8")
    p.add_argument("--table", type=int, required=True)
    p.add_argument("--cells", help="filter such as n=5 or n=20,delta=0.2")
    p.add_argument("--m", type=int, default=10001, help="Monte Carlo replicates")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--diff", help="write the comparison with the reference values here (default: stderr)")
    common(p)
    p.set_defaults(func=cmd_simulate, stream="surrogate")

    p = sub.add_parser("monitor", help="run a chart over inspection counts")
    p.add_argument("data")
    p.add_argument("config")
    p.add_argument("--variant", default="corrected", choices=[v.value for v in Variant])
    p.add_argument("--phase", help="only monitor rows with this phase label")
    p.add_argument("--p0-from-data", action="store_true",
                   help="set p0* to the pooled proportion of the in-control rows (not strict Phase II)")
    p.add_argument("--ic-phase", default="IC", help="phase label of in-control rows for --p0-from-data")
    p.add_argument("--render", help="write an SVG chart (and a CSV next to it)")
    common(p)
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("estimate-pi", help="estimate the misclassification matrix from validation counts")
    p.add_argument("validation")
    common(p, threads=False)
    p.set_defaults(func=cmd_estimate_pi)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    args._t0 = time.perf_counter()
    if getattr(args, "threads", 1) is not None and getattr(args, "threads", 1) < 1:
        parser.print_usage(sys.stderr)
        sys.stderr.write("ecpchart: error: --threads must be >= 1\n")
        return EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"ecpchart: error: {exc}\n")
        return EXIT_USAGE
    except CalibrationError as exc:
        sys.stderr.write(f"ecpchart: calibration failed: {exc}\n")
        return EXIT_NONCONVERGENCE
    except (ValidationError, ChartError) as exc:
        sys.stderr.write(f"ecpchart: invalid input: {exc}\n")
        return EXIT_VALIDATION
    except OSError as exc:
        sys.stderr.write(f"ecpchart: I/O error: {exc.filename or ''}: {exc.strerror}\n")
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
