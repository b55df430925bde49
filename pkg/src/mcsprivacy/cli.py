"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from . import __version__
from .attack.inference import SCHEDULES, infer_areas, rounding_adversary_areas
from .attack.raster import AreaGrid
from .config import ConfigError, synth_profile_from_dict, load_config
from .ingest import (
    IngestError,
    IngestReport,
    derive_radiocells_users,
    filter_users,
    parse_radiocells,
    parse_safecast,
    read_exclusion_list,
    write_safecast,
)
from .lppm.mechanisms import PRESETS, protect, resolve_lppm
from .metrics import spatial_gain
from .pipeline import PipelineError, run_pipeline, write_csv
from .seeding import derive_seed
from .synth import generate_cohort

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4

log = logging.getLogger("mcsprivacy")


class DataError(Exception):
    pass


def _read_traces(path: str, tz: float):
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            return parse_safecast(fh, tz)
    except (OSError, IngestError) as exc:
        raise DataError(str(exc)) from exc


def cmd_ingest(args) -> int:
    report = IngestReport()
    exclude = set()
    try:
        if args.exclude:
            with open(args.exclude, encoding="utf-8") as fh:
                exclude = read_exclusion_list(fh)
        with open(args.input, encoding="utf-8", newline="") as fh:
            if args.kind == "safecast":
                traces = parse_safecast(fh, args.tz_offset, exclude, report=report)
            else:
                traces = derive_radiocells_users(parse_radiocells(fh, report=report), args.tz_offset, report=report)
    except (OSError, IngestError) as exc:
        raise DataError(str(exc)) from exc
    if args.min_points is not None or args.max_speed is not None:
        traces = filter_users(traces, args.min_points or 0, args.max_speed or float("inf"), report=report)
    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        write_safecast(traces, fh)
    summary = {"users": len(traces), "measurements": sum(len(t) for t in traces), **vars(report)}
    if args.manifest:
        Path(args.manifest).write_text(json.dumps(summary, indent=2, sort_keys=True))
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        raw = yaml.safe_load(Path(args.profile).read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read profile {args.profile}: {exc}") from exc
    raw = raw.get("dataset", {}).get("synth", raw)
    try:
        profile = synth_profile_from_dict(raw, float(raw.get("tz_offset_hours", 0.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid synth profile: {exc}") from exc
    traces, truth = generate_cohort(args.users, profile, args.seed, float(raw.get("spread_m", 3000.0)))
    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        write_safecast(traces, fh)
    if args.truth:
        write_csv(Path(args.truth), ["user_id", "anchor", "lat", "lon"], [r for g in truth for r in g.to_rows()])
    print(json.dumps({"users": len(traces), "measurements": sum(len(t) for t in traces)}))
    return EXIT_OK


def _schedule(name: str):
    if name not in SCHEDULES:
        raise ConfigError(f"unknown schedule {name!r}; choose from {sorted(SCHEDULES)}")
    return SCHEDULES[name]


def cmd_attack(args) -> int:
    traces = _read_traces(args.input, args.tz_offset)
    sched = _schedule(args.schedule)
    rows = []
    for tr in traces:
        grid = AreaGrid.for_trace(tr)
        if args.rounding_decimals:
            res = rounding_adversary_areas(tr, args.rounding_decimals, grid, schedule=sched, temporal=args.temporal_filter)
        else:
            res = infer_areas(tr, grid, sched, temporal=args.temporal_filter)
        rows.append({"user_id": tr.user_id, "n_measurements": len(tr), "vulnerable": res.vulnerable,
                     "clusters": len(res.clusters), "area_km2": res.area.area_km2, "method": res.method,
                     "eps": res.params.eps if res.params else None,
                     "min_pts": res.params.min_pts if res.params else None})
    write_csv(Path(args.output), ["user_id", "n_measurements", "vulnerable", "clusters", "area_km2", "method",
                                  "eps", "min_pts"], rows)
    return EXIT_OK


def cmd_protect(args) -> int:
    try:
        spec = resolve_lppm(args.lppm)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if spec.kind == "geoind_or":
        raise ConfigError("GeoInd-OR needs a prior; use 'run' with a config")
    traces = _read_traces(args.input, args.tz_offset)
    out = [protect(tr, spec, derive_seed(args.seed, "lppm", spec.name, tr.user_id))[0] for tr in traces]
    with open(args.output, "w", encoding="utf-8", newline="") as fh:
        write_safecast(out, fh)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    before = {t.user_id: t for t in _read_traces(args.before, args.tz_offset)}
    after = {t.user_id: t for t in _read_traces(args.after, args.tz_offset)}
    sched = _schedule(args.schedule)
    rows = []
    for uid in sorted(before):
        grid = AreaGrid.for_trace(before[uid])
        a0 = infer_areas(before[uid], grid, sched, temporal=args.temporal_filter)
        tr_after = after.get(uid)
        if tr_after is None:
            a1_area = type(a0.area).empty(grid)
        elif args.rounding_decimals:
            a1_area = rounding_adversary_areas(tr_after, args.rounding_decimals, grid, schedule=sched,
                                               temporal=args.temporal_filter).area
        else:
            a1_area = infer_areas(tr_after, grid, sched, temporal=args.temporal_filter).area
        g = spatial_gain(a0.area, a1_area)
        rows.append({"user_id": uid, "metric": "spatial", "tp": g.tp, "fp": g.fp, "fn": g.fn,
                     "precision": g.precision, "recall": g.recall})
    write_csv(Path(args.output), ["user_id", "metric", "tp", "fp", "fn", "precision", "recall"], rows)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.output_dir:
        cfg.output_dir = Path(args.output_dir)
    if args.workers:
        cfg.workers = args.workers
    result = run_pipeline(cfg)
    print(json.dumps({"output_dir": str(result.output_dir), "status": result.manifest["status"],
                      "users": result.manifest.get("users")}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mcsprivacy", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="parse a raw CSV into normalized per-user traces")
    s.add_argument("--kind", choices=["safecast", "radiocells"], default="safecast")
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--tz-offset", type=float, default=0.0, help="local time offset from UTC in hours")
    s.add_argument("--exclude", help="file with one excluded user id per line")
    s.add_argument("--min-points", type=int)
    s.add_argument("--max-speed", type=float, help="km/h")
    s.add_argument("--manifest", help="write drop tallies here as JSON")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("synth", help="generate a synthetic cohort in the Safecast schema")
    s.add_argument("--profile", required=True, help="YAML synth profile (or a run config)")
    s.add_argument("--users", type=int, default=10)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--truth", help="write ground-truth anchors here")
    s.set_defaults(func=cmd_synth)

    for name, fn, hlp in (("attack", cmd_attack, "infer areas from traces"),
                          ("evaluate", cmd_evaluate, "spatial privacy gain of protected vs original traces")):
        s = sub.add_parser(name, help=hlp)
        if name == "attack":
            s.add_argument("--input", required=True)
        else:
            s.add_argument("--before", required=True)
            s.add_argument("--after", required=True)
        s.add_argument("--output", required=True)
        s.add_argument("--schedule", default="loose", help=f"one of {sorted(SCHEDULES)}")
        s.add_argument("--temporal-filter", action="store_true")
        s.add_argument("--rounding-decimals", type=int, choices=[2, 3, 4])
        s.add_argument("--tz-offset", type=float, default=0.0)
        s.set_defaults(func=fn)

    s = sub.add_parser("protect", help="apply one LPPM to every trace")
    s.add_argument("--input", required=True)
    s.add_argument("--output", required=True)
    s.add_argument("--lppm", required=True, help=f"preset, one of {sorted(PRESETS)}")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--tz-offset", type=float, default=0.0)
    s.set_defaults(func=cmd_protect)

    s = sub.add_parser("run", help="full pipeline from a YAML config")
    s.add_argument("config")
    s.add_argument("--output-dir")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except PipelineError as exc:
        data_stage = exc.stage == "ingest" and isinstance(exc.cause, (IngestError, OSError, ValueError))
        print(f"{'data' if data_stage else 'internal'} error: {exc}", file=sys.stderr)
        return EXIT_DATA if data_stage else EXIT_INTERNAL
    except Exception as exc:  # noqa: BLE001
        log.exception("unexpected failure")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
