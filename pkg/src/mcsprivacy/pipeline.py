"""The four-step evaluation: baseline attack, defense, attack again, compare.

Every output byte is a function of the config and its seeds; only the
timings in ``manifest.json`` vary between reruns.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .attack.colocation import detect_colocations
from .attack.inference import AttackResult, infer_areas, rounding_adversary_areas
from .attack.poi import OfflinePoiProvider, OverpassPoiProvider, query_pois
from .attack.raster import AreaGrid
from .config import RunConfig
from .ingest import (
    IngestReport,
    UserTrace,
    derive_radiocells_users,
    filter_users,
    parse_radiocells,
    parse_safecast,
    read_exclusion_list,
    split_work_hours,
    write_safecast,
)
from .lppm.mechanisms import LppmSpec, protect
from .lppm.remap import Prior, build_prior
from .metrics import PrivacyGain, poi_gain, spatial_gain, volume_bin, vulnerability_stats
from .seeding import derive_seed, rng_for
from .synth import generate_cohort
from .utility import (
    N_CATEGORIES,
    antenna_error,
    average_recent,
    build_radiation_map,
    detect_hotspots,
    haversine_error_stats,
    locate_antennas,
    map_diff,
    summarize,
    transition_matrix,
    write_grid,
)

log = logging.getLogger(__name__)

SUMMARY_KEYS = ("count", "mean", "min", "q1", "median", "q3", "max")


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def file_digest(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(r.get(h)) for h in header])


# ---------------------------------------------------------------- loading

def load_dataset(cfg: RunConfig, report: IngestReport) -> tuple[list[UserTrace], list]:
    ds = cfg.dataset
    tz = cfg.region.tz_offset_hours if cfg.region else 0.0
    truth = []
    if ds.kind == "synth":
        traces, truth = generate_cohort(ds.synth_users, ds.synth_profile, ds.synth_seed, ds.synth_spread_m)
        # route synthetic data through the CSV reader like any real dataset
        path = cfg.output_dir / "synth_dataset.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            write_safecast(traces, fh)
        with open(path, encoding="utf-8") as fh:
            traces = parse_safecast(fh, tz, report=report)
    else:
        exclude: set[str] = set()
        if ds.exclude_users:
            with open(ds.exclude_users, encoding="utf-8") as fh:
                exclude = read_exclusion_list(fh)
        with open(ds.path, encoding="utf-8", newline="") as fh:
            if ds.kind == "safecast":
                traces = parse_safecast(fh, tz, exclude, report=report)
            else:
                traces = derive_radiocells_users(parse_radiocells(fh, report=report), tz, report=report)
    if ds.min_points is not None or ds.max_speed_kmh is not None:
        traces = filter_users(traces, ds.min_points or 0, ds.max_speed_kmh or float("inf"), report=report)
    if not traces:
        raise ValueError("no users left after ingestion")
    return traces, truth


_PROVIDERS: dict = {}


def _poi_provider(poi_cfg):
    if poi_cfg is None or poi_cfg.kind == "none":
        return None
    key = (poi_cfg.kind, str(poi_cfg.path), poi_cfg.endpoint, str(poi_cfg.cache_dir))
    if key not in _PROVIDERS:
        if poi_cfg.kind == "offline":
            _PROVIDERS[key] = OfflinePoiProvider.from_file(poi_cfg.path)
        else:
            kw = {"timeout": poi_cfg.timeout, "cache_dir": poi_cfg.cache_dir}
            if poi_cfg.endpoint:
                kw["endpoint"] = poi_cfg.endpoint
            _PROVIDERS[key] = OverpassPoiProvider(**kw)
    return _PROVIDERS[key]


# ---------------------------------------------------------------- per user

@dataclass
class UserJob:
    trace: UserTrace
    lppms: list[LppmSpec]
    seed: int
    attack: Any
    poi: Any
    metrics: Any
    prior: Prior | None
    or_eligible: bool


@dataclass
class UserOutcome:
    user_id: str
    n: int
    baseline: AttackResult
    rows: list[dict] = field(default_factory=list)
    protected: dict = field(default_factory=dict)
    distances: dict = field(default_factory=dict)
    hidden: dict = field(default_factory=dict)
    vulnerable_after: dict = field(default_factory=dict)


def run_attack(trace: UserTrace, grid: AreaGrid, attack_cfg, spec: LppmSpec | None = None) -> AttackResult:
    view = split_work_hours(trace) if attack_cfg.work_hours else trace
    kw = dict(schedule=attack_cfg.schedule, top_k=attack_cfg.top_k, temporal=attack_cfg.temporal_filter)
    if spec is not None and spec.kind == "rounding" and int(spec.params["decimals"]) in (2, 3):
        return rounding_adversary_areas(view, int(spec.params["decimals"]), grid, top_k=attack_cfg.top_k)
    return infer_areas(view, grid, **kw)


def _gain_row(base: dict, metric: str, g: PrivacyGain) -> dict:
    return {**base, "metric": metric, "tp": g.tp, "fp": g.fp, "fn": g.fn,
            "precision": g.precision, "recall": g.recall}


def evaluate_user(job: UserJob) -> UserOutcome:
    tr = job.trace
    grid = AreaGrid.for_trace(tr, job.attack.cell_m)
    provider = _poi_provider(job.poi) if job.metrics.poi else None
    before = run_attack(tr, grid, job.attack)
    pois_before = query_pois(before.area, provider) if provider else None
    out = UserOutcome(tr.user_id, len(tr), before)
    for spec in job.lppms:
        if spec.kind == "geoind_or" and not job.or_eligible:
            continue
        seed = derive_seed(job.seed, "lppm", spec.name, tr.user_id)
        protected, kept = protect(tr, spec, seed, job.prior)
        out.protected[spec.name] = protected
        if job.metrics.distance:
            es = haversine_error_stats(tr, protected, kept)
            out.distances[spec.name] = es.distances
            out.hidden[spec.name] = es.hidden
        after = run_attack(protected, grid, job.attack, spec)
        out.vulnerable_after[spec.name] = after.vulnerable
        base = {"user_id": tr.user_id, "lppm": spec.name, "kind": spec.kind,
                "params": json.dumps(spec.params, sort_keys=True), "n_measurements": len(tr),
                "volume_bin": volume_bin(len(tr)), "vulnerable_before": before.vulnerable,
                "vulnerable_after": after.vulnerable, "area_before_km2": before.area.area_km2,
                "area_after_km2": after.area.area_km2}
        if job.metrics.spatial:
            out.rows.append(_gain_row(base, "spatial", spatial_gain(before.area, after.area)))
        if provider is not None:
            pois_after = query_pois(after.area, provider)
            g = poi_gain({p.id for p in pois_before}, {p.id for p in pois_after})
            out.rows.append(_gain_row({**base, "pois_before": len(pois_before), "pois_after": len(pois_after)}, "poi", g))
    return out


# ---------------------------------------------------------------- orchestration

@dataclass
class RunResult:
    output_dir: Path
    manifest: dict
    outcomes: list[UserOutcome]


class _Stages:
    def __init__(self, manifest: dict):
        self.manifest = manifest

    def run(self, name: str, fn: Callable, *args, **kw):
        t0 = time.perf_counter()
        try:
            result = fn(*args, **kw)
        except Exception as exc:
            self.manifest["stages"].append({"name": name, "seconds": time.perf_counter() - t0, "status": "failed"})
            raise PipelineError(name, exc) from exc
        self.manifest["stages"].append({"name": name, "seconds": time.perf_counter() - t0, "status": "ok"})
        return result


def _split_train_test(user_ids: list[str], fraction: float, seed: int) -> tuple[set, set]:
    ids = sorted(user_ids)
    perm = rng_for(seed, "prior-split").permutation(len(ids))
    n_train = min(max(1, int(round(fraction * len(ids)))), len(ids) - 1) if len(ids) > 1 else 0
    train = {ids[i] for i in perm[:n_train]}
    return train, set(ids) - train


def run_pipeline(cfg: RunConfig) -> RunResult:
    out_dir = cfg.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "tool": "mcsprivacy", "version": __version__, "config_hash": cfg.config_hash,
        "seed": cfg.seed, "status": "running", "stages": [], "outputs": {},
        "lppms": [s.to_dict() for s in cfg.lppms],
    }
    stages = _Stages(manifest)
    written: list[Path] = []

    def emit(name: str, header, rows):
        path = out_dir / name
        write_csv(path, header, rows)
        written.append(path)

    try:
        report = IngestReport()
        traces, truth = stages.run("ingest", load_dataset, cfg, report)
        manifest["ingest"] = asdict(report)
        manifest["users"] = len(traces)
        if truth:
            emit("synth_truth.csv", ["user_id", "anchor", "lat", "lon"], [r for g in truth for r in g.to_rows()])
        if cfg.dataset.path:
            manifest["input_digest"] = file_digest(cfg.dataset.path)
        elif (out_dir / "synth_dataset.csv").exists():
            written.append(out_dir / "synth_dataset.csv")

        prior, or_users = None, {t.user_id for t in traces}
        if any(s.kind == "geoind_or" for s in cfg.lppms):
            train, test = _split_train_test([t.user_id for t in traces], cfg.prior_train_fraction, cfg.seed)
            prior = stages.run("prior", build_prior, [t for t in traces if t.user_id in train])
            or_users = test
            manifest["prior"] = {"train_users": sorted(train), "test_users": sorted(test), "cells": len(prior)}

        jobs = [UserJob(t, cfg.lppms, cfg.seed, cfg.attack, cfg.poi, cfg.metrics, prior, t.user_id in or_users)
                for t in traces]
        outcomes = stages.run("attack", _map_jobs, jobs, cfg.workers)
        manifest["lppm_seeds"] = {
            spec.name: {o.user_id: derive_seed(cfg.seed, "lppm", spec.name, o.user_id)
                        for o in outcomes if spec.name in o.protected}
            for spec in cfg.lppms if spec.kind in RANDOMIZED_KINDS
        }

        stages.run("report:privacy", _privacy_reports, cfg, outcomes, emit)
        stages.run("report:utility", _utility_reports, cfg, traces, outcomes, or_users, emit, written)
        if cfg.metrics.colocation:
            stages.run("colocation", _colocation_report, cfg, traces, emit)
        manifest["status"] = "ok"
    except PipelineError as exc:
        manifest["status"] = "failed"
        manifest["failed_stage"] = exc.stage
        manifest["error"] = f"{type(exc.cause).__name__}: {exc.cause}"
        raise
    finally:
        valid = manifest["status"] == "ok"
        manifest["outputs"] = {p.name if p.parent == out_dir else str(p.relative_to(out_dir)):
                               {"sha256": file_digest(p), "valid": valid} for p in written if p.exists()}
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
    return RunResult(out_dir, manifest, outcomes)


def _map_jobs(jobs: list[UserJob], workers: int) -> list[UserOutcome]:
    if workers <= 1 or len(jobs) <= 1:
        return [evaluate_user(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(evaluate_user, jobs, chunksize=1))


RANDOMIZED_KINDS = ("geoind", "release_geoind", "geoind_or", "random_hiding")

GAIN_HEADER = ["user_id", "lppm", "kind", "params", "n_measurements", "volume_bin", "metric",
               "tp", "fp", "fn", "precision", "recall", "vulnerable_before", "vulnerable_after",
               "area_before_km2", "area_after_km2", "pois_before", "pois_after"]


def _privacy_reports(cfg: RunConfig, outcomes: list[UserOutcome], emit) -> None:
    emit("gains.csv", GAIN_HEADER, [r for o in outcomes for r in o.rows])
    emit("baseline_attack.csv",
         ["user_id", "n_measurements", "vulnerable", "clusters", "area_km2", "eps", "min_pts"],
         [{"user_id": o.user_id, "n_measurements": o.n, "vulnerable": o.baseline.vulnerable,
           "clusters": len(o.baseline.clusters), "area_km2": o.baseline.area.area_km2,
           "eps": o.baseline.params.eps if o.baseline.params else None,
           "min_pts": o.baseline.params.min_pts if o.baseline.params else None} for o in outcomes])
    rows = []
    for spec in cfg.lppms:
        cohort = [o for o in outcomes if spec.name in o.vulnerable_after]
        if not cohort:
            continue
        vs = vulnerability_stats({o.user_id: o.baseline.vulnerable for o in cohort},
                                 {o.user_id: o.vulnerable_after[spec.name] for o in cohort})
        rows.append({"lppm": spec.name, **asdict(vs)})
    emit("vulnerability.csv", ["lppm", "users_total", "vulnerable_before", "vulnerable_after", "reduction", "flagged"], rows)


def _utility_reports(cfg: RunConfig, traces, outcomes, or_users, emit, written) -> None:
    m = cfg.metrics
    if m.distance:
        rows = []
        for spec in cfg.lppms:
            ds = [o.distances[spec.name] for o in outcomes if spec.name in o.distances]
            if not ds:
                continue
            s = summarize(np.concatenate(ds))
            rows.append({"lppm": spec.name, **s, "hidden": sum(o.hidden[spec.name] for o in outcomes if spec.name in o.hidden)})
        emit("distance_error.csv", ["lppm", *SUMMARY_KEYS, "hidden"], rows)

    originals = {t.user_id: t for t in traces}

    def cohort_measurements(spec: LppmSpec | None, protected: bool):
        for o in outcomes:
            if spec is None:
                yield from originals[o.user_id]
            elif spec.name in o.protected:
                yield from (o.protected[spec.name] if protected else originals[o.user_id])

    if m.radiation_map or m.hotspots:
        anchor = max(mm.t for t in traces for mm in t) if traces else None

        def averaged(ms):
            return average_recent(ms, cfg.window_days, anchor, cfg.region, cfg.snap_decimals)

        avg_orig = averaged(cohort_measurements(None, False))
        hot_rows, hot_summary, diff_rows, trans_rows = [], [], [], []
        base_grid = None
        if m.radiation_map and len(avg_orig):
            base_grid = build_radiation_map(avg_orig, cfg.region, cfg.resolution)
            (cfg.output_dir / "grids").mkdir(exist_ok=True)
            write_grid(base_grid, cfg.output_dir / "grids" / "original.bin")
            written += [cfg.output_dir / "grids" / "original.bin", cfg.output_dir / "grids" / "original.bin.json"]
        if m.hotspots:
            hs = detect_hotspots(avg_orig, cfg.hotspot_cpm)
            vals = avg_orig.as_dict()
            hot_rows += [{"lppm": "original", "lat": a, "lon": b, "cpm": vals[(a, b)]} for a, b in sorted(hs)]
        for spec in cfg.lppms:
            if not any(spec.name in o.protected for o in outcomes):
                continue
            partial = spec.kind == "geoind_or"
            avg_before = averaged(cohort_measurements(spec, False)) if partial else avg_orig
            avg_after = averaged(cohort_measurements(spec, True))
            if m.hotspots:
                hb, ha = detect_hotspots(avg_before, cfg.hotspot_cpm), detect_hotspots(avg_after, cfg.hotspot_cpm)
                vals = avg_after.as_dict()
                hot_rows += [{"lppm": spec.name, "lat": a, "lon": b, "cpm": vals[(a, b)]} for a, b in sorted(ha)]
                hot_summary.append({"lppm": spec.name, "hotspots_before": len(hb), "hotspots_after": len(ha),
                                    "kept": len(hb & ha), "lost": len(hb - ha), "new": len(ha - hb)})
            if m.radiation_map and len(avg_before) and len(avg_after) and base_grid is not None:
                g_before = build_radiation_map(avg_before, cfg.region, cfg.resolution) if partial else base_grid
                try:
                    g_after = build_radiation_map(avg_after, cfg.region, cfg.resolution)
                except ValueError:
                    log.warning("no protected measurements left inside the region for %s", spec.name)
                    continue
                gpath = cfg.output_dir / "grids" / f"{spec.name}.bin"
                write_grid(g_after, gpath)
                written += [gpath, gpath.with_suffix(".bin.json")]
                diff_rows.append({"lppm": spec.name, **summarize(map_diff(g_before, g_after))})
                counts, pct = transition_matrix(g_before, g_after)
                for i in range(N_CATEGORIES):
                    for j in range(N_CATEGORIES):
                        trans_rows.append({"lppm": spec.name, "category_before": i + 1, "category_after": j + 1,
                                           "count": int(counts[i, j]), "row_percent": float(pct[i, j])})
        if m.hotspots:
            emit("hotspots.csv", ["lppm", "lat", "lon", "cpm"], hot_rows)
            emit("hotspot_summary.csv", ["lppm", "hotspots_before", "hotspots_after", "kept", "lost", "new"], hot_summary)
        if m.radiation_map and base_grid is not None:
            emit("map_diff.csv", ["lppm", *SUMMARY_KEYS], diff_rows)
            emit("transitions.csv", ["lppm", "category_before", "category_after", "count", "row_percent"], trans_rows)

    if m.antennas and any("antenna_id" in mm.extras for t in traces for mm in t):
        err_rows, sum_rows = [], []
        for spec in cfg.lppms:
            if not any(spec.name in o.protected for o in outcomes):
                continue
            before = locate_antennas(cohort_measurements(spec, False))
            after = locate_antennas(cohort_measurements(spec, True))
            ae = antenna_error(before, after)
            err_rows += [{"lppm": spec.name, "antenna_id": k, "error_m": v} for k, v in ae.errors.items()]
            sum_rows.append({"lppm": spec.name, **summarize(list(ae.errors.values())), "antennas_before": ae.total_before,
                             "lost": ae.lost, "lost_fraction": ae.lost_fraction})
        emit("antenna_errors.csv", ["lppm", "antenna_id", "error_m"], err_rows)
        emit("antenna_summary.csv", ["lppm", *SUMMARY_KEYS, "antennas_before", "lost", "lost_fraction"], sum_rows)


def _colocation_report(cfg: RunConfig, traces, emit) -> None:
    pairs = detect_colocations(traces, cfg.colocation_d_max_m, cfg.colocation_t_max_s)
    rows = [{"user_a": a, "user_b": b, "events": len(ev), "min_distance_m": min(e.distance_m for e in ev),
             "min_dt_s": min(e.dt_s for e in ev)} for (a, b), ev in sorted(pairs.items())]
    emit("colocations.csv", ["user_a", "user_b", "events", "min_distance_m", "min_dt_s"], rows)
