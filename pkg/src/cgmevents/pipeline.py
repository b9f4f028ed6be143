"""File-based pipeline stages. Each stage reads its inputs from the run
directory, writes its artifacts there, and records digests in the manifest."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from pathlib import Path

import numpy as np

from . import __version__, analyze, cluster, config, core, events, impute, io, synth
from . import predict as pred

log = logging.getLogger("cgmevents")

STAGES = ("synth", "ingest", "impute", "cluster", "events", "correlate", "train", "evaluate", "export")
STAGE_VERSION = {s: "1" for s in STAGES}
CHANNELS = ("activity", "glucose", "location", "purchase")

# artifact -> producing stage
ARTIFACTS = {
    "raw/activities.csv": "synth",
    "raw/locations.csv": "synth",
    "raw/glucose.csv": "synth",
    "raw/purchases.csv": "synth",
    "raw/groundtruth.json": "synth",
    "grid.npz": "ingest",
    "fixes.npz": "ingest",
    "imputation_report.csv": "impute",
    "logistic_weights.json": "impute",
    "likelihoods.npy": "impute",
    "clusters.csv": "cluster",
    "hotspots.json": "cluster",
    "geofence_plan.json": "cluster",
    "events.csv": "events",
    "hotspot_stats.csv": "events",
    "correlations.csv": "correlate",
    "models.json": "train",
    "rmse_table.csv": "evaluate",
    "rmse_summary.csv": "evaluate",
    "hotspots.geojson": "export",
}


class MissingArtifactError(RuntimeError):
    pass


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _dump_json(path, obj):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


class Run:
    """One output directory plus the effective configuration."""

    def __init__(self, cfg, out=None):
        self.cfg = cfg
        self.out = Path(out or cfg["out"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.base = Path(cfg.get("_base_dir", "."))
        self._inputs = {}

    def path(self, name):
        return self.out / name

    def need(self, name, stage_inputs):
        p = self.path(name)
        if not p.is_file():
            producer = ARTIFACTS[name]
            if name.startswith("raw/") and self.cfg["inputs"] is not None:
                producer = "ingest"
            raise MissingArtifactError(f"missing {p}; run the `{producer}` subcommand first")
        stage_inputs[name] = p
        return p

    def input_csv(self, key, stage_inputs):
        if self.cfg["inputs"] is not None:
            p = self.base / self.cfg["inputs"][key]
            stage_inputs[f"input:{key}"] = p
            return p
        return self.need(f"raw/{key}.csv", stage_inputs)

    def record(self, stage, inputs, outputs, seconds):
        man_path = self.path("manifest.json")
        man = json.loads(man_path.read_text()) if man_path.is_file() else {}
        man["config_sha256"] = config.digest(self.cfg)
        man["package_version"] = __version__
        man.setdefault("stages", {})[stage] = {
            "version": STAGE_VERSION[stage],
            "inputs": {k: sha256(v) for k, v in sorted(inputs.items())},
            "outputs": {k: sha256(self.path(k)) for k in sorted(outputs)},
        }
        _dump_json(man_path, man)
        # wall-clock lives beside the manifest so the manifest stays reproducible
        t_path = self.path("timings.json")
        timings = json.loads(t_path.read_text()) if t_path.is_file() else {}
        timings[stage] = round(seconds, 3)
        _dump_json(t_path, timings)


def _stage(fn):
    name = fn.__name__.replace("stage_", "")

    def wrapped(run: Run):
        t = time.perf_counter()
        inputs = {}
        outputs = fn(run, inputs)
        dt = time.perf_counter() - t
        run.record(name, inputs, outputs, dt)
        log.info("%s: %d artifacts in %.2fs", name, len(outputs), dt)
        return outputs
    wrapped.__name__ = fn.__name__
    return wrapped


# -- loaders ------------------------------------------------------------------

def load_grid(path) -> core.SlotGrid:
    z = np.load(path)
    values = {c: z[f"values_{c}"] for c in CHANNELS if f"values_{c}" in z}
    masks = {c: z[f"mask_{c}"] for c in values}
    return core.SlotGrid(int(z["t0"]), int(z["slot_width_s"]), int(z["n_slots"]), values, masks)


def load_fixes(path) -> core.Fixes:
    z = np.load(path)
    return core.Fixes(z["t"], z["lat"], z["lon"], z["accuracy_m"])


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def load_clusters(path):
    rows = read_rows(path)
    t = np.array([int(r["t"]) for r in rows], dtype=np.int64)
    lat = np.array([float(r["lat"]) for r in rows])
    lon = np.array([float(r["lon"]) for r in rows])
    hid = np.array([int(r["hotspot_id"]) for r in rows], dtype=np.int64)
    return t, lat, lon, hid


def load_events(path):
    return [events.EventOccurrence(int(r["hotspot_id"]), int(r["peak_time"]), float(r["peak_density"]))
            for r in read_rows(path)]


def food_ids(hotspots_json):
    return sorted(h["id"] for h in hotspots_json["hotspots"] if h["tag"] == "food")


def exog_channel(grid: core.SlotGrid, peak_times, step_s=core.CGM_STEP_S):
    """Per CGM bin: 1 when an event peak falls in it; observed when any
    location fix or purchase does."""
    _, lm = core.coarsen(grid, "location", step_s)
    _, pm = core.coarsen(grid, "purchase", step_s)
    vals = np.zeros(lm.size)
    b = (np.asarray(peak_times, dtype=np.int64) - grid.t0) // step_s
    vals[b[(b >= 0) & (b < vals.size)]] = 1.0
    return vals, lm | pm


def _model_params(cfg):
    params = json.loads(json.dumps(cfg["predict"]["params"]))
    for k in ("kernel", "kernel_exog"):
        params.setdefault(k, {}).setdefault("seed", cfg["seed"])
    return params


# -- stages ---------------------------------------------------------------------

@_stage
def stage_synth(run: Run, inputs):
    raw, truth = synth.generate(config.synth_config(run.cfg))
    synth.write(raw, truth, run.path("raw"))
    return [k for k in ARTIFACTS if k.startswith("raw/")]


def _bounds(cfg, streams, width):
    t0, t_end = cfg["grid"]["t0"], cfg["grid"]["t_end"]
    if t0 is None or t_end is None:
        allt = np.concatenate([s for s in streams if s.size])
        if allt.size == 0:
            raise core.GridError("no records in any input stream")
        step = core.CGM_STEP_S
        if t0 is None:
            t0 = int(allt.min()) // step * step
        if t_end is None:
            t_end = -(-(int(allt.max()) + 1) // step) * step
    return int(t0), int(t_end)


@_stage
def stage_ingest(run: Run, inputs):
    at, acodes = io.read_activities(run.input_csv("activities", inputs))
    fixes = io.read_locations(run.input_csv("locations", inputs))
    gt, gv = io.read_glucose(run.input_csv("glucose", inputs))
    purch = io.read_purchases(run.input_csv("purchases", inputs))
    width = run.cfg["grid"]["slot_width_s"]
    t0, t_end = _bounds(run.cfg, [at, fixes.t, gt, purch.t], width)
    grid = core.build_grid({
        "activity": (at, acodes.astype(np.int8)),
        "glucose": (gt, gv),
        "location": (fixes.t, np.ones(len(fixes))),
        "purchase": (purch.t, purch.amount),
    }, t0, t_end, width)
    arrays = {"t0": grid.t0, "slot_width_s": grid.slot_width_s, "n_slots": grid.n_slots}
    for c in CHANNELS:
        arrays[f"values_{c}"], arrays[f"mask_{c}"] = grid.channel(c)
    np.savez(run.path("grid.npz"), **arrays)
    np.savez(run.path("fixes.npz"), t=fixes.t, lat=fixes.lat, lon=fixes.lon, accuracy_m=fixes.accuracy_m)
    return ["grid.npz", "fixes.npz"]


@_stage
def stage_impute(run: Run, inputs):
    c = run.cfg["impute"]
    grid = load_grid(run.need("grid.npz", inputs))
    tc = impute.TrainConfig(c["learning_rate"], c["epochs"], c["batch_size"], run.cfg["seed"], c["l2"])
    scores, _ = impute.evaluate_imputers(grid, c["holdout_fraction"], run.cfg["seed"], c["k"], tc)
    io.write_csv(run.path("imputation_report.csv"), impute.REPORT_HEADER, impute.report_rows(scores))
    weights = impute.logistic_train(grid, c["k"], tc)
    weights.save(run.path("logistic_weights.json"))
    np.save(run.path("likelihoods.npy"), impute.activity_likelihoods(grid, weights))
    return ["imputation_report.csv", "logistic_weights.json", "likelihoods.npy"]


def _read_tags(path):
    tags = {}
    for r in read_rows(path):
        tags[int(r["hotspot_id"])] = r["tag"].strip()
    return tags


@_stage
def stage_cluster(run: Run, inputs):
    c = run.cfg["cluster"]
    grid = load_grid(run.need("grid.npz", inputs))
    fixes = load_fixes(run.need("fixes.npz", inputs))
    proba = np.load(run.need("likelihoods.npy", inputs))
    keep = cluster.filter_stationary(fixes, proba, grid.t0, grid.slot_width_s, c["threshold"])
    kept = fixes.subset(keep)
    labels = cluster.dbscan(kept, cluster.DbscanParams(c["eps_m"], c["min_pts"]))
    hotspots = cluster.build_hotspots(kept, labels)
    if c["tags_file"] is not None:
        p = run.base / c["tags_file"]
        inputs["tags_file"] = p
        cluster.apply_tags(hotspots, _read_tags(p))
    elif c["auto_tags"] and run.cfg["inputs"] is None:
        truth = synth.GroundTruth.read(run.need("raw/groundtruth.json", inputs))
        cluster.apply_tags(hotspots, cluster.tags_from_truth(hotspots, truth.hotspots))
    io.write_csv(run.path("clusters.csv"), ("fix_index", "t", "lat", "lon", "hotspot_id"), (
        (int(keep[i]), int(kept.t[i]), f"{kept.lat[i]:.7f}", f"{kept.lon[i]:.7f}", int(labels[i]))
        for i in range(len(kept))
    ))
    _dump_json(run.path("hotspots.json"), {"hotspots": [{
        "id": h.id, "tag": h.tag, "n_members": int(len(h.members)),
        "centroid": [round(h.centroid[0], 7), round(h.centroid[1], 7)],
        "radius_m": round(h.radius_m, 3), "degenerate": h.hull.degenerate,
        "hull": [[round(float(x), 7), round(float(y), 7)] for x, y in h.hull.vertices],
    } for h in hotspots]})
    if hotspots:
        plan = cluster.plan_geofences(hotspots, c["max_active"], c["link_m"], c["buffer_m"]).to_json()
    else:
        plan = {"max_active": c["max_active"], "fences": [], "superfences": []}
    _dump_json(run.path("geofence_plan.json"), plan)
    return ["clusters.csv", "hotspots.json", "geofence_plan.json"]


@_stage
def stage_events(run: Run, inputs):
    e = run.cfg["events"]
    grid = load_grid(run.need("grid.npz", inputs))
    t, _, _, hid = load_clusters(run.need("clusters.csv", inputs))
    evs = events.hotspot_events(t, hid, grid.t0, grid.n_slots, e["bandwidth_s"], e["min_separation_s"],
                                e["min_density"], grid.slot_width_s)
    io.write_csv(run.path("events.csv"), ("hotspot_id", "peak_time", "peak_density"),
                 ((ev.hotspot_id, ev.peak_time, io.fmt(ev.peak_density)) for ev in evs))
    bg, bm = core.coarsen(grid, "glucose")
    rows = []
    for h in sorted({ev.hotspot_id for ev in evs}):
        peaks = [ev.peak_time for ev in evs if ev.hotspot_id == h]
        w = events.align_bg_windows(peaks, bg, bm, grid.t0, e["window_s"])
        mean, std, _, n = events.hotspot_stats(w)
        for j, minute in enumerate(w.column_minutes):
            rows.append((h, int(minute), io.fmt(float(mean[j])), io.fmt(float(std[j])), int(n[j])))
    io.write_csv(run.path("hotspot_stats.csv"), ("hotspot_id", "column_minute", "mean", "std", "n"), rows)
    return ["events.csv", "hotspot_stats.csv"]


@_stage
def stage_correlate(run: Run, inputs):
    c = run.cfg["correlate"]
    grid = load_grid(run.need("grid.npz", inputs))
    evs = load_events(run.need("events.csv", inputs))
    food = food_ids(json.loads(run.need("hotspots.json", inputs).read_text()))
    bg, bm = core.coarsen(grid, "glucose")
    ratio = core.CGM_STEP_S // grid.slot_width_s
    series = [
        analyze.stationary_indicator(*grid.channel("activity"), core.STATIONARY, ratio, bg.size),
        analyze.event_indicator([e.peak_time for e in evs], grid.t0, bg.size, "event"),
        analyze.event_indicator([e.peak_time for e in evs if e.hotspot_id in food], grid.t0, bg.size, "food_event"),
    ]
    lags = range(0, c["max_lag_min"] + 1, 5)
    rows = []
    for ind in series:
        curve = analyze.correlation_curve(ind, bg, bm, lags, c["threshold_mgdl"])
        rows += [(curve.tag, int(l), io.fmt(float(r)), int(n)) for l, r, n in zip(curve.lags_min, curve.r, curve.n_valid)]
    io.write_csv(run.path("correlations.csv"), ("indicator_tag", "lag_min", "r", "n_valid"), rows)
    return ["correlations.csv"]


def _series(run, inputs):
    grid = load_grid(run.need("grid.npz", inputs))
    bg, bm = core.coarsen(grid, "glucose")
    exog = None
    if "kernel_exog" in run.cfg["predict"]["models"]:
        evs = load_events(run.need("events.csv", inputs))
        exog = exog_channel(grid, [e.peak_time for e in evs])
    return bg, bm, exog


@_stage
def stage_train(run: Run, inputs):
    p = run.cfg["predict"]
    bg, bm, exog = _series(run, inputs)
    fits = pred.fit_all(bg, bm, p["models"], p["horizons"], p["lags"], exog, _model_params(run.cfg))
    _dump_json(run.path("models.json"), {
        "fits": [dict(fits[k].to_json(), model=k[0], horizon_min=k[1]) for k in sorted(fits)],
        "unfit": [{"model": n, "horizon_min": h} for h in p["horizons"] for n in p["models"]
                  if n != "static" and (n, h) not in fits],
    })
    return ["models.json"]


@_stage
def stage_evaluate(run: Run, inputs):
    p = run.cfg["predict"]
    bg, bm, exog = _series(run, inputs)
    cv = pred.cross_validate(bg, bm, p["models"], p["horizons"], p["lags"], p["folds"], exog,
                             _model_params(run.cfg))
    io.write_csv(run.path("rmse_table.csv"), ("model", "horizon_min", "fold", "rmse_mgdl", "n_test"),
                 ((m, h, f, io.fmt(r), n) for m, h, f, r, n in cv.rows))
    io.write_csv(run.path("rmse_summary.csv"), ("model", "horizon_min", "mean_rmse_mgdl"),
                 ((m, h, io.fmt(r)) for m, h, r in cv.summary()))
    return ["rmse_table.csv", "rmse_summary.csv"]


@_stage
def stage_export(run: Run, inputs):
    hs = json.loads(run.need("hotspots.json", inputs).read_text())["hotspots"]
    evs = load_events(run.need("events.csv", inputs))
    counts = {}
    for e in evs:
        counts[e.hotspot_id] = counts.get(e.hotspot_id, 0) + 1
    objs = [cluster.Hotspot(h["id"], np.zeros(h["n_members"], dtype=np.int64), np.zeros(0), np.zeros(0),
                            cluster.Hull(np.asarray(h["hull"], dtype=float), h["degenerate"]), h["tag"])
            for h in hs]
    _dump_json(run.path("hotspots.geojson"), cluster.hotspots_geojson(objs, counts))
    return ["hotspots.geojson"]


STAGE_FUNCS = {
    "synth": stage_synth, "ingest": stage_ingest, "impute": stage_impute, "cluster": stage_cluster,
    "events": stage_events, "correlate": stage_correlate, "train": stage_train,
    "evaluate": stage_evaluate, "export": stage_export,
}


def run_all(run: Run):
    for s in STAGES:
        if s == "synth" and run.cfg["inputs"] is not None:
            continue
        STAGE_FUNCS[s](run)
