"""Command-line entry point: the full pipeline as reproducible subcommands.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 failed
--check threshold. Every run echoes its effective (post-default) JSON
config into the output directory so reruns are bit-reproducible.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import datapipe, evalkit, report, scenegen
from .datapipe import DatasetFileError
from .domain import ModelKey
from .driver import (
    EmulatorSource,
    ReferenceSource,
    SurfaceParams,
    compare_trajectories,
    run_coupled,
    run_coupled_scene,
)
from .emulator import bank_load, benchmark, emulate_scene, reference_scene
from .net import WeightFileError, load_weights, save_weights
from .refrad import RefRadConfig
from .scenegen import (
    CloudParams,
    SceneFileError,
    SceneSpec,
    SeasonParams,
    VortexSpec,
    generate_series,
    load_series,
    save_series,
)
from .train import TrainConfig, finetune, train

DEFAULT_CONFIG = {
    "scene": {
        "nx": 32, "ny": 32, "lat0": 29.0, "lon0": 123.5, "dx_deg": 0.1,
        "land_fraction": 0.5, "seed": 0,
        "season": {"t_surface_mean": 288.0, "t_diurnal_amplitude": 8.0,
                   "qv_surface": 0.010},
        "clouds": {"n_blobs": 6, "horiz_extent": 6.0, "vert_extent": 4.0,
                   "max_cf": 0.9, "layer_lo": 8, "layer_hi": 40},
        "t0": 1663113600.0,  # 2022-09-14 00:00 UTC
        "dt": 1800.0,
        "n_steps": 48,
        "vortex": None,  # {"center": [i, j], "depth": 30, "radius": 6, "v_max": 40,
                         #  "drift": [di_per_step, dj_per_step]}
    },
    "sampling": {
        "n_clear": 25000, "n_cloudy": 40000, "train_frac": 0.9,
        "sample_seed": 1, "split_seed": 2,
    },
    "train": {
        "lr0": 1e-3, "batch": 256, "max_epochs": 1500, "plateau_patience": 5,
        "plateau_factor": 0.5, "lr_min": 1e-7, "early_stop_patience": 20,
        "optimizer": "adam", "momentum": 0.9, "hidden": 64, "seed": 0,
    },
    "emulator": {"reps": 5},
    "eval": {"floor_flux": 1.0, "floor_temp": 1.0, "refine_radius": 5,
             "pearson_min": 0.95},
    "driver": {"n_steps": 336, "dt": 1800.0, "c_surf_land": 2e5,
               "c_surf_ocean": 2e7, "dp_dt_mean": 0.5, "speedup_min": 5.0},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _merge_config(defaults: dict, override: dict, path="") -> dict:
    out = {}
    for k, v in defaults.items():
        if k in override:
            o = override[k]
            if isinstance(v, dict) and isinstance(o, dict):
                out[k] = _merge_config(v, o, f"{path}{k}.")
            else:
                out[k] = o
        else:
            out[k] = v
    unknown = set(override) - set(defaults)
    if unknown:
        raise ValueError(f"unknown config keys: "
                         f"{sorted(path + u for u in unknown)}")
    return out


def load_config(path: str | None) -> dict:
    override = {}
    if path:
        override = json.loads(Path(path).read_text())
    return _merge_config(DEFAULT_CONFIG, override)


def _echo_config(cfg: dict, outdir: Path):
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "effective_config.json").write_text(json.dumps(cfg, indent=2))


def _scene_spec(cfg: dict) -> SceneSpec:
    sc = cfg["scene"]
    return SceneSpec(
        nx=sc["nx"], ny=sc["ny"], lat0=sc["lat0"], lon0=sc["lon0"],
        dx_deg=sc["dx_deg"], land_fraction=sc["land_fraction"],
        season=SeasonParams(**sc["season"]), clouds=CloudParams(**sc["clouds"]),
        seed=sc["seed"],
    )


def _vortex_track(cfg: dict):
    v = cfg["scene"]["vortex"]
    if v is None:
        return None
    n = cfg["scene"]["n_steps"]
    drift = v.get("drift", [0.0, 0.0])
    nx, ny = cfg["scene"]["nx"], cfg["scene"]["ny"]
    track = []
    for k in range(n):
        ci = int(round(v["center"][0] + drift[0] * k)) % nx
        cj = int(round(v["center"][1] + drift[1] * k)) % ny
        track.append(VortexSpec(center=(ci, cj), depth=v["depth"],
                                radius=v["radius"], v_max=v["v_max"]))
    return track


def _generate_series(cfg: dict):
    sc = cfg["scene"]
    return generate_series(_scene_spec(cfg), sc["t0"], sc["dt"], sc["n_steps"],
                           _vortex_track(cfg))


def _train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(**cfg["train"])


# ---------------------------------------------------------------------------
# subcommands

def cmd_gen(args, cfg):
    series = _generate_series(cfg)
    save_series(series, args.out)
    print(f"wrote {len(series)} scenes to {args.out}")
    return 0


def _dataset_for_key(cfg, series, key: ModelKey, n: int):
    index = datapipe.build_stratification(series)
    return datapipe.sample_balanced(index, series, key, n,
                                    cfg["sampling"]["sample_seed"])


def cmd_sample(args, cfg):
    series = load_series(args.series) if args.series else _generate_series(cfg)
    key = ModelKey.from_code(args.key)
    n = args.n or (cfg["sampling"]["n_cloudy"] if key.sky.name == "CLOUDY"
                   else cfg["sampling"]["n_clear"])
    ds = _dataset_for_key(cfg, series, key, n)
    datapipe.save_dataset(ds, args.out)
    if args.csv:
        datapipe.export_csv(ds, Path(args.out).with_suffix(".csv"))
    print(f"wrote {len(ds)} samples for {key.code} to {args.out}")
    return 0


def cmd_train(args, cfg):
    outdir = Path(args.out)
    _echo_config(cfg, outdir)
    key = ModelKey.from_code(args.key)
    if args.data:
        ds = datapipe.load_dataset(args.data)
        if ds.key != key:
            raise ValueError(f"dataset holds key {ds.key.code}, not {args.key}")
    else:
        series = _generate_series(cfg)
        n = (cfg["sampling"]["n_cloudy"] if key.sky.name == "CLOUDY"
             else cfg["sampling"]["n_clear"])
        ds = _dataset_for_key(cfg, series, key, n)
    tr, va = datapipe.split(ds, cfg["sampling"]["train_frac"],
                            cfg["sampling"]["split_seed"])
    model, history = train(key, tr, va, _train_config(cfg))
    model.meta["name"] = f"{key.code}.rnnw"
    save_weights(model, outdir / f"{key.code}.rnnw")
    history.to_csv(outdir / f"{key.code}_history.csv")
    report.save_history_figure(history, outdir / f"{key.code}_history.png")
    print(f"{key.code}: {history.epochs} epochs, "
          f"best NRMSE {model.meta['final_nrmse']:.5f} "
          f"({history.stop_reason})")
    return 0


def cmd_finetune(args, cfg):
    outdir = Path(args.out)
    _echo_config(cfg, outdir)
    base = load_weights(args.base)
    base.meta.setdefault("name", Path(args.base).name)
    ds = datapipe.load_dataset(args.data)
    tr, va = datapipe.split(ds, cfg["sampling"]["train_frac"],
                            cfg["sampling"]["split_seed"])
    model, history = finetune(base, tr, va, _train_config(cfg))
    model.meta["name"] = f"{base.key.code}.rnnw"
    save_weights(model, outdir / f"{base.key.code}.rnnw")
    history.to_csv(outdir / f"{base.key.code}_history.csv")
    report.save_history_figure(history, outdir / f"{base.key.code}_history.png")
    print(f"{base.key.code}: fine-tuned in {history.epochs} epochs, "
          f"best NRMSE {model.meta['final_nrmse']:.5f}")
    return 0


def _field_csv(out, name, arr):
    with open(out / f"{name}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", name])
        for i in range(arr.shape[0]):
            for j in range(arr.shape[1]):
                w.writerow([i, j, repr(float(arr[i, j]))])


def cmd_infer(args, cfg):
    outdir = Path(args.out)
    _echo_config(cfg, outdir)
    bank = bank_load(args.bank)
    series = load_series(args.scene)
    scene = series.scenes[args.step]
    rf = emulate_scene(bank, scene)
    for name in ("lwupt", "lwupb", "lwdnb", "swupt", "swupb", "swdnb"):
        _field_csv(outdir, name, getattr(rf, name))
    print(f"wrote flux fields for step {args.step} to {outdir}")
    return 0


_EVAL_FIELDS = ("swdnb", "lwdnb", "lwupt", "swupt")


def cmd_eval(args, cfg):
    outdir = Path(args.out)
    _echo_config(cfg, outdir)
    bank = bank_load(args.bank)
    series = load_series(args.series)

    ref_fields = {f: [] for f in _EVAL_FIELDS + ("heat",)}
    emu_fields = {f: [] for f in _EVAL_FIELDS + ("heat",)}
    for scene in series.scenes:
        rf_ref = reference_scene(scene)
        rf_emu = emulate_scene(bank, scene)
        for f in _EVAL_FIELDS:
            ref_fields[f].append(getattr(rf_ref, f))
            emu_fields[f].append(getattr(rf_emu, f))
        # column-integrated heating, both modes combined
        ref_fields["heat"].append((rf_ref.heating_lw + rf_ref.heating_sw).sum(axis=2))
        emu_fields["heat"].append((rf_emu.heating_lw + rf_emu.heating_sw).sum(axis=2))

    pearson_rows = []
    for f in ref_fields:
        r = np.concatenate([a.ravel() for a in ref_fields[f]])
        e = np.concatenate([a.ravel() for a in emu_fields[f]])
        try:
            pearson_rows.append((f, evalkit.pearson(r, e)))
        except ValueError:
            pearson_rows.append((f, float("nan")))
    with open(outdir / "pearson.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variable", "pearson"])
        w.writerows(pearson_rows)

    mid = len(series) // 2
    for f in _EVAL_FIELDS:
        emap = evalkit.error_map(ref_fields[f][mid], emu_fields[f][mid],
                                 floor=cfg["eval"]["floor_flux"])
        report.save_error_map_figure(ref_fields[f][mid], emu_fields[f][mid],
                                     emap, f, outdir / f"error_map_{f}.png")
    records = {f: evalkit.temporal_series(ref_fields[f], emu_fields[f],
                                          series.timestamps)
               for f in _EVAL_FIELDS}
    with open(outdir / "temporal.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variable", "t", "mean_ref", "rmse", "max_abs_err"])
        for f, recs in records.items():
            for r in recs:
                w.writerow([f, r["t"], r["mean_ref"], r["rmse"], r["max_abs_err"]])
    report.save_temporal_figure(records, outdir / "temporal.png")

    for f, r in pearson_rows:
        print(f"pearson[{f}] = {r:.5f}")
    if args.check:
        worst = min(r for _, r in pearson_rows if np.isfinite(r))
        if worst < cfg["eval"]["pearson_min"]:
            print(f"CHECK FAILED: min pearson {worst:.4f} "
                  f"< {cfg['eval']['pearson_min']}")
            return 3
    return 0


def cmd_track(args, cfg):
    outdir = Path(args.out)
    _echo_config(cfg, outdir)
    series = load_series(args.series)
    radius = cfg["eval"]["refine_radius"]
    if args.other:
        other = load_series(args.other)
        pts, pts_b, sep = evalkit.track_series(series, radius, other)
        evalkit.tracks_to_csv(pts, outdir / "track_a.csv")
        evalkit.tracks_to_csv(pts_b, outdir / "track_b.csv")
        with open(outdir / "separation.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "cells"])
            for p, s in zip(pts, sep):
                w.writerow([p.t, s])
        report.save_track_figure(pts, outdir / "track.png", pts_b)
        print(f"max separation {max(sep):.2f} cells")
    else:
        pts = evalkit.track_series(series, radius)
        evalkit.tracks_to_csv(pts, outdir / "track.csv")
        report.save_track_figure(pts, outdir / "track.png")
        print(f"tracked {len(pts)} steps")
    return 0


def cmd_simulate(args, cfg):
    outdir = Path(args.out)
    _echo_config(cfg, outdir)
    bank = bank_load(args.bank)
    dr = cfg["driver"]
    params = SurfaceParams(lat=cfg["scene"]["lat0"], lon=cfg["scene"]["lon0"],
                           c_surf_land=dr["c_surf_land"],
                           c_surf_ocean=dr["c_surf_ocean"],
                           dp_dt_mean=dr["dp_dt_mean"])
    sc = cfg["scene"]

    if args.scene:
        series = load_series(args.scene)
        initial = series.scenes[0]
        ref = run_coupled_scene(initial, ReferenceSource(), dr["n_steps"],
                                dr["dt"], params, sc["lat0"], sc["lon0"],
                                sc["dx_deg"])
        emu = run_coupled_scene(initial, EmulatorSource(bank), dr["n_steps"],
                                dr["dt"], params, sc["lat0"], sc["lon0"],
                                sc["dx_deg"])
        spec = _scene_spec(cfg)
        pts, pts_b, sep = evalkit.track_series(
            ref.as_series(spec, dr["dt"]), cfg["eval"]["refine_radius"],
            emu.as_series(spec, dr["dt"]))
        evalkit.tracks_to_csv(pts, outdir / "track_reference.csv")
        evalkit.tracks_to_csv(pts_b, outdir / "track_emulator.csv")
        report.save_track_figure(pts, outdir / "track.png", pts_b)
        print(f"max track separation {max(sep):.2f} cells "
              f"(clamps ref {ref.clamp_count}, emu {emu.clamp_count})")
    else:
        spec = _scene_spec(cfg)
        scene = scenegen.generate_scene(spec, sc["t0"])
        col = scene.column(spec.nx // 2, spec.ny // 2)
        ref = run_coupled(col, sc["t0"], ReferenceSource(), dr["n_steps"],
                          dr["dt"], params)
        emu = run_coupled(col, sc["t0"], EmulatorSource(bank), dr["n_steps"],
                          dr["dt"], params)
        rep = compare_trajectories(ref, emu)
        rep.to_csv(outdir / "divergence.csv")
        report.save_divergence_figure(rep, outdir / "divergence.png")
        print(f"max |dTskin| {rep.max_tskin_err:.3f} K at t={rep.time_of_max}")
    return 0


def cmd_bench(args, cfg):
    outdir = Path(args.out)
    _echo_config(cfg, outdir)
    bank = bank_load(args.bank)
    series = load_series(args.scene)
    clear = load_series(args.clear_scene).scenes[0] if args.clear_scene else None
    rep = benchmark(bank, series.scenes[0], args.reps or cfg["emulator"]["reps"],
                    RefRadConfig(), clear_scene=clear)
    with open(outdir / "bench.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "value"])
        for f in dataclasses.fields(rep):
            v = getattr(rep, f.name)
            if isinstance(v, dict):
                for k2, v2 in v.items():
                    w.writerow([k2, v2])
            else:
                w.writerow([f.name, v])
    report.save_bench_figure(rep, outdir / "bench.png")
    print(f"speedup {rep.speedup:.1f}x "
          f"({rep.columns_per_second_emulator:.0f} vs "
          f"{rep.columns_per_second_reference:.0f} columns/s)")
    if args.check and rep.speedup < cfg["driver"]["speedup_min"]:
        print(f"CHECK FAILED: speedup {rep.speedup:.2f} "
              f"< {cfg['driver']['speedup_min']}")
        return 3
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    p = _Parser(prog="radnet",
                description="Shallow-NN radiation emulator pipeline")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(fn=fn)
        sp.add_argument("--config", help="JSON run configuration")
        return sp

    sp = add("gen", cmd_gen, "generate a synthetic scene series")
    sp.add_argument("--out", required=True)

    sp = add("sample", cmd_sample, "build a balanced training dataset")
    sp.add_argument("--series", help="input series (.rnds); generated if absent")
    sp.add_argument("--key", required=True, help="model key, e.g. O2L")
    sp.add_argument("--n", type=int, help="sample count (default per config)")
    sp.add_argument("--out", required=True)
    sp.add_argument("--csv", action="store_true", help="also write CSV mirror")

    sp = add("train", cmd_train, "train one sub-model")
    sp.add_argument("--key", required=True)
    sp.add_argument("--data", help="dataset file; sampled from config if absent")
    sp.add_argument("--out", required=True)

    sp = add("finetune", cmd_finetune, "warm-start training from a base model")
    sp.add_argument("--base", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--out", required=True)

    sp = add("infer", cmd_infer, "emulate radiation for one scene")
    sp.add_argument("--bank", required=True)
    sp.add_argument("--scene", required=True)
    sp.add_argument("--step", type=int, default=0)
    sp.add_argument("--out", required=True)

    sp = add("eval", cmd_eval, "reference-vs-emulator accuracy reports")
    sp.add_argument("--bank", required=True)
    sp.add_argument("--series", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--check", action="store_true",
                    help="exit 3 if min pearson falls below eval.pearson_min")

    sp = add("track", cmd_track, "vortex tracks (and separation of a pair)")
    sp.add_argument("--series", required=True)
    sp.add_argument("--other")
    sp.add_argument("--out", required=True)

    sp = add("simulate", cmd_simulate, "paired coupled reference/emulator runs")
    sp.add_argument("--bank", required=True)
    sp.add_argument("--scene", help="scene series for a gridded run; "
                    "single-column run if absent")
    sp.add_argument("--out", required=True)

    sp = add("bench", cmd_bench, "emulator vs reference throughput")
    sp.add_argument("--bank", required=True)
    sp.add_argument("--scene", required=True)
    sp.add_argument("--clear-scene", dest="clear_scene",
                    help="all-clear scene for the stability comparison")
    sp.add_argument("--reps", type=int)
    sp.add_argument("--out", required=True)
    sp.add_argument("--check", action="store_true",
                    help="exit 3 if speedup falls below driver.speedup_min")

    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = load_config(args.config)
        return args.fn(args, cfg)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except (FileNotFoundError, DatasetFileError, WeightFileError,
            SceneFileError, json.JSONDecodeError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
