import json
import time
from pathlib import Path

import numpy as np
import pytest

from radnet import datapipe
from radnet.domain import ALL_KEYS, ModelKey
from radnet.driver import ReferenceSource, run_coupled_scene
from radnet.emulator import EmulatorBank, bank_load
from radnet.net import MlpModel, NormStats, forward_batch, init_kaiming, save_weights
from radnet.scenegen import (CloudParams, SceneSpec, SeasonParams,
                             generate_scene, generate_series)
from radnet.train import TrainConfig, finetune, train

# representative scales so toy-bank outputs are plausible, not trained
_TARG_MEAN = np.concatenate([np.full(44, -1.0), [250.0, 400.0, 350.0]])
_TARG_STD = np.concatenate([np.full(44, 2.0), [60.0, 40.0, 80.0]])


def synthetic_bank(hidden: int = 8, seed: int = 0) -> EmulatorBank:
    """Untrained but structurally valid 8-model bank for plumbing tests."""
    models = {}
    for k_i, key in enumerate(ALL_KEYS):
        n = key.n_features
        w = init_kaiming(n, hidden, 47, seed=seed + k_i)
        norm = NormStats(
            feat_mean=np.zeros(n),
            feat_std=np.ones(n),
            targ_mean=_TARG_MEAN.copy(),
            targ_std=_TARG_STD.copy(),
        )
        models[key] = MlpModel(key, w, norm, meta={"seed": seed + k_i})
    return EmulatorBank(models=models, manifest={})


@pytest.fixture(scope="session")
def toy_bank():
    return synthetic_bank()


# ---------------------------------------------------------------------------
# acceptance-grade trained models (expensive; cached under tests/.cache so the
# first run trains from scratch and later runs reuse the stored bank/metrics)

CACHE = Path(__file__).parent / ".cache"
T0 = 1663113600.0

ACCEPT_SPEC = SceneSpec(nx=64, ny=64, seed=101,
                        clouds=CloudParams(n_blobs=40, horiz_extent=2.5,
                                           vert_extent=3.0))
# per key: (samples from the synthesized series, samples from the
# reference-coupled drift series). The drift samples cover the states a
# radiatively driven column actually visits over a week, which the
# synthesized climatology snapshots do not.
ACCEPT_SAMPLES = {"O2L": (30000, 10000), "L2L": (30000, 10000),
                  "O2S": (22000, 10000), "L2S": (22000, 10000),
                  "O1L": (9000, 3000), "L1L": (9000, 3000),
                  "O1S": (6000, 2000), "L1S": (6000, 2000)}
DRIFT_SPEC = SceneSpec(nx=16, ny=16, seed=108,
                       clouds=CloudParams(n_blobs=5, horiz_extent=1.5,
                                          vert_extent=3.0))
ACCEPT_TRAIN = TrainConfig(lr0=3e-3, batch=256, max_epochs=1500,
                           plateau_patience=10, hidden=64, seed=1)

SEASON_B = SeasonParams(t_surface_mean=293.0, t_diurnal_amplitude=8.0,
                        qv_surface=0.012)


def eval_nrmse(model: MlpModel, ds: datapipe.Dataset) -> float:
    """Physical-space NRMSE of a model on a dataset, normalized per output
    by that dataset's own target std."""
    X = model.norm.normalize_features(ds.features.astype(np.float64))
    pred = model.norm.denormalize_targets(
        forward_batch(model.weights, X, float32=False))
    targ = ds.targets.astype(np.float64)
    rmse = np.sqrt(np.mean((pred - targ) ** 2, axis=0))
    return float(np.mean(rmse / targ.std(axis=0)))


def _build_accept_bank(bankdir: Path):
    bankdir.mkdir(parents=True, exist_ok=True)
    series = generate_series(ACCEPT_SPEC, T0, 1800.0, 48)
    index = datapipe.build_stratification(series)
    drift = run_coupled_scene(generate_scene(DRIFT_SPEC, T0),
                              ReferenceSource(), 336, 1800.0)
    drift_series = drift.as_series(DRIFT_SPEC, 1800.0)
    drift_index = datapipe.build_stratification(drift_series)
    metrics = {}
    for code, (n_synth, n_drift) in ACCEPT_SAMPLES.items():
        key = ModelKey.from_code(code)
        a = datapipe.sample_balanced(index, series, key, n_synth, seed=1)
        b = datapipe.sample_balanced(drift_index, drift_series, key, n_drift,
                                     seed=1)
        ds = datapipe.Dataset(
            key=key,
            features=np.concatenate([a.features, b.features]),
            targets=np.concatenate([a.targets, b.targets]),
            seed=1)
        tr, va = datapipe.split(ds, 0.9, seed=2)
        t0 = time.time()
        model, history = train(key, tr, va, ACCEPT_TRAIN)
        elapsed = time.time() - t0
        save_weights(model, bankdir / f"{code}.rnnw")
        metrics[code] = {
            "nrmse": model.meta["final_nrmse"],
            "epochs": history.epochs,
            "train_seconds": elapsed,
            "stop_reason": history.stop_reason,
            "n_samples": n_synth + n_drift,
        }
    (bankdir / "metrics.json").write_text(json.dumps(metrics, indent=2))


@pytest.fixture(scope="session")
def accept_bank():
    """Trained 8-model bank plus its training metrics."""
    bankdir = CACHE / "acceptance_bank"
    if not (bankdir / "metrics.json").exists():
        _build_accept_bank(bankdir)
    metrics = json.loads((bankdir / "metrics.json").read_text())
    return bank_load(bankdir), metrics


def _build_transfer(outpath: Path):
    spec_a = SceneSpec(nx=48, ny=48, seed=201,
                       clouds=CloudParams(n_blobs=40, horiz_extent=2.5,
                                          vert_extent=3.0))
    # same scene seed: season B is the same region under a shifted
    # climatology ("different month"), so pretrained structure transfers
    spec_b = SceneSpec(nx=48, ny=48, seed=201, season=SEASON_B,
                       clouds=CloudParams(n_blobs=40, horiz_extent=2.5,
                                          vert_extent=3.0))
    key = ModelKey.from_code("O2L")
    series_a = generate_series(spec_a, T0, 1800.0, 24)
    series_b = generate_series(spec_b, T0, 1800.0, 24)
    index_a = datapipe.build_stratification(series_a)
    index_b = datapipe.build_stratification(series_b)

    results = []
    for seed in (0, 1, 2):
        cfg = TrainConfig(lr0=3e-3, batch=256, max_epochs=1500,
                          plateau_patience=10, hidden=64, seed=seed)
        ds_a = datapipe.sample_balanced(index_a, series_a, key, 12000,
                                        seed=10 + seed)
        ds_b = datapipe.sample_balanced(index_b, series_b, key, 12000,
                                        seed=20 + seed)
        ds_b_third = datapipe.sample_balanced(index_b, series_b, key, 4000,
                                              seed=30 + seed)
        tr_a, va_a = datapipe.split(ds_a, 0.9, seed=2)
        tr_b, va_b = datapipe.split(ds_b, 0.9, seed=2)
        model_a, _ = train(key, tr_a, va_a, cfg)
        fresh_b, hist_fresh = train(key, tr_b, va_b, cfg)
        # fine-tune on the 1/3-size sample; validate on the same held-out
        # split as the fresh run so the NRMSE comparison is like-for-like
        tuned, hist_tuned = finetune(model_a, ds_b_third, va_b, cfg)

        fresh_final = fresh_b.meta["final_nrmse"]
        reached = [e for e, v in enumerate(hist_tuned.val_nrmse)
                   if v <= fresh_final]
        results.append({
            "seed": seed,
            "fresh_final_nrmse": fresh_final,
            "fresh_epochs": hist_fresh.epochs,
            "tuned_best_nrmse": tuned.meta["final_nrmse"],
            "tuned_epochs": hist_tuned.epochs,
            "tuned_reach_epoch": (reached[0] + 1) if reached else None,
            "a_on_a_nrmse": eval_nrmse(model_a, va_a),
            "a_on_b_nrmse": eval_nrmse(model_a, va_b),
        })
    outpath.parent.mkdir(parents=True, exist_ok=True)
    outpath.write_text(json.dumps(results, indent=2))


@pytest.fixture(scope="session")
def transfer_results():
    """Season-A/season-B transfer-learning metrics over 3 training seeds."""
    path = CACHE / "transfer.json"
    if not path.exists():
        _build_transfer(path)
    return json.loads(path.read_text())
