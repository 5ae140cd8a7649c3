"""Training-data pipeline: 8-way categorization, two-step cloud
stratification, balanced sampling, 90/10 splitting, normalization, and
the .rnds binary dataset container.

Stratification is two-level: pixels are first binned by their time-mean
column-max cloud fraction (10 equal-width bins over [0, 1]); within each
pixel bin, cloudy samples are binned by the vertical center of mass of
their cloud fraction (10 equal-width bins over layer indices 1..44).
"""

from __future__ import annotations

import csv
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .domain import (
    FeatureVector,
    ModelKey,
    N_LAYERS,
    Radiation,
    Sky,
    Surface,
    assemble_features,
)
from .net import NormStats
from .refrad import RefRadConfig, reference_radiation
from .scenegen import SceneSeries

MAGIC = b"RNDS"
FORMAT_VERSION = 1
N_INNER_BINS = 10
N_OUTER_BINS = 10


class DatasetFileError(Exception):
    pass


@dataclass(frozen=True)
class Sample:
    features: FeatureVector
    targets: np.ndarray  # 47 values: heating then boundary fluxes
    key: ModelKey
    pixel: tuple | None = None
    timestamp: float | None = None


@dataclass
class Dataset:
    """Array-backed sample collection for one model key.

    Features and targets are float32 (the container precision), one row
    per sample. Pixel/timestamp provenance is kept in memory but not
    serialized to the binary container.
    """

    key: ModelKey
    features: np.ndarray   # (N, n_features) float32
    targets: np.ndarray    # (N, 47) float32
    seed: int = 0
    pixels: np.ndarray | None = None      # (N, 2) int
    timestamps: np.ndarray | None = None  # (N,) float

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float32)
        self.targets = np.asarray(self.targets, dtype=np.float32)
        if self.features.shape[1] != self.key.n_features:
            raise ValueError("feature width does not match key")
        if len(self.features) != len(self.targets):
            raise ValueError("feature/target row count mismatch")

    def __len__(self) -> int:
        return len(self.features)

    def sample(self, i: int) -> Sample:
        return Sample(
            features=FeatureVector(self.features[i].astype(float), self.key),
            targets=self.targets[i].astype(float),
            key=self.key,
            pixel=tuple(self.pixels[i]) if self.pixels is not None else None,
            timestamp=float(self.timestamps[i]) if self.timestamps is not None else None,
        )


def cloud_center_of_mass(cf_layer: np.ndarray) -> float | None:
    """Cloud-fraction-weighted mean layer index (1 = top). None if no cloud."""
    cf = np.asarray(cf_layer, dtype=float)
    if np.any((cf < 0) | (cf > 1)):
        raise ValueError("cloud fraction out of [0, 1]")
    total = cf.sum()
    if total == 0.0:
        return None
    idx = np.arange(1, len(cf) + 1)
    return float((idx * cf).sum() / total)


def _com_bin(com: float) -> int:
    """Equal-width bin over the layer-index range [1, 44]."""
    b = int((com - 1.0) / (N_LAYERS - 1) * N_INNER_BINS)
    return min(max(b, 0), N_INNER_BINS - 1)


def _outer_bin(mean_cf: float) -> int:
    return min(int(mean_cf * N_OUTER_BINS), N_OUTER_BINS - 1)


@dataclass
class StratifiedIndex:
    """Pixel-level outer bins and per-(outer, inner) cloudy-sample membership."""

    outer_assign: np.ndarray        # (nx, ny) int, bin of each pixel
    members: dict = field(default_factory=dict)  # (outer, inner) -> [(t, i, j)]
    com: dict = field(default_factory=dict)      # (t, i, j) -> center of mass

    @property
    def nonempty_bins(self) -> list:
        return sorted(k for k, v in self.members.items() if v)


def build_stratification(series: SceneSeries) -> StratifiedIndex:
    """Two-step stratification of a scene series (cloudy samples only)."""
    if len(series) < 1:
        raise ValueError("series must contain at least one scene")
    nx, ny = series.scenes[0].shape

    # outer: time-mean of per-column max cloud fraction, per pixel
    max_cf = np.stack([s.cf_layer.max(axis=2) for s in series.scenes])
    mean_cf = max_cf.mean(axis=0)
    outer = np.vectorize(_outer_bin)(mean_cf).astype(int)

    index = StratifiedIndex(outer_assign=outer)
    for t_idx, scene in enumerate(series.scenes):
        col_sum = scene.cf_layer.sum(axis=2)
        for i in range(nx):
            for j in range(ny):
                if col_sum[i, j] == 0.0:
                    continue
                com = cloud_center_of_mass(scene.cf_layer[i, j])
                cell = (int(outer[i, j]), _com_bin(com))
                index.members.setdefault(cell, []).append((t_idx, i, j))
                index.com[(t_idx, i, j)] = com
    return index


def _allocate_quotas(sizes: list, n: int) -> list:
    """Split n draws across bins as evenly as capacities allow.

    Bins short of their even share contribute everything they have; the
    shortfall is redistributed evenly over bins with spare capacity.
    """
    if sum(sizes) < n:
        raise ValueError(
            f"requested {n} samples but only {sum(sizes)} available")
    b = len(sizes)
    quotas = [0] * b
    remaining = n
    open_bins = list(range(b))
    while remaining > 0:
        share = remaining // len(open_bins)
        extra = remaining % len(open_bins)
        progressed = False
        nxt = []
        for rank, bi in enumerate(open_bins):
            want = share + (1 if rank < extra else 0)
            room = sizes[bi] - quotas[bi]
            take = min(want, room)
            quotas[bi] += take
            remaining -= take
            if take > 0:
                progressed = True
            if quotas[bi] < sizes[bi]:
                nxt.append(bi)
        open_bins = nxt
        if not progressed and remaining > 0:
            raise ValueError("quota allocation stalled")  # unreachable given capacity check
    return quotas


def _matches(scene, i: int, j: int, key: ModelKey) -> bool:
    surface = Surface.LAND if scene.land_mask[i, j] else Surface.OCEAN
    if surface is not key.surface:
        return False
    if key.radiation is Radiation.SW and scene.mu0_s0[i, j] == 0.0:
        return False
    return True


def _build_rows(series: SceneSeries, picks: list, key: ModelKey,
                cfg: RefRadConfig, seed: int) -> Dataset:
    feats = np.empty((len(picks), key.n_features), dtype=np.float32)
    targs = np.empty((len(picks), 47), dtype=np.float32)
    pixels = np.empty((len(picks), 2), dtype=int)
    times = np.empty(len(picks))
    for r, (t_idx, i, j) in enumerate(picks):
        scene = series.scenes[t_idx]
        col = scene.column(i, j)
        feats[r] = assemble_features(col, key).values
        targs[r] = reference_radiation(col, key.radiation, cfg).to_targets()
        pixels[r] = (i, j)
        times[r] = scene.timestamp
    return Dataset(key=key, features=feats, targets=targs, seed=seed,
                   pixels=pixels, timestamps=times)


def sample_balanced(index: StratifiedIndex, series: SceneSeries, key: ModelKey,
                    n: int, seed: int,
                    cfg: RefRadConfig = RefRadConfig()) -> Dataset:
    """Draw n samples for one model key with reference-scheme targets.

    Cloudy keys draw evenly across the non-empty stratification bins;
    clear keys draw uniformly in space and time. Deterministic in seed.
    """
    rng = np.random.default_rng(seed)

    if key.sky is Sky.CLOUDY:
        # group matching members by inner (center-of-mass) decile first:
        # the decile histogram of the draw should be as flat as capacities
        # allow, with the outer (pixel cloudiness) spread nested inside
        by_inner: dict = {}
        for (outer, inner), members in index.members.items():
            ms = sorted(m for m in members
                        if _matches(series.scenes[m[0]], m[1], m[2], key))
            if ms:
                by_inner.setdefault(inner, {})[outer] = ms
        if not by_inner:
            raise ValueError(f"no matching samples for key {key.code}")
        inners = sorted(by_inner)
        if n < len(inners):
            raise ValueError(
                f"n={n} below the number of non-empty bins ({len(inners)})")
        inner_caps = [sum(len(ms) for ms in by_inner[inn].values())
                      for inn in inners]
        inner_quotas = _allocate_quotas(inner_caps, n)
        picks = []
        for inn, q_inner in zip(inners, inner_quotas):
            outers = sorted(by_inner[inn])
            outer_quotas = _allocate_quotas(
                [len(by_inner[inn][o]) for o in outers], q_inner)
            for o, q in zip(outers, outer_quotas):
                members = by_inner[inn][o]
                sel = rng.choice(len(members), size=q, replace=False)
                picks.extend(members[s] for s in sorted(sel))
    else:
        candidates = []
        for t_idx, scene in enumerate(series.scenes):
            cloudy = scene.cf_layer.sum(axis=2) > 0.0
            for i in range(scene.shape[0]):
                for j in range(scene.shape[1]):
                    if not cloudy[i, j] and _matches(scene, i, j, key):
                        candidates.append((t_idx, i, j))
        if not candidates:
            raise ValueError(f"no matching samples for key {key.code}")
        if len(candidates) < n:
            raise ValueError(
                f"requested {n} samples but only {len(candidates)} available")
        sel = rng.choice(len(candidates), size=n, replace=False)
        picks = [candidates[s] for s in sorted(sel)]

    picks.sort()
    return _build_rows(series, picks, key, cfg, seed)


def split(ds: Dataset, train_frac: float, seed: int):
    """Seeded shuffle split into (train, validation); sizes ceil/remainder."""
    if not 0.0 < train_frac < 1.0:
        raise ValueError("train_frac must be in (0, 1)")
    n = len(ds)
    if n < 2:
        raise ValueError("dataset too small to split")
    n_train = int(np.ceil(n * train_frac))
    perm = np.random.default_rng(seed).permutation(n)

    def subset(idx):
        return Dataset(
            key=ds.key,
            features=ds.features[idx],
            targets=ds.targets[idx],
            seed=ds.seed,
            pixels=ds.pixels[idx] if ds.pixels is not None else None,
            timestamps=ds.timestamps[idx] if ds.timestamps is not None else None,
        )

    return subset(perm[:n_train]), subset(perm[n_train:])


def fit_normalization(train: Dataset, rel_floor: float = 1e-6) -> NormStats:
    """Per-dimension mean and population std over the training set only.

    The std floor is relative to each dimension's magnitude: a dimension
    whose spread is negligible against its mean (e.g. the fixed pressure
    grid, identical in every sample up to container rounding) gets std 1,
    so it normalizes to ~0 instead of amplifying rounding noise into
    huge activations at inference time.
    """
    if len(train) == 0:
        raise ValueError("cannot fit normalization on an empty dataset")
    f = train.features.astype(np.float64)
    t = train.targets.astype(np.float64)

    def robust_std(x):
        std = x.std(axis=0)
        scale = np.maximum(np.abs(x).max(axis=0), 1.0)
        return np.where(std > rel_floor * scale, std, 1.0)

    return NormStats(
        feat_mean=f.mean(axis=0),
        feat_std=robust_std(f),
        targ_mean=t.mean(axis=0),
        targ_std=robust_std(t),
    )


# ---------------------------------------------------------------------------
# .rnds container

def save_dataset(ds: Dataset, path):
    body = bytearray()
    body += MAGIC
    body += struct.pack("<I", FORMAT_VERSION)
    body += ds.key.code.encode("ascii")
    body += struct.pack("<IIQQ", ds.features.shape[1], ds.targets.shape[1],
                        len(ds), ds.seed)
    rows = np.hstack([ds.features, ds.targets]).astype("<f4")
    body += rows.tobytes()
    body += struct.pack("<I", zlib.crc32(bytes(body)))
    Path(path).write_bytes(bytes(body))


def load_dataset(path) -> Dataset:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise DatasetFileError(f"bad magic in {path.name}")
    if len(raw) < 35:
        raise DatasetFileError(f"truncation: header incomplete in {path.name}")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != FORMAT_VERSION:
        raise DatasetFileError(f"version mismatch: {version}")
    n_feat, n_targ, n_samples, seed = struct.unpack_from("<IIQQ", raw, 11)
    expected = 35 + 4 * (n_feat + n_targ) * n_samples + 4
    if len(raw) < expected:
        raise DatasetFileError(
            f"truncation: {len(raw)} bytes, expected {expected}")
    if len(raw) > expected:
        raise DatasetFileError(f"trailing bytes in {path.name}")
    (crc_stored,) = struct.unpack_from("<I", raw, expected - 4)
    if zlib.crc32(raw[:expected - 4]) != crc_stored:
        raise DatasetFileError(f"checksum failure in {path.name}")

    code = raw[8:11].decode("ascii", errors="replace")
    try:
        key = ModelKey.from_code(code)
    except ValueError as e:
        raise DatasetFileError(str(e)) from None
    if n_feat != key.n_features:
        raise DatasetFileError(
            f"dimension error: n_features={n_feat} for key {key.code}")
    rows = np.frombuffer(raw, dtype="<f4", count=(n_feat + n_targ) * n_samples,
                         offset=35).reshape(n_samples, n_feat + n_targ)
    return Dataset(key=key, features=rows[:, :n_feat].copy(),
                   targets=rows[:, n_feat:].copy(), seed=seed)


def export_csv(ds: Dataset, path):
    """Human-readable mirror of the binary container."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = [f"x{i}" for i in range(ds.features.shape[1])] \
            + [f"y{i}" for i in range(ds.targets.shape[1])]
        w.writerow(["key", ds.key.code, "seed", ds.seed])
        w.writerow(header)
        for f, t in zip(ds.features, ds.targets):
            w.writerow([repr(float(v)) for v in f] + [repr(float(v)) for v in t])
