"""Deterministic synthetic weather scenes and time series.

Scenes are radiative-state snapshots on an nx x ny grid of 44-layer
columns, with surface pressure and 10 m wind diagnostics for vortex
tracking. Everything is a pure function of (spec.seed, timestamp), so
regeneration and parallel generation are reproducible.
"""

from __future__ import annotations

import datetime as _dt
import zlib
from dataclasses import dataclass, field, replace

import numpy as np

from .domain import (
    AtmosphericColumn,
    LevelGrid,
    N_LAYERS,
    Surface,
)

S0 = 1361.0  # W/m^2 solar constant

# standard 45-interface pressure grid: 5 hPa top, ~1013 hPa surface,
# stretched so the upper atmosphere keeps resolution
_P_TOP, _P_SURF = 5.0, 1013.25
_SIGMA = (np.arange(N_LAYERS + 1) / N_LAYERS) ** 1.4
STANDARD_GRID = LevelGrid(_P_TOP + (_P_SURF - _P_TOP) * _SIGMA)

_SCALE_HEIGHT_KM = 7.5
_LAPSE_K_PER_KM = 6.5


@dataclass(frozen=True)
class SeasonParams:
    t_surface_mean: float = 288.0   # K
    t_diurnal_amplitude: float = 8.0  # K, land value; ocean is damped
    qv_surface: float = 0.010       # kg/kg at the surface


@dataclass(frozen=True)
class CloudParams:
    n_blobs: int = 6
    horiz_extent: float = 6.0   # grid cells (Gaussian sigma)
    vert_extent: float = 4.0    # layers (Gaussian sigma)
    max_cf: float = 0.9
    layer_lo: int = 8           # blob centers drawn in [layer_lo, layer_hi]
    layer_hi: int = 40


@dataclass(frozen=True)
class SceneSpec:
    nx: int = 32
    ny: int = 32
    lat0: float = 29.0
    lon0: float = 123.5
    dx_deg: float = 0.1
    land_fraction: float = 0.5
    season: SeasonParams = field(default_factory=SeasonParams)
    clouds: CloudParams = field(default_factory=CloudParams)
    seed: int = 0

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise ValueError("grid must be at least 8x8")


@dataclass(frozen=True)
class VortexSpec:
    center: tuple       # (i, j) grid indices
    depth: float        # hPa surface-pressure depression
    radius: float       # grid cells
    v_max: float        # m/s peak tangential wind

    def __post_init__(self):
        if self.depth <= 0:
            raise ValueError("vortex depth must be positive")
        if self.radius < 2:
            raise ValueError("vortex radius must be >= 2 cells")


@dataclass(frozen=True)
class Scene:
    """Gridded atmospheric state. Field arrays are indexed [i, j(, layer)]."""

    grid: LevelGrid
    t_layer: np.ndarray    # (nx, ny, 44) K
    qv_layer: np.ndarray   # (nx, ny, 44) kg/kg
    o3_layer: np.ndarray   # (nx, ny, 44) kg/kg
    cf_layer: np.ndarray   # (nx, ny, 44)
    t_skin: np.ndarray     # (nx, ny) K
    emissivity: np.ndarray
    albedo: np.ndarray
    mu0_s0: np.ndarray     # (nx, ny) W/m^2
    land_mask: np.ndarray  # (nx, ny) bool
    p_surface: np.ndarray  # (nx, ny) hPa
    wind10: np.ndarray     # (nx, ny) m/s
    timestamp: float       # seconds since epoch

    @property
    def shape(self) -> tuple:
        return self.t_skin.shape

    def column(self, i: int, j: int) -> AtmosphericColumn:
        return AtmosphericColumn(
            grid=self.grid,
            t_layer=self.t_layer[i, j],
            qv_layer=self.qv_layer[i, j],
            o3_layer=self.o3_layer[i, j],
            cf_layer=self.cf_layer[i, j],
            t_skin=float(self.t_skin[i, j]),
            emissivity=float(self.emissivity[i, j]),
            albedo=float(self.albedo[i, j]),
            mu0_s0=float(self.mu0_s0[i, j]),
            surface=Surface.LAND if self.land_mask[i, j] else Surface.OCEAN,
        )

    def columns(self):
        nx, ny = self.shape
        for i in range(nx):
            for j in range(ny):
                yield (i, j), self.column(i, j)


@dataclass(frozen=True)
class SceneSeries:
    scenes: tuple  # of Scene, uniformly spaced in time
    spec: SceneSpec
    dt: float

    def __len__(self) -> int:
        return len(self.scenes)

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([s.timestamp for s in self.scenes])


def _smooth_field(nx: int, ny: int, seed: int, tag: str, t_phase: float = 0.0) -> np.ndarray:
    """Seeded smooth field in [-1, 1]-ish: sum of 8 sinusoids with random
    wavevectors and phases. Deterministic in (seed, tag)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(tag.encode())]))
    kx = rng.uniform(0.5, 3.0, 8) * 2 * np.pi / nx
    ky = rng.uniform(0.5, 3.0, 8) * 2 * np.pi / ny
    phase = rng.uniform(0, 2 * np.pi, 8)
    amp = rng.uniform(0.5, 1.0, 8)
    x = np.arange(nx)[:, None]
    y = np.arange(ny)[None, :]
    f = np.zeros((nx, ny))
    for m in range(8):
        f += amp[m] * np.sin(kx[m] * x + ky[m] * y + phase[m] + t_phase)
    return f / np.sum(amp)


def solar_geometry(lat: float, lon: float, t: float) -> float:
    """Top-of-atmosphere downward shortwave S0*max(0, cos(zenith)), W/m^2.

    Standard declination / hour-angle formula; t is seconds since epoch (UTC).
    """
    dt = _dt.datetime.fromtimestamp(t, tz=_dt.timezone.utc)
    doy = dt.timetuple().tm_yday
    frac_hours = dt.hour + dt.minute / 60.0 + dt.second / 3600.0
    decl = np.radians(-23.44) * np.cos(2 * np.pi * (doy + 10) / 365.0)
    # hour angle: 0 at local solar noon
    hour_angle = np.radians(15.0 * (frac_hours - 12.0) + lon)
    phi = np.radians(lat)
    cos_z = np.sin(phi) * np.sin(decl) + np.cos(phi) * np.cos(decl) * np.cos(hour_angle)
    return float(S0 * max(0.0, cos_z))


def _solar_grid(spec: SceneSpec, t: float) -> np.ndarray:
    lats = spec.lat0 + np.arange(spec.ny) * spec.dx_deg
    lons = spec.lon0 + np.arange(spec.nx) * spec.dx_deg
    out = np.empty((spec.nx, spec.ny))
    for i, lon in enumerate(lons):
        for j, lat in enumerate(lats):
            out[i, j] = solar_geometry(lat, lon, t)
    return out


def generate_scene(spec: SceneSpec, t: float) -> Scene:
    """Deterministic scene at time t. Same (spec, t) gives bit-identical output."""
    nx, ny = spec.nx, spec.ny
    grid = STANDARD_GRID
    p_lay = grid.p_layer

    # height above surface from the scale-height relation, km
    z = _SCALE_HEIGHT_KM * np.log(_P_SURF / p_lay)

    # surface temperature: seasonal mean + smooth horizontal pattern + diurnal
    perturb = _smooth_field(nx, ny, spec.seed, "tsurf")
    land = _land_mask(spec)
    hour = (t / 3600.0 + spec.lon0 / 15.0) % 24.0
    diurnal = np.cos(2 * np.pi * (hour - 14.0) / 24.0)  # peak mid-afternoon
    amp = np.where(land, spec.season.t_diurnal_amplitude,
                   0.15 * spec.season.t_diurnal_amplitude)
    ts_air = spec.season.t_surface_mean + 4.0 * perturb
    t_skin = ts_air + amp * diurnal

    # temperature profile: constant lapse rate with a 210 K tropopause floor
    t_layer = np.maximum(ts_air[:, :, None] - _LAPSE_K_PER_KM * z[None, None, :], 210.0)

    # water vapor decays as (p/ps)^3; ozone is a Gaussian in ln p near 20 hPa
    qv_s = spec.season.qv_surface * (1.0 + 0.3 * _smooth_field(nx, ny, spec.seed, "qv"))
    qv_s = np.clip(qv_s, 1e-5, None)
    qv = qv_s[:, :, None] * (p_lay / _P_SURF)[None, None, :] ** 3
    o3 = 8e-6 * np.exp(-0.5 * ((np.log(p_lay) - np.log(20.0)) / 0.8) ** 2)
    o3_layer = np.broadcast_to(o3, (nx, ny, N_LAYERS)).copy()

    cf = _cloud_field(spec, t)

    mu0 = _solar_grid(spec, t)
    emissivity = np.where(land, 0.96, 0.985)
    albedo = np.where(land, 0.25, 0.08)

    p_surface = _P_SURF + 2.0 * _smooth_field(nx, ny, spec.seed, "psfc")
    wind10 = 4.0 + 2.0 * _smooth_field(nx, ny, spec.seed, "wind")
    wind10 = np.clip(wind10, 0.0, None)

    return Scene(
        grid=grid,
        t_layer=t_layer,
        qv_layer=qv,
        o3_layer=o3_layer,
        cf_layer=cf,
        t_skin=t_skin,
        emissivity=emissivity,
        albedo=albedo,
        mu0_s0=mu0,
        land_mask=land,
        p_surface=p_surface,
        wind10=wind10,
        timestamp=float(t),
    )


def _land_mask(spec: SceneSpec) -> np.ndarray:
    if spec.land_fraction >= 1.0:
        return np.ones((spec.nx, spec.ny), dtype=bool)
    if spec.land_fraction <= 0.0:
        return np.zeros((spec.nx, spec.ny), dtype=bool)
    f = _smooth_field(spec.nx, spec.ny, spec.seed, "land")
    thresh = np.quantile(f, 1.0 - spec.land_fraction)
    return f > thresh


def _cloud_field(spec: SceneSpec, t: float) -> np.ndarray:
    """Cloud fraction as drifting 3-D Gaussian blobs, clipped to max_cf."""
    cp = spec.clouds
    nx, ny = spec.nx, spec.ny
    cf = np.zeros((nx, ny, N_LAYERS))
    if cp.n_blobs == 0 or cp.max_cf <= 0.0:
        return cf
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0xC10D]))
    x0 = rng.uniform(0, nx, cp.n_blobs)
    y0 = rng.uniform(0, ny, cp.n_blobs)
    lay0 = rng.uniform(cp.layer_lo, cp.layer_hi, cp.n_blobs)
    vx = rng.uniform(-1.0, 1.0, cp.n_blobs) / 3600.0  # cells per second
    vy = rng.uniform(-1.0, 1.0, cp.n_blobs) / 3600.0
    peak = rng.uniform(0.5, 1.0, cp.n_blobs)

    x = np.arange(nx)[:, None, None]
    y = np.arange(ny)[None, :, None]
    lay = np.arange(N_LAYERS)[None, None, :]
    for b in range(cp.n_blobs):
        cx = (x0[b] + vx[b] * t) % nx
        cy = (y0[b] + vy[b] * t) % ny
        # wrap-around horizontal distance keeps blobs smooth at the edges
        ddx = np.minimum(np.abs(x - cx), nx - np.abs(x - cx))
        ddy = np.minimum(np.abs(y - cy), ny - np.abs(y - cy))
        r2 = (ddx / cp.horiz_extent) ** 2 + (ddy / cp.horiz_extent) ** 2 \
            + ((lay - lay0[b]) / cp.vert_extent) ** 2
        blob = peak[b] * np.exp(-0.5 * r2)
        blob[blob < 0.02] = 0.0  # compact support
        cf += blob
    return np.clip(cf, 0.0, cp.max_cf)


def inject_vortex(scene: Scene, v: VortexSpec) -> Scene:
    """Overlay an analytic vortex: Gaussian pressure depression, Rankine-like
    tangential wind peaking at the radius, and an annulus of raised cloud."""
    nx, ny = scene.shape
    ci, cj = v.center
    if not (0 <= ci < nx and 0 <= cj < ny):
        raise ValueError(f"vortex center {v.center} outside {nx}x{ny} grid")

    i = np.arange(nx)[:, None]
    j = np.arange(ny)[None, :]
    r = np.hypot(i - ci, j - cj)

    p_surface = scene.p_surface - v.depth * np.exp(-r ** 2 / (2.0 * v.radius ** 2))

    with np.errstate(divide="ignore"):
        rankine = np.where(r <= v.radius, r / v.radius,
                           np.where(r > 0, v.radius / r, 0.0))
    wind10 = np.maximum(scene.wind10, v.v_max * rankine)

    # eyewall cloud annulus over the mid-troposphere
    annulus = np.exp(-0.5 * ((r - v.radius) / (0.5 * v.radius)) ** 2)
    cf = scene.cf_layer.copy()
    lo, hi = 20, 40
    cf[:, :, lo:hi] = np.clip(
        cf[:, :, lo:hi] + 0.6 * annulus[:, :, None], 0.0, 0.95)

    return replace(scene, p_surface=p_surface, wind10=wind10, cf_layer=cf)


def generate_series(spec: SceneSpec, t0: float, dt: float, n: int,
                    vortex_track: list | None = None) -> SceneSeries:
    """n scenes at t0 + k*dt; an optional per-step vortex track is applied."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if vortex_track is not None and len(vortex_track) != n:
        raise ValueError(
            f"vortex track length {len(vortex_track)} does not match n={n}")
    scenes = []
    for k in range(n):
        s = generate_scene(spec, t0 + k * dt)
        if vortex_track is not None:
            s = inject_vortex(s, vortex_track[k])
        scenes.append(s)
    return SceneSeries(scenes=tuple(scenes), spec=spec, dt=float(dt))


# ---------------------------------------------------------------------------
# scene-series container (.rnds envelope shared with the dataset files:
# magic / version / payload / CRC32 trailer)

_SCENE_MAGIC = b"RNDS"
_SCENE_TAG = b"SCN"
_SCENE_VERSION = 1


class SceneFileError(Exception):
    pass


def _spec_to_dict(spec: SceneSpec) -> dict:
    import dataclasses
    return dataclasses.asdict(spec)


def _spec_from_dict(d: dict) -> SceneSpec:
    d = dict(d)
    d["season"] = SeasonParams(**d["season"])
    d["clouds"] = CloudParams(**d["clouds"])
    return SceneSpec(**d)


def save_series(series: SceneSeries, path):
    """Write a scene series; arrays are stored float32, land mask as u8."""
    import json
    import struct

    spec_json = json.dumps(_spec_to_dict(series.spec)).encode()
    body = bytearray()
    body += _SCENE_MAGIC
    body += struct.pack("<I", _SCENE_VERSION)
    body += _SCENE_TAG
    first = series.scenes[0]
    nx, ny = first.shape
    body += struct.pack("<IIId", len(series.scenes), nx, ny, series.dt)
    body += struct.pack("<I", len(spec_json))
    body += spec_json
    body += np.asarray(first.grid.p_interface, dtype="<f8").tobytes()
    for s in series.scenes:
        body += struct.pack("<d", s.timestamp)
        for arr in (s.t_layer, s.qv_layer, s.o3_layer, s.cf_layer,
                    s.t_skin, s.emissivity, s.albedo, s.mu0_s0,
                    s.p_surface, s.wind10):
            body += np.ascontiguousarray(arr, dtype="<f4").tobytes()
        body += np.ascontiguousarray(s.land_mask, dtype="u1").tobytes()
    import zlib as _zlib
    body += struct.pack("<I", _zlib.crc32(bytes(body)))
    from pathlib import Path
    Path(path).write_bytes(bytes(body))


def load_series(path) -> SceneSeries:
    import json
    import struct
    import zlib as _zlib
    from pathlib import Path

    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != _SCENE_MAGIC:
        raise SceneFileError(f"bad magic in {Path(path).name}")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != _SCENE_VERSION:
        raise SceneFileError(f"version mismatch: {version}")
    if raw[8:11] != _SCENE_TAG:
        raise SceneFileError("not a scene-series file")
    (crc_stored,) = struct.unpack_from("<I", raw, len(raw) - 4)
    if _zlib.crc32(raw[:-4]) != crc_stored:
        raise SceneFileError(f"checksum failure in {Path(path).name}")

    n_scenes, nx, ny, dt = struct.unpack_from("<IIId", raw, 11)
    (spec_len,) = struct.unpack_from("<I", raw, 31)
    off = 35
    spec = _spec_from_dict(json.loads(raw[off:off + spec_len].decode()))
    off += spec_len
    p_int = np.frombuffer(raw, dtype="<f8", count=N_LAYERS + 1, offset=off).copy()
    off += 8 * (N_LAYERS + 1)
    grid = LevelGrid(p_int)

    def take(shape, dtype="<f4"):
        nonlocal off
        cnt = int(np.prod(shape))
        size = np.dtype(dtype).itemsize
        a = np.frombuffer(raw, dtype=dtype, count=cnt, offset=off).reshape(shape)
        off += size * cnt
        return a.astype(float) if dtype == "<f4" else a

    scenes = []
    for _ in range(n_scenes):
        (ts,) = struct.unpack_from("<d", raw, off)
        off += 8
        t_layer = take((nx, ny, N_LAYERS))
        qv = np.clip(take((nx, ny, N_LAYERS)), 0.0, None)
        o3 = np.clip(take((nx, ny, N_LAYERS)), 0.0, None)
        cf = np.clip(take((nx, ny, N_LAYERS)), 0.0, 1.0)
        t_skin = take((nx, ny))
        emissivity = np.clip(take((nx, ny)), 0.0, 1.0)
        albedo = np.clip(take((nx, ny)), 0.0, 1.0)
        mu0 = np.clip(take((nx, ny)), 0.0, None)
        p_surface = take((nx, ny))
        wind10 = take((nx, ny))
        land = take((nx, ny), dtype="u1").astype(bool)
        scenes.append(Scene(grid=grid, t_layer=t_layer, qv_layer=qv,
                            o3_layer=o3, cf_layer=cf, t_skin=t_skin,
                            emissivity=emissivity, albedo=albedo, mu0_s0=mu0,
                            land_mask=land, p_surface=p_surface, wind10=wind10,
                            timestamp=ts))
    return SceneSeries(scenes=tuple(scenes), spec=spec, dt=dt)
