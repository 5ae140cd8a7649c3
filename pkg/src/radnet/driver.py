"""Coupled feedback loop: time-step temperature with heating rates from
either the reference scheme or the emulator and compare the trajectories.

Forward Euler with dt <= 3600 s. Water vapor, ozone and clouds are held
fixed so the radiative feedback is the only error channel; temperatures
are clamped to the valid physical range with clamp events counted rather
than hidden.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .domain import AtmosphericColumn, Radiation, Surface
from .emulator import EmulatorBank, emulate_column
from .refrad import RefRadConfig, SIGMA_SB, reference_radiation
from .scenegen import Scene, SceneSeries, SceneSpec, solar_geometry

T_CLAMP_LO, T_CLAMP_HI = 150.001, 399.999


@dataclass(frozen=True)
class SurfaceParams:
    lat: float = 29.0
    lon: float = 123.5
    c_surf_land: float = 2e5   # J/m^2/K, pronounced diurnal cycle
    c_surf_ocean: float = 2e7  # damped
    # diagnostic surface-pressure response to column-mean warming, hPa/K;
    # gives the tracker something radiation can actually perturb
    dp_dt_mean: float = 0.5


class ReferenceSource:
    """Radiation from the built-in reference scheme."""

    def __init__(self, cfg: RefRadConfig = RefRadConfig()):
        self.cfg = cfg

    def __call__(self, col: AtmosphericColumn):
        return (reference_radiation(col, Radiation.LW, self.cfg),
                reference_radiation(col, Radiation.SW, self.cfg))


class EmulatorSource:
    """Radiation from a trained 8-model bank."""

    def __init__(self, bank: EmulatorBank):
        self.bank = bank

    def __call__(self, col: AtmosphericColumn):
        return (emulate_column(self.bank, col, Radiation.LW),
                emulate_column(self.bank, col, Radiation.SW))


@dataclass
class ColumnState:
    column: AtmosphericColumn
    t: float


@dataclass
class Trajectory:
    states: list = field(default_factory=list)       # ColumnState per step (incl. initial)
    lw_results: list = field(default_factory=list)   # RadiationResult per step taken
    sw_results: list = field(default_factory=list)
    clamp_count: int = 0

    @property
    def tskin(self) -> np.ndarray:
        return np.array([s.column.t_skin for s in self.states])

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])


def step(state: ColumnState, source, dt: float,
         params: SurfaceParams = SurfaceParams()):
    """One forward-Euler step; returns (new state, lw, sw, clamps)."""
    if not 0.0 < dt <= 3600.0:
        raise ValueError("dt must be in (0, 3600] seconds")
    col = state.column
    lw, sw = source(col)

    t_new = col.t_layer + (lw.heating + sw.heating) * dt / 86400.0

    c_surf = params.c_surf_land if col.surface is Surface.LAND else params.c_surf_ocean
    net_surf = sw.flux_bot_down * (1.0 - col.albedo) \
        + col.emissivity * (lw.flux_bot_down - SIGMA_SB * col.t_skin ** 4)
    tskin_new = col.t_skin + dt * net_surf / c_surf

    clamps = int(np.sum((t_new < T_CLAMP_LO) | (t_new > T_CLAMP_HI)))
    t_new = np.clip(t_new, T_CLAMP_LO, T_CLAMP_HI)
    if not T_CLAMP_LO <= tskin_new <= T_CLAMP_HI:
        clamps += 1
        tskin_new = min(max(tskin_new, T_CLAMP_LO), T_CLAMP_HI)

    t_next = state.t + dt
    col_new = replace(col, t_layer=t_new, t_skin=float(tskin_new),
                      mu0_s0=solar_geometry(params.lat, params.lon, t_next))
    return ColumnState(col_new, t_next), lw, sw, clamps


def run_coupled(initial: AtmosphericColumn, t0: float, source, n_steps: int,
                dt: float, params: SurfaceParams = SurfaceParams()) -> Trajectory:
    """n_steps applications of step on a single column."""
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    state = ColumnState(
        replace(initial, mu0_s0=solar_geometry(params.lat, params.lon, t0)), t0)
    traj = Trajectory(states=[state])
    for _ in range(n_steps):
        state, lw, sw, clamps = step(state, source, dt, params)
        traj.states.append(state)
        traj.lw_results.append(lw)
        traj.sw_results.append(sw)
        traj.clamp_count += clamps
    return traj


@dataclass
class SceneTrajectory:
    scenes: list = field(default_factory=list)
    clamp_count: int = 0

    def as_series(self, spec: SceneSpec, dt: float) -> SceneSeries:
        return SceneSeries(scenes=tuple(self.scenes), spec=spec, dt=dt)


def run_coupled_scene(initial: Scene, source, n_steps: int, dt: float,
                      params: SurfaceParams = SurfaceParams(),
                      lat0: float | None = None, lon0: float | None = None,
                      dx_deg: float = 0.1) -> SceneTrajectory:
    """Step every column of a scene; surface pressure responds
    diagnostically to column-mean temperature change so tracks can diverge."""
    if n_steps < 0:
        raise ValueError("n_steps must be >= 0")
    lat0 = params.lat if lat0 is None else lat0
    lon0 = params.lon if lon0 is None else lon0

    scene = initial
    t_mean0 = initial.t_layer.mean(axis=2)
    p0 = initial.p_surface
    traj = SceneTrajectory(scenes=[scene])

    nx, ny = scene.shape
    for _k in range(n_steps):
        t_next = scene.timestamp + dt
        t_layer = scene.t_layer.copy()
        t_skin = scene.t_skin.copy()
        mu0 = np.empty((nx, ny))
        for i in range(nx):
            for j in range(ny):
                cell_params = replace(params, lat=lat0 + j * dx_deg,
                                      lon=lon0 + i * dx_deg)
                st, _, _, clamps = step(
                    ColumnState(scene.column(i, j), scene.timestamp),
                    source, dt, cell_params)
                t_layer[i, j] = st.column.t_layer
                t_skin[i, j] = st.column.t_skin
                mu0[i, j] = st.column.mu0_s0
                traj.clamp_count += clamps
        p_surface = p0 - params.dp_dt_mean * (t_layer.mean(axis=2) - t_mean0)
        scene = replace(scene, t_layer=t_layer, t_skin=t_skin, mu0_s0=mu0,
                        p_surface=p_surface, timestamp=t_next)
        traj.scenes.append(scene)
    return traj


@dataclass
class DivergenceReport:
    times: np.ndarray
    tskin_abs_err: np.ndarray   # per step
    tlayer_rmse: np.ndarray
    tlayer_max_abs: np.ndarray
    max_tskin_err: float
    time_of_max: float

    def to_csv(self, path):
        import csv
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "tskin_abs_err", "tlayer_rmse", "tlayer_max_abs"])
            for row in zip(self.times, self.tskin_abs_err, self.tlayer_rmse,
                           self.tlayer_max_abs):
                w.writerow(row)


def compare_trajectories(a: Trajectory, b: Trajectory) -> DivergenceReport:
    """Per-step skin and layer temperature divergence between two runs."""
    ta, tb = a.times, b.times
    if len(ta) != len(tb) or not np.array_equal(ta, tb):
        raise ValueError("trajectories misaligned in time")
    tskin_err = np.abs(a.tskin - b.tskin)
    layer_a = np.stack([s.column.t_layer for s in a.states])
    layer_b = np.stack([s.column.t_layer for s in b.states])
    d = layer_a - layer_b
    rmse = np.sqrt(np.mean(d ** 2, axis=1))
    max_abs = np.abs(d).max(axis=1)
    imax = int(np.argmax(tskin_err))
    return DivergenceReport(
        times=ta,
        tskin_abs_err=tskin_err,
        tlayer_rmse=rmse,
        tlayer_max_abs=max_abs,
        max_tskin_err=float(tskin_err[imax]),
        time_of_max=float(ta[imax]),
    )
