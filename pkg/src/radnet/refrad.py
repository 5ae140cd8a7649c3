"""Desk-scale reference radiation: gray two-stream LW and an absorbing /
scattering SW beam. This scheme plays the role of the operational
correlated-k code as the producer of ground-truth heating rates and
boundary fluxes; it is an oracle, not a physics contribution.

Like the operational scheme, cloudy columns cost roughly twice as much to
evaluate because a clear-sky diagnostic pass is run alongside the
total-sky one (the bookkeeping behind clear-sky output variables).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .domain import (
    AtmosphericColumn,
    LevelGrid,
    Radiation,
    RadiationResult,
    validate_column,
)

SIGMA_SB = 5.670374419e-8  # W/m^2/K^4
S0_REF = 1361.0            # W/m^2, used to recover mu0 from mu0_s0


@dataclass(frozen=True)
class RefRadConfig:
    """Broadband optical coefficients, per-hPa mixing-ratio units.

    Defaults give Earth-like magnitudes for a mid-latitude column
    (clear-noon surface SW of several hundred W/m^2, OLR of 200-300).
    """

    b_v: float = 0.08    # LW optical depth per (kg/kg * hPa) water vapor
    b_o: float = 30.0    # LW, ozone
    b_c: float = 0.25    # LW optical depth per unit cloud fraction
    a_v: float = 0.012   # SW absorption, water vapor
    a_o: float = 8.0     # SW absorption, ozone
    a_c: float = 0.9     # SW scattering per unit cloud fraction
    diffusivity: float = 1.66
    sigma_sb: float = SIGMA_SB
    g_over_cp: float = 9.81 / 1004.0
    clear_sky_diagnostics: bool = True


@dataclass(frozen=True)
class FluxProfile:
    """Upward and downward broadband fluxes at the 45 interfaces, top first."""

    up: np.ndarray    # W/m^2
    down: np.ndarray  # W/m^2
    absorbed: float = 0.0  # SW only: total beam extinction booked as absorption


def lw_fluxes(col: AtmosphericColumn, cfg: RefRadConfig = RefRadConfig()) -> FluxProfile:
    """Gray two-stream longwave fluxes.

    Per layer: tau = (b_v*qv + b_o*o3)*dp + b_c*cf, emissivity
    eps = 1 - exp(-diffusivity*tau). Downward pass starts from zero at the
    top; the surface reflects (1 - emissivity) of the arriving downward
    flux and emits as a gray body at t_skin.
    """
    rep = validate_column(col)
    if not rep.ok:
        raise ValueError(f"invalid column: {rep}")
    dp = col.grid.dp
    tau = (cfg.b_v * col.qv_layer + cfg.b_o * col.o3_layer) * dp + cfg.b_c * col.cf_layer
    eps = -np.expm1(-cfg.diffusivity * tau)
    emit = cfg.sigma_sb * col.t_layer ** 4

    n = len(dp)
    down = np.zeros(n + 1)
    for i in range(n):
        down[i + 1] = down[i] * (1.0 - eps[i]) + eps[i] * emit[i]

    up = np.zeros(n + 1)
    up[n] = col.emissivity * cfg.sigma_sb * col.t_skin ** 4 \
        + (1.0 - col.emissivity) * down[n]
    for i in range(n - 1, -1, -1):
        up[i] = up[i + 1] * (1.0 - eps[i]) + eps[i] * emit[i]
    return FluxProfile(up=up, down=down)


def sw_fluxes(col: AtmosphericColumn, cfg: RefRadConfig = RefRadConfig()) -> FluxProfile:
    """Single-pass shortwave beam with absorption and single scattering.

    The slant path uses mu = mu0_s0/S0_ref floored at 0.05. Up-beam
    extinction is booked as absorption so the energy budget closes exactly.
    Returns all zeros at night (mu0_s0 = 0).
    """
    rep = validate_column(col)
    if not rep.ok:
        raise ValueError(f"invalid column: {rep}")
    n = col.grid.n_layers
    if col.mu0_s0 == 0.0:
        return FluxProfile(up=np.zeros(n + 1), down=np.zeros(n + 1))

    dp = col.grid.dp
    mu = min(max(col.mu0_s0 / S0_REF, 0.05), 1.0)
    tau_abs = (cfg.a_v * col.qv_layer + cfg.a_o * col.o3_layer) * dp
    tau_sct = cfg.a_c * col.cf_layer
    tau = tau_abs + tau_sct
    t = np.exp(-tau / mu)
    with np.errstate(invalid="ignore"):
        omega = np.where(tau > 0.0, tau_sct / np.where(tau > 0.0, tau, 1.0), 0.0)

    down = np.zeros(n + 1)
    down[0] = col.mu0_s0
    source_up = np.zeros(n)
    absorbed = 0.0
    for i in range(n):
        ext = down[i] * (1.0 - t[i])
        source_up[i] = ext * omega[i]
        absorbed += ext * (1.0 - omega[i])
        down[i + 1] = down[i] * t[i]

    up = np.zeros(n + 1)
    up[n] = col.albedo * down[n]
    for i in range(n - 1, -1, -1):
        # the upward beam's extinction in layer i is counted as absorption
        absorbed += up[i + 1] * (1.0 - t[i])
        up[i] = up[i + 1] * t[i] + source_up[i]
    return FluxProfile(up=up, down=down, absorbed=absorbed)


def heating_rates(fp: FluxProfile, grid: LevelGrid,
                  cfg: RefRadConfig = RefRadConfig()) -> np.ndarray:
    """Heating rates (K/day) from the divergence of the net downward flux.

    Layer i absorbs F_i - F_{i+1} with F = down - up, so a net flux that
    decreases from top to surface heats every layer.
    """
    dp = grid.dp
    if np.any(dp <= 0):
        raise ValueError("zero or negative layer thickness")
    f_net = fp.down - fp.up
    return cfg.g_over_cp * (f_net[:-1] - f_net[1:]) / (dp * 100.0) * 86400.0


def cloud_cover_maxrand(cf_layer: np.ndarray) -> float:
    """Total cloud cover under the maximum-random overlap assumption.

    Adjacent cloudy layers overlap maximally; blocks separated by a clear
    layer combine randomly. The recurrence over layers is inherently
    sequential, like the overlap bookkeeping in operational schemes.
    """
    cover = 0.0
    prev = 0.0
    for cf in np.asarray(cf_layer, dtype=float):
        if cf > prev:
            # the newly exposed part of this block overlaps randomly
            # with everything above the block
            cover = cover + (1.0 - cover) * (cf - prev) / (1.0 - prev) \
                if prev < 1.0 else cover
        prev = cf
    return float(cover)


def reference_radiation(col: AtmosphericColumn, mode: Radiation,
                        cfg: RefRadConfig = RefRadConfig()) -> RadiationResult:
    """Full 47-value reference result for one column and one radiation mode.

    Cloudy columns additionally produce the cloudy-sky diagnostic set
    (clear-sky fluxes/heating, cloud radiative forcing, overlap cloud
    cover), which is where the operational scheme's clear/cloudy cost
    asymmetry comes from.
    """
    if mode is Radiation.LW:
        fp = lw_fluxes(col, cfg)
    else:
        fp = sw_fluxes(col, cfg)
    hr = heating_rates(fp, col.grid, cfg)
    diagnostics = None
    if cfg.clear_sky_diagnostics and np.any(col.cf_layer > 0.0):
        diagnostics = _cloudy_sky_diagnostics(col, mode, fp, hr, cfg)
    return RadiationResult(
        heating=hr,
        flux_top_up=float(fp.up[0]),
        flux_bot_up=float(fp.up[-1]),
        flux_bot_down=float(fp.down[-1]),
        mode=mode,
        diagnostics=diagnostics,
    )


def _cloudy_sky_diagnostics(col: AtmosphericColumn, mode: Radiation,
                            fp: FluxProfile, hr: np.ndarray,
                            cfg: RefRadConfig) -> dict:
    """Clear-sky pass and cloud-forcing products for a cloudy column.

    Mirrors the operational scheme's clear-sky output variables (…C
    fluxes), cloud radiative forcing, and overlap total cloud cover.
    """
    clear = replace(col, cf_layer=np.zeros_like(col.cf_layer))
    if mode is Radiation.LW:
        fp_clr = lw_fluxes(clear, cfg)
    else:
        fp_clr = sw_fluxes(clear, cfg)
    hr_clr = heating_rates(fp_clr, col.grid, cfg)
    return {
        "cloud_cover": cloud_cover_maxrand(col.cf_layer),
        "clear_flux_top_up": float(fp_clr.up[0]),
        "clear_flux_bot_up": float(fp_clr.up[-1]),
        "clear_flux_bot_down": float(fp_clr.down[-1]),
        "clear_heating": hr_clr,
        "forcing_top_up": float(fp.up[0] - fp_clr.up[0]),
        "forcing_bot_down": float(fp.down[-1] - fp_clr.down[-1]),
        "forcing_heating": hr - hr_clr,
    }
