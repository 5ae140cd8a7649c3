"""Evaluation surface: Pearson correlation, spatial error maps, temporal
error series, and vortex tracking by the minimum-pressure / minimum-wind
dual criterion. All functions are pure; CSV export lives in the CLI.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


@dataclass
class SpatialErrorMap:
    abs_err: np.ndarray  # same shape as the input fields
    pct_err: np.ndarray  # percent, guarded denominator
    max_abs: float
    mean_abs: float
    frac_below_02pct: float  # fraction of cells with pct_err < 0.2 %


@dataclass
class TrackPoint:
    t: float
    center: tuple        # (i, j), wind-refined
    min_pressure: float  # hPa at the pressure minimum
    wind_at_center: float
    degenerate: bool = False  # uniform field, tie-broken to (0, 0)


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson correlation coefficient, two-pass centered form (64-bit)."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError("length mismatch")
    if len(x) < 2:
        raise ValueError("need at least 2 points")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = np.sqrt(np.sum(xc ** 2))
    sy = np.sqrt(np.sum(yc ** 2))
    if sx == 0.0 or sy == 0.0:
        raise ValueError("correlation undefined for a constant vector")
    r = float(np.sum(xc * yc) / (sx * sy))
    return max(-1.0, min(1.0, r))


def error_map(field_ref: np.ndarray, field_emu: np.ndarray,
              floor: float = 1.0) -> SpatialErrorMap:
    """Absolute and percent error maps; the percent denominator is floored
    so zero-reference cells stay finite."""
    ref = np.asarray(field_ref, dtype=float)
    emu = np.asarray(field_emu, dtype=float)
    if ref.shape != emu.shape:
        raise ValueError("shape mismatch")
    abs_err = np.abs(ref - emu)
    pct = 100.0 * abs_err / np.maximum(np.abs(ref), floor)
    return SpatialErrorMap(
        abs_err=abs_err,
        pct_err=pct,
        max_abs=float(abs_err.max()),
        mean_abs=float(abs_err.mean()),
        frac_below_02pct=float(np.mean(pct < 0.2)),
    )


def temporal_series(series_ref: list, series_emu: list, timestamps) -> list:
    """Per-timestep (mean_ref, rmse, max_abs_err) for aligned field series.

    Each element of the two series is a 2-D field for one timestep.
    """
    if len(series_ref) != len(series_emu):
        raise ValueError("series length mismatch")
    out = []
    for t, ref, emu in zip(timestamps, series_ref, series_emu):
        ref = np.asarray(ref, dtype=float)
        emu = np.asarray(emu, dtype=float)
        if ref.shape != emu.shape:
            raise ValueError("field shape mismatch within series")
        d = emu - ref
        out.append({
            "t": float(t),
            "mean_ref": float(ref.mean()),
            "rmse": float(np.sqrt(np.mean(d ** 2))),
            "max_abs_err": float(np.abs(d).max()),
        })
    return out


def track_vortex(p_surface: np.ndarray, wind10: np.ndarray,
                 refine_radius: int = 5, t: float = 0.0) -> TrackPoint:
    """Pressure-first center fix with wind refinement.

    Coarse center = argmin surface pressure (lexicographic tie-break);
    refined center = argmin 10 m wind within refine_radius of the coarse
    fix, matching the eye's local wind minimum.
    """
    p = np.asarray(p_surface, dtype=float)
    w = np.asarray(wind10, dtype=float)
    if p.shape != w.shape:
        raise ValueError("shape mismatch")
    flat = int(np.argmin(p))
    ci, cj = np.unravel_index(flat, p.shape)
    degenerate = bool(np.all(p == p.flat[0]))

    lo_i, hi_i = max(0, ci - refine_radius), min(p.shape[0], ci + refine_radius + 1)
    lo_j, hi_j = max(0, cj - refine_radius), min(p.shape[1], cj + refine_radius + 1)
    sub = w[lo_i:hi_i, lo_j:hi_j]
    wi, wj = np.unravel_index(int(np.argmin(sub)), sub.shape)
    center = (lo_i + wi, lo_j + wj)
    return TrackPoint(
        t=t,
        center=center,
        min_pressure=float(p[ci, cj]),
        wind_at_center=float(w[center]),
        degenerate=degenerate,
    )


def track_series(series, refine_radius: int = 5, other=None):
    """Tracks for every scene in a series; optionally also the per-step
    center separation (in cells) against a second aligned series."""
    if len(series.scenes) < 1:
        raise ValueError("empty series")
    points = [track_vortex(s.p_surface, s.wind10, refine_radius, s.timestamp)
              for s in series.scenes]
    if other is None:
        return points
    if len(other.scenes) != len(series.scenes):
        raise ValueError("series length mismatch")
    for a, b in zip(series.scenes, other.scenes):
        if a.timestamp != b.timestamp:
            raise ValueError("series timestamps misaligned")
    other_points = [track_vortex(s.p_surface, s.wind10, refine_radius, s.timestamp)
                    for s in other.scenes]
    separation = [float(np.hypot(p.center[0] - q.center[0],
                                 p.center[1] - q.center[1]))
                  for p, q in zip(points, other_points)]
    return points, other_points, separation


def tracks_to_csv(points: list, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "i", "j", "min_pressure", "wind_at_center"])
        for p in points:
            w.writerow([p.t, p.center[0], p.center[1], p.min_pressure,
                        p.wind_at_center])
