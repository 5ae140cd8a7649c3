"""Shared physical data types: columns, model keys, feature vectors, results.

Conventions used everywhere in this package:
  * vertical index 0 = top of atmosphere, increasing downward
  * 44 layers bounded by 45 pressure interfaces
  * units: hPa, K, kg/kg, W/m^2, K/day
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

N_LAYERS = 44
N_INTERFACES = N_LAYERS + 1
N_OUTPUTS = 47          # 44 heating rates + 3 boundary fluxes
N_FEATURES_CLEAR = 178  # 4 vertical blocks of 44 + 2 scalars
N_FEATURES_CLOUDY = 222  # + cloud fraction block

T_MIN, T_MAX = 150.0, 400.0
MU0S0_MAX = 1450.0


class Radiation(Enum):
    LW = "L"
    SW = "S"


class Sky(Enum):
    CLEAR = "1"
    CLOUDY = "2"


class Surface(Enum):
    LAND = "L"
    OCEAN = "O"


@dataclass(frozen=True)
class ModelKey:
    """Selects one of the 8 sub-models: (radiation, sky, surface)."""

    radiation: Radiation
    sky: Sky
    surface: Surface

    @property
    def code(self) -> str:
        """Three-letter code, ordered land-use / weather / radiation (e.g. 'L1S')."""
        return self.surface.value + self.sky.value + self.radiation.value

    @classmethod
    def from_code(cls, code: str) -> "ModelKey":
        if len(code) != 3:
            raise ValueError(f"model key code must be 3 characters, got {code!r}")
        try:
            return cls(Radiation(code[2]), Sky(code[1]), Surface(code[0]))
        except ValueError:
            raise ValueError(f"invalid model key code {code!r}") from None

    @property
    def n_features(self) -> int:
        return N_FEATURES_CLOUDY if self.sky is Sky.CLOUDY else N_FEATURES_CLEAR


ALL_KEYS = tuple(
    ModelKey(r, s, f)
    for f in (Surface.LAND, Surface.OCEAN)
    for s in (Sky.CLEAR, Sky.CLOUDY)
    for r in (Radiation.LW, Radiation.SW)
)


@dataclass(frozen=True)
class LevelGrid:
    """44-layer vertical grid given by 45 interface pressures, top first."""

    p_interface: np.ndarray  # hPa, strictly increasing, length 45

    def __post_init__(self):
        p = np.asarray(self.p_interface, dtype=float)
        object.__setattr__(self, "p_interface", p)

    @property
    def n_layers(self) -> int:
        return len(self.p_interface) - 1

    @property
    def p_layer(self) -> np.ndarray:
        """Layer midpoint pressures (arithmetic mean of bounding interfaces)."""
        return 0.5 * (self.p_interface[:-1] + self.p_interface[1:])

    @property
    def dp(self) -> np.ndarray:
        """Layer thickness in hPa."""
        return np.diff(self.p_interface)


@dataclass(frozen=True)
class AtmosphericColumn:
    """One grid cell's vertical state plus surface scalars."""

    grid: LevelGrid
    t_layer: np.ndarray   # K
    qv_layer: np.ndarray  # kg/kg water vapor
    o3_layer: np.ndarray  # kg/kg ozone
    cf_layer: np.ndarray  # cloud fraction [0, 1]
    t_skin: float         # K
    emissivity: float     # [0, 1]
    albedo: float         # [0, 1]
    mu0_s0: float         # cos(zenith) * solar constant, W/m^2; 0 at night
    surface: Surface

    def __post_init__(self):
        for name in ("t_layer", "qv_layer", "o3_layer", "cf_layer"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))


@dataclass(frozen=True)
class FeatureVector:
    """Flat model input, laid out as
    [p_layer, t_layer, qv_layer, o3_layer, (cf_layer if cloudy), scalar1, scalar2].

    Scalars are (t_skin, emissivity) for LW and (mu0_s0, albedo) for SW.
    """

    values: np.ndarray
    key: ModelKey

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if len(v) != self.key.n_features:
            raise ValueError(
                f"feature vector length {len(v)} does not match key "
                f"{self.key.code} (expects {self.key.n_features})"
            )


@dataclass(frozen=True)
class RadiationResult:
    """47 outputs for one radiation mode: 44 heating rates + 3 boundary fluxes."""

    heating: np.ndarray   # K/day, length 44
    flux_top_up: float    # LWUPT / SWUPT
    flux_bot_up: float    # LWUPB / SWUPB
    flux_bot_down: float  # LWDNB / SWDNB
    mode: Radiation
    # cloudy-sky extras from the reference scheme (total cloud cover,
    # clear-sky fluxes, cloud radiative forcing); None for clear columns
    # and for emulator output — not part of the 47 trained targets
    diagnostics: dict | None = None

    def __post_init__(self):
        object.__setattr__(self, "heating", np.asarray(self.heating, dtype=float))

    def to_targets(self) -> np.ndarray:
        """Flatten to the 47-value target layout: heating then boundary fluxes.

        Flux order follows the output table: LW is (UPT, UPB, DNB),
        SW is (UPT, DNB, UPB).
        """
        if self.mode is Radiation.LW:
            fluxes = (self.flux_top_up, self.flux_bot_up, self.flux_bot_down)
        else:
            fluxes = (self.flux_top_up, self.flux_bot_down, self.flux_bot_up)
        return np.concatenate([self.heating, fluxes])

    @classmethod
    def from_targets(cls, targets: np.ndarray, mode: Radiation) -> "RadiationResult":
        targets = np.asarray(targets, dtype=float)
        if len(targets) != N_OUTPUTS:
            raise ValueError(f"expected {N_OUTPUTS} targets, got {len(targets)}")
        heating = targets[:N_LAYERS]
        a, b, c = targets[N_LAYERS:]
        if mode is Radiation.LW:
            return cls(heating, a, b, c, mode)
        return cls(heating, a, c, b, mode)


@dataclass
class ValidationReport:
    """Accumulated invariant violations for one column; empty means valid."""

    violations: list = field(default_factory=list)

    def add(self, msg: str):
        self.violations.append(msg)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self) -> str:
        return "valid column" if self.ok else "; ".join(self.violations)


def validate_column(col: AtmosphericColumn) -> ValidationReport:
    """Check every column invariant; returns a report listing all violations."""
    rep = ValidationReport()
    p = col.grid.p_interface
    if len(p) != N_INTERFACES:
        rep.add(f"grid has {len(p)} interfaces, expected {N_INTERFACES}")
    if np.any(p <= 0):
        rep.add("non-positive interface pressure")
    if np.any(np.diff(p) <= 0):
        rep.add("p_interface not strictly increasing top to surface")

    for name, arr in (
        ("t_layer", col.t_layer),
        ("qv_layer", col.qv_layer),
        ("o3_layer", col.o3_layer),
        ("cf_layer", col.cf_layer),
    ):
        if len(arr) != N_LAYERS:
            rep.add(f"{name} has length {len(arr)}, expected {N_LAYERS}")
        if not np.all(np.isfinite(arr)):
            rep.add(f"{name} contains non-finite values")

    if len(col.t_layer) == N_LAYERS:
        bad = np.nonzero((col.t_layer <= T_MIN) | (col.t_layer >= T_MAX))[0]
        if bad.size:
            rep.add(f"t_layer out of ({T_MIN}, {T_MAX}) K at layer {bad[0]}")
    if np.any(col.qv_layer < 0):
        rep.add("qv_layer negative")
    if np.any(col.o3_layer < 0):
        rep.add("o3_layer negative")
    bad = np.nonzero((col.cf_layer < 0) | (col.cf_layer > 1))[0]
    if bad.size:
        rep.add(f"cf out of [0,1] at layer {bad[0]}")

    if not T_MIN < col.t_skin < T_MAX:
        rep.add(f"t_skin {col.t_skin} out of ({T_MIN}, {T_MAX}) K")
    if not 0.0 <= col.emissivity <= 1.0:
        rep.add("emissivity out of [0,1]")
    if not 0.0 <= col.albedo <= 1.0:
        rep.add("albedo out of [0,1]")
    if not 0.0 <= col.mu0_s0 <= MU0S0_MAX:
        rep.add(f"mu0_s0 {col.mu0_s0} out of [0, {MU0S0_MAX}]")
    return rep


def classify_sky(col: AtmosphericColumn, cf_threshold: float = 0.0) -> Sky:
    """Cloudy iff the column's maximum cloud fraction strictly exceeds the threshold."""
    if not 0.0 <= cf_threshold < 1.0:
        raise ValueError("cf_threshold must be in [0, 1)")
    rep = validate_column(col)
    if not rep.ok:
        raise ValueError(f"invalid column: {rep}")
    return Sky.CLOUDY if float(np.max(col.cf_layer)) > cf_threshold else Sky.CLEAR


def assemble_features(col: AtmosphericColumn, key: ModelKey) -> FeatureVector:
    """Build the 178/222-element model input for a column under a given key."""
    rep = validate_column(col)
    if not rep.ok:
        raise ValueError(f"invalid column: {rep}")
    if classify_sky(col) is not key.sky:
        raise ValueError(
            f"column sky {classify_sky(col).name} does not match key {key.code}"
        )
    blocks = [col.grid.p_layer, col.t_layer, col.qv_layer, col.o3_layer]
    if key.sky is Sky.CLOUDY:
        blocks.append(col.cf_layer)
    if key.radiation is Radiation.LW:
        scalars = [col.t_skin, col.emissivity]
    else:
        scalars = [col.mu0_s0, col.albedo]
    return FeatureVector(np.concatenate(blocks + [scalars]), key)


def disassemble_features(fv: FeatureVector, grid: LevelGrid,
                         surface: Surface) -> AtmosphericColumn:
    """Inverse of assemble_features, for round-trip testing.

    The layer-pressure block is redundant given the grid and is checked,
    not consumed. Scalars missing from the vector (e.g. mu0_s0 for an LW
    key) are set to neutral values.
    """
    v = fv.values
    n = N_LAYERS
    if not np.allclose(v[:n], grid.p_layer):
        raise ValueError("pressure block inconsistent with grid")
    t = v[n:2 * n]
    qv = v[2 * n:3 * n]
    o3 = v[3 * n:4 * n]
    if fv.key.sky is Sky.CLOUDY:
        cf = v[4 * n:5 * n]
    else:
        cf = np.zeros(n)
    s1, s2 = v[-2], v[-1]
    if fv.key.radiation is Radiation.LW:
        t_skin, emissivity, mu0_s0, albedo = s1, s2, 0.0, 0.0
    else:
        t_skin, emissivity, mu0_s0, albedo = 288.0, 1.0, s1, s2
    return AtmosphericColumn(grid, t, qv, o3, cf, t_skin, emissivity,
                             albedo, mu0_s0, surface)
