import numpy as np
import pytest

from radnet.domain import Sky, classify_sky, validate_column
from radnet.scenegen import (
    CloudParams,
    Scene,
    SceneFileError,
    SceneSpec,
    SeasonParams,
    VortexSpec,
    generate_scene,
    generate_series,
    inject_vortex,
    load_series,
    save_series,
    solar_geometry,
)

T0 = 1663113600.0  # 2022-09-14 00:00 UTC


def scene_equal(a: Scene, b: Scene) -> bool:
    for name in ("t_layer", "qv_layer", "o3_layer", "cf_layer", "t_skin",
                 "emissivity", "albedo", "mu0_s0", "p_surface", "wind10"):
        if not np.array_equal(getattr(a, name), getattr(b, name)):
            return False
    return (np.array_equal(a.land_mask, b.land_mask)
            and a.timestamp == b.timestamp)


class TestGenerateScene:
    def test_deterministic(self):
        spec = SceneSpec(nx=8, ny=8, seed=42)
        assert scene_equal(generate_scene(spec, T0), generate_scene(spec, T0))

    def test_no_cloud_all_clear(self):
        spec = SceneSpec(nx=8, ny=8, clouds=CloudParams(max_cf=0.0))
        sc = generate_scene(spec, T0)
        for _, col in sc.columns():
            assert classify_sky(col) is Sky.CLEAR

    def test_all_land(self):
        sc = generate_scene(SceneSpec(nx=8, ny=8, land_fraction=1.0), T0)
        assert sc.land_mask.all()

    def test_all_ocean(self):
        sc = generate_scene(SceneSpec(nx=8, ny=8, land_fraction=0.0), T0)
        assert not sc.land_mask.any()

    def test_all_columns_valid_fuzz(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            spec = SceneSpec(
                nx=8, ny=8,
                lat0=float(rng.uniform(-60, 60)),
                lon0=float(rng.uniform(-180, 180)),
                land_fraction=float(rng.uniform(0, 1)),
                season=SeasonParams(
                    t_surface_mean=float(rng.uniform(270, 305)),
                    qv_surface=float(rng.uniform(0.002, 0.02))),
                seed=int(rng.integers(0, 2 ** 63)),
            )
            sc = generate_scene(spec, T0 + float(rng.uniform(0, 30 * 86400)))
            for _, col in sc.columns():
                rep = validate_column(col)
                assert rep.ok, rep.violations

    def test_cloud_field_has_compact_support(self):
        sc = generate_scene(SceneSpec(nx=16, ny=16, seed=3), T0)
        cf = sc.cf_layer
        assert np.any(cf == 0.0)
        assert np.any(cf > 0.0)
        assert cf.max() <= 0.9

    def test_seed_changes_scene(self):
        a = generate_scene(SceneSpec(nx=8, ny=8, seed=1), T0)
        b = generate_scene(SceneSpec(nx=8, ny=8, seed=2), T0)
        assert not scene_equal(a, b)

    def test_grid_too_small_rejected(self):
        with pytest.raises(ValueError, match="8x8"):
            SceneSpec(nx=4, ny=8)


class TestSolarGeometry:
    def test_local_midnight_zero(self):
        # 2022-09-14 00:00 UTC at lon 0 is local midnight
        assert solar_geometry(10.0, 0.0, T0) == 0.0

    def test_equator_equinox_noon(self):
        # near the September equinox, overhead sun at the equator at 12 UTC
        t_equinox = 1663848000.0  # 2022-09-22 12:00 UTC
        val = solar_geometry(0.0, 0.0, t_equinox)
        assert val == pytest.approx(1361.0, abs=5.0)

    def test_bounds_random(self):
        rng = np.random.default_rng(2)
        for _ in range(10_000):
            v = solar_geometry(float(rng.uniform(-90, 90)),
                               float(rng.uniform(-180, 180)),
                               float(rng.uniform(0, 2e9)))
            assert 0.0 <= v <= 1361.0

    def test_diurnal_cycle_one_maximum(self):
        vals = np.array([solar_geometry(29.0, 123.5, T0 + k * 1800)
                         for k in range(48)])
        day = vals > 0
        assert day.any() and (~day).any()
        # exactly one interior maximum of the positive part
        d = np.diff(vals)
        sign_flips = np.sum((d[:-1] > 0) & (d[1:] <= 0))
        assert sign_flips == 1


class TestInjectVortex:
    def test_center_is_pressure_minimum(self):
        sc = generate_scene(SceneSpec(nx=48, ny=48, seed=9), T0)
        flat = sc.p_surface * 0 + 1013.0
        sc = Scene(**{**sc.__dict__, "p_surface": flat})
        out = inject_vortex(sc, VortexSpec(center=(32, 32), depth=30.0,
                                           radius=5.0, v_max=40.0))
        idx = np.unravel_index(np.argmin(out.p_surface), out.p_surface.shape)
        assert idx == (32, 32)
        assert out.p_surface[32, 32] == pytest.approx(983.0, abs=1e-6)

    def test_eye_wind_minimum(self):
        sc = generate_scene(SceneSpec(nx=48, ny=48, seed=9), T0)
        out = inject_vortex(sc, VortexSpec(center=(20, 20), depth=30.0,
                                           radius=6.0, v_max=50.0))
        assert out.wind10[20, 20] < out.wind10[20, 26]

    def test_two_vortices_deeper_wins(self):
        sc = generate_scene(SceneSpec(nx=48, ny=48, seed=9), T0)
        out = inject_vortex(sc, VortexSpec(center=(10, 10), depth=30.0,
                                           radius=4.0, v_max=40.0))
        out = inject_vortex(out, VortexSpec(center=(35, 35), depth=20.0,
                                            radius=4.0, v_max=30.0))
        idx = np.unravel_index(np.argmin(out.p_surface), out.p_surface.shape)
        assert idx == (10, 10)
        # the shallower one is still a local minimum
        patch = out.p_surface[33:38, 33:38]
        pidx = np.unravel_index(np.argmin(patch), patch.shape)
        assert pidx == (2, 2)

    def test_center_outside_grid_rejected(self):
        sc = generate_scene(SceneSpec(nx=8, ny=8), T0)
        with pytest.raises(ValueError, match="outside"):
            inject_vortex(sc, VortexSpec(center=(99, 0), depth=10.0,
                                         radius=3.0, v_max=10.0))

    def test_bad_vortex_params_rejected(self):
        with pytest.raises(ValueError):
            VortexSpec(center=(0, 0), depth=-1.0, radius=3.0, v_max=10.0)
        with pytest.raises(ValueError):
            VortexSpec(center=(0, 0), depth=10.0, radius=1.0, v_max=10.0)


class TestGenerateSeries:
    def test_single_scene_equals_generate_scene(self):
        spec = SceneSpec(nx=8, ny=8, seed=4)
        series = generate_series(spec, T0, 1800.0, 1)
        assert scene_equal(series.scenes[0], generate_scene(spec, T0))

    def test_diurnal_maximum_per_column(self):
        spec = SceneSpec(nx=8, ny=8, seed=4)
        series = generate_series(spec, T0, 1800.0, 48)
        assert len(series) == 48
        assert series.timestamps[-1] - series.timestamps[0] == 47 * 1800.0
        for i in range(0, 8, 4):
            for j in range(0, 8, 4):
                vals = np.array([s.mu0_s0[i, j] for s in series.scenes])
                d = np.diff(vals)
                assert np.sum((d[:-1] > 0) & (d[1:] <= 0)) == 1

    def test_prescribed_track_followed(self):
        spec = SceneSpec(nx=32, ny=32, seed=4)
        track = [VortexSpec(center=(5 + k, 10), depth=40.0, radius=4.0,
                            v_max=40.0) for k in range(6)]
        series = generate_series(spec, T0, 1800.0, 6, vortex_track=track)
        for k, s in enumerate(series.scenes):
            idx = np.unravel_index(np.argmin(s.p_surface), s.p_surface.shape)
            assert idx == (5 + k, 10)

    def test_track_length_mismatch(self):
        spec = SceneSpec(nx=8, ny=8)
        with pytest.raises(ValueError, match="track length"):
            generate_series(spec, T0, 1800.0, 3,
                            vortex_track=[VortexSpec((1, 1), 10.0, 3.0, 10.0)])


class TestSeriesFile:
    def make(self):
        return generate_series(SceneSpec(nx=8, ny=8, seed=77), T0, 1800.0, 3)

    def test_round_trip(self, tmp_path):
        series = self.make()
        p = tmp_path / "s.rnds"
        save_series(series, p)
        back = load_series(p)
        assert len(back) == 3
        assert back.dt == 1800.0
        assert back.spec == series.spec
        for a, b in zip(series.scenes, back.scenes):
            assert a.timestamp == b.timestamp
            assert np.array_equal(a.land_mask, b.land_mask)
            # payload arrays are stored in float32
            assert np.allclose(a.t_layer, b.t_layer, rtol=1e-6)
            assert np.allclose(a.mu0_s0, b.mu0_s0, rtol=1e-6)

    def test_loaded_columns_valid(self, tmp_path):
        p = tmp_path / "s.rnds"
        save_series(self.make(), p)
        back = load_series(p)
        for s in back.scenes:
            for _, col in s.columns():
                assert validate_column(col).ok

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "s.rnds"
        save_series(self.make(), p)
        raw = bytearray(p.read_bytes())
        raw[0] ^= 0xFF
        p.write_bytes(bytes(raw))
        with pytest.raises(SceneFileError, match="bad magic"):
            load_series(p)

    def test_corrupted_byte_detected(self, tmp_path):
        p = tmp_path / "s.rnds"
        save_series(self.make(), p)
        raw = bytearray(p.read_bytes())
        raw[len(raw) // 2] ^= 0x01
        p.write_bytes(bytes(raw))
        with pytest.raises(SceneFileError, match="checksum failure"):
            load_series(p)
