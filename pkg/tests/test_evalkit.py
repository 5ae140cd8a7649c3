import numpy as np
import pytest

from radnet.evalkit import (
    error_map,
    pearson,
    temporal_series,
    track_series,
    track_vortex,
    tracks_to_csv,
)
from radnet.scenegen import SceneSpec, VortexSpec, generate_series

T0 = 1663113600.0


class TestPearson:
    def test_identity(self):
        x = np.random.default_rng(0).normal(size=100)
        assert pearson(x, x) == 1.0

    def test_anticorrelation(self):
        x = np.random.default_rng(1).normal(size=100)
        assert pearson(x, -x) == -1.0

    def test_hand_case(self):
        # x=(1,2,3), y=(1,2,4): r = 9 / (sqrt(6)*sqrt(14/3)*3) ... direct form
        r = pearson(np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.0, 4.0]))
        assert r == pytest.approx(0.98198, abs=1e-5)

    def test_constant_vector_rejected(self):
        with pytest.raises(ValueError, match="constant"):
            pearson(np.ones(10), np.arange(10.0))

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            pearson(np.zeros(3), np.zeros(4))

    def test_clipped_to_unit_interval(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            x = rng.normal(size=50)
            y = 2.0 * x + 1e-9 * rng.normal(size=50)
            assert -1.0 <= pearson(x, y) <= 1.0

    def test_affine_invariance(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=64)
        y = rng.normal(size=64)
        r1 = pearson(x, y)
        r2 = pearson(3.0 * x - 7.0, 0.5 * y + 2.0)
        assert r1 == pytest.approx(r2, rel=1e-12)


class TestErrorMap:
    def test_identical_fields(self):
        f = np.random.default_rng(0).normal(size=(8, 8))
        m = error_map(f, f)
        assert m.max_abs == 0.0
        assert np.all(m.pct_err == 0.0)
        assert m.frac_below_02pct == 1.0

    def test_arithmetic(self):
        m = error_map(np.array([[200.0]]), np.array([[198.0]]))
        assert m.abs_err[0, 0] == 2.0
        assert m.pct_err[0, 0] == pytest.approx(1.0)

    def test_zero_reference_guarded(self):
        m = error_map(np.array([[0.0]]), np.array([[0.1]]), floor=1.0)
        assert m.pct_err[0, 0] == pytest.approx(10.0)
        assert np.isfinite(m.pct_err).all()

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            error_map(np.zeros((2, 2)), np.zeros((3, 3)))


class TestTemporalSeries:
    def test_identical_series(self):
        fields = [np.random.default_rng(k).normal(size=(4, 4)) for k in range(5)]
        out = temporal_series(fields, fields, range(5))
        assert all(row["rmse"] == 0.0 for row in out)
        assert [row["t"] for row in out] == [0.0, 1.0, 2.0, 3.0, 4.0]

    def test_constant_bias(self):
        fields = [np.zeros((4, 4)) for _ in range(3)]
        biased = [f + 1.0 for f in fields]
        out = temporal_series(fields, biased, range(3))
        for row in out:
            assert row["rmse"] == pytest.approx(1.0)
            assert row["max_abs_err"] == pytest.approx(1.0)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            temporal_series([np.zeros((2, 2))], [], [])


class TestTrackVortex:
    def test_injected_vortex_found(self):
        series = generate_series(
            SceneSpec(nx=48, ny=48, seed=8), T0, 1800.0, 1,
            vortex_track=[VortexSpec(center=(32, 32), depth=30.0, radius=5.0,
                                     v_max=40.0)])
        s = series.scenes[0]
        pt = track_vortex(s.p_surface, s.wind10)
        assert pt.center == (32, 32)
        assert not pt.degenerate

    def test_uniform_field_degenerate(self):
        pt = track_vortex(np.full((6, 6), 1000.0), np.full((6, 6), 3.0))
        assert pt.center == (0, 0)
        assert pt.degenerate

    def test_deeper_vortex_wins(self):
        from radnet.scenegen import generate_scene, inject_vortex
        sc = generate_scene(SceneSpec(nx=48, ny=48, seed=8), T0)
        sc = inject_vortex(sc, VortexSpec(center=(10, 12), depth=30.0,
                                          radius=4.0, v_max=40.0))
        sc = inject_vortex(sc, VortexSpec(center=(36, 30), depth=20.0,
                                          radius=4.0, v_max=30.0))
        pt = track_vortex(sc.p_surface, sc.wind10)
        assert pt.center == (10, 12)

    def test_wind_refinement_moves_to_eye(self):
        # pressure minimum displaced from the wind minimum by 2 cells:
        # the refined center lands on the wind minimum
        p = np.full((20, 20), 1000.0)
        p[10, 10] = 980.0
        w = np.full((20, 20), 20.0)
        w[12, 10] = 1.0
        pt = track_vortex(p, w, refine_radius=5)
        assert pt.center == (12, 10)
        assert pt.min_pressure == 980.0
        assert pt.wind_at_center == 1.0


class TestTrackSeries:
    def make_tracked(self, centers):
        track = [VortexSpec(center=c, depth=40.0, radius=4.0, v_max=40.0)
                 for c in centers]
        return generate_series(SceneSpec(nx=32, ny=32, seed=6), T0, 1800.0,
                               len(centers), vortex_track=track)

    def test_identical_pair_zero_separation(self):
        series = self.make_tracked([(8, 8), (9, 9), (10, 10)])
        pts, pts2, sep = track_series(series, other=series)
        assert sep == [0.0, 0.0, 0.0]

    def test_straight_line_recovered(self):
        centers = [(6 + 2 * k, 12) for k in range(5)]
        series = self.make_tracked(centers)
        pts = track_series(series)
        assert [p.center for p in pts] == centers

    def test_separation_euclidean(self):
        a = self.make_tracked([(8, 8)])
        b = self.make_tracked([(11, 12)])
        _, _, sep = track_series(a, other=b)
        assert sep[0] == pytest.approx(5.0)

    def test_timestamp_misalignment_rejected(self):
        a = self.make_tracked([(8, 8)])
        b = generate_series(SceneSpec(nx=32, ny=32, seed=6), T0 + 7.0, 1800.0,
                            1, vortex_track=[VortexSpec((8, 8), 40.0, 4.0, 40.0)])
        with pytest.raises(ValueError, match="misaligned"):
            track_series(a, other=b)

    def test_csv_export(self, tmp_path):
        pts = track_series(self.make_tracked([(8, 8), (9, 9)]))
        p = tmp_path / "track.csv"
        tracks_to_csv(pts, p)
        lines = p.read_text().strip().splitlines()
        assert lines[0] == "t,i,j,min_pressure,wind_at_center"
        assert len(lines) == 3
