"""Synthetic power, loop and land archetypes: shapes, anomalies and ACF regimes."""

import numpy as np
import pytest

from lstm_gauss_nbayes import synth_data as sd
from lstm_gauss_nbayes.pipeline import ExperimentConfig, prepare
from lstm_gauss_nbayes.timeseries_prep import acf
from oracles import acf_double_loop


def local_maxima(x):
    return [k for k in range(1, x.size - 1) if x[k] > x[k - 1] and x[k] > x[k + 1]]


def template_of(cfg):
    if isinstance(cfg, sd.PowerConfig):
        return sd.power_template(cfg)
    if isinstance(cfg, sd.LoopConfig):
        return sd.loop_template(cfg)
    return np.full(cfg.window_len, cfg.center)


class TestDeterminism:
    @pytest.mark.parametrize("archetype", ["power", "loop", "land"])
    def test_same_seed_same_windows(self, archetype):
        a, _ = sd.generate(archetype, n_normal=20, n_abnormal=5, seed=3)
        b, _ = sd.generate(archetype, n_normal=20, n_abnormal=5, seed=3)
        c, _ = sd.generate(archetype, n_normal=20, n_abnormal=5, seed=4)
        assert all(np.array_equal(x.points, y.points) and x.label == y.label for x, y in zip(a, b))
        assert not all(np.array_equal(x.points, y.points) for x, y in zip(a, c))

    @pytest.mark.parametrize("archetype", ["power", "loop", "land"])
    def test_anomaly_fraction_and_offsets(self, archetype):
        windows, cfg = sd.generate(archetype, n_normal=37, n_abnormal=11)
        assert sum(w.label for w in windows) == 11 and len(windows) == 48
        T = len(windows[0])
        assert [w.source_offset for w in windows] == [k * T for k in range(48)]

    def test_unknown_archetype(self):
        with pytest.raises(ValueError):
            sd.generate("ocean")


class TestPower:
    def test_window_spans_a_week(self):
        windows, cfg = sd.generate("power", n_normal=2, n_abnormal=1)
        assert len(windows[0]) == 7 * cfg.points_per_day

    def test_noise_free_weekdays_are_periodic(self):
        windows, cfg = sd.generate("power", n_normal=3, n_abnormal=0, noise_sigma=0.0,
                                   jitter_hours=0.0, scale_jitter=0.0)
        n = cfg.points_per_day
        for w in windows:
            days = w.points[: 5 * n].reshape(5, n)
            assert np.array_equal(days, np.tile(days[0], (5, 1)))
            assert days[0].max() > w.points[5 * n :].max()

    def test_weekly_acf_is_long_range(self):
        windows, cfg = sd.generate("power", n_normal=40, n_abnormal=0)
        s = sd.normal_stream(windows)
        assert acf(s, 7 * cfg.points_per_day) >= 0.5

    def test_needs_four_points_per_day(self):
        with pytest.raises(ValueError):
            sd.generate("power", points_per_day=3)


class TestLoop:
    def test_template_shape(self):
        x = sd.loop_template(sd.LoopConfig(noise_sigma=0.0))
        peaks = local_maxima(x)
        assert len(peaks) == 2
        valley = peaks[0] + int(np.argmin(x[peaks[0] : peaks[1]]))
        assert int(np.argmax(x)) == peaks[1] > valley

    def test_short_range_acf(self):
        windows, _ = sd.generate("loop")
        s = sd.normal_stream(windows)
        assert acf(s, 1) >= 0.4 and acf(s, 10) <= 0.2
        assert acf(s, 10) == pytest.approx(acf_double_loop(s.tolist(), 10), abs=1e-12)

    def test_minimum_length(self):
        with pytest.raises(ValueError):
            sd.generate("loop", window_len=11)


class TestLand:
    def test_white_noise_lag_one(self):
        windows, _ = sd.generate("land", ar_coef=0.0)
        assert abs(acf(sd.normal_stream(windows), 1)) <= 0.1

    def test_weak_ar_regime(self):
        windows, _ = sd.generate("land", ar_coef=0.3)
        s = sd.normal_stream(windows)
        assert 0.15 <= acf(s, 1) <= 0.45 and acf(s, 10) <= 0.15

    def test_normal_values_inside_band(self):
        windows, cfg = sd.generate("land")
        s = sd.normal_stream(windows)
        assert s.min() >= cfg.center - cfg.band_halfwidth and s.max() <= cfg.center + cfg.band_halfwidth
        abnormal = [w for w in windows if w.label == 1]
        assert all(np.abs(w.points - cfg.center).max() > cfg.band_halfwidth for w in abnormal)

    @pytest.mark.parametrize("coef", [-0.1, 0.6])
    def test_coefficient_range(self, coef):
        with pytest.raises(ValueError):
            sd.generate("land", ar_coef=coef)


class TestAnomalies:
    @pytest.mark.parametrize("archetype", ["power", "loop", "land"])
    def test_anomalies_leave_the_template(self, archetype):
        windows, cfg = sd.generate(archetype)
        tmpl = template_of(cfg)
        gaps = [np.abs(w.points - tmpl).max() for w in windows if w.label == 1]
        assert min(gaps) >= cfg.amplitude

    @pytest.mark.parametrize("archetype", ["power", "loop", "land"])
    def test_windows_valid_after_normalization(self, archetype):
        data = prepare(ExperimentConfig(archetype=archetype, n_normal=60, n_abnormal=10))
        for name in data.split.PARTS:
            assert all(w.is_normalized for w in getattr(data.split, name))

    def test_stream_round_trip(self):
        windows, cfg = sd.generate("loop", n_normal=4, n_abnormal=2)
        series, labels = sd.to_stream(windows, cfg.sample_interval)
        assert series.values.size == 6 * cfg.window_len and labels == [w.label for w in windows]
        assert series.sample_interval == 600.0
