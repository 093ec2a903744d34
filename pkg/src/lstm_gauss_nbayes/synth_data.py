"""Seeded generators for three sensor-data archetypes with labelled anomalies.

* power-like: one week per window, five weekday consumption humps and a
  low weekend; anomalies swap a weekday for a trough or a weekend day for
  a hump, or cut supply to zero for a few hours around a weekday peak.
* loop-like: traffic counts around a stadium event; a small pre-event
  rise, a valley during the event and a sharp surge afterwards;
  anomalies drop the surge, turn the valley into a bump, or stall the
  counter at zero while traffic is expected.
* land-like: humidity readings that wander inside a band as weak AR(1)
  noise; anomalies are spikes or level shifts that leave the band.

Windows come back in raw units, normal and abnormal interleaved in a
seeded random order, with ``source_offset`` set as if the windows were
laid end to end in one stream.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .timeseries_prep import ABNORMAL, NORMAL, TimeSeries, Window


@dataclass
class GeneratorConfig:
    n_normal: int = 500
    n_abnormal: int = 60
    noise_sigma: float = 0.05
    seed: int = 0
    anomaly_amplitude: Optional[float] = None  # None -> 3 * noise_sigma

    def __post_init__(self):
        if self.n_normal < 0 or self.n_abnormal < 0:
            raise ValueError("window counts must be non-negative")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @property
    def amplitude(self) -> float:
        return 3.0 * self.noise_sigma if self.anomaly_amplitude is None else self.anomaly_amplitude


@dataclass
class PowerConfig(GeneratorConfig):
    points_per_day: int = 96          # 15-minute sampling
    base_level: float = 0.3
    peak_amplitude: float = 1.0
    weekend_fraction: float = 0.15    # weekend hump height relative to a weekday
    peak_hour: float = 14.0
    peak_width_hours: float = 3.0
    jitter_hours: float = 1.5
    scale_jitter: float = 0.1
    outage_fraction: float = 0.3      # share of anomalies that are supply outages
    outage_hours: tuple = (2.0, 4.0)

    @property
    def sample_interval(self):
        return 86400.0 / self.points_per_day


@dataclass
class LoopConfig(GeneratorConfig):
    window_len: int = 36              # 1 h before, 3 h event, 2 h after at 10 min
    base_level: float = 0.3
    pre_peak: float = 0.35
    valley_depth: float = 0.2
    surge_peak: float = 1.0
    jitter_steps: float = 1.0
    scale_jitter: float = 0.1
    stall_fraction: float = 0.4       # share of anomalies that are sensor stalls
    stall_len: tuple = (3, 6)
    sample_interval: float = 600.0


@dataclass
class LandConfig(GeneratorConfig):
    window_len: int = 50              # 10 h at 12 min
    ar_coef: float = 0.3
    center: float = 0.5
    band_halfwidth: float = 0.2
    max_shift_len: int = 12
    spike_fraction: float = 0.5       # share of anomalies that are short spikes
    spike_len: tuple = (2, 4)
    sample_interval: float = 720.0


# ---------------------------------------------------------------- helpers

def _bump(t, center, width):
    return np.exp(-0.5 * ((t - center) / width) ** 2)


def _order_and_offsets(normal, abnormal, T, rng):
    items = [(p, NORMAL) for p in normal] + [(p, ABNORMAL) for p in abnormal]
    order = rng.permutation(len(items))
    return [Window(items[k][0], items[k][1], j * T) for j, k in enumerate(order)]


# ---------------------------------------------------------------- power

def _power_day(cfg: PowerConfig, weekday: bool, rng, jitter=True):
    n = cfg.points_per_day
    hours = np.arange(n) * 24.0 / n
    shift = rng.uniform(-cfg.jitter_hours, cfg.jitter_hours) if jitter and cfg.jitter_hours else 0.0
    scale = 1.0 + (rng.uniform(-cfg.scale_jitter, cfg.scale_jitter) if jitter and cfg.scale_jitter else 0.0)
    height = cfg.peak_amplitude * (1.0 if weekday else cfg.weekend_fraction) * scale
    return cfg.base_level + height * _bump(hours, cfg.peak_hour + shift, cfg.peak_width_hours)


def power_template(cfg: PowerConfig) -> np.ndarray:
    """Noise-free, jitter-free normal week."""
    rng = np.random.default_rng(0)
    return np.concatenate([_power_day(cfg, d < 5, rng, jitter=False) for d in range(7)])


def _power_week(cfg, rng, day_types):
    days = [_power_day(cfg, weekday, rng) for weekday in day_types]
    week = np.concatenate(days)
    return week + rng.normal(0.0, cfg.noise_sigma, week.size) if cfg.noise_sigma else week


def gen_power_like(cfg: PowerConfig = None) -> list:
    cfg = cfg or PowerConfig()
    if cfg.points_per_day < 4:
        raise ValueError("points_per_day must be >= 4")
    rng = np.random.default_rng(cfg.seed)
    normal_days = [d < 5 for d in range(7)]
    normal = [_power_week(cfg, rng, normal_days) for _ in range(cfg.n_normal)]
    abnormal = []
    n = cfg.points_per_day
    for _ in range(cfg.n_abnormal):
        days = list(normal_days)
        u = rng.random()
        if u < cfg.outage_fraction:
            # readings drop to zero for a few hours around a weekday peak
            week = _power_week(cfg, rng, days)
            hours = rng.uniform(*cfg.outage_hours)
            length = max(1, int(round(hours * n / 24.0)))
            center = rng.uniform(cfg.peak_hour - cfg.peak_width_hours, cfg.peak_hour + cfg.peak_width_hours)
            start = int(rng.integers(0, 5)) * n + int(round(center * n / 24.0)) - length // 2
            week[start : start + length] = 0.0
            abnormal.append(week)
            continue
        if u < cfg.outage_fraction + 0.5 * (1.0 - cfg.outage_fraction):
            days[int(rng.integers(0, 5))] = False   # trough on a weekday
        else:
            days[int(rng.integers(5, 7))] = True    # crest on the weekend
        abnormal.append(_power_week(cfg, rng, days))
    return _order_and_offsets(normal, abnormal, 7 * cfg.points_per_day, rng)


# ---------------------------------------------------------------- loop sensor

def _loop_shape(cfg: LoopConfig, shift=0.0, scale=1.0, surge=True, invert_valley=False):
    T = cfg.window_len
    t = np.arange(T, dtype=np.float64)
    pre_c, valley_c, surge_c = 0.12 * T, 0.45 * T, 0.78 * T
    x = cfg.base_level + cfg.pre_peak * scale * _bump(t, pre_c + shift, 0.07 * T)
    valley = cfg.valley_depth * scale * _bump(t, valley_c + shift, 0.12 * T)
    x = x + valley if invert_valley else x - valley
    if surge:
        x = x + cfg.surge_peak * scale * _bump(t, surge_c + shift, 0.08 * T)
    return x


def loop_template(cfg: LoopConfig) -> np.ndarray:
    return _loop_shape(cfg)


def gen_loop_like(cfg: LoopConfig = None) -> list:
    cfg = cfg or LoopConfig()
    if cfg.window_len < 12:
        raise ValueError("window_len must be >= 12")
    rng = np.random.default_rng(cfg.seed)

    def sample(**kind):
        shift = rng.uniform(-cfg.jitter_steps, cfg.jitter_steps) if cfg.jitter_steps else 0.0
        scale = 1.0 + (rng.uniform(-cfg.scale_jitter, cfg.scale_jitter) if cfg.scale_jitter else 0.0)
        x = _loop_shape(cfg, shift, scale, **kind)
        return x + rng.normal(0.0, cfg.noise_sigma, x.size) if cfg.noise_sigma else x

    normal = [sample() for _ in range(cfg.n_normal)]
    template = _loop_shape(cfg)
    abnormal = []
    for _ in range(cfg.n_abnormal):
        u = rng.random()
        if u < cfg.stall_fraction:
            x = sample()
            length = int(rng.integers(cfg.stall_len[0], cfg.stall_len[1] + 1))
            # a stall is only visible where traffic is expected, so it starts
            # in a span whose noise-free level stays at or above the base level
            starts = [k for k in range(1, cfg.window_len - length + 1)
                      if template[k : k + length].min() >= cfg.base_level]
            start = int(starts[rng.integers(0, len(starts))])
            x[start : start + length] = 0.0
            abnormal.append(x)
        elif u < cfg.stall_fraction + 0.5 * (1.0 - cfg.stall_fraction):
            abnormal.append(sample(surge=False))
        else:
            abnormal.append(sample(invert_valley=True))
    return _order_and_offsets(normal, abnormal, cfg.window_len, rng)


# ---------------------------------------------------------------- land sensor

def _ar1(cfg: LandConfig, rng):
    T = cfg.window_len
    sd = cfg.noise_sigma
    x = np.empty(T)
    stat_sd = sd / np.sqrt(1.0 - cfg.ar_coef ** 2)
    x[0] = rng.normal(0.0, stat_sd) if sd else 0.0
    eps = rng.normal(0.0, sd, T) if sd else np.zeros(T)
    for t in range(1, T):
        x[t] = cfg.ar_coef * x[t - 1] + eps[t]
    lo, hi = cfg.center - cfg.band_halfwidth, cfg.center + cfg.band_halfwidth
    return np.clip(cfg.center + x, lo, hi)


def gen_land_like(cfg: LandConfig = None) -> list:
    cfg = cfg or LandConfig()
    if not 0.0 <= cfg.ar_coef <= 0.5:
        raise ValueError("ar_coef must lie in [0, 0.5]")
    rng = np.random.default_rng(cfg.seed)
    T = cfg.window_len
    normal = [_ar1(cfg, rng) for _ in range(cfg.n_normal)]
    abnormal = []
    for _ in range(cfg.n_abnormal):
        x = _ar1(cfg, rng)
        if rng.random() < cfg.spike_fraction:
            length = int(rng.integers(cfg.spike_len[0], cfg.spike_len[1] + 1))
        else:
            length = int(rng.integers(5, cfg.max_shift_len + 1))
        length = min(length, T - 1)
        start = int(rng.integers(1, T - length + 1))
        sign = 1.0 if rng.random() < 0.5 else -1.0
        offset = cfg.band_halfwidth + cfg.amplitude * rng.uniform(1.0, 2.0)
        x[start : start + length] = cfg.center + sign * offset + (
            rng.normal(0.0, cfg.noise_sigma, length) * 0.5 if cfg.noise_sigma else 0.0)
        abnormal.append(x)
    return _order_and_offsets(normal, abnormal, T, rng)


# ---------------------------------------------------------------- stream export

GENERATORS = {
    "power": (gen_power_like, PowerConfig),
    "loop": (gen_loop_like, LoopConfig),
    "land": (gen_land_like, LandConfig),
}


def generate(archetype: str, **overrides) -> tuple:
    """``(windows, config)`` for a named archetype with config overrides."""
    try:
        fn, cfg_cls = GENERATORS[archetype]
    except KeyError:
        raise ValueError(f"unknown archetype {archetype!r}; choose from {sorted(GENERATORS)}") from None
    cfg = cfg_cls(**overrides)
    return fn(cfg), cfg


def sample_interval_of(cfg) -> float:
    return float(cfg.sample_interval)


def to_stream(windows, sample_interval: float, name: str = "synthetic"):
    """Lay windows end to end: returns the series and the per-window label list."""
    series = TimeSeries(np.concatenate([w.points for w in windows]), sample_interval, name)
    return series, [w.label for w in windows]


def normal_stream(windows) -> np.ndarray:
    return np.concatenate([w.points for w in windows if w.label == NORMAL])
