"""Synthetic fingertip pulse and temperature voltage generation.

Stands in for the optical sensor hardware: each heart beat is rendered as a
primary Gaussian systolic pulse plus a smaller secondary (dicrotic) pulse,
riding on a non-pulsatile DC baseline, with optional white noise and a
sinusoidal motion artifact. The temperature channel follows the standard
10 mV/degC analog-sensor scale.

Generation is deterministic: the same seed and parameters always produce the
same sample stream, and the ground-truth beat onset times are returned
alongside the waveform so estimators can be checked against them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, RangeError

SUPPLY_RAIL_V = 5.0
LM35_V_PER_C = 0.010
TEMP_MIN_C = 0.0
TEMP_MAX_C = 70.0

# Pulse morphology, as fractions of the nominal beat period: the systolic peak
# sits shortly after the beat onset (the upstroke foot), and the Gaussian
# width keeps neighbouring pulses from overlapping even at high rates.
SYSTOLIC_PEAK_FRAC = 0.18
SYSTOLIC_WIDTH_FRAC = 0.08

# Jitter draws are clamped at +/-3 sigma so beat intervals stay positive.
JITTER_CLAMP_SIGMA = 3.0


@dataclass(frozen=True)
class HeartProfile:
    """Ground-truth physiology driving the pulse waveform."""

    bpm_true: float = 72.0
    jitter_pct: float = 0.0
    systolic_amp_v: float = 0.02
    dicrotic_ratio: float = 0.35
    dicrotic_delay_frac: float = 0.35
    dc_offset_v: float = 0.06

    def __post_init__(self):
        if not self.bpm_true > 0:
            raise ParameterError(f"bpm_true must be > 0, got {self.bpm_true}")
        if self.jitter_pct < 0:
            raise ParameterError(f"jitter_pct must be >= 0, got {self.jitter_pct}")
        if not self.systolic_amp_v > 0:
            raise ParameterError(
                f"systolic_amp_v must be > 0, got {self.systolic_amp_v}"
            )
        if not 0 <= self.dicrotic_ratio < 1:
            raise ParameterError(
                f"dicrotic_ratio must be in [0, 1), got {self.dicrotic_ratio}"
            )
        if not 0 < self.dicrotic_delay_frac < 1:
            raise ParameterError(
                f"dicrotic_delay_frac must be in (0, 1), got {self.dicrotic_delay_frac}"
            )
        if self.dc_offset_v < 0:
            raise ParameterError(f"dc_offset_v must be >= 0, got {self.dc_offset_v}")
        if self.systolic_amp_v + self.dc_offset_v > SUPPLY_RAIL_V:
            raise ParameterError(
                "systolic_amp_v + dc_offset_v exceeds the "
                f"{SUPPLY_RAIL_V} V supply rail"
            )

    @property
    def period_s(self) -> float:
        return 60.0 / self.bpm_true


@dataclass(frozen=True)
class NoiseModel:
    """Disturbance parameters: white sensor noise plus finger-motion artifact."""

    white_sigma_v: float = 0.0
    motion_amp_v: float = 0.0
    motion_freq_hz: float = 8.0
    seed: int = 0

    def __post_init__(self):
        if self.white_sigma_v < 0:
            raise ParameterError(f"white_sigma_v must be >= 0, got {self.white_sigma_v}")
        if self.motion_amp_v < 0:
            raise ParameterError(f"motion_amp_v must be >= 0, got {self.motion_amp_v}")
        if not self.motion_freq_hz > 0:
            raise ParameterError(
                f"motion_freq_hz must be > 0, got {self.motion_freq_hz}"
            )


@dataclass(frozen=True)
class TempProfile:
    """Ground-truth body temperature with an optional slow drift."""

    temp_c_true: float = 37.0
    drift_c_per_min: float = 0.0

    def __post_init__(self):
        if not TEMP_MIN_C <= self.temp_c_true <= TEMP_MAX_C:
            raise ParameterError(
                f"temp_c_true must be in [{TEMP_MIN_C}, {TEMP_MAX_C}] degC, "
                f"got {self.temp_c_true}"
            )


@dataclass(frozen=True)
class Sample:
    """One timestamped analog voltage."""

    t_s: float
    v: float


class Trace:
    """A uniformly sampled voltage stream backed by numpy arrays.

    Iterating or indexing yields `Sample` values; bulk consumers use the
    `t_s` / `v` arrays directly.
    """

    __slots__ = ("t_s", "v", "fs_hz")

    def __init__(self, t_s, v, fs_hz: float):
        self.t_s = np.asarray(t_s, dtype=float)
        self.v = np.asarray(v, dtype=float)
        if self.t_s.shape != self.v.shape:
            raise ParameterError("t_s and v must have the same length")
        self.fs_hz = float(fs_hz)

    def __len__(self):
        return len(self.t_s)

    def __getitem__(self, i) -> Sample:
        return Sample(float(self.t_s[i]), float(self.v[i]))

    def __iter__(self):
        for t, v in zip(self.t_s, self.v):
            yield Sample(float(t), float(v))

    def to_csv(self, path) -> None:
        """Write the trace as `t_s,v` CSV (ASCII decimal) for replay/plotting."""
        with open(path, "w", encoding="ascii") as fh:
            fh.write("t_s,v\n")
            for t, v in zip(self.t_s, self.v):
                fh.write(f"{float(t)!r},{float(v)!r}\n")


def trace_from_csv(path, fs_hz: float | None = None) -> Trace:
    """Read a `t_s,v` CSV written by `Trace.to_csv`."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    t = data[:, 0]
    if fs_hz is None:
        fs_hz = 1.0 / (t[1] - t[0]) if len(t) > 1 else 1.0
    return Trace(t, data[:, 1], fs_hz)


def _add_gaussian(v, t, center, amp, sigma) -> None:
    # Each pulse is rendered only inside its own +/-5 sigma window. The
    # window is tied to the pulse, not to the block of samples being
    # generated, so a stream produces identical values regardless of how it
    # is chunked into blocks.
    lo = np.searchsorted(t, center - 5.0 * sigma)
    hi = np.searchsorted(t, center + 5.0 * sigma, side="right")
    if lo < hi:
        v[lo:hi] += amp * np.exp(-0.5 * ((t[lo:hi] - center) / sigma) ** 2)


def _render_pulses(t: np.ndarray, onsets, profile: HeartProfile) -> np.ndarray:
    """Sum the per-beat pulse pair over the time grid `t` (sorted onsets)."""
    period = profile.period_s
    sigma = SYSTOLIC_WIDTH_FRAC * period
    v = np.full(len(t), profile.dc_offset_v)
    t0, t1 = t[0], t[-1]
    tail = profile.dicrotic_delay_frac * period + 5.0 * sigma
    for onset in onsets:
        peak = onset + SYSTOLIC_PEAK_FRAC * period
        if peak + tail < t0:
            continue
        if peak - 5.0 * sigma > t1:
            break
        _add_gaussian(v, t, peak, profile.systolic_amp_v, sigma)
        if profile.dicrotic_ratio > 0:
            d_peak = peak + profile.dicrotic_delay_frac * period
            _add_gaussian(
                v, t, d_peak, profile.dicrotic_ratio * profile.systolic_amp_v, sigma
            )
    return v


class PpgSource:
    """Streaming PPG generator with persistent beat and noise state.

    Successive blocks concatenate to the same stream a single bulk call
    would produce: beat jitter and sample noise consume two independent
    seeded generators, so consumption order cannot differ between the
    streaming and bulk paths.
    """

    def __init__(self, profile: HeartProfile, noise: NoiseModel, fs_hz: float):
        if fs_hz < 50:
            raise ParameterError(f"fs_hz must be >= 50, got {fs_hz}")
        self.profile = profile
        self.noise = noise
        self.fs_hz = float(fs_hz)
        self._rng_jitter = np.random.default_rng([noise.seed, 0])
        self._rng_noise = np.random.default_rng([noise.seed, 1])
        self._onsets: list[float] = [0.0]
        self._done_onsets = 0  # count of onsets pruned from the front
        self._next_index = 0  # next sample index to emit

    def _interval(self) -> float:
        base = self.profile.period_s
        if self.profile.jitter_pct == 0:
            return base
        g = float(self._rng_jitter.standard_normal())
        g = max(-JITTER_CLAMP_SIGMA, min(JITTER_CLAMP_SIGMA, g))
        return max(0.05 * base, base * (1.0 + self.profile.jitter_pct * g))

    def _extend_onsets(self, t_end: float) -> None:
        while self._onsets[-1] < t_end:
            self._onsets.append(self._onsets[-1] + self._interval())

    def next_block(self, n: int) -> Trace:
        """Generate the next `n` samples of the stream."""
        p = self.profile
        i0 = self._next_index
        self._next_index += n
        t = np.arange(i0, i0 + n) / self.fs_hz

        period = p.period_s
        sigma = SYSTOLIC_WIDTH_FRAC * period
        reach = (SYSTOLIC_PEAK_FRAC + p.dicrotic_delay_frac) * period + 5.0 * sigma
        self._extend_onsets(t[-1] + reach)
        # Prune beats whose pulses ended before this block.
        while len(self._onsets) > 1 and self._onsets[1] + reach < t[0]:
            self._onsets.pop(0)
            self._done_onsets += 1

        v = _render_pulses(t, self._onsets, p)
        v = _add_noise(v, t, self.noise, self._rng_noise)
        return Trace(t, v, self.fs_hz)


def _add_noise(v, t, noise: NoiseModel, rng) -> np.ndarray:
    if noise.white_sigma_v > 0:
        v = v + rng.normal(0.0, noise.white_sigma_v, len(t))
    if noise.motion_amp_v > 0:
        v = v + noise.motion_amp_v * np.sin(2 * np.pi * noise.motion_freq_hz * t)
    return np.clip(v, 0.0, SUPPLY_RAIL_V)


def generate_ppg(
    profile: HeartProfile,
    noise: NoiseModel,
    fs_hz: float = 100.0,
    duration_s: float = 30.0,
) -> tuple[Trace, np.ndarray]:
    """Generate a PPG voltage trace plus its ground-truth beat onsets.

    Returns ceil(fs_hz * duration_s) samples. With zero jitter, the trace
    contains exactly round(bpm_true * duration_s / 60) beats, spaced by the
    beat period starting at t = 0; with jitter, beats fill the duration with
    per-interval multiplicative Gaussian jitter. The waveform renders exactly
    the returned onsets, so detector output can be compared against them.
    """
    if fs_hz < 50:
        raise ParameterError(f"fs_hz must be >= 50, got {fs_hz}")
    if not duration_s > 0:
        raise ParameterError(f"duration_s must be > 0, got {duration_s}")

    n = max(1, math.ceil(fs_hz * duration_s - 1e-9))
    t = np.arange(n) / fs_hz

    if profile.jitter_pct == 0:
        n_beats = round(profile.bpm_true * duration_s / 60.0)
        onsets = np.arange(n_beats) * profile.period_s
        rng_noise = np.random.default_rng([noise.seed, 1])
    else:
        rng_jitter = np.random.default_rng([noise.seed, 0])
        rng_noise = np.random.default_rng([noise.seed, 1])
        onset_list = [0.0]
        period = profile.period_s
        while onset_list[-1] < duration_s:
            g = float(rng_jitter.standard_normal())
            g = max(-JITTER_CLAMP_SIGMA, min(JITTER_CLAMP_SIGMA, g))
            step = max(0.05 * period, period * (1.0 + profile.jitter_pct * g))
            onset_list.append(onset_list[-1] + step)
        onsets = np.array([o for o in onset_list if o < duration_s])

    v = _render_pulses(t, onsets, profile)
    v = _add_noise(v, t, noise, rng_noise)
    return Trace(t, v, fs_hz), onsets


def lm35_voltage(temp: TempProfile, t_s):
    """Temperature-sensor output voltage at elapsed time `t_s` (seconds).

    Follows the 10 mV/degC transfer scale; accepts a scalar or an array of
    times. Raises RangeError if drift pushes the temperature outside the
    sensor's 0..70 degC operating range.
    """
    t_s = np.asarray(t_s, dtype=float)
    temp_c = temp.temp_c_true + temp.drift_c_per_min * t_s / 60.0
    if np.any(temp_c < TEMP_MIN_C) or np.any(temp_c > TEMP_MAX_C):
        raise RangeError(
            f"temperature left the [{TEMP_MIN_C}, {TEMP_MAX_C}] degC range"
        )
    v = LM35_V_PER_C * temp_c
    return float(v) if v.ndim == 0 else v
