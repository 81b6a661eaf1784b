"""Beat detection and vital-sign estimation.

A beat registers when the conditioned signal rises above a detection level
while the detector is armed; the detector then disarms until the signal falls
back below the level minus a small hysteresis, and a refractory period guards
against counting the secondary (dicrotic) peak of the same pulse. The rate is
timed across a run of 30 beats. The detection level can be fixed per person
or auto-calibrated as a fraction of the running min/max swing, which makes
beat timing invariant to overall signal scale.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .analog import AdcConfig, code_to_volts
from .errors import ContractError, ParameterError
from .simulate import LM35_V_PER_C

# Hard ceiling the refractory period must never encroach on (beats/minute).
REFRACTORY_BPM_CEILING = 140.0

DEFAULT_REQUIRED_BEATS = 30
VALID_BPM_MIN = 30.0


def fahrenheit(temp_c: float) -> float:
    return temp_c * 9.0 / 5.0 + 32.0


@dataclass(frozen=True)
class DetectorConfig:
    """Beat-detector tuning; per-person calibration lives here."""

    threshold_v: float = 1.0
    refractory_s: float = 0.25
    auto_calibrate: bool = True
    calib_window_s: float = 3.0
    calib_fraction: float = 0.6
    # Re-arm band as a fraction of the detection level. Small enough that
    # the band stays inside the pulse swing even when the filter chain has
    # attenuated a near-cutoff rate down to a ripple on a large DC level.
    hysteresis: float = 0.02
    # Swing gate: detection (and validity) need at least this much
    # peak-to-peak signal in the calibration window. Low enough to pass the
    # raw (pre-amplifier) pulse, high enough to reject a flat line.
    min_swing_v: float = 0.005

    def __post_init__(self):
        if not 0 < self.refractory_s < 60.0 / REFRACTORY_BPM_CEILING:
            raise ParameterError(
                f"refractory_s must be in (0, {60.0 / REFRACTORY_BPM_CEILING:.3f}) "
                f"to still permit {REFRACTORY_BPM_CEILING:.0f} bpm, "
                f"got {self.refractory_s}"
            )
        if not 0 < self.calib_fraction < 1:
            raise ParameterError(
                f"calib_fraction must be in (0, 1), got {self.calib_fraction}"
            )
        if not self.calib_window_s > 0:
            raise ParameterError(
                f"calib_window_s must be > 0, got {self.calib_window_s}"
            )
        if not 0 <= self.hysteresis < 1:
            raise ParameterError(f"hysteresis must be in [0, 1), got {self.hysteresis}")
        if self.min_swing_v < 0:
            raise ParameterError(f"min_swing_v must be >= 0, got {self.min_swing_v}")


class SlidingExtrema:
    """Running min/max over a trailing time window (monotonic deques)."""

    def __init__(self, window_s: float):
        self.window_s = window_s
        self._minq: deque = deque()  # (t, v) increasing v
        self._maxq: deque = deque()  # (t, v) decreasing v

    def push(self, t: float, v: float) -> None:
        while self._minq and self._minq[-1][1] >= v:
            self._minq.pop()
        self._minq.append((t, v))
        while self._maxq and self._maxq[-1][1] <= v:
            self._maxq.pop()
        self._maxq.append((t, v))
        horizon = t - self.window_s
        while self._minq[0][0] < horizon:
            self._minq.popleft()
        while self._maxq[0][0] < horizon:
            self._maxq.popleft()

    @property
    def min_v(self) -> float:
        return self._minq[0][1]

    @property
    def max_v(self) -> float:
        return self._maxq[0][1]

    @property
    def swing(self) -> float:
        return self._maxq[0][1] - self._minq[0][1]

    def __bool__(self):
        return bool(self._minq)


@dataclass
class DetectorState:
    """Mutable per-stream detection state."""

    last_beat_t_s: float | None = None
    beat_times_s: deque = field(default_factory=lambda: deque(maxlen=64))
    armed: bool = True
    last_t_s: float | None = None


class BeatDetector:
    """Streaming threshold-crossing beat detector for one signal stream.

    Single-owner: one acquisition stream drives one instance. Configuration
    swaps (per-person calibration) are applied between samples via
    `reconfigure`.
    """

    def __init__(self, cfg: DetectorConfig, ring_capacity: int = 64):
        if ring_capacity < DEFAULT_REQUIRED_BEATS:
            raise ParameterError("ring_capacity must hold at least 30 beats")
        self.cfg = cfg
        self.state = DetectorState(beat_times_s=deque(maxlen=ring_capacity))
        self._extrema = SlidingExtrema(cfg.calib_window_s)

    def reconfigure(self, cfg: DetectorConfig) -> None:
        """Swap in new calibration; window extrema carry over."""
        self.cfg = cfg
        self._extrema.window_s = cfg.calib_window_s

    @property
    def threshold_v(self) -> float:
        if self.cfg.auto_calibrate and self._extrema:
            lo, hi = self._extrema.min_v, self._extrema.max_v
            return lo + self.cfg.calib_fraction * (hi - lo)
        return self.cfg.threshold_v

    @property
    def window_swing_v(self) -> float:
        return self._extrema.swing if self._extrema else 0.0

    def push(self, t_s: float, v: float) -> bool:
        """Feed one sample; True when a beat is accepted at this sample."""
        st = self.state
        if st.last_t_s is not None and t_s < st.last_t_s:
            raise ContractError(f"stream not time-ordered at t={t_s}")
        st.last_t_s = t_s
        self._extrema.push(t_s, v)

        threshold = self.threshold_v
        if st.armed:
            # Detection stays gated until there is a real signal swing,
            # so flat or noise-only input produces no beats.
            if self.window_swing_v >= self.cfg.min_swing_v and v > threshold:
                st.armed = False
                if (
                    st.last_beat_t_s is None
                    or t_s - st.last_beat_t_s >= self.cfg.refractory_s
                ):
                    st.last_beat_t_s = t_s
                    st.beat_times_s.append(t_s)
                    return True
        elif v < threshold * (1.0 - self.cfg.hysteresis):
            st.armed = True
        return False

    def process(self, t_s, v) -> list[float]:
        """Feed a block of samples; returns the accepted beat times."""
        return [float(t) for t, x in zip(t_s, v) if self.push(float(t), float(x))]

    @property
    def beat_times(self) -> list[float]:
        return list(self.state.beat_times_s)

    @property
    def last_interval_s(self) -> float | None:
        beats = self.state.beat_times_s
        if len(beats) < 2:
            return None
        return beats[-1] - beats[-2]


def detect_beats(cfg: DetectorConfig, stream) -> list[float]:
    """Run the detector over a whole (t_s, v) stream; returns beat times.

    `stream` is anything yielding (t, v) pairs — a `Trace` iterates as
    samples, so both `zip(t, v)` sequences and traces work.
    """
    det = BeatDetector(cfg, ring_capacity=1 << 20)
    out = []
    for item in stream:
        t, v = (item.t_s, item.v) if hasattr(item, "t_s") else item
        if det.push(float(t), float(v)):
            out.append(float(t))
    return out


def bpm_from_beats(beat_times_s, required_beats: int = DEFAULT_REQUIRED_BEATS):
    """Rate over the most recent `required_beats` beats, or None if too few.

    Uses the (N-1) intervals spanning first to last of the counted beats,
    which is exact for a perfectly periodic train.
    """
    beats = list(beat_times_s)
    if required_beats < 2:
        raise ParameterError(f"required_beats must be >= 2, got {required_beats}")
    if len(beats) < required_beats:
        return None
    window = beats[-1] - beats[-required_beats]
    if window <= 0:
        return None
    return (required_beats - 1) * 60.0 / window


def temp_from_code(adc: AdcConfig, code: int) -> tuple[float, float]:
    """ADC code from the temperature channel -> (degC, degF)."""
    if not 0 <= code <= adc.full_scale:
        raise ParameterError(
            f"code must be in [0, {adc.full_scale}], got {code}"
        )
    temp_c = float(code_to_volts(adc, code)) / LM35_V_PER_C
    return temp_c, fahrenheit(temp_c)


def assess_validity(
    swing_v: float,
    beat_times_s,
    *,
    min_swing_v: float = 0.005,
    max_bpm: float = 140.43,
    min_bpm: float = VALID_BPM_MIN,
) -> bool:
    """Signal-quality flag driving the flashing indicator and the wire flag.

    Valid only when the window's peak-to-peak swing clears the floor and the
    last inter-beat interval maps to a rate inside [min_bpm, max_bpm].
    """
    if swing_v < min_swing_v:
        return False
    beats = list(beat_times_s)
    if len(beats) < 2:
        return False
    interval = beats[-1] - beats[-2]
    if interval <= 0:
        return False
    bpm = 60.0 / interval
    return bool(min_bpm <= bpm <= max_bpm)


@dataclass(frozen=True)
class VitalsReading:
    """One estimated reading; `bpm` is None until 30 beats have been timed."""

    bpm: float | None
    temp_c: float
    valid: bool
    beats_used: int
    window_s: float
    t_s: float

    @property
    def temp_f(self) -> float:
        return fahrenheit(self.temp_c)


class VitalsEngine:
    """Combines a beat detector and the temperature channel into readings."""

    def __init__(
        self,
        detector: BeatDetector,
        *,
        required_beats: int = DEFAULT_REQUIRED_BEATS,
        max_bpm: float = 140.43,
        temp_window: int = 100,
    ):
        if temp_window < 1:
            raise ParameterError(f"temp_window must be >= 1, got {temp_window}")
        self.detector = detector
        self.required_beats = required_beats
        self.max_bpm = max_bpm
        self._temp_window: deque = deque(maxlen=temp_window)

    def push_temp(self, temp_c: float) -> None:
        self._temp_window.append(temp_c)

    def reading(self, t_s: float) -> VitalsReading:
        beats = self.detector.beat_times
        bpm = bpm_from_beats(beats, self.required_beats)
        used = min(len(beats), self.required_beats) if bpm is not None else len(beats)
        window = beats[-1] - beats[-self.required_beats] if bpm is not None else 0.0
        temp_c = float(np.mean(self._temp_window)) if self._temp_window else 0.0
        valid = assess_validity(
            self.detector.window_swing_v,
            beats,
            min_swing_v=self.detector.cfg.min_swing_v,
            max_bpm=self.max_bpm,
        )
        return VitalsReading(
            bpm=bpm,
            temp_c=temp_c,
            valid=valid,
            beats_used=used,
            window_s=window,
            t_s=t_s,
        )
