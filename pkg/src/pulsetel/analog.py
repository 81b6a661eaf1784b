"""Digital emulation of the signal-conditioning front end and the ADC.

Two identical active low-pass filter/amplifier stages in series, each a
single-pole RC low-pass followed by a voltage gain and hard saturation at the
supply rails, then round-to-nearest quantization. The pole is discretized
with the exact exponential form

    y[n] = y[n-1] + (1 - exp(-2*pi*fc/fs)) * (x[n] - y[n-1])

which is stable for any fc < fs/2 and matches the analog DC gain exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .errors import ContractError, ParameterError
from .simulate import Trace


@dataclass(frozen=True)
class RcStage:
    """One active low-pass stage: feedback RC pair plus passband gain."""

    r_f_ohms: float = 68_000.0
    c_f_farads: float = 1.0e-6
    gain: float = 5.0

    def __post_init__(self):
        if not self.r_f_ohms > 0:
            raise ParameterError(f"r_f_ohms must be > 0, got {self.r_f_ohms}")
        if not self.c_f_farads > 0:
            raise ParameterError(f"c_f_farads must be > 0, got {self.c_f_farads}")
        if self.gain < 1:
            raise ParameterError(f"gain must be >= 1, got {self.gain}")


def cutoff_frequency(stage: RcStage) -> float:
    """-3 dB corner of the stage: 1 / (2*pi*Rf*Cf)."""
    fc = 1.0 / (2.0 * math.pi * stage.r_f_ohms * stage.c_f_farads)
    if not math.isfinite(fc) or fc <= 0:
        raise ParameterError("cutoff frequency is not finite and positive")
    return fc


def max_measurable_bpm(cutoff_hz: float) -> float:
    """Highest heart rate the low-pass band admits: 60 * cutoff."""
    if not cutoff_hz > 0:
        raise ParameterError(f"cutoff_hz must be > 0, got {cutoff_hz}")
    return 60.0 * cutoff_hz


@dataclass(frozen=True)
class ChainConfig:
    """The two-stage conditioning chain with its supply rails."""

    stage1: RcStage = RcStage()
    stage2: RcStage = RcStage()
    rail_low_v: float = 0.0
    rail_high_v: float = 5.0

    def __post_init__(self):
        if not self.rail_high_v > self.rail_low_v:
            raise ParameterError("rail_high_v must exceed rail_low_v")

    @property
    def total_gain(self) -> float:
        return self.stage1.gain * self.stage2.gain


@dataclass(frozen=True)
class AdcConfig:
    """Successive-approximation digitizer parameters."""

    bits: int = 12
    vref_v: float = 3.3
    fs_hz: float = 100.0

    def __post_init__(self):
        if not (isinstance(self.bits, int) and self.bits >= 8):
            raise ParameterError(f"bits must be an integer >= 8, got {self.bits}")
        if not self.vref_v > 0:
            raise ParameterError(f"vref_v must be > 0, got {self.vref_v}")
        if not self.fs_hz > 0:
            raise ParameterError(f"fs_hz must be > 0, got {self.fs_hz}")

    @property
    def full_scale(self) -> int:
        return (1 << self.bits) - 1


class StageFilter:
    """Streaming single-pole low-pass + gain + rail clamp for one stage.

    Owns per-stream filter state; one instance per stream. `prime` sets the
    internal state as if the input had been held at that level forever, so a
    stream can start settled instead of stepping up from zero.
    """

    def __init__(self, stage: RcStage, fs_hz: float, rail_low_v=0.0, rail_high_v=5.0):
        fc = cutoff_frequency(stage)
        self.alpha = 1.0 - math.exp(-2.0 * math.pi * fc / fs_hz)
        self.gain = stage.gain
        self.rails = (rail_low_v, rail_high_v)
        self._zi = np.zeros(1)

    def prime(self, v0: float) -> None:
        self._zi = np.array([(1.0 - self.alpha) * v0])

    def process(self, v: np.ndarray) -> np.ndarray:
        b = [self.alpha]
        a = [1.0, -(1.0 - self.alpha)]
        y, self._zi = lfilter(b, a, np.asarray(v, dtype=float), zi=self._zi)
        return np.clip(y * self.gain, *self.rails)


class ChainProcessor:
    """The two stages in series, with persistent state across blocks."""

    def __init__(self, cfg: ChainConfig, fs_hz: float, prime_v: float | None = None):
        self.cfg = cfg
        self.fs_hz = float(fs_hz)
        rails = (cfg.rail_low_v, cfg.rail_high_v)
        self._s1 = StageFilter(cfg.stage1, fs_hz, *rails)
        self._s2 = StageFilter(cfg.stage2, fs_hz, *rails)
        if prime_v is not None:
            self.prime(prime_v)

    def prime(self, v0: float) -> None:
        self._s1.prime(v0)
        mid = min(max(v0 * self._s1.gain, self.cfg.rail_low_v), self.cfg.rail_high_v)
        self._s2.prime(mid)

    def process(self, v: np.ndarray) -> np.ndarray:
        return self._s2.process(self._s1.process(v))


def apply_chain(cfg: ChainConfig, trace: Trace, settle_at_first=True) -> Trace:
    """Run a whole trace through the two-stage chain.

    The trace must be uniformly sampled; the chain state starts settled at
    the first input value unless `settle_at_first` is False (then it starts
    from zero, exposing the step transient).
    """
    if len(trace) == 0:
        return Trace([], [], trace.fs_hz)
    dt = np.diff(trace.t_s)
    if len(dt) and not np.allclose(dt, 1.0 / trace.fs_hz, rtol=1e-9, atol=1e-9):
        raise ContractError("input trace is not uniformly sampled at fs_hz")
    proc = ChainProcessor(cfg, trace.fs_hz)
    if settle_at_first:
        proc.prime(float(trace.v[0]))
    return Trace(trace.t_s, proc.process(trace.v), trace.fs_hz)


class DigitizedTrace:
    """Quantized stream: timestamps plus integer ADC codes."""

    __slots__ = ("t_s", "codes", "adc")

    def __init__(self, t_s, codes, adc: AdcConfig):
        self.t_s = np.asarray(t_s, dtype=float)
        self.codes = np.asarray(codes, dtype=np.int64)
        self.adc = adc

    def __len__(self):
        return len(self.t_s)

    def __iter__(self):
        for t, c in zip(self.t_s, self.codes):
            yield float(t), int(c)

    def to_volts(self) -> np.ndarray:
        return self.codes * (self.adc.vref_v / self.adc.full_scale)


def quantize(adc: AdcConfig, v) -> np.ndarray:
    """volts -> ADC codes, round-to-nearest after clamping to [0, vref]."""
    v = np.clip(np.asarray(v, dtype=float), 0.0, adc.vref_v)
    return np.rint(v * (adc.full_scale / adc.vref_v)).astype(np.int64)


def code_to_volts(adc: AdcConfig, code) -> np.ndarray:
    """Inverse reconstruction; within half an LSB of the clamped input."""
    return np.asarray(code) * (adc.vref_v / adc.full_scale)


def digitize(adc: AdcConfig, trace: Trace) -> DigitizedTrace:
    """Quantize a voltage trace into timestamped ADC codes."""
    return DigitizedTrace(trace.t_s, quantize(adc, trace.v), adc)
