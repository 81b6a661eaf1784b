"""Accuracy evaluation: actual-vs-measured sweeps over the full pipeline.

For every (ground-truth value, noise preset, seed) point the harness runs
the complete signal path — pulse synthesis, filter/amplifier chain, ADC,
beat detection, rate estimation (or the temperature conversion path) — with
no real-time pacing, records the measured value and relative error, and
reports per-preset summaries. The clean-signal suite is the pass/fail gate:
its worst relative error must stay within the configured tolerance.
"""

from __future__ import annotations

import argparse
import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analog import (
    AdcConfig,
    ChainConfig,
    ChainProcessor,
    code_to_volts,
    cutoff_frequency,
    max_measurable_bpm,
    quantize,
)
from .errors import ParameterError
from .simulate import LM35_V_PER_C, HeartProfile, NoiseModel, PpgSource, TempProfile, lm35_voltage
from .vitals import (
    DEFAULT_REQUIRED_BEATS,
    VALID_BPM_MIN,
    BeatDetector,
    DetectorConfig,
    bpm_from_beats,
    fahrenheit,
)

# Disturbance presets applied to the sensor voltage (white noise sigma and
# motion-artifact amplitude, volts at the sensor, i.e. pre-amplifier).
NOISE_PRESETS = {
    "clean": {"white_sigma_v": 0.0, "motion_amp_v": 0.0},
    "mild": {"white_sigma_v": 0.002, "motion_amp_v": 0.0},
    "heavy": {"white_sigma_v": 0.006, "motion_amp_v": 0.01},
}
NOISE_ORDER = ("clean", "mild", "heavy")

DEFAULT_BPM_GRID = tuple(float(b) for b in range(40, 141, 10))
DEFAULT_TEMP_GRID_C = tuple(30.0 + 0.5 * i for i in range(31))

KIND_HR = "hr"
KIND_TEMP = "temp"

CSV_HEADER = "kind,actual,measured,rel_err_pct,noise,seed"

# One extra beat beyond the estimator's requirement: the rate is then timed
# over beats that all follow the detector's warm-up crossing.
SETTLE_BEATS = 1
TIMEOUT_BEATS = 90


@dataclass(frozen=True)
class SweepSpec:
    """What to sweep: value grids, disturbance presets, trials, tolerance."""

    bpm_values: tuple = DEFAULT_BPM_GRID
    temp_values_c: tuple = DEFAULT_TEMP_GRID_C
    noise_levels: tuple = NOISE_ORDER
    trials_per_point: int = 5
    tolerance_pct: float = 1.0
    fs_hz: float = 100.0

    def __post_init__(self):
        if self.trials_per_point < 1:
            raise ParameterError(
                f"trials_per_point must be >= 1, got {self.trials_per_point}"
            )
        if not self.tolerance_pct > 0:
            raise ParameterError(
                f"tolerance_pct must be > 0, got {self.tolerance_pct}"
            )
        unknown = [n for n in self.noise_levels if n not in NOISE_PRESETS]
        if unknown:
            raise ParameterError(f"unknown noise presets: {unknown}")
        if any(b <= 0 for b in self.bpm_values):
            raise ParameterError("bpm_values must all be > 0")


@dataclass(frozen=True)
class SweepRow:
    """One sweep point; measured/rel_err_pct are None on a failure row."""

    kind: str
    actual: float
    measured: float | None
    rel_err_pct: float | None
    noise: str
    seed: int


def _row_key(row: SweepRow):
    return (row.kind, row.actual, NOISE_ORDER.index(row.noise), row.seed)


def measure_hr_point(
    bpm: float, noise_name: str, seed: int, fs_hz: float = 100.0
) -> SweepRow:
    """Run synthesis → chain → ADC → detector until a rate reading lands.

    The point fails (measured None) if the detector cannot time enough beats
    within a 90-beat budget, or if the completed reading falls outside the
    chain's measurable range — an out-of-range input must never be recorded
    as a confident number.
    """
    profile = HeartProfile(bpm_true=bpm)
    noise = NoiseModel(seed=seed, **NOISE_PRESETS[noise_name])
    source = PpgSource(profile, noise, fs_hz=fs_hz)
    chain_cfg = ChainConfig()
    chain = ChainProcessor(chain_cfg, fs_hz)
    adc = AdcConfig(fs_hz=fs_hz)
    detector = BeatDetector(DetectorConfig(), ring_capacity=128)

    ceiling = max_measurable_bpm(cutoff_frequency(chain_cfg.stage1))
    target_beats = DEFAULT_REQUIRED_BEATS + SETTLE_BEATS
    max_samples = math.ceil(TIMEOUT_BEATS * 60.0 / bpm * fs_hz)
    block = max(1, round(fs_hz))

    primed = False
    done = 0
    while done < max_samples:
        trace = source.next_block(min(block, max_samples - done))
        done += len(trace.v)
        if not primed:
            chain.prime(float(trace.v[0]))
            primed = True
        conditioned = chain.process(trace.v)
        volts = code_to_volts(adc, quantize(adc, conditioned))
        detector.process(trace.t_s, volts)
        if len(detector.state.beat_times_s) >= target_beats:
            break

    measured = bpm_from_beats(detector.beat_times, DEFAULT_REQUIRED_BEATS)
    if measured is not None and not VALID_BPM_MIN <= measured <= ceiling:
        measured = None  # reading exists but is outside the measurable range
    rel = None if measured is None else (measured - bpm) / bpm * 100.0
    return SweepRow(KIND_HR, float(bpm), measured, rel, noise_name, seed)


def measure_temp_point(
    temp_c: float, noise_name: str, seed: int, fs_hz: float = 100.0
) -> SweepRow:
    """Sensor scale → ADC → conversion, averaged over one second of codes.

    Actual/measured/error are all in degrees Fahrenheit, the displayed unit.
    """
    preset = NOISE_PRESETS[noise_name]
    adc = AdcConfig(fs_hz=fs_hz)
    n = max(1, round(fs_hz))
    t = np.arange(n) / fs_hz
    v = lm35_voltage(TempProfile(temp_c_true=temp_c), t)
    if preset["white_sigma_v"] > 0:
        rng = np.random.default_rng([seed, 2])
        v = v + rng.normal(0.0, preset["white_sigma_v"], n)
    if preset["motion_amp_v"] > 0:
        v = v + preset["motion_amp_v"] * np.sin(2.0 * np.pi * 8.0 * t)
    codes = quantize(adc, v)
    measured_c = float(np.mean(codes)) * adc.vref_v / adc.full_scale / LM35_V_PER_C
    measured_f = fahrenheit(measured_c)
    actual_f = fahrenheit(temp_c)
    rel = (measured_f - actual_f) / actual_f * 100.0
    return SweepRow(KIND_TEMP, actual_f, measured_f, rel, noise_name, seed)


def _run_point(args) -> SweepRow:
    kind, value, noise_name, seed, fs_hz = args
    if kind == KIND_HR:
        return measure_hr_point(value, noise_name, seed, fs_hz)
    return measure_temp_point(value, noise_name, seed, fs_hz)


@dataclass
class SweepReport:
    rows: list = field(default_factory=list)

    def to_csv_text(self) -> str:
        out = [CSV_HEADER]
        for r in sorted(self.rows, key=_row_key):
            measured = "" if r.measured is None else repr(r.measured)
            rel = "" if r.rel_err_pct is None else repr(r.rel_err_pct)
            out.append(f"{r.kind},{r.actual!r},{measured},{rel},{r.noise},{r.seed}")
        return "\n".join(out) + "\n"

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv_text())

    def summary(self) -> dict:
        """(kind, noise) -> {n, failures, max_abs_pct, mean_abs_pct}."""
        groups: dict = {}
        for r in self.rows:
            groups.setdefault((r.kind, r.noise), []).append(r)
        out = {}
        for key in sorted(groups, key=lambda k: (k[0], NOISE_ORDER.index(k[1]))):
            rows = groups[key]
            errs = [abs(r.rel_err_pct) for r in rows if r.rel_err_pct is not None]
            out[key] = {
                "n": len(rows),
                "failures": sum(1 for r in rows if r.measured is None),
                "max_abs_pct": max(errs) if errs else None,
                "mean_abs_pct": sum(errs) / len(errs) if errs else None,
            }
        return out

    def summary_text(self) -> str:
        lines = []
        for (kind, noise), s in self.summary().items():
            mx = "n/a" if s["max_abs_pct"] is None else f"{s['max_abs_pct']:.4f}%"
            mn = "n/a" if s["mean_abs_pct"] is None else f"{s['mean_abs_pct']:.4f}%"
            lines.append(
                f"{kind:<5} {noise:<6} n={s['n']:<4} failures={s['failures']:<3} "
                f"max|err|={mx} mean|err|={mn}"
            )
        return "\n".join(lines)

    def clean_max_abs_pct(self) -> float:
        """Worst clean-signal error; a clean failure row counts as infinite."""
        worst = 0.0
        seen = False
        for r in self.rows:
            if r.noise != "clean":
                continue
            seen = True
            if r.rel_err_pct is None:
                return math.inf
            worst = max(worst, abs(r.rel_err_pct))
        return worst if seen else math.nan

    def passed(self, tolerance_pct: float) -> bool:
        worst = self.clean_max_abs_pct()
        return not math.isnan(worst) and worst <= tolerance_pct


def run_sweep(spec: SweepSpec, workers: int = 1) -> SweepReport:
    """Execute every sweep point; rows come back in deterministic order."""
    points = []
    for noise_name in spec.noise_levels:
        for seed in range(spec.trials_per_point):
            for bpm in spec.bpm_values:
                points.append((KIND_HR, float(bpm), noise_name, seed, spec.fs_hz))
            for temp_c in spec.temp_values_c:
                points.append((KIND_TEMP, float(temp_c), noise_name, seed, spec.fs_hz))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_point, points, chunksize=4))
    else:
        rows = [_run_point(p) for p in points]
    rows.sort(key=_row_key)
    return SweepReport(rows=rows)


def export_curve(rows, kind: str, noise: str = "clean") -> list:
    """Per-actual (actual, measured) pairs — the plotting projection.

    Measured values are averaged over trials (an echo of the rows when there
    is one trial); failure rows are skipped.
    """
    per_actual: dict = {}
    for r in rows:
        if r.kind != kind or r.noise != noise or r.measured is None:
            continue
        per_actual.setdefault(r.actual, []).append(r.measured)
    return [
        (actual, sum(vals) / len(vals))
        for actual, vals in sorted(per_actual.items())
    ]


def curve_csv_text(pairs) -> str:
    lines = ["actual,measured"]
    lines += [f"{a!r},{m!r}" for a, m in pairs]
    return "\n".join(lines) + "\n"


def read_report_csv(path) -> list:
    """Load sweep rows back from a report CSV."""
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            measured = float(rec["measured"]) if rec["measured"] else None
            rel = float(rec["rel_err_pct"]) if rec["rel_err_pct"] else None
            rows.append(
                SweepRow(
                    kind=rec["kind"],
                    actual=float(rec["actual"]),
                    measured=measured,
                    rel_err_pct=rel,
                    noise=rec["noise"],
                    seed=int(rec["seed"]),
                )
            )
    return rows


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="accuracy-harness",
        description="Actual-vs-measured sweeps over the simulated pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sweep_p = sub.add_parser("sweep", help="run the sweep and write a report CSV")
    sweep_p.add_argument("--out", default="report.csv")
    sweep_p.add_argument("--bpm-grid", nargs="*", type=float)
    sweep_p.add_argument("--temp-grid", nargs="*", type=float)
    sweep_p.add_argument(
        "--noise", nargs="*", choices=sorted(NOISE_PRESETS), default=list(NOISE_ORDER)
    )
    sweep_p.add_argument("--trials", type=int, default=5)
    sweep_p.add_argument("--tolerance-pct", type=float, default=1.0)
    sweep_p.add_argument("--fs", type=float, default=100.0)
    sweep_p.add_argument("--workers", type=int, default=1)

    curve_p = sub.add_parser("curve", help="project a report into plot data")
    curve_p.add_argument("--in", dest="in_path", required=True)
    curve_p.add_argument("--kind", choices=[KIND_HR, KIND_TEMP], required=True)
    curve_p.add_argument("--out", default="curve.csv")
    curve_p.add_argument("--noise", choices=sorted(NOISE_PRESETS), default="clean")

    args = parser.parse_args(argv)

    if args.command == "sweep":
        spec = SweepSpec(
            bpm_values=tuple(args.bpm_grid) if args.bpm_grid else DEFAULT_BPM_GRID,
            temp_values_c=(
                tuple(args.temp_grid) if args.temp_grid else DEFAULT_TEMP_GRID_C
            ),
            noise_levels=tuple(
                sorted(set(args.noise), key=NOISE_ORDER.index)
            ),
            trials_per_point=args.trials,
            tolerance_pct=args.tolerance_pct,
            fs_hz=args.fs,
        )
        report = run_sweep(spec, workers=args.workers)
        report.write_csv(args.out)
        print(report.summary_text())
        if report.passed(spec.tolerance_pct):
            print(f"PASS: clean max |rel err| within {spec.tolerance_pct}%")
            return 0
        print(f"FAIL: clean max |rel err| exceeds {spec.tolerance_pct}%")
        return 1

    rows = read_report_csv(args.in_path)
    pairs = export_curve(rows, args.kind, args.noise)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write(curve_csv_text(pairs))
    print(f"wrote {len(pairs)} points to {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
