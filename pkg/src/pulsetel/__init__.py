"""Simulated fingertip pulse / body-temperature monitor with live telemetry.

The package mirrors a small embedded instrument end to end in software:
`simulate` synthesizes the optical pulse and temperature-sensor voltages,
`analog` emulates the two-stage filter/amplifier front end and the ADC,
`vitals` detects beats and estimates the displayed numbers, `wire` defines
the NDJSON telemetry format, `device` runs a complete simulated unit,
`server` ingests and re-serves telemetry, and `harness` sweeps ground truth
against measurement to check the accuracy budget.
"""

from .analog import (
    AdcConfig,
    ChainConfig,
    ChainProcessor,
    DigitizedTrace,
    RcStage,
    StageFilter,
    apply_chain,
    code_to_volts,
    cutoff_frequency,
    digitize,
    max_measurable_bpm,
    quantize,
)
from .device import (
    POWER_WATTS,
    DeviceAgent,
    DeviceConfig,
    NetSender,
    render_lcd,
    run_device,
)
from .errors import ContractError, ParameterError, RangeError
from .harness import (
    NOISE_PRESETS,
    SweepReport,
    SweepRow,
    SweepSpec,
    export_curve,
    measure_hr_point,
    measure_temp_point,
    run_sweep,
)
from .simulate import (
    HeartProfile,
    NoiseModel,
    PpgSource,
    Sample,
    TempProfile,
    Trace,
    generate_ppg,
    lm35_voltage,
    trace_from_csv,
)
from .vitals import (
    BeatDetector,
    DetectorConfig,
    DetectorState,
    SlidingExtrema,
    VitalsEngine,
    VitalsReading,
    assess_validity,
    bpm_from_beats,
    detect_beats,
    fahrenheit,
    temp_from_code,
)
from .server import SessionStore, create_app
from .wire import (
    CalibrationCommand,
    FrameDecodeError,
    FrameEncodeError,
    TelemetryFrame,
    decode_calibration,
    decode_frame,
    encode_calibration,
    encode_frame,
    sample_batch_frame,
    sample_frame,
    status_frame,
    vitals_frame,
)

__all__ = [name for name in dir() if not name.startswith("_")]
