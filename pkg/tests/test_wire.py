"""Telemetry wire-format tests: canonical bytes, round trips, and rejection.

The canonical encodings are pinned byte-for-byte; decoding is checked for
exact inversion on randomized frames and for graceful rejection (a single
exception type naming the offense) on a table of malformed inputs plus
arbitrary-byte fuzz.
"""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_frame
from pulsetel.errors import ParameterError
from pulsetel.wire import (
    CALIBRATION_MAX_REFRACTORY_S,
    LCD_WIDTH,
    MAX_BATCH_SAMPLES,
    MAX_FRAME_BYTES,
    MAX_SID_CHARS,
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


def test_canonical_sample_line():
    line = encode_frame(sample_frame("dev-001", 5, 1250, 1.25))
    assert line == '{"sid":"dev-001","seq":5,"t_ms":1250,"kind":"sample","v":1.25}\n'


def test_canonical_batch_line():
    line = encode_frame(sample_batch_frame("d", 0, 0, 10.0, [0.5, 1.0]))
    assert line == (
        '{"sid":"d","seq":0,"t_ms":0,"kind":"sample","dt_ms":10.0,"vs":[0.5,1.0]}\n'
    )


def test_canonical_vitals_line_with_null_rate():
    frame = vitals_frame(
        "d", 1, 2000, bpm=None, temp_c=37.0, temp_f=98.6, valid=False,
        beats_used=3, window_s=0.0,
    )
    assert encode_frame(frame) == (
        '{"sid":"d","seq":1,"t_ms":2000,"kind":"vitals","bpm":null,'
        '"temp_c":37.0,"temp_f":98.6,"valid":false,"beats_used":3,"window_s":0.0}\n'
    )


def test_canonical_status_line():
    frame = status_frame(
        "d", 2, 3000, power_mode="normal", watts=0.7,
        lcd_line1="HR:  72 bpm     ", lcd_line2="T: 98.6F      * ",
    )
    assert encode_frame(frame) == (
        '{"sid":"d","seq":2,"t_ms":3000,"kind":"status","power_mode":"normal",'
        '"watts":0.7,"lcd_line1":"HR:  72 bpm     ","lcd_line2":"T: 98.6F      * "}\n'
    )


def test_round_trip_identity_on_randomized_frames():
    rng = np.random.default_rng(2024)
    for _ in range(10_000):
        frame = make_frame(rng)
        line = encode_frame(frame)
        assert line.endswith("\n") and "\n" not in line[:-1]
        back = decode_frame(line)
        assert back == frame
        # Re-encoding the decoded frame reproduces the same bytes.
        assert encode_frame(back) == line


def test_decode_accepts_bytes_and_str():
    line = encode_frame(sample_frame("a", 0, 0, 1.0))
    assert decode_frame(line) == decode_frame(line.encode("utf-8"))
    assert decode_frame(bytearray(line.encode())) == decode_frame(line)


def test_unknown_fields_are_ignored_on_decode():
    obj = json.loads(encode_frame(sample_frame("a", 0, 0, 1.0)))
    obj["future_field"] = {"nested": [1, 2, 3]}
    frame = decode_frame(json.dumps(obj))
    assert frame.payload == {"v": 1.0}


_BAD_LINES = [
    ("", "empty"),
    ("   \n", "empty"),
    ("not json", "not valid JSON"),
    ("[1,2,3]", "JSON object"),
    ('"frame"', "JSON object"),
    ("null", "JSON object"),
    ("3.14", "JSON object"),
    ("{}", "sid"),
    ('{"sid":"a","seq":0,"t_ms":0}', "kind"),
    ('{"sid":"a","seq":0,"t_ms":0,"kind":"bogus","v":1}', "unknown frame kind"),
    ('{"sid":"","seq":0,"t_ms":0,"kind":"sample","v":1}', "non-empty"),
    ('{"sid":5,"seq":0,"t_ms":0,"kind":"sample","v":1}', "'sid' must be a string"),
    ('{"sid":"a","seq":-1,"t_ms":0,"kind":"sample","v":1}', ">= 0"),
    ('{"sid":"a","seq":1.5,"t_ms":0,"kind":"sample","v":1}', "integer"),
    ('{"sid":"a","seq":true,"t_ms":0,"kind":"sample","v":1}', "integer"),
    ('{"sid":"a","seq":0,"t_ms":"x","kind":"sample","v":1}', "integer"),
    ('{"sid":"a","seq":0,"t_ms":0,"kind":"sample"}', "missing field 'v'"),
    ('{"sid":"a","seq":0,"t_ms":0,"kind":"sample","v":"1"}', "number"),
    ('{"sid":"a","seq":0,"t_ms":0,"kind":"sample","v":true}', "number"),
    ('{"sid":"a","seq":0,"t_ms":0,"kind":"sample","v":NaN}', "finite"),
    ('{"sid":"a","seq":0,"t_ms":0,"kind":"sample","v":Infinity}', "finite"),
    ('{"sid":"a","seq":0,"t_ms":0,"kind":"sample","dt_ms":10,"vs":[]}', "1..50"),
    ('{"sid":"a","seq":0,"t_ms":0,"kind":"sample","dt_ms":10,"vs":3}', "1..50"),
    ('{"sid":"a","seq":0,"t_ms":0,"kind":"sample","dt_ms":0,"vs":[1.0]}', "> 0"),
    ('{"sid":"a","seq":0,"t_ms":0,"kind":"sample","vs":[1.0]}', "dt_ms"),
    (
        '{"sid":"a","seq":0,"t_ms":0,"kind":"sample","dt_ms":10,"vs":[true]}',
        "number",
    ),
    (
        '{"sid":"a","seq":0,"t_ms":0,"kind":"vitals","bpm":0,"temp_c":37,'
        '"temp_f":98.6,"valid":true,"beats_used":0,"window_s":0}',
        "> 0",
    ),
    (
        '{"sid":"a","seq":0,"t_ms":0,"kind":"vitals","bpm":72,"temp_c":37,'
        '"temp_f":98.6,"valid":1,"beats_used":0,"window_s":0}',
        "boolean",
    ),
    (
        '{"sid":"a","seq":0,"t_ms":0,"kind":"vitals","bpm":72,"temp_c":37,'
        '"temp_f":98.6,"valid":true,"beats_used":-2,"window_s":0}',
        ">= 0",
    ),
    (
        '{"sid":"a","seq":0,"t_ms":0,"kind":"vitals","bpm":72,"temp_c":37,'
        '"temp_f":98.6,"valid":true,"beats_used":0,"window_s":-0.5}',
        ">= 0",
    ),
    (
        '{"sid":"a","seq":0,"t_ms":0,"kind":"status","power_mode":"","watts":1,'
        '"lcd_line1":"","lcd_line2":""}',
        "non-empty",
    ),
    (
        '{"sid":"a","seq":0,"t_ms":0,"kind":"status","power_mode":"normal",'
        '"watts":0,"lcd_line1":"","lcd_line2":""}',
        "> 0",
    ),
    (
        '{"sid":"a","seq":0,"t_ms":0,"kind":"status","power_mode":"normal",'
        '"watts":1,"lcd_line1":"01234567890123456","lcd_line2":""}',
        "16",
    ),
]


@pytest.mark.parametrize("line,needle", _BAD_LINES, ids=range(len(_BAD_LINES)))
def test_malformed_lines_are_rejected_with_reason(line, needle):
    with pytest.raises(FrameDecodeError) as err:
        decode_frame(line)
    assert needle in str(err.value)


def test_rejects_oversized_sid():
    line = json.dumps(
        {"sid": "s" * (MAX_SID_CHARS + 1), "seq": 0, "t_ms": 0, "kind": "sample", "v": 1}
    )
    with pytest.raises(FrameDecodeError, match="64"):
        decode_frame(line)


def test_rejects_oversized_batch():
    vs = [1.0] * (MAX_BATCH_SAMPLES + 1)
    line = json.dumps(
        {"sid": "a", "seq": 0, "t_ms": 0, "kind": "sample", "dt_ms": 10, "vs": vs}
    )
    with pytest.raises(FrameDecodeError, match="1..50"):
        decode_frame(line)


def test_rejects_oversized_line():
    frame = sample_frame("a", 0, 0, 1.0)
    line = encode_frame(frame)[:-1] + " " * MAX_FRAME_BYTES + "\n"
    with pytest.raises(FrameDecodeError, match="8192"):
        decode_frame(line)


def test_rejects_invalid_utf8():
    with pytest.raises(FrameDecodeError, match="UTF-8"):
        decode_frame(b'\xff\xfe{"sid":"a"}')


def test_survives_pathological_nesting():
    with pytest.raises(FrameDecodeError):
        decode_frame("[" * 4000)


def test_encode_rejects_contract_violations():
    good = sample_frame("a", 0, 0, 1.0)
    cases = [
        TelemetryFrame("", 0, 0, "sample", {"v": 1.0}),
        TelemetryFrame("a" * 65, 0, 0, "sample", {"v": 1.0}),
        TelemetryFrame("a", -1, 0, "sample", {"v": 1.0}),
        TelemetryFrame("a", 0, 0, "mystery", {"v": 1.0}),
        TelemetryFrame("a", 0, 0, "sample", {"v": float("nan")}),
        TelemetryFrame("a", 0, 0, "sample", {"v": 1.0, "extra": 2}),
        TelemetryFrame("a", 0, 0, "sample", {}),
        TelemetryFrame("a", 0, 0, "status", {"power_mode": "x", "watts": 1.0,
                                             "lcd_line1": "y" * 17, "lcd_line2": ""}),
    ]
    for frame in cases:
        with pytest.raises(FrameEncodeError):
            encode_frame(frame)
    assert decode_frame(encode_frame(good)) == good


def test_constructor_validation():
    with pytest.raises(ParameterError):
        sample_batch_frame("a", 0, 0, 10.0, [])
    with pytest.raises(ParameterError):
        sample_batch_frame("a", 0, 0, 10.0, [1.0] * 51)


@settings(deadline=None, max_examples=300)
@given(st.binary(max_size=65536))
def test_fuzz_bytes_never_crash_decoder(data):
    try:
        frame = decode_frame(data)
    except FrameDecodeError:
        return
    assert isinstance(frame, TelemetryFrame)


@settings(deadline=None, max_examples=300)
@given(st.text(alphabet='{}[]",:0123456789.eE+-truefalsnSIDqmkvy \n', max_size=512))
def test_fuzz_jsonish_text_never_crashes_decoder(text):
    try:
        frame = decode_frame(text)
    except FrameDecodeError:
        return
    assert isinstance(frame, TelemetryFrame)


# -- calibration commands ----------------------------------------------------


def test_calibration_canonical_line_and_round_trip():
    cmd = CalibrationCommand(threshold_v=1.8, refractory_s=None, issued_at_ms=5)
    line = encode_calibration(cmd)
    assert line == '{"threshold_v":1.8,"refractory_s":null,"issued_at_ms":5}\n'
    assert decode_calibration(line) == cmd
    auto = CalibrationCommand()
    assert decode_calibration(encode_calibration(auto)) == auto


def test_calibration_decodes_from_dict_and_defaults():
    cmd = decode_calibration({"threshold_v": None})
    assert cmd.threshold_v is None
    assert cmd.refractory_s is None
    assert cmd.issued_at_ms == 0
    cmd = decode_calibration({"threshold_v": 2, "refractory_s": 0.3})
    assert cmd.threshold_v == 2.0
    assert cmd.refractory_s == 0.3


@pytest.mark.parametrize(
    "body",
    [
        "{}",  # threshold_v key is required (null means auto)
        '{"threshold_v": 5.1}',
        '{"threshold_v": -0.1}',
        '{"threshold_v": true}',
        '{"threshold_v": NaN}',
        '{"threshold_v": "1.0"}',
        '{"threshold_v": 1.0, "refractory_s": 0}',
        '{"threshold_v": 1.0, "refractory_s": 0.43}',  # >= 60/140
        '{"threshold_v": 1.0, "refractory_s": -1}',
        '{"threshold_v": 1.0, "issued_at_ms": -5}',
        '{"threshold_v": 1.0, "issued_at_ms": 1.5}',
        "[]",
        "not json",
    ],
)
def test_calibration_rejects_bad_bodies(body):
    with pytest.raises(FrameDecodeError):
        decode_calibration(body)


def test_calibration_refractory_bound_is_exclusive():
    just_inside = CALIBRATION_MAX_REFRACTORY_S - 1e-6
    assert decode_calibration(
        {"threshold_v": None, "refractory_s": just_inside}
    ).refractory_s == pytest.approx(just_inside)
    with pytest.raises(FrameDecodeError):
        decode_calibration({"threshold_v": None, "refractory_s": CALIBRATION_MAX_REFRACTORY_S})


def test_calibration_command_validates_directly():
    with pytest.raises(ParameterError):
        CalibrationCommand(threshold_v=9.0)
    with pytest.raises(ParameterError):
        CalibrationCommand(threshold_v=True)  # type: ignore[arg-type]
    with pytest.raises(ParameterError):
        CalibrationCommand(refractory_s=0.5)
    with pytest.raises(ParameterError):
        CalibrationCommand(issued_at_ms=-1)
    # Bounds themselves are legal values.
    assert CalibrationCommand(threshold_v=0.0).threshold_v == 0.0
    assert CalibrationCommand(threshold_v=5.0).threshold_v == 5.0


def test_lcd_width_constant_matches_display():
    assert LCD_WIDTH == 16
    assert MAX_FRAME_BYTES == 8192
    assert MAX_BATCH_SAMPLES == 50
