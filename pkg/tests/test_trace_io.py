import hashlib
import struct

import numpy as np
import pytest

from models.events import EventRecorder
from models.schemas import TraceConfig
from services.curve import G, Scalar, scalar_mul
from services.errors import TraceFormatError
from services.leakage import calibrate_noise, simulate_trace, snr
from services.trace_io import HEADER, export_csv, read_trace, sidecar_path, write_trace


@pytest.fixture(scope="module")
def trace():
    recorder = EventRecorder()
    scalar_mul(Scalar.from_bits("101"), G, sink=recorder)
    return simulate_trace(recorder.events, TraceConfig.desk(noise_sigma=0.1, seed=21))


def test_write_and_read_back(tmp_path, trace):
    path = write_trace(tmp_path / "kp.atrc", trace)
    assert sidecar_path(path).exists()
    loaded = read_trace(path)
    assert np.array_equal(loaded.samples, trace.samples)
    assert loaded.samples_per_cycle == trace.samples_per_cycle
    assert loaded.config == trace.config
    assert loaded.prefix_samples == trace.prefix_samples
    assert [(a.start, a.end, a.event.kind, a.event.dst) for a in loaded.annotations] == \
        [(a.start, a.end, a.event.kind, a.event.dst) for a in trace.annotations]


def test_value_leakage_survives_round_trip(tmp_path):
    recorder = EventRecorder()
    scalar_mul(Scalar.from_bits("1101"), G, sink=recorder)
    cfg = TraceConfig.desk(value_weight=1.0, seed=5)
    sigma = calibrate_noise(recorder.events, cfg, 1.36)
    trace = simulate_trace(recorder.events, cfg.model_copy(update={"noise_sigma": sigma}))
    loaded = read_trace(write_trace(tmp_path / "kp.atrc", trace))
    assert [a.event for a in loaded.annotations] == [a.event for a in trace.annotations]
    assert snr(loaded) == pytest.approx(snr(trace), rel=1e-9)
    assert snr(loaded) == pytest.approx(1.36, rel=0.05)


def test_header_layout(tmp_path, trace):
    path = write_trace(tmp_path / "kp.atrc", trace, with_annotations=False)
    raw = path.read_bytes()
    magic, version, spc, count = struct.unpack("<4sHHQ", raw[:HEADER.size])
    assert (magic, version, spc, count) == (b"ATRC", 1, 10, len(trace))
    assert len(raw) == HEADER.size + 4 * len(trace)
    assert not sidecar_path(path).exists()


def test_identical_traces_give_identical_files(tmp_path, trace):
    a = write_trace(tmp_path / "a.atrc", trace)
    b = write_trace(tmp_path / "b.atrc", trace)
    assert hashlib.sha256(a.read_bytes()).digest() == hashlib.sha256(b.read_bytes()).digest()
    assert sidecar_path(a).read_text() == sidecar_path(b).read_text()


def test_rejects_foreign_file(tmp_path):
    path = tmp_path / "foreign.atrc"
    path.write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(TraceFormatError):
        read_trace(path)


def test_rejects_short_payload(tmp_path, trace):
    path = write_trace(tmp_path / "kp.atrc", trace, with_annotations=False)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(TraceFormatError):
        read_trace(path)


def test_missing_explicit_sidecar(tmp_path, trace):
    path = write_trace(tmp_path / "kp.atrc", trace, with_annotations=False)
    with pytest.raises(TraceFormatError):
        read_trace(path, annotations=tmp_path / "missing.json")


def test_csv_export(tmp_path, trace):
    path = export_csv(tmp_path / "kp.csv", trace)
    lines = path.read_text().splitlines()
    assert lines[0] == "index,amplitude"
    assert len(lines) == len(trace) + 1
    assert lines[1].startswith("0,")
