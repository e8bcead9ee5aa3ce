import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hybridecg.beats import BeatSet, extract_beats
from hybridecg.synthetic import make_record
from hybridecg.wfdb_io import (SYMBOL_CODES, AnnotationEvent, LeadNotFoundError, UnsupportedFormatError,
                               WfdbFormatError, decode_format212, encode_annotations, encode_format212,
                               export_csv, find_records, load_csv_fallback, load_record,
                               parse_annotations, parse_header, select_lead, verify_checksum,
                               write_record)

from conftest import mitdb_dir

HEADER_100 = """100 2 360 650000
100.dat 212 200 11 1024 995 -22131 0 MLII
100.dat 212 200 11 1024 1011 20052 0 V5
# 69 M 1085 1629 x1
# Aldomet, Inderal
"""


@pytest.fixture(scope="module")
def expected(data_dir):
    return json.loads((data_dir / "expected.json").read_text())


# headers

def test_header_record_line():
    h = parse_header(HEADER_100)
    assert (h.record_name, h.n_signals, h.sampling_rate, h.n_samples) == ("100", 2, 360.0, 650000)
    assert h.lead_names == ["MLII", "V5"]
    s = h.signals[0]
    assert (s.format_code, s.gain, s.baseline, s.adc_resolution, s.adc_zero) == (212, 200.0, 1024, 11, 1024)
    assert (s.initial_value, s.checksum) == (995, -22131)
    assert h.comments == ["69 M 1085 1629 x1", "Aldomet, Inderal"]


def test_header_explicit_baseline_and_units():
    h = parse_header("r 1 360 10\nr.dat 212 200.0(1024)/mV 12 0 5 7 0 MLII\n")
    s = h.signals[0]
    assert (s.gain, s.baseline, s.adc_zero) == (200.0, 1024, 0)


def test_header_zero_signals_rejected():
    with pytest.raises(WfdbFormatError):
        parse_header("x 0 360 100\n")


def test_header_format_16_rejected():
    with pytest.raises(UnsupportedFormatError):
        parse_header("x 1 360 100\nx.dat 16 200 11 1024 0 0 0 MLII\n")


def test_header_signal_count_mismatch():
    with pytest.raises(WfdbFormatError):
        parse_header("x 2 360 100\nx.dat 212 200 11 1024 0 0 0 MLII\n")


def test_header_zero_gain_means_default():
    assert parse_header("x 1 360 5\nx.dat 212 0 11 0 0 0 0 MLII\n").signals[0].gain == 200.0


# format 212

def test_decode_examples():
    assert decode_format212(bytes([0xE8, 0x03, 0x00]), 2, 1).ravel().tolist() == [1000, 0]
    assert decode_format212(bytes(3), 2, 1).ravel().tolist() == [0, 0]
    assert decode_format212(bytes([0xFF, 0xFF, 0xFF]), 2, 1).ravel().tolist() == [-1, -1]


def test_decode_truncated():
    with pytest.raises(WfdbFormatError):
        decode_format212(bytes(5), 2, 2)


def test_decode_interleaves_channels():
    adc = np.array([[1, 2, 3], [-4, -5, -6]])
    assert np.array_equal(decode_format212(encode_format212(adc), 2, 3), adc)


def test_sign_extension_all_values():
    values = np.arange(-2048, 2048).reshape(2, -1)
    assert np.array_equal(decode_format212(encode_format212(values), 2, values.shape[1]), values)


@settings(max_examples=50, deadline=None)
@given(arrays(np.int16, st.tuples(st.integers(1, 3), st.integers(1, 40)),
              elements=st.integers(-2048, 2047)))
def test_decode_encode_identity(adc):
    data = encode_format212(adc)
    assert len(data) == (3 * adc.size + 1) // 2
    assert np.array_equal(decode_format212(data, *adc.shape), adc)
    assert encode_format212(decode_format212(data, *adc.shape)) == data


def test_checksum_examples():
    h = parse_header("x 1 360 1\nx.dat 212 200 11 0 7 7 0 MLII\n")
    assert verify_checksum(np.array([[7]]), h) == [True]
    assert verify_checksum(np.array([[8]]), h) == [False]


def test_checksum_is_16_bit_signed_or_unsigned():
    adc = np.full((1, 40), 2000)  # sum 80000 wraps to 14464
    for value in (14464, 14464 - 65536):
        h = parse_header(f"x 1 360 40\nx.dat 212 200 11 0 0 {value} 0 MLII\n")
        assert verify_checksum(adc, h) == [True]


# annotations

def test_annotation_examples():
    events = parse_annotations(bytes([0x01, 0x04, 0x00, 0x00]))
    assert [(e.sample_index, e.symbol_code) for e in events] == [(1, 1)]
    assert parse_annotations(bytes(2)) == []
    words = [(1 << 10) | 10, (1 << 10) | 5, 0]
    data = b"".join(w.to_bytes(2, "little") for w in words)
    assert [e.sample_index for e in parse_annotations(data)] == [10, 15]


def test_annotation_truncated_and_aux_overrun():
    with pytest.raises(WfdbFormatError):
        parse_annotations(bytes([0x01]))
    aux = (63 << 10) | 20
    data = ((1 << 10) | 3).to_bytes(2, "little") + aux.to_bytes(2, "little") + b"ab"
    with pytest.raises(WfdbFormatError):
        parse_annotations(data)


def test_annotation_encode_roundtrip():
    events = [AnnotationEvent(0, SYMBOL_CODES["+"], aux=b"(AFL"),
              AnnotationEvent(5, SYMBOL_CODES["N"]),
              AnnotationEvent(5000, SYMBOL_CODES["V"], chan=1, num=-3),
              AnnotationEvent(5001, SYMBOL_CODES["|"], subtype=4, chan=1, num=-3),
              AnnotationEvent(90000, SYMBOL_CODES["N"])]
    assert parse_annotations(encode_annotations(events)) == events


# golden fixtures written by the reference implementation

def test_golden_signals(data_dir, expected):
    for key in ("g100.atr", "g102.atr"):
        e = expected[key]
        rec = load_record(data_dir, key.split(".")[0])
        assert rec.header.n_samples == e["n_samples"]
        assert rec.header.lead_names == e["leads"]
        assert [s.checksum for s in rec.header.signals] == e["checksums"]
        assert verify_checksum(rec.adc, rec.header) == [True, True]
        assert rec.adc[:, :8].tolist() == e["adc_head"]
        assert rec.adc.astype(np.int64).sum(axis=1).tolist() == e["adc_sum"]


@pytest.mark.parametrize("key", ["g100.atr", "g100.gap", "g102.atr"])
def test_golden_annotations(data_dir, expected, key):
    name, ext = key.split(".")
    e = expected[key]
    events = parse_annotations((data_dir / key).read_bytes())
    assert len(events) == e["ann_count"]
    assert [ev.sample_index for ev in events] == e["ann_samples"]
    assert [ev.symbol for ev in events] == e["ann_symbols"]
    assert [(ev.aux or b"").decode() for ev in events] == e["ann_aux"]
    assert [ev.chan for ev in events] == e["ann_chan"]
    assert [ev.num for ev in events] == e["ann_num"]
    assert [ev.subtype for ev in events] == e["ann_subtype"]


def test_physical_units(data_dir):
    rec = load_record(data_dir, "g100")
    assert np.allclose(rec.physical, (rec.adc - 1024) / 200.0)


def test_beats_filtered_and_increasing(data_dir):
    rec = load_record(data_dir, "g100")
    samples = [s for s, _ in rec.beats]
    assert np.all(np.diff(samples) > 0)
    assert {c for _, c in rec.beats} <= {SYMBOL_CODES[s] for s in "NVAF"}
    assert len(rec.beats) == 14


def test_select_lead(data_dir):
    rec = load_record(data_dir, "g100")
    assert select_lead(rec, "MLII") == 0
    assert select_lead(rec, "V5") == 1
    with pytest.raises(LeadNotFoundError):
        select_lead(load_record(data_dir, "g102"), "MLII")


def test_csv_fallback_matches_wfdb(data_dir):
    wf = load_record(data_dir, "g100")
    cs = load_csv_fallback(data_dir / "g100.csv")
    assert np.allclose(cs.physical[0], wf.physical[0], atol=1e-12)
    assert cs.beats == wf.beats
    b1, b2 = extract_beats(wf), extract_beats(cs)
    assert np.array_equal(b1.labels, b2.labels)
    assert np.allclose(b1.windows, b2.windows)


def test_csv_fallback_examples(tmp_path):
    (tmp_path / "z.csv").write_text("sample_index,mV\n0,0\n1,0\n2,0\n")
    rec = load_csv_fallback(tmp_path / "z.csv")
    assert rec.physical.shape == (1, 3) and not rec.physical.any()
    (tmp_path / "a.csv").write_text("sample_index,mV\n" + "".join(f"{i},0\n" for i in range(400)))
    (tmp_path / "a_annotations.csv").write_text("sample_index,symbol\n360,N\n")
    assert load_csv_fallback(tmp_path / "a.csv").beats == [(360, SYMBOL_CODES["N"])]


def test_csv_fallback_errors(tmp_path):
    (tmp_path / "bad.csv").write_text("idx,value\n0,1\n")
    with pytest.raises(WfdbFormatError):
        load_csv_fallback(tmp_path / "bad.csv")
    (tmp_path / "gap.csv").write_text("sample_index,mV\n0,1\n2,1\n")
    with pytest.raises(WfdbFormatError):
        load_csv_fallback(tmp_path / "gap.csv")
    (tmp_path / "ok.csv").write_text("sample_index,mV\n0,1\n1,1\n")
    (tmp_path / "ok_annotations.csv").write_text("sample_index,symbol\n1,N\n0,N\n")
    with pytest.raises(WfdbFormatError):
        load_csv_fallback(tmp_path / "ok.csv")


def test_csv_export_roundtrip(tmp_path, data_dir):
    rec = load_record(data_dir, "g100")
    export_csv(rec, tmp_path / "g100.csv", "MLII")
    back = load_csv_fallback(tmp_path / "g100.csv")
    assert np.array_equal(back.physical[0], rec.physical[0])
    assert back.beats == rec.beats


def test_write_record_read_by_reference(tmp_path):
    wfdb = pytest.importorskip("wfdb")
    rec = make_record("777", n_beats=40, seed=5)
    write_record(rec, tmp_path)
    ref = wfdb.rdrecord(str(tmp_path / "777"), physical=False)
    ann = wfdb.rdann(str(tmp_path / "777"), "atr")
    assert np.array_equal(ref.d_signal.T, rec.adc)
    assert list(ann.sample) == [e.sample_index for e in rec.annotations]
    assert ann.aux_note[0] == "(N"
    back = load_record(tmp_path, "777")
    assert back.beats == rec.beats
    assert verify_checksum(back.adc, back.header) == [True]


def test_find_records(tmp_path, data_dir):
    assert find_records(data_dir) == ("wfdb", ["g100", "g102"])
    export_csv(load_record(data_dir, "g100"), tmp_path / "g100.csv")
    assert find_records(tmp_path) == ("csv", ["g100"])


# the real database, when available

@pytest.mark.mitdb
def test_mitdb_checksums_and_record_100():
    root = mitdb_dir()
    if root is None:
        pytest.skip("MIT-BIH database not available (set HYBRIDECG_MITDB)")
    names = sorted(p.stem for p in root.glob("*.hea"))
    for name in names:
        rec = load_record(root, name)
        assert all(verify_checksum(rec.adc, rec.header)), name
    rec = load_record(root, "100")
    assert (rec.header.n_signals, rec.fs, rec.header.n_samples) == (2, 360.0, 650000)
    assert select_lead(rec, "MLII") == 0
    with pytest.raises(LeadNotFoundError):
        select_lead(load_record(root, "102"), "MLII")
    wfdb = pytest.importorskip("wfdb")
    assert len(rec.annotations) == len(wfdb.rdann(str(root / "100"), "atr").sample)


def test_synthetic_record_has_all_classes():
    beats = extract_beats(make_record("1", n_beats=400, seed=2))
    assert isinstance(beats, BeatSet)
    assert (beats.class_counts() > 0).all()
