"""Reading MIT-BIH records: WFDB headers, format-212 signals, MIT annotations.

Only the subset of WFDB used by the MIT-BIH Arrhythmia Database is handled:
single-segment records stored in format 212 with ``.atr`` annotation files.
A two-file CSV layout is supported as a fallback when the database itself is
not available.
"""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_GAIN = 200.0
DEFAULT_FS = 250.0

# MIT annotation codes <-> mnemonic symbols (WFDB ecgcodes.h)
ANNOTATION_SYMBOLS = {
    1: "N", 2: "L", 3: "R", 4: "a", 5: "V", 6: "F", 7: "J", 8: "A", 9: "S",
    10: "E", 11: "j", 12: "/", 13: "Q", 14: "~", 16: "|", 18: "s", 19: "T",
    20: "*", 21: "D", 22: '"', 23: "=", 24: "p", 25: "B", 26: "^", 27: "t",
    28: "+", 29: "u", 30: "?", 31: "!", 32: "[", 33: "]", 34: "e", 35: "n",
    36: "@", 37: "x", 38: "f", 39: "(", 40: ")", 41: "r",
}
SYMBOL_CODES = {sym: code for code, sym in ANNOTATION_SYMBOLS.items()}

SKIP, NUM, SUB, CHN, AUX = 59, 60, 61, 62, 63


class WfdbFormatError(ValueError):
    """A WFDB file is malformed or truncated."""


class UnsupportedFormatError(WfdbFormatError):
    """The record uses a storage format other than 212."""


class LeadNotFoundError(LookupError):
    """The requested lead is not recorded in this record."""


@dataclass
class SignalSpec:
    file_name: str
    format_code: int
    gain: float
    baseline: int
    adc_resolution: int
    adc_zero: int
    initial_value: int
    checksum: int
    block_size: int
    lead_name: str


@dataclass
class RecordHeader:
    record_name: str
    n_signals: int
    sampling_rate: float
    n_samples: Optional[int]
    signals: list[SignalSpec] = field(default_factory=list)
    comments: list[str] = field(default_factory=list)

    @property
    def lead_names(self) -> list[str]:
        return [s.lead_name for s in self.signals]


@dataclass
class AnnotationEvent:
    sample_index: int
    symbol_code: int
    subtype: int = 0
    chan: int = 0
    num: int = 0
    aux: Optional[bytes] = None

    @property
    def symbol(self) -> str:
        return ANNOTATION_SYMBOLS.get(self.symbol_code, "?")


@dataclass
class EcgRecord:
    """A decoded record.

    ``physical`` has shape (n_signals, n_samples) in mV. ``beats`` holds
    ``(sample_index, symbol_code)`` pairs for beat annotations only, and
    ``adc`` keeps the raw integer samples when the record came from a
    ``.dat`` file.
    """

    header: RecordHeader
    physical: np.ndarray
    beats: list[tuple[int, int]]
    adc: Optional[np.ndarray] = None
    annotations: list[AnnotationEvent] = field(default_factory=list)

    @property
    def name(self) -> str:
        return self.header.record_name

    @property
    def fs(self) -> float:
        return self.header.sampling_rate


def _parse_int(token: str, what: str, line: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise WfdbFormatError(f"bad {what} {token!r} in header line {line!r}") from None


def _parse_signal_line(line: str, record_line: str) -> SignalSpec:
    tokens = line.split()
    if len(tokens) < 2:
        raise WfdbFormatError(f"malformed signal line {line!r}")
    file_name, fmt = tokens[0], tokens[1]
    # format field may carry "xN" (skew) or ":" / "+" suffixes; only bare 212 is allowed
    if not fmt.isdigit():
        raise UnsupportedFormatError(f"unsupported format field {fmt!r} in {line!r}")
    format_code = int(fmt)
    if format_code != 212:
        raise UnsupportedFormatError(f"format {format_code} not supported (only 212)")

    gain, baseline = DEFAULT_GAIN, None
    if len(tokens) > 2:
        gain_field = tokens[2].split("/")[0]
        if "(" in gain_field:
            gain_str, _, rest = gain_field.partition("(")
            baseline = _parse_int(rest.rstrip(")"), "baseline", line)
        else:
            gain_str = gain_field
        try:
            gain = float(gain_str)
        except ValueError:
            raise WfdbFormatError(f"bad gain {tokens[2]!r} in {line!r}") from None
        if gain == 0:
            gain = DEFAULT_GAIN
        if gain < 0:
            raise WfdbFormatError(f"negative gain in {line!r}")

    ints = [0, 0, 0, 0, 0]  # adc_res, adc_zero, init, checksum, block_size
    for j in range(5):
        if len(tokens) > 3 + j:
            ints[j] = _parse_int(tokens[3 + j], "signal field", line)
    adc_resolution, adc_zero, initial_value, checksum, block_size = ints
    if baseline is None:
        baseline = adc_zero
    lead_name = " ".join(tokens[8:]) if len(tokens) > 8 else ""
    return SignalSpec(
        file_name=file_name,
        format_code=format_code,
        gain=gain,
        baseline=baseline,
        adc_resolution=adc_resolution,
        adc_zero=adc_zero,
        initial_value=initial_value,
        checksum=checksum,
        block_size=block_size,
        lead_name=lead_name,
    )


def parse_header(text: str) -> RecordHeader:
    """Parse the body of a WFDB ``.hea`` file.

    Raises:
        UnsupportedFormatError: a signal is not stored in format 212.
        WfdbFormatError: malformed record line, zero signals, or a signal
            line count that disagrees with the record line.
    """
    lines, comments = [], []
    for raw in text.splitlines():
        stripped = raw.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            comments.append(stripped.lstrip("#").strip())
            continue
        lines.append(stripped)
    if not lines:
        raise WfdbFormatError("empty header")

    record_line = lines[0]
    tokens = record_line.split()
    if len(tokens) < 2:
        raise WfdbFormatError(f"malformed record line {record_line!r}")
    name = tokens[0]
    if "/" in name:
        raise WfdbFormatError(f"multi-segment record {name!r} not supported")
    n_signals = _parse_int(tokens[1], "signal count", record_line)
    if n_signals < 1:
        raise WfdbFormatError(f"record declares {n_signals} signals")

    fs = DEFAULT_FS
    if len(tokens) > 2:
        try:
            fs = float(tokens[2].split("/")[0].split("(")[0])
        except ValueError:
            raise WfdbFormatError(f"bad sampling frequency in {record_line!r}") from None
        if fs <= 0:
            raise WfdbFormatError(f"non-positive sampling frequency in {record_line!r}")
    n_samples = _parse_int(tokens[3], "sample count", record_line) if len(tokens) > 3 else None

    signal_lines = lines[1:]
    if len(signal_lines) != n_signals:
        raise WfdbFormatError(
            f"record line declares {n_signals} signals, found {len(signal_lines)} signal lines"
        )
    signals = [_parse_signal_line(s, record_line) for s in signal_lines]
    leads = [s.lead_name for s in signals]
    if len(set(leads)) != len(leads):
        log.warning("record %s has duplicate lead names %s", name, leads)
    return RecordHeader(name, n_signals, fs, n_samples, signals, comments)


def decode_format212(data: bytes, n_signals: int, n_samples: int) -> np.ndarray:
    """Unpack format-212 bytes into an int16 array of shape (n_signals, n_samples).

    Every 3 bytes hold two 12-bit two's-complement samples; samples of the
    different signals are interleaved frame by frame.
    """
    total = n_signals * n_samples
    needed = (3 * total + 1) // 2
    if len(data) < needed:
        raise WfdbFormatError(f"format-212 stream truncated: {len(data)} bytes, need {needed}")
    n_groups = (total + 1) // 2
    raw = np.frombuffer(data, dtype=np.uint8, count=min(len(data), 3 * n_groups))
    if raw.size < 3 * n_groups:
        raw = np.concatenate([raw, np.zeros(3 * n_groups - raw.size, np.uint8)])
    groups = raw.reshape(-1, 3).astype(np.int16)
    b0, b1, b2 = groups[:, 0], groups[:, 1], groups[:, 2]
    out = np.empty((n_groups, 2), dtype=np.int16)
    out[:, 0] = ((b1 & 0x0F) << 8) | b0
    out[:, 1] = ((b1 & 0xF0) << 4) | b2
    out[out >= 2048] -= 4096
    return out.reshape(-1)[:total].reshape(n_samples, n_signals).T.copy()


def encode_format212(channels: np.ndarray) -> bytes:
    """Pack an (n_signals, n_samples) integer array into format-212 bytes.

    A trailing unpaired sample is written as a 2-byte group.
    """
    channels = np.asarray(channels)
    if channels.min(initial=0) < -2048 or channels.max(initial=0) > 2047:
        raise ValueError("format 212 holds values in [-2048, 2047] only")
    flat = channels.T.reshape(-1).astype(np.int32) & 0xFFF
    total = flat.size
    if total % 2:
        flat = np.append(flat, 0)
    pairs = flat.reshape(-1, 2)
    out = np.empty((pairs.shape[0], 3), dtype=np.uint8)
    out[:, 0] = pairs[:, 0] & 0xFF
    out[:, 1] = ((pairs[:, 0] >> 8) & 0x0F) | ((pairs[:, 1] >> 4) & 0xF0)
    out[:, 2] = pairs[:, 1] & 0xFF
    return out.reshape(-1).tobytes()[: (3 * total + 1) // 2]


def parse_annotations(data: bytes) -> list[AnnotationEvent]:
    """Decode an MIT-format annotation stream.

    NUM and CHN values persist onto later annotations, as in the WFDB
    library; SUB and AUX apply to the annotation they follow only. Null
    annotations (code 0 with a nonzero time step) and a leading
    time-resolution note are consumed without producing events.
    """
    n = len(data)
    events: list[AnnotationEvent] = []
    pos = 0
    sample = 0
    num = chan = 0
    pending_skip = 0
    while True:
        if pos + 2 > n:
            if pos == n:
                # missing terminator is tolerated at an even boundary
                break
            raise WfdbFormatError(f"annotation stream truncated at byte {pos}")
        word = data[pos] | (data[pos + 1] << 8)
        pos += 2
        code = (word >> 10) & 0x3F
        value = word & 0x3FF
        if word == 0:
            break
        if code == SKIP:
            if pos + 4 > n:
                raise WfdbFormatError("SKIP annotation truncated")
            # PDP-11 long: high 16-bit word first, each word little-endian
            hi = data[pos] | (data[pos + 1] << 8)
            lo = data[pos + 2] | (data[pos + 3] << 8)
            skip = (hi << 16) | lo
            if skip >= 1 << 31:
                skip -= 1 << 32
            pending_skip += skip
            pos += 4
        elif code == NUM:
            num = value if value < 512 else value - 1024
            if events:
                events[-1].num = num
        elif code == SUB:
            if events:
                events[-1].subtype = value if value < 512 else value - 1024
        elif code == CHN:
            chan = value
            if events:
                events[-1].chan = chan
        elif code == AUX:
            if pos + value > n:
                raise WfdbFormatError("AUX string overruns the annotation stream")
            if events:
                events[-1].aux = bytes(data[pos:pos + value])
            pos += value + (value & 1)
        else:
            sample += pending_skip + value
            pending_skip = 0
            if sample < 0:
                raise WfdbFormatError(f"negative annotation time {sample}")
            if code == 0:
                # null annotation: only moves the time counter
                continue
            events.append(AnnotationEvent(sample, code, 0, chan, num, None))
    # writers may prepend a note carrying the sampling rate; it is not an event
    return [e for e in events if not (e.sample_index == 0 and e.symbol_code == SYMBOL_CODES['"']
                                      and (e.aux or b"").startswith(b"## time resolution"))]


def encode_annotations(events: Sequence[AnnotationEvent]) -> bytes:
    """Encode events as an MIT annotation stream (inverse of ``parse_annotations``)."""
    out = bytearray()

    def word(code, value):
        out.extend(((code << 10) | (value & 0x3FF)).to_bytes(2, "little"))

    prev, num, chan = 0, 0, 0
    for e in sorted(events, key=lambda e: e.sample_index):
        delta = e.sample_index - prev
        if not 0 <= delta <= 1023:
            word(SKIP, 0)
            d = delta & 0xFFFFFFFF
            out.extend((d >> 16).to_bytes(2, "little") + (d & 0xFFFF).to_bytes(2, "little"))
            delta = 0
        word(e.symbol_code, delta)
        prev = e.sample_index
        if e.subtype:
            word(SUB, e.subtype)
        if e.chan != chan:
            word(CHN, e.chan)
            chan = e.chan
        if e.num != num:
            word(NUM, e.num)
            num = e.num
        if e.aux is not None:
            word(AUX, len(e.aux))
            out.extend(e.aux + (b"\0" if len(e.aux) & 1 else b""))
    word(0, 0)
    return bytes(out)


def format_header(header: RecordHeader) -> str:
    """``.hea`` text for a single-segment record."""
    lines = [f"{header.record_name} {header.n_signals} {header.sampling_rate:g} {header.n_samples}"]
    for s in header.signals:
        gain = f"{s.gain:g}" if s.baseline == s.adc_zero else f"{s.gain:g}({s.baseline})"
        fields = [s.file_name, str(s.format_code), gain, s.adc_resolution, s.adc_zero, s.initial_value,
                  s.checksum, s.block_size]
        lines.append(" ".join(str(f) for f in fields) + (f" {s.lead_name}" if s.lead_name else ""))
    lines += [f"# {c}" for c in header.comments]
    return "\n".join(lines) + "\n"


def write_record(record: EcgRecord, directory: os.PathLike | str, annotator: str = "atr"):
    """Write ``record`` as ``.hea``, format-212 ``.dat`` and MIT annotation files.

    Needs ``record.adc``; the header checksums and initial values are
    recomputed from it.
    """
    if record.adc is None:
        raise ValueError("record has no ADC samples to write")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    adc = np.asarray(record.adc)
    header = RecordHeader(record.name, adc.shape[0], record.fs, adc.shape[1], [], list(record.header.comments))
    for ch, spec in enumerate(record.header.signals):
        total = ((int(adc[ch].astype(np.int64).sum()) + 32768) & 0xFFFF) - 32768
        header.signals.append(SignalSpec(f"{record.name}.dat", 212, spec.gain, spec.baseline,
                                         spec.adc_resolution, spec.adc_zero, int(adc[ch, 0]), total, 0,
                                         spec.lead_name))
    (directory / f"{record.name}.hea").write_text(format_header(header))
    (directory / f"{record.name}.dat").write_bytes(encode_format212(adc))
    events = record.annotations or [AnnotationEvent(s, c) for s, c in record.beats]
    (directory / f"{record.name}.{annotator}").write_bytes(encode_annotations(events))


def verify_checksum(adc: np.ndarray, header: RecordHeader) -> list[bool]:
    """Per-channel 16-bit checksum comparison against the header.

    Writers differ in whether the header value is signed or unsigned, so the
    comparison is modulo 2**16.
    """
    out = []
    for ch, spec in enumerate(header.signals):
        total = int(np.asarray(adc[ch], dtype=np.int64).sum())
        out.append((total - spec.checksum) % 65536 == 0)
    return out


def select_lead(record: EcgRecord, lead_name: str) -> int:
    """Index of ``lead_name`` in the record, or :class:`LeadNotFoundError`."""
    try:
        return record.header.lead_names.index(lead_name)
    except ValueError:
        raise LeadNotFoundError(
            f"record {record.name} has no {lead_name} lead (leads: {record.header.lead_names})"
        ) from None


def beat_events(annotations: Sequence[AnnotationEvent]) -> list[tuple[int, int]]:
    """Keep annotations whose code maps to an AAMI beat class, in time order."""
    from .beats import map_symbol_to_aami

    beats = [(a.sample_index, a.symbol_code) for a in annotations
             if map_symbol_to_aami(a.symbol_code) is not None]
    beats.sort(key=lambda b: b[0])
    # MIT-BIH has no coincident beats; drop any duplicates defensively
    dedup = []
    for b in beats:
        if dedup and dedup[-1][0] == b[0]:
            log.warning("duplicate beat annotation at sample %d dropped", b[0])
            continue
        dedup.append(b)
    return dedup


def to_physical(adc: np.ndarray, header: RecordHeader) -> np.ndarray:
    gains = np.array([s.gain for s in header.signals], dtype=np.float64)[:, None]
    base = np.array([s.baseline for s in header.signals], dtype=np.float64)[:, None]
    return (adc.astype(np.float64) - base) / gains


def load_record(directory: os.PathLike | str, name: str, annotator: str = "atr",
                check: bool = True) -> EcgRecord:
    """Read ``name.hea``, its signal file and ``name.<annotator>`` from a directory."""
    directory = Path(directory)
    header = parse_header((directory / f"{name}.hea").read_text())
    files = {s.file_name for s in header.signals}
    if len(files) != 1:
        raise WfdbFormatError(f"record {name}: signals spread over several files {sorted(files)}")
    data = (directory / files.pop()).read_bytes()
    n_samples = header.n_samples
    if n_samples is None:
        n_samples = (2 * len(data) // 3) // header.n_signals
        header.n_samples = n_samples
    adc = decode_format212(data, header.n_signals, n_samples)
    if check:
        for spec, ok in zip(header.signals, verify_checksum(adc, header)):
            if not ok:
                log.warning("record %s lead %s: checksum mismatch", name, spec.lead_name)
    ann_path = directory / f"{name}.{annotator}"
    annotations = parse_annotations(ann_path.read_bytes()) if ann_path.exists() else []
    beats = [b for b in beat_events(annotations) if 0 <= b[0] < n_samples]
    return EcgRecord(header, to_physical(adc, header), beats, adc, annotations)


def _annotation_csv_path(path: Path) -> Path:
    return path.with_name(path.stem + "_annotations.csv")


def load_csv_fallback(path: os.PathLike | str, annotation_path: os.PathLike | str | None = None,
                      fs: float = 360.0, lead_name: str = "MLII") -> EcgRecord:
    """Load a single-lead record from CSV.

    The signal file has columns ``sample_index,mV``; the companion file
    (default ``<stem>_annotations.csv``) has ``sample_index,symbol``.
    """
    path = Path(path)
    ann = Path(annotation_path) if annotation_path else _annotation_csv_path(path)

    with open(path, newline="") as fh:
        reader = csv.DictReader(row for row in fh if not row.startswith("#"))
        if reader.fieldnames is None or not {"sample_index", "mV"} <= set(reader.fieldnames):
            raise WfdbFormatError(f"{path}: expected columns sample_index, mV")
        idx, mv = [], []
        for row in reader:
            try:
                idx.append(int(row["sample_index"]))
                mv.append(float(row["mV"]))
            except (TypeError, ValueError):
                raise WfdbFormatError(f"{path}: bad row {row}") from None
    idx_arr = np.asarray(idx, dtype=np.int64)
    if idx_arr.size and (idx_arr[0] != 0 or np.any(np.diff(idx_arr) != 1)):
        raise WfdbFormatError(f"{path}: sample_index must run 0, 1, 2, ...")

    events = []
    if ann.exists():
        with open(ann, newline="") as fh:
            reader = csv.DictReader(row for row in fh if not row.startswith("#"))
            if reader.fieldnames is None or not {"sample_index", "symbol"} <= set(reader.fieldnames):
                raise WfdbFormatError(f"{ann}: expected columns sample_index, symbol")
            last = -1
            for row in reader:
                try:
                    s = int(row["sample_index"])
                except (TypeError, ValueError):
                    raise WfdbFormatError(f"{ann}: bad row {row}") from None
                if s < last:
                    raise WfdbFormatError(f"{ann}: annotation indices not monotonic")
                last = s
                code = SYMBOL_CODES.get(row["symbol"])
                if code is None:
                    raise WfdbFormatError(f"{ann}: unknown annotation symbol {row['symbol']!r}")
                events.append(AnnotationEvent(s, code))

    n = len(mv)
    spec = SignalSpec(f"{path.name}", 212, DEFAULT_GAIN, 0, 11, 0, 0, 0, 0, lead_name)
    header = RecordHeader(path.stem, 1, float(fs), n, [spec])
    physical = np.asarray(mv, dtype=np.float64).reshape(1, n)
    beats = [b for b in beat_events(events) if 0 <= b[0] < n]
    return EcgRecord(header, physical, beats, None, events)


def export_csv(record: EcgRecord, path: os.PathLike | str, lead: int | str = 0) -> Path:
    """Write one lead of ``record`` in the CSV fallback layout (signal + annotations)."""
    path = Path(path)
    ch = select_lead(record, lead) if isinstance(lead, str) else lead
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_index", "mV"])
        for i, v in enumerate(record.physical[ch]):
            w.writerow([i, repr(float(v))])
    events = record.annotations or [AnnotationEvent(s, c) for s, c in record.beats]
    with open(_annotation_csv_path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sample_index", "symbol"])
        for e in events:
            if e.symbol_code in ANNOTATION_SYMBOLS:
                w.writerow([e.sample_index, ANNOTATION_SYMBOLS[e.symbol_code]])
    return path


def find_records(directory: os.PathLike | str) -> tuple[str, list[str]]:
    """Return ``("wfdb" | "csv", sorted record names)`` found in a directory."""
    directory = Path(directory)
    heads = sorted(p.stem for p in directory.glob("*.hea"))
    if heads:
        return "wfdb", heads
    csvs = sorted(p.stem for p in directory.glob("*.csv") if not p.stem.endswith("_annotations"))
    return "csv", csvs


def load_any(directory: os.PathLike | str, name: str, kind: str, fs: float = 360.0) -> EcgRecord:
    if kind == "wfdb":
        return load_record(directory, name)
    return load_csv_fallback(Path(directory) / f"{name}.csv", fs=fs)
