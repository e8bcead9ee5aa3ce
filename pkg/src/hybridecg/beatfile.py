"""Columnar beat files, one row per beat.

CSV form: optional ``# key: value`` header lines, then the columns
``record_id, beat_index, label, pre_rr, post_rr, avg_rr, local_rr,
s000 ... s259``. A file written without RR features omits the four RR
columns.

Binary form (little-endian)::

    magic      b"ECGB"
    version    uint16
    window     uint16  samples per beat (260)
    n_rr       uint16  0 or 4
    id_width   uint16  bytes per record id
    n_beats    uint32
    meta_len   uint32, then UTF-8 JSON header block
    record_id  n_beats * id_width ASCII, NUL padded
    beat_index n_beats * int32
    label      n_beats * uint8 (0..4 = N, S, V, F, Q)
    rr         n_beats * n_rr * float32 (seconds)
    windows    n_beats * window * float32 (mV)
"""

from __future__ import annotations

import csv
import json
import os
import struct
from pathlib import Path

import numpy as np

from .beats import CLASS_NAMES, RR_NAMES, WINDOW, BeatSet

MAGIC = b"ECGB"
VERSION = 1
ID_WIDTH = 16
_HEAD = struct.Struct("<4sHHHHII")


class BeatFileError(ValueError):
    pass


def _sample_columns() -> list[str]:
    return [f"s{i:03d}" for i in range(WINDOW)]


def _fmt(v: np.floating) -> str:
    # float32 values round-trip exactly through 9 significant digits
    return "%.9g" % v


def write_csv(beats: BeatSet, path: os.PathLike | str, header: dict | None = None):
    with open(path, "w", newline="") as fh:
        for key, value in (header or {}).items():
            fh.write(f"# {key}: {value}\n")
        w = csv.writer(fh, lineterminator="\n")
        rr_cols = list(RR_NAMES) if beats.rr is not None else []
        w.writerow(["record_id", "beat_index", "label", *rr_cols, *_sample_columns()])
        for i in range(len(beats)):
            rr = [_fmt(v) for v in beats.rr[i]] if beats.rr is not None else []
            w.writerow([beats.record_ids[i], int(beats.beat_index[i]), CLASS_NAMES[beats.labels[i]],
                        *rr, *(_fmt(v) for v in beats.windows[i])])


def read_csv(path: os.PathLike | str) -> tuple[BeatSet, dict]:
    header = {}
    with open(path, newline="") as fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition(":")
                header[key.strip()] = value.strip()
            else:
                lines.append(line)
    reader = csv.reader(lines)
    try:
        cols = next(reader)
    except StopIteration:
        raise BeatFileError(f"{path}: no column header") from None
    has_rr = all(c in cols for c in RR_NAMES)
    sample_cols = _sample_columns()
    missing = [c for c in ["record_id", "beat_index", "label", *sample_cols] if c not in cols]
    if missing:
        raise BeatFileError(f"{path}: missing columns {missing[:5]}")
    pos = {c: i for i, c in enumerate(cols)}
    label_of = {name: i for i, name in enumerate(CLASS_NAMES)}
    ids, index, labels, rr, windows = [], [], [], [], []
    for row in reader:
        ids.append(row[pos["record_id"]])
        index.append(int(row[pos["beat_index"]]))
        try:
            labels.append(label_of[row[pos["label"]]])
        except KeyError:
            raise BeatFileError(f"{path}: unknown label {row[pos['label']]!r}") from None
        if has_rr:
            rr.append([float(row[pos[c]]) for c in RR_NAMES])
        windows.append([float(row[pos[c]]) for c in sample_cols])
    n = len(labels)
    beats = BeatSet(
        np.asarray(windows, np.float32).reshape(n, WINDOW),
        np.asarray(rr, np.float32).reshape(n, 4) if has_rr else None,
        np.asarray(labels, np.int8),
        np.asarray(ids, dtype=f"<U{ID_WIDTH}"),
        np.asarray(index, np.int64),
        np.zeros(n, bool),
    )
    return beats, header


def write_binary(beats: BeatSet, path: os.PathLike | str, header: dict | None = None):
    n = len(beats)
    n_rr = 0 if beats.rr is None else beats.rr.shape[1]
    meta = json.dumps(header or {}, sort_keys=True).encode("utf-8")
    ids = np.array([s.encode("ascii")[:ID_WIDTH] for s in beats.record_ids.astype(str)], dtype=f"S{ID_WIDTH}")
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(MAGIC, VERSION, WINDOW, n_rr, ID_WIDTH, n, len(meta)))
        fh.write(meta)
        fh.write(ids.tobytes())
        fh.write(beats.beat_index.astype("<i4").tobytes())
        fh.write(beats.labels.astype("u1").tobytes())
        if n_rr:
            fh.write(beats.rr.astype("<f4").tobytes())
        fh.write(beats.windows.astype("<f4").tobytes())


def read_binary(path: os.PathLike | str) -> tuple[BeatSet, dict]:
    data = Path(path).read_bytes()
    if len(data) < _HEAD.size:
        raise BeatFileError(f"{path}: truncated")
    magic, version, window, n_rr, id_width, n, meta_len = _HEAD.unpack_from(data)
    if magic != MAGIC:
        raise BeatFileError(f"{path}: not a binary beat file")
    if version != VERSION:
        raise BeatFileError(f"{path}: unsupported beat file version {version}")
    if window != WINDOW or n_rr not in (0, 4):
        raise BeatFileError(f"{path}: unexpected layout (window {window}, {n_rr} RR features)")
    pos = _HEAD.size
    sizes = [meta_len, n * id_width, 4 * n, n, 4 * n * n_rr, 4 * n * window]
    if len(data) != pos + sum(sizes):
        raise BeatFileError(f"{path}: size {len(data)} does not match header")
    chunks = []
    for size in sizes:
        chunks.append(data[pos:pos + size])
        pos += size
    meta, ids, index, labels, rr, windows = chunks
    beats = BeatSet(
        np.frombuffer(windows, "<f4").reshape(n, window).astype(np.float32),
        np.frombuffer(rr, "<f4").reshape(n, n_rr).astype(np.float32) if n_rr else None,
        np.frombuffer(labels, "u1").astype(np.int8),
        np.frombuffer(ids, f"S{id_width}").astype(f"<U{id_width}"),
        np.frombuffer(index, "<i4").astype(np.int64),
        np.zeros(n, bool),
    )
    return beats, json.loads(meta.decode("utf-8"))


def write_beats(beats: BeatSet, path: os.PathLike | str, header: dict | None = None):
    """Write CSV or binary depending on the suffix (``.csv`` or anything else)."""
    if str(path).endswith(".csv"):
        write_csv(beats, path, header)
    else:
        write_binary(beats, path, header)


def read_beats(path: os.PathLike | str) -> tuple[BeatSet, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == MAGIC:
        return read_binary(path)
    return read_csv(path)
