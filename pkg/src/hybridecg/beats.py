"""Heartbeat segmentation, AAMI labelling, RR-interval features and data splits."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np

from .wfdb_io import ANNOTATION_SYMBOLS, EcgRecord, select_lead

log = logging.getLogger(__name__)

WINDOW = 260
HALF_WINDOW = WINDOW // 2
LOCAL_RR_BEATS = 10
RR_NAMES = ("pre_rr", "post_rr", "avg_rr", "local_rr")


class AamiClass(IntEnum):
    N = 0
    S = 1
    V = 2
    F = 3
    Q = 4


CLASS_NAMES = tuple(c.name for c in AamiClass)

# AAMI EC57 superclasses by MIT mnemonic
_AAMI_BY_SYMBOL = {
    "N": AamiClass.N, "L": AamiClass.N, "R": AamiClass.N, "e": AamiClass.N, "j": AamiClass.N,
    "A": AamiClass.S, "a": AamiClass.S, "J": AamiClass.S, "S": AamiClass.S,
    "V": AamiClass.V, "E": AamiClass.V,
    "F": AamiClass.F,
    "/": AamiClass.Q, "f": AamiClass.Q, "Q": AamiClass.Q,
}


def map_symbol_to_aami(mit_code: int) -> Optional[AamiClass]:
    """AAMI class for an MIT annotation code; ``None`` for non-beat annotations."""
    return _AAMI_BY_SYMBOL.get(ANNOTATION_SYMBOLS.get(mit_code, ""))


def extract_window(signal: np.ndarray, r_sample: int) -> Optional[np.ndarray]:
    """The 260 samples ``[r - 130, r + 130)``, or ``None`` at a record boundary."""
    lo, hi = r_sample - HALF_WINDOW, r_sample + HALF_WINDOW
    if lo < 0 or hi > len(signal):
        return None
    return np.asarray(signal[lo:hi])


@dataclass(frozen=True)
class RRFeatures:
    pre_rr: float
    post_rr: float
    avg_rr: float
    local_rr: float

    def as_array(self) -> np.ndarray:
        return np.array([self.pre_rr, self.post_rr, self.avg_rr, self.local_rr])


def compute_rr_features(r_samples: Sequence[int], i: int, fs: float,
                        local_beats: int = LOCAL_RR_BEATS) -> Optional[RRFeatures]:
    """RR-interval features (seconds) of beat ``i``.

    ``local_rr`` averages the intervals between the ``local_beats`` R waves
    ending at beat ``i``. Near the start of a record fewer R waves are
    available and the window is truncated; callers that need the full window
    check ``i >= local_beats - 1`` themselves.

    Returns ``None`` for the first and last beat.
    """
    r = np.asarray(r_samples, dtype=np.int64)
    if i <= 0 or i >= len(r) - 1:
        return None
    diffs = np.diff(r)
    if np.any(diffs <= 0):
        raise ValueError("R-peak positions must be strictly increasing")
    first = max(0, i - (local_beats - 1))
    return RRFeatures(
        pre_rr=float(diffs[i - 1]) / fs,
        post_rr=float(diffs[i]) / fs,
        avg_rr=float(diffs.mean()) / fs,
        local_rr=float(diffs[first:i].mean()) / fs,
    )


@dataclass
class BeatSet:
    """Columnar collection of labelled beats.

    windows: (n, 260) float32, mV.
    rr: (n, 4) float32 seconds, or ``None`` when RR features are unavailable.
    labels: (n,) int8 AAMI class indices.
    record_ids / beat_index: provenance of real beats.
    synthetic: True for SMOTE-generated rows.
    """

    windows: np.ndarray
    rr: Optional[np.ndarray]
    labels: np.ndarray
    record_ids: np.ndarray
    beat_index: np.ndarray
    synthetic: np.ndarray

    def __post_init__(self):
        n = len(self.labels)
        if self.windows.shape != (n, WINDOW):
            raise ValueError(f"windows must have shape ({n}, {WINDOW}), got {self.windows.shape}")
        if self.rr is not None and self.rr.shape != (n, 4):
            raise ValueError(f"rr must have shape ({n}, 4), got {self.rr.shape}")

    def __len__(self) -> int:
        return len(self.labels)

    @classmethod
    def empty(cls, with_rr: bool = True) -> "BeatSet":
        return cls(
            np.zeros((0, WINDOW), np.float32),
            np.zeros((0, 4), np.float32) if with_rr else None,
            np.zeros(0, np.int8),
            np.zeros(0, dtype="<U16"),
            np.zeros(0, np.int64),
            np.zeros(0, bool),
        )

    def subset(self, idx) -> "BeatSet":
        idx = np.asarray(idx)
        return BeatSet(
            self.windows[idx],
            None if self.rr is None else self.rr[idx],
            self.labels[idx],
            self.record_ids[idx],
            self.beat_index[idx],
            self.synthetic[idx],
        )

    @staticmethod
    def concat(parts: Sequence["BeatSet"]) -> "BeatSet":
        parts = list(parts)
        if not parts:
            return BeatSet.empty()
        has_rr = all(p.rr is not None for p in parts)
        return BeatSet(
            np.concatenate([p.windows for p in parts]).astype(np.float32, copy=False),
            np.concatenate([p.rr for p in parts]).astype(np.float32, copy=False) if has_rr else None,
            np.concatenate([p.labels for p in parts]).astype(np.int8, copy=False),
            np.concatenate([p.record_ids.astype(str) for p in parts]),
            np.concatenate([p.beat_index for p in parts]).astype(np.int64, copy=False),
            np.concatenate([p.synthetic for p in parts]).astype(bool, copy=False),
        )

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels.astype(np.int64), minlength=len(AamiClass))

    def features(self) -> np.ndarray:
        """Joint 264-dim vectors (window followed by RR features)."""
        if self.rr is None:
            raise ValueError("beat set carries no RR features")
        return np.concatenate([self.windows, self.rr], axis=1)


def extract_beats(record: EcgRecord, lead: str = "MLII") -> BeatSet:
    """All usable beats of one record.

    Beats are dropped when their window crosses the record boundary or they
    lack the neighbours for a full set of RR features: the first
    ``LOCAL_RR_BEATS - 1`` beats and the last beat.

    Raises:
        LeadNotFoundError: the record has no ``lead``.
    """
    ch = select_lead(record, lead)
    signal = record.physical[ch]
    r = np.array([s for s, _ in record.beats], dtype=np.int64)
    codes = [c for _, c in record.beats]
    windows, rr, labels, index = [], [], [], []
    for i in range(LOCAL_RR_BEATS - 1, len(r) - 1):
        label = map_symbol_to_aami(codes[i])
        if label is None:
            continue
        w = extract_window(signal, int(r[i]))
        if w is None:
            continue
        feats = compute_rr_features(r, i, record.fs)
        windows.append(w)
        rr.append(feats.as_array())
        labels.append(int(label))
        index.append(i)
    n = len(labels)
    if n == 0:
        out = BeatSet.empty()
        return out
    return BeatSet(
        np.asarray(windows, dtype=np.float32),
        np.asarray(rr, dtype=np.float32),
        np.asarray(labels, dtype=np.int8),
        np.full(n, record.name, dtype="<U16"),
        np.asarray(index, dtype=np.int64),
        np.zeros(n, dtype=bool),
    )


@dataclass
class DatasetSplit:
    train: BeatSet
    validation: BeatSet
    test: BeatSet
    seed: int


def _partition_sizes(n: int, ratios: Sequence[float]) -> tuple[int, int, int]:
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    n_val = min(n_val, n - n_train)
    return n_train, n_val, n - n_train - n_val


def split_indices(labels: np.ndarray, ratios=(0.70, 0.15, 0.15), seed: int = 0
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stratified random split of row indices; each partition sorted."""
    if not np.isclose(sum(ratios), 1.0):
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    parts: tuple[list, list, list] = ([], [], [])
    for cls in np.unique(labels):
        members = np.flatnonzero(labels == cls)
        perm = members[rng.permutation(len(members))]
        if len(members) < 3:
            log.warning("class %s has %d members; all assigned to train",
                        CLASS_NAMES[int(cls)] if 0 <= cls < len(CLASS_NAMES) else cls, len(members))
            parts[0].append(perm)
            continue
        n_train, n_val, _ = _partition_sizes(len(members), ratios)
        parts[0].append(perm[:n_train])
        parts[1].append(perm[n_train:n_train + n_val])
        parts[2].append(perm[n_train + n_val:])
    return tuple(np.sort(np.concatenate(p)) if p else np.zeros(0, np.int64) for p in parts)


def split_dataset(beats: BeatSet, ratios=(0.70, 0.15, 0.15), seed: int = 0) -> DatasetSplit:
    """Beat-level stratified 70/15/15 split, deterministic in ``seed``."""
    tr, va, te = split_indices(beats.labels, ratios, seed)
    return DatasetSplit(beats.subset(tr), beats.subset(va), beats.subset(te), seed)
