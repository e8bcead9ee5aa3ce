"""Synthetic minority oversampling on the joint window + RR feature vector."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .beats import WINDOW, AamiClass, BeatSet, DatasetSplit

log = logging.getLogger(__name__)

DEFAULT_K = 5
_CHUNK = 512


def _exact_sq_dist(points: np.ndarray, q: int, idx: np.ndarray) -> np.ndarray:
    diff = points[idx] - points[q]
    return np.einsum("ij,ij->i", diff, diff)


def k_nearest_neighbors(points: np.ndarray, query: int, k: int) -> np.ndarray:
    """Indices of the ``k`` points nearest to ``points[query]``, itself excluded.

    Euclidean metric, exact, ties broken towards the lower index. ``k`` is
    clipped to ``len(points) - 1``.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    k = min(k, n - 1)
    if k <= 0:
        return np.zeros(0, dtype=np.int64)
    d = _exact_sq_dist(points, query, np.arange(n))
    d[query] = np.inf
    order = np.lexsort((np.arange(n), d))
    return order[:k]


def all_k_nearest(points: np.ndarray, queries: np.ndarray, k: int) -> np.ndarray:
    """Row ``r`` holds the ``k`` nearest neighbours of ``points[queries[r]]``.

    Candidates come from the Gram-matrix expansion of squared distances; the
    shortlist is then re-ranked with exact differences so the result equals
    :func:`k_nearest_neighbors` for every query.
    """
    points = np.asarray(points, dtype=np.float64)
    n = len(points)
    k = min(k, n - 1)
    queries = np.asarray(queries, dtype=np.int64)
    out = np.zeros((len(queries), max(k, 0)), dtype=np.int64)
    if k <= 0:
        return out
    sq = np.einsum("ij,ij->i", points, points)
    shortlist = min(n - 1, k + 8)
    sq_max = sq.max()
    for start in range(0, len(queries), _CHUNK):
        qs = queries[start:start + _CHUNK]
        d = sq[qs, None] + sq[None, :] - 2.0 * points[qs] @ points.T
        d[np.arange(len(qs)), qs] = np.inf
        cand = np.argpartition(d, shortlist - 1, axis=1)[:, :shortlist]
        for r, q in enumerate(qs):
            # the exact k-th distance within the shortlist bounds the true one;
            # every point whose approximate distance could fall under it is re-ranked
            kth = np.partition(_exact_sq_dist(points, q, cand[r]), k - 1)[k - 1]
            tol = 1e-9 * (sq[q] + sq_max + 1.0)
            full = np.flatnonzero(d[r] <= kth + tol)
            exact = _exact_sq_dist(points, q, full)
            order = np.lexsort((full, exact))
            out[start + r] = full[order[:k]]
    return out


@dataclass
class SmoteResult:
    """Synthetic beats with their provenance.

    ``base`` and ``neighbor`` index into the class examples the result was
    generated from; ``gap`` is the interpolation coefficient.
    """

    beats: BeatSet
    base: np.ndarray
    neighbor: np.ndarray
    gap: np.ndarray


def smote_oversample(class_examples: BeatSet, target_count: int, k: int = DEFAULT_K,
                     rng_seed: int = 0) -> SmoteResult:
    """Generate ``target_count - len(class_examples)`` synthetic beats.

    Base examples are taken in order, cycling through the class; each
    synthetic vector is ``x + u * (x_nn - x)`` with ``x_nn`` drawn uniformly
    from the ``k`` nearest same-class neighbours of ``x`` and
    ``u ~ Uniform(0, 1)``. Window and RR parts are interpolated together.
    """
    n = len(class_examples)
    if n == 0:
        raise ValueError("cannot oversample an empty class")
    needed = target_count - n
    if needed <= 0:
        empty = class_examples.subset(np.zeros(0, np.int64))
        return SmoteResult(empty, np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))

    rng = np.random.default_rng(rng_seed)
    feats = class_examples.features().astype(np.float64)
    base = np.arange(needed) % n
    if n == 1:
        log.warning("class has a single example; synthetic beats are copies")
        neighbor = base.copy()
    else:
        used = np.unique(base)
        nn = all_k_nearest(feats, used, k)
        row_of = np.full(n, -1)
        row_of[used] = np.arange(len(used))
        choice = rng.integers(0, nn.shape[1], size=needed)
        neighbor = nn[row_of[base], choice]
    gap = rng.random(needed)
    synth = feats[base] + gap[:, None] * (feats[neighbor] - feats[base])

    label = class_examples.labels[0]
    beats = BeatSet(
        synth[:, :WINDOW].astype(np.float32),
        synth[:, WINDOW:].astype(np.float32),
        np.full(needed, label, dtype=np.int8),
        class_examples.record_ids[base],
        np.full(needed, -1, dtype=np.int64),
        np.ones(needed, dtype=bool),
    )
    return SmoteResult(beats, base, neighbor, gap)


def balance_training_set(split: DatasetSplit, rng_seed: int = 0, k: int = DEFAULT_K
                         ) -> tuple[DatasetSplit, dict[int, SmoteResult]]:
    """Oversample every minority class of ``split.train`` to the majority count.

    Validation and test partitions are passed through untouched. Returns the
    balanced split and the per-class SMOTE results.
    """
    train = split.train
    if train.rr is None:
        raise ValueError("SMOTE needs RR features in the training set")
    counts = train.class_counts()
    target = int(counts.max())
    seeds = np.random.SeedSequence(rng_seed).spawn(len(AamiClass))
    parts = [train]
    results = {}
    for cls in AamiClass:
        c = int(counts[cls])
        if c == 0 or c == target:
            continue
        members = train.subset(np.flatnonzero(train.labels == cls))
        cls_seed = int(seeds[cls].generate_state(1)[0])
        res = smote_oversample(members, target, k=k, rng_seed=cls_seed)
        results[int(cls)] = res
        parts.append(res.beats)
        log.info("SMOTE class %s: %d -> %d", cls.name, c, target)
    missing = [AamiClass(c).name for c in range(len(AamiClass)) if counts[c] == 0]
    if missing:
        log.warning("training set has no examples of %s; they stay absent", missing)
    balanced = BeatSet.concat(parts)
    return DatasetSplit(balanced, split.validation, split.test, split.seed), results
