"""Gaussian white noise robustness sweeps."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .beats import BeatSet
from .metrics import MetricsReport, evaluate
from .nn.model import Network
from .nn.training import predict

AVERAGE_MAX_MV = 2.5
SIGMA_FACTOR = 0.3
DEFAULT_ETAS = tuple(round(0.01 * i, 2) for i in range(1, 11))


@dataclass(frozen=True)
class NoiseSpec:
    eta: float
    avg_max: float = AVERAGE_MAX_MV
    factor: float = SIGMA_FACTOR
    seed: int = 0

    @property
    def sigma(self) -> float:
        return gwn_sigma(self.eta, self.avg_max, self.factor)


def gwn_sigma(eta: float, avg_max: float = AVERAGE_MAX_MV, factor: float = SIGMA_FACTOR) -> float:
    """Noise standard deviation in mV: ``avg_max * eta * factor``."""
    if eta < 0:
        raise ValueError("eta must be non-negative")
    return avg_max * eta * factor


def add_noise(windows: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Windows plus i.i.d. N(0, sigma^2) samples; ``sigma == 0`` returns an exact copy."""
    windows = np.asarray(windows)
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    if sigma == 0:
        return windows.copy()
    noisy = windows.astype(np.float64) + rng.normal(0.0, sigma, size=windows.shape)
    return noisy.astype(windows.dtype)


def eta_rng(seed: int, eta: float) -> np.random.Generator:
    """Generator for one noise level; independent of which other levels are swept."""
    return np.random.default_rng(np.random.SeedSequence([seed, int(round(eta * 1_000_000))]))


def noisy_copy(beats: BeatSet, sigma: float, rng: np.random.Generator) -> BeatSet:
    """A copy of ``beats`` with noisy windows. RR features are left unchanged."""
    return BeatSet(add_noise(beats.windows, sigma, rng), beats.rr, beats.labels, beats.record_ids,
                   beats.beat_index, beats.synthetic)


@dataclass
class SweepRow:
    variant: str
    eta: float
    sigma_mv: float
    report: MetricsReport


def noise_sweep(net: Network, test_set: BeatSet, etas=DEFAULT_ETAS, seed: int = 0) -> list[SweepRow]:
    """Evaluate ``net`` on noisy copies of ``test_set``, one per noise level.

    Spectrum variants see the spectrum of the noisy window, since the input
    rows are rebuilt from the perturbed samples.
    """
    rows = []
    for eta in sorted(etas):
        sigma = gwn_sigma(eta)
        noisy = noisy_copy(test_set, sigma, eta_rng(seed, eta))
        rows.append(SweepRow(net.variant, float(eta), sigma, evaluate(predict(net, noisy), noisy.labels)))
    return rows


SWEEP_COLUMNS = ("variant", "eta", "sigma_mV", "accuracy", "f1", "sensitivity", "specificity", "precision")


def sweep_records(rows: list[SweepRow]) -> list[dict]:
    return [dict(variant=r.variant, eta=r.eta, sigma_mV=r.sigma_mv, accuracy=r.report.accuracy,
                 f1=r.report.f1, sensitivity=r.report.sensitivity, specificity=r.report.specificity,
                 precision=r.report.precision) for r in rows]


def write_sweep_csv(rows: list[SweepRow], path, header_lines=()):
    """Wide table, one row per noise level."""
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        w.writeheader()
        for rec in sweep_records(rows):
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in rec.items()})


def write_sweep_long_csv(rows: list[SweepRow], path, header_lines=()):
    """Long table (variant, eta, metric, value) for plotting."""
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "eta", "metric", "value"])
        for rec in sweep_records(rows):
            for metric in SWEEP_COLUMNS[3:]:
                w.writerow([rec["variant"], repr(rec["eta"]), metric, repr(rec[metric])])
