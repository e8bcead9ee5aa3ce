"""Minibatch training with Adam and validation-loss early stopping."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..beats import WINDOW, BeatSet, DatasetSplit
from ..spectrum import dual_inputs, magnitude_spectrum
from .layers import softmax_cross_entropy
from .model import ModelConfig, Network, argmax_label, predict_logits

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 256
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    precision: str = "float32"

    def __post_init__(self):
        for name in ("lr", "batch_size", "max_epochs", "patience"):
            if getattr(self, name) <= 0:
                raise ValueError(f"TrainConfig.{name} must be positive")
        if self.precision not in ("float32", "float64"):
            raise ValueError("precision must be float32 or float64")

    def to_dict(self) -> dict:
        return asdict(self)


def model_inputs(config: ModelConfig, beats: BeatSet, dtype=np.float32):
    """Network input tensor and RR extras for ``beats``.

    Spectrum variants get the time row and the magnitude spectrum of that
    same window, computed here so noisy or synthetic windows carry a
    consistent spectrum.
    """
    if config.uses_spectrum:
        x = dual_inputs(beats.windows, dtype)[:, None, :, :]
    else:
        x = beats.windows.astype(dtype, copy=False)[:, None, :]
    extras = None
    if config.uses_rr:
        if beats.rr is None:
            raise ValueError(f"{config.variant} needs RR features but the beat set has none")
        extras = beats.rr.astype(dtype, copy=False)
    return x, extras


class InputSource:
    """Model inputs for a fixed beat set with the spectra computed once.

    Gives the same arrays as ``model_inputs`` on the selected rows.
    """

    def __init__(self, config: ModelConfig, beats: BeatSet, dtype=np.float32, chunk: int = 4096):
        self.config, self.beats, self.dtype = config, beats, np.dtype(dtype)
        self.spectra = None
        if config.uses_spectrum:
            parts = [magnitude_spectrum(beats.windows[i:i + chunk]).astype(self.dtype)
                     for i in range(0, len(beats), chunk)]
            self.spectra = np.concatenate(parts) if parts else np.zeros((0, WINDOW), self.dtype)
        if config.uses_rr and beats.rr is None:
            raise ValueError(f"{config.variant} needs RR features but the beat set has none")

    def __len__(self):
        return len(self.beats)

    def take(self, idx):
        """``(x, extras, labels)`` for rows ``idx``."""
        windows = self.beats.windows[idx].astype(self.dtype)
        if self.spectra is not None:
            x = np.stack([windows, self.spectra[idx]], axis=1)[:, None, :, :]
        else:
            x = windows[:, None, :]
        extras = self.beats.rr[idx].astype(self.dtype) if self.config.uses_rr else None
        return x, extras, self.beats.labels[idx]


class Adam:
    def __init__(self, net: Network, cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, _, _, v in net.named_params()}
        self.v = {k: np.zeros_like(v) for k, _, _, v in net.named_params()}

    def step(self, net: Network):
        c = self.cfg
        self.t += 1
        corr1 = 1 - c.beta1 ** self.t
        corr2 = 1 - c.beta2 ** self.t
        for key, layer, name, p in net.named_params():
            g = layer.grads[name]
            m, v = self.m[key], self.v[key]
            m *= c.beta1
            m += (1 - c.beta1) * g
            v *= c.beta2
            v += (1 - c.beta2) * g * g
            p -= (c.lr / corr1) * m / (np.sqrt(v / corr2) + c.adam_eps)


def evaluate_loss(net: Network, beats, batch_size: int = 1024) -> tuple[float, float]:
    """Mean eval-mode cross-entropy and multiclass accuracy over a BeatSet or InputSource."""
    source = beats if isinstance(beats, InputSource) else InputSource(net.config, beats, net.dtype)
    n = len(source)
    if n == 0:
        return float("nan"), float("nan")
    total, correct = 0.0, 0
    for start in range(0, n, batch_size):
        x, extras, labels = source.take(np.arange(start, min(start + batch_size, n)))
        logits = net.forward(x, extras, train=False)
        loss, _ = softmax_cross_entropy(logits.astype(np.float64), labels)
        total += loss * len(labels)
        correct += int((argmax_label(logits) == labels).sum())
    return total / n, correct / n


@dataclass
class TrainResult:
    network: Network
    log: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False


def train(config: ModelConfig, split: DatasetSplit, cfg: TrainConfig = TrainConfig(),
          progress: bool = False) -> TrainResult:
    """Train ``config`` on ``split.train``; keep the best validation-loss parameters.

    Raises:
        DivergenceError: a training loss became NaN or infinite.
    """
    dtype = np.dtype(cfg.precision)
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    net = Network(config, seed=int(seeds[0].generate_state(1)[0]), dtype=dtype)
    rng = np.random.default_rng(seeds[1])
    opt = Adam(net, cfg)
    train_set = InputSource(config, split.train, dtype)
    val_set = InputSource(config, split.validation, dtype)
    n = len(train_set)
    if n < 2:
        raise ValueError("training set needs at least two examples")

    best_loss, best_state, best_epoch, bad_epochs = np.inf, net.copy_state(), 0, 0
    history = []
    stopped = False
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        loss_sum, seen = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if len(idx) < 2:
                # batch statistics need two examples
                continue
            x, extras, labels = train_set.take(idx)
            logits = net.forward(x, extras, train=True)
            loss, dlogits = softmax_cross_entropy(logits, labels)
            if not np.isfinite(loss):
                raise DivergenceError(f"loss became {loss} at epoch {epoch}, batch starting {start}")
            net.backward(dlogits)
            opt.step(net)
            loss_sum += loss * len(idx)
            seen += len(idx)
        train_loss = loss_sum / seen
        if len(val_set):
            val_loss, val_acc = evaluate_loss(net, val_set)
        else:
            val_loss, val_acc = train_loss, float("nan")
        history.append(dict(epoch=epoch, train_loss=train_loss, val_loss=val_loss, val_accuracy=val_acc))
        msg = "epoch %d: train loss %.5f, val loss %.5f, val acc %.4f"
        (log.info if not progress else print)(msg % (epoch, train_loss, val_loss, val_acc))
        if not np.isfinite(val_loss):
            raise DivergenceError(f"validation loss became {val_loss} at epoch {epoch}")
        if val_loss < best_loss:
            best_loss, best_state, best_epoch, bad_epochs = val_loss, net.copy_state(), epoch, 0
        else:
            bad_epochs += 1
            if bad_epochs >= cfg.patience:
                stopped = True
                break
    net.load_state(best_state)
    return TrainResult(net, history, best_epoch, stopped)


def write_training_log(rows: list[dict], path, header_lines=()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "val_loss", "val_accuracy"],
                           lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def predict(net: Network, beats: BeatSet, batch_size: int = 1024) -> np.ndarray:
    """Class indices for every beat (argmax, ties to the lower index)."""
    source = InputSource(net.config, beats, net.dtype)
    out = [np.zeros(0, np.int64)]
    for start in range(0, len(beats), batch_size):
        x, extras, _ = source.take(np.arange(start, min(start + batch_size, len(beats))))
        out.append(argmax_label(predict_logits(net, x, extras, batch_size)))
    return np.concatenate(out)


def predict_one(net: Network, window, rr=None) -> int:
    beats = BeatSet(np.asarray(window, np.float32)[None, :],
                    None if rr is None else np.asarray(rr, np.float32)[None, :],
                    np.zeros(1, np.int8), np.array([""]), np.zeros(1, np.int64), np.zeros(1, bool))
    return int(predict(net, beats)[0])

