"""The four network variants and the container that runs them.

Variants differ only at both ends of the convolutional stack:

- CNN: 1 x 260 time window, Conv1d(1, 128, kernel 50, stride 3), Dense(32, 128).
- CNNe: as CNN, with the 4 RR features appended before Dense(36, 128).
- CNNf: 2 x 260 (time row, spectrum row), Conv2d(1, 128, kernel (50, 2),
  stride (3, 1)) collapsing the two rows, Dense(32, 128).
- CNNef: CNNf input with the RR features and Dense(36, 128).

Shared middle: BN(128), ReLU, MaxPool(2, 3), Conv1d(128, 32, 7), BN(32), ReLU,
MaxPool(2, 2), Conv1d(32, 32, 9), ReLU, Flatten; shared tail: ReLU,
Dense(128, 5).
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from ..beats import WINDOW
from .layers import ConcatExtras, Layer, make_layer

VARIANTS = ("CNN", "CNNe", "CNNf", "CNNef")
N_RR = 4


@dataclass(frozen=True)
class ArchParams:
    """Sizes shared by all variants. The defaults are the published ones."""

    input_length: int = WINDOW
    channels: tuple[int, int, int] = (128, 32, 32)
    kernels: tuple[int, int, int] = (50, 7, 9)
    first_stride: int = 3
    pools: tuple[tuple[int, int], tuple[int, int]] = ((2, 3), (2, 2))
    hidden: int = 128
    n_classes: int = 5
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1


PUBLISHED = ArchParams()
# small enough for finite-difference checks
SHRUNKEN = ArchParams(input_length=40, channels=(8, 4, 4), kernels=(10, 3, 1), hidden=16, n_classes=3)


@dataclass
class LayerSpec:
    kind: str
    args: dict = field(default_factory=dict)

    def build(self) -> Layer:
        return make_layer(self.kind, **self.args)


@dataclass
class ModelConfig:
    variant: str
    layers: list[LayerSpec]
    input_shape: tuple[int, ...]
    n_extra: int
    n_classes: int

    @property
    def uses_spectrum(self) -> bool:
        return self.variant in ("CNNf", "CNNef")

    @property
    def uses_rr(self) -> bool:
        return self.n_extra > 0


def build_model(variant: str, arch: ArchParams = PUBLISHED) -> ModelConfig:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    spectral = variant in ("CNNf", "CNNef")
    n_extra = N_RR if variant in ("CNNe", "CNNef") else 0
    c1, c2, c3 = arch.channels
    k1, k2, k3 = arch.kernels
    (p1k, p1s), (p2k, p2s) = arch.pools
    bn = dict(eps=arch.bn_eps, momentum=arch.bn_momentum)

    if spectral:
        input_shape = (1, 2, arch.input_length)
        head = [
            LayerSpec("conv2d", dict(in_ch=1, out_ch=c1, kernel_w=k1, kernel_h=2,
                                     stride_w=arch.first_stride, stride_h=1)),
            LayerSpec("squeeze_height"),
        ]
    else:
        input_shape = (1, arch.input_length)
        head = [LayerSpec("conv1d", dict(in_ch=1, out_ch=c1, kernel=k1, stride=arch.first_stride))]

    body = [
        LayerSpec("batchnorm", dict(channels=c1, **bn)),
        LayerSpec("relu"),
        LayerSpec("maxpool1d", dict(kernel=p1k, stride=p1s)),
        LayerSpec("conv1d", dict(in_ch=c1, out_ch=c2, kernel=k2, stride=1)),
        LayerSpec("batchnorm", dict(channels=c2, **bn)),
        LayerSpec("relu"),
        LayerSpec("maxpool1d", dict(kernel=p2k, stride=p2s)),
        LayerSpec("conv1d", dict(in_ch=c2, out_ch=c3, kernel=k3, stride=1)),
        LayerSpec("relu"),
        LayerSpec("flatten"),
    ]
    layers = head + body
    # flatten width follows from the conv/pool chain
    shape = input_shape
    for spec in layers:
        shape = spec.build().out_shape(shape)
        if min(shape) < 1:
            raise ValueError(f"{variant}: layer {spec.kind} produces empty shape {shape}")
    flat = shape[0]
    if n_extra:
        layers.append(LayerSpec("concat_extras", dict(n_extra=n_extra)))
    layers += [
        LayerSpec("dense", dict(in_features=flat + n_extra, out_features=arch.hidden)),
        LayerSpec("relu"),
        LayerSpec("dense", dict(in_features=arch.hidden, out_features=arch.n_classes)),
    ]
    return ModelConfig(variant, layers, input_shape, n_extra, arch.n_classes)


def shape_chain(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Per-example output shape after every layer."""
    shape = config.input_shape
    out = []
    for spec in config.layers:
        shape = spec.build().out_shape(shape)
        out.append((spec.kind, shape))
    return out


class Network:
    """A built model: layers, parameters and running statistics."""

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.layers = [spec.build() for spec in config.layers]
        rng = np.random.default_rng(seed)
        for layer in self.layers:
            layer.init_params(rng, self.dtype)

    @property
    def variant(self) -> str:
        return self.config.variant

    def forward(self, x, extras=None, train=False):
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[1:] != self.config.input_shape:
            raise ValueError(f"{self.variant} expects inputs of shape (batch, "
                             f"{', '.join(map(str, self.config.input_shape))}), got {x.shape}")
        if self.config.uses_rr:
            if extras is None:
                raise ValueError(f"{self.variant} needs the {self.config.n_extra} RR features")
            extras = np.asarray(extras, dtype=self.dtype)
        elif extras is not None:
            raise ValueError(f"{self.variant} takes no extra features")
        for layer in self.layers:
            if isinstance(layer, ConcatExtras):
                x = layer.forward(x, extras, train)
            else:
                x = layer.forward(x, train)
        return x

    __call__ = forward

    def backward(self, dlogits):
        """Back-propagate; fills every layer's ``grads`` and returns the input gradient."""
        d = dlogits
        for layer in reversed(self.layers):
            d = layer.backward(d)
        return d

    def named_params(self):
        for i, layer in enumerate(self.layers):
            for name, value in layer.params.items():
                yield f"{i}.{name}", layer, name, value

    def state(self) -> dict[str, np.ndarray]:
        """Parameters and running statistics keyed ``"<layer>.<name>"`` (live arrays)."""
        out = {}
        for i, layer in enumerate(self.layers):
            for name, value in {**layer.params, **layer.buffers}.items():
                out[f"{i}.{name}"] = value
        return out

    def grads(self) -> dict[str, np.ndarray]:
        return {f"{i}.{n}": g for i, layer in enumerate(self.layers) for n, g in layer.grads.items()}

    def load_state(self, state: dict[str, np.ndarray]):
        mine = self.state()
        if set(mine) != set(state):
            raise ValueError(f"state keys differ: {sorted(set(mine) ^ set(state))}")
        for key, value in state.items():
            if mine[key].shape != value.shape:
                raise ValueError(f"{key}: shape {value.shape} != {mine[key].shape}")
            mine[key][...] = value

    def copy_state(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.state().items()}

    def astype(self, dtype) -> "Network":
        net = copy.deepcopy(self)
        net.dtype = np.dtype(dtype)
        for layer in net.layers:
            layer.params = {k: v.astype(dtype) for k, v in layer.params.items()}
            layer.buffers = {k: v.astype(dtype) for k, v in layer.buffers.items()}
        return net

    def n_params(self) -> int:
        return sum(v.size for _, _, _, v in self.named_params())


def predict_logits(net: Network, x, extras=None, batch_size: int = 1024):
    out = []
    for start in range(0, len(x), batch_size):
        sl = slice(start, start + batch_size)
        out.append(net.forward(x[sl], None if extras is None else extras[sl], train=False))
    if not out:
        return np.zeros((0, net.config.n_classes), net.dtype)
    return np.concatenate(out)


def argmax_label(logits):
    """Class index with the largest logit; ties go to the lower index."""
    return np.asarray(logits).argmax(axis=-1)
