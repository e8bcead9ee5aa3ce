"""Central finite-difference checks of every layer's backward pass.

For a tensor with analytic gradient ``a`` and numerical gradient ``n`` the
reported error is ``max|a - n| / max(max|a|, max|n|, 1e-6)``. The floor
matters for tensors whose exact gradient is zero, such as a convolution
bias that feeds batch normalisation; there the check is absolute.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .layers import (BatchNorm, ConcatExtras, Conv1d, Conv2d, Dense, Flatten, Layer, MaxPool1d, ReLU,
                     SqueezeHeight, softmax_cross_entropy)
from .model import SHRUNKEN, VARIANTS, Network, build_model

TOLERANCE = 1e-4
EPS = 1e-5
SCALE_FLOOR = 1e-6


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    tolerance: float = TOLERANCE

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error < self.tolerance)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<32s} max rel err {self.max_rel_error:.3e}"


def rel_error(analytic, numeric) -> float:
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    scale = max(np.abs(analytic).max(initial=0), np.abs(numeric).max(initial=0), SCALE_FLOOR)
    return float(np.abs(analytic - numeric).max(initial=0) / scale)


def numeric_grad(f, x: np.ndarray, eps: float = EPS) -> np.ndarray:
    """Central differences of scalar ``f()`` with respect to ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = f()
        flat[i] = old - eps
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * eps)
    return g


def check_layer(layer: Layer, x: np.ndarray, extras=None, name: str | None = None,
                seed: int = 0, train: bool = True) -> list[CheckResult]:
    """Check input and parameter gradients of one layer under ``L = sum(out * R)``."""
    rng = np.random.default_rng(seed)
    name = name or type(layer).__name__
    x = x.astype(np.float64)

    def run():
        if isinstance(layer, ConcatExtras):
            return layer.forward(x, extras, train)
        return layer.forward(x, train)

    r = rng.standard_normal(run().shape)

    def loss():
        return float((run() * r).sum())

    run()
    dx = layer.backward(r)
    grads = {k: v.copy() for k, v in layer.grads.items()}
    results = [CheckResult(f"{name}/input", rel_error(dx, numeric_grad(loss, x)))]
    for pname, p in layer.params.items():
        results.append(CheckResult(f"{name}/{pname}", rel_error(grads[pname], numeric_grad(loss, p))))
    return results


def layer_suite(seed: int = 0) -> list[CheckResult]:
    """Each layer type in isolation at small sizes, double precision."""
    rng = np.random.default_rng(seed)
    f64 = np.float64
    out = []

    conv = Conv1d(3, 4, kernel=5, stride=2)
    conv.init_params(rng, f64)
    out += check_layer(conv, rng.standard_normal((2, 3, 17)), name="Conv1d")

    conv2 = Conv2d(1, 4, kernel=(5, 2), stride=(3, 1))
    conv2.init_params(rng, f64)
    out += check_layer(conv2, rng.standard_normal((2, 1, 2, 16)), name="Conv2d")

    out += check_layer(SqueezeHeight(), rng.standard_normal((2, 3, 1, 6)), name="SqueezeHeight")

    bn = BatchNorm(3)
    bn.init_params(rng, f64)
    bn.params["gamma"] = rng.uniform(0.5, 1.5, 3)
    bn.params["beta"] = rng.standard_normal(3)
    out += check_layer(bn, rng.standard_normal((4, 3, 5)), name="BatchNorm(train)")
    bn.buffers["running_mean"] = rng.standard_normal(3)
    bn.buffers["running_var"] = rng.uniform(0.5, 2.0, 3)
    out += check_layer(bn, rng.standard_normal((4, 3, 5)), name="BatchNorm(eval)", train=False)

    # keep inputs away from the kink at zero
    x = rng.standard_normal((2, 3, 7))
    x[np.abs(x) < 1e-2] = 0.5
    out += check_layer(ReLU(), x, name="ReLU")

    # distinct values so the pooling argmax is stable under perturbation
    x = rng.permutation(2 * 3 * 11).reshape(2, 3, 11) * 0.01
    out += check_layer(MaxPool1d(2, 3), x, name="MaxPool1d(2,3)")
    out += check_layer(MaxPool1d(3, 2), x, name="MaxPool1d(3,2)")

    out += check_layer(Flatten(), rng.standard_normal((2, 3, 4)), name="Flatten")
    out += check_layer(ConcatExtras(4), rng.standard_normal((3, 5)), extras=rng.standard_normal((3, 4)),
                       name="ConcatExtras")

    dense = Dense(6, 4)
    dense.init_params(rng, f64)
    out += check_layer(dense, rng.standard_normal((3, 6)), name="Dense")
    return out


def network_check(variant: str, seed: int = 0, batch: int = 3) -> list[CheckResult]:
    """Whole shrunken network of ``variant`` under softmax cross-entropy, train mode."""
    rng = np.random.default_rng(seed)
    net = Network(build_model(variant, SHRUNKEN), seed=seed, dtype=np.float64)
    x = rng.standard_normal((batch,) + net.config.input_shape)
    extras = rng.uniform(0.5, 1.5, (batch, net.config.n_extra)) if net.config.uses_rr else None
    labels = rng.integers(0, net.config.n_classes, batch)

    def loss():
        return softmax_cross_entropy(net.forward(x, extras, train=True), labels)[0]

    _, dlogits = softmax_cross_entropy(net.forward(x, extras, train=True), labels)
    net.backward(dlogits)
    grads = {k: v.copy() for k, v in net.grads().items()}
    results = []
    for key, _, _, p in net.named_params():
        results.append(CheckResult(f"{variant}/{key}", rel_error(grads[key], numeric_grad(loss, p))))
    return results


def full_suite(seed: int = 0) -> list[CheckResult]:
    results = layer_suite(seed)
    for variant in VARIANTS:
        results += network_check(variant, seed)
    return results
