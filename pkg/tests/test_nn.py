import math

import numpy as np
import pytest

from hybridecg.beats import BeatSet, DatasetSplit
from hybridecg.nn import (PUBLISHED, SHRUNKEN, VARIANTS, ModelFileError, Network, TrainConfig, build_model,
                          load_model, predict, save_model, shape_chain, softmax_cross_entropy, train)
from hybridecg.nn import gradcheck
from hybridecg.nn.layers import BatchNorm, Conv1d, Conv2d, Dense, MaxPool1d, make_layer
from hybridecg.nn.model import LayerSpec, ModelConfig, argmax_label
from hybridecg.nn.serialize import dumps_model, loads_model
from hybridecg.nn.training import DivergenceError, InputSource, model_inputs, predict_one


def test_shape_chain_published():
    for v in VARIANTS:
        chain = dict(shape_chain(build_model(v)))
        assert chain["flatten"] == (32,)
        dense = [s for s in build_model(v).layers if s.kind == "dense"]
        assert dense[0].args["in_features"] == (36 if v in ("CNNe", "CNNef") else 32)
        assert dense[0].args["out_features"] == 128
        assert dense[-1].args["out_features"] == 5
        assert shape_chain(build_model(v))[-1][1] == (5,)
    lengths = [s[1][-1] for s in shape_chain(build_model("CNN")) if s[0] in ("conv1d", "maxpool1d")]
    assert lengths == [71, 24, 18, 9, 1]
    assert shape_chain(build_model("CNNf"))[0] == ("conv2d", (128, 1, 71))


def test_unknown_variant():
    with pytest.raises(ValueError):
        build_model("CNNx")


def test_forward_shapes_and_errors(rng):
    net = Network(build_model("CNN"))
    assert net(rng.standard_normal((3, 1, 260))).shape == (3, 5)
    with pytest.raises(ValueError):
        net(rng.standard_normal((3, 2, 260)))
    with pytest.raises(ValueError):
        net(rng.standard_normal((3, 1, 260)), extras=np.ones((3, 4)))
    nete = Network(build_model("CNNe"))
    with pytest.raises(ValueError):
        nete(rng.standard_normal((3, 1, 260)))


def test_cached_flatten_width(rng):
    net = Network(build_model("CNN"))
    x = rng.standard_normal((2, 1, 260))
    for layer in net.layers:
        x = layer.forward(x)
        if layer.kind == "flatten":
            assert x.shape == (2, 32)


def test_conv1d_definition(rng):
    conv = Conv1d(2, 3, kernel=4, stride=2)
    conv.init_params(rng, np.float64)
    x = rng.standard_normal((1, 2, 11))
    out = conv.forward(x)
    W, b = conv.params["weight"], conv.params["bias"]
    for c in range(3):
        for t in range(out.shape[2]):
            assert np.isclose(out[0, c, t], b[c] + np.sum(W[c] * x[0, :, 2 * t:2 * t + 4]))


def test_conv2d_collapses_height(rng):
    conv = Conv2d(1, 4, kernel=(50, 2), stride=(3, 1))
    conv.init_params(rng, np.float64)
    x = rng.standard_normal((2, 1, 2, 260))
    out = conv.forward(x)
    assert out.shape == (2, 4, 1, 71)
    W = conv.params["weight"]
    assert np.isclose(out[1, 2, 0, 5], conv.params["bias"][2] + np.sum(W[2, 0] * x[1, 0, :, 15:65]))


def test_maxpool_first_index_on_ties():
    pool = MaxPool1d(2, 2)
    x = np.array([[[1.0, 1.0, 0.0, 3.0]]])
    assert pool.forward(x, train=True).tolist() == [[[1.0, 3.0]]]
    assert pool.backward(np.ones((1, 1, 2))).tolist() == [[[1.0, 0.0, 0.0, 1.0]]]


def test_batchnorm_eval_identity(rng):
    bn = BatchNorm(3)
    bn.init_params(rng, np.float64)
    x = rng.standard_normal((4, 3, 5))
    assert np.allclose(bn.forward(x), x / np.sqrt(1 + 1e-5))


def test_batchnorm_eval_permutation(rng):
    bn = BatchNorm(3)
    bn.init_params(rng, np.float64)
    bn.forward(rng.standard_normal((8, 3, 5)) * 2 + 1, train=True)
    x = rng.standard_normal((6, 3, 5))
    perm = rng.permutation(6)
    assert np.array_equal(bn.forward(x)[perm], bn.forward(x[perm]))


def test_batchnorm_running_stats(rng):
    bn = BatchNorm(2, momentum=0.1)
    bn.init_params(rng, np.float64)
    x = rng.standard_normal((10, 2, 3)) * 3 + 2
    bn.forward(x, train=True)
    mean = x.mean(axis=(0, 2))
    var = x.var(axis=(0, 2), ddof=1)
    assert np.allclose(bn.buffers["running_mean"], 0.1 * mean)
    assert np.allclose(bn.buffers["running_var"], 0.9 + 0.1 * var)


def test_loss_uniform_is_ln5():
    loss, d = softmax_cross_entropy(np.zeros((4, 5)), np.array([0, 1, 2, 3]))
    assert loss == pytest.approx(math.log(5))
    assert np.allclose(d.sum(axis=1), 0)


def test_saturated_and_zero_weight_gradients():
    logits = np.full((2, 5), -50.0)
    logits[[0, 1], [1, 3]] = 50.0
    loss, d = softmax_cross_entropy(logits, np.array([1, 3]))
    assert loss >= 0 and np.abs(d).max() < 1e-6
    _, d = softmax_cross_entropy(np.random.default_rng(0).standard_normal((3, 5)), np.array([0, 1, 2]), weight=0.0)
    net = Network(build_model("CNN"), dtype=np.float64)
    net(np.ones((3, 1, 260)), train=True)
    net.backward(d)
    assert all(not g.any() for g in net.grads().values())


def test_argmax_tie_break():
    assert argmax_label(np.array([9, 1, 1, 1, 1])) == 0
    assert argmax_label(np.zeros(5)) == 0
    assert argmax_label(np.array([0, 2, 2, 0, 0])) == 1


def test_zero_input_equal_logits():
    net = Network(build_model("CNN"), dtype=np.float64)
    for layer in net.layers:
        if "bias" in layer.params:
            layer.params["bias"][:] = 0
    logits = net(np.zeros((1, 1, 260)))
    assert np.allclose(logits, 0) and argmax_label(logits)[0] == 0


def test_gradcheck_suite_passes():
    results = gradcheck.full_suite()
    bad = [r.line() for r in results if not r.passed]
    assert not bad, bad
    names = {r.name.split("/")[0] for r in results}
    assert {"Conv1d", "Conv2d", "BatchNorm(train)", "BatchNorm(eval)", "ReLU", "Dense", "Flatten",
            "ConcatExtras", "SqueezeHeight"} <= names
    assert set(VARIANTS) <= names


def test_gradcheck_catches_fault(monkeypatch):
    original = Conv1d.backward

    def broken(self, dout):
        dx = original(self, dout)
        self.grads["weight"] = self.grads["weight"] * 1.01
        return dx

    monkeypatch.setattr(Conv1d, "backward", broken)
    results = gradcheck.layer_suite()
    failed = [r for r in results if not r.passed]
    assert [r.name for r in failed] == ["Conv1d/weight"]
    assert failed[0].max_rel_error > 1e-3
    assert "FAIL" in failed[0].line()


def _toy_split(rng, n=200):
    labels = rng.integers(0, 2, n).astype(np.int8)
    windows = (rng.standard_normal((n, 260)) * 0.5 + np.where(labels == 1, 1.0, -1.0)[:, None]).astype(np.float32)
    beats = BeatSet(windows, None, labels, np.array(["t"] * n), np.arange(n), np.zeros(n, bool))
    return DatasetSplit(beats, beats.subset(np.arange(40)), beats.subset(np.arange(40)), 0)


def test_toy_dense_model_reaches_full_accuracy(rng):
    cfg = ModelConfig("toy", [LayerSpec("flatten"), LayerSpec("dense", dict(in_features=260, out_features=2))],
                      (1, 260), 0, 2)
    split = _toy_split(rng)
    result = train(cfg, split, TrainConfig(batch_size=32, max_epochs=20, lr=1e-2))
    assert (predict(result.network, split.train) == split.train.labels).all()


def test_training_is_deterministic(synthetic_beats):
    from hybridecg.beats import split_dataset
    from hybridecg.smote import balance_training_set
    split, _ = balance_training_set(split_dataset(synthetic_beats, seed=0), rng_seed=0)
    cfg = TrainConfig(max_epochs=2, seed=5)
    a = train(build_model("CNNef"), split, cfg)
    b = train(build_model("CNNef"), split, cfg)
    assert dumps_model(a.network) == dumps_model(b.network)
    assert a.log == b.log
    assert len(a.log) == 2 and a.best_epoch in (1, 2)


@pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
def test_early_stopping_and_divergence(rng):
    split = _toy_split(rng)
    cfg = ModelConfig("toy", [LayerSpec("flatten"), LayerSpec("dense", dict(in_features=260, out_features=2))],
                      (1, 260), 0, 2)
    res = train(cfg, split, TrainConfig(max_epochs=50, patience=2, lr=1e-2, batch_size=16))
    assert res.stopped_early and len(res.log) < 50
    assert res.best_epoch == min(res.log, key=lambda r: r["val_loss"])["epoch"]
    split.train.windows[0, 0] = np.inf
    with pytest.raises(DivergenceError):
        train(cfg, split, TrainConfig(max_epochs=1))


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=0)
    with pytest.raises(ValueError):
        TrainConfig(precision="float16")


def test_batch_predict_equals_single(synthetic_beats):
    net = Network(build_model("CNNef"), seed=3)
    part = synthetic_beats.subset(np.arange(30))
    batch = predict(net, part, batch_size=7)
    single = [predict_one(net, part.windows[i], part.rr[i]) for i in range(30)]
    assert batch.tolist() == single


def test_input_source_matches_model_inputs(synthetic_beats):
    idx = np.array([4, 0, 9])
    for v in VARIANTS:
        cfg = build_model(v)
        x, e, labels = InputSource(cfg, synthetic_beats).take(idx)
        x2, e2 = model_inputs(cfg, synthetic_beats.subset(idx))
        assert np.array_equal(x, x2)
        assert (e is None and e2 is None) or np.array_equal(e, e2)


def test_missing_rr_is_an_error(synthetic_beats):
    beats = synthetic_beats.subset(np.arange(5))
    beats.rr = None
    with pytest.raises(ValueError):
        model_inputs(build_model("CNNe"), beats)


def test_serialize_roundtrip(tmp_path, rng):
    for v in VARIANTS:
        net = Network(build_model(v), seed=2)
        net(rng.standard_normal((4,) + net.config.input_shape), extras=np.ones((4, 4)) if net.config.uses_rr else None,
            train=True)
        save_model(net, tmp_path / f"{v}.ecgm", {"note": "x"})
        back, meta = load_model(tmp_path / f"{v}.ecgm")
        assert meta == {"note": "x"}
        assert back.config == net.config
        assert set(back.state()) == set(net.state())
        for key, value in net.state().items():
            assert back.state()[key].dtype == np.float32
            assert np.array_equal(back.state()[key], value)
    data = (tmp_path / "CNN.ecgm").read_bytes()
    assert data[:4] == b"ECGM"
    assert dumps_model(load_model(tmp_path / "CNN.ecgm")[0], {"note": "x"}) == data


def test_serialize_corruption_and_version(tmp_path):
    data = bytearray(dumps_model(Network(build_model("CNN"))))
    flipped = bytearray(data)
    flipped[len(data) // 2] ^= 0x01
    with pytest.raises(ModelFileError, match="checksum"):
        loads_model(bytes(flipped))
    bad_version = bytearray(data)
    bad_version[4:6] = (99).to_bytes(2, "little")
    with pytest.raises(ModelFileError, match="version"):
        loads_model(bytes(bad_version))
    with pytest.raises(ModelFileError):
        loads_model(b"NOPE" + bytes(data[4:]))
    with pytest.raises(ModelFileError):
        loads_model(bytes(data[:20]))


def test_loaded_cnnf_takes_only_dual_inputs(tmp_path, rng):
    save_model(Network(build_model("CNNf")), tmp_path / "f.ecgm")
    net, _ = load_model(tmp_path / "f.ecgm")
    assert net(rng.standard_normal((2, 1, 2, 260))).shape == (2, 5)
    for shape in [(2, 1, 260), (2, 1, 1, 260), (2, 1, 2, 259)]:
        with pytest.raises(ValueError):
            net(rng.standard_normal(shape))


def test_make_layer_unknown():
    with pytest.raises(ValueError):
        make_layer("lstm")


def test_shrunken_arch_is_small():
    assert Network(build_model("CNNef", SHRUNKEN)).n_params() < 1000 < Network(build_model("CNN", PUBLISHED)).n_params()


def test_dense_definition(rng):
    d = Dense(3, 2)
    d.init_params(rng, np.float64)
    x = rng.standard_normal((4, 3))
    assert np.allclose(d.forward(x), x @ d.params["weight"].T + d.params["bias"])
