import numpy as np
import pytest

from gradcheck import numeric_grad, rel_error
from sefdm_cnn.cnn import (
    ArchitectureDescriptor, StageSpec, TrainConfig, backward, features, forward, init_model,
    load_model, loss, predict, predict_proba, save_model, train,
)
from sefdm_cnn.cnn.io import decode_model, encode_model
from sefdm_cnn.cnn.model import update_running_stats
from sefdm_cnn.dataset import Record
from sefdm_cnn.errors import ConfigurationError, DataError, NumericalError


def tiny(dtype=np.float64, seed=0, dropout=0.0):
    d = ArchitectureDescriptor((StageSpec(4, 3, "max"), StageSpec(4, 3, "avg")), n_classes=3,
                               in_channels=2, input_len=16, dropout=dropout)
    m = init_model(d, seed=seed, dtype=dtype)
    rng = np.random.default_rng(seed + 1)
    # non-trivial batch-norm affine parameters and biases
    for k in m.params:
        if k.endswith(("conv.b", "bn.beta", "fc.b")):
            m.params[k] = rng.standard_normal(m.params[k].shape) * 0.3
        if k.endswith("bn.gamma"):
            m.params[k] = 1 + rng.standard_normal(m.params[k].shape) * 0.3
    return m


def test_standard_descriptor():
    d = ArchitectureDescriptor.standard(4)
    assert len(d.stages) == 7
    assert [s.pool for s in d.stages] == ["max"] * 6 + ["avg"]
    assert d.feature_dim == 128
    m = init_model(d, seed=0)
    logits, _ = forward(m, np.zeros((2, 2, 1024), np.float32))
    assert logits.shape == (2, 4)
    assert init_model(ArchitectureDescriptor.standard(7)).params["fc.w"].shape == (128, 7)
    with pytest.raises(ConfigurationError):
        ArchitectureDescriptor.standard(4, filters=(8, 8))
    with pytest.raises(ConfigurationError):
        ArchitectureDescriptor((StageSpec(4, 3, "avg"), StageSpec(4, 3, "max")), 3)


def test_full_network_gradients():
    m = tiny(dropout=0.5)
    rng = np.random.default_rng(5)
    x = rng.standard_normal((3, 2, 16))
    y = np.array([0, 2, 1])

    def objective():
        logits, _ = forward(m, x, "train", np.random.default_rng(9))
        return loss(logits, y)[0]

    logits, cache = forward(m, x, "train", np.random.default_rng(9))
    grads = backward(m, cache, loss(logits, y)[1])
    assert set(grads) == set(m.trainable_names())
    for name in m.trainable_names():
        num = numeric_grad(objective, m.params[name])
        if np.linalg.norm(num) < 1e-8:
            # conv bias feeding batch-norm: the mean subtraction cancels it exactly
            assert np.linalg.norm(grads[name]) < 1e-8, name
        else:
            assert rel_error(grads[name], num) < 1e-4, name


def test_zero_loss_gradient_gives_zero_grads():
    m = tiny()
    x = np.random.default_rng(1).standard_normal((2, 2, 16))
    logits, cache = forward(m, x, "train")
    grads = backward(m, cache, np.zeros_like(logits))
    assert all(np.all(g == 0) for g in grads.values())


def test_duplicated_sample_mean_reduction():
    m = tiny()
    x = np.random.default_rng(2).standard_normal((1, 2, 16))
    y = np.array([1])
    l1, c1 = forward(m, x, "train")
    g1 = backward(m, c1, loss(l1, y)[1])
    l2, c2 = forward(m, np.concatenate([x, x]), "train")
    g2 = backward(m, c2, loss(l2, np.array([1, 1]))[1])
    for k in g1:
        assert np.allclose(g1[k], g2[k], atol=1e-12), k


def test_stale_cache_rejected():
    m = tiny()
    x = np.random.default_rng(3).standard_normal((2, 2, 16))
    logits, cache = forward(m, x, "train")
    m.version += 1
    with pytest.raises(ConfigurationError, match="stale"):
        backward(m, cache, np.zeros_like(logits))
    with pytest.raises(ConfigurationError):
        backward(m, None, np.zeros_like(logits))


def test_zero_input_yields_head_bias():
    m = init_model(ArchitectureDescriptor.standard(4, filters=(4,) * 7), seed=3)
    m.params["fc.b"] = np.array([0.1, -0.2, 0.3, 0.0], np.float32)
    for mode in ("inference", "train"):
        logits, _ = forward(m, np.zeros((2, 2, 1024), np.float32), mode)
        assert np.allclose(logits, m.params["fc.b"])


def test_identity_stage_reproduces_input():
    d = ArchitectureDescriptor((StageSpec(1, 1, "none"),), n_classes=2, in_channels=1, input_len=16)
    m = init_model(d, dtype=np.float64)
    m.params["s0.conv.w"][:] = 1.0
    m.params["s0.bn.var"][:] = 1.0 - d.bn_eps
    x = np.abs(np.random.default_rng(0).standard_normal((3, 1, 16)))
    f, _ = features(m, x)
    assert np.allclose(f, x[:, 0, :], atol=1e-15)


def test_inference_deterministic_and_shape_errors():
    m = init_model(ArchitectureDescriptor.standard(4, filters=(4,) * 7), seed=1)
    x = np.random.default_rng(0).standard_normal((3, 2, 1024)).astype(np.float32)
    a, _ = forward(m, x)
    b, _ = forward(m, x)
    assert a.tobytes() == b.tobytes()
    with pytest.raises(ConfigurationError):
        forward(m, x[:, :, :100])
    with pytest.raises(ConfigurationError):
        forward(m, x, mode="eval")


def test_non_finite_activation_raises():
    m = tiny()
    x = np.full((2, 2, 16), np.nan)
    with pytest.raises(NumericalError):
        forward(m, x)


def test_loss_validation():
    with pytest.raises(ConfigurationError):
        loss(np.zeros((2, 4)), [0, 4])
    value, _ = loss(np.zeros((4, 4)), [0, 1, 2, 3])
    assert value == pytest.approx(np.log(4))


def test_batchnorm_running_stats_update():
    m = tiny()
    x = np.random.default_rng(4).standard_normal((4, 2, 16)) * 2 + 1
    _, cache = forward(m, x, "train")
    before = m.params["s0.bn.mean"].copy()
    update_running_stats(m, cache)
    assert not np.allclose(before, m.params["s0.bn.mean"])
    assert np.all(m.params["s0.bn.var"] > 0)


def toy_data(n, seed, shift=0.0):
    """Two separable classes: tone at different frequencies."""
    rng = np.random.default_rng(seed)
    t = np.arange(16)
    y = rng.integers(0, 2, n)
    f = np.where(y == 0, 0.05, 0.25)[:, None]
    ph = rng.uniform(0, 2 * np.pi, (n, 1))
    z = np.exp(1j * (2 * np.pi * f * t + ph)) + 0.1 * rng.standard_normal((n, 16))
    return np.stack([z.real, z.imag], axis=1).astype(np.float32), y


def small_model(seed=0):
    d = ArchitectureDescriptor((StageSpec(6, 3, "max"), StageSpec(8, 3, "avg")), 2, input_len=16)
    return init_model(d, seed=seed)


def test_train_learns_toy_problem_and_is_deterministic():
    tr, va = toy_data(200, 1), toy_data(100, 2)
    cfg = TrainConfig(epochs=15, batch_size=32, learning_rate=0.05, momentum=0.9, seed=3)
    m1, h1 = train(small_model(), tr, va, cfg)
    m2, h2 = train(small_model(), tr, va, cfg)
    assert h1 == h2
    assert m1.param_hash() == m2.param_hash()
    assert max(h1.val_accuracy) >= 0.95
    assert h1.val_accuracy[h1.best_epoch] == max(h1.val_accuracy)
    assert len(h1.train_loss) == 15


def test_zero_learning_rate_leaves_parameters():
    base = small_model()
    m, _ = train(base, toy_data(64, 1), toy_data(32, 2), TrainConfig(epochs=2, batch_size=16, learning_rate=0.0))
    for k in base.trainable_names():
        assert np.array_equal(m.params[k], base.params[k])


def test_train_divergence_aborts():
    x, y = toy_data(64, 1)
    x[5, 0, 3] = np.inf
    with pytest.raises(NumericalError):
        train(small_model(), (x, y), None, TrainConfig(epochs=2, batch_size=16))


def test_head_only_training_freezes_stages():
    base = small_model()
    m, _ = train(base, toy_data(64, 1), toy_data(32, 2), TrainConfig(epochs=3, batch_size=16), head_only=True)
    assert m.param_hash(base.frozen_names()) == base.param_hash(base.frozen_names())
    assert not np.array_equal(m.params["fc.w"], base.params["fc.w"])


def test_predict_probabilities():
    m = init_model(ArchitectureDescriptor.standard(4, filters=(4,) * 7), seed=1)
    m.domain = "time"
    iq = (np.random.default_rng(0).standard_normal(1024) * (1 + 1j)).astype(np.complex64)
    idx, p = predict(m, Record(0, 10000, 200, "time", iq))
    assert p.sum() == pytest.approx(1.0, abs=1e-9)
    assert idx == int(np.argmax(p))
    with pytest.raises(ConfigurationError):
        predict(m, Record(0, 10000, 200, "freq", iq))


def test_model_file_round_trip(tmp_path):
    m = small_model()
    m.group, m.domain, m.meta = "TypeI", "time", {"config": {"seed": 1}}
    path = save_model(m, tmp_path / "m.sefm")
    back = load_model(path)
    assert back.descriptor == m.descriptor
    assert back.group == "TypeI" and back.meta == m.meta
    for k in m.params:
        assert np.array_equal(back.params[k], m.params[k])
    assert encode_model(back) == path.read_bytes()
    with pytest.raises(DataError):
        decode_model(b"JUNKJUNKJUNK")
    with pytest.raises(DataError):
        decode_model(path.read_bytes()[:-4])
    with pytest.raises(DataError):
        load_model(tmp_path / "nope.sefm")


def test_predict_proba_matches_forward():
    m = small_model()
    x, _ = toy_data(10, 0)
    p = predict_proba(m, x, batch_size=3)
    logits, _ = forward(m, x)
    assert np.allclose(np.argmax(p, 1), np.argmax(logits, 1))
