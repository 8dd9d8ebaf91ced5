import numpy as np
import pytest

from sefdm_cnn.cnn import ArchitectureDescriptor, StageSpec, TrainConfig, init_model, train
from sefdm_cnn.cnn.io import model_hash
from sefdm_cnn.dataset import DatasetManifest, build_dataset
from sefdm_cnn.errors import ConfigurationError
from sefdm_cnn.transfer import default_config, fine_tune


@pytest.fixture(scope="module")
def data():
    m = DatasetManifest(group="TypeI", domain="time", impaired=True, n_train=6, n_val=3, seed=3)
    return build_dataset(m)


@pytest.fixture(scope="module")
def base(data):
    d = ArchitectureDescriptor((StageSpec(4, 5, "max"), StageSpec(6, 5, "avg")), n_classes=4)
    m = init_model(d, seed=1, group="TypeI", domain="time")
    return train(m, data["train"], data["val"], TrainConfig(epochs=2, batch_size=8))[0]


def test_frozen_parameters_bit_exact(base, data):
    adapted, hist = fine_tune(base, data["val"], TrainConfig(epochs=3, batch_size=4, seed=2))
    assert adapted.param_hash(base.frozen_names()) == base.param_hash(base.frozen_names())
    for k in base.frozen_names():
        assert adapted.params[k].tobytes() == base.params[k].tobytes()
    assert not np.array_equal(adapted.params["fc.w"], base.params["fc.w"])
    assert len(hist.train_loss) == 3


def test_head_is_reinitialised_not_warm_started(base, data):
    cfg = TrainConfig(epochs=1, batch_size=4, learning_rate=0.0, seed=5)
    adapted, _ = fine_tune(base, data["val"], cfg)
    # zero learning rate exposes the fresh head: independent of the base head
    again, _ = fine_tune(base.copy(), data["val"], cfg)
    np.testing.assert_array_equal(adapted.params["fc.w"], again.params["fc.w"])
    assert not np.allclose(adapted.params["fc.w"], base.params["fc.w"])
    np.testing.assert_array_equal(adapted.params["fc.b"], 0)


def test_provenance(base, data):
    adapted, _ = fine_tune(base, data["val"])
    prov = adapted.meta["provenance"]
    assert prov["base_model_sha256"] == model_hash(base)
    assert prov["target_sha256"] == data["val"].sha256()
    assert prov["target_per_class"] == [3, 3, 3, 3]
    assert prov["degenerate_target"] is False


def test_default_config():
    cfg = default_config(200)
    assert (cfg.epochs, cfg.batch_size, cfg.learning_rate) == (10, 128, 0.01)
    assert default_config(12).batch_size == 12


def test_deterministic(base, data):
    a, _ = fine_tune(base, data["val"], TrainConfig(epochs=2, batch_size=4, seed=9))
    b, _ = fine_tune(base, data["val"], TrainConfig(epochs=2, batch_size=4, seed=9))
    assert model_hash(a) == model_hash(b)


def test_errors(base, data):
    with pytest.raises(ConfigurationError, match="empty"):
        fine_tune(base, data["val"].subset(np.zeros(len(data["val"]), bool)))
    freq = build_dataset(DatasetManifest(domain="freq", n_train=1, n_val=0, seed=3))["train"]
    with pytest.raises(ConfigurationError, match="match"):
        fine_tune(base, freq)
    type2 = build_dataset(DatasetManifest(group="TypeII", n_train=1, n_val=0, seed=3))["train"]
    with pytest.raises(ConfigurationError):
        fine_tune(base, type2)


def test_degenerate_target_is_flagged(base, data):
    one_class = data["val"].subset(data["val"].labels == 2)
    with pytest.warns(RuntimeWarning, match="fewer than two classes"):
        adapted, _ = fine_tune(base, one_class)
    assert adapted.meta["provenance"]["degenerate_target"] is True
