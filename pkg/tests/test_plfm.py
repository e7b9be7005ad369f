import json

import numpy as np
import pytest

from bandcast.data import Normalizer, SeriesWindow
from bandcast.errors import IncompatibleCheckpoint, InvalidInput, MissingCheckpoint
from bandcast.nn import TrainHyper
from bandcast.plfm import PLFM, PlfmConfig, _Batches, _loss_and_grads, plfm_loss, plfm_target, train_plfm
from bandcast.spectral import cutoff_bins, dft, low_band_mask

from conftest import central_diff, rel_err, sinusoid

TINY = PlfmConfig(history_len=8, horizon=4, channels=1, patch_len=4, stride=2, hidden_dim=3)


def random_windows(rng, cfg, n):
    return [
        SeriesWindow(rng.normal(size=(cfg.history_len, cfg.channels)),
                     rng.normal(size=(cfg.horizon, cfg.channels)),
                     np.zeros((cfg.history_len + cfg.horizon, 0)), i)
        for i in range(n)
    ]


@pytest.mark.parametrize(
    "kw",
    [dict(patch_len=4, stride=4), dict(patch_len=9), dict(stride=0), dict(hidden_dim=0),
     dict(keep_fraction=0.0), dict(activation="relu")],
)
def test_config_validation(kw):
    base = dict(history_len=8, horizon=4, patch_len=4, stride=2)
    base.update(kw)
    with pytest.raises(InvalidInput):
        PlfmConfig(**base)


def test_branch_shapes_match():
    model = PLFM(PlfmConfig(64, 16))
    assert model.config.input_dim == 12 * 9
    for k in ("W1", "b1", "W2", "b2"):
        assert model.real.params[k].shape == model.imag.params[k].shape
    assert model.real.params["W1"].shape == (64, 108)
    assert model.real.params["W2"].shape == (16, 64)


def test_zero_history_zero_bias_gives_zero():
    model = PLFM(PlfmConfig(16, 4, channels=2, patch_len=8, stride=4))
    assert np.all(model.forward(np.zeros((16, 2))) == 0)
    assert np.all(model.low_token(np.zeros((16, 2))) == 0)


def test_output_shape():
    model = PLFM(PlfmConfig(30, 7, channels=3, patch_len=6, stride=4))
    assert model.forward(np.ones((30, 3))).shape == (7, 3)
    assert model.forward(np.ones((5, 30, 3))).shape == (5, 7, 3)
    assert model.low_token(np.ones((30, 3))).shape == (7, 3)


def test_wrong_history_shape():
    with pytest.raises(InvalidInput):
        PLFM(TINY).forward(np.zeros((9, 1)))


def identity_model(p):
    """Single patch, identity weights, linear activation: forecast spectrum = dft(history)."""
    cfg = PlfmConfig(history_len=p, horizon=p, patch_len=p, stride=1, hidden_dim=p, activation="identity")
    model = PLFM(cfg)
    for branch in (model.real, model.imag):
        branch.params["W1"][...] = np.eye(p)
        branch.params["W2"][...] = np.eye(p)
    return model


def test_hand_constructed_identity(rng):
    model = identity_model(6)
    x = rng.normal(size=(6, 1))
    np.testing.assert_allclose(model.forward(x), dft(x), atol=1e-12)
    # the spectrum is Hermitian here, so the token round-trips
    np.testing.assert_allclose(dft(model.low_token(x)), model.forward(x), atol=1e-8)
    np.testing.assert_allclose(model.low_token(x), x, atol=1e-12)


def test_hand_constructed_mapping(rng):
    # W2 keeps only the first two hidden units: bins 0 and 1 of the input spectrum
    model = identity_model(4)
    for branch in (model.real, model.imag):
        branch.params["W2"][...] = np.diag([1.0, 1.0, 0.0, 0.0])
    x = rng.normal(size=(4, 1))
    expected = dft(x)
    expected[2:] = 0
    np.testing.assert_allclose(model.forward(x), expected, atol=1e-12)


def test_token_is_hermitian_part_of_forecast(rng):
    model = PLFM(PlfmConfig(16, 6, patch_len=8, stride=4), seed=3)
    x = rng.normal(size=(16, 1))
    z = model.forward(x)
    mirror = np.conj(np.roll(z[::-1], 1, axis=0))
    np.testing.assert_allclose(dft(model.low_token(x)), (z + mirror) / 2, atol=1e-10)


def test_channel_permutation(rng):
    model = PLFM(PlfmConfig(16, 4, channels=3, patch_len=8, stride=4), seed=1)
    x = rng.normal(size=(16, 3))
    perm = [2, 0, 1]
    np.testing.assert_allclose(model.forward(x[:, perm]), model.forward(x)[:, perm], atol=1e-12)


class TestTarget:
    def test_full_band(self, rng):
        y = rng.normal(size=(10, 2))
        np.testing.assert_array_equal(plfm_target(y, 1.0), dft(y))

    def test_low_sinusoid(self):
        y = sinusoid(16, 1)
        np.testing.assert_allclose(plfm_target(y, 0.4), dft(y), atol=1e-9)

    def test_high_bins_zero(self, rng):
        y = rng.normal(size=16)
        z = plfm_target(y, 0.4)
        assert cutoff_bins(16, 0.4) == 4
        assert np.all(np.abs(z[~low_band_mask(16, 0.4)]) < 1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_weight_gradients(seed):
    rng = np.random.default_rng(seed)
    model = PLFM(TINY, seed=seed)
    windows = random_windows(rng, TINY, 3)
    batches = _Batches(model, windows)
    idx = np.arange(3)
    _, grads = _loss_and_grads(model, batches, idx)
    for k, v in model.parameters().items():
        fd = central_diff(lambda: _loss_and_grads(model, batches, idx, grad=False)[0], v)
        assert rel_err(grads[k], fd) < 1e-4, k


def test_constant_signal_fits():
    cfg = PlfmConfig(8, 4, patch_len=4, stride=2, hidden_dim=4)
    w = SeriesWindow(np.full((8, 1), 1.5), np.full((4, 1), 1.5), np.zeros((12, 0)), 0)
    hyper = TrainHyper(lr=2e-2, epochs=200, batch_size=1, schedule="cosine")
    model = train_plfm(cfg, [w], hyper, normalizer=Normalizer.identity(1))
    hist = model.history
    assert plfm_loss(model, [w]) < 1e-3
    assert hist["val"][-1] < hist["val"][0]


def test_training_deterministic(rng):
    windows = random_windows(rng, TINY, 20)
    hyper = TrainHyper(epochs=5, batch_size=4, seed=11)
    a = train_plfm(TINY, windows, hyper)
    b = train_plfm(TINY, windows, hyper)
    for k, v in a.parameters().items():
        assert np.array_equal(v, b.parameters()[k])
    assert a.checksum() == b.checksum()


def test_empty_training_set():
    with pytest.raises(InvalidInput):
        train_plfm(TINY, [])


def test_checkpoint_round_trip(tmp_path, rng):
    model = train_plfm(TINY, random_windows(rng, TINY, 8), TrainHyper(epochs=2))
    path = tmp_path / "m.json"
    digest = model.save(path)
    loaded = PLFM.load(path)
    assert loaded.checksum() == digest == model.checksum()
    x = rng.normal(size=(8, 1))
    np.testing.assert_array_equal(loaded.forward(x), model.forward(x))


def test_checkpoint_errors(tmp_path):
    with pytest.raises(MissingCheckpoint):
        PLFM.load(tmp_path / "absent.json")
    payload = PLFM(TINY).state_dict()
    payload["format"] = "other"
    (tmp_path / "bad.json").write_text(json.dumps(payload))
    with pytest.raises(IncompatibleCheckpoint):
        PLFM.load(tmp_path / "bad.json")
    payload = PLFM(TINY).state_dict()
    payload["config"]["hidden_dim"] = 5
    with pytest.raises(IncompatibleCheckpoint):
        PLFM.from_state_dict(payload)
