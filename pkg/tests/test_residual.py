import numpy as np
import pytest

from bandcast.data import Normalizer, SeriesWindow, SplitSpec, SyntheticSpec, gen_synthetic, make_windows, split
from bandcast.errors import IncompatibleCheckpoint, InvalidInput
from bandcast.nn import TrainHyper
from bandcast.plfm import PLFM, PlfmConfig, train_plfm
from bandcast.residual import (
    MLPBackbone,
    ResidualLearner,
    _Batches,
    _loss_and_grads,
    combined_loss,
    residual_forward,
    train_residual,
)

from conftest import central_diff, rel_err, sinusoid


def test_zero_init_gives_zero(rng):
    bb = MLPBackbone(16, 4, 2)
    assert np.all(residual_forward(bb, rng.normal(size=(16, 2)), 0.4) == 0)


def test_shapes(rng):
    bb = MLPBackbone(12, 5, 3, hidden_dim=7, seed=1)
    assert residual_forward(bb, rng.normal(size=(12, 3)), 0.4).shape == (5, 3)
    assert residual_forward(bb, rng.normal(size=(4, 12, 3)), 0.4).shape == (4, 5, 3)
    with pytest.raises(InvalidInput):
        residual_forward(bb, rng.normal(size=(11, 3)), 0.4)


def test_full_band_leaves_bias_path(rng):
    bb = MLPBackbone(10, 3, 1, hidden_dim=4)
    for v in bb.parameters().values():
        v[...] = rng.normal(size=v.shape)
    p = bb.parameters()
    bias_only = (p["W2"] @ (p["b1"] / (1 + np.exp(-p["b1"]))) + p["b2"]).reshape(3, 1)
    for _ in range(3):
        np.testing.assert_allclose(residual_forward(bb, rng.normal(size=(10, 1)), 1.0), bias_only, atol=1e-12)


def _windows(rng, h, l, c, n):
    return [SeriesWindow(rng.normal(size=(h, c)), rng.normal(size=(l, c)), np.zeros((h + l, 0)), i) for i in range(n)]


@pytest.mark.parametrize("seed", range(5))
def test_backbone_gradients(seed):
    rng = np.random.default_rng(seed)
    cfg = PlfmConfig(8, 4, 2, patch_len=4, stride=2, hidden_dim=3)
    plfm = PLFM(cfg, seed=seed)
    bb = MLPBackbone(8, 4, 2, hidden_dim=3, seed=seed)
    bb.net.params["W2"][...] = rng.normal(size=bb.net.params["W2"].shape)
    batches = _Batches(plfm, _windows(rng, 8, 4, 2, 3), 0.4)
    idx = np.arange(3)
    _, grads = _loss_and_grads(bb, batches, idx)
    for k, v in bb.parameters().items():
        fd = central_diff(lambda: _loss_and_grads(bb, batches, idx, grad=False)[0], v)
        assert rel_err(grads[k], fd) < 1e-4, k


@pytest.fixture(scope="module")
def mixed():
    # period-4 component sits in the high band of an 8-step horizon
    ds = gen_synthetic(SyntheticSpec(400, 1, ((2, 1.0, 0.0), (100, 0.5, 0.4)), 0.02, 3))
    train, val, _ = split(make_windows(ds, 16, 8), SplitSpec())
    cfg = PlfmConfig(16, 8, patch_len=8, stride=4, hidden_dim=16)
    plfm = train_plfm(cfg, train, TrainHyper(epochs=20, lr=3e-3), val)
    return plfm, train, val


def test_training_freezes_plfm_and_helps(mixed):
    plfm, train, _ = mixed
    before = plfm.checksum()
    bb = MLPBackbone(16, 8, 1, hidden_dim=16)
    learner = train_residual(bb, plfm, train, TrainHyper(epochs=30, lr=3e-3))
    assert plfm.checksum() == before == learner.plfm_checksum
    assert combined_loss(plfm, learner, train) < combined_loss(plfm, None, train)


def test_full_band_never_worse_on_train(mixed):
    plfm, train, _ = mixed
    learner = train_residual(MLPBackbone(16, 8, 1, hidden_dim=4), plfm, train,
                             TrainHyper(epochs=10, lr=3e-3), keep_fraction=1.0)
    base = combined_loss(plfm, None, train)
    assert combined_loss(plfm, learner, train) <= base


def test_no_high_band_means_no_residual():
    # period-8 sinusoid: the horizon repeats the history and is entirely low band
    p = 8
    cfg = PlfmConfig(p, p, patch_len=p, stride=1, hidden_dim=p, activation="identity")
    plfm = PLFM(cfg, normalizer=Normalizer.identity(1))
    for branch in (plfm.real, plfm.imag):
        branch.params["W1"][...] = np.eye(p)
        branch.params["W2"][...] = np.eye(p)
    windows = []
    for i, phase in enumerate(np.linspace(0, 2 * np.pi, 12, endpoint=False)):
        x = sinusoid(p, 1, 1.0, phase)[:, None]
        windows.append(SeriesWindow(x, x.copy(), np.zeros((2 * p, 0)), i))
    learner = train_residual(MLPBackbone(p, p, 1, hidden_dim=6), plfm, windows, TrainHyper(epochs=20))
    res = np.stack([learner.token(w.history) for w in windows])
    target = np.stack([w.target for w in windows])
    assert np.linalg.norm(res) < 1e-2 * np.linalg.norm(target)


def test_empty_training_set(mixed):
    with pytest.raises(InvalidInput):
        train_residual(MLPBackbone(16, 8, 1), mixed[0], [])


def test_checkpoint_round_trip(tmp_path, mixed, rng):
    plfm, train, _ = mixed
    bb = MLPBackbone(16, 8, 1, hidden_dim=4, seed=5)
    bb.net.params["W2"][...] = rng.normal(size=bb.net.params["W2"].shape)
    learner = ResidualLearner(bb, 0.4, plfm.normalizer, plfm.checksum())
    digest = learner.save(tmp_path / "r.json")
    loaded = ResidualLearner.load(tmp_path / "r.json")
    assert loaded.checksum() == digest
    assert loaded.plfm_checksum == plfm.checksum()
    np.testing.assert_array_equal(loaded.token(train[0].history), learner.token(train[0].history))

    payload = learner.state_dict()
    payload["backbone"] = "itransformer"
    with pytest.raises(IncompatibleCheckpoint):
        ResidualLearner.from_state_dict(payload)
