import numpy as np
import pytest

from bandcast.errors import DivergedTraining
from bandcast.nn import ACTIVATIONS, MLP, Adam, TrainHyper, fit

from conftest import central_diff, rel_err


@pytest.mark.parametrize("act", ACTIVATIONS)
def test_mlp_gradient(act):
    rng = np.random.default_rng(0)
    net = MLP(5, 4, 3, act, rng)
    x = rng.normal(size=(6, 5))
    w = rng.normal(size=(6, 3))

    def loss():
        return float(np.sum(net(x) * w))

    out, cache = net.forward(x)
    grads = net.backward(cache, w)
    for k, v in net.params.items():
        assert rel_err(grads[k], central_diff(loss, v)) < 1e-6, k


def test_zero_output_layer():
    net = MLP(4, 3, 2, zero_output=True)
    assert np.all(net(np.ones((5, 4))) == 0)


def test_xavier_bounds():
    net = MLP(30, 20, 10, rng=np.random.default_rng(1))
    limit = np.sqrt(6.0 / (30 + 20))
    assert np.abs(net.params["W1"]).max() <= limit
    assert net.num_params() == 20 * 30 + 20 + 10 * 20 + 10


def test_unknown_activation():
    with pytest.raises(ValueError):
        MLP(2, 2, 2, "relu6")


def test_adam_first_step_is_lr_sign():
    p = {"w": np.array([1.0, -2.0])}
    Adam(p, lr=0.1).step({"w": np.array([3.0, -0.5])})
    np.testing.assert_allclose(p["w"], [0.9, -1.9], atol=1e-6)


def test_adam_minimizes_quadratic():
    p = {"w": np.array([5.0, -3.0])}
    opt = Adam(p, lr=0.1)
    for _ in range(500):
        opt.step({"w": 2 * p["w"]})
    assert np.abs(p["w"]).max() < 1e-2


@pytest.mark.parametrize("kw", [{"lr": 0}, {"batch_size": 0}, {"epochs": 0}, {"schedule": "step"}])
def test_hyper_validation(kw):
    with pytest.raises(ValueError):
        TrainHyper(**kw)


def _linear_problem(seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(64, 3))
    y = x @ np.array([1.0, -2.0, 0.5])
    params = {"w": np.zeros(3)}

    def step(idx):
        r = x[idx] @ params["w"] - y[idx]
        return float(np.mean(r**2)), {"w": 2 * x[idx].T @ r / len(idx)}

    def val():
        return float(np.mean((x @ params["w"] - y) ** 2))

    return params, step, val


def test_fit_deterministic_and_selects_best():
    runs = []
    for _ in range(2):
        params, step, val = _linear_problem()
        hist = fit(params, step, val, 64, TrainHyper(lr=0.05, batch_size=8, epochs=30, seed=4))
        runs.append((params["w"].copy(), hist))
    assert np.array_equal(runs[0][0], runs[1][0])
    hist = runs[0][1]
    assert len(hist["val"]) == 31
    assert hist["val"][hist["best_epoch"]] == min(hist["val"])


def test_fit_keeps_initial_state_when_nothing_improves():
    params = {"w": np.zeros(2)}
    hist = fit(params, lambda idx: (1.0, {"w": np.ones(2)}), lambda: float(np.sum(params["w"] ** 2)),
               4, TrainHyper(epochs=5))
    assert hist["best_epoch"] == 0
    assert np.all(params["w"] == 0)


def test_fit_patience_stops_early():
    params = {"w": np.zeros(2)}
    hist = fit(params, lambda idx: (1.0, {"w": np.ones(2)}), lambda: float(np.sum(params["w"] ** 2)),
               4, TrainHyper(epochs=50, patience=3))
    assert len(hist["val"]) == 4


def test_fit_diverged():
    params = {"w": np.zeros(1)}
    with pytest.raises(DivergedTraining) as info:
        fit(params, lambda idx: (float("nan"), {"w": np.ones(1)}), lambda: 0.0, 4, TrainHyper(epochs=3))
    assert info.value.epoch == 1


def test_cosine_schedule_anneals():
    seen = []
    params = {"w": np.zeros(1)}

    def step(idx):
        seen.append(params["w"][0])
        return 1.0, {"w": np.ones(1)}

    fit(params, step, lambda: 0.0, 1, TrainHyper(lr=0.1, epochs=4, schedule="cosine"))
    deltas = -np.diff(seen + [params["w"][0]])
    # first step uses the full rate; later steps shrink
    assert deltas[0] == pytest.approx(0.1, rel=1e-6)
    assert np.all(np.diff(deltas[:3]) < 0)
