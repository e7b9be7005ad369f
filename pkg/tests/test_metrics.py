import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from bandcast.metrics import evaluate, evaluate_windows, low_band_evaluate, summarize, to_csv
from bandcast.spectral import low_pass

from conftest import sinusoid

vectors = st.integers(1, 40).flatmap(
    lambda n: st.tuples(arrays(np.float64, n, elements=st.floats(-50, 50)),
                        arrays(np.float64, n, elements=st.floats(-50, 50)))
)


def test_perfect():
    assert evaluate([1.0, 2.0], [1.0, 2.0]) == {"mae": 0.0, "rmse": 0.0, "mape": 0.0}


def test_hand_values():
    assert evaluate([2.0, 0.0], [1.0, 1.0]) == {"mae": 1.0, "rmse": 1.0, "mape": 1.0}


def test_scaling(rng):
    p, t = rng.normal(size=10), rng.normal(size=10) + 3
    a, b = evaluate(p, t), evaluate(4 * p, 4 * t)
    assert b["mae"] == pytest.approx(4 * a["mae"])
    assert b["rmse"] == pytest.approx(4 * a["rmse"])
    assert b["mape"] == pytest.approx(a["mape"])


def test_mape_zero_truth_is_finite():
    assert np.isfinite(evaluate([1.0], [0.0])["mape"])


def test_shape_mismatch():
    with pytest.raises(ValueError):
        evaluate([1.0, 2.0], [1.0])


@given(vectors)
def test_mae_le_rmse(pair):
    p, t = pair
    m = evaluate(p, t)
    assert m["mae"] <= m["rmse"] * (1 + 1e-12) + 1e-12


def test_low_band_equal_signals():
    x = low_pass(np.random.default_rng(0).normal(size=32), 0.4)
    assert low_band_evaluate(x, x)["mae"] == 0.0


def test_low_band_ignores_high_band():
    t = sinusoid(64, 2)
    assert low_band_evaluate(t + 0.5 * sinusoid(64, 30), t, 0.4)["mae"] < 1e-9


def test_low_band_full_fraction(rng):
    p, t = rng.normal(size=16), rng.normal(size=16)
    for k, v in evaluate(p, t).items():
        assert low_band_evaluate(p, t, 1.0)[k] == pytest.approx(v, rel=1e-12)


def test_window_average(rng):
    p, t = rng.normal(size=(3, 8, 2)), rng.normal(size=(3, 8, 2))
    expected = np.mean([evaluate(p[i], t[i])["mae"] for i in range(3)])
    assert evaluate_windows(p, t)["mae"] == pytest.approx(expected)


def test_summarize():
    out = summarize([{"mae": 1.0}, {"mae": 2.0}, {"mae": 3.0}])
    assert out["mae"] == {"mean": 2.0, "std": 1.0}


def test_csv():
    text = to_csv([{"a": 1, "b": 0.1}, {"a": 2, "b": 1 / 3}], ["a", "b"])
    assert text == "a,b\n1,0.1\n2,0.3333333333333333\n"
