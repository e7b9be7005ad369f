import os
import subprocess
import sys

import numpy as np
import pytest

from bandcast import _backend

BACKENDS = _backend.available()
needs_cython = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")


def test_python_always_available():
    assert "python" in BACKENDS
    assert _backend.get("python").NAME == "python"
    with pytest.raises(ValueError):
        _backend.get("fortran")


@needs_cython
@pytest.mark.parametrize("shape", [(1, 1), (7, 1), (16, 3), (64, 2), (33, 8), (600, 1)])
def test_dft_idft_agree(rng, shape):
    cy, py = _backend.get("cython"), _backend.get("python")
    x = rng.normal(size=shape)
    z = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    np.testing.assert_allclose(cy.dft(x), py.dft(x), atol=1e-12 * shape[0])
    np.testing.assert_allclose(cy.idft(z), py.idft(z), atol=1e-12)


@pytest.mark.parametrize("name", BACKENDS)
def test_rejects_bad_shapes(name):
    k = _backend.get(name)
    for bad in (np.zeros(4), np.zeros((0, 2)), np.zeros((2, 3, 4))):
        with pytest.raises(ValueError):
            k.dft(bad)
        with pytest.raises(ValueError):
            k.idft(bad)
    with pytest.raises(ValueError):
        k.patch_dft(np.zeros((4, 1)), 5, 1)
    with pytest.raises(ValueError):
        k.faloss_grad(np.zeros(3), np.zeros(4))


@needs_cython
def test_faloss_grad_agrees(rng):
    cy, py = _backend.get("cython"), _backend.get("python")
    t = rng.normal(size=(4, 10, 2)) + 1j * rng.normal(size=(4, 10, 2))
    p = rng.normal(size=t.shape) + 1j * rng.normal(size=t.shape)
    # an exact match exercises the zero-modulus branch
    p[0, 0, 0] = t[0, 0, 0]
    lc, gc = cy.faloss_grad(t, p)
    lp, gp = py.faloss_grad(t, p)
    assert lc == pytest.approx(lp, rel=1e-12)
    np.testing.assert_allclose(gc, gp, atol=1e-14)


@needs_cython
@pytest.mark.parametrize("p, s", [(4, 2), (8, 4), (12, 6), (5, 3)])
def test_patch_dft_agrees(rng, p, s):
    x = rng.normal(size=(40, 6))
    np.testing.assert_allclose(_backend.get("cython").patch_dft(x, p, s),
                               _backend.get("python").patch_dft(x, p, s), atol=1e-11)


def test_env_forces_python():
    code = "import bandcast; print(bandcast.BACKEND)"
    env = dict(os.environ, BANDCAST_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
