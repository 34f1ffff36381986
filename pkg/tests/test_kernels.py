import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hoverdepth import kernels

needs_cython = pytest.mark.skipif("cython" not in kernels.available_backends(), reason="extension not built")


def _homographies(rng, k, v):
    H = np.tile(np.eye(3), (k, v, 1, 1))
    H[..., :2, 2] += rng.uniform(-6, 6, (k, v, 2))
    H[..., :2, :2] += rng.normal(0, 0.02, (k, v, 2, 2))
    H[..., 2, :2] += rng.normal(0, 1e-3, (k, v, 2))
    return H


def test_backend_selection():
    assert kernels.BACKEND in kernels.available_backends()
    with pytest.raises(ValueError):
        kernels.backend_module("fortran")


def test_pure_python_override():
    env = dict(os.environ, HOVERDEPTH_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from hoverdepth import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_cython
@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3), st.integers(0, 4))
def test_bilateral_parity(seed, channels, radius):
    img = np.random.default_rng(seed).uniform(0, 255, (11, 13, channels))
    a = kernels.bilateral_filter(img, 2.0, 20.0, radius, backend="python")
    b = kernels.bilateral_filter(img, 2.0, 20.0, radius, backend="cython")
    assert np.allclose(a, b, rtol=1e-12, atol=1e-10)


@needs_cython
@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1.0, 80.0))
def test_region_grow_parity(seed, threshold):
    img = np.random.default_rng(seed).integers(0, 6, (14, 17, 3)).astype(float) * 20
    a = kernels.region_grow(img, threshold, backend="python")
    b = kernels.region_grow(img, threshold, backend="cython")
    assert np.array_equal(a, b)


@needs_cython
@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_photometric_parity(seed):
    rng = np.random.default_rng(seed)
    nv = int(rng.integers(2, 6))
    images = rng.uniform(0, 255, (nv, 20, 24))
    grads = rng.uniform(0, 30, (nv, 20, 24))
    H = _homographies(rng, 5, nv)
    w = rng.uniform(0.1, 1, nv)
    w /= w.sum()
    xs = rng.uniform(0, 23, 40)
    ys = rng.uniform(0, 19, 40)
    a = kernels.photometric_costs(images, grads, H, w, xs, ys, backend="python")
    b = kernels.photometric_costs(images, grads, H, w, xs, ys, backend="cython")
    assert np.allclose(a[0], b[0], rtol=1e-10, atol=1e-9)
    assert np.allclose(a[1], b[1], rtol=1e-10, atol=1e-9)
    assert np.array_equal(a[2], b[2])


@pytest.mark.parametrize("backend", kernels.available_backends())
def test_photometric_two_samples(backend):
    images = np.stack([np.full((4, 4), 10.0), np.full((4, 4), 20.0)])
    H = np.tile(np.eye(3), (1, 2, 1, 1))
    psi_i, psi_g, bad = kernels.photometric_costs(images, np.zeros_like(images), H, np.array([0.5, 0.5]),
                                                  np.array([1.0, 2.5]), np.array([1.0, 1.5]), backend=backend)
    assert psi_i[0] == pytest.approx(50.0) and psi_g[0] == 0.0 and bad[0] == 0


@pytest.mark.parametrize("backend", kernels.available_backends())
def test_photometric_out_of_bounds(backend):
    images = np.stack([np.arange(16.0).reshape(4, 4)] * 2)
    H = np.tile(np.eye(3), (1, 2, 1, 1))
    H[0, 1, 0, 2] = 10.0  # second view misses the image entirely
    _, _, bad = kernels.photometric_costs(images, images, H, np.array([0.5, 0.5]), np.array([0.0, 3.0]),
                                          np.array([0.0, 3.0]), backend=backend)
    assert bad[0] == 2
