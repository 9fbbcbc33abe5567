import numpy as np
import pytest
from conftest import load_ciede_pairs
from skimage.color import deltaE_ciede2000

from colourvq import kernels
from colourvq.kernels import _pykernels

try:
    from colourvq.kernels import _ckernels
except ImportError:
    _ckernels = None


def brute_force_nearest(z, codebook, lesioned):
    out = np.empty(len(z), dtype=np.int64)
    for i, row in enumerate(z):
        best, best_d = -1, np.inf
        for k, e in enumerate(codebook):
            if lesioned[k]:
                continue
            d = float(np.sum((row - e) ** 2))
            if d < best_d:
                best, best_d = k, d
        out[i] = best
    return out


def test_backend_selection_round_trips():
    previous = kernels.use_backend("python")
    assert kernels.active_backend() == "python"
    kernels.use_backend(previous)
    assert kernels.active_backend() == previous


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.use_backend("gpu")


def test_compiled_backend_is_default_when_built():
    if "compiled" not in kernels.available_backends():
        pytest.skip("extension not built")
    assert kernels.active_backend() == "compiled"


def test_ciede_backends_agree():
    if _ckernels is None:
        pytest.skip("extension not built")
    rng = np.random.default_rng(0)
    a = rng.uniform([0, -128, -128], [100, 128, 128], size=(5000, 3))
    b = rng.uniform([0, -128, -128], [100, 128, 128], size=(5000, 3))
    lab1, lab2, _ = load_ciede_pairs()
    a, b = np.vstack([a, lab1]), np.vstack([b, lab2])
    assert np.allclose(_ckernels.ciede2000(a, b), _pykernels.ciede2000(a, b), atol=1e-10, rtol=0)


def test_nearest_code_matches_brute_force(backend):
    rng = np.random.default_rng(1)
    for K in (1, 2, 7, 64):
        codebook = rng.normal(size=(K, 5))
        z = rng.normal(size=(40, 5))
        lesioned = np.zeros(K, dtype=bool)
        if K > 1:
            lesioned[rng.integers(K)] = True
        got = kernels.nearest_code(z, codebook, lesioned)
        assert np.array_equal(got, brute_force_nearest(z, codebook, lesioned))


def test_nearest_code_ties_pick_lowest_index(backend):
    codebook = np.array([[1.0, 0.0], [-1.0, 0.0], [1.0, 0.0]])
    z = np.array([[0.0, 0.0], [1.0, 0.0]])
    assert kernels.nearest_code(z, codebook, np.zeros(3, dtype=bool)).tolist() == [0, 0]
    assert kernels.nearest_code(z, codebook, np.array([True, False, False])).tolist() == [1, 2]


def test_hue_seam_handled_identically(backend):
    # b* a hair below zero puts the hue just under 360 degrees
    lab1 = np.array([[0.0, 1.0, -3.7e-31], [50.0, 20.0, -1e-300]])
    lab2 = np.array([[0.0, -1.0, 0.0], [50.0, -20.0, 1e-3]])
    ref = deltaE_ciede2000(lab1, lab2)
    assert np.allclose(kernels.ciede2000(lab1, lab2), ref, atol=1e-9)
