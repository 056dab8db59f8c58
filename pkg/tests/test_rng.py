import numpy as np
from scipy.special import ndtri

from reflect_sim import rng


def test_quantile_matches_scipy():
    p = np.concatenate([np.linspace(1e-12, 1e-3, 500), np.linspace(1e-3, 1 - 1e-3, 5000),
                        1 - np.linspace(1e-12, 1e-3, 500)])
    ref = ndtri(p)
    err = np.abs(rng.normal_quantile(p) - ref) / np.maximum(np.abs(ref), 1e-300)
    assert err[np.abs(ref) > 1e-6].max() < 1.15e-9


def test_streams_are_addressable():
    a = rng.normals(7, 3, 0, 100)
    assert np.array_equal(a, rng.normals(7, 3, 0, 100))
    assert not np.array_equal(a, rng.normals(7, 4, 0, 100))
    assert not np.array_equal(a, rng.normals(7, 3, 1, 100))
    assert not np.array_equal(a, rng.normals(8, 3, 0, 100))


def test_batch_rows_equal_single_paths():
    batch = rng.normals_batch(11, [5, 2, 9], 4, 64)
    for row, p in zip(batch, [5, 2, 9]):
        assert np.array_equal(row, rng.normals(11, p, 4, 64))


def test_prefix_stability():
    # a longer draw extends a shorter one
    assert np.array_equal(rng.normals(1, 0, 0, 10), rng.normals(1, 0, 0, 1000)[:10])


def test_uniforms_open_interval():
    u = rng.uniforms(0, 0, 0, 100000)
    assert u.min() > 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 4 * np.sqrt(1 / 12 / u.size)
