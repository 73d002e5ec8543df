import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import entry_face_fractions
from shadowfield.weights import (LIGHT_CELL, init_weights_2d, init_weights_3d, load_weights,
                                 planar_weights, save_weights, weights_at)


@pytest.fixture(scope="module")
def cache():
    return init_weights_3d((64, 64, 16))


@pytest.mark.parametrize("k", [1, 2, 7, 16])
def test_diagonal_is_uniform(cache, k):
    np.testing.assert_allclose(weights_at(cache, (k, k, k)), (1 / 3,) * 3, atol=1e-9)


def test_offset_211_matches_ray_fractions(cache):
    frac = entry_face_fractions((2, 1, 1), 100_000, np.random.default_rng(0))
    np.testing.assert_allclose(weights_at(cache, (2, 1, 1)), frac, atol=0.05)


def test_long_x_offset_dominated_by_x(cache):
    w = weights_at(cache, (50, 1, 1))
    frac = entry_face_fractions((50, 1, 1), 100_000, np.random.default_rng(0))
    assert w[0] > 0.9
    assert frac[0] > 0.9


def test_2d_weights_examples():
    c = init_weights_2d((4, 4))
    np.testing.assert_allclose(weights_at(c, (1, 1)), (0.5, 0.5), atol=1e-12)
    np.testing.assert_allclose(weights_at(c, (2, 1)), (0.694, 0.306), atol=5e-4)
    np.testing.assert_allclose(weights_at(c, (1, 2)), (0.306, 0.694), atol=5e-4)


def test_2d_weights_against_rays():
    frac = entry_face_fractions((2, 1), 100_000, np.random.default_rng(1))
    np.testing.assert_allclose(weights_at(init_weights_2d((4, 4)), (2, 1)), frac, atol=0.05)


def test_2d_angle_additivity():
    i, j = np.meshgrid(np.arange(1, 30), np.arange(1, 30), indexing="ij")
    wx, wy = planar_weights(i.astype(float), j.astype(float))
    np.testing.assert_allclose(wx + wy, 1.0, atol=1e-12)


def test_reflection_symmetry(cache):
    assert weights_at(cache, (-2, 1, 1)) == weights_at(cache, (2, 1, 1))
    assert weights_at(cache, (-3, -5, -2)) == weights_at(cache, (3, 5, 2))


def test_light_cell_sentinel(cache):
    assert weights_at(cache, (0, 0, 0)) is LIGHT_CELL


def test_out_of_extent(cache):
    with pytest.raises(IndexError):
        weights_at(cache, (65, 0, 0))


def test_degenerate_offsets(cache):
    assert weights_at(cache, (5, 0, 0)) == (1.0, 0.0, 0.0)
    assert weights_at(cache, (0, 0, 3)) == (0.0, 0.0, 1.0)
    w2 = weights_at(init_weights_2d((4, 4)), (2, 1))
    np.testing.assert_allclose(weights_at(cache, (2, 1, 0)), (w2[0], w2[1], 0.0), atol=1e-12)
    np.testing.assert_allclose(weights_at(cache, (0, 2, 1)), (0.0, w2[0], w2[1]), atol=1e-12)


def test_all_weights_in_unit_interval(cache):
    for w in (cache.w_r, cache.w_b, cache.w_g):
        assert np.all((w >= 0) & (w <= 1))


@given(st.integers(1, 64), st.integers(1, 64), st.integers(1, 16))
def test_normalization_exact_in_float(x, y, z):
    c = init_weights_3d((64, 64, 16))
    wr, wb, wg = weights_at(c, (x, y, z))
    assert (wr + wb) + wg == 1.0


def test_resolution_independence():
    # only integer offsets enter; two builds with different extents agree
    a = init_weights_3d((8, 8, 8))
    b = init_weights_3d((20, 10, 9))
    for off in [(1, 2, 3), (8, 1, 4), (5, 5, 1)]:
        assert weights_at(a, off) == weights_at(b, off)


def test_cache_file_roundtrip(tmp_path, cache):
    small = init_weights_3d((6, 5, 4))
    save_weights(small, tmp_path / "w.sfw")
    back = load_weights(tmp_path / "w.sfw")
    assert back.extents == small.extents
    np.testing.assert_allclose(back.w_r, small.w_r, atol=1e-7)
    np.testing.assert_allclose(back.w_b, small.w_b, atol=1e-7)
    total = (back.w_r + back.w_b) + back.w_g
    assert total[0, 0, 0] == 0.0          # light cell carries no weights
    total[0, 0, 0] = 1.0
    assert np.all(total == 1.0)
