import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xrfdenoise.exceptions import DimensionError, InvariantError
from xrfdenoise.volume import (
    Abundance,
    CountVolume,
    Dictionary,
    PixelOrder,
    RateVolume,
    RgbImage,
    to_matrix,
    to_volume,
)


def test_single_pixel_matrix_is_the_spectrum():
    spectrum = np.array([[[3, 0, 7, 1]]])
    m = to_matrix(CountVolume(spectrum, 1.0))
    assert m.shape == (4, 1)
    np.testing.assert_array_equal(m[:, 0], [3, 0, 7, 1])


def test_row_major_pixel_order():
    a, b, c, d = 1.0, 2.0, 3.0, 4.0
    vol = np.array([[[a], [b]], [[c], [d]]])
    np.testing.assert_array_equal(to_matrix(vol), [[a, b, c, d]])


def test_one_row_volume():
    m = np.arange(5.0)[None, :]
    v = to_volume(m, 1, 5)
    assert v.shape == (1, 5, 1)
    np.testing.assert_array_equal(v[0, :, 0], np.arange(5.0))


def test_to_volume_dimension_mismatch():
    with pytest.raises(DimensionError):
        to_volume(np.zeros((3, 10)), 3, 4)


@settings(max_examples=60, deadline=None)
@given(
    h=st.integers(1, 16),
    w=st.integers(1, 16),
    c=st.integers(1, 32),
    seed=st.integers(0, 2**32 - 1),
)
def test_matrix_volume_roundtrip(h, w, c, seed):
    vol = np.random.default_rng(seed).random((h, w, c))
    np.testing.assert_array_equal(to_volume(to_matrix(vol), h, w), vol)
    m = to_matrix(vol)
    np.testing.assert_array_equal(to_matrix(to_volume(m, h, w)), m)


@settings(max_examples=30, deadline=None)
@given(h=st.integers(1, 40), w=st.integers(1, 40))
def test_pixel_order_bijection(h, w):
    order = PixelOrder(h, w)
    seen = set()
    for hh in range(h):
        for ww in range(w):
            n = order.index(hh, ww)
            assert order.coords(n) == (hh, ww)
            seen.add(n)
    assert seen == set(range(h * w))


def test_pixel_order_matches_to_matrix():
    vol = np.random.default_rng(0).random((3, 5, 2))
    order = PixelOrder(3, 5)
    m = to_matrix(vol)
    for h in range(3):
        for w in range(5):
            np.testing.assert_array_equal(m[:, order.index(h, w)], vol[h, w])


@pytest.mark.parametrize(
    "factory",
    [
        lambda: CountVolume(np.array([[[-1]]]), 1.0),
        lambda: CountVolume(np.array([[[1.5]]]), 1.0),
        lambda: CountVolume(np.ones((1, 1, 1)), 0.0),
        lambda: RateVolume(np.array([[[-1.0]]])),
        lambda: RateVolume(np.array([[[np.nan]]])),
        lambda: RgbImage(np.full((1, 1, 3), 1.5)),
        lambda: Dictionary(np.array([[-0.1]])),
        lambda: Abundance(np.array([[1.0]]), np.array([[False]])),
    ],
)
def test_invariant_violations(factory):
    with pytest.raises(InvariantError):
        factory()


def test_types_are_read_only():
    v = RateVolume(np.ones((2, 2, 2)))
    with pytest.raises(ValueError):
        v.data[0, 0, 0] = 5.0


def test_abundance_default_mask_all_true():
    a = Abundance(np.zeros((2, 3)))
    assert a.active.all()


def test_dictionary_zero_atoms():
    d = Dictionary(np.array([[1.0, 0.0, 0.0], [2.0, 0.0, 1.0]]))
    np.testing.assert_array_equal(d.zero_atoms(), [1])
