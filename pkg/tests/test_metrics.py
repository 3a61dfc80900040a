import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xrfdenoise.exceptions import DimensionError
from xrfdenoise.metrics import (
    band_map,
    default_bands,
    evaluate,
    mse,
    pnll_metric,
    psnr,
    self_pnll,
)
from xrfdenoise.volume import CountVolume, RateVolume


def _rates(seed, shape=(3, 4, 5), scale=10.0):
    return RateVolume(np.random.default_rng(seed).random(shape) * scale)


def test_mse_identity_and_constant():
    v = _rates(0)
    assert mse(v, v) == 0.0
    assert mse(np.full((2, 2, 2), 3.0), np.zeros((2, 2, 2))) == 9.0


def test_mse_matches_loop():
    a, b = _rates(1).data, _rates(2).data
    total = 0.0
    for x, y in zip(a.ravel(), b.ravel()):
        total += (x - y) ** 2
    assert mse(a, b) == pytest.approx(total / a.size, rel=1e-12)


def test_mse_shape_mismatch():
    with pytest.raises(DimensionError):
        mse(np.zeros((2, 2, 2)), np.zeros((2, 2, 3)))


def test_psnr_values():
    gt = np.zeros((1, 1, 2))
    gt[0, 0, 0] = 2.0
    est = gt.copy()
    est[0, 0, 1] = math.sqrt(8.0)  # mse = 4 = peak^2
    assert psnr(est, gt) == pytest.approx(0.0, abs=1e-12)
    assert psnr(gt, gt) == math.inf


def test_psnr_halving_mse_adds_3db():
    gt = np.full((2, 2, 1), 5.0)
    e1 = gt + 1.0
    e2 = gt + math.sqrt(0.5)
    assert psnr(e2, gt) - psnr(e1, gt) == pytest.approx(10 * math.log10(2), rel=1e-12)
    assert 10 * math.log10(2) == pytest.approx(3.0103, abs=1e-4)


def test_psnr_matches_formula():
    a, b = _rates(3).data, _rates(4).data
    expected = 10 * math.log10(b.max() ** 2 / np.mean((a - b) ** 2))
    assert psnr(a, b) == pytest.approx(expected, rel=1e-12)
    assert psnr(a, b, peak=7.0) == pytest.approx(10 * math.log10(49 / mse(a, b)), rel=1e-12)


def test_psnr_rejects_bad_peak():
    with pytest.raises(ValueError):
        psnr(np.ones((1, 1, 1)), np.zeros((1, 1, 1)))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_mse_symmetric_and_psnr_decreasing(seed):
    a, b = _rates(seed).data, _rates(seed + 1).data
    assert mse(a, b) == mse(b, a)
    assert psnr(a + 0.5 * (b - a), b) > psnr(a, b)


def test_pnll_at_empirical_rate_is_floor():
    counts = CountVolume(np.array([[[0, 3, 10]]]), 0.5)
    x = np.array([0.0, 3.0, 10.0])
    expected = np.mean(x - x * np.log(x + 1e-8))
    assert pnll_metric(counts.data / 0.5, counts) == pytest.approx(expected, rel=1e-14)
    assert self_pnll(counts) == pnll_metric(counts.data / 0.5, counts)


def test_pnll_zero_everything():
    counts = CountVolume(np.zeros((2, 2, 2), dtype=np.int64), 1.0)
    assert pnll_metric(np.zeros((2, 2, 2)), counts) == 0.0


def test_pnll_matches_loop():
    rng = np.random.default_rng(5)
    counts = CountVolume(rng.integers(0, 20, (3, 3, 4)), 0.25)
    est = rng.random((3, 3, 4)) * 40
    total = 0.0
    for e, x in zip(est.ravel(), counts.data.ravel()):
        total += 0.25 * e - float(x) * math.log(0.25 * e + 1e-8)
    assert pnll_metric(est, counts) == pytest.approx(total / est.size, rel=1e-12)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), delta=st.floats(1e-3, 0.5))
def test_pnll_minimized_at_empirical_rate(seed, delta):
    rng = np.random.default_rng(seed)
    counts = CountVolume(rng.integers(1, 50, (2, 2, 3)), 0.1)
    base = counts.data / counts.dwell
    floor = pnll_metric(base, counts)
    for sign in (1, -1):
        assert pnll_metric(base * (1 + sign * delta), counts) > floor


def test_band_map_examples():
    v = _rates(6, (3, 4, 6))
    np.testing.assert_allclose(band_map(v, (0, 6)), v.data.sum(axis=2))
    np.testing.assert_array_equal(band_map(v, (2, 3)), v.data[:, :, 2])
    np.testing.assert_allclose(band_map(v, (0, 2)) + band_map(v, (2, 6)), band_map(v, (0, 6)))


def test_band_map_is_linear():
    a, b = _rates(7, (2, 3, 5)).data, _rates(8, (2, 3, 5)).data
    np.testing.assert_allclose(band_map(2 * a + 3 * b, (1, 4)),
                               2 * band_map(a, (1, 4)) + 3 * band_map(b, (1, 4)))


@pytest.mark.parametrize("band", [(2, 2), (3, 1), (-1, 2), (0, 7)])
def test_band_map_rejects_bad_bands(band):
    with pytest.raises(ValueError):
        band_map(np.zeros((1, 1, 6)), band)


def test_default_bands_cover_channels():
    bands = default_bands(32)
    assert bands[0][0] == 0 and bands[-1][1] == 32 and len(bands) == 8
    assert all(a[1] == b[0] for a, b in zip(bands, bands[1:]))
    assert default_bands(3) == [(0, 1), (1, 2), (2, 3)]


def test_evaluate_gt_against_itself():
    gt = _rates(9)
    res = evaluate(gt, gt, bands=default_bands(5, 2))
    assert res.mse == 0.0 and res.psnr == math.inf
    d = json.loads(res.to_json())
    assert d["psnr"] == "inf" and d["mse"] == 0.0
    assert all(b["psnr"] == "inf" for b in d["bands"])


def test_evaluate_with_counts_and_csv():
    gt = _rates(10)
    counts = CountVolume(np.rint(gt.data * 2), 2.0)
    est = _rates(11)
    res = evaluate(est, gt, counts, bands=[(0, 2), (2, 5)])
    assert res.pnll == pnll_metric(est, counts)
    assert res.pnll_floor == self_pnll(counts)
    rows = res.to_csv().strip().split("\n")
    assert rows[0] == "band,mse,psnr,pnll" and len(rows) == 4
    assert rows[1].startswith("all,")


def test_evaluate_shape_mismatch():
    with pytest.raises(DimensionError):
        evaluate(_rates(0, (2, 2, 2)), _rates(0, (2, 2, 3)))
