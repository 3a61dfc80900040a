import numpy as np
import pytest
from scipy import stats

from xrfdenoise import kernels
from xrfdenoise.exceptions import InvariantError
from xrfdenoise.scansim import (
    REFERENCE_DWELL,
    SimConfig,
    ground_truth_rates,
    simulate_scan,
    speedup_dwell,
)
from xrfdenoise.volume import CountVolume, RateVolume


def _flat(rate, n, channels=1):
    return RateVolume(np.full((n // channels, 1, channels), float(rate)))


def test_ground_truth_rate_arithmetic():
    y = CountVolume(np.full((1, 1, 1), 57), 0.285)
    assert ground_truth_rates(y).data[0, 0, 0] == pytest.approx(200.0, rel=1e-15)


def test_ground_truth_zero_counts():
    y = CountVolume(np.zeros((3, 2, 4)), 0.1)
    assert not ground_truth_rates(y).data.any()


def test_rates_times_dwell_recover_counts():
    counts = np.random.default_rng(0).integers(0, 5000, (6, 5, 7))
    y = CountVolume(counts, 0.285)
    back = ground_truth_rates(y).data * y.dwell
    np.testing.assert_array_equal(np.rint(back), counts)
    np.testing.assert_allclose(back, counts, rtol=1e-14)


def test_zero_rate_gives_zero_counts():
    for seed in (0, 1, 2**63 + 5):
        out = simulate_scan(RateVolume(np.zeros((4, 4, 3))), SimConfig(1.0, seed))
        assert not out.data.any()
        assert out.dwell == 1.0


def test_poisson_moments_at_57():
    n = 100_000
    out = simulate_scan(_flat(200.0, n, channels=10), SimConfig(0.285, 11)).data.ravel()
    sigma = np.sqrt(57.0 / n)
    assert abs(out.mean() - 57.0) <= 3 * sigma
    assert abs(out.var() / 57.0 - 1.0) <= 0.05


def test_same_seed_same_counts_different_seed_differs():
    rates = RateVolume(np.random.default_rng(1).random((8, 8, 8)) * 50)
    a = simulate_scan(rates, SimConfig(0.1, 3))
    b = simulate_scan(rates, SimConfig(0.1, 3))
    c = simulate_scan(rates, SimConfig(0.1, 4))
    assert a == b
    assert a != c


def test_voxel_stream_independent_of_volume_shape():
    # the stream of voxel (h, w, c) depends only on its coordinates and the seed
    big = np.random.default_rng(2).random((6, 7, 5)) * 30
    full = simulate_scan(RateVolume(big), SimConfig(1.0, 9)).data
    crop = simulate_scan(RateVolume(big[:3, :4, :2]), SimConfig(1.0, 9)).data
    np.testing.assert_array_equal(full[:3, :4, :2], crop)


def test_thread_count_does_not_change_counts():
    rates = RateVolume(np.random.default_rng(4).random((16, 16, 16)) * 80)
    outs = []
    for threads in (1, 2, 4):
        with kernels.thread_limit(threads):
            outs.append(simulate_scan(rates, SimConfig(0.5, 123)).data)
    for other in outs[1:]:
        np.testing.assert_array_equal(outs[0], other)


def test_mean_overflow_rejected():
    with pytest.raises(InvariantError):
        simulate_scan(RateVolume(np.full((1, 1, 1), 3e9)), SimConfig(1.0, 0))


def test_sim_config_validation():
    with pytest.raises(InvariantError):
        SimConfig(0.0, 1)
    with pytest.raises(InvariantError):
        SimConfig(1.0, -1)


@pytest.mark.parametrize(
    "factor, expected",
    [(5, 0.057), (100, 0.00285), (20, 0.01425)],
)
def test_speedup_dwell_values(factor, expected):
    assert speedup_dwell(REFERENCE_DWELL, factor) == expected
    assert repr(speedup_dwell(REFERENCE_DWELL, factor)) == repr(expected)


def test_speedup_below_one_rejected():
    with pytest.raises(ValueError):
        speedup_dwell(0.285, 0.5)


def test_superposition_two_half_dwells_match_one_full_dwell():
    n = 50_000
    rates = _flat(8.0, n, channels=10)
    half_a = simulate_scan(rates, SimConfig(0.5, 1)).data.astype(np.int64).ravel()
    half_b = simulate_scan(rates, SimConfig(0.5, 2)).data.astype(np.int64).ravel()
    full = simulate_scan(rates, SimConfig(1.0, 3)).data.astype(np.int64).ravel()
    summed = half_a + half_b
    # both are Poisson(8): compare means and variances with their sampling errors
    se_mean = np.sqrt(8.0 / n + 8.0 / n)
    assert abs(summed.mean() - full.mean()) <= 3 * se_mean
    # var of the sample variance of Poisson(mu) is (mu + 2 mu^2) / n
    se_var = np.sqrt(2 * (8.0 + 2 * 64.0) / n)
    assert abs(summed.var() - full.var()) <= 3 * se_var


@pytest.mark.parametrize("mean", [0.1, 1.0, 10.0, 1000.0])
def test_chi_squared_goodness_of_fit(mean):
    n = 10_000
    draws = simulate_scan(_flat(mean, n), SimConfig(1.0, 77)).data.ravel()
    p = poisson_gof_pvalue(draws, mean)
    assert p > 0.01


def poisson_gof_pvalue(draws, mean, min_expected=5.0):
    """Pearson chi-squared p-value of ``draws`` against Poisson(mean), tail bins pooled."""
    n = draws.size
    lo, hi = int(stats.poisson.ppf(1e-9, mean)), int(stats.poisson.isf(1e-9, mean)) + 1
    ks = np.arange(lo, hi + 1)
    probs = stats.poisson.pmf(ks, mean)
    probs[0] += stats.poisson.cdf(lo - 1, mean)
    probs[-1] += stats.poisson.sf(hi, mean)
    observed = np.bincount(np.clip(draws, lo, hi) - lo, minlength=ks.size).astype(float)
    expected = probs * n
    # pool adjacent bins until every expected count reaches min_expected
    obs_b, exp_b = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            obs_b.append(acc_o)
            exp_b.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0:
        obs_b[-1] += acc_o
        exp_b[-1] += acc_e
    obs_b, exp_b = np.array(obs_b), np.array(exp_b)
    exp_b *= obs_b.sum() / exp_b.sum()
    return stats.chisquare(obs_b, exp_b).pvalue
