import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fedcert import deform, smoothing
from fedcert.smoothing import ABSTAIN, CertifyConfig, SmoothingConfig

import oracles

def constant(c):
    return lambda batch: np.full(len(batch), c)


def threshold(t):
    return lambda batch: (np.asarray(batch).reshape(len(batch), -1)[:, 0] > t).astype(int)


# --- quantile -----------------------------------------------------------------

def test_quantile_reference_values():
    assert smoothing.inv_std_normal_cdf(0.5) == 0.0
    expected = oracles.normal_quantile_bisect(0.975)
    assert expected == pytest.approx(1.95996398, abs=1e-8)
    assert smoothing.inv_std_normal_cdf(0.975) == pytest.approx(expected, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.5, 1 - 1e-9))
def test_quantile_is_antisymmetric(p):
    # 1 - p is exact here, so the reflection is bitwise
    assert smoothing.inv_std_normal_cdf(1 - p) == -smoothing.inv_std_normal_cdf(p)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-4, 1 - 1e-4))
def test_quantile_antisymmetry_with_rounded_complement(p):
    assert smoothing.inv_std_normal_cdf(1 - p) == pytest.approx(-smoothing.inv_std_normal_cdf(p), abs=1e-12)


def test_quantile_inverts_series_cdf_on_a_grid():
    p = np.concatenate([np.logspace(-9, -1, 200), np.linspace(0.05, 0.95, 200), 1 - np.logspace(-9, -1, 200)])
    x = smoothing.inv_std_normal_cdf(p)
    assert np.max(np.abs(oracles.normal_cdf_series(x) - p)) < 1e-10


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_quantile_rejects_out_of_range(p):
    with pytest.raises(ValueError):
        smoothing.inv_std_normal_cdf(p)


# --- Clopper-Pearson ----------------------------------------------------------

def test_clopper_pearson_reference_values():
    assert smoothing.clopper_pearson_lower(0, 10, 0.05) == 0.0
    assert smoothing.clopper_pearson_lower(100, 100, 0.001) == pytest.approx(0.001 ** 0.01, abs=1e-12)
    assert 0.001 ** 0.01 == pytest.approx(0.933254, abs=1e-6)
    assert smoothing.clopper_pearson_lower(1, 2, 0.05) == pytest.approx(1 - math.sqrt(0.95), abs=1e-12)
    assert smoothing.clopper_pearson_lower(1, 2, 0.05) == pytest.approx(0.025321, abs=1e-6)


@pytest.mark.parametrize("k,n", [(5, 7), (0, 3), (20, 20), (13, 41)])
def test_clopper_pearson_matches_bisection(k, n):
    for alpha in (0.05, 0.001):
        assert smoothing.clopper_pearson_lower(k, n, alpha) == pytest.approx(
            oracles.clopper_pearson_bisect(k, n, alpha), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 300), st.data())
def test_clopper_pearson_properties(n, data):
    k = data.draw(st.integers(0, n))
    lo = smoothing.clopper_pearson_lower(k, n, 0.01)
    assert 0 <= lo <= k / n
    if k < n:
        assert smoothing.clopper_pearson_lower(k + 1, n, 0.01) > lo
    if k > 0:
        assert smoothing.clopper_pearson_lower(k, n, 0.001) < lo


@pytest.mark.parametrize("k,n,alpha", [(-1, 5, 0.1), (6, 5, 0.1), (1, 0, 0.1), (1, 5, 0.0), (1, 5, 1.0)])
def test_clopper_pearson_rejects_invalid(k, n, alpha):
    with pytest.raises(ValueError):
        smoothing.clopper_pearson_lower(k, n, alpha)


# --- radii --------------------------------------------------------------------

def test_radius_l2_examples():
    assert smoothing.radius_l2(0.5, 0.5, 1.0) == 0.0
    expected = 0.25 * 2 * oracles.normal_quantile_bisect(0.99)
    assert expected == pytest.approx(1.163174, abs=1e-6)
    assert smoothing.radius_l2(0.99, 0.01, 0.5) == pytest.approx(expected, abs=1e-12)
    assert smoothing.radius_l2(0.8, 0.2, 0.3) == pytest.approx(0.3 * smoothing.inv_std_normal_cdf(0.8), abs=1e-14)


def test_radius_l1_examples():
    assert smoothing.radius_l1_uniform(0.4, 0.4, 0.5) == 0.0
    assert smoothing.radius_l1_uniform(1.0, 0.0, 0.7) == 0.7
    assert smoothing.radius_l1_uniform(0.8, 0.2, 0.1) == pytest.approx(0.06, abs=1e-15)


@pytest.mark.parametrize("fn", [smoothing.radius_l2, smoothing.radius_l1_uniform])
def test_radius_rejects_invalid(fn):
    with pytest.raises(ValueError):
        fn(0.3, 0.6, 1.0)
    with pytest.raises(ValueError):
        fn(1.5, 0.2, 1.0)
    with pytest.raises(ValueError):
        fn(0.7, 0.2, 0.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.floats(0.01, 0.99), st.floats(0.05, 3))
def test_radii_monotone_and_linear_in_sigma(a, b, c, sigma):
    pb, pa1, pa2 = sorted([a, b, c])
    for fn in (smoothing.radius_l2, smoothing.radius_l1_uniform):
        # nondecreasing in p_A, nonincreasing in p_B
        assert fn(pa2, pb, sigma) >= fn(pa1, pb, sigma) - 1e-15
        assert fn(pa2, pb, sigma) >= fn(pa2, pa1, sigma) - 1e-15
        assert fn(pa2, pb, 2 * sigma) == pytest.approx(2 * fn(pa2, pb, sigma), rel=1e-12, abs=1e-15)


def test_p_b_complement_reduces_to_sigma_quantile():
    for p in (0.6, 0.9, 0.999):
        assert smoothing.radius_l2(p, 1 - p, 0.4) == pytest.approx(0.4 * smoothing.inv_std_normal_cdf(p), abs=1e-12)


# --- configs ------------------------------------------------------------------

def test_smoothing_config_defaults_and_validation():
    assert SmoothingConfig(0.5, deform.Rotation()).distribution == "uniform"
    assert SmoothingConfig(0.5, deform.Translation()).distribution == "gaussian"
    assert SmoothingConfig(0.12).distribution == "gaussian"
    assert SmoothingConfig(0.12).norm == "L2" and SmoothingConfig(0.1, deform.Rotation()).norm == "L1"
    with pytest.raises(ValueError):
        SmoothingConfig(0.5, None, "uniform")
    with pytest.raises(ValueError):
        SmoothingConfig(0.0)
    with pytest.raises(ValueError):
        CertifyConfig(n0=0)
    with pytest.raises(ValueError):
        CertifyConfig(alpha=1.0)


# --- sampling and certification ----------------------------------------------

def test_constant_classifier_counts():
    counts = smoothing.smooth_sample_counts(constant(2), np.zeros(3), SmoothingConfig(1.0), 500, 0, 4)
    np.testing.assert_array_equal(counts, [0, 0, 500, 0])


def test_vanishing_noise_concentrates_on_clean_prediction():
    x = np.array([0.3])
    counts = smoothing.smooth_sample_counts(threshold(0.0), x, SmoothingConfig(1e-9), 1000, 1, 2)
    np.testing.assert_array_equal(counts, [0, 1000])


def test_threshold_frequency_matches_closed_form():
    x, t, sigma, m = 0.2, 0.0, 0.5, 20_000
    counts = smoothing.smooth_sample_counts(threshold(t), np.array([x]), SmoothingConfig(sigma), m, 3, 2)
    p = float(oracles.normal_cdf_series((x - t) / sigma))
    assert abs(counts[1] / m - p) < 3 * math.sqrt(p * (1 - p) / m)


def test_counts_do_not_depend_on_batch_size():
    cfg = SmoothingConfig(0.3, deform.Rotation())
    img = np.random.default_rng(0).random((6, 6, 1))

    def clf(batch):
        return (batch[:, 2, 3, 0] > 0.5).astype(int)

    a = smoothing.smooth_sample_counts(clf, img, cfg, 333, [5, 6], 2, batch_size=50)
    b = smoothing.smooth_sample_counts(clf, img, cfg, 333, [5, 6], 2, batch_size=333)
    np.testing.assert_array_equal(a, b)


def test_certify_constant_classifier():
    res = smoothing.certify(constant(1), np.zeros(2), SmoothingConfig(0.5), CertifyConfig(n0=10, n=100), 0, 3)
    assert res.prediction == 1
    assert res.pa_lower == pytest.approx(0.933254, abs=1e-6)
    oracle_radius = 0.5 * oracles.normal_quantile_bisect(0.001 ** 0.01)
    assert res.radius == pytest.approx(oracle_radius, abs=1e-10)
    assert res.radius == pytest.approx(0.750238, abs=1e-6)
    assert res.norm == "L2"


def test_fair_coin_classifier_abstains():
    def coin(batch):
        return (np.asarray(batch)[:, 0] > 0).astype(int)

    for seed in range(20):
        res = smoothing.certify(coin, np.zeros(1), SmoothingConfig(1.0), CertifyConfig(n0=100, n=2000), seed, 2)
        assert res.prediction == ABSTAIN and res.radius == 0.0 and res.pa_lower <= 0.5


def test_rotation_invariant_classifier_under_uniform_rotation():
    r, c = np.meshgrid(np.linspace(-1, 1, 9), np.linspace(-1, 1, 9), indexing="ij")
    disc = (np.hypot(r, c) < 0.5).astype(float)[..., None]

    def centre_bright(batch):
        return (batch[:, 4, 4, 0] > 0.5).astype(int)

    cfg = SmoothingConfig(0.1, deform.Rotation())
    res = smoothing.certify(centre_bright, disc, cfg, CertifyConfig(n0=100, n=1000), 7, 2)
    assert res.prediction == 1 and res.norm == "L1"
    assert res.pa_lower > 0.99
    assert res.radius == pytest.approx(0.1 * (2 * res.pa_lower - 1), abs=1e-15)


def test_certify_is_deterministic_and_respects_abstention_contract():
    cfg = SmoothingConfig(0.5)
    cert = CertifyConfig(n0=50, n=500)
    seen_abstain = seen_class = False
    for i, x in enumerate(np.linspace(-0.6, 0.6, 25)):
        a = smoothing.certify(threshold(0.0), np.array([x]), cfg, cert, [9, i], 2)
        b = smoothing.certify(threshold(0.0), np.array([x]), cfg, cert, [9, i], 2)
        assert a == b
        assert a.abstained == (a.pa_lower <= 0.5) == (a.radius == 0.0)
        seen_abstain |= a.abstained
        seen_class |= not a.abstained
    assert seen_abstain and seen_class
