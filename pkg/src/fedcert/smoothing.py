"""Monte Carlo randomized smoothing: prediction, confidence bounds, radii.

The base classifier is any callable mapping a batch of inputs to hard class
labels. Pixel-domain smoothing adds Gaussian noise to the input itself;
parametric smoothing perturbs the parameters of a deformation and warps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy import special

from . import deform

ABSTAIN = -1

GAUSSIAN = "gaussian"
UNIFORM = "uniform"

# inverse normal CDF rational approximation (P. J. Acklam)
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def _polyval(coefs, x):
    acc = 0.0
    for c in coefs:
        acc = acc * x + c
    return acc


def std_normal_cdf(x):
    return 0.5 * special.erfc(-np.asarray(x, dtype=np.float64) / math.sqrt(2.0))


def inv_std_normal_cdf(p):
    """Standard normal quantile on ``(0, 1)``.

    Rational approximation refined by one Halley step against an erfc-based
    CDF, evaluated on ``min(p, 1 - p)`` and reflected. Works on scalars and
    arrays.
    """
    p_arr = np.asarray(p, dtype=np.float64)
    if np.any(~(p_arr > 0) | ~(p_arr < 1)):
        raise ValueError("inv_std_normal_cdf requires 0 < p < 1")
    # work on the lower half: 1 - p is exact for p >= 1/2, and the tail CDF keeps full
    # relative precision there
    upper = p_arr > 0.5
    q = np.where(upper, 1.0 - p_arr, p_arr)
    x = np.empty_like(q)
    tail = q < _P_LOW
    t = np.sqrt(-2.0 * np.log(q[tail]))
    x[tail] = _polyval(_C, t) / (_polyval(_D, t) * t + 1.0)
    r = q[~tail] - 0.5
    s = r * r
    x[~tail] = _polyval(_A, s) * r / (_polyval(_B, s) * s + 1.0)

    e = std_normal_cdf(x) - q
    u = e * math.sqrt(2.0 * math.pi) * np.exp(0.5 * x * x)
    x = x - u / (1.0 + 0.5 * x * u)
    x = np.where(upper, -x, x)
    return float(x) if np.ndim(p) == 0 else x


def clopper_pearson_lower(k: int, n: int, alpha: float) -> float:
    """One-sided exact binomial lower bound at confidence ``1 - alpha``.

    The largest ``p`` with ``P[Bin(n, p) >= k] <= alpha``; ``0`` when ``k == 0``.
    """
    if not (0 < alpha < 1):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if n < 1 or not (0 <= k <= n):
        raise ValueError(f"need 0 <= k <= n and n >= 1, got k={k}, n={n}")
    if k == 0:
        return 0.0
    # P[Bin(n, p) >= k] is the regularized incomplete beta I_p(k, n - k + 1)
    return float(special.betaincinv(k, n - k + 1, alpha))


def _check_probs(p_a, p_b, lo_open):
    for name, p in (("p_A", p_a), ("p_B", p_b)):
        bad = not (0 < p < 1) if lo_open else not (0 <= p <= 1)
        if bad:
            raise ValueError(f"{name}={p} outside the allowed range")
    if p_a < p_b:
        raise ValueError(f"p_A={p_a} is smaller than p_B={p_b}")


def radius_l2(p_a: float, p_b: float, sigma: float) -> float:
    """Gaussian smoothing radius ``sigma/2 * (inv_cdf(p_A) - inv_cdf(p_B))``."""
    _check_probs(p_a, p_b, lo_open=True)
    _check_sigma(sigma)
    return max(0.0, 0.5 * sigma * (inv_std_normal_cdf(p_a) - inv_std_normal_cdf(p_b)))


def radius_l1_uniform(p_a: float, p_b: float, sigma: float) -> float:
    """Uniform ``U[-sigma, sigma]`` smoothing radius ``sigma * (p_A - p_B)`` in l1."""
    _check_probs(p_a, p_b, lo_open=False)
    _check_sigma(sigma)
    return sigma * (p_a - p_b)


def _check_sigma(sigma):
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")


@dataclass(frozen=True)
class SmoothingConfig:
    """Noise distribution and where it is applied.

    ``family`` is ``None`` for pixel-intensity noise, otherwise the
    deformation (with its base parameters) whose parameters get perturbed.
    ``distribution`` defaults to uniform for rotations and Gaussian elsewhere.
    """

    sigma: float
    family: Optional[object] = None
    distribution: Optional[str] = None

    def __post_init__(self):
        _check_sigma(self.sigma)
        if self.family is not None and not isinstance(self.family, deform.DeformationSpec):
            raise TypeError(f"family must be a deformation spec or None, got {self.family!r}")
        dist = self.distribution or default_distribution(self.family)
        if dist not in (GAUSSIAN, UNIFORM):
            raise ValueError(f"unknown distribution {dist!r}")
        if self.family is None and dist != GAUSSIAN:
            raise ValueError("pixel-domain smoothing supports Gaussian noise only")
        object.__setattr__(self, "distribution", dist)

    @property
    def norm(self) -> str:
        return "L2" if self.distribution == GAUSSIAN else "L1"


def default_distribution(family) -> str:
    return UNIFORM if isinstance(family, deform.Rotation) else GAUSSIAN


@dataclass(frozen=True)
class CertifyConfig:
    n0: int = 100
    n: int = 10_000
    alpha: float = 0.001
    batch_size: int = 1000

    def __post_init__(self):
        if self.n0 < 1 or self.n < 1 or self.batch_size < 1:
            raise ValueError(f"sample counts must be positive: {self}")
        if not (0 < self.alpha < 1):
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")


@dataclass(frozen=True)
class CertificationResult:
    prediction: int  # ABSTAIN or a class index
    pa_lower: float
    radius: float
    norm: str

    @property
    def abstained(self) -> bool:
        return self.prediction == ABSTAIN


def _stream(seed, tag):
    entropy = list(seed) if isinstance(seed, (tuple, list)) else [seed]
    return np.random.default_rng(np.random.SeedSequence(entropy + [tag]))


def _noisy_inputs(x, config, rng, count):
    if config.family is None:
        return x + config.sigma * rng.standard_normal((count,) + x.shape)
    k = type(config.family).n_params
    if config.distribution == GAUSSIAN:
        eps = config.sigma * rng.standard_normal((count, k))
    else:
        eps = rng.uniform(-config.sigma, config.sigma, (count, k))
    return deform.deform_image(x, config.family, eps)


def _counts(classifier, x, config, m, rng, num_classes, batch_size):
    counts = np.zeros(num_classes, dtype=np.int64)
    remaining = m
    while remaining > 0:
        size = min(batch_size, remaining)
        labels = np.asarray(classifier(_noisy_inputs(x, config, rng, size)))
        counts += np.bincount(labels, minlength=num_classes)[:num_classes]
        remaining -= size
    return counts


def smooth_sample_counts(classifier: Callable, x, config: SmoothingConfig, m: int, seed,
                         num_classes: int, batch_size: int = 1000) -> np.ndarray:
    """Votes of ``classifier`` over ``m`` noisy copies of ``x``.

    ``seed`` is an int or a sequence of ints; the noise stream is a pure
    function of it and does not depend on ``batch_size``.
    """
    if m < 1:
        raise ValueError(f"need at least one sample, got m={m}")
    x = np.asarray(x, dtype=np.float64)
    return _counts(classifier, x, config, m, _stream(seed, 0), num_classes, batch_size)


def certify(classifier: Callable, x, smoothing: SmoothingConfig, cert: CertifyConfig, seed,
            num_classes: int) -> CertificationResult:
    """Predict with the smoothed classifier and certify the prediction.

    The top class is chosen on ``n0`` samples, its probability is bounded
    from below on ``n`` fresh samples, and the runner-up is bounded by
    ``1 - pa_lower``.
    """
    x = np.asarray(x, dtype=np.float64)
    selection = _counts(classifier, x, smoothing, cert.n0, _stream(seed, 1), num_classes,
                        cert.batch_size)
    c_a = int(np.argmax(selection))
    estimation = _counts(classifier, x, smoothing, cert.n, _stream(seed, 2), num_classes,
                         cert.batch_size)
    pa_lower = clopper_pearson_lower(int(estimation[c_a]), cert.n, cert.alpha)
    if pa_lower <= 0.5:
        return CertificationResult(ABSTAIN, pa_lower, 0.0, smoothing.norm)
    if smoothing.distribution == GAUSSIAN:
        radius = radius_l2(pa_lower, 1.0 - pa_lower, smoothing.sigma)
    else:
        radius = radius_l1_uniform(pa_lower, 1.0 - pa_lower, smoothing.sigma)
    return CertificationResult(c_a, pa_lower, radius, smoothing.norm)
