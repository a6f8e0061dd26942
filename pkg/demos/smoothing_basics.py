"""
Certifying a one-dimensional classifier
=======================================

A threshold classifier ``f(x) = [x > t]`` smoothed with Gaussian noise has a
closed form: class 1 wins with probability ``Phi((x - t) / sigma)`` and the
smoothed decision flips exactly at ``x = t``. That makes it a good place to
watch Monte Carlo certification at work.
"""

import numpy as np

from fedcert import smoothing
from fedcert.smoothing import CertifyConfig, SmoothingConfig

t, sigma = 0.0, 0.5


def f(batch):
    return (np.asarray(batch)[:, 0] > t).astype(int)


# Vote counts under noise approach the closed-form probability.
x = np.array([0.3])
counts = smoothing.smooth_sample_counts(f, x, SmoothingConfig(sigma), 100_000, seed=0, num_classes=2)
print(f"MC frequency {counts[1] / 100_000:.4f}  closed form {smoothing.std_normal_cdf(0.3 / sigma):.4f}")

# A certificate never claims more than the distance to the boundary
# (except with probability alpha). Points near the boundary abstain.
cert = CertifyConfig(n0=100, n=10_000, alpha=0.001)
print("\n     x   prediction   pA_lower   radius   true radius")
for i, x in enumerate([-1.2, -0.4, -0.05, 0.0, 0.02, 0.3, 0.9]):
    res = smoothing.certify(f, np.array([x]), SmoothingConfig(sigma), cert, seed=[1, i], num_classes=2)
    pred = "abstain" if res.abstained else res.prediction
    print(f"{x:6.2f}   {pred!s:>10}   {res.pa_lower:8.4f}   {res.radius:6.3f}   {abs(x - t):6.3f}")

# The true radius here is 0.6 whatever sigma is; more noise only costs
# a little more Monte Carlo slack.
for s in (0.25, 0.5, 1.0):
    res = smoothing.certify(f, np.array([0.6]), SmoothingConfig(s), cert, seed=2, num_classes=2)
    print(f"sigma {s:4.2f}: radius {res.radius:.3f}")
