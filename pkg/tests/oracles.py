"""Independent reference computations used by the tests."""
import math

import numpy as np


def erf_series(z):
    """erf via the all-positive series 2/sqrt(pi) exp(-z^2) sum (2z^2)^n z / (2n+1)!!."""
    z = np.asarray(z, dtype=np.float64)
    a = np.abs(z)
    term = a.copy()
    total = a.copy()
    for n in range(1, 400):
        term = term * 2 * a * a / (2 * n + 1)
        total = total + term
    return np.sign(z) * 2 / math.sqrt(math.pi) * np.exp(-a * a) * total


def normal_cdf_series(x):
    x = np.asarray(x, dtype=np.float64)
    return 0.5 + 0.5 * erf_series(x / math.sqrt(2))


def bisect(f, lo, hi, iters=200):
    """Root of increasing ``f`` on ``[lo, hi]``."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def binomial_upper_tail(k, n, p):
    """P[Bin(n, p) >= k] summed directly."""
    return sum(math.comb(n, j) * p ** j * (1 - p) ** (n - j) for j in range(k, n + 1))


def clopper_pearson_bisect(k, n, alpha):
    if k == 0:
        return 0.0
    return bisect(lambda p: binomial_upper_tail(k, n, p) - alpha, 0.0, 1.0, iters=100)


def normal_quantile_bisect(p):
    return bisect(lambda x: float(normal_cdf_series(x)) - p, -12.0, 12.0, iters=100)


def clopper_pearson_bisect_all(n, alpha, iters=64):
    """Bisection for every k = 0..n at once; P[Bin(n, p) >= k] summed from exact coefficients."""
    j = np.arange(n + 1)
    coef = np.array([float(math.comb(n, int(i))) for i in j])
    lo, hi = np.zeros(n + 1), np.ones(n + 1)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        pmf = coef * mid[:, None] ** j * (1 - mid[:, None]) ** (n - j)  # row: candidate p for one k
        tail = np.cumsum(pmf[:, ::-1], axis=1)[:, ::-1]
        below = tail[j, j] < alpha
        lo, hi = np.where(below, mid, lo), np.where(below, hi, mid)
    out = 0.5 * (lo + hi)
    out[0] = 0.0
    return out


def centralized_sgd(net, dataset, indices, params, epochs, schedule, batch_size, seed, client_id=0):
    """Plain minibatch SGD written out step by step, drawing from the public epoch stream."""
    from fedcert import federation, nn

    for epoch in range(epochs):
        rng = federation.epoch_rng(seed, client_id, epoch)
        order = rng.permutation(indices)
        lr = schedule.base_lr * schedule.decay_factor ** (epoch // schedule.decay_every)
        for s in range(0, len(order), batch_size):
            b = order[s:s + batch_size]
            _, g = nn.backward(net, params, dataset.images[b], dataset.labels[b])
            params = nn.ParamVector(params.data - lr * g.data, params.layout)
    return params
