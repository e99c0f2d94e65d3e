"""Brute-force reference computations, written without the package's fast paths."""

import math

import numpy as np


def naive_order(points, i, tie_key=None):
    """All other points sorted by (squared distance, tie key or index)."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    cands = []
    for j in range(len(points)):
        if j == i:
            continue
        d2 = 0.0
        for c in range(points.shape[1]):
            diff = points[i, c] - points[j, c]
            d2 += diff * diff
        cands.append((d2, j if tie_key is None else tie_key(i, j), j))
    cands.sort()
    return [j for _, _, j in cands], [math.sqrt(d2) for d2, _, _ in cands]


def naive_table(points, k_max):
    orders, dists = [], []
    for i in range(len(points)):
        o, d = naive_order(points, i)
        orders.append(o[:k_max])
        dists.append(d[:k_max])
    return np.array(orders), np.array(dists)


def naive_curve(y, order):
    """f(k) recomputed from scratch for each k, summing in plain Python."""
    n, k_max = order.shape
    f = []
    for k in range(1, k_max + 1):
        total = 0.0
        for i in range(n):
            s = 0.0
            for t in range(k):
                s += float(y[order[i, t]])
            r = float(y[i]) - s / float(k)
            total += r * r
        f.append(total / n)
    return np.array(f)


def fast_naive_curve(y, order):
    """Per-k recomputation vectorized over points; same summation order as :func:`naive_curve`."""
    n, k_max = order.shape
    f = np.empty(k_max)
    s = np.zeros(n)
    for k in range(1, k_max + 1):
        s = s + y[order[:, k - 1]]
        r = y - s / float(k)
        total = 0.0
        for v in (r * r).tolist():
            total += v
        f[k - 1] = total / n
    return f


def dense_b(order, k):
    n = order.shape[0]
    b = np.zeros((n, n))
    for i in range(n):
        b[i, i] = 1.0
        for j in order[i, :k]:
            b[i, j] = -1.0 / k
    return b


def dense_a(order, k):
    b = dense_b(order, k)
    return b.T @ b / order.shape[0]


def monte_carlo_mse(mu, order, k, sigma, draws, rng):
    """Average of (1/n) sum (mu_i - loo mean of y)^2 over fresh Gaussian noise."""
    n = len(mu)
    nb = order[:, :k]
    vals = np.empty(draws)
    for s in range(0, draws, 5000):
        m = min(5000, draws - s)
        y = mu + sigma * rng.standard_normal((m, n))
        err = mu - y[:, nb].mean(axis=2)
        vals[s:s + m] = (err ** 2).mean(axis=1)
    return vals.mean(), vals.std(ddof=1) / math.sqrt(draws)
