"""Independent reference implementations used only to check the library.

These deliberately share no code with the package: convolution is six nested
loops, gradients come from central finite differences, percentiles from an
explicit sort-and-interpolate, the prox from a grid search.
"""

import numpy as np


def conv2d_direct(x, w, b, stride, pad):
    """Direct-summation convolution, six explicit loops."""
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    xp = np.zeros((n, cin, h + 2 * pad, wd + 2 * pad))
    xp[:, :, pad:pad + h, pad:pad + wd] = x
    y = np.zeros((n, cout, oh, ow))
    for ni in range(n):
        for co in range(cout):
            for i in range(oh):
                for j in range(ow):
                    acc = b[co]
                    for ci in range(cin):
                        for u in range(kh):
                            for v in range(kw):
                                acc += xp[ni, ci, i * stride + u, j * stride + v] \
                                    * w[co, ci, u, v]
                    y[ni, co, i, j] = acc
    return y


def dense_direct(x, w, b):
    n, fin = x.shape
    fout = w.shape[1]
    y = np.zeros((n, fout))
    for ni in range(n):
        for o in range(fout):
            acc = b[o]
            for i in range(fin):
                acc += x[ni, i] * w[i, o]
            y[ni, o] = acc
    return y


def finite_difference(f, x, h=1e-5):
    """Central-difference gradient of scalar f at array x, elementwise."""
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        fp = f()
        x[idx] = orig - h
        fm = f()
        x[idx] = orig
        g[idx] = (fp - fm) / (2.0 * h)
        it.iternext()
    return g


def grads_close(analytic, numeric, rel=1e-5, abs_floor=1e-9):
    """Relative comparison with an absolute floor for near-zero entries."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    diff = np.abs(a - n)
    scale = np.maximum(np.abs(a), np.abs(n))
    return bool(np.all((diff <= rel * scale) | (diff <= abs_floor)))


def percentile_sorted(values, q):
    """Classic linear-interpolation percentile from a sorted copy."""
    s = np.sort(np.asarray(values, dtype=np.float64).ravel())
    rank = (q / 100.0) * (s.size - 1)
    lo = int(np.floor(rank))
    hi = int(np.ceil(rank))
    frac = rank - lo
    return s[lo] * (1.0 - frac) + s[hi] * frac


def prox_grid_argmin(v, radius, step=1e-4):
    """Brute-force argmin of (1/2)(x - v)^2 over the 1-D grid within the ball."""
    grid = np.arange(-radius, radius + step, step)
    costs = 0.5 * (grid - v) ** 2
    return grid[np.argmin(costs)]


def nearest_centroid_error(train, test):
    """1-nearest-centroid classifier error on the test split."""
    classes = int(train.labels.max()) + 1
    cents = np.stack([train.images[train.labels == c].reshape(-1, train.images[0].size).mean(axis=0)
                      for c in range(classes)])
    flat = test.images.reshape(test.n, -1)
    d = ((flat[:, None, :] - cents[None, :, :]) ** 2).sum(axis=2)
    pred = np.argmin(d, axis=1)
    return float(np.mean(pred != test.labels))


def mean_std_two_pass(img):
    """Textbook two-pass mean/std of one image."""
    flat = np.asarray(img, dtype=np.float64).ravel()
    m = flat.sum() / flat.size
    var = ((flat - m) ** 2).sum() / flat.size
    return m, np.sqrt(var)
