"""Independent reference computations shared by the test modules."""

import itertools

import numpy as np

FD_STEP = 1e-5
FD_RTOL = 1e-4


def numeric_grad(f, x, h=FD_STEP):
    """Central finite differences of scalar ``f`` with respect to array ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_err(analytic, numeric):
    """Largest entrywise error relative to the gradient's magnitude."""
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    scale = max(np.max(np.abs(numeric)), np.max(np.abs(analytic)), 1e-8)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def sw_by_sorting(z1, z2, thetas):
    """Sliced Wasserstein value straight from the definition."""
    total = 0.0
    for th in thetas:
        total += np.sum((np.sort(th @ z1) - np.sort(th @ z2)) ** 2)
    return total / len(thetas)


def min_over_permutations_1d(u, v):
    return min(sum((u[p[i]] - v[i]) ** 2 for i in range(len(v))) for p in itertools.permutations(range(len(u))))


def ari_by_pairs(a, b):
    """Adjusted Rand index by enumerating every pair of items."""
    n = len(a)
    pairs = list(itertools.combinations(range(n), 2))
    same_a = np.array([a[i] == a[j] for i, j in pairs])
    same_b = np.array([b[i] == b[j] for i, j in pairs])
    index = np.sum(same_a & same_b)
    expected = same_a.sum() * same_b.sum() / len(pairs)
    max_index = (same_a.sum() + same_b.sum()) / 2
    return float((index - expected) / (max_index - expected))
