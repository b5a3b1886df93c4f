"""Pure numpy implementations of the threshold kernels.

Used when the compiled extension is unavailable or ``PERFPOWER_PURE=1``.
"""
import numpy as np

_CHUNK_ELEMS = 1 << 22


def _moved(x_orig, theta, budget, scale):
    with np.errstate(invalid="ignore"):
        return (x_orig < theta) & (scale * (theta - x_orig) <= budget)


def threshold_displacement(x_orig, x_current, budget, scale, thetas):
    n = x_orig.shape[0]
    m = thetas.shape[0]
    sums = np.zeros(m)
    sumsq = np.zeros(m)
    step = max(1, _CHUNK_ELEMS // max(n, 1))
    for start in range(0, m, step):
        th = thetas[start:start + step, None]
        xf = np.where(_moved(x_orig[None, :], th, budget[None, :], scale), th, x_orig[None, :])
        d = np.abs(xf - x_current[None, :])
        sums[start:start + step] = d.sum(axis=1)
        sumsq[start:start + step] = (d * d).sum(axis=1)
    return sums, sumsq


def zero_one_risk_sums(x_sorted, w_sorted, budget, scale, phis, thetas_sorted):
    n = x_sorted.shape[0]
    prefix = np.concatenate(([0.0], np.cumsum(w_sorted)))
    total = prefix[-1]
    out = np.empty((phis.shape[0], thetas_sorted.shape[0]))
    for a, phi in enumerate(phis):
        # best responses to a threshold are monotone in x_orig, so x_phi stays sorted
        x_phi = np.where(_moved(x_sorted, phi, budget, scale), phi, x_sorted)
        j = np.searchsorted(x_phi, thetas_sorted, side="left")
        pb = prefix[j]
        out[a] = pb + (n - j).astype(np.float64) - (total - pb)
    return out
