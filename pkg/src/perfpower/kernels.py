"""Backend selection for the threshold kernels.

The compiled module is preferred; set ``PERFPOWER_PURE=1`` to force the
numpy fallback. ``BACKEND`` names the one in use.
"""
import os

import numpy as np

from . import _kernels_py

_pure = os.environ.get("PERFPOWER_PURE", "") not in ("", "0")
_compiled = None
if not _pure:
    try:
        from . import _kernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"


def _impl(backend):
    if backend is None:
        backend = BACKEND
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        return _compiled
    if backend == "python":
        return _kernels_py
    raise ValueError(f"unknown backend {backend!r}")


def available_backends():
    return ["python"] + (["compiled"] if _compiled is not None else [])


def threshold_displacement(x_orig, x_current, budget, scale, thetas, backend=None):
    """Sum and sum of squares of ``|x_f - x_current|`` for each threshold.

    ``x_f`` is the best response of each unit to the threshold: move up to it
    when ``scale * (theta - x_orig) <= budget``, otherwise stay at ``x_orig``.
    """
    x_orig = np.ascontiguousarray(x_orig, dtype=np.float64)
    x_current = np.ascontiguousarray(x_current, dtype=np.float64)
    budget = np.ascontiguousarray(np.broadcast_to(budget, x_orig.shape), dtype=np.float64)
    thetas = np.ascontiguousarray(np.atleast_1d(thetas), dtype=np.float64)
    return _impl(backend).threshold_displacement(x_orig, x_current, budget, float(scale), thetas)


def zero_one_risk_sums(x_sorted, w_sorted, budget, scale, phis, thetas, backend=None):
    """Total zero-one loss of threshold ``theta`` on data induced by ``phi``.

    ``x_sorted`` must be ascending; ``w_sorted`` holds each unit's positive
    label weight (0/1 labels, or posterior probabilities for the
    label-averaged loss). Returns a ``(len(phis), len(thetas))`` matrix.
    """
    x_sorted = np.ascontiguousarray(x_sorted, dtype=np.float64)
    w_sorted = np.ascontiguousarray(w_sorted, dtype=np.float64)
    phis = np.ascontiguousarray(np.atleast_1d(phis), dtype=np.float64)
    thetas = np.atleast_1d(np.asarray(thetas, dtype=np.float64))
    order = np.argsort(thetas, kind="stable")
    sums = _impl(backend).zero_one_risk_sums(
        x_sorted, w_sorted, float(budget), float(scale), phis,
        np.ascontiguousarray(thetas[order]))
    out = np.empty_like(sums)
    out[:, order] = sums
    return out
