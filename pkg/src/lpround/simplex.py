"""Euclidean projection onto the probability simplex."""

import numpy as np


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Project ``v`` onto ``{x : sum(x) = 1, x >= 0}`` (sort-and-threshold)."""
    v = np.asarray(v, dtype=np.float64)
    k = v.size
    if k == 0:
        raise ValueError("cannot project onto an empty simplex")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, k + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(v - tau, 0.0)
