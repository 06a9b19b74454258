"""NumPy fallback for the hot kernels.

Same contracts as the compiled extension `ouspec._kernels`: evaluation of the
empirical characteristic function (and its truncated derivative) on a uniform
frequency grid, and the observation-shifted kernel sum used by the variance
estimator.  Work is blocked so memory stays bounded for large samples.
"""
import numpy as np

BACKEND = "python"

_GRID_BLOCK = 512
_WORK_LIMIT = 4_000_000  # max complex elements held per block


def ecf_grid(x, xw, m, ds):
    """ECF and truncated-derivative sums on the grid t_k = k*ds, k=0..m-1.

    Returns (phi, dphi) with phi[k] = mean(exp(i t_k x_j)) and
    dphi[k] = (i/n) sum_j xw_j exp(i t_k x_j); xw is x with truncated
    entries already zeroed.
    """
    x = np.ascontiguousarray(x, dtype=float)
    xw = np.ascontiguousarray(xw, dtype=float)
    n = x.size
    phi = np.zeros(m, dtype=complex)
    dphi = np.zeros(m, dtype=complex)
    obs_block = max(1, _WORK_LIMIT // max(_GRID_BLOCK, 1))
    for j0 in range(0, n, obs_block):
        xc = x[j0:j0 + obs_block]
        wc = xw[j0:j0 + obs_block]
        for k0 in range(0, m, _GRID_BLOCK):
            k1 = min(k0 + _GRID_BLOCK, m)
            E = np.exp(1j * np.outer(np.arange(k0, k1) * ds, xc))
            phi[k0:k1] += E.sum(axis=1)
            dphi[k0:k1] += E @ wc
    return phi / n, (1j / n) * dphi


def kn_dot(x, ds, C):
    """W[j, l] = sum_k Re(exp(i k ds x_j) * C[k, l]).

    C has shape (m, N); the result has shape (len(x), N).
    """
    x = np.ascontiguousarray(x, dtype=float)
    C = np.ascontiguousarray(C, dtype=complex)
    m, N = C.shape
    n = x.size
    W = np.zeros((n, N))
    obs_block = max(1, _WORK_LIMIT // max(_GRID_BLOCK, 1))
    for j0 in range(0, n, obs_block):
        xc = x[j0:j0 + obs_block]
        for k0 in range(0, m, _GRID_BLOCK):
            k1 = min(k0 + _GRID_BLOCK, m)
            E = np.exp(1j * np.outer(xc, np.arange(k0, k1) * ds))
            W[j0:j0 + obs_block] += (E @ C[k0:k1]).real
    return W
