r"""Product-integration weights for Abel-type kernels on non-uniform nodes.

For nodes :math:`x_0 < x_1 < \dots < x_{n-1}` the *product trapezoidal* rule
replaces a bounded integrand by its piecewise-linear interpolant and integrates
that exactly against the kernel:

.. math::

    \frac{1}{\Gamma(\alpha)} \int_{x_0}^{x_i} (x_i-\tau)^{\alpha-1} g(\tau)\,d\tau
    \approx \sum_{k\le i} W_{ik}\, g(x_k).

The *weighted* variant handles integrands that are themselves singular at
:math:`x_0` like :math:`(\tau-x_0)^{\sigma-1}`: it interpolates the bounded
factor :math:`h = (\tau-x_0)^{1-\sigma} g` instead, and the moments of
:math:`(x_i-\tau)^{\alpha-1}(\tau-x_0)^{\sigma-1}` against the hat functions
are regularized incomplete Beta functions.

All weight matrices are lower triangular, nonnegative, and cached by node set.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.special import beta as beta_fn
from scipy.special import betainc
from scipy.special import gamma as gamma_fn

__all__ = ["product_weights", "weighted_weights", "hat_integrals"]


def _diff_pow(u: np.ndarray, h: np.ndarray, p: float) -> np.ndarray:
    """``u**p - (u-h)**p`` for ``0 < h <= u`` without cancellation."""
    ratio = np.clip(h / u, 0.0, 1.0)
    with np.errstate(divide="ignore"):
        return -(u**p) * np.expm1(p * np.log1p(-ratio))


def _product_weights(x: np.ndarray, alpha: float) -> np.ndarray:
    n = x.size
    W = np.zeros((n, n))
    if n < 2:
        return W
    i_idx, k_idx = np.tril_indices(n - 1)
    i_idx = i_idx + 1  # target node i >= 1, cell [x_k, x_{k+1}] with k < i
    u0 = x[i_idx] - x[k_idx]
    h = x[k_idx + 1] - x[k_idx]
    if alpha == 1.0:
        right = 0.5 * h
        left = 0.5 * h
    else:
        d0 = _diff_pow(u0, h, alpha) / alpha
        d1 = _diff_pow(u0, h, alpha + 1.0) / (alpha + 1.0)
        # integral of the kernel times (tau - x_k) over the cell
        first = u0 * d0 - d1
        right = first / h
        left = d0 - right
    np.add.at(W, (i_idx, k_idx), left)
    np.add.at(W, (i_idx, k_idx + 1), right)
    return W / gamma_fn(alpha)


def _weighted_weights(x: np.ndarray, alpha: float, sigma: float) -> np.ndarray:
    n = x.size
    W = np.zeros((n, n))
    if n < 2:
        return W
    y = x - x[0]
    T = y[1:, None]
    R = np.minimum(y[None, :] / T, 1.0)
    valid = y[None, :] <= T

    def reg_inc_beta(p: float, q: float) -> np.ndarray:
        # Regularized incomplete Beta, using the complement near 1 so that
        # differences of neighbouring values keep full relative accuracy.
        out = np.empty_like(R)
        lo = R <= 0.5
        out[lo] = betainc(p, q, R[lo])
        out[~lo] = -betainc(q, p, 1.0 - R[~lo])
        return out, lo

    def cell_diff(p: float, q: float) -> np.ndarray:
        vals, lo = reg_inc_beta(p, q)
        # mixed cells (left end below 1/2, right end above) need the plain form
        plain = np.where(lo, vals, 1.0 + vals)
        d = np.diff(vals, axis=1)
        mixed = lo[:, :-1] & ~lo[:, 1:]
        d[mixed] = np.diff(plain, axis=1)[mixed]
        return d

    cells = valid[:, 1:]
    d0 = cell_diff(sigma, alpha)
    d1 = cell_diff(sigma + 1.0, alpha)
    M0 = np.where(cells, T ** (alpha + sigma - 1.0) * beta_fn(sigma, alpha) * d0, 0.0)
    M1 = np.where(cells, T ** (alpha + sigma) * beta_fn(sigma + 1.0, alpha) * d1, 0.0)
    u = y[None, :-1]
    v = y[None, 1:]
    right = (M1 - u * M0) / (v - u)
    left = M0 - right
    W[1:, :-1] += left
    W[1:, 1:] += right
    return W / gamma_fn(alpha)


@lru_cache(maxsize=128)
def _cached(key: bytes, n: int, alpha: float, sigma: float) -> np.ndarray:
    x = np.frombuffer(key, dtype=float, count=n)
    W = _product_weights(x, alpha) if sigma == 1.0 else _weighted_weights(x, alpha, sigma)
    W.setflags(write=False)
    return W


def product_weights(x, alpha: float, cache: bool = True) -> np.ndarray:
    r"""Product-trapezoid weights for :math:`I^{\alpha}` from ``x[0]`` on nodes ``x``.

    ``alpha = 1`` reproduces the cumulative trapezoidal rule.  The returned
    matrix is read-only and shared between callers.
    """
    return weighted_weights(x, alpha, 1.0, cache)


def weighted_weights(x, alpha: float, sigma: float, cache: bool = True) -> np.ndarray:
    r"""Weights ``S`` with :math:`(S h)_i \approx \frac{1}{\Gamma(\alpha)}\int_{x_0}^{x_i}(x_i-\tau)^{\alpha-1}(\tau-x_0)^{\sigma-1}h(\tau)\,d\tau`.

    Exact for piecewise-linear ``h``.  ``sigma = 1`` is the plain product rule.
    ``cache=False`` skips the shared cache, which suits one-off node sets.
    """
    x = np.ascontiguousarray(np.asarray(x, dtype=float))
    alpha, sigma = float(alpha), float(sigma)
    if not (0.0 < alpha <= 1.0) or not (0.0 < sigma):
        raise ValueError(f"unsupported weight parameters alpha={alpha}, sigma={sigma}")
    if not cache:
        return _product_weights(x, alpha) if sigma == 1.0 else _weighted_weights(x, alpha, sigma)
    return _cached(x.tobytes(), x.size, alpha, sigma)


def hat_integrals(x) -> np.ndarray:
    r"""``H[i, j]`` is :math:`\int_{x_0}^{x_i} \varphi_j(s)\,ds` for the hat basis on ``x``.

    This is the cumulative trapezoid weight matrix (``product_weights(x, 1)``).
    """
    return product_weights(x, 1.0)
