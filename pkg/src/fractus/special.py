r"""Gamma and two-parameter Mittag-Leffler functions.

The Mittag-Leffler function is evaluated from its power series

.. math::

    E_{\alpha,\beta}(z) = \sum_{k\ge 0} \frac{z^k}{\Gamma(\alpha k + \beta)},

with a hard cap on :math:`|z|`.  When the terms alternate and grow far beyond
the final value (negative arguments with small :math:`\alpha`), double
precision cannot hold the cancellation, so the same series is summed in
extended precision with :mod:`mpmath`.  No asymptotic or contour-integral
algorithm is used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np

from .errors import ConvergenceError, DimensionError, DomainError

__all__ = ["MLParams", "gamma", "ml_scalar", "ml_matrix", "Z_MAX", "MAX_TERMS"]

#: Largest admissible ``|z|`` (or matrix norm) for series evaluation.
Z_MAX = 50.0
#: Series terms allowed before giving up.
MAX_TERMS = 10_000

_REL_TRUNC = 1e-16
# Beyond this ratio between the largest term and the result, rounding in the
# individual terms (each carries a relative error of a few ulps) is amplified
# enough to matter, and the extended-precision path takes over.
_CANCELLATION_LIMIT = 10.0


def gamma(x: float) -> float:
    """Euler's Gamma function for real ``x > 0``.

    Delegates to :func:`math.gamma`, which is accurate to a few ulps.

    >>> gamma(5.0)
    24.0
    """
    x = float(x)
    if not x > 0.0 or not math.isfinite(x):
        raise DomainError(f"gamma is only supported for finite x > 0, got {x}")
    return math.gamma(x)


@dataclass(frozen=True)
class MLParams:
    """Parameters ``(alpha, beta)`` of :math:`E_{\\alpha,\\beta}`, both positive."""

    alpha: float
    beta: float

    def __post_init__(self) -> None:
        a, b = float(self.alpha), float(self.beta)
        if not (a > 0.0 and b > 0.0 and math.isfinite(a) and math.isfinite(b)):
            raise DomainError(f"Mittag-Leffler parameters must be positive, got ({a}, {b})")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)


def _log_term(p: MLParams, k: int, log_abs_z: float) -> float:
    return k * log_abs_z - math.lgamma(p.alpha * k + p.beta)


def _tail_ratio(p: MLParams, k: int, abs_z: float) -> float:
    """Upper bound for |t_{j+1}/t_j| over all j >= k, valid once past the peak.

    ``Gamma(a j + b) / Gamma(a (j+1) + b)`` is non-increasing in ``j`` as soon as
    ``a j + b`` exceeds the minimum of Gamma (about 1.4616), so the ratio at
    ``k`` bounds every later ratio.
    """
    if p.alpha * k + p.beta < 1.5:
        return math.inf
    return abs_z * math.exp(math.lgamma(p.alpha * k + p.beta) - math.lgamma(p.alpha * (k + 1) + p.beta))


def _series_float(p: MLParams, z: float) -> tuple[float, float, int]:
    """Double-precision summation; returns (value, largest |term|, terms used)."""
    if z == 0.0:
        return 1.0 / gamma(p.beta), 1.0 / gamma(p.beta), 1
    abs_z = abs(z)
    log_abs_z = math.log(abs_z)
    total = 0.0
    comp = 0.0
    biggest = 0.0
    for k in range(MAX_TERMS):
        lt = _log_term(p, k, log_abs_z)
        if lt > 709.0:
            raise DomainError(f"E_{{{p.alpha},{p.beta}}}({z}) overflows double precision")
        term = math.exp(lt)
        if z < 0 and k % 2 == 1:
            term = -term
        biggest = max(biggest, abs(term))
        # Kahan-compensated summation keeps the rounding error of the sum at O(eps).
        y = term - comp
        s = total + y
        comp = (s - total) - y
        total = s
        r = _tail_ratio(p, k, abs_z)
        if r < 1.0:
            tail = abs(term) * r / (1.0 - r)
            if tail <= _REL_TRUNC * abs(total) or tail < 1e-300:
                return total, biggest, k + 1
    raise ConvergenceError(f"Mittag-Leffler series did not converge within {MAX_TERMS} terms", residual=abs(term))


def _series_mp(p: MLParams, z: float, digits: int) -> float:
    with mpmath.workdps(digits):
        zz = mpmath.mpf(z)
        a, b = mpmath.mpf(p.alpha), mpmath.mpf(p.beta)
        total = mpmath.mpf(0)
        abs_z = abs(z)
        for k in range(MAX_TERMS):
            term = zz**k / mpmath.gamma(a * k + b)
            total += term
            r = _tail_ratio(p, k, abs_z)
            if r < 1.0:
                tail = abs(term) * r / (1.0 - r)
                if tail <= mpmath.mpf(10) ** (-20) * abs(total) or tail < mpmath.mpf(10) ** (-(digits + 20)):
                    return float(total)
    raise ConvergenceError(f"Mittag-Leffler series did not converge within {MAX_TERMS} terms")


def ml_scalar(p: MLParams, z: float, z_max: float = Z_MAX) -> float:
    r"""Two-parameter Mittag-Leffler function :math:`E_{\alpha,\beta}(z)` for real ``z``.

    The series is truncated once a geometric bound on the remaining tail drops
    below ``1e-16`` times the running sum.  For large positive ``z`` the value
    itself is large and the guarantee is relative; near zero it is absolute.

    Raises
    ------
    DomainError
        If ``|z| > z_max`` or the value overflows.
    ConvergenceError
        If more than ``MAX_TERMS`` terms would be needed.
    """
    z = float(z)
    if not math.isfinite(z) or abs(z) > z_max:
        raise DomainError(f"|z| = {abs(z)} exceeds the series cap {z_max}")
    value, biggest, _ = _series_float(p, z)
    if z < 0 and biggest > _CANCELLATION_LIMIT * max(abs(value), 1e-300) and biggest > 1e-4:
        # The double-precision value may be garbage here, so size the working
        # precision from the largest term alone, with a generous margin.
        value = _series_mp(p, z, int(math.log10(biggest)) + 50)
    return value


def ml_matrix(p: MLParams, M, scale: float = 1.0, z_max: float = Z_MAX) -> np.ndarray:
    r"""Matrix Mittag-Leffler function :math:`E_{\alpha,\beta}(\text{scale}\cdot M)`.

    Summed directly as a matrix power series.  The truncation uses the scalar
    majorant :math:`\|X\|^k/\Gamma(\alpha k+\beta)` with the spectral norm, so
    no diagonalizability is assumed.  When the majorant shows that cancellation
    would exhaust double precision, the series is re-summed in extended
    precision.
    """
    X = np.asarray(M, dtype=float) * float(scale)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise DimensionError(f"ml_matrix needs a square matrix, got shape {X.shape}")
    m = X.shape[0]
    norm = float(np.linalg.norm(X, 2)) if m else 0.0
    if not math.isfinite(norm) or norm > z_max:
        raise DomainError(f"matrix norm {norm} exceeds the series cap {z_max}")
    if norm == 0.0:
        return np.eye(m) / gamma(p.beta)
    total = np.zeros((m, m))
    power = np.eye(m)
    biggest = 0.0
    log_norm = math.log(norm)
    for k in range(MAX_TERMS):
        coef = math.exp(-math.lgamma(p.alpha * k + p.beta))
        total = total + coef * power
        major = math.exp(_log_term(p, k, log_norm))
        biggest = max(biggest, major)
        r = _tail_ratio(p, k, norm)
        if r < 1.0:
            tail = major * r / (1.0 - r)
            ref = float(np.linalg.norm(total, 2))
            if tail <= _REL_TRUNC * ref or tail < 1e-300:
                break
        power = power @ X
    else:
        raise ConvergenceError(f"matrix Mittag-Leffler series did not converge within {MAX_TERMS} terms")
    ref = float(np.linalg.norm(total, 2))
    if biggest > _CANCELLATION_LIMIT * max(ref, 1e-300) and biggest > 1e-4:
        total = _matrix_series_mp(p, X, int(math.log10(biggest)) + 50, k + 1)
    return total


def _matrix_series_mp(p: MLParams, X: np.ndarray, digits: int, n_terms: int) -> np.ndarray:
    with mpmath.workdps(digits):
        Xm = mpmath.matrix(X.tolist())
        m = X.shape[0]
        power = mpmath.eye(m)
        total = mpmath.zeros(m, m)
        a, b = mpmath.mpf(p.alpha), mpmath.mpf(p.beta)
        for k in range(n_terms + 10):
            total += power / mpmath.gamma(a * k + b)
            power = power * Xm
        return np.array([[float(total[i, j]) for j in range(m)] for i in range(m)])
