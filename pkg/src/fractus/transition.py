r"""State-transition matrices, the Theta bound, Duhamel formulas and duality checks.

For a matrix coefficient :math:`A(t)` and matrix order :math:`\alpha` the R-L
transition matrix solves, for each source time ``s``,

.. math::

    Z(t,s) = \Big[\frac{(t-s)^{\alpha-1}}{\Gamma(\alpha)}\Big] \otimes \mathrm{Id}
    + \int_s^t \Big[\frac{(t-\tau)^{\alpha-1}}{\Gamma(\alpha)}\Big] \otimes [A(\tau) Z(\tau,s)]\,d\tau,

and the Caputo one the same equation with :math:`\mathrm{Id}` as first term.

Two discretizations are provided.

*Pointwise tableaus* (:class:`TransitionTableau`) hold ``Z(t_n, t_p)`` for every
node pair.  The singular diagonal term is kept in closed form; the remainder
solves a Volterra equation per source node, with its singular forcing
:math:`A K` integrated through Beta moments.  Each column is solved on the
nodes from ``t_p`` on plus a graded layer right after ``t_p``, since the
column behaves like :math:`(t-t_p)^{\alpha}` there.

*Moment tableaus* (:class:`MomentTableau`) hold
:math:`\Omega_{nj} = \int_a^{t_n} Z(t_n,s)\,\varphi_j(s)\,ds` for the hat
functions :math:`\varphi_j` of the grid.  These are what the convolution
:math:`\int_a^t Z(t,s)B(s)\,ds` needs for piecewise-linear ``B``, and the
equation for them follows from integrating the one for ``Z`` against
:math:`\varphi_j`.  Right-sided problems (``s`` running backward from ``t``)
have moments that satisfy the transposed equation, so the duality checks
compare two independently iterated moment tableaus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .calculus import apply_product_rule, frac_integral_left
from .errors import ConvergenceError, DimensionError, UnsupportedOrderError, UnsupportedProblemError
from .grid import GridFunction, SingularGridFunction, TimeGrid, default_grading
from .multiorder import MatrixOrder, VectorOrder, as_vector_order
from .quadrature import hat_integrals, product_weights, weighted_weights
from .solver import Dynamic, _matrix_samples, _RLMap, _vector_samples, picard_caputo, picard_rl

__all__ = [
    "TransitionTableau",
    "MomentTableau",
    "ThetaBound",
    "MixedDuhamelResult",
    "transition_rl",
    "transition_caputo",
    "transition_moments",
    "column_defect",
    "theta_bound",
    "check_theta",
    "duhamel_rl",
    "duhamel_caputo",
    "mixed_duhamel",
    "duality_residual_rl",
    "duality_residual_caputo",
]

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 200

# graded layer inserted after each source node of a pointwise tableau
_LAYER_INTERVALS = 4
_LAYER_MIN_POINTS = 16
_LAYER_FRACTION = 8

Kind = Literal["rl", "caputo"]


# --------------------------------------------------------------------------- helpers


def _matrix_order(alpha, m: int | None = None) -> MatrixOrder:
    if isinstance(alpha, MatrixOrder):
        out = alpha
    else:
        out = MatrixOrder.row_constant(as_vector_order(alpha, m))
    if m is not None and out.m != m:
        raise DimensionError(f"order is {out.m}x{out.m}, expected {m}x{m}")
    return out


def _row_vector_order(alpha, m: int | None = None) -> VectorOrder:
    """The vector behind a row-constant order; anything else is rejected."""
    if isinstance(alpha, MatrixOrder):
        if not alpha.is_row_constant:
            raise UnsupportedOrderError("this operation is only available for row-constant matrix orders")
        v = alpha.source
    else:
        v = as_vector_order(alpha, m)
    if m is not None and v.m != m:
        raise DimensionError(f"order has {v.m} entries, expected {m}")
    return v


def _dimension_of(A) -> int:
    if isinstance(A, GridFunction):
        if len(A.shape) != 2 or A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square-matrix valued, got samples of shape {A.shape}")
        return A.shape[0]
    arr = np.asarray(A, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"A must be a square matrix, got shape {arr.shape}")
    return arr.shape[0]


def _grid_of(A, grid: TimeGrid | None) -> TimeGrid:
    if isinstance(A, GridFunction):
        if grid is not None and grid != A.grid:
            raise DimensionError("A is sampled on a different grid")
        return A.grid
    if grid is None:
        raise DimensionError("a grid is required when A is not a GridFunction")
    return grid


def _coefficient(A, grid: TimeGrid | None) -> tuple[np.ndarray, TimeGrid, int]:
    """Node samples ``(N, m, m)`` of ``A``, the grid, and ``m``."""
    if callable(A) and not isinstance(A, GridFunction):
        if grid is None:
            raise DimensionError("a grid is required when A is a callable")
        m = np.asarray(A(grid.a)).shape[0]
        return _matrix_samples(A, grid.nodes, m), grid, m
    g = _grid_of(A, grid)
    m = _dimension_of(A)
    return _matrix_samples(A, g.nodes, m), g, m


def _picard_linear(step, x0: np.ndarray, tol: float, max_iter: int, what: str) -> tuple[np.ndarray, int, float]:
    x = x0
    for it in range(1, max_iter + 1):
        x_new = step(x)
        if not np.all(np.isfinite(x_new)):
            raise ConvergenceError(f"{what}: iterate {it} is not finite", residual=math.inf)
        d = float(np.max(np.abs(x_new - x), initial=0.0))
        x = x_new
        if d <= tol * max(1.0, float(np.max(np.abs(x), initial=0.0))):
            return x, it, d
    raise ConvergenceError(f"{what}: no convergence in {max_iter} iterations (step {d:.3e})", residual=d)


def _gamma_vec(x: np.ndarray) -> np.ndarray:
    return np.vectorize(math.gamma, otypes=[float])(x)


# --------------------------------------------------------------------------- pointwise tableaus


@dataclass(frozen=True)
class TransitionTableau:
    """Transition matrix at every node pair ``t_p <= t_n``.

    ``regular[n, p]`` is the ``m x m`` block without the singular term.  For
    ``kind="rl"`` the full block is
    ``amplitude * (t_n - t_p)^(diag(alpha) - 1) + regular[n, p]`` for ``n > p``,
    with ``amplitude = diag(1/Gamma(alpha_ii))``; the diagonal ``n = p`` is
    singular and never evaluated.  For ``kind="caputo"`` the amplitude is zero
    and ``regular[p, p]`` is the identity.  ``columns[p]`` keeps the solve grid
    of column ``p`` (offsets ``t - t_p``, refined after ``t_p``) together with
    the regular part on it.
    """

    grid: TimeGrid
    kind: Kind
    order: MatrixOrder
    regular: np.ndarray = field(repr=False)
    amplitude: np.ndarray = field(repr=False)
    iterations: tuple[int, ...] = field(default=(), repr=False)
    residual: float = 0.0
    columns: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self) -> None:
        for name in ("regular", "amplitude"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def m(self) -> int:
        return self.order.m

    @property
    def singular_orders(self) -> np.ndarray:
        return np.diag(self.order.values).copy()

    def singular_block(self, n: int, p: int) -> np.ndarray:
        if self.kind == "caputo":
            return np.zeros((self.m, self.m))
        if n <= p:
            raise ValueError("the R-L transition matrix is singular on the diagonal t = s")
        x = self.grid.nodes[n] - self.grid.nodes[p]
        return np.diag(np.diag(self.amplitude) * x ** (self.singular_orders - 1.0))

    def block(self, n: int, p: int) -> np.ndarray:
        """Full block ``Z(t_n, t_p)`` (``n > p`` for R-L, ``n >= p`` for Caputo)."""
        if n < p:
            raise ValueError("blocks exist only for t_n >= t_p")
        return self.singular_block(n, p) + self.regular[n, p]

    def source_l1(self, n: int) -> float:
        r"""Majorant of :math:`\int_a^{t_n} \sum_{ij} |Z_{ij}(t_n,s)|\,ds`.

        The singular term is integrated exactly; the absolute values of the
        regular part are integrated by the trapezoidal rule in ``s``.
        """
        nodes = self.grid.nodes[: n + 1]
        if n == 0:
            return 0.0
        vals = np.abs(self.regular[n, : n + 1]).sum(axis=(1, 2))
        total = float(np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(nodes)))
        if self.kind == "rl":
            o = self.singular_orders
            total += float(np.sum(np.diag(self.amplitude) * (nodes[-1] - nodes[0]) ** o / o))
        return total


def _column_nodes(x: np.ndarray, grading: float) -> tuple[np.ndarray, np.ndarray]:
    """Solve grid for one column: the offsets ``x`` plus a graded layer after the source.

    Near ``s = t_p`` the column behaves like ``(t-s)^alpha``, but the global grid
    is graded only at ``a``.  Graded points are inserted over the first
    ``_LAYER_INTERVALS`` intervals; returns the refined offsets and the
    positions of the original ones in it.
    """
    if x.size < 2:
        return x, np.arange(x.size)
    k = min(_LAYER_INTERVALS, x.size - 1)
    n_ins = max(_LAYER_MIN_POINTS, x.size // _LAYER_FRACTION)
    extra = x[k] * (np.arange(1, n_ins) / n_ins) ** grading
    extra = extra[np.min(np.abs(extra[:, None] - x[None, : k + 1]), axis=1) > 1e-12 * x[k]]
    fine = np.union1d(x, extra)
    return fine, np.searchsorted(fine, x)


def _tableau(A, alpha, grid, kind: Kind, tol: float, max_iter: int) -> TransitionTableau:
    A_s, g, m = _coefficient(A, grid)
    order = _matrix_order(alpha, m)
    al = order.values
    N = g.n
    nodes = g.nodes
    eye = np.eye(m)
    layer_grading = default_grading(np.diag(al))
    regular = np.zeros((N, N, m, m))
    columns = []
    if kind == "rl":
        amplitude = np.diag(1.0 / _gamma_vec(np.diag(al)))
    else:
        amplitude = np.zeros((m, m))
    iterations = []
    worst = 0.0
    for p in range(N):
        if kind == "caputo":
            regular[p, p] = eye
        if p == N - 1:
            continue
        x, idx = _column_nodes(nodes[p:] - nodes[p], layer_grading)
        Ap = _matrix_samples(A, nodes[p] + x, m) if x.size != N - p else A_s[p:]
        src, integrate = _column_operator(x, Ap, al, kind)
        start = src.copy()

        def step(R, src=src, Ap=Ap, integrate=integrate):
            return src + integrate(np.einsum("nil,nlc->nic", Ap, R))

        R, it, d = _picard_linear(step, start, tol, max_iter, f"transition column {p}")
        if kind == "caputo":
            R[0] = eye
        regular[p:, p] = R[idx]
        columns.append((x, R))
        iterations.append(it)
        worst = max(worst, d)
    return TransitionTableau(g, kind, order, regular, amplitude, tuple(iterations), worst, tuple(columns))


def _column_operator(x: np.ndarray, Ap: np.ndarray, al: np.ndarray, kind: Kind):
    """Source term and integral operator of one column's Volterra equation on offsets ``x``.

    For R-L the source is the Beta-moment integral of the singular forcing
    ``(A K)_ic = A_ic (t-s)^(alpha_cc - 1) / Gamma(alpha_cc)``; for Caputo it
    is the identity.
    """
    m = al.shape[0]
    masks = {w: al == w for w in np.unique(al)}
    W = {w: product_weights(x, w, cache=False) for w in masks}

    def integrate(F: np.ndarray) -> np.ndarray:
        out = np.empty_like(F)
        for w, mask in masks.items():
            out[:, mask] = W[w] @ F[:, mask]
        return out

    if kind == "rl":
        diag = np.diag(al)
        pairs: dict[tuple[float, float], np.ndarray] = {}
        for i in range(m):
            for c in range(m):
                pairs.setdefault((float(al[i, c]), float(diag[c])), np.zeros((m, m), dtype=bool))[i, c] = True
        src = np.zeros((x.size, m, m))
        for (w, sig), mask in pairs.items():
            src[:, mask] = weighted_weights(x, w, sig, cache=False) @ (Ap[:, mask] / math.gamma(sig))
    else:
        src = np.broadcast_to(np.eye(m), (x.size, m, m)).copy()
    return src, integrate


def transition_rl(A, alpha, grid: TimeGrid | None = None, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> TransitionTableau:
    r"""Pointwise R-L transition tableau ``Z(t_n, t_p)``.

    ``A`` is a matrix :class:`GridFunction`, a constant matrix or a callable
    (the last two need ``grid``).  ``alpha`` is a :class:`MatrixOrder` or a
    vector order (lifted row-wise).  Each column is solved by Picard iteration
    to relative step ``tol``.
    """
    return _tableau(A, alpha, grid, "rl", tol, max_iter)


def transition_caputo(A, alpha, grid: TimeGrid | None = None, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> TransitionTableau:
    r"""Pointwise Caputo transition tableau ``cZ(t_n, t_p)``; diagonal blocks are the identity."""
    return _tableau(A, alpha, grid, "caputo", tol, max_iter)


def column_defect(tableau: TransitionTableau, A, p: int) -> float:
    """Re-substitution defect of column ``p`` in its Volterra equation (max abs).

    The defect is evaluated on the column's own solve grid (the nodes from
    ``t_p`` on plus the graded layer after ``t_p``).
    """
    if p >= len(tableau.columns):
        return 0.0
    x, R = tableau.columns[p]
    m = tableau.m
    Ap = _matrix_samples(A, tableau.grid.nodes[p] + x, m)
    src, integrate = _column_operator(x, Ap, tableau.order.values, tableau.kind)
    return float(np.max(np.abs(src + integrate(np.einsum("nil,nlc->nic", Ap, R)) - R)))


# --------------------------------------------------------------------------- Theta bound


@dataclass(frozen=True)
class ThetaBound:
    """Bound ``|Z_ij(t,s)| <= (t-s)^(alpha_ij - 1) * theta`` on ``a <= s < t <= b``."""

    theta: float
    b: float
    terms_used: int
    M: float
    beta_min: float
    gamma_max: float
    delta: float
    entries: np.ndarray = field(repr=False, compare=False, default=None)


def _theta_entry(a_ij: float, col: np.ndarray, z: float, max_terms: int = 100_000) -> tuple[float, int]:
    r"""Sum :math:`\sum_p z^p \sum_{k_1..k_p} 1/\Gamma(a_{ij} + \sum_q c_{k_q})`.

    Sequences are grouped by the multiset of chosen values; each distinct sum
    keeps the logarithm of its multiplicity, so large ``p`` cannot overflow.
    """
    total = 1.0 / math.gamma(a_ij)
    if z == 0.0:
        return total, 1
    values, counts = np.unique(col, return_counts=True)
    log_counts = np.log(counts.astype(float))
    log_z = math.log(z)
    sums = np.zeros(1)
    logw = np.zeros(1)
    prev = math.inf
    lgamma = np.vectorize(math.lgamma, otypes=[float])
    for p in range(1, max_terms + 1):
        s = (sums[:, None] + values[None, :]).ravel()
        lw = (logw[:, None] + log_counts[None, :]).ravel()
        keys, inv = np.unique(np.round(s, 12), return_inverse=True)
        merged = np.full(keys.size, -np.inf)
        np.logaddexp.at(merged, inv, lw)
        sums, logw = keys, merged
        term = float(np.sum(np.exp(logw + p * log_z - lgamma(a_ij + sums))))
        total += term
        # past the minimum of Gamma the terms decrease monotonically
        if a_ij + p * values.min() > 2.0 and term <= prev and term < 1e-14 * total:
            return total, p + 1
        prev = term
    raise ConvergenceError(f"Theta series did not converge in {max_terms} terms")


def theta_bound(M: float, alpha, a: float, b: float) -> ThetaBound:
    r"""Majorant constant :math:`\Theta^b` for the R-L transition matrix.

    With :math:`\beta = \min\alpha`, :math:`\gamma = \max\alpha` and
    :math:`\delta = \beta` if ``b - a < 1`` else :math:`\gamma`,

    .. math::

        \Theta^b_{ij} = \sum_{p\ge 0} (M (b-a)^{\delta})^p
        \sum_{k_1,\dots,k_p} \frac{1}{\Gamma(\alpha_{ij} + \sum_q \alpha_{k_q j})},

    summed until a term falls below ``1e-14`` of the partial sum, and
    :math:`\Theta^b = \max_{ij}\Theta^b_{ij}`.  ``M`` bounds every entry of
    ``A`` on ``[a, b]``.
    """
    if not (M >= 0 and math.isfinite(M)):
        raise ValueError(f"M must be a finite number >= 0, got {M}")
    if not b > a:
        raise ValueError("need b > a")
    order = _matrix_order(alpha)
    al = order.values
    beta, gam = float(al.min()), float(al.max())
    delta = beta if b - a < 1.0 else gam
    z = M * (b - a) ** delta
    m = order.m
    entries = np.zeros((m, m))
    used = 0
    for i in range(m):
        for j in range(m):
            entries[i, j], n = _theta_entry(float(al[i, j]), al[:, j], z)
            used = max(used, n)
    return ThetaBound(float(entries.max()), float(b), used, float(M), beta, gam, delta, entries)


def check_theta(tableau: TransitionTableau, bound: ThetaBound) -> float:
    r"""Largest value of :math:`|Z_{ij}(t,s)|(t-s)^{1-\alpha_{ij}} - \Theta^b` over stored blocks.

    A tableau within the bound returns a value ``<= 0``.
    """
    if tableau.kind != "rl":
        raise ValueError("check_theta needs an R-L tableau")
    nodes = tableau.grid.nodes
    al = tableau.order.values
    n_idx, p_idx = np.tril_indices(tableau.grid.n, -1)
    x = (nodes[n_idx] - nodes[p_idx])[:, None, None]
    sing = np.diag(tableau.amplitude)[None, :] * x[:, :, 0] ** (tableau.singular_orders[None, :] - 1.0)
    Z = tableau.regular[n_idx, p_idx].copy()
    idx = np.arange(tableau.m)
    Z[:, idx, idx] += sing
    return float(np.max(np.abs(Z) * x ** (1.0 - al[None]) - bound.theta))


# --------------------------------------------------------------------------- moment tableaus


@dataclass(frozen=True)
class MomentTableau:
    r"""Hat-function moments ``values[n, i, j, c]`` of a transition matrix.

    For ``side="left"`` the entry is
    :math:`\int_a^{t_n} Z_{ic}(t_n,s)\varphi_j(s)\,ds`, computed from the
    left-sided equation; ``side="right"`` holds the same quantity computed
    from the right-sided (dual) equation.
    """

    grid: TimeGrid
    kind: Kind
    side: Literal["left", "right"]
    order: VectorOrder
    values: np.ndarray = field(repr=False)
    iterations: int = 0
    residual: float = 0.0

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    def apply(self, B: np.ndarray) -> np.ndarray:
        r"""Node values of :math:`\int_a^{t_n} Z(t_n,s) B(s)\,ds` for piecewise-linear ``B`` (``(N, m)``)."""
        return np.einsum("nijc,jc->ni", self.values, B)


def transition_moments(
    A,
    alpha,
    grid: TimeGrid | None = None,
    kind: Kind = "rl",
    side: Literal["left", "right"] = "left",
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> MomentTableau:
    r"""Moment tableau of ``Z`` (``kind="rl"``) or ``cZ`` (``kind="caputo"``).

    Writing :math:`D` for the product-rule integral with the row orders and
    :math:`H` for the cumulative trapezoid, the left moments solve

    .. math::

        \Omega = D\,[\mathrm{Id}] + D\,[A\,\Omega] \quad(\text{R-L}), \qquad
        \Omega = H\,[\mathrm{Id}] + D\,[A\,\Omega] \quad(\text{Caputo}),

    where :math:`D[\mathrm{Id}]_{nj} = \int_a^{t_n} k(t_n,s)\varphi_j(s)ds` is exact.
    The right-sided equation integrates against the kernel in ``s`` with the
    column orders, which acts on the moment index from the right:

    .. math::

        T = D[\mathrm{Id}] + (T A)\,D \quad(\text{R-L}), \qquad
        T = H[\mathrm{Id}] + (T A)\,D \quad(\text{Caputo}).
    """
    A_s, g, m = _coefficient(A, grid)
    v = _row_vector_order(alpha, m)
    orders = v.array
    nodes = g.nodes
    N = g.n
    Ws = {w: product_weights(nodes, w) for w in np.unique(orders)}
    W_comp = [Ws[w] for w in orders]
    H = hat_integrals(nodes)
    first = np.zeros((N, m, N, m))
    for i in range(m):
        first[:, i, :, i] = W_comp[i] if kind == "rl" else H

    if side == "left":

        def step(X):
            AX = np.einsum("kil,kljc->kijc", A_s, X)
            out = np.empty_like(X)
            for i in range(m):
                out[:, i] = np.tensordot(W_comp[i], AX[:, i], axes=(1, 0))
            return first + out

    elif side == "right":

        def step(X):
            XA = np.einsum("nikp,kpl->nikl", X, A_s)
            out = np.empty_like(X)
            for c in range(m):
                out[..., c] = np.tensordot(XA[..., c], W_comp[c], axes=(2, 0))
            return first + out

    else:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    X, it, d = _picard_linear(step, first.copy(), tol, max_iter, f"{side} {kind} moment tableau")
    return MomentTableau(g, kind, side, v, X, it, d)


# --------------------------------------------------------------------------- Duhamel formulas


def _forcing(B, grid: TimeGrid, m: int) -> np.ndarray:
    if isinstance(B, GridFunction) and B.grid != grid:
        raise DimensionError("B is sampled on a different grid")
    return _vector_samples(B, grid.nodes, m)


def _linear_setup(A, B, q_a, alpha, grid):
    A_s, g, m = _coefficient(A, grid)
    v = _row_vector_order(alpha, m)
    B_s = _forcing(B, g, m)
    qa = np.asarray(q_a, dtype=float).reshape(-1)
    if qa.size != m:
        raise DimensionError(f"q_a has {qa.size} entries, expected {m}")
    hom = Dynamic.linear(GridFunction(g, A_s))
    return A_s, g, m, v, B_s, qa, hom


def duhamel_rl(A, B, q_a, alpha, grid: TimeGrid | None = None, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> SingularGridFunction:
    r"""R-L Duhamel formula :math:`Z(t,a) q_a + \int_a^t Z(t,s) B(s)\,ds`.

    The term :math:`Z(t,a)q_a` keeps its singular part in closed form (weight
    ``q_a``); its remainder is the homogeneous R-L solve with data ``q_a``.
    The convolution uses the left moment tableau, exact for
    piecewise-linear ``B``.  Only row-constant orders are accepted.
    """
    A_s, g, m, v, B_s, qa, hom = _linear_setup(A, B, q_a, alpha, grid)
    hom_sol, _ = picard_rl(hom, v, qa, g, tol=tol, max_iter=max_iter)
    omega = transition_moments(GridFunction(g, A_s), v, g, "rl", "left", tol, max_iter)
    regular = hom_sol.regular.values + omega.apply(B_s)
    return SingularGridFunction(g, v.array, qa, GridFunction(g, regular))


def duhamel_caputo(A, B, q_a, alpha, grid: TimeGrid | None = None, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> GridFunction:
    r"""Caputo Duhamel formula :math:`cZ(t,a) q_a + \int_a^t Z(t,s) B(s)\,ds`.

    Note that the convolution kernel is the R-L matrix ``Z``.  The term
    :math:`cZ(t,a) q_a` is the homogeneous Caputo solve with data ``q_a``.
    """
    A_s, g, m, v, B_s, qa, hom = _linear_setup(A, B, q_a, alpha, grid)
    hom_sol, _ = picard_caputo(hom, v, qa, g, tol=tol, max_iter=max_iter)
    omega = transition_moments(GridFunction(g, A_s), v, g, "rl", "left", tol, max_iter)
    return GridFunction(g, hom_sol.values + omega.apply(B_s))


@dataclass(frozen=True)
class MixedDuhamelResult:
    """A mixed Duhamel evaluation and its defect in the claimed integral equation.

    ``forcing`` is :math:`I^{1-\\alpha}_{a+}[B]`; ``residual`` is the sup over
    nodes of the defect (regular part only for ``q1``).
    """

    which: Literal["q1", "q2"]
    solution: GridFunction | SingularGridFunction
    forcing: SingularGridFunction
    residual: float


def _fractional_forcing(B_s: np.ndarray, v: VectorOrder, g: TimeGrid) -> SingularGridFunction:
    """:math:`I^{1-\\alpha}[B]` with the constant part ``B(a)`` integrated exactly."""
    comp = 1.0 - v.array
    regular = apply_product_rule(g.nodes, B_s - B_s[0], comp)
    return SingularGridFunction(g, 2.0 - v.array, B_s[0], GridFunction(g, regular))


def mixed_duhamel(
    A,
    B,
    q_a,
    alpha,
    grid: TimeGrid | None = None,
    which: Literal["q1", "q2"] = "q2",
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> MixedDuhamelResult:
    r"""Mixed formulas with the Caputo kernel in the convolution.

    ``q1 = Z(t,a) q_a + \int cZ(t,s) B(s) ds`` is checked against
    :math:`q = K q_a + I^{\alpha}[A q + F]` and
    ``q2 = cZ(t,a) q_a + \int cZ(t,s) B(s) ds`` against
    :math:`q = q_a + I^{\alpha}[A q + F]`, where :math:`F = I^{1-\alpha}[B]`
    and :math:`K q_a` is the singular R-L term.
    """
    if which not in ("q1", "q2"):
        raise ValueError(f"which must be 'q1' or 'q2', got {which!r}")
    A_s, g, m, v, B_s, qa, hom = _linear_setup(A, B, q_a, alpha, grid)
    C = transition_moments(GridFunction(g, A_s), v, g, "caputo", "left", tol, max_iter)
    conv = C.apply(B_s)
    F = _fractional_forcing(B_s, v, g)
    IF = frac_integral_left(F, v).values
    if which == "q2":
        hom_sol, _ = picard_caputo(hom, v, qa, g, tol=tol, max_iter=max_iter)
        q = hom_sol.values + conv
        defect = q - qa - apply_product_rule(g.nodes, hom.evaluate(q, g.nodes), v.array) - IF
        sol = GridFunction(g, q)
    else:
        hom_sol, _ = picard_rl(hom, v, qa, g, tol=tol, max_iter=max_iter)
        r = hom_sol.regular.values + conv
        defect = r - _RLMap(v, qa, g).apply(hom, r) - IF
        sol = SingularGridFunction(g, v.array, qa, GridFunction(g, r))
    return MixedDuhamelResult(which, sol, F, float(np.max(np.abs(defect))))


# --------------------------------------------------------------------------- duality


def _discrepancy(left: MomentTableau, right: MomentTableau) -> float:
    r"""Largest gap between the two sides integrated in ``s``.

    Summing hat moments over ``j' <= j`` gives
    :math:`\int_a^{t_n} (T - Z)(t_n,s)\,\psi_j(s)\,ds` with :math:`\psi_j` the
    ramp equal to 1 on ``[a, t_j]``; the maximum over ``n, j`` measures the
    difference of the two antiderivatives in ``s``.  Unlike raw moments it does
    not shrink with the mesh width, so a genuine discrepancy stays visible
    under refinement.
    """
    return float(np.max(np.abs(np.cumsum(right.values - left.values, axis=2)), initial=0.0))


def duality_residual_rl(A, alpha, grid: TimeGrid | None = None, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> float:
    r"""Gap between the left R-L transition matrix and the right-sided solution.

    Both sides are represented by their hat moments in ``s``; the left side
    uses the row orders, the right side the column orders, and each is
    iterated independently.  The gap is measured on the antiderivatives in
    ``s`` (see :func:`_discrepancy`).
    """
    left = transition_moments(A, alpha, grid, "rl", "left", tol, max_iter)
    right = transition_moments(A, alpha, grid, "rl", "right", tol, max_iter)
    return _discrepancy(left, right)


def duality_residual_caputo(A, alpha, grid: TimeGrid | None = None, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> float:
    r"""Gap between the left Caputo transition matrix and the right-sided solution.

    Only constant coefficients are accepted (a constant matrix, or a grid
    function whose samples are all equal).
    """
    if isinstance(A, GridFunction):
        if not np.all(A.values == A.values[0]):
            raise UnsupportedProblemError("the Caputo duality check requires a constant coefficient A")
    elif callable(A):
        raise UnsupportedProblemError("the Caputo duality check requires a constant coefficient A")
    left = transition_moments(A, alpha, grid, "caputo", "left", tol, max_iter)
    right = transition_moments(A, alpha, grid, "caputo", "right", tol, max_iter)
    return _discrepancy(left, right)
