r"""Picard solvers for nonlinear multi-order Cauchy problems.

Both problems are solved through their integral representations,

.. math::

    \text{R-L:}\quad q = \frac{(t-a)^{\alpha-1}}{\Gamma(\alpha)} q_a + I^{\alpha}_{a+}[f(q,\cdot)],
    \qquad
    \text{Caputo:}\quad q = q_a + I^{\alpha}_{a+}[f(q,\cdot)],

by successive approximation.  Convergence is measured in Bielecki norms
(exponentially weighted in time), whose weight ``k`` is chosen so that the
Picard map is a contraction with constant at most ``1/2``.

For the R-L problem the unknown is the bounded remainder ``r`` in
:math:`q = K q_a + r`, where :math:`K q_a` is the singular term.  The forcing is
split as :math:`f(Kq_a + r) = [f(Kq_a + r) - f(r)] + f(r)`: the bracket carries
the singularity and is integrated with Beta-moment weights for
:math:`(\tau-a)^{\sigma-1} h(\tau)`, the rest with the plain product rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .calculus import apply_product_rule
from .errors import (
    ConvergenceError,
    DimensionError,
    DomainError,
    DomainExitError,
    UnsupportedDomainError,
)
from .grid import GridFunction, SingularGridFunction, TimeGrid, default_grading, make_grid
from .multiorder import VectorOrder, as_vector_order
from .quadrature import weighted_weights
from .special import gamma

__all__ = [
    "Dynamic",
    "SolveReport",
    "MaximalVerdict",
    "ExtendOptions",
    "bielecki_norm_l1",
    "bielecki_norm_sup",
    "choose_k",
    "estimate_lipschitz",
    "picard_rl",
    "picard_caputo",
    "extend_maximal",
]

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 200


# --------------------------------------------------------------------------- dynamics


def _matrix_samples(A, t: np.ndarray, m: int) -> np.ndarray:
    """Values of a matrix coefficient at times ``t``, shape ``(len(t), m, m)``."""
    if isinstance(A, GridFunction):
        out = A(t)
    elif callable(A):
        out = np.array([np.asarray(A(float(s)), dtype=float) for s in t])
    else:
        out = np.broadcast_to(np.asarray(A, dtype=float), (t.size, m, m))
    if out.shape != (t.size, m, m):
        raise DimensionError(f"coefficient A must be {m}x{m}, got samples of shape {out.shape[1:]}")
    return out


def _vector_samples(B, t: np.ndarray, m: int) -> np.ndarray:
    """Values of a vector forcing at times ``t``, shape ``(len(t), m)``."""
    if B is None:
        return np.zeros((t.size, m))
    if isinstance(B, GridFunction):
        out = B(t)
    elif callable(B):
        out = np.array([np.asarray(B(float(s)), dtype=float) for s in t])
    else:
        out = np.broadcast_to(np.asarray(B, dtype=float), (t.size, m))
    if out.shape != (t.size, m):
        raise DimensionError(f"forcing B must have {m} components, got samples of shape {out.shape[1:]}")
    return out


@dataclass(frozen=True)
class Dynamic:
    """Right-hand side ``f(x, t)`` of a Cauchy problem with its metadata.

    ``eval(x, t)`` maps a state in ``R^m`` and a time to ``R^m``.  With
    ``vectorized=True`` it instead receives all nodes at once, ``x`` of shape
    ``(N, m)`` and ``t`` of shape ``(N,)``, and returns ``(N, m)``.
    ``domain_test(x)`` returns ``True`` when ``x`` lies in the state domain;
    ``None`` means the whole space.
    """

    dimension: int
    eval: Callable
    lipschitz: float | None = None
    bound: float | None = None
    domain_test: Callable | None = None
    vectorized: bool = False
    A: object = field(default=None, compare=False, repr=False)
    B: object = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if int(self.dimension) != self.dimension or self.dimension < 1:
            raise DimensionError(f"dimension must be a positive integer, got {self.dimension}")
        for name in ("lipschitz", "bound"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be a finite number >= 0, got {v}")

    @classmethod
    def linear(cls, A, B=None, dimension: int | None = None, lipschitz: float | None = None) -> "Dynamic":
        """``f(x, t) = A(t) x + B(t)``.

        ``A`` is a constant ``m x m`` array, a matrix :class:`GridFunction` or a
        callable of ``t``; ``B`` likewise for vectors (``None`` means zero).
        Unless given, the Lipschitz constant is the largest row-sum norm of
        ``A`` over its samples (constant or grid-sampled ``A`` only).
        """
        if dimension is None:
            if isinstance(A, GridFunction):
                dimension = A.shape[0]
            elif callable(A):
                raise DimensionError("give the dimension explicitly for a callable A")
            else:
                dimension = np.asarray(A).shape[0]
        m = int(dimension)
        if lipschitz is None:
            if isinstance(A, GridFunction):
                lipschitz = float(np.max(np.abs(A.values).sum(axis=-1)))
            elif not callable(A):
                lipschitz = float(np.max(np.abs(np.asarray(A, dtype=float)).sum(axis=-1)))

        def f(x, t):
            t = np.atleast_1d(np.asarray(t, dtype=float))
            return np.einsum("nij,nj->ni", _matrix_samples(A, t, m), x) + _vector_samples(B, t, m)

        return cls(m, f, lipschitz=lipschitz, vectorized=True, A=A, B=B)

    @property
    def is_linear(self) -> bool:
        return self.A is not None

    def evaluate(self, x: np.ndarray, t: np.ndarray) -> np.ndarray:
        """``f`` at every row of ``x`` (shape ``(N, m)``) and matching times ``t``."""
        if self.vectorized:
            out = np.asarray(self.eval(x, t), dtype=float)
        else:
            out = np.array([np.asarray(self.eval(xi, float(ti)), dtype=float).reshape(-1) for xi, ti in zip(x, t)])
        if out.shape != x.shape:
            raise DimensionError(f"dynamics returned shape {out.shape}, expected {x.shape}")
        return out

    def inside(self, x: np.ndarray) -> bool:
        return True if self.domain_test is None else bool(self.domain_test(x))


def estimate_lipschitz(f: Dynamic, center, t_samples, radius: float = 1.0, samples: int = 32, seed: int = 0) -> float:
    """Finite-difference estimate of the Lipschitz constant around ``center``.

    Jacobians are approximated at ``samples`` points drawn (with a fixed seed)
    from the box of half-width ``radius`` and at times from ``t_samples``; the
    largest row-sum norm is returned.
    """
    rng = np.random.default_rng(seed)
    m = f.dimension
    center = np.asarray(center, dtype=float).reshape(m)
    t_samples = np.asarray(t_samples, dtype=float)
    pts = center + rng.uniform(-radius, radius, (samples, m))
    ts = rng.choice(t_samples, samples)
    jac = np.empty((samples, m, m))
    with np.errstate(all="ignore"):
        base = f.evaluate(pts, ts)
        for j in range(m):
            h = 1e-6 * np.maximum(1.0, np.abs(pts[:, j]))
            shifted = pts.copy()
            shifted[:, j] += h
            jac[:, :, j] = (f.evaluate(shifted, ts) - base) / h[:, None]
    norms = np.abs(jac).sum(axis=2).max(axis=1)
    norms = norms[np.isfinite(norms)]
    return float(norms.max()) if norms.size else 0.0


# --------------------------------------------------------------------------- norms


def _values_of(q) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(q, SingularGridFunction):
        raise TypeError("Bielecki norms are defined here for bounded (GridFunction) arguments")
    return q.grid.nodes, q.values.reshape(q.grid.n, -1)


def _pointwise_norm(values: np.ndarray) -> np.ndarray:
    return np.max(np.abs(values), axis=1) if values.shape[1] else np.zeros(values.shape[0])


def _bl1(nodes: np.ndarray, values: np.ndarray, k: float) -> float:
    w = np.exp(-k * (nodes - nodes[0])) * _pointwise_norm(values)
    return float(np.sum(0.5 * (w[1:] + w[:-1]) * np.diff(nodes)))


def _bsup(nodes: np.ndarray, values: np.ndarray, k: float) -> float:
    return float(np.max(np.exp(-k * (nodes - nodes[0])) * _pointwise_norm(values)))


def _check_grid(q, grid):
    if grid is not None and grid != q.grid:
        raise DimensionError("the function is sampled on a different grid")


def bielecki_norm_l1(q: GridFunction, grid: TimeGrid | None = None, k: float = 0.0) -> float:
    r"""Trapezoidal :math:`\int_a^b e^{-k(\tau-a)} |q(\tau)|\,d\tau` with the max-norm on ``R^m``."""
    _check_grid(q, grid)
    if k < 0:
        raise ValueError("k must be >= 0")
    return _bl1(*_values_of(q), k)


def bielecki_norm_sup(q: GridFunction, grid: TimeGrid | None = None, k: float = 0.0) -> float:
    r""":math:`\max_{t_n} e^{-k(t_n-a)} |q(t_n)|` over the nodes, with the max-norm on ``R^m``."""
    _check_grid(q, grid)
    if k < 0:
        raise ValueError("k must be >= 0")
    return _bsup(*_values_of(q), k)


def choose_k(L: float, alpha) -> tuple[int, float]:
    r"""Smallest integer ``k >= 1`` with :math:`\ell = L \sum_i k^{-\alpha_i} \le 1/2`; returns ``(k, ell)``.

    >>> choose_k(1.0, VectorOrder((1.0,)))
    (2, 0.5)
    """
    if not (L >= 0 and math.isfinite(L)):
        raise ValueError(f"L must be a finite number >= 0, got {L}")
    al = np.asarray(as_vector_order(alpha).values)

    def ell(k: int) -> float:
        return float(L * np.sum(float(k) ** (-al)))

    if ell(1) <= 0.5:
        return 1, ell(1)
    lo, hi = 1, 2
    while ell(hi) > 0.5:
        lo, hi = hi, hi * 2
    while hi - lo > 1:  # ell is decreasing in k: keep ell(lo) > 1/2 >= ell(hi)
        mid = (lo + hi) // 2
        if ell(mid) > 0.5:
            lo = mid
        else:
            hi = mid
    return hi, ell(hi)


# --------------------------------------------------------------------------- Picard


@dataclass(frozen=True)
class SolveReport:
    """Outcome of a Picard solve.

    ``final_residual`` is the Bielecki-norm distance between the last two
    iterates (L1 weighting for R-L, sup weighting for Caputo); ``history``
    holds that distance for every iteration.
    """

    iterations: int
    final_residual: float
    converged: bool
    bielecki_k: int
    contraction_ell: float
    lipschitz: float
    lipschitz_estimated: bool = False
    history: tuple[float, ...] = ()


def _lipschitz_for(f: Dynamic, q_a: np.ndarray, grid: TimeGrid) -> tuple[float, bool]:
    if f.lipschitz is not None:
        return float(f.lipschitz), False
    return estimate_lipschitz(f, q_a, grid.nodes), True


def _initial(initial, grid: TimeGrid, q_a: np.ndarray) -> np.ndarray:
    m = q_a.size
    if isinstance(initial, str):
        if initial == "zero":
            return np.zeros((grid.n, m))
        if initial == "constant":
            return np.broadcast_to(q_a, (grid.n, m)).copy()
        raise ValueError(f"initial guess must be 'zero', 'constant' or an array, got {initial!r}")
    if isinstance(initial, GridFunction):
        initial = initial.values
    arr = np.array(initial, dtype=float)
    if arr.shape != (grid.n, m):
        raise DimensionError(f"initial guess must have shape {(grid.n, m)}, got {arr.shape}")
    return arr


def _run_picard(step, y0, nodes, norm, k, ell, L, L_est, tol, max_iter):
    y = y0
    history: list[float] = []
    for it in range(1, max_iter + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            y_new = step(y)
        if not np.all(np.isfinite(y_new)):
            rep = SolveReport(it, math.inf, False, k, ell, L, L_est, tuple(history))
            raise ConvergenceError(f"Picard iterate {it} is not finite", residual=math.inf, report=rep)
        diff = y_new - y
        res = norm(nodes, diff, k)
        history.append(res)
        y = y_new
        if res <= tol and np.max(np.abs(diff), initial=0.0) <= tol * max(1.0, float(np.max(np.abs(y), initial=0.0))):
            return y, SolveReport(it, res, True, k, ell, L, L_est, tuple(history))
    rep = SolveReport(max_iter, history[-1], False, k, ell, L, L_est, tuple(history))
    raise ConvergenceError(
        f"Picard iteration did not converge in {max_iter} iterations (residual {history[-1]:.3e})",
        residual=history[-1],
        report=rep,
    )


def _setup(f: Dynamic, alpha, q_a, grid: TimeGrid):
    m = f.dimension
    al = as_vector_order(alpha, m)
    qa = np.asarray(q_a, dtype=float).reshape(-1)
    if qa.size != m:
        raise DimensionError(f"q_a has {qa.size} entries, expected {m}")
    if not np.all(np.isfinite(qa)):
        raise DomainError("q_a must be finite")
    L, L_est = _lipschitz_for(f, qa, grid)
    k, ell = choose_k(L, al)
    return al, qa, L, L_est, k, ell


def picard_caputo(
    f: Dynamic,
    alpha,
    q_a,
    grid: TimeGrid,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    initial="zero",
) -> tuple[GridFunction, SolveReport]:
    r"""Solve :math:`q = q_a + I^{\alpha}_{a+}[f(q,\cdot)]` by Picard iteration.

    Iteration stops once the Bielecki sup-distance between successive iterates
    is at most ``tol`` and the plain sup-distance is at most
    ``tol * max(1, sup|q|)``.  ``q(a) = q_a`` holds exactly.

    Raises
    ------
    ConvergenceError
        After ``max_iter`` iterations, or when an iterate is not finite.
    DomainExitError
        When an iterate leaves the state domain of ``f``.
    """
    al, qa, L, L_est, k, ell = _setup(f, alpha, q_a, grid)
    if not f.inside(qa):
        raise DomainError("q_a lies outside the state domain")
    nodes = grid.nodes
    orders = al.array

    def step(y):
        if f.domain_test is not None:
            for n in range(grid.n):
                if not f.inside(y[n]):
                    raise DomainExitError(f"Picard iterate left the domain at t={nodes[n]:.6g}", nodes[n], y[n].copy())
        return qa + apply_product_rule(nodes, f.evaluate(y, nodes), orders)

    y, rep = _run_picard(step, _initial(initial, grid, qa), nodes, _bsup, k, ell, L, L_est, tol, max_iter)
    return GridFunction(grid, y), rep


class _RLMap:
    """The R-L Picard map on the bounded remainder, shared with the Duhamel code."""

    def __init__(self, alpha: VectorOrder, q_a: np.ndarray, grid: TimeGrid):
        self.grid = grid
        self.orders = alpha.array
        self.q_a = q_a
        nodes = grid.nodes
        x = nodes - grid.a
        active = q_a != 0.0
        self.active = bool(np.any(active))
        if self.active:
            self.sigma = float(np.min(self.orders[active]))
            xs = x[1:, None]
            self.singular = q_a * xs ** (self.orders - 1.0) / np.array([gamma(o) for o in self.orders])
            self.x_factor = x[1:, None] ** (1.0 - self.sigma)
            self.S = {o: weighted_weights(nodes, o, self.sigma) for o in np.unique(self.orders)}

    def singular_source(self, bracket: np.ndarray) -> np.ndarray:
        """Beta-moment integral of a singular forcing given at nodes ``1..N-1``."""
        h = np.empty((self.grid.n, bracket.shape[1]))
        h[1:] = self.x_factor * bracket
        h[0] = h[1]
        out = np.empty_like(h)
        for o, S in self.S.items():
            cols = self.orders == o
            out[:, cols] = S @ h[:, cols]
        return out

    def apply(self, f: Dynamic, r: np.ndarray) -> np.ndarray:
        nodes = self.grid.nodes
        fr = f.evaluate(r, nodes)
        out = apply_product_rule(nodes, fr, self.orders)
        if self.active:
            bracket = f.evaluate(self.singular + r[1:], nodes[1:]) - fr[1:]
            out = out + self.singular_source(bracket)
        return out


def picard_rl(
    f: Dynamic,
    alpha,
    q_a,
    grid: TimeGrid,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    initial="zero",
) -> tuple[SingularGridFunction, SolveReport]:
    r"""Solve :math:`q = (t-a)^{\alpha-1}/\Gamma(\alpha)\, q_a + I^{\alpha}_{a+}[f(q,\cdot)]` by Picard iteration.

    The result carries the singular term symbolically (weight ``q_a``, orders
    ``alpha``) and samples only the bounded remainder.  Convergence uses the
    Bielecki L1 distance of successive remainders plus the same sup-distance
    test as :func:`picard_caputo`.

    Raises
    ------
    UnsupportedDomainError
        If ``f`` declares a state domain other than the whole space.
    ConvergenceError
        After ``max_iter`` iterations, or when an iterate is not finite.
    """
    if f.domain_test is not None:
        raise UnsupportedDomainError("the R-L solver handles only the whole space as state domain")
    al, qa, L, L_est, k, ell = _setup(f, alpha, q_a, grid)
    rl_map = _RLMap(al, qa, grid)
    r, rep = _run_picard(
        lambda y: rl_map.apply(f, y), _initial(initial, grid, qa), grid.nodes, _bl1, k, ell, L, L_est, tol, max_iter
    )
    return SingularGridFunction(grid, al.array, qa, GridFunction(grid, r)), rep


# --------------------------------------------------------------------------- maximal solutions


@dataclass(frozen=True)
class MaximalVerdict:
    """Result of :func:`extend_maximal`.

    ``kind="global"`` means no exit from the compact was seen up to
    ``horizon = b_max`` (global on ``[a, b_max]`` only).  ``kind="escaped"``
    carries the first node time outside the compact and the state there.
    """

    kind: Literal["global", "escaped"]
    horizon: float
    escape_time: float | None = None
    witness: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in ("global", "escaped"):
            raise ValueError(f"unknown verdict kind {self.kind!r}")
        if (self.kind == "escaped") != (self.escape_time is not None):
            raise ValueError("escape_time is present exactly for escaped verdicts")


@dataclass(frozen=True)
class ExtendOptions:
    """Windowing parameters of :func:`extend_maximal`.

    The horizon grows in steps of ``(b_max - a) / n_windows``; a failed window
    is retried with half the step until it drops below ``min_step`` (default
    ``step / 256``).  Every window is solved from ``a`` on a fresh grid with
    ``N`` nodes.  The default grading is capped at 2: near a blow-up the
    spacing at the end of the window matters more than the layer at ``a``.
    """

    a: float = 0.0
    N: int = 256
    grading: float | None = None
    n_windows: int = 8
    min_step: float | None = None
    tol: float = DEFAULT_TOL
    max_iter: int = 2000


def extend_maximal(
    f: Dynamic,
    alpha,
    q_a,
    compact_radius: float,
    b_max: float,
    options: ExtendOptions = ExtendOptions(),
) -> tuple[GridFunction, MaximalVerdict]:
    r"""Follow the Caputo solution on growing windows until it leaves a compact or reaches ``b_max``.

    The compact is the closed Euclidean ball of radius ``compact_radius``
    around the origin, intersected with the state domain of ``f``.  Each
    window re-solves the whole history from ``a`` (warm-started from the
    previous window), because the fractional operator is non-local.

    Raises
    ------
    ConvergenceError
        If Picard fails on every admissible extension while the solution is
        still inside the compact.
    """
    opts = options
    a = float(opts.a)
    if not b_max > a:
        raise ValueError("b_max must exceed a")
    al = as_vector_order(alpha, f.dimension)
    qa = np.asarray(q_a, dtype=float).reshape(-1)

    def in_compact(x: np.ndarray) -> bool:
        return bool(np.linalg.norm(x) <= compact_radius) and f.inside(x)

    if not in_compact(qa):
        raise DomainError("q_a must lie inside the compact")
    grading = opts.grading if opts.grading is not None else min(default_grading(al), 2.0)
    delta = (b_max - a) / opts.n_windows
    min_step = opts.min_step if opts.min_step is not None else delta / 256.0
    b_cur = a
    current: GridFunction | None = None
    while b_cur < b_max:
        step = delta
        while True:
            b_try = min(b_cur + step, b_max)
            grid = make_grid(a, b_try, opts.N, grading)
            init = "constant" if current is None else current(grid.nodes)
            try:
                q, _ = picard_caputo(f, al, qa, grid, opts.tol, opts.max_iter, initial=init)
                break
            except (ConvergenceError, DomainExitError) as exc:
                step /= 2.0
                if step < min_step:
                    raise ConvergenceError(
                        f"cannot extend the solution beyond t={b_cur:.6g} while it stays inside the compact",
                        residual=getattr(exc, "residual", math.nan),
                    ) from exc
        for n in range(grid.n):
            if not in_compact(q.values[n]):
                return q, MaximalVerdict("escaped", b_try, float(grid.nodes[n]), q.values[n].copy())
        b_cur, current = b_try, q
    return current, MaximalVerdict("global", b_max)
