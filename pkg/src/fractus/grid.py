r"""Time grids and sampled functions.

Nodes follow the graded law :math:`t_k = a + (b-a)\,(k/(N-1))^{g}`, which
clusters points near :math:`a` where fractional solutions behave like
:math:`(t-a)^{\alpha}`.  A grid can also be anchored at the right endpoint;
that is what time reflection :math:`t \mapsto a + b - t` turns a left-anchored
grid into.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import DimensionError, GridError

__all__ = ["TimeGrid", "GridFunction", "SingularGridFunction", "make_grid", "reflect", "default_grading"]


def _readonly(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing nodes on ``[a, b]`` with graded spacing.

    ``anchor="left"`` clusters nodes near ``a`` (the usual case);
    ``anchor="right"`` is the mirror image and clusters them near ``b``.
    """

    a: float
    b: float
    n: int
    grading: float = 1.0
    anchor: Literal["left", "right"] = "left"
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        a, b, g = float(self.a), float(self.b), float(self.grading)
        n = int(self.n)
        if not (np.isfinite(a) and np.isfinite(b)) or not b > a:
            raise GridError(f"need finite a < b, got a={a}, b={b}")
        if n < 2 or n != self.n:
            raise GridError(f"need an integer node count N >= 2, got {self.n}")
        if not np.isfinite(g) or g < 1.0:
            raise GridError(f"grading must be >= 1, got {g}")
        if self.anchor not in ("left", "right"):
            raise GridError(f"anchor must be 'left' or 'right', got {self.anchor!r}")
        xi = (np.arange(n) / (n - 1)) ** g
        if self.anchor == "left":
            t = a + (b - a) * xi
            t[-1] = b
        else:
            t = b - (b - a) * xi[::-1]
            t[0] = a
        if np.any(np.diff(t) <= 0):
            raise GridError("grading too strong for this node count: nodes are not strictly increasing")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "grading", g)
        object.__setattr__(self, "nodes", _readonly(t))

    @property
    def N(self) -> int:
        return self.n

    @property
    def length(self) -> float:
        return self.b - self.a

    def reflected(self) -> "TimeGrid":
        """The grid seen through ``t -> a + b - t`` (anchor swapped)."""
        return TimeGrid(self.a, self.b, self.n, self.grading, "right" if self.anchor == "left" else "left")

    def __len__(self) -> int:
        return self.n


def make_grid(a: float, b: float, N: int, grading: float = 1.0) -> TimeGrid:
    """Left-anchored graded grid; ``grading=1`` gives uniform spacing.

    >>> make_grid(0.0, 1.0, 3, 2.0).nodes.tolist()
    [0.0, 0.25, 1.0]
    """
    return TimeGrid(a, b, N, grading)


def default_grading(alpha) -> float:
    """Solver grading ``min(2 / min(alpha), 4)`` for the ``(t-a)^alpha`` boundary layer."""
    lo = float(np.min(np.asarray(getattr(alpha, "values", alpha), dtype=float)))
    return min(2.0 / lo, 4.0)


@dataclass(frozen=True)
class GridFunction:
    """A function sampled at every node of a grid.

    ``values`` has shape ``(N,) + shape``: scalar, vector ``(m,)`` or matrix
    ``(m, n)`` samples.  Evaluation between nodes is piecewise linear.
    """

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 0 or vals.shape[0] != self.grid.n:
            raise DimensionError(f"need one sample per node ({self.grid.n}), got shape {vals.shape}")
        object.__setattr__(self, "values", _readonly(vals))

    @classmethod
    def from_callable(cls, grid: TimeGrid, fn) -> "GridFunction":
        """Sample ``fn(t)`` at every node."""
        return cls(grid, np.array([np.asarray(fn(t), dtype=float) for t in grid.nodes]))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape[1:]

    def __call__(self, t):
        """Piecewise-linear interpolation, constant extrapolation outside ``[a, b]``."""
        t_arr = np.asarray(t, dtype=float)
        flat = self.values.reshape(self.grid.n, -1)
        cols = [np.interp(t_arr, self.grid.nodes, flat[:, c]) for c in range(flat.shape[1])]
        out = np.stack(cols, axis=-1) if cols else np.zeros(t_arr.shape + (0,))
        return out.reshape(t_arr.shape + self.shape)

    def _binary(self, other, op) -> "GridFunction":
        if isinstance(other, GridFunction):
            if other.grid != self.grid:
                raise DimensionError("grid functions live on different grids")
            other = other.values
        return GridFunction(self.grid, op(self.values, other))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, other):
        return self._binary(other, np.multiply)

    __radd__ = __add__
    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)


@dataclass(frozen=True)
class SingularGridFunction:
    r"""Weakly singular function :math:`q(t) = w\,(t-a)^{\sigma-1}/\Gamma(\sigma) + r(t)`.

    The singular term is carried symbolically through its ``orders`` (one per
    component, in ``(0, 2]``) and constant ``weight``; only the bounded
    ``regular`` part is sampled.  Nothing is ever evaluated at ``t = a`` where
    the singular term may not exist.
    """

    grid: TimeGrid
    orders: np.ndarray
    weight: np.ndarray
    regular: GridFunction

    def __post_init__(self) -> None:
        if self.regular.grid != self.grid:
            raise DimensionError("regular part lives on a different grid")
        shape = self.regular.shape
        orders = np.broadcast_to(np.asarray(self.orders, dtype=float), shape)
        weight = np.broadcast_to(np.asarray(self.weight, dtype=float), shape)
        if np.any(orders <= 0.0) or np.any(orders > 2.0):
            raise DimensionError("singular orders must lie in (0, 2]")
        object.__setattr__(self, "orders", _readonly(orders))
        object.__setattr__(self, "weight", _readonly(weight))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.regular.shape

    def singular_samples(self, t=None) -> np.ndarray:
        """Values of the singular term at ``t`` (default: nodes); ``inf`` where it blows up."""
        from scipy.special import gamma as _g

        t = self.grid.nodes if t is None else np.asarray(t, dtype=float)
        x = (t - self.grid.a)[(...,) + (None,) * len(self.shape)]
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.where(self.weight == 0.0, 0.0, self.weight * x ** (self.orders - 1.0) / _g(self.orders))
        return vals

    def values_at_nodes(self, skip_first: bool = True) -> np.ndarray:
        """Full values at the nodes.

        With ``skip_first`` the components that blow up at ``a`` (nonzero
        weight, order below 1) are reported as ``nan`` at the first node
        instead of infinity; all other entries are the finite sums.
        """
        vals = np.array(self.singular_samples() + self.regular.values)
        if skip_first:
            vals[0] = np.where(np.isfinite(vals[0]), vals[0], np.nan)
        return vals


def reflect(q):
    """Time reflection ``t -> a + b - t`` of a sampled function (regular only)."""
    if isinstance(q, SingularGridFunction):
        raise DimensionError("a left-singular function has no right-anchored representation")
    if not isinstance(q, GridFunction):
        raise TypeError("reflect expects a GridFunction")
    return GridFunction(q.grid.reflected(), q.values[::-1])
