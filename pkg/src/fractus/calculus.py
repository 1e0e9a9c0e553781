r"""Left and right fractional integrals and derivatives on graded grids.

Integrals use the product trapezoidal rule of :mod:`fractus.quadrature`.
Derivatives follow the definitions literally,

.. math::

    D^{\alpha}_{a+}[q] = \frac{d}{dt} I^{1-\alpha}_{a+}[q], \qquad
    {}_cD^{\alpha}_{a+}[q] = D^{\alpha}_{a+}[q - q(a)],

with the outer derivative taken by difference quotients.  Right-sided
operators are obtained by time reflection :math:`t \mapsto a+b-t`, which also
absorbs the minus sign of :math:`D^{\alpha}_{b-} = -\frac{d}{dt} I^{1-\alpha}_{b-}`.

Orders are given per component (vector functions), per entry (matrix
functions) or as a single number.  An order equal to zero is accepted by the
integral and acts as the identity, since :math:`I^0 q = q`.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import DimensionError, DomainError, GridError, UnsupportedOrderError
from .grid import GridFunction, SingularGridFunction, TimeGrid, reflect
from .multiorder import MatrixOrder, VectorOrder, row_lift
from .quadrature import product_weights

__all__ = [
    "frac_integral_left",
    "frac_integral_right",
    "rl_derivative_left",
    "rl_derivative_right",
    "caputo_derivative_left",
    "caputo_derivative_right",
    "broadcast_orders",
    "apply_product_rule",
    "difference_quotient",
]


def broadcast_orders(alpha, shape: tuple[int, ...]) -> np.ndarray:
    """Orders as an array of the given sample ``shape``.

    A :class:`VectorOrder` applies per component; for matrix samples it is
    lifted row-wise (row ``i`` gets ``alpha_i``).  A :class:`MatrixOrder`
    applies per entry.
    """
    if isinstance(alpha, MatrixOrder):
        arr = alpha.values
    elif isinstance(alpha, VectorOrder):
        arr = alpha.array
        if len(shape) == 2:
            if shape[0] != arr.size:
                raise DimensionError(f"order has {arr.size} entries, samples have {shape[0]} rows")
            arr = row_lift(arr)[:, : shape[1]] if shape[0] == shape[1] else np.repeat(arr[:, None], shape[1], 1)
    else:
        arr = np.asarray(alpha, dtype=float)
    try:
        out = np.broadcast_to(arr, shape).astype(float)
    except ValueError as exc:
        raise DimensionError(f"orders of shape {np.shape(arr)} do not fit samples of shape {shape}") from exc
    if np.any(~np.isfinite(out)) or np.any(out < 0.0) or np.any(out > 1.0):
        raise UnsupportedOrderError(f"integral orders must lie in (0, 1] (0 acts as identity), got {np.unique(out)}")
    return out


def apply_product_rule(nodes: np.ndarray, values: np.ndarray, orders: np.ndarray) -> np.ndarray:
    """Apply the product-trapezoid integral with per-component ``orders`` to node samples.

    ``values`` has shape ``(N,) + orders.shape``.  Components with order 0
    are passed through unchanged.
    """
    n = values.shape[0]
    flat = values.reshape(n, -1)
    flat_orders = orders.reshape(-1)
    out = np.empty_like(flat)
    for w in np.unique(flat_orders):
        cols = flat_orders == w
        if w == 0.0:
            out[:, cols] = flat[:, cols]
        else:
            out[:, cols] = product_weights(nodes, w) @ flat[:, cols]
    return out.reshape(values.shape)


def _check_grid(q, grid: TimeGrid | None) -> TimeGrid:
    if grid is not None and grid != q.grid:
        raise DimensionError("the function is sampled on a different grid")
    return q.grid


def frac_integral_left(q, alpha, grid: TimeGrid | None = None):
    r"""Left Riemann-Liouville integral :math:`I^{\alpha}_{a+}[q]` at every node.

    For a :class:`SingularGridFunction` the singular term is integrated in
    closed form through the Beta integral,
    :math:`I^{\alpha}[(t-a)^{\sigma-1}/\Gamma(\sigma)] = (t-a)^{\sigma+\alpha-1}/\Gamma(\sigma+\alpha)`,
    so the result stays exact in that term.  The result is a
    :class:`GridFunction` unless some component is still singular
    (``sigma + alpha < 1``), in which case a :class:`SingularGridFunction` is
    returned.
    """
    g = _check_grid(q, grid)
    if isinstance(q, SingularGridFunction):
        orders = broadcast_orders(alpha, q.shape)
        regular = apply_product_rule(g.nodes, q.regular.values, orders)
        new_orders = q.orders + orders
        active = q.weight != 0.0
        if np.any(active & (new_orders < 1.0)):
            return SingularGridFunction(g, new_orders, q.weight, GridFunction(g, regular))
        x = (g.nodes - g.a)[(...,) + (None,) * len(q.shape)]
        sing = np.where(active, q.weight * x ** (new_orders - 1.0) / gamma_fn(new_orders), 0.0)
        return GridFunction(g, sing + regular)
    if not isinstance(q, GridFunction):
        raise TypeError("frac_integral_left expects a GridFunction or SingularGridFunction")
    orders = broadcast_orders(alpha, q.shape)
    return GridFunction(g, apply_product_rule(g.nodes, q.values, orders))


def frac_integral_right(q: GridFunction, alpha, grid: TimeGrid | None = None) -> GridFunction:
    r"""Right Riemann-Liouville integral :math:`I^{\alpha}_{b-}[q]`, by time reflection."""
    _check_grid(q, grid)
    return reflect(frac_integral_left(reflect(q), alpha))


def difference_quotient(nodes: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Centered differences at interior nodes, one-sided at both ends."""
    if nodes.size < 3:
        raise GridError("a derivative needs at least 3 nodes")
    out = np.empty_like(values)
    shape = (-1,) + (1,) * (values.ndim - 1)
    out[1:-1] = (values[2:] - values[:-2]) / (nodes[2:] - nodes[:-2]).reshape(shape)
    out[0] = (values[1] - values[0]) / (nodes[1] - nodes[0])
    out[-1] = (values[-1] - values[-2]) / (nodes[-1] - nodes[-2])
    return out


def _complement(alpha, shape) -> np.ndarray:
    return 1.0 - broadcast_orders(alpha, shape)


def rl_derivative_left(q, alpha, grid: TimeGrid | None = None) -> GridFunction:
    r"""Left Riemann-Liouville derivative :math:`\frac{d}{dt} I^{1-\alpha}_{a+}[q]`.

    Values near ``a`` can be large when the derivative is singular there; they
    are returned as computed.  Components with order 1 reduce to the plain
    difference quotient of ``q``.
    """
    g = _check_grid(q, grid)
    if g.n < 3:
        raise GridError("a derivative needs at least 3 nodes")
    inner = frac_integral_left(q, _complement(alpha, q.shape))
    if isinstance(inner, SingularGridFunction):
        raise DomainError("I^(1-alpha)[q] is still singular at a; its derivative is not representable")
    return GridFunction(g, difference_quotient(g.nodes, inner.values))


def caputo_derivative_left(q: GridFunction, alpha, grid: TimeGrid | None = None) -> GridFunction:
    r"""Left Caputo derivative :math:`D^{\alpha}_{a+}[q - q(a)]`."""
    if not isinstance(q, GridFunction):
        raise TypeError("the Caputo derivative needs a continuous (GridFunction) representative")
    shifted = GridFunction(q.grid, q.values - q.values[0])
    return rl_derivative_left(shifted, alpha, grid)


def rl_derivative_right(q: GridFunction, alpha, grid: TimeGrid | None = None) -> GridFunction:
    r"""Right Riemann-Liouville derivative :math:`-\frac{d}{dt} I^{1-\alpha}_{b-}[q]`, by reflection."""
    _check_grid(q, grid)
    return reflect(rl_derivative_left(reflect(q), alpha))


def caputo_derivative_right(q: GridFunction, alpha, grid: TimeGrid | None = None) -> GridFunction:
    r"""Right Caputo derivative :math:`D^{\alpha}_{b-}[q - q(b)]`, by reflection."""
    _check_grid(q, grid)
    return reflect(caputo_derivative_left(reflect(q), alpha))
