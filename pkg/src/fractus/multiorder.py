r"""Multi-order algebra: Hadamard products and row/column-constant lifts.

A *vector* multi-order :math:`\alpha = (\alpha_1, \dots, \alpha_m)` assigns one
fractional order to each component of a state vector.  Matrix-valued problems
need a *matrix* multi-order, and the two canonical ways to build one from a
vector are

.. math::

    \bar\alpha_{ij} = \alpha_i \quad\text{(row constant)}, \qquad
    \underline\alpha_{ij} = \alpha_j \quad\text{(column constant)},

so that :math:`\underline\alpha = \bar\alpha^{\top}`.  The Hadamard product
:math:`\otimes` multiplies matrices entrywise and is how a matrix of kernels
acts on a matrix of functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Literal, Sequence

import numpy as np

from .errors import DimensionError, OrderError

__all__ = [
    "VectorOrder",
    "MatrixOrder",
    "hadamard",
    "row_lift",
    "col_lift",
    "as_vector_order",
]


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def _check_order_values(values: np.ndarray) -> None:
    if values.size == 0:
        raise OrderError("a multi-order needs at least one entry")
    if not np.all(np.isfinite(values)):
        raise OrderError("orders must be finite")
    if np.any(values <= 0.0) or np.any(values > 1.0):
        raise OrderError(f"orders must lie in (0, 1], got {values.tolist()}")


@dataclass(frozen=True)
class VectorOrder:
    """Vector fractional multi-order with every entry in (0, 1]."""

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        vals = tuple(float(v) for v in np.atleast_1d(np.asarray(self.values, dtype=float)))
        _check_order_values(np.asarray(vals))
        object.__setattr__(self, "values", vals)

    @classmethod
    def uniform(cls, alpha: float, m: int) -> "VectorOrder":
        """All ``m`` components share the order ``alpha``."""
        return cls((float(alpha),) * int(m))

    @property
    def m(self) -> int:
        return len(self.values)

    @property
    def array(self) -> np.ndarray:
        return _frozen(self.values)

    @property
    def min(self) -> float:
        return min(self.values)

    @property
    def max(self) -> float:
        return max(self.values)

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self) -> Iterator[float]:
        return iter(self.values)

    def __getitem__(self, i: int) -> float:
        return self.values[i]


def as_vector_order(alpha: VectorOrder | float | Sequence[float], m: int | None = None) -> VectorOrder:
    """Coerce a scalar or sequence to a :class:`VectorOrder`.

    A scalar is broadcast to ``m`` components (``m`` defaults to 1).  When
    ``m`` is given, the resulting order must have exactly ``m`` entries.
    """
    if isinstance(alpha, VectorOrder):
        out = alpha
    elif np.ndim(alpha) == 0:
        out = VectorOrder.uniform(float(alpha), 1 if m is None else m)
    else:
        out = VectorOrder(tuple(alpha))
    if m is not None and out.m != m:
        raise DimensionError(f"order has {out.m} entries, expected {m}")
    return out


Provenance = Literal["general", "row_constant", "col_constant"]


@dataclass(frozen=True)
class MatrixOrder:
    """Square matrix of fractional orders with a provenance tag.

    The tag records whether the matrix was built as a row-constant lift
    (``row_constant``), a column-constant lift (``col_constant``) or given
    entrywise (``general``).  Operations that are only justified for
    row-constant orders check the tag instead of re-deriving the structure.
    """

    values: np.ndarray
    provenance: Provenance = "general"
    source: VectorOrder | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[0] != vals.shape[1]:
            raise DimensionError(f"matrix order must be square, got shape {vals.shape}")
        _check_order_values(vals)
        if self.provenance not in ("general", "row_constant", "col_constant"):
            raise ValueError(f"unknown provenance {self.provenance!r}")
        if self.provenance != "general":
            if self.source is None or self.source.m != vals.shape[0]:
                raise ValueError("lifted orders must carry their source VectorOrder")
            expected = row_lift(self.source) if self.provenance == "row_constant" else col_lift(self.source)
            if not np.array_equal(vals, expected):
                raise ValueError("values do not match the provenance tag")
        object.__setattr__(self, "values", _frozen(vals))

    @classmethod
    def row_constant(cls, alpha: VectorOrder | Sequence[float]) -> "MatrixOrder":
        v = as_vector_order(alpha)
        return cls(row_lift(v), "row_constant", v)

    @classmethod
    def col_constant(cls, alpha: VectorOrder | Sequence[float]) -> "MatrixOrder":
        v = as_vector_order(alpha)
        return cls(col_lift(v), "col_constant", v)

    @classmethod
    def general(cls, values) -> "MatrixOrder":
        return cls(np.asarray(values, dtype=float), "general", None)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def is_row_constant(self) -> bool:
        return self.provenance == "row_constant"

    @property
    def T(self) -> "MatrixOrder":
        """Transpose; swaps the row/column provenance tags."""
        if self.provenance == "row_constant":
            return MatrixOrder.col_constant(self.source)
        if self.provenance == "col_constant":
            return MatrixOrder.row_constant(self.source)
        return MatrixOrder.general(self.values.T)

    @property
    def min(self) -> float:
        return float(self.values.min())

    @property
    def max(self) -> float:
        return float(self.values.max())


def _as_matrix(x) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 2 or 0 in arr.shape:
        raise DimensionError(f"expected a non-empty 2-D matrix, got shape {arr.shape}")
    return arr


def hadamard(A, B) -> np.ndarray:
    """Entrywise (Hadamard) product of two matrices of equal shape."""
    a, b = _as_matrix(A), _as_matrix(B)
    if a.shape != b.shape:
        raise DimensionError(f"Hadamard product needs equal shapes, got {a.shape} and {b.shape}")
    return a * b


def _as_vector(v) -> np.ndarray:
    if isinstance(v, VectorOrder):
        return np.asarray(v.values, dtype=float)
    arr = np.atleast_1d(np.asarray(v, dtype=float))
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionError("expected a non-empty vector")
    return arr


def row_lift(v) -> np.ndarray:
    """Square matrix whose row ``i`` is constantly ``v[i]``."""
    arr = _as_vector(v)
    return np.repeat(arr[:, None], arr.size, axis=1)


def col_lift(v) -> np.ndarray:
    """Square matrix whose column ``j`` is constantly ``v[j]``; the transpose of :func:`row_lift`."""
    arr = _as_vector(v)
    return np.repeat(arr[None, :], arr.size, axis=0)
