"""Multi-order fractional Cauchy problems, state-transition matrices and Duhamel formulas.

Submodules:

* :mod:`fractus.multiorder` for vector and matrix orders and the Hadamard product.
* :mod:`fractus.special` for the Gamma and Mittag-Leffler functions.
* :mod:`fractus.grid`, :mod:`fractus.quadrature` and :mod:`fractus.calculus`
  for graded grids, product integration and fractional operators.
* :mod:`fractus.solver` for Picard solvers, Bielecki norms and maximal extension.
* :mod:`fractus.transition` for transition matrices, the Theta bound,
  Duhamel formulas and duality checks.
* :mod:`fractus.expr` and :mod:`fractus.cli` for the command-line front end.
"""

import sys

from .calculus import (
    caputo_derivative_left,
    caputo_derivative_right,
    frac_integral_left,
    frac_integral_right,
    rl_derivative_left,
    rl_derivative_right,
)
from .errors import (
    ConvergenceError,
    DimensionError,
    DomainError,
    DomainExitError,
    EvaluationError,
    ExprSyntaxError,
    FractusError,
    GridError,
    OrderError,
    SpecError,
    UnknownIdentifierError,
    UnsupportedDomainError,
    UnsupportedOrderError,
    UnsupportedProblemError,
)
from .expr import eval_expr, parse_expr, to_source
from .grid import GridFunction, SingularGridFunction, TimeGrid, make_grid
from .multiorder import MatrixOrder, VectorOrder, col_lift, hadamard, row_lift
from .solver import (
    Dynamic,
    ExtendOptions,
    MaximalVerdict,
    SolveReport,
    bielecki_norm_l1,
    bielecki_norm_sup,
    choose_k,
    extend_maximal,
    picard_caputo,
    picard_rl,
)
from .special import MLParams, gamma, ml_matrix, ml_scalar
from .transition import (
    MomentTableau,
    ThetaBound,
    TransitionTableau,
    check_theta,
    duality_residual_caputo,
    duality_residual_rl,
    duhamel_caputo,
    duhamel_rl,
    mixed_duhamel,
    theta_bound,
    transition_caputo,
    transition_moments,
    transition_rl,
)

__version__ = "0.1.0"

__all__ = sorted(
    name for name, obj in globals().items() if not name.startswith("_") and not isinstance(obj, type(sys))
)
