"""Command-line front end: ``fractus <command> --spec FILE --out DIR``.

Problem files are INI-style::

    [problem]
    kind = caputo          # or rl
    m = 1
    alpha = 0.5            # comma list, one order per component
    a = 0
    b = 1
    qa = 1                 # comma list

    [dynamics]
    f1 = x1                # nonlinear: f1..fm in x1..xm and t
    # linear instead: A11..Amm and B1..Bm in t

    [solver]               # all optional
    n = 128
    grading = 2
    tol = 1e-10
    max_iter = 200
    lipschitz = 1

    [domain]               # optional
    ball_radius = 10

Exit codes: 0 success, 1 usage or problem-file error, 2 numerical
non-convergence (or a Picard iterate leaving the domain).
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import math
import re
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .errors import (
    ConvergenceError,
    DomainExitError,
    EvaluationError,
    ExprSyntaxError,
    FractusError,
    SpecError,
)
from .expr import ExprAst, eval_expr, parse_expr
from .grid import GridFunction, default_grading, make_grid
from .multiorder import VectorOrder
from .solver import Dynamic, picard_caputo, picard_rl
from .transition import (
    duality_residual_caputo,
    duality_residual_rl,
    duhamel_caputo,
    duhamel_rl,
    theta_bound,
    transition_caputo,
    transition_rl,
)

__all__ = ["ProblemSpec", "load_problem", "run", "main", "COMMANDS"]

COMMANDS = ("solve", "transition", "duhamel", "duality", "theta")

_KEYS = {
    "problem": {"kind", "m", "alpha", "a", "b", "qa"},
    "solver": {"n", "grading", "tol", "max_iter", "lipschitz"},
    "domain": {"ball_radius"},
}


@dataclass(frozen=True)
class ProblemSpec:
    """Validated contents of a problem file.

    Exactly one of ``f`` (nonlinear, ``m`` expressions) or ``A``/``B``
    (linear, ``m x m`` and ``m`` expressions in ``t``) is set.
    ``grading=None`` selects the default ``min(2 / min(alpha), 4)``.
    """

    kind: Literal["rl", "caputo"]
    m: int
    alpha: VectorOrder
    a: float
    b: float
    qa: tuple[float, ...]
    N: int = 128
    grading: float | None = None
    tol: float = 1e-10
    max_iter: int = 200
    lipschitz: float | None = None
    ball_radius: float | None = None
    f: tuple[ExprAst, ...] | None = None
    A: tuple[tuple[ExprAst, ...], ...] | None = None
    B: tuple[ExprAst, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("rl", "caputo"):
            raise SpecError("kind must be 'rl' or 'caputo'", "kind")
        if self.m < 1:
            raise SpecError("m must be >= 1", "m")
        if self.alpha.m != self.m:
            raise SpecError(f"alpha needs {self.m} entries", "alpha")
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise SpecError("a and b must be finite", "a")
        if not self.b > self.a:
            raise SpecError("b must be greater than a", "b")
        if len(self.qa) != self.m or not all(math.isfinite(v) for v in self.qa):
            raise SpecError(f"qa needs {self.m} finite entries", "qa")
        if self.N < 2:
            raise SpecError("n must be >= 2", "n")
        if self.grading is not None and not (math.isfinite(self.grading) and self.grading >= 1.0):
            raise SpecError("grading must be >= 1", "grading")
        if not (self.tol > 0 and math.isfinite(self.tol)):
            raise SpecError("tol must be positive", "tol")
        if self.max_iter < 1:
            raise SpecError("max_iter must be >= 1", "max_iter")
        if self.lipschitz is not None and not (self.lipschitz >= 0 and math.isfinite(self.lipschitz)):
            raise SpecError("lipschitz must be >= 0", "lipschitz")
        if self.ball_radius is not None and not (self.ball_radius > 0 and math.isfinite(self.ball_radius)):
            raise SpecError("ball_radius must be positive", "ball_radius")
        if (self.f is None) == (self.A is None):
            raise SpecError("give either f1..fm or A11..Amm (with B1..Bm)", "dynamics")
        if self.f is not None and len(self.f) != self.m:
            raise SpecError(f"need f1..f{self.m}", "dynamics")
        if self.A is not None:
            if len(self.A) != self.m or any(len(row) != self.m for row in self.A):
                raise SpecError(f"need A11..A{self.m}{self.m}", "dynamics")
            if self.B is None or len(self.B) != self.m:
                raise SpecError(f"need B1..B{self.m}", "dynamics")

    @property
    def is_linear(self) -> bool:
        return self.A is not None

    def grid(self):
        g = self.grading if self.grading is not None else default_grading(self.alpha)
        return make_grid(self.a, self.b, self.N, g)


# --------------------------------------------------------------------------- loading


def _line_of(text: str, section: str, key: str) -> int | None:
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.fullmatch(r"\[([^\]]+)\]", line)
        if m:
            current = m.group(1).strip()
        elif current == section and "=" in line and line.split("=", 1)[0].strip() == key:
            return lineno
    return None


def load_problem(path) -> ProblemSpec:
    """Read and validate a problem file.

    Raises
    ------
    SpecError
        With the line number for malformed files and the field name for
        invalid or missing values.
    """
    text = Path(path).read_text(encoding="utf-8")
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text, source=str(path))
    except configparser.MissingSectionHeaderError as exc:
        raise SpecError("content before the first [section] header", line=exc.lineno) from exc
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else None
        raise SpecError("malformed line (expected 'key = value')", line=lineno) from exc
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise SpecError(str(exc).split(":")[-1].strip(), line=exc.lineno) from exc

    def fail(section: str, key: str, message: str) -> SpecError:
        return SpecError(message, key, _line_of(text, section, key))

    for section in cp.sections():
        if section not in ("problem", "dynamics", "solver", "domain"):
            raise SpecError(f"unknown section [{section}]", section, _line_of_section(text, section))
        if section in _KEYS:
            for key in cp[section]:
                if key not in _KEYS[section]:
                    raise fail(section, key, f"unknown key in [{section}]")
    if not cp.has_section("problem"):
        raise SpecError("missing [problem] section", "problem")
    if not cp.has_section("dynamics"):
        raise SpecError("missing [dynamics] section", "dynamics")
    prob = cp["problem"]

    def get(section: str, key: str, conv, required: bool = True, default=None):
        if not cp.has_section(section) or key not in cp[section]:
            if required:
                raise SpecError(f"missing required key in [{section}]", key)
            return default
        raw = cp[section][key].strip()
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            raise fail(section, key, f"invalid value {raw!r}") from exc

    def floats(raw: str) -> tuple[float, ...]:
        vals = tuple(float(v) for v in raw.split(","))
        if not vals:
            raise ValueError
        return vals

    def integer(raw: str) -> int:
        return int(raw)

    kind = get("problem", "kind", str)
    if kind not in ("rl", "caputo"):
        raise fail("problem", "kind", "kind must be 'rl' or 'caputo'")
    m = get("problem", "m", integer)
    if m < 1:
        raise fail("problem", "m", "m must be >= 1")
    alpha_vals = get("problem", "alpha", floats)
    if len(alpha_vals) == 1:
        alpha_vals = alpha_vals * m
    if len(alpha_vals) != m:
        raise fail("problem", "alpha", f"alpha needs {m} entries")
    if not all(0.0 < v <= 1.0 for v in alpha_vals):
        raise fail("problem", "alpha", "alpha out of (0,1]")
    qa = get("problem", "qa", floats)

    dyn = cp["dynamics"]
    keys = set(dyn)
    f_keys = {f"f{i}" for i in range(1, m + 1)}
    a_keys = {f"A{i}{j}" for i in range(1, m + 1) for j in range(1, m + 1)}
    b_keys = {f"B{i}" for i in range(1, m + 1)}
    if m > 9:
        raise fail("problem", "m", "m must be at most 9 (matrix keys use single digits)")
    unknown = keys - f_keys - a_keys - b_keys
    if unknown:
        key = sorted(unknown)[0]
        raise fail("dynamics", key, "unknown key in [dynamics]")

    def expr(key: str, allow_state: bool) -> ExprAst:
        src = dyn[key]
        try:
            ast = parse_expr(src, m if allow_state else 0)
        except ExprSyntaxError as exc:
            raise fail("dynamics", key, str(exc)) from exc
        return ast

    f = A = B = None
    if not keys:
        raise SpecError("missing dynamics (f1..fm, or A11..Amm and B1..Bm)", "dynamics", _line_of_section(text, "dynamics"))
    if keys & f_keys:
        if keys & (a_keys | b_keys):
            raise SpecError("give either f1..fm or A/B entries, not both", "dynamics")
        missing = sorted(f_keys - keys)
        if missing:
            raise SpecError("missing nonlinear right-hand side", missing[0])
        f = tuple(expr(f"f{i}", True) for i in range(1, m + 1))
    else:
        missing = sorted(a_keys - keys)
        if missing:
            raise SpecError("missing dynamics (f1..fm, or A11..Amm and B1..Bm)", missing[0])
        A = tuple(tuple(expr(f"A{i}{j}", False) for j in range(1, m + 1)) for i in range(1, m + 1))
        B = tuple(expr(f"B{i}", False) if f"B{i}" in keys else parse_expr("0", 0) for i in range(1, m + 1))

    try:
        return ProblemSpec(
            kind=kind,
            m=m,
            alpha=VectorOrder(alpha_vals),
            a=get("problem", "a", float),
            b=get("problem", "b", float),
            qa=qa,
            N=get("solver", "n", integer, False, 128),
            grading=get("solver", "grading", float, False, None),
            tol=get("solver", "tol", float, False, 1e-10),
            max_iter=get("solver", "max_iter", integer, False, 200),
            lipschitz=get("solver", "lipschitz", float, False, None),
            ball_radius=get("domain", "ball_radius", float, False, None),
            f=f,
            A=A,
            B=B,
        )
    except SpecError as exc:
        section = "solver" if exc.field in _KEYS["solver"] else "domain" if exc.field == "ball_radius" else "problem"
        raise SpecError(str(exc).split(": ", 1)[-1], exc.field, _line_of(text, section, exc.field or "")) from None


def _line_of_section(text: str, section: str) -> int | None:
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if raw.strip() == f"[{section}]":
            return lineno
    return None


# --------------------------------------------------------------------------- running


def _dynamic(spec: ProblemSpec, grid) -> Dynamic:
    m = spec.m
    domain = None
    if spec.ball_radius is not None:
        radius = spec.ball_radius

        def domain(x, radius=radius):
            return bool(np.linalg.norm(x) < radius)

    if spec.is_linear:
        A_gf, B_gf = _linear_samples(spec, grid)
        base = Dynamic.linear(A_gf, B_gf, lipschitz=spec.lipschitz)
        return dataclasses.replace(base, domain_test=domain)
    exprs = spec.f

    def f(x, t):
        return np.stack([np.broadcast_to(eval_expr(e, x, t), (x.shape[0],)) for e in exprs], axis=1)

    return Dynamic(m, f, lipschitz=spec.lipschitz, domain_test=domain, vectorized=True)


def _linear_samples(spec: ProblemSpec, grid) -> tuple[GridFunction, GridFunction]:
    t = grid.nodes
    x = np.zeros((t.size, 0))
    A = np.empty((t.size, spec.m, spec.m))
    for i, row in enumerate(spec.A):
        for j, e in enumerate(row):
            A[:, i, j] = eval_expr(e, x, t)
    B = np.stack([np.broadcast_to(eval_expr(e, x, t), t.shape) for e in spec.B], axis=1)
    return GridFunction(grid, A), GridFunction(grid, B)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _write_csv(path: Path, header: Sequence[str], rows: np.ndarray) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _solution_rows(t: np.ndarray, q: np.ndarray, w: np.ndarray | None) -> tuple[list[str], np.ndarray]:
    m = q.shape[1]
    header = ["t"] + [f"q{i}" for i in range(1, m + 1)]
    cols = [t[:, None], q]
    if w is not None:
        header += [f"w{i}" for i in range(1, m + 1)]
        cols.append(np.broadcast_to(w, q.shape))
    return header, np.hstack(cols)


def _need_linear(spec: ProblemSpec, command: str) -> None:
    if not spec.is_linear:
        raise SpecError(f"{command} requires linear dynamics", "dynamics")


def run(command: str, spec: ProblemSpec, out_dir) -> int:
    """Execute ``command`` on ``spec``, writing CSV files into ``out_dir``.

    Prints a one-line summary on stdout and errors on stderr; returns the
    process exit code.
    """
    try:
        return _run(command, spec, Path(out_dir))
    except (ConvergenceError, DomainExitError) as exc:
        print(f"{command}: {exc}", file=sys.stderr)
        return 2
    except (FractusError, EvaluationError) as exc:
        print(f"{command}: {exc}", file=sys.stderr)
        return 1


def _run(command: str, spec: ProblemSpec, out: Path) -> int:
    if command not in COMMANDS:
        raise SpecError(f"unknown command {command!r}")
    out.mkdir(parents=True, exist_ok=True)
    grid = spec.grid()
    t = grid.nodes
    qa = np.array(spec.qa)
    if command == "solve":
        f = _dynamic(spec, grid)
        if spec.kind == "caputo":
            q, rep = picard_caputo(f, spec.alpha, qa, grid, spec.tol, spec.max_iter)
            header, rows = _solution_rows(t, q.values, None)
        else:
            q, rep = picard_rl(f, spec.alpha, qa, grid, spec.tol, spec.max_iter)
            header, rows = _solution_rows(t, q.regular.values, q.weight)
        _write_csv(out / "solution.csv", header, rows)
        flag = " (estimated)" if rep.lipschitz_estimated else ""
        print(
            f"solve: kind={spec.kind} iterations={rep.iterations} residual={rep.final_residual:.3e} "
            f"k={rep.bielecki_k} ell={rep.contraction_ell:.3f} L={rep.lipschitz:.4g}{flag} converged"
        )
        return 0
    _need_linear(spec, command)
    A_gf, B_gf = _linear_samples(spec, grid)
    if command == "transition":
        build = transition_rl if spec.kind == "rl" else transition_caputo
        tab = build(A_gf, spec.alpha, grid, tol=min(spec.tol, 1e-12), max_iter=spec.max_iter)
        m = spec.m
        header = ["t", "s"] + [f"Z{i}{j}" for i in range(1, m + 1) for j in range(1, m + 1)]
        rows = []
        for p in range(grid.n):
            for n in range(p + (1 if spec.kind == "rl" else 0), grid.n):
                rows.append(np.concatenate([[t[n], t[p]], tab.block(n, p).ravel()]))
        _write_csv(out / "transition.csv", header, np.array(rows).reshape(-1, len(header)))
        print(f"transition: kind={spec.kind} columns={grid.n} max_iterations={max(tab.iterations, default=0)} residual={tab.residual:.3e}")
        return 0
    if command == "duhamel":
        if spec.kind == "caputo":
            q = duhamel_caputo(A_gf, B_gf, qa, spec.alpha, grid, min(spec.tol, 1e-12), spec.max_iter)
            header, rows = _solution_rows(t, q.values, None)
        else:
            q = duhamel_rl(A_gf, B_gf, qa, spec.alpha, grid, min(spec.tol, 1e-12), spec.max_iter)
            header, rows = _solution_rows(t, q.regular.values, q.weight)
        _write_csv(out / "duhamel.csv", header, rows)
        print(f"duhamel: kind={spec.kind} nodes={grid.n}")
        return 0
    if command == "duality":
        if spec.kind == "rl":
            gap = duality_residual_rl(A_gf, spec.alpha, grid, min(spec.tol, 1e-12), spec.max_iter)
        else:
            gap = duality_residual_caputo(A_gf, spec.alpha, grid, min(spec.tol, 1e-12), spec.max_iter)
        _write_csv(out / "duality.csv", ["discrepancy"], np.array([[gap]]))
        print(f"duality: kind={spec.kind} discrepancy={gap:.3e}")
        return 0
    # theta
    M = float(np.max(np.abs(A_gf.values)))
    bound = theta_bound(M, spec.alpha, spec.a, spec.b)
    _write_csv(
        out / "theta.csv",
        ["theta", "M", "beta", "gamma", "delta", "terms"],
        np.array([[bound.theta, bound.M, bound.beta_min, bound.gamma_max, bound.delta, bound.terms_used]]),
    )
    print(f"theta: theta={bound.theta:.6g} M={M:.6g} terms={bound.terms_used}")
    return 0


# --------------------------------------------------------------------------- entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors exit with 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fractus", description="Multi-order fractional Cauchy problems and transition matrices.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--spec", required=True, help="problem file")
    p.add_argument("--out", required=True, help="output directory for CSV files")
    p.add_argument("--n", type=int, help="number of grid nodes (overrides [solver] n)")
    p.add_argument("--grading", type=float, help="grid grading exponent (overrides [solver] grading)")
    p.add_argument("--tol", type=float, help="Picard tolerance (overrides [solver] tol)")
    p.add_argument("--max-iter", type=int, dest="max_iter", help="Picard iteration cap (overrides [solver] max_iter)")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    """Console entry point; returns the exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 1
    try:
        spec = load_problem(args.spec)
        overrides = {k: v for k, v in (("N", args.n), ("grading", args.grading), ("tol", args.tol), ("max_iter", args.max_iter)) if v is not None}
        spec = dataclasses.replace(spec, **overrides)
    except (SpecError, OSError) as exc:
        print(f"fractus: {exc}", file=sys.stderr)
        return 1
    return run(args.command, spec, args.out)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
