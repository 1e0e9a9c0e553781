"""Acceptance criteria 1-14, each at its stated tolerance.

Every test prints one ``[PASS]``/``[FAIL]`` line with the measured numbers
before asserting, so ``pytest -v`` (or ``-s``) shows a per-criterion summary.
"""

import math
import time

import numpy as np
import pytest
from scipy.linalg import expm
from scipy.special import erfcx

from fractus.calculus import caputo_derivative_left, frac_integral_left, rl_derivative_left
from fractus.cli import main
from fractus.grid import GridFunction, default_grading, make_grid
from fractus.multiorder import VectorOrder, col_lift, hadamard, row_lift
from fractus.solver import (
    Dynamic,
    bielecki_norm_l1,
    bielecki_norm_sup,
    choose_k,
    extend_maximal,
    picard_caputo,
    picard_rl,
)
from fractus.special import MLParams, gamma, ml_scalar
from fractus.transition import (
    check_theta,
    duality_residual_caputo,
    duality_residual_rl,
    duhamel_caputo,
    duhamel_rl,
    mixed_duhamel,
    theta_bound,
    transition_caputo,
    transition_rl,
)

ALPHA2 = VectorOrder((0.4, 0.7))


def verdict(capsys, label: str, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {label}: {detail}")


def rel_gap(x: np.ndarray, ref: np.ndarray) -> float:
    diff = np.abs(x - ref)
    scale = np.abs(ref)
    out = np.divide(diff, scale, out=np.zeros_like(diff), where=scale > 0)
    out[(scale == 0) & (diff > 0)] = np.inf
    return float(np.max(out))


# --------------------------------------------------------------------------- shared problems


@pytest.fixture(scope="module")
def duhamel_problem():
    """m=2, alpha=(0.4, 0.7), random piecewise-linear A, B=(1, sin t), N=256."""
    g = make_grid(0, 1, 256, default_grading(ALPHA2))
    rng = np.random.default_rng(6)
    breaks = np.linspace(0, 1, 9)
    knots = rng.uniform(-1, 1, (9, 2, 2))
    samples = np.empty((g.n, 2, 2))
    for i in range(2):
        for j in range(2):
            samples[:, i, j] = np.interp(g.nodes, breaks, knots[:, i, j])
    A = GridFunction(g, samples)
    B = GridFunction(g, np.column_stack([np.ones(g.n), np.sin(g.nodes)]))
    return g, A, B, np.array([1.0, -0.5])


@pytest.fixture(scope="module")
def duality_problem():
    """A(t) = ((1, t), (0, 1)) on a graded grid with N=256."""
    g = make_grid(0, 1, 256, default_grading(ALPHA2))
    samples = np.zeros((g.n, 2, 2))
    samples[:, 0, 0] = samples[:, 1, 1] = 1.0
    samples[:, 0, 1] = g.nodes
    return g, GridFunction(g, samples)


# --------------------------------------------------------------------------- criteria


def test_criterion_01_mittag_leffler(capsys):
    e_exp = max(abs(ml_scalar(MLParams(1, 1), z) - math.exp(z)) for z in (-5, -2, 0, 1, 3, 5))
    e_cosh = abs(ml_scalar(MLParams(2, 1), 4.0) - math.cosh(2.0))
    grid = (0.3, 0.5, 0.7, 1.0)
    e_zero = max(abs(ml_scalar(MLParams(a, b), 0.0) * gamma(b) - 1.0) for a in grid for b in grid)
    ok = e_exp <= 1e-12 and e_cosh <= 1e-10 and e_zero <= 1e-12
    verdict(capsys, "1", ok, f"exp {e_exp:.1e} <= 1e-12, cosh {e_cosh:.1e} <= 1e-10, E(0)G(b)-1 {e_zero:.1e} <= 1e-12")
    assert ok


def test_criterion_02_semigroup(capsys):
    errs = {}
    for n in (256, 512, 1024):
        g = make_grid(0, 1, n, 1)
        q = GridFunction(g, np.sin(g.nodes))
        two = frac_integral_left(frac_integral_left(q, 0.4), 0.3).values
        errs[n] = float(np.max(np.abs(two - frac_integral_left(q, 0.7).values)))
    order_a = math.log2(errs[256] / errs[512])
    order_b = math.log2(errs[512] / errs[1024])
    ok = errs[512] <= 1e-3 and min(order_a, order_b) >= 0.3
    verdict(capsys, "2", ok, f"N=512 error {errs[512]:.2e} <= 1e-3, observed orders {order_a:.2f}, {order_b:.2f} >= 0.3")
    assert ok


def test_criterion_03_constant_function(capsys):
    g = make_grid(0, 1, 512, 2)
    one = GridFunction(g, np.ones(g.n))
    caputo_max = max(float(np.max(np.abs(caputo_derivative_left(one, a).values))) for a in (0.3, 0.7, 1.0))
    d = rl_derivative_left(one, 0.5).values[1:-1]
    ref = g.nodes[1:-1] ** -0.5 / math.gamma(0.5)
    rel = float(np.max(np.abs(d - ref) / ref))
    ok = caputo_max == 0.0 and rel <= 0.02
    verdict(capsys, "3", ok, f"max |cD[1]| = {caputo_max} (exact 0), D^0.5[1] relative error {rel:.2e} <= 0.02 (N=512, grading 2)")
    assert ok


def test_criterion_04_constant_coefficient_closed_forms(capsys):
    errs = {}
    for n in (128, 256):
        g = make_grid(0, 1, n, default_grading([0.5]))
        C = transition_caputo(np.array([[1.0]]), [0.5], g)
        Z = transition_rl(np.array([[1.0]]), [0.5], g)
        x = g.nodes[1:]
        ref_c = erfcx(-(x**0.5))
        ref_z = x**-0.5 * (1 / math.sqrt(math.pi) + x**0.5 * erfcx(-(x**0.5)))
        got_z = Z.amplitude[0, 0] * x**-0.5 + Z.regular[1:, 0, 0, 0]
        interior = slice(0, -1)
        errs[n] = (
            float(np.max(np.abs(C.regular[1:, 0, 0, 0] - ref_c) / ref_c)),
            float(np.max((np.abs(got_z - ref_z) / ref_z)[interior])),
        )
    (c128, z128), (c256, z256) = errs[128], errs[256]
    ok = c256 <= 1e-3 and z256 <= 1e-2 and c256 < c128 and z256 < z128
    verdict(capsys, "4", ok, f"cZ error {c256:.2e} <= 1e-3 (N=128: {c128:.2e}), Z error {z256:.2e} <= 1e-2 (N=128: {z128:.2e})")
    assert ok


def test_criterion_05_classical_limit(capsys):
    rng = np.random.default_rng(5)
    A = rng.uniform(-1, 1, (3, 3))
    A /= np.linalg.norm(A, 2)
    g = make_grid(0, 1, 256, 1)
    Z = transition_rl(A, [1, 1, 1], g)
    C = transition_caputo(A, [1, 1, 1], g)
    n_idx, p_idx = np.tril_indices(g.n, -1)
    ref = expm(A[None] * (g.nodes[n_idx] - g.nodes[p_idx])[:, None, None])
    err = 0.0
    for tab in (Z, C):
        blocks = np.array([tab.block(n, p) for n, p in zip(n_idx, p_idx)])
        err = max(err, float(np.max(np.abs(blocks - ref))))
    flow = 0.0
    for p in range(0, 256, 15):
        for r in range(p + 1, 256, 13):
            for n in range(r + 1, 256, 11):
                flow = max(flow, float(np.max(np.abs(Z.block(n, p) - Z.block(n, r) @ Z.block(r, p)))))
    ok = err <= 1e-6 and flow <= 1e-5
    verdict(capsys, "5", ok, f"max block error vs expm {err:.2e} <= 1e-6, flow defect {flow:.2e} <= 1e-5")
    assert ok


def test_criterion_06_duhamel_vs_picard(capsys, duhamel_problem):
    g, A, B, qa = duhamel_problem
    f = Dynamic.linear(A, B)
    gap_c = rel_gap(duhamel_caputo(A, B, qa, ALPHA2, g).values, picard_caputo(f, ALPHA2, qa, g)[0].values)
    gap_r = rel_gap(duhamel_rl(A, B, qa, ALPHA2, g).regular.values, picard_rl(f, ALPHA2, qa, g)[0].regular.values)
    ok = gap_c <= 1e-6 and gap_r <= 1e-6
    verdict(capsys, "6", ok, f"Caputo relative gap {gap_c:.2e} <= 1e-6, R-L regular-part gap {gap_r:.2e} <= 1e-6")
    assert ok


def test_criterion_07a_duality_rl(capsys, duality_problem):
    g, A = duality_problem
    gap = duality_residual_rl(A, ALPHA2, g)
    ok = gap <= 1e-5
    verdict(capsys, "7a", ok, f"R-L duality discrepancy {gap:.2e} <= 1e-5")
    assert ok


def test_criterion_07b_duality_caputo(capsys):
    g = make_grid(0, 1, 256, default_grading(ALPHA2))
    coupled = duality_residual_caputo(np.array([[1.0, 1.0], [0.0, 1.0]]), ALPHA2, g)
    diagonal = duality_residual_caputo(np.diag([1.0, -0.5]), ALPHA2, g)
    ok = coupled <= 1e-5
    verdict(
        capsys,
        "7b",
        ok,
        f"Caputo duality discrepancy {coupled:.2e} <= 1e-5 for A=((1,1),(0,1)); "
        f"diagonal A gives {diagonal:.2e}. Unequal orders with coupling break the identity "
        "(see the README section 'Known red')",
    )
    assert ok


def test_criterion_08_theta(capsys, duality_problem):
    g, A = duality_problem
    M = float(np.max(np.abs(A.values)))
    tab = transition_rl(A, ALPHA2, g)
    bound = theta_bound(M, ALPHA2, g.a, g.b)
    violation = check_theta(tab, bound)
    zero = theta_bound(0.0, ALPHA2, g.a, g.b).theta
    exact = max(1 / math.gamma(0.4), 1 / math.gamma(0.7))
    ok = violation <= 1e-6 and zero == exact
    verdict(capsys, "8", ok, f"check_theta {violation:.2f} <= 1e-6 (theta {bound.theta:.2f}), theta(M=0) == max 1/Gamma: {zero == exact}")
    assert ok


def test_criterion_09_escape(capsys):
    f = Dynamic(1, lambda x, t: x**2, vectorized=True)
    _, classical = extend_maximal(f, [1.0], [1.0], 10.0, 2.0)
    _, fractional = extend_maximal(f, [0.5], [1.0], 10.0, 2.0)
    ok = (
        classical.kind == "escaped"
        and 0.85 <= classical.escape_time <= 0.95
        and fractional.kind == "escaped"
        and 0.0 < fractional.escape_time <= 2.0
    )
    verdict(
        capsys,
        "9",
        ok,
        f"alpha=1 {classical.kind} at {classical.escape_time} in [0.85, 0.95], "
        f"alpha=0.5 {fractional.kind} at {fractional.escape_time} in (0, 2]",
    )
    assert ok


def test_criterion_10_bielecki(capsys, duhamel_problem):
    rng = np.random.default_rng(10)
    sandwich = True
    for _ in range(100):
        length = rng.uniform(0.1, 3.0)
        g = make_grid(0, length, int(rng.integers(2, 200)), rng.uniform(1, 4))
        q = GridFunction(g, rng.normal(size=(g.n, int(rng.integers(1, 4)))))
        for k in (1, 5):
            for norm in (bielecki_norm_l1, bielecki_norm_sup):
                weighted, plain = norm(q, k=k), norm(q)
                sandwich &= weighted <= plain * (1 + 1e-12) and plain <= math.exp(k * length) * weighted * (1 + 1e-12)
    k_ell = choose_k(1.0, VectorOrder((0.5, 0.5)))
    g, A, B, qa = duhamel_problem
    f = Dynamic.linear(A, B)
    worst = 0.0
    ell = 0.0
    for solve in (picard_caputo, picard_rl):
        _, rep = solve(f, ALPHA2, qa, g)
        h = np.array(rep.history)
        worst = max(worst, float(np.max(h[-5:] / h[-6:-1])))
        ell = rep.contraction_ell
    ok = sandwich and k_ell == (16, 0.5) and worst <= ell + 0.1
    verdict(capsys, "10", ok, f"sandwich holds: {sandwich}, choose_k = {k_ell}, residual ratios <= {worst:.3f} <= ell+0.1 = {ell + 0.1:.3f}")
    assert ok


def test_criterion_11_hadamard_lemmas(capsys):
    rng = np.random.default_rng(11)
    m = 4
    eye = np.eye(m)

    def rel(x, ref):
        return float(np.max(np.abs(x - ref)) / np.max(np.abs(ref)))

    worst = [0.0] * 4
    for _ in range(100):
        a, b = rng.uniform(0.01, 1, m), rng.uniform(0.01, 1, m)
        C, D, E = (rng.normal(size=(m, m)) for _ in range(3))
        X = rng.normal(size=m)
        errs = (
            rel(hadamard(row_lift(a), C) @ X, a * (C @ X)),
            rel(
                hadamard(col_lift(a), hadamard(row_lift(b), eye) @ C),
                hadamard(row_lift(b), C @ hadamard(col_lift(a), eye)),
            ),
            rel(
                hadamard(col_lift(a), hadamard(row_lift(b), C @ D) @ E),
                hadamard(row_lift(b), C @ hadamard(col_lift(a), D @ E)),
            ),
            rel(hadamard(row_lift(a), eye), hadamard(col_lift(a), eye)),
        )
        worst = [max(w, e) for w, e in zip(worst, errs)]
    ok = max(worst) <= 1e-14
    verdict(capsys, "11", ok, "relative defects " + ", ".join(f"{w:.1e}" for w in worst) + " <= 1e-14")
    assert ok


def test_criterion_12_coincidence(capsys):
    g = make_grid(0, 1, 256, default_grading([0.6]))
    f = Dynamic.linear(np.array([[1.0]]))
    qc, _ = picard_caputo(f, [0.6], [0.0], g)
    qr, _ = picard_rl(f, [0.6], [0.0], g)
    gap0 = float(np.max(np.abs(qc.values - qr.values_at_nodes(skip_first=False))))
    zero = float(max(np.max(np.abs(qc.values)), np.max(np.abs(qr.regular.values))))
    forced = Dynamic.linear(np.array([[1.0]]), np.array([1.0]))
    qc, _ = picard_caputo(forced, [0.6], [0.0], g)
    qr, _ = picard_rl(forced, [0.6], [0.0], g)
    gap1 = float(np.max(np.abs(qc.values - qr.regular.values)))
    ok = gap0 <= 1e-8 and zero == 0.0 and gap1 <= 1e-6
    verdict(capsys, "12", ok, f"unforced gap {gap0:.1e} <= 1e-8 (both identically zero: {zero == 0.0}), forced gap {gap1:.1e} <= 1e-6")
    assert ok


def test_criterion_13_mixed_duhamel(capsys):
    g = make_grid(0, 1, 256, default_grading([0.5]))
    res = {w: mixed_duhamel(np.array([[1.0]]), np.array([1.0]), [1.0], [0.5], g, w).residual for w in ("q1", "q2")}
    ok = max(res.values()) <= 1e-6
    verdict(capsys, "13", ok, f"q1 residual {res['q1']:.2e}, q2 residual {res['q2']:.2e} <= 1e-6")
    assert ok


def test_criterion_14_cli(capsys, tmp_path):
    from pathlib import Path

    spec = Path(__file__).parent / "data" / "minimal_caputo.ini"
    codes = [main(["solve", "--spec", str(spec), "--out", str(tmp_path / d)]) for d in ("a", "b")]
    same = (tmp_path / "a" / "solution.csv").read_bytes() == (tmp_path / "b" / "solution.csv").read_bytes()
    bad = tmp_path / "bad.ini"
    bad.write_text(spec.read_text().replace("alpha = 0.5", "alpha = 1.5"))
    code_bad = main(["solve", "--spec", str(bad), "--out", str(tmp_path / "c")])
    code_iter = main(["solve", "--spec", str(spec), "--out", str(tmp_path / "d"), "--max-iter", "1"])
    capsys.readouterr()
    ok = codes == [0, 0] and same and code_bad == 1 and code_iter == 2
    verdict(capsys, "14", ok, f"exit codes {codes}, byte-identical: {same}, invalid spec -> {code_bad}, max_iter=1 -> {code_iter}")
    assert ok
