import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import erfcx

from fractus.calculus import apply_product_rule, frac_integral_left
from fractus.errors import ConvergenceError, DomainExitError, UnsupportedDomainError
from fractus.grid import GridFunction, default_grading, make_grid
from fractus.multiorder import VectorOrder
from fractus.solver import (
    Dynamic,
    ExtendOptions,
    MaximalVerdict,
    bielecki_norm_l1,
    bielecki_norm_sup,
    choose_k,
    estimate_lipschitz,
    extend_maximal,
    picard_caputo,
    picard_rl,
)


def ml_half_1(z):
    """E_{1/2,1}(z) = exp(z^2) erfc(-z)."""
    return erfcx(-z)


def ml_half_half(z):
    """E_{1/2,1/2}(z) = 1/sqrt(pi) + z exp(z^2) erfc(-z)."""
    return 1 / math.sqrt(math.pi) + z * erfcx(-z)


def scalar_linear(a=1.0, b=None):
    return Dynamic.linear(np.array([[a]]), None if b is None else np.array([b]))


def choose_k_oracle(L, alpha):
    k = 1
    while L * sum(k ** (-a) for a in alpha) > 0.5:
        k += 1
    return k


class TestNorms:
    def test_k_zero(self):
        g = make_grid(0, 1, 11, 1)
        q = GridFunction(g, g.nodes)
        assert bielecki_norm_l1(q) == pytest.approx(0.5, abs=1e-15)
        assert bielecki_norm_sup(q) == 1.0

    def test_zero(self):
        q = GridFunction(make_grid(0, 2, 7, 2), np.zeros((7, 3)))
        assert bielecki_norm_l1(q, k=5) == 0.0 and bielecki_norm_sup(q, k=5) == 0.0

    @settings(max_examples=50)
    @given(st.integers(0, 2**32 - 1), st.sampled_from([1, 5]), st.floats(0.1, 3.0))
    def test_sandwich(self, seed, k, length):
        rng = np.random.default_rng(seed)
        g = make_grid(0, length, 30, 2)
        q = GridFunction(g, rng.normal(size=(30, 2)))
        factor = math.exp(k * length)
        for norm in (bielecki_norm_l1, bielecki_norm_sup):
            weighted, plain = norm(q, k=k), norm(q)
            assert weighted <= plain * (1 + 1e-12)
            assert plain <= factor * weighted * (1 + 1e-12)

    def test_negative_k(self):
        with pytest.raises(ValueError):
            bielecki_norm_sup(GridFunction(make_grid(0, 1, 3), np.ones(3)), k=-1)


class TestChooseK:
    def test_examples(self):
        assert choose_k(0.0, [0.5]) == (1, 0.0)
        assert choose_k(1.0, [1.0]) == (2, 0.5)
        assert choose_k(1.0, VectorOrder((0.5, 0.5))) == (16, 0.5)

    @settings(deadline=None)
    @given(st.floats(0.0, 5.0), st.lists(st.floats(0.5, 1.0), min_size=1, max_size=3))
    def test_against_integer_search(self, L, alpha):
        k, ell = choose_k(L, alpha)
        assert k == choose_k_oracle(L, alpha)
        assert ell <= 0.5


class TestDynamic:
    def test_linear_lipschitz(self):
        f = Dynamic.linear(np.array([[1.0, -2.0], [0.5, 0.5]]))
        assert f.lipschitz == 3.0 and f.is_linear

    def test_estimate(self):
        f = Dynamic(2, lambda x, t: np.array([x[0] - 2 * x[1], 0.5 * x[0] + 0.5 * x[1]]))
        assert estimate_lipschitz(f, [0, 0], [0.0, 1.0]) == pytest.approx(3.0, rel=1e-5)

    def test_invalid(self):
        with pytest.raises(ValueError):
            Dynamic(1, lambda x, t: x, lipschitz=-1.0)


class TestCaputo:
    def test_zero_dynamics(self):
        g = make_grid(0, 1, 20, 2)
        f = Dynamic(2, lambda x, t: np.zeros_like(x), lipschitz=0.0, vectorized=True)
        q, rep = picard_caputo(f, [0.4, 0.7], [1.0, -2.0], g)
        np.testing.assert_array_equal(q.values, np.tile([1.0, -2.0], (20, 1)))
        assert rep.converged

    def test_linear_closed_form(self):
        g = make_grid(0, 1, 256, default_grading([0.5]))
        q, rep = picard_caputo(scalar_linear(), [0.5], [1.0], g)
        ref = ml_half_1(g.nodes**0.5)
        assert np.max(np.abs(q.values[:, 0] - ref) / ref) <= 1e-3
        assert q.values[0, 0] == 1.0
        assert rep.final_residual <= 1e-10

    def test_classical(self):
        g = make_grid(0, 1, 256, 1)
        q, _ = picard_caputo(scalar_linear(-1.0), [1.0], [2.0], g)
        assert np.max(np.abs(q.values[:, 0] - 2 * np.exp(-g.nodes))) <= 1e-5

    def test_fixed_point_residual(self):
        g = make_grid(0, 1, 128, 3)
        f = Dynamic(2, lambda x, t: np.column_stack([np.sin(x[:, 1]) + t, -x[:, 0]]), lipschitz=1.0, vectorized=True)
        q, _ = picard_caputo(f, [0.6, 0.9], [0.5, 1.0], g, tol=1e-11)
        image = np.array([0.5, 1.0]) + apply_product_rule(g.nodes, f.evaluate(q.values, g.nodes), np.array([0.6, 0.9]))
        assert np.max(np.abs(q.values - image)) <= 10 * 1e-11

    def test_uniqueness_surrogate(self):
        g = make_grid(0, 1, 128, 2)
        f = Dynamic(1, lambda x, t: np.cos(x) - t[:, None], lipschitz=1.0, vectorized=True)
        q1, _ = picard_caputo(f, [0.5], [1.0], g, initial="zero")
        q2, _ = picard_caputo(f, [0.5], [1.0], g, initial="constant")
        assert np.max(np.abs(q1.values - q2.values)) <= 10 * 1e-10

    def test_restriction(self):
        f = Dynamic(1, lambda x, t: -(x**2) + np.sin(t)[:, None], lipschitz=4.0, vectorized=True)
        long, _ = picard_caputo(f, [0.7], [1.0], make_grid(0, 1, 129, 1), tol=1e-12)
        short, _ = picard_caputo(f, [0.7], [1.0], make_grid(0, 0.5, 65, 1), tol=1e-12)
        assert np.max(np.abs(long.values[:65] - short.values)) <= 10 * 1e-12

    def test_contraction_ratios(self):
        g = make_grid(0, 1, 128, 2)
        f = Dynamic.linear(np.array([[0.0, 1.0], [-1.0, 0.0]]))
        _, rep = picard_caputo(f, [0.4, 0.7], [1.0, 0.0], g)
        h = np.array(rep.history)
        assert np.all(h[-5:] / h[-6:-1] <= rep.contraction_ell + 0.1)

    def test_max_iter(self):
        g = make_grid(0, 1, 64, 2)
        with pytest.raises(ConvergenceError) as info:
            picard_caputo(scalar_linear(), [0.5], [1.0], g, max_iter=1)
        assert info.value.report is not None and not info.value.report.converged

    def test_domain_exit(self):
        g = make_grid(0, 1, 64, 1)
        f = Dynamic(1, lambda x, t: 10 * np.ones_like(x), vectorized=True, lipschitz=0.0,
                    domain_test=lambda x: bool(np.abs(x[0]) < 2))
        with pytest.raises(DomainExitError):
            picard_caputo(f, [1.0], [0.0], g)


class TestRL:
    def test_zero_dynamics(self):
        g = make_grid(0, 1, 20, 2)
        f = Dynamic(1, lambda x, t: np.zeros_like(x), lipschitz=0.0, vectorized=True)
        q, rep = picard_rl(f, [0.5], [3.0], g)
        assert rep.iterations == 1
        np.testing.assert_array_equal(q.weight, [3.0])
        np.testing.assert_array_equal(q.regular.values, np.zeros((20, 1)))

    def test_linear_closed_form(self):
        g = make_grid(0, 1, 256, default_grading([0.5]))
        q, _ = picard_rl(scalar_linear(), [0.5], [1.0], g)
        x = g.nodes[1:]
        ref = x**-0.5 * ml_half_half(x**0.5)
        got = q.values_at_nodes()[1:, 0]
        assert np.max(np.abs(got - ref) / ref) <= 1e-3

    def test_classical(self):
        g = make_grid(0, 1, 256, 1)
        q, _ = picard_rl(scalar_linear(0.5), [1.0], [1.0], g)
        assert np.max(np.abs(q.values_at_nodes(skip_first=False)[:, 0] - np.exp(0.5 * g.nodes))) <= 1e-5

    def test_initial_condition(self):
        g = make_grid(0, 1, 128, 4)
        f = Dynamic(2, lambda x, t: np.column_stack([x[:, 1], -x[:, 0] + 1]), lipschitz=1.0, vectorized=True)
        q, _ = picard_rl(f, [0.4, 0.7], [1.0, -0.5], g)
        inner = frac_integral_left(q, 1.0 - np.array([0.4, 0.7]))
        np.testing.assert_allclose(inner.values[0], [1.0, -0.5], atol=1e-14)

    def test_uniqueness_surrogate(self):
        g = make_grid(0, 1, 128, 4)
        f = Dynamic(1, lambda x, t: np.sin(x), lipschitz=1.0, vectorized=True)
        q1, _ = picard_rl(f, [0.6], [1.0], g, initial="zero")
        q2, _ = picard_rl(f, [0.6], [1.0], g, initial="constant")
        assert np.max(np.abs(q1.regular.values - q2.regular.values)) <= 10 * 1e-10

    def test_rejects_domain(self):
        f = Dynamic(1, lambda x, t: x, domain_test=lambda x: True)
        with pytest.raises(UnsupportedDomainError):
            picard_rl(f, [0.5], [1.0], make_grid(0, 1, 8))


class TestMaximal:
    def test_global(self):
        f = Dynamic(1, lambda x, t: x, lipschitz=1.0, vectorized=True)
        q, verdict = extend_maximal(f, [0.5], [1.0], 1e6, 1.0, ExtendOptions(N=128, n_windows=2))
        assert verdict.kind == "global" and verdict.horizon == 1.0 and verdict.escape_time is None
        assert q.grid.b == 1.0

    def test_verdict_invariant(self):
        with pytest.raises(ValueError):
            MaximalVerdict("escaped", 1.0)
