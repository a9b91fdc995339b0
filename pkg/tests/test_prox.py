import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from brascpd import Regularizer, apply_prox
from brascpd.errors import ConfigError
from brascpd.prox import (
    isotonic_column,
    project_simplex,
    project_simplex_column,
    prox_l0,
    prox_l2_column,
    prox_l21,
    soft_threshold,
)

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def grid_argmin(objective, lo=-4.0, hi=4.0, step=1e-3):
    g = np.arange(lo, hi + step / 2, step)
    return g[np.argmin(objective(g))]


class TestClosedForms:
    def test_none_is_identity(self, rng):
        M = rng.standard_normal((4, 3))
        assert np.array_equal(apply_prox(Regularizer("none"), M, 0.7), M)

    def test_nonneg(self):
        out = apply_prox(Regularizer("nonneg"), np.array([[-1.0, 2.0], [0.5, -3.0]]), 1.0)
        assert np.array_equal(out, [[0.0, 2.0], [0.5, 0.0]])

    @pytest.mark.parametrize("x,expected", [(1.5, 0.5), (-0.3, 0.0)])
    def test_soft_threshold_against_grid(self, x, expected):
        assert soft_threshold(np.array([x]), 1.0)[0] == pytest.approx(expected, abs=1e-15)
        z = grid_argmin(lambda g: 0.5 * (g - x) ** 2 + np.abs(g))
        assert z == pytest.approx(expected, abs=1e-3)

    def test_l2_column(self):
        assert np.allclose(prox_l2_column(np.array([3.0, 4.0]), 1.0), [2.4, 3.2], rtol=0, atol=1e-15)
        # 2-D grid oracle
        g = np.arange(0.0, 5.0, 0.01)
        X, Y = np.meshgrid(g, g, indexing="ij")
        obj = 0.5 * ((X - 3) ** 2 + (Y - 4) ** 2) + np.hypot(X, Y)
        i, j = np.unravel_index(np.argmin(obj), obj.shape)
        assert abs(g[i] - 2.4) <= 0.01 and abs(g[j] - 3.2) <= 0.01

    def test_l2_limits(self):
        v = np.array([1.0, -2.0, 2.0])
        assert np.array_equal(prox_l2_column(v, 0.0), v)
        assert np.array_equal(prox_l2_column(v, 3.0), np.zeros(3))

    def test_l21_per_column(self):
        M = np.array([[3.0, 0.3], [4.0, 0.4]])
        out = prox_l21(M, 1.0)
        assert np.allclose(out[:, 0], 0.8 * M[:, 0], rtol=0, atol=1e-15)
        assert np.array_equal(out[:, 1], [0.0, 0.0])
        assert np.array_equal(prox_l21(np.zeros((3, 2)), 1.0), np.zeros((3, 2)))
        v = np.array([[1.0], [2.0], [-0.5]])
        assert np.array_equal(prox_l21(v, 0.7)[:, 0], prox_l2_column(v[:, 0], 0.7))

    def test_l2_reg_is_whole_matrix(self):
        M = np.array([[3.0, 0.0], [0.0, 4.0]])
        out = apply_prox(Regularizer("l2", lam=1.0), M, 1.0)
        assert np.allclose(out, 0.8 * M, rtol=0, atol=1e-15)

    def test_l0_threshold(self):
        assert prox_l0(np.array([1.0]), 0.4)[0] == 1.0
        assert prox_l0(np.array([0.5]), 0.4)[0] == 0.0
        # tie x**2 == 2t goes to zero
        assert prox_l0(np.array([2.0]), 2.0)[0] == 0.0
        M = np.array([0.0, 1e-9, -3.0])
        assert np.array_equal(prox_l0(M, 0.0), M)

    def test_l0_against_enumeration(self):
        for x in np.linspace(-2, 2, 41):
            t = 0.4
            keep = t  # z = x: no fit error, pays the penalty
            drop = 0.5 * x * x  # z = 0: no penalty, pays the fit
            expected = x if drop > keep else 0.0
            assert prox_l0(np.array([x]), t)[0] == expected

    @pytest.mark.parametrize("v,rho,expected", [
        ([0.3, 0.7], 1.0, [0.3, 0.7]),
        ([2.0, 0.0], 1.0, [1.0, 0.0]),
        ([1.0, 1.0, 1.0], 3.0, [1.0, 1.0, 1.0]),
        ([0.3, 0.9, -0.2], 1.0, [0.2, 0.8, 0.0]),
    ])
    def test_simplex_values(self, v, rho, expected):
        assert np.allclose(project_simplex_column(np.array(v), rho), expected, rtol=0, atol=1e-15)

    @pytest.mark.parametrize("v,expected", [
        ([1.0, 2.0, 2.0, 5.0], [1.0, 2.0, 2.0, 5.0]),
        ([3.0, 1.0, 2.0], [2.0, 2.0, 2.0]),
        ([2.0, 1.0], [1.5, 1.5]),
        ([1.0, 3.0, 2.0, 4.0], [1.0, 2.5, 2.5, 4.0]),
    ])
    def test_isotonic_values(self, v, expected):
        assert np.allclose(isotonic_column(np.array(v)), expected, rtol=0, atol=1e-15)

    def test_isotonic_against_monotone_grid(self):
        v = np.array([3.0, 1.0, 2.0])
        g = np.arange(0.0, 4.0 + 1e-9, 0.05)
        best, arg = np.inf, None
        for z in itertools.combinations_with_replacement(g, 3):
            val = np.sum((np.array(z) - v) ** 2)
            if val < best:
                best, arg = val, z
        assert np.allclose(arg, [2.0, 2.0, 2.0], atol=0.05)


class TestApplyProx:
    def test_unimodal_rejected(self):
        with pytest.raises(ConfigError):
            Regularizer("unimodal")

    @pytest.mark.parametrize("kwargs", [{"kind": "bogus"}, {"kind": "l1", "lam": -1.0},
                                        {"kind": "simplex", "rho": 0.0}])
    def test_invalid_regularizers(self, kwargs):
        with pytest.raises(ConfigError):
            Regularizer(**kwargs)

    def test_matrix_stepsize_for_separable(self):
        M = np.array([[1.5, 1.5], [-1.5, 0.2]])
        alpha = np.array([[1.0, 0.5], [1.0, 0.1]])
        out = apply_prox(Regularizer("l1", lam=1.0), M, alpha)
        assert np.allclose(out, [[0.5, 1.0], [-0.5, 0.1]], rtol=0, atol=1e-15)

    def test_matrix_stepsize_rejected_for_simplex(self):
        with pytest.raises(ValueError):
            apply_prox(Regularizer("simplex"), np.ones((2, 2)), np.ones((2, 2)))

    def test_negative_stepsize(self):
        with pytest.raises(ValueError):
            apply_prox(Regularizer("l1", lam=1.0), np.ones((2, 2)), -0.1)

    def test_vector_input(self):
        out = apply_prox(Regularizer("simplex", rho=2.0), np.array([3.0, 0.0]), 1.0)
        assert np.array_equal(out, [2.0, 0.0])


class TestProperties:
    @settings(max_examples=100, deadline=None)
    @given(M=arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 4)), elements=finite),
           rho=st.floats(0.1, 10.0))
    def test_simplex_feasible_and_idempotent(self, M, rho):
        P = project_simplex(M, rho)
        assert P.min() >= 0
        assert np.allclose(P.sum(axis=0), rho, rtol=0, atol=1e-9 * max(1.0, rho))
        assert np.allclose(project_simplex(P, rho), P, rtol=0, atol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(v=arrays(np.float64, st.integers(1, 12), elements=finite))
    def test_isotonic_properties(self, v):
        z = isotonic_column(v)
        assert np.all(np.diff(z) >= -1e-12)
        # the fit preserves the total
        assert z.sum() == pytest.approx(v.sum(), abs=1e-9)
        assert np.allclose(isotonic_column(z), z, rtol=0, atol=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(M=arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 3)), elements=finite),
           kind=st.sampled_from(["l1", "l2", "l21", "l0"]),
           lam=st.floats(0.0, 5.0), alpha=st.floats(0.0, 2.0))
    def test_prox_not_worse_than_input_or_zero(self, M, kind, lam, alpha):
        reg = Regularizer(kind, lam=lam)
        Z = apply_prox(reg, M, alpha)

        def obj(W):
            return 0.5 * np.sum((W - M) ** 2) + alpha * reg.penalty(W)

        tol = 1e-9 * (1.0 + obj(M))
        assert obj(Z) <= obj(M) + tol
        assert obj(Z) <= obj(np.zeros_like(M)) + tol

    @settings(max_examples=100, deadline=None)
    @given(M=arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 3)), elements=finite),
           kind=st.sampled_from(["l1", "l21", "l2"]), lam=st.floats(0.0, 5.0))
    def test_shrinkage_nonexpansive(self, M, kind, lam):
        reg = Regularizer(kind, lam=lam)
        N = M[::-1].copy()
        lhs = np.linalg.norm(apply_prox(reg, M, 1.0) - apply_prox(reg, N, 1.0))
        assert lhs <= np.linalg.norm(M - N) + 1e-9
