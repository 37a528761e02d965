"""Core tabular MRP operations against dense linear-algebra oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kbb.mrp import (
    Distribution,
    TabularModel,
    bellman_apply,
    bellman_residual,
    is_reversible,
    mu_norm,
    solve_exact,
    stationary_distribution,
)
from kbb.envs import make_circular_walk, make_random_tabular


def two_state_model(gamma=0.9):
    return TabularModel(trans=[[0.5, 0.5], [0.5, 0.5]], reward=[1.0, 0.0], gamma=gamma)


class TestBellmanApply:
    def test_hand_example(self):
        m = two_state_model()
        v1 = bellman_apply(m, [0.0, 0.0])
        assert np.allclose(v1, [1.0, 0.0])
        v2 = bellman_apply(m, v1)
        assert np.allclose(v2, [1.45, 0.45])

    def test_fixed_point(self):
        m = make_random_tabular(8, 0.9, 0)
        v_star = solve_exact(m)
        assert np.abs(bellman_apply(m, v_star) - v_star).max() <= 1e-12 * np.abs(v_star).max()

    def test_gamma_zero_returns_reward(self):
        # gamma must be in (0,1); gamma -> 0 behavior checked at tiny gamma
        m = TabularModel(trans=[[0.5, 0.5], [0.5, 0.5]], reward=[1.0, 0.0], gamma=1e-15)
        assert np.allclose(bellman_apply(m, [123.0, -7.0]), m.reward)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            bellman_apply(two_state_model(), [1.0, 2.0, 3.0])


class TestSolveExact:
    def test_hand_example(self):
        assert np.allclose(solve_exact(two_state_model()), [5.5, 4.5], atol=1e-10)

    def test_constant_reward(self):
        n, c, gamma = 6, 2.5, 0.8
        m = make_circular_walk(n, gamma, 0)
        m = TabularModel(trans=m.trans, reward=np.full(n, c), gamma=gamma)
        assert np.allclose(solve_exact(m), c / (1 - gamma), atol=1e-9)

    def test_against_dense_inverse_oracle(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            n = int(rng.integers(2, 51))
            m = make_random_tabular(n, float(rng.uniform(0.1, 0.99)), seed)
            oracle = np.linalg.inv(np.eye(n) - m.gamma * m.trans) @ m.reward
            v = solve_exact(m)
            assert np.abs(v - oracle).max() <= 1e-10 * max(1.0, np.abs(oracle).max())

    def test_boundedness(self):
        m = make_random_tabular(30, 0.95, 3)
        v = solve_exact(m)
        assert np.abs(v).max() <= np.abs(m.reward).max() / (1 - m.gamma) + 1e-9

    def test_neumann_series_consistency(self):
        m = make_random_tabular(10, 0.7, 4)
        v = solve_exact(m)
        k = 25
        acc = np.zeros(10)
        pw = m.reward.copy()
        for _ in range(k + 1):
            acc += pw
            pw = m.gamma * m.trans @ pw
        tail = m.gamma ** (k + 1) * np.abs(m.reward).max() / (1 - m.gamma)
        assert np.abs(v - acc).max() <= tail + 1e-12


class TestStationaryDistribution:
    def test_doubly_stochastic_uniform(self):
        m = make_circular_walk(12, 0.9, 0)
        mu = stationary_distribution(m)
        assert np.abs(mu.weights - 1.0 / 12).max() <= 1e-11

    def test_against_left_eigenvector_oracle(self):
        m = TabularModel(trans=[[0.9, 0.1], [0.5, 0.5]], reward=[1.0, 0.0], gamma=0.9)
        mu = stationary_distribution(m)
        w, vl = np.linalg.eig(m.trans.T)
        lead = np.argmin(np.abs(w - 1.0))
        oracle = np.real(vl[:, lead])
        oracle = oracle / oracle.sum()
        assert np.abs(mu.weights - oracle).max() <= 1e-10
        assert np.allclose(mu.weights, [5 / 6, 1 / 6], atol=1e-10)

    def test_periodic_chain_errors(self):
        m = TabularModel(trans=[[0.0, 1.0], [1.0, 0.0]], reward=[1.0, 0.0], gamma=0.9)
        with pytest.raises(RuntimeError):
            stationary_distribution(m)

    def test_residual_postcondition(self):
        m = make_random_tabular(40, 0.9, 9)
        mu = stationary_distribution(m)
        assert np.abs(mu.weights @ m.trans - mu.weights).sum() <= 1e-10
        assert mu.weights.min() >= 0
        assert abs(mu.weights.sum() - 1.0) <= 1e-12


class TestMuNorm:
    def test_ones(self):
        mu = Distribution([0.3, 0.7])
        assert mu_norm([1.0, 1.0], mu) == pytest.approx(1.0)

    def test_symmetric(self):
        mu = Distribution([0.5, 0.5])
        assert mu_norm([1.0, -1.0], mu) == pytest.approx(1.0)

    def test_hand_value(self):
        mu = Distribution([0.5, 0.5])
        assert mu_norm([3.0, 4.0], mu) == pytest.approx(np.sqrt(12.5))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            mu_norm([1.0], Distribution([0.5, 0.5]))


class TestReversibility:
    def test_circular_walk_reversible(self):
        m = make_circular_walk(10, 0.9, 1)
        assert is_reversible(m, stationary_distribution(m))

    def test_random_tabular_not_reversible(self):
        m = make_random_tabular(5, 0.9, 0)
        assert not is_reversible(m, stationary_distribution(m))

    def test_single_state(self):
        m = TabularModel(trans=[[1.0]], reward=[1.0], gamma=0.9)
        assert is_reversible(m, Distribution([1.0]))


class TestModelValidation:
    def test_bad_row_sum(self):
        with pytest.raises(ValueError):
            TabularModel(trans=[[0.5, 0.4], [0.5, 0.5]], reward=[1, 0], gamma=0.9)

    def test_negative_entry(self):
        with pytest.raises(ValueError):
            TabularModel(trans=[[1.1, -0.1], [0.5, 0.5]], reward=[1, 0], gamma=0.9)

    def test_bad_gamma(self):
        for gamma in (0.0, 1.0, 1.5, -0.1):
            with pytest.raises(ValueError):
                TabularModel(trans=[[1.0]], reward=[1.0], gamma=gamma)


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10_000), st.integers(min_value=2, max_value=20))
def test_contraction_property(seed, n):
    """One Bellman step shrinks mu-distance by at least the discount factor."""
    m = make_random_tabular(n, 0.9, seed)
    mu = stationary_distribution(m)
    rng = np.random.default_rng(seed + 1)
    v, w = rng.normal(size=n), rng.normal(size=n)
    lhs = mu_norm(bellman_apply(m, v) - bellman_apply(m, w), mu)
    rhs = m.gamma * mu_norm(v - w, mu)
    assert lhs <= rhs + 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_residual_of_solution_is_zero(seed):
    m = make_random_tabular(6, 0.8, seed)
    v_star = solve_exact(m)
    assert np.abs(bellman_residual(m, v_star)).max() <= 1e-10 * max(1.0, np.abs(v_star).max())
