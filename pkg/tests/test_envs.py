"""Benchmark environment construction, ground truth, and sampling."""

import numpy as np
import pytest

from kbb import envs
from kbb.envs import (
    ArchModel,
    DrawMode,
    LqrModel,
    arch_contraction_factor,
    arch_true_value,
    dataset_from_bytes,
    dataset_to_bytes,
    dataset_to_csv,
    load_dataset,
    lqr_true_value,
    make_arch,
    make_circular_walk,
    make_lqr,
    make_nonlinear,
    make_random_tabular,
    nonlinear_from_z,
    nonlinear_to_z,
    nonlinear_true_value,
    sample_transitions,
    save_dataset,
    simulate_linear_z,
    simulate_nonlinear_x,
    stationary_covariance,
    true_value,
)
from kbb.mrp import solve_exact, stationary_distribution


class TestRandomTabular:
    def test_dimensions_match_benchmark(self):
        m = make_random_tabular(300, 0.9, 17)
        assert m.n_states == 300
        assert m.trans.shape == (300, 300)

    def test_determinism(self):
        a = make_random_tabular(20, 0.9, 5)
        b = make_random_tabular(20, 0.9, 5)
        assert np.array_equal(a.trans, b.trans) and np.array_equal(a.reward, b.reward)

    def test_rows_normalized(self):
        m = make_random_tabular(3, 0.5, 7)
        assert np.abs(m.trans.sum(axis=1) - 1.0).max() <= 1e-12

    def test_rejects_small_n(self):
        with pytest.raises(ValueError):
            make_random_tabular(1, 0.9, 0)


class TestCircularWalk:
    def test_stencil_row0(self):
        m = make_circular_walk(200, 0.9, 3)
        row = m.trans[0]
        expected = {198: 1 / 6, 199: 1 / 6, 0: 1 / 3, 1: 1 / 6, 2: 1 / 6}
        nz = np.nonzero(row)[0]
        assert set(nz.tolist()) == set(expected)
        for idx, val in expected.items():
            assert row[idx] == pytest.approx(val, abs=1e-15)

    def test_doubly_stochastic_uniform_stationary(self):
        m = make_circular_walk(31, 0.9, 0)
        assert np.abs(m.trans.sum(axis=0) - 1.0).max() <= 1e-12
        mu = stationary_distribution(m)
        assert np.abs(mu.weights - 1 / 31).max() <= 1e-10

    def test_reversible(self):
        from kbb.mrp import is_reversible

        m = make_circular_walk(16, 0.9, 0)
        assert is_reversible(m, stationary_distribution(m))

    def test_rejects_overlapping_stencil(self):
        with pytest.raises(ValueError):
            make_circular_walk(4, 0.9, 0)


class TestLqr:
    def test_benchmark_dimensions(self):
        m = make_lqr(5, 3, 0.9, 1)
        assert m.a_mat.shape == (5, 5) and m.b_mat.shape == (5, 3) and m.k_mat.shape == (3, 5)

    def test_spectral_radius_target(self):
        m = make_lqr(5, 3, 0.9, 2)
        rho = np.abs(np.linalg.eigvals(m.closed_loop)).max()
        assert rho == pytest.approx(0.9, abs=1e-10)

    def test_cost_psd(self):
        m = make_lqr(4, 2, 0.9, 3)
        assert np.linalg.eigvalsh(m.q_cost).min() >= -1e-10
        assert np.linalg.eigvalsh(m.r_cost).min() >= -1e-10

    def test_true_value_zero_noise_zero_state(self):
        m = make_lqr(3, 2, 0.9, 4)
        m0 = LqrModel(
            a_mat=m.a_mat, b_mat=m.b_mat, k_mat=m.k_mat,
            q_cost=m.q_cost, r_cost=m.r_cost,
            noise_cov=np.zeros((3, 3)), gamma=m.gamma,
        )
        v = lqr_true_value(m0)
        assert v(np.zeros((1, 3)))[0] == pytest.approx(0.0, abs=1e-12)

    def test_true_value_terminates_in_one_step_when_loop_is_zero(self):
        d = 3
        rng = np.random.default_rng(0)
        g = rng.uniform(size=(d, d))
        q = g.T @ g
        m = LqrModel(
            a_mat=np.zeros((d, d)), b_mat=np.zeros((d, 1)), k_mat=np.zeros((1, d)),
            q_cost=q, r_cost=np.zeros((1, 1)), noise_cov=0.1 * np.eye(d), gamma=0.5,
        )
        v = lqr_true_value(m)
        assert np.abs(v.p_mat - q).max() <= 1e-12

    def test_kronecker_oracle(self):
        m = make_lqr(2, 2, 0.9, 5)
        v = lqr_true_value(m)
        mm, c = m.closed_loop, m.cost_mat
        vec = np.linalg.solve(np.eye(4) - m.gamma * np.kron(mm.T, mm.T), c.ravel())
        assert np.abs(v.p_mat - vec.reshape(2, 2)).max() <= 1e-8

    def test_fixed_point_residual(self):
        m = make_lqr(5, 3, 0.95, 6)
        v = lqr_true_value(m)
        mm, c = m.closed_loop, m.cost_mat
        resid = np.abs(v.p_mat - (c + m.gamma * mm.T @ v.p_mat @ mm)).max()
        assert resid <= 1e-10 * max(1.0, np.abs(v.p_mat).max())


class TestNonlinear:
    def test_round_trip(self):
        rng = np.random.default_rng(0)
        z = rng.normal(size=(50, 3))
        assert np.abs(nonlinear_to_z(nonlinear_from_z(z)) - z).max() <= 1e-12
        x = rng.normal(size=(50, 3))
        assert np.abs(nonlinear_from_z(nonlinear_to_z(x)) - x).max() <= 1e-12

    def test_origin_and_hand_point(self):
        assert np.allclose(nonlinear_to_z(np.zeros((1, 3))), 0.0)
        z = nonlinear_to_z(np.array([[1.0, 2.0, 3.0]]))
        assert np.allclose(z, [[-3.0, 2.0, 2.0]])

    def test_truth_composes_inner(self):
        m = make_nonlinear(0.9, 7)
        vx = nonlinear_true_value(m)
        vz = lqr_true_value(m.inner)
        rng = np.random.default_rng(1)
        x = rng.normal(size=(20, 3))
        assert np.abs(vx(x) - vz(nonlinear_to_z(x))).max() <= 1e-10

    def test_simulation_coordinate_equivalence(self):
        m = make_nonlinear(0.9, 3)
        rng = np.random.default_rng(5)
        noise = 0.1 * rng.standard_normal((1000, 3))
        z0 = rng.standard_normal(3)
        zs = simulate_linear_z(m, z0, noise)
        xs = simulate_nonlinear_x(m, nonlinear_from_z(z0[None, :])[0], noise)
        assert np.abs(nonlinear_to_z(xs) - zs).max() <= 1e-12


class TestArch:
    def test_benchmark_dimensions(self):
        m = make_arch(5, 0.5, 0.9, 1)
        assert m.d == 5 and m.q_scalar == 0.5

    def test_contraction_certified(self):
        for seed in range(5):
            m = make_arch(5, 0.5, 0.99, seed)
            assert arch_contraction_factor(m) <= 0.95 + 1e-12

    def test_origin_fixed_when_q_zero(self):
        m = make_arch(3, 0.0, 0.9, 2)
        rng = np.random.default_rng(0)
        x = np.zeros((1, 3))
        for _ in range(10):
            scale = np.sqrt(m.q_scalar + (x @ m.scale_mat * x).sum())
            x = x @ m.a_mat.T + scale * rng.standard_normal((1, 3))
        assert np.abs(x).max() == 0.0
        assert arch_true_value(m)(np.zeros((1, 3)))[0] == pytest.approx(0.0, abs=1e-12)

    def test_degenerate_dynamics_give_cost_matrix(self):
        rng = np.random.default_rng(3)
        g = rng.uniform(size=(3, 3))
        r = g.T @ g
        m = ArchModel(
            a_mat=np.zeros((3, 3)), scale_mat=np.zeros((3, 3)), cost_mat=r,
            q_scalar=0.5, noise_cov=0.1 * np.eye(3), gamma=0.9,
        )
        v = arch_true_value(m)
        assert np.abs(v.p_mat - r).max() <= 1e-12

    def test_q_zero_offset_zero(self):
        m = make_arch(3, 0.0, 0.9, 4)
        assert arch_true_value(m).offset == 0.0

    def test_kronecker_oracle(self):
        m = make_arch(2, 0.5, 0.9, 5)
        v = arch_true_value(m)
        lhs = (
            np.eye(4)
            - m.gamma * np.kron(m.a_mat.T, m.a_mat.T)
            - m.gamma * np.outer(m.scale_mat.ravel(), m.noise_cov.ravel())
        )
        p = np.linalg.solve(lhs, m.cost_mat.ravel()).reshape(2, 2)
        assert np.abs(v.p_mat - p).max() <= 1e-8


class TestSampling:
    def test_circular_frequencies_uniform(self):
        env = make_circular_walk(10, 0.9, 0)
        ds = sample_transitions(env, 10_000, 42)
        counts = np.bincount(ds.states, minlength=10)
        # 3-sigma multinomial bound around n/10
        sigma = np.sqrt(10_000 * 0.1 * 0.9)
        assert np.abs(counts - 1000).max() <= 3 * sigma

    def test_next_state_distribution(self):
        env = make_circular_walk(10, 0.9, 0)
        ds = sample_transitions(env, 50_000, 7)
        mask = ds.states == 0
        vals, counts = np.unique(ds.next_states[mask], return_counts=True)
        freq = counts / mask.sum()
        expected = {8: 1 / 6, 9: 1 / 6, 0: 1 / 3, 1: 1 / 6, 2: 1 / 6}
        assert set(vals.tolist()) == set(expected)
        for v, f in zip(vals, freq):
            assert abs(f - expected[int(v)]) <= 0.02

    def test_lqr_zero_noise_states(self):
        m = make_lqr(3, 2, 0.9, 4)
        m0 = LqrModel(
            a_mat=m.a_mat, b_mat=m.b_mat, k_mat=m.k_mat,
            q_cost=m.q_cost, r_cost=m.r_cost,
            noise_cov=np.zeros((3, 3)), gamma=m.gamma,
        )
        ds = sample_transitions(m0, 100, 3)
        assert np.abs(ds.states).max() == 0.0

    def test_rewards_deterministic_function_of_state(self):
        env = make_lqr(3, 2, 0.9, 8)
        ds = sample_transitions(env, 200, 9)
        expected = np.einsum("ni,ij,nj->n", ds.states, env.cost_mat, ds.states)
        assert np.abs(ds.rewards - expected).max() <= 1e-12

    def test_arch_uses_trajectory_mode(self):
        env = make_arch(3, 0.5, 0.9, 1)
        ds = sample_transitions(env, 50, 2)
        assert ds.draw_mode is DrawMode.BURN_IN_TRAJECTORY

    def test_same_seed_identical_bytes(self):
        for env in (make_circular_walk(8, 0.9, 0), make_lqr(3, 2, 0.9, 1),
                    make_nonlinear(0.9, 2), make_arch(3, 0.5, 0.9, 3)):
            a = dataset_to_bytes(sample_transitions(env, 64, 11))
            b = dataset_to_bytes(sample_transitions(env, 64, 11))
            assert a == b

    def test_lqr_stationary_covariance(self):
        m = make_lqr(4, 2, 0.9, 6)
        s = stationary_covariance(m)
        mm = m.closed_loop
        assert np.abs(s - (mm @ s @ mm.T + m.noise_cov)).max() <= 1e-10

    def test_stationary_empirical_covariance(self):
        m = make_lqr(3, 2, 0.9, 6)
        ds = sample_transitions(m, 200_000, 5)
        emp = ds.states.T @ ds.states / len(ds)
        s = stationary_covariance(m)
        assert np.abs(emp - s).max() <= 6 * np.abs(s).max() / np.sqrt(200_000 / 10)


class TestGroundTruthBellmanConsistency:
    """r(x) + gamma E[V*(x')] must equal V*(x) on stationary draws."""

    @pytest.mark.parametrize("kind", ["lqr", "nonlinear", "arch"])
    def test_monte_carlo_consistency(self, kind):
        if kind == "lqr":
            env = make_lqr(5, 3, 0.9, 10)
        elif kind == "nonlinear":
            env = make_nonlinear(0.9, 10)
        else:
            env = make_arch(5, 0.5, 0.9, 10)
        truth = true_value(env)
        n_states, n_draws = 10_000, 200
        states = envs.stationary_states(env, n_states, 123)
        rng = np.random.default_rng(321)
        if kind == "nonlinear":
            inner = env.inner
            z = nonlinear_to_z(states)
            rewards = np.einsum("ni,ij,nj->n", z, inner.cost_mat, z)
        elif kind == "lqr":
            rewards = np.einsum("ni,ij,nj->n", states, env.cost_mat, states)
        else:
            rewards = np.einsum("ni,ij,nj->n", states, env.cost_mat, states)
        gamma = env.inner.gamma if kind == "nonlinear" else env.gamma
        backup = np.empty((n_draws, n_states))
        for j in range(n_draws):
            w = rng.standard_normal((n_states, 3 if kind == "nonlinear" else env.d))
            if kind == "lqr":
                nxt = states @ env.closed_loop.T + w @ np.linalg.cholesky(env.noise_cov).T
            elif kind == "nonlinear":
                z_next = z @ inner.closed_loop.T + w @ np.linalg.cholesky(inner.noise_cov).T
                nxt = nonlinear_from_z(z_next)
            else:
                scale = np.sqrt(env.q_scalar + np.einsum("ni,ij,nj->n", states, env.scale_mat, states))
                nxt = states @ env.a_mat.T + scale[:, None] * (w @ np.linalg.cholesky(env.noise_cov).T)
            backup[j] = rewards + gamma * truth(nxt)
        mean = backup.mean(axis=0)
        stderr = backup.std(axis=0, ddof=1) / np.sqrt(n_draws)
        ok = np.abs(mean - truth(states)) <= 4 * np.maximum(stderr, 1e-12)
        assert ok.mean() >= 0.95


class TestSerialization:
    def test_round_trip_tabular(self, tmp_path):
        ds = sample_transitions(make_circular_walk(8, 0.9, 0), 100, 5)
        path = tmp_path / "ds.bin"
        save_dataset(ds, path)
        back = load_dataset(path)
        assert back == ds

    def test_round_trip_continuous(self, tmp_path):
        ds = sample_transitions(make_lqr(3, 2, 0.9, 1), 100, 5)
        back = dataset_from_bytes(dataset_to_bytes(ds))
        assert back == ds
        assert back.draw_mode is DrawMode.EXACT_STATIONARY

    def test_csv_export_columns(self, tmp_path):
        ds = sample_transitions(make_lqr(2, 1, 0.9, 1), 10, 5)
        path = tmp_path / "ds.csv"
        dataset_to_csv(ds, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "idx,x_0,x_1,reward,xp_0,xp_1"
        assert len(lines) == 11
        first = lines[1].split(",")
        assert first[0] == "0"
        assert float(first[1]) == ds.states[0, 0]

    def test_csv_export_tabular(self, tmp_path):
        ds = sample_transitions(make_circular_walk(6, 0.9, 0), 4, 1)
        path = tmp_path / "ds.csv"
        dataset_to_csv(ds, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "idx,x_0,reward,xp_0"
        assert len(lines) == 5

    def test_sample_access(self):
        ds = sample_transitions(make_circular_walk(8, 0.9, 0), 5, 1)
        s = ds[0]
        assert isinstance(s.state, int) and isinstance(s.next_state, int)
        assert len(ds.samples) == 5

    def test_dataset_validation(self):
        with pytest.raises(ValueError):
            envs.Dataset(np.zeros((0, 2)), np.zeros(0), np.zeros((0, 2)), "x", 0, DrawMode.EXACT_STATIONARY)
        with pytest.raises(ValueError):
            envs.Dataset(np.zeros(3, dtype=np.int64), np.zeros(3), np.zeros((3, 2)), "x", 0, DrawMode.EXACT_STATIONARY)


class TestModelValidation:
    def test_unstable_closed_loop_rejected(self):
        with pytest.raises(ValueError):
            LqrModel(
                a_mat=1.5 * np.eye(2), b_mat=np.zeros((2, 1)), k_mat=np.zeros((1, 2)),
                q_cost=np.eye(2), r_cost=np.eye(1), noise_cov=np.eye(2), gamma=0.9,
            )

    def test_non_psd_cost_rejected(self):
        with pytest.raises(ValueError):
            LqrModel(
                a_mat=0.5 * np.eye(2), b_mat=np.zeros((2, 1)), k_mat=np.zeros((1, 2)),
                q_cost=np.array([[1.0, 0.0], [0.0, -1.0]]), r_cost=np.eye(1),
                noise_cov=np.eye(2), gamma=0.9,
            )

    def test_non_contractive_arch_rejected(self):
        with pytest.raises(ValueError):
            ArchModel(
                a_mat=np.eye(3), scale_mat=np.eye(3), cost_mat=np.eye(3),
                q_scalar=0.5, noise_cov=np.eye(3), gamma=0.99,
            )
