"""The three evaluation algorithms: exact VI, fitted VI, and Krylov-Bellman
boosting, plus error measurement against ground truth.

All three start from the zero value function so their iteration-0 error is
identical, and all randomness is derived from explicit seeds so a run is
reproducible bit for bit.
"""

from __future__ import annotations

import time

import numpy as np

from . import envs
from .envs import ArchModel, Dataset, LqrModel, NonlinearModel, nonlinear_to_z, sample_transitions
from .lstd import (
    DUPLICATE_CORRELATION,
    MIN_BASIS_NORM,
    BasisSet,
    solve_linear_system,
    span_correlation,
)
from .mrp import TabularModel, mu_norm, stationary_distribution
from .records import RunRecord
from .regression import RegressorConfig, fit
from .values import ConstantValueFn, QuadraticValueFn, ScaledValueFn

__all__ = [
    "IterationBudget",
    "ErrorEvaluator",
    "evaluate_error",
    "run_vi",
    "run_fvi",
    "run_kbb",
    "derive_seed",
]

from dataclasses import dataclass


@dataclass(frozen=True)
class IterationBudget:
    """Per-iteration sample counts for the sampled algorithms.

    The first iteration draws ``first_iter_multiplier`` times more samples;
    an accurate first fit (which estimates the reward) noticeably improves
    the whole run.  With ``shared_data`` the LSTD step reuses the regression
    dataset; otherwise an independent dataset of equal size is drawn.
    """

    n_per_iter: int
    max_iters: int
    first_iter_multiplier: int = 4
    shared_data: bool = True

    def __post_init__(self):
        if self.n_per_iter < 1 or self.max_iters < 1 or self.first_iter_multiplier < 1:
            raise ValueError("budget fields must be positive")

    def n_at(self, t: int) -> int:
        return self.n_per_iter * (self.first_iter_multiplier if t == 0 else 1)


def derive_seed(seed: int, *path: int) -> int:
    """Stable 64-bit child seed for a (seed, path...) combination."""
    ss = np.random.SeedSequence([int(seed), *[int(p) for p in path]])
    return int(ss.generate_state(1, np.uint64)[0])


_REG_STREAM, _LSTD_STREAM, _FIT_STREAM = 0, 1, 2


def _gamma_of(env) -> float:
    if isinstance(env, NonlinearModel):
        return env.inner.gamma
    return env.gamma


class ErrorEvaluator:
    """Measures the mu-weighted distance of a value function to ground truth.

    Tabular models are evaluated exactly under the stationary distribution.
    Continuous models use a Monte Carlo estimate over stationary draws with
    a fixed seed, so every algorithm in a comparison is scored on the same
    evaluation states.
    """

    def __init__(self, env, truth, n_eval: int = 10_000, seed: int = 0):
        self.env = env
        self.truth = truth
        if isinstance(env, TabularModel):
            self.mu = stationary_distribution(env)
            self.states = np.arange(env.n_states)
        else:
            self.mu = None
            self.states = envs.stationary_states(env, n_eval, seed)
        self.truth_values = truth(self.states)

    def error_of_values(self, values: np.ndarray) -> float:
        diff = values - self.truth_values
        if self.mu is not None:
            return mu_norm(diff, self.mu)
        return float(np.sqrt(np.mean(diff**2)))

    def __call__(self, v) -> float:
        return self.error_of_values(v(self.states))


def evaluate_error(v, truth, env, n_eval: int = 10_000, seed: int = 0) -> float:
    """One-shot mu-norm error of v against truth on the given model."""
    return ErrorEvaluator(env, truth, n_eval=n_eval, seed=seed)(v)


# ---------------------------------------------------------------------------
# Exact value iteration
# ---------------------------------------------------------------------------


def _vi_iterates_tabular(model: TabularModel, max_iters: int):
    from .mrp import bellman_apply
    from .values import TableValueFn

    v = np.zeros(model.n_states)
    for _ in range(max_iters):
        v = bellman_apply(model, v)
        yield TableValueFn(v)


def _vi_iterates_lqr(model: LqrModel, max_iters: int, coord_map=None):
    m = model.closed_loop
    c = model.cost_mat
    p = np.zeros_like(c)
    const = 0.0
    for _ in range(max_iters):
        p, const = (
            c + model.gamma * m.T @ p @ m,
            model.gamma * const + model.gamma * float(np.trace(p @ model.noise_cov)),
        )
        yield QuadraticValueFn(p, offset=const, coord_map=coord_map)


def _vi_iterates_arch(model: ArchModel, max_iters: int):
    l_mat, g_mat, r_mat = model.a_mat, model.scale_mat, model.cost_mat
    p = np.zeros_like(r_mat)
    const = 0.0
    for _ in range(max_iters):
        p, const = (
            r_mat + model.gamma * (l_mat.T @ p @ l_mat + g_mat * float(np.trace(p @ model.noise_cov))),
            model.gamma * (model.q_scalar * float(np.trace(p @ model.noise_cov)) + const),
        )
        yield QuadraticValueFn(p, offset=const)


def run_vi(env, max_iters: int, truth=None, n_eval: int = 10_000, eval_seed: int = 0,
           config_hash: str = "") -> RunRecord:
    """Exact value iteration from the zero function.

    Tabular models iterate the dense backup; LQR, nonlinear, and ARCH models
    use their closed-form quadratic recursions (the nonlinear model through
    its inner linear system).  VI consumes no samples.
    """
    if truth is None:
        truth = envs.true_value(env)
    evaluator = ErrorEvaluator(env, truth, n_eval=n_eval, seed=eval_seed)
    if isinstance(env, TabularModel):
        iterates = _vi_iterates_tabular(env, max_iters)
    elif isinstance(env, LqrModel):
        iterates = _vi_iterates_lqr(env, max_iters)
    elif isinstance(env, NonlinearModel):
        iterates = _vi_iterates_lqr(env.inner, max_iters, coord_map=nonlinear_to_z)
    elif isinstance(env, ArchModel):
        iterates = _vi_iterates_arch(env, max_iters)
    else:
        raise ValueError(f"exact value iteration unsupported for {type(env).__name__}")
    record = RunRecord(
        algo="vi",
        initial_error=evaluator(ConstantValueFn(0.0)),
        config_hash=config_hash,
        seeds=[],
        meta={"env": envs.env_params(env), "eval": {"n_eval": n_eval, "seed": eval_seed}},
    )
    for t, v in enumerate(iterates, start=1):
        t0 = time.perf_counter()
        err = evaluator(v)
        wall = (time.perf_counter() - t0) * 1e3
        record.add_row(iter=t, cum_samples=0, mu_error=err, ridge_used=0.0, wall_ms=wall)
    return record


# ---------------------------------------------------------------------------
# Fitted value iteration
# ---------------------------------------------------------------------------


def run_fvi(env, regressor_config: RegressorConfig, budget: IterationBudget, truth=None,
            seed: int = 0, n_eval: int = 10_000, eval_seed: int = 0,
            config_hash: str = "") -> RunRecord:
    """Fitted value iteration: regress the sampled backup r + gamma v(x')."""
    if truth is None:
        truth = envs.true_value(env)
    gamma = _gamma_of(env)
    evaluator = ErrorEvaluator(env, truth, n_eval=n_eval, seed=eval_seed)
    record = RunRecord(
        algo="fvi",
        initial_error=evaluator(ConstantValueFn(0.0)),
        config_hash=config_hash,
        seeds=[seed],
        meta={
            "env": envs.env_params(env),
            "budget": budget.__dict__,
            "regressor": regressor_config.__dict__,
            "eval": {"n_eval": n_eval, "seed": eval_seed},
        },
    )
    v = ConstantValueFn(0.0)
    cum = 0
    for t in range(budget.max_iters):
        t0 = time.perf_counter()
        n_t = budget.n_at(t)
        data = sample_transitions(env, n_t, derive_seed(seed, t, _REG_STREAM))
        cum += n_t
        targets = data.rewards + gamma * v(data.next_states)
        v = fit((data.states, targets), regressor_config, derive_seed(seed, t, _FIT_STREAM))
        err = evaluator(v)
        wall = (time.perf_counter() - t0) * 1e3
        record.add_row(iter=t + 1, cum_samples=cum, mu_error=err, ridge_used=0.0, wall_ms=wall)
    return record


# ---------------------------------------------------------------------------
# Krylov-Bellman boosting
# ---------------------------------------------------------------------------


class _BasisCache:
    """Basis evaluations on a fixed set of states, grown one column at a time."""

    def __init__(self, states):
        self.states = states
        self.columns = []

    def append(self, fn):
        self.columns.append(fn(self.states))

    def matrix(self) -> np.ndarray:
        if not self.columns:
            return np.zeros((self.states.shape[0], 0))
        return np.column_stack(self.columns)


def run_kbb(env, regressor_config: RegressorConfig, budget: IterationBudget, truth=None,
            seed: int = 0, n_eval: int = 10_000, eval_seed: int = 0,
            config_hash: str = "") -> RunRecord:
    """Krylov-Bellman boosting.

    Each iteration fits the sampled Bellman residual of the current iterate,
    appends the fit to the basis (after a degeneracy guard), re-solves the
    LSTD system over the grown basis, and takes the LSTD combination as the
    next iterate.  Accepted basis functions are normalized to unit empirical
    RMS before entering the basis; LSTD coefficients absorb the scale, so
    iterates are unchanged while the system stays well-conditioned.

    A guard rejection leaves the basis as-is; the iteration still re-solves
    LSTD on the fresh dataset and the row is flagged in the run metadata.
    """
    if truth is None:
        truth = envs.true_value(env)
    gamma = _gamma_of(env)
    evaluator = ErrorEvaluator(env, truth, n_eval=n_eval, seed=eval_seed)
    record = RunRecord(
        algo="kbb",
        initial_error=evaluator(ConstantValueFn(0.0)),
        config_hash=config_hash,
        seeds=[seed],
        meta={
            "env": envs.env_params(env),
            "budget": budget.__dict__,
            "regressor": regressor_config.__dict__,
            "eval": {"n_eval": n_eval, "seed": eval_seed},
        },
    )
    basis = BasisSet()
    coeffs = np.zeros(0)
    eval_cache = _BasisCache(evaluator.states)
    rejected: list[int] = []
    cum = 0
    for t in range(budget.max_iters):
        t0 = time.perf_counter()
        n_t = budget.n_at(t)
        reg_data = sample_transitions(env, n_t, derive_seed(seed, t, _REG_STREAM))
        cum += n_t
        phi = basis.evaluate(reg_data.states)
        phi_next = basis.evaluate(reg_data.next_states)
        # Residual targets of the current iterate v_t = basis @ coeffs.
        v_states = phi @ coeffs
        v_next = phi_next @ coeffs
        targets = v_states - (reg_data.rewards + gamma * v_next)
        new_fn = fit((reg_data.states, targets), regressor_config, derive_seed(seed, t, _FIT_STREAM))
        new_col = new_fn(reg_data.states)
        rms = float(np.sqrt(np.mean(new_col**2)))
        accept = rms >= MIN_BASIS_NORM and span_correlation(phi, new_col) <= DUPLICATE_CORRELATION
        if accept:
            scaled = ScaledValueFn(new_fn, 1.0 / rms)
            basis.append(scaled)
            phi = np.column_stack([phi, new_col / rms]) if phi.size else (new_col / rms).reshape(-1, 1)
            phi_next = (
                np.column_stack([phi_next, new_fn(reg_data.next_states) / rms])
                if phi_next.size
                else (new_fn(reg_data.next_states) / rms).reshape(-1, 1)
            )
            eval_cache.append(scaled)
        else:
            rejected.append(t + 1)
        ridge = 0.0
        if budget.shared_data:
            lstd_phi, lstd_phi_next, lstd_rewards = phi, phi_next, reg_data.rewards
        else:
            lstd_data = sample_transitions(env, n_t, derive_seed(seed, t, _LSTD_STREAM))
            cum += n_t
            lstd_phi = basis.evaluate(lstd_data.states)
            lstd_phi_next = basis.evaluate(lstd_data.next_states)
            lstd_rewards = lstd_data.rewards
        if len(basis) > 0:
            n = float(lstd_phi.shape[0])
            a = lstd_phi.T @ (lstd_phi - gamma * lstd_phi_next) / n
            b = lstd_phi.T @ lstd_rewards / n
            sol = solve_linear_system(a, b)
            coeffs = sol.coeffs
            ridge = sol.ridge_used
        err = evaluator.error_of_values(eval_cache.matrix() @ coeffs)
        wall = (time.perf_counter() - t0) * 1e3
        record.add_row(iter=t + 1, cum_samples=cum, mu_error=err, ridge_used=ridge, wall_ms=wall)
    record.meta["rejected_iters"] = rejected
    return record
