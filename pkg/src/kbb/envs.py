"""Benchmark MRP families with samplers and closed-form ground truth.

Five families: dense random tabular chains, a circular random walk,
linear-quadratic dynamics with Gaussian noise under a fixed linear policy,
a 3-d nonlinear system that linearizes under a polynomial change of
coordinates, and an ARCH model with state-dependent noise scale.

Cost-based families report their cost as the reward signal; for policy
evaluation the sign convention is irrelevant and keeping one convention
lets every algorithm run unchanged.
"""

from __future__ import annotations

import enum
import io
import json
import struct
from dataclasses import dataclass

import numpy as np

from .mrp import Distribution, TabularModel, stationary_distribution
from .values import QuadraticValueFn, TableValueFn

__all__ = [
    "DrawMode",
    "TransitionSample",
    "Dataset",
    "LqrModel",
    "ArchModel",
    "NonlinearModel",
    "make_random_tabular",
    "make_circular_walk",
    "make_lqr",
    "make_nonlinear",
    "make_arch",
    "lqr_true_value",
    "nonlinear_true_value",
    "arch_true_value",
    "true_value",
    "sample_transitions",
    "stationary_states",
    "stationary_covariance",
    "arch_contraction_factor",
    "nonlinear_to_z",
    "nonlinear_from_z",
    "simulate_nonlinear_x",
    "simulate_linear_z",
    "env_id",
    "state_dim",
    "env_params",
    "save_dataset",
    "load_dataset",
    "dataset_to_bytes",
    "dataset_to_csv",
]

# Fixed by design, recorded in run metadata: spectral-radius target for the
# closed-loop LQR map, noise covariance scale, ARCH rescaling budgets, and
# the ARCH trajectory sampler's burn-in/stride.
LQR_SPECTRAL_TARGET = 0.9
NOISE_SCALE = 0.1
ARCH_LIN_BUDGET = 0.5  # target ||L||_2^2
ARCH_TOTAL_BUDGET = 0.95  # ||L||_2^2 + ||Gamma||_F ||Sigma||_F stays below this
ARCH_BURN_IN = 1000
ARCH_STRIDE = 10


class DrawMode(enum.Enum):
    EXACT_STATIONARY = "exact_stationary"
    BURN_IN_TRAJECTORY = "burn_in_trajectory"


@dataclass(frozen=True)
class TransitionSample:
    """One (state, reward, next state) triple."""

    state: object
    reward: float
    next_state: object


class Dataset:
    """Column-oriented batch of transition triples.

    ``states``/``next_states`` are either 1-d int64 index arrays (tabular)
    or 2-d float64 point arrays (continuous); both members always share kind
    and shape.  Rewards are deterministic functions of the state.
    """

    def __init__(self, states, rewards, next_states, env_id: str, seed: int, draw_mode: DrawMode):
        states = np.asarray(states)
        next_states = np.asarray(next_states)
        rewards = np.asarray(rewards, dtype=np.float64).reshape(-1)
        if states.shape != next_states.shape or states.dtype.kind != next_states.dtype.kind:
            raise ValueError("states and next_states must have identical kind and shape")
        if states.shape[0] != rewards.shape[0]:
            raise ValueError("rewards length must match number of states")
        if states.shape[0] == 0:
            raise ValueError("dataset must be nonempty")
        self.states = states
        self.rewards = rewards
        self.next_states = next_states
        self.env_id = str(env_id)
        self.seed = int(seed)
        self.draw_mode = draw_mode

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def n(self) -> int:
        return len(self)

    @property
    def is_tabular(self) -> bool:
        return self.states.ndim == 1

    @property
    def state_dim(self) -> int:
        return 1 if self.is_tabular else self.states.shape[1]

    def __getitem__(self, i: int) -> TransitionSample:
        if self.is_tabular:
            return TransitionSample(int(self.states[i]), float(self.rewards[i]), int(self.next_states[i]))
        return TransitionSample(self.states[i].copy(), float(self.rewards[i]), self.next_states[i].copy())

    @property
    def samples(self) -> list:
        return [self[i] for i in range(len(self))]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.env_id == other.env_id
            and self.seed == other.seed
            and self.draw_mode == other.draw_mode
            and self.states.shape == other.states.shape
            and np.array_equal(self.states, other.states)
            and np.array_equal(self.rewards, other.rewards)
            and np.array_equal(self.next_states, other.next_states)
        )


# ---------------------------------------------------------------------------
# Model types
# ---------------------------------------------------------------------------


def _check_psd(mat: np.ndarray, name: str, tol: float = 1e-10):
    mat = np.asarray(mat, dtype=np.float64)
    scale = max(1.0, float(np.abs(mat).max()))
    if np.abs(mat - mat.T).max() > tol * scale:
        raise ValueError(f"{name} must be symmetric")
    eigs = np.linalg.eigvalsh(0.5 * (mat + mat.T))
    if eigs.min() < -tol * scale:
        raise ValueError(f"{name} must be positive semidefinite (min eig {eigs.min():.3e})")


@dataclass(frozen=True)
class LqrModel:
    """Linear dynamics x' = (A + B K) x + W under a fixed linear policy.

    The per-step cost x'(Q + K'RK)x is the reward signal.  The closed-loop
    matrix must be stable (spectral radius < 1).
    """

    a_mat: np.ndarray
    b_mat: np.ndarray
    k_mat: np.ndarray
    q_cost: np.ndarray
    r_cost: np.ndarray
    noise_cov: np.ndarray
    gamma: float

    def __post_init__(self):
        for name in ("a_mat", "b_mat", "k_mat", "q_cost", "r_cost", "noise_cov"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        object.__setattr__(self, "gamma", float(self.gamma))
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        d = self.a_mat.shape[0]
        m = self.b_mat.shape[1]
        if self.a_mat.shape != (d, d) or self.b_mat.shape != (d, m) or self.k_mat.shape != (m, d):
            raise ValueError("inconsistent LQR dimensions")
        _check_psd(self.q_cost, "q_cost")
        _check_psd(self.r_cost, "r_cost")
        _check_psd(self.noise_cov, "noise_cov")
        rho = np.abs(np.linalg.eigvals(self.closed_loop)).max()
        if rho >= 1.0:
            raise ValueError(f"closed-loop spectral radius {rho:.6f} must be < 1")

    @property
    def d(self) -> int:
        return self.a_mat.shape[0]

    @property
    def closed_loop(self) -> np.ndarray:
        return self.a_mat + self.b_mat @ self.k_mat

    @property
    def cost_mat(self) -> np.ndarray:
        c = self.q_cost + self.k_mat.T @ self.r_cost @ self.k_mat
        return 0.5 * (c + c.T)


@dataclass(frozen=True)
class ArchModel:
    """ARCH dynamics x' = L x + sqrt(q + x' Gamma x) * W with quadratic cost x' R x."""

    a_mat: np.ndarray
    scale_mat: np.ndarray
    cost_mat: np.ndarray
    q_scalar: float
    noise_cov: np.ndarray
    gamma: float

    def __post_init__(self):
        for name in ("a_mat", "scale_mat", "cost_mat", "noise_cov"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "q_scalar", float(self.q_scalar))
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must be in (0, 1)")
        if self.q_scalar < 0:
            raise ValueError("q_scalar must be nonnegative")
        _check_psd(self.scale_mat, "scale_mat")
        _check_psd(self.cost_mat, "cost_mat")
        _check_psd(self.noise_cov, "noise_cov")
        if arch_contraction_factor(self) >= 1.0:
            raise ValueError("value recursion for this ARCH model is not a contraction")

    @property
    def d(self) -> int:
        return self.a_mat.shape[0]


def arch_contraction_factor(model: ArchModel) -> float:
    """Upper bound on the contraction factor of P -> gamma(L'PL + Gamma tr(P Sigma))."""
    lin = float(np.linalg.norm(model.a_mat, 2)) ** 2
    cross = float(np.linalg.norm(model.scale_mat, "fro") * np.linalg.norm(model.noise_cov, "fro"))
    return model.gamma * (lin + cross)


def nonlinear_to_z(x: np.ndarray) -> np.ndarray:
    """Coordinate change (x1 - x2^2, x2, x3 - x1^2); rows are points."""
    x = np.asarray(x, dtype=np.float64)
    z = np.empty_like(x)
    z[..., 0] = x[..., 0] - x[..., 1] ** 2
    z[..., 1] = x[..., 1]
    z[..., 2] = x[..., 2] - x[..., 0] ** 2
    return z


def nonlinear_from_z(z: np.ndarray) -> np.ndarray:
    """Inverse coordinate change: x1 = z1 + z2^2, x2 = z2, x3 = z3 + x1^2."""
    z = np.asarray(z, dtype=np.float64)
    x = np.empty_like(z)
    x[..., 0] = z[..., 0] + z[..., 1] ** 2
    x[..., 1] = z[..., 1]
    x[..., 2] = z[..., 2] + x[..., 0] ** 2
    return x


@dataclass(frozen=True)
class NonlinearModel:
    """3-d nonlinear system that is linear in z = (x1 - x2^2, x2, x3 - x1^2)."""

    inner: LqrModel

    def __post_init__(self):
        if self.inner.d != 3:
            raise ValueError("nonlinear model requires a 3-d inner system")


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------


def make_random_tabular(n: int, gamma: float, seed: int) -> TabularModel:
    """Dense chain: Unif(0,1) transition entries row-normalized, Unif(0,1) rewards."""
    if n < 2:
        raise ValueError("random tabular model needs n >= 2")
    rng = np.random.default_rng(seed)
    trans = rng.uniform(0.0, 1.0, size=(n, n))
    trans /= trans.sum(axis=1, keepdims=True)
    reward = rng.uniform(0.0, 1.0, size=n)
    return TabularModel(trans=trans, reward=reward, gamma=gamma)


def make_circular_walk(n: int, gamma: float, seed: int) -> TabularModel:
    """Lazy random walk on a circle: stay w.p. 1/3, step +-1 or +-2 w.p. 1/6 each."""
    if n < 5:
        raise ValueError("circular walk needs n >= 5 so the stencil does not overlap")
    rng = np.random.default_rng(seed)
    trans = np.zeros((n, n))
    idx = np.arange(n)
    trans[idx, idx] = 1.0 / 3.0
    for off in (-2, -1, 1, 2):
        trans[idx, (idx + off) % n] = 1.0 / 6.0
    reward = rng.uniform(0.0, 1.0, size=n)
    return TabularModel(trans=trans, reward=reward, gamma=gamma)


def make_lqr(d: int, m: int, gamma: float, seed: int) -> LqrModel:
    """Random LQR instance, closed loop rescaled to spectral radius 0.9.

    A, B, K draw Unif(0,1) entries; A and B are scaled by a common factor so
    A + BK hits the target radius.  Costs are Gram matrices of Unif(0,1)
    draws; the noise covariance is 0.1 * I.
    """
    if d < 1 or m < 1:
        raise ValueError("d and m must be >= 1")
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.0, 1.0, size=(d, d))
    b = rng.uniform(0.0, 1.0, size=(d, m))
    k = rng.uniform(0.0, 1.0, size=(m, d))
    rho = np.abs(np.linalg.eigvals(a + b @ k)).max()
    scale = LQR_SPECTRAL_TARGET / rho
    a *= scale
    b *= scale
    gq = rng.uniform(0.0, 1.0, size=(d, d))
    gr = rng.uniform(0.0, 1.0, size=(m, m))
    return LqrModel(
        a_mat=a,
        b_mat=b,
        k_mat=k,
        q_cost=gq.T @ gq,
        r_cost=gr.T @ gr,
        noise_cov=NOISE_SCALE * np.eye(d),
        gamma=gamma,
    )


def make_nonlinear(gamma: float, seed: int) -> NonlinearModel:
    """3-d nonlinear benchmark: a random d=m=3 linear system in z-coordinates."""
    return NonlinearModel(inner=make_lqr(3, 3, gamma, seed))


def make_arch(d: int, q: float, gamma: float, seed: int) -> ArchModel:
    """Random ARCH instance rescaled so the value recursion is a contraction.

    L is scaled to ||L||_2^2 = 0.5 and Gamma so that the combined factor
    ||L||_2^2 + ||Gamma||_F ||Sigma||_F stays at 0.95; this keeps both the
    value recursion (with any gamma < 1) and the state second moment stable.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if q < 0:
        raise ValueError("q must be nonnegative")
    rng = np.random.default_rng(seed)
    a = rng.uniform(0.0, 1.0, size=(d, d))
    a *= np.sqrt(ARCH_LIN_BUDGET) / np.linalg.norm(a, 2)
    g_scale = rng.uniform(0.0, 1.0, size=(d, d))
    scale_mat = g_scale.T @ g_scale
    noise = NOISE_SCALE * np.eye(d)
    budget = ARCH_TOTAL_BUDGET - ARCH_LIN_BUDGET
    denom = np.linalg.norm(scale_mat, "fro") * np.linalg.norm(noise, "fro")
    scale_mat = scale_mat * (budget / denom)
    g_cost = rng.uniform(0.0, 1.0, size=(d, d))
    return ArchModel(
        a_mat=a,
        scale_mat=scale_mat,
        cost_mat=g_cost.T @ g_cost,
        q_scalar=q,
        noise_cov=noise,
        gamma=gamma,
    )


# ---------------------------------------------------------------------------
# Ground-truth value functions
# ---------------------------------------------------------------------------


def lqr_true_value(model: LqrModel, tol: float = 1e-12, max_iters: int = 100_000) -> QuadraticValueFn:
    """Quadratic ground truth x'Px + gamma/(1-gamma) tr(P Sigma).

    P is the fixed point of P -> C + gamma M' P M with M the closed loop and
    C the effective cost, obtained by fixed-point iteration.
    """
    m = model.closed_loop
    c = model.cost_mat
    p = np.zeros_like(c)
    for _ in range(max_iters):
        p_next = c + model.gamma * m.T @ p @ m
        if np.abs(p_next - p).max() <= tol:
            p = p_next
            break
        p = p_next
    else:
        raise RuntimeError("Lyapunov fixed-point iteration did not converge")
    p = 0.5 * (p + p.T)
    offset = model.gamma / (1.0 - model.gamma) * float(np.trace(p @ model.noise_cov))
    return QuadraticValueFn(p, offset=offset)


def nonlinear_true_value(model: NonlinearModel) -> QuadraticValueFn:
    """Ground truth for the nonlinear system: the inner solution composed with z(x)."""
    inner = lqr_true_value(model.inner)
    return QuadraticValueFn(inner.p_mat, offset=inner.offset, coord_map=nonlinear_to_z)


def arch_true_value(model: ArchModel, tol: float = 1e-12, max_iters: int = 100_000) -> QuadraticValueFn:
    """Quadratic ground truth for the ARCH model.

    P solves P = R + gamma(L'PL + Gamma tr(P Sigma)); the offset is
    gamma q/(1-gamma) tr(P Sigma).
    """
    l_mat, g_mat, r_mat = model.a_mat, model.scale_mat, model.cost_mat
    p = np.zeros_like(r_mat)
    for _ in range(max_iters):
        p_next = r_mat + model.gamma * (
            l_mat.T @ p @ l_mat + g_mat * float(np.trace(p @ model.noise_cov))
        )
        if np.abs(p_next - p).max() <= tol:
            p = p_next
            break
        p = p_next
    else:
        raise RuntimeError("ARCH fixed-point iteration did not converge")
    p = 0.5 * (p + p.T)
    resid = np.abs(
        p - (r_mat + model.gamma * (l_mat.T @ p @ l_mat + g_mat * float(np.trace(p @ model.noise_cov))))
    ).max()
    if resid > 1e-10 * max(1.0, np.abs(p).max()):
        raise RuntimeError(f"ARCH value fixed-point residual {resid:.3e} too large")
    offset = model.gamma * model.q_scalar / (1.0 - model.gamma) * float(np.trace(p @ model.noise_cov))
    return QuadraticValueFn(p, offset=offset)


def true_value(env):
    """Ground-truth value function for any benchmark model."""
    if isinstance(env, TabularModel):
        from .mrp import solve_exact

        return TableValueFn(solve_exact(env))
    if isinstance(env, LqrModel):
        return lqr_true_value(env)
    if isinstance(env, NonlinearModel):
        return nonlinear_true_value(env)
    if isinstance(env, ArchModel):
        return arch_true_value(env)
    raise ValueError(f"unsupported model kind: {type(env).__name__}")


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def _psd_factor(mat: np.ndarray) -> np.ndarray:
    """Symmetric factor S with S S' = mat; works for singular PSD matrices."""
    w, v = np.linalg.eigh(0.5 * (mat + mat.T))
    w = np.clip(w, 0.0, None)
    return v * np.sqrt(w)


def stationary_covariance(model: LqrModel, tol: float = 1e-14, max_iters: int = 100_000) -> np.ndarray:
    """Solve S = M S M' + Sigma for the closed loop by fixed-point iteration."""
    m = model.closed_loop
    s = np.zeros_like(model.noise_cov)
    for _ in range(max_iters):
        s_next = m @ s @ m.T + model.noise_cov
        if np.abs(s_next - s).max() <= tol * max(1.0, np.abs(s_next).max()):
            return 0.5 * (s_next + s_next.T)
        s = s_next
    raise RuntimeError("stationary covariance iteration did not converge")


def _quad_rewards(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    return np.einsum("ni,ij,nj->n", x, c, x)


def _sample_tabular(model: TabularModel, n: int, rng: np.random.Generator) -> tuple:
    mu = stationary_distribution(model)
    cdf_mu = np.cumsum(mu.weights)
    cdf_mu[-1] = 1.0
    states = np.searchsorted(cdf_mu, rng.random(n), side="right").astype(np.int64)
    cdf_rows = np.cumsum(model.trans, axis=1)
    cdf_rows[:, -1] = 1.0
    u = rng.random(n)
    nxt = np.empty(n, dtype=np.int64)
    for s in np.unique(states):
        mask = states == s
        nxt[mask] = np.searchsorted(cdf_rows[s], u[mask], side="right")
    rewards = model.reward[states]
    return states, rewards, nxt


def _sample_lqr(model: LqrModel, n: int, rng: np.random.Generator) -> tuple:
    s_inf = stationary_covariance(model)
    x = rng.standard_normal((n, model.d)) @ _psd_factor(s_inf).T
    w = rng.standard_normal((n, model.d)) @ _psd_factor(model.noise_cov).T
    x_next = x @ model.closed_loop.T + w
    return x, _quad_rewards(x, model.cost_mat), x_next


def _sample_nonlinear(model: NonlinearModel, n: int, rng: np.random.Generator) -> tuple:
    z, rewards, z_next = _sample_lqr(model.inner, n, rng)
    return nonlinear_from_z(z), rewards, nonlinear_from_z(z_next)


def _arch_step(model: ArchModel, x: np.ndarray, w: np.ndarray) -> np.ndarray:
    scale = np.sqrt(model.q_scalar + _quad_rewards(x, model.scale_mat))
    return x @ model.a_mat.T + scale[:, None] * w


def _sample_arch(model: ArchModel, n: int, rng: np.random.Generator) -> tuple:
    noise_factor = _psd_factor(model.noise_cov).T
    x = np.zeros((1, model.d))
    for _ in range(ARCH_BURN_IN):
        x = _arch_step(model, x, rng.standard_normal((1, model.d)) @ noise_factor)
    states = np.empty((n, model.d))
    next_states = np.empty((n, model.d))
    for i in range(n):
        states[i] = x[0]
        x = _arch_step(model, x, rng.standard_normal((1, model.d)) @ noise_factor)
        next_states[i] = x[0]
        for _ in range(ARCH_STRIDE - 1):
            x = _arch_step(model, x, rng.standard_normal((1, model.d)) @ noise_factor)
    rewards = _quad_rewards(states, model.cost_mat)
    return states, rewards, next_states


def env_id(env) -> str:
    if isinstance(env, TabularModel):
        return f"tabular-n{env.n_states}"
    if isinstance(env, LqrModel):
        return f"lqr-d{env.d}"
    if isinstance(env, NonlinearModel):
        return "nonlinear-d3"
    if isinstance(env, ArchModel):
        return f"arch-d{env.d}"
    raise ValueError(f"unsupported model kind: {type(env).__name__}")


def state_dim(env) -> int:
    if isinstance(env, TabularModel):
        return 1
    if isinstance(env, NonlinearModel):
        return 3
    return env.d


def env_params(env) -> dict:
    """Loggable scalar summary of a model (sizes, gamma, rescaling facts)."""
    if isinstance(env, TabularModel):
        return {"kind": "tabular", "n_states": env.n_states, "gamma": env.gamma}
    if isinstance(env, LqrModel):
        return {
            "kind": "lqr",
            "d": env.d,
            "m": env.b_mat.shape[1],
            "gamma": env.gamma,
            "closed_loop_radius": float(np.abs(np.linalg.eigvals(env.closed_loop)).max()),
            "noise_scale": NOISE_SCALE,
        }
    if isinstance(env, NonlinearModel):
        inner = env_params(env.inner)
        inner["kind"] = "nonlinear"
        return inner
    if isinstance(env, ArchModel):
        return {
            "kind": "arch",
            "d": env.d,
            "q": env.q_scalar,
            "gamma": env.gamma,
            "contraction_factor": arch_contraction_factor(env),
            "noise_scale": NOISE_SCALE,
            "burn_in": ARCH_BURN_IN,
            "stride": ARCH_STRIDE,
        }
    raise ValueError(f"unsupported model kind: {type(env).__name__}")


def sample_transitions(env, n: int, seed: int) -> Dataset:
    """Draw n transition triples (x, r(x), x').

    Tabular, LQR, and nonlinear models draw x exactly from the stationary
    law; ARCH has no closed-form stationary law so a burned-in trajectory is
    subsampled with a stride, and the dataset records that mode.
    """
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    mode = DrawMode.EXACT_STATIONARY
    if isinstance(env, TabularModel):
        states, rewards, nxt = _sample_tabular(env, n, rng)
    elif isinstance(env, LqrModel):
        states, rewards, nxt = _sample_lqr(env, n, rng)
    elif isinstance(env, NonlinearModel):
        states, rewards, nxt = _sample_nonlinear(env, n, rng)
    elif isinstance(env, ArchModel):
        states, rewards, nxt = _sample_arch(env, n, rng)
        mode = DrawMode.BURN_IN_TRAJECTORY
    else:
        raise ValueError(f"unsupported model kind: {type(env).__name__}")
    return Dataset(states, rewards, nxt, env_id=env_id(env), seed=seed, draw_mode=mode)


def stationary_states(env, n: int, seed: int) -> np.ndarray:
    """Draw n states from the stationary law (trajectory-based for ARCH)."""
    rng = np.random.default_rng(seed)
    if isinstance(env, TabularModel):
        mu = stationary_distribution(env)
        cdf = np.cumsum(mu.weights)
        cdf[-1] = 1.0
        return np.searchsorted(cdf, rng.random(n), side="right").astype(np.int64)
    if isinstance(env, LqrModel):
        s_inf = stationary_covariance(env)
        return rng.standard_normal((n, env.d)) @ _psd_factor(s_inf).T
    if isinstance(env, NonlinearModel):
        return nonlinear_from_z(stationary_states(env.inner, n, seed))
    if isinstance(env, ArchModel):
        states, _, _ = _sample_arch(env, n, rng)
        return states
    raise ValueError(f"unsupported model kind: {type(env).__name__}")


# ---------------------------------------------------------------------------
# Nonlinear simulation in both coordinate systems
# ---------------------------------------------------------------------------


def simulate_linear_z(model: NonlinearModel, z0: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """Iterate z' = M z + w for a given noise sequence; returns all iterates."""
    m = model.inner.closed_loop
    steps = noise.shape[0]
    out = np.empty((steps + 1, 3))
    out[0] = z0
    for t in range(steps):
        out[t + 1] = m @ out[t] + noise[t]
    return out


def simulate_nonlinear_x(model: NonlinearModel, x0: np.ndarray, noise: np.ndarray) -> np.ndarray:
    """Step the system in x-space: features z(x), linear update, map back."""
    m = model.inner.closed_loop
    steps = noise.shape[0]
    out = np.empty((steps + 1, 3))
    out[0] = x0
    for t in range(steps):
        z = nonlinear_to_z(out[t])
        out[t + 1] = nonlinear_from_z(m @ z + noise[t])
    return out


# ---------------------------------------------------------------------------
# Dataset serialization
# ---------------------------------------------------------------------------

_MAGIC = b"MRPDATA1"


def dataset_to_bytes(ds: Dataset) -> bytes:
    """Binary columnar encoding: JSON header, then little-endian f64 columns."""
    header = {
        "env_id": ds.env_id,
        "seed": ds.seed,
        "n": len(ds),
        "state_dim": ds.state_dim,
        "draw_mode": ds.draw_mode.value,
        "state_kind": "index" if ds.is_tabular else "point",
    }
    hdr = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<I", len(hdr)))
    buf.write(hdr)
    states = ds.states.astype(np.float64).reshape(len(ds), -1)
    nxt = ds.next_states.astype(np.float64).reshape(len(ds), -1)
    for col in states.T:
        buf.write(col.astype("<f8").tobytes())
    buf.write(ds.rewards.astype("<f8").tobytes())
    for col in nxt.T:
        buf.write(col.astype("<f8").tobytes())
    return buf.getvalue()


def dataset_from_bytes(raw: bytes) -> Dataset:
    if raw[: len(_MAGIC)] != _MAGIC:
        raise ValueError("not a dataset file (bad magic)")
    off = len(_MAGIC)
    (hlen,) = struct.unpack_from("<I", raw, off)
    off += 4
    header = json.loads(raw[off : off + hlen].decode("utf-8"))
    off += hlen
    n, d = header["n"], header["state_dim"]
    cols = np.frombuffer(raw, dtype="<f8", offset=off).reshape(2 * d + 1, n)
    states = cols[:d].T.copy()
    rewards = cols[d].copy()
    nxt = cols[d + 1 :].T.copy()
    if header["state_kind"] == "index":
        states = states.reshape(-1).astype(np.int64)
        nxt = nxt.reshape(-1).astype(np.int64)
    return Dataset(
        states,
        rewards,
        nxt,
        env_id=header["env_id"],
        seed=header["seed"],
        draw_mode=DrawMode(header["draw_mode"]),
    )


def save_dataset(ds: Dataset, path):
    with open(path, "wb") as fh:
        fh.write(dataset_to_bytes(ds))


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        return dataset_from_bytes(fh.read())


def dataset_to_csv(ds: Dataset, path):
    """CSV export: idx, x_0..x_{d-1}, reward, xp_0..xp_{d-1}."""
    d = ds.state_dim
    cols = ["idx"] + [f"x_{j}" for j in range(d)] + ["reward"] + [f"xp_{j}" for j in range(d)]
    states = ds.states.reshape(len(ds), -1)
    nxt = ds.next_states.reshape(len(ds), -1)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(len(ds)):
            row = [str(i)]
            row += [format(v, ".17g") for v in states[i]]
            row.append(format(ds.rewards[i], ".17g"))
            row += [format(v, ".17g") for v in nxt[i]]
            fh.write(",".join(row) + "\n")
