"""Regression backends for residual fitting and backup fitting.

Two regressor kinds sit behind one fit/evaluate contract:

* ``tabular_mean``: the per-state sample average, which is the global
  least-squares minimizer over unrestricted state functions; unvisited
  states evaluate to 0.
* ``boosted_trees``: least-squares gradient boosting of depth-limited CART
  trees, initialized at the global target mean.

Both are deterministic given (data, config, seed).
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .envs import Dataset
from .trees import RegressionTree
from .values import StateValueFn, TableValueFn, as_states

__all__ = [
    "RegressionPair",
    "RegressorConfig",
    "TabularMeanFn",
    "BoostedTreesFn",
    "fit",
    "fit_residual",
    "fit_backup",
    "residual_targets",
    "backup_targets",
    "serialize_fitted",
    "deserialize_fitted",
]


@dataclass(frozen=True)
class RegressionPair:
    x: object
    y: float


@dataclass(frozen=True)
class RegressorConfig:
    """Hyperparameters for the regression backend.

    ``kind`` is "tabular_mean" or "boosted_trees"; tree parameters are
    ignored by the tabular backend.
    """

    kind: str = "boosted_trees"
    n_trees: int = 200
    max_depth: int = 3
    learning_rate: float = 0.1
    min_leaf: int = 5
    subsample: float = 1.0

    def __post_init__(self):
        if self.kind not in ("tabular_mean", "boosted_trees"):
            raise ValueError(f"unknown regressor kind: {self.kind!r}")
        if self.n_trees < 1 or self.max_depth < 0 or self.min_leaf < 1:
            raise ValueError("n_trees, max_depth, min_leaf must be positive")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")
        if not 0.0 < self.subsample <= 1.0:
            raise ValueError("subsample must be in (0, 1]")


class TabularMeanFn(TableValueFn):
    """Per-state sample mean; states never seen in training evaluate to 0."""

    def __init__(self, values, counts):
        super().__init__(values, default=0.0)
        self.counts = np.asarray(counts, dtype=np.int64)


class BoostedTreesFn(StateValueFn):
    """Additive tree ensemble: base value plus learning_rate-weighted trees.

    Evaluation traverses all trees at once on a stacked node table, chunked
    over rows so the traversal frontier stays cache-resident.
    """

    def __init__(self, base_value: float, learning_rate: float, trees, train_mse_path):
        self.base_value = float(base_value)
        self.learning_rate = float(learning_rate)
        self.trees = list(trees)
        self.train_mse_path = np.asarray(train_mse_path, dtype=np.float64)
        self._stacked = None

    def _stack(self):
        if self._stacked is None and self.trees:
            offsets = np.cumsum([0] + [t.feature.shape[0] for t in self.trees[:-1]])
            feature = np.concatenate([t.feature for t in self.trees])
            threshold = np.concatenate([t.threshold for t in self.trees])
            node_ids = np.concatenate(
                [np.arange(t.feature.shape[0]) + off for t, off in zip(self.trees, offsets)]
            )
            left = np.concatenate([t.left + off for t, off in zip(self.trees, offsets)])
            right = np.concatenate([t.right + off for t, off in zip(self.trees, offsets)])
            value = np.concatenate([t.value for t in self.trees])
            # leaves become self-loops with +inf thresholds so the traversal
            # below needs no masking
            is_leaf = feature < 0
            feature = np.where(is_leaf, 0, feature)
            threshold = np.where(is_leaf, np.inf, threshold)
            left = np.where(is_leaf, node_ids, left)
            right = np.where(is_leaf, node_ids, right)
            self._stacked = (offsets, feature, threshold, left, right, value)
        return self._stacked

    def __call__(self, states):
        x = _features(as_states(states))
        n = x.shape[0]
        if not self.trees:
            return np.full(n, self.base_value)
        offsets, feature, threshold, left, right, value = self._stack()
        n_trees = offsets.shape[0]
        chunk = max(1, (1 << 21) // n_trees)
        out = np.empty(n)
        for start in range(0, n, chunk):
            xb = x[start : start + chunk]
            idx = np.broadcast_to(offsets, (xb.shape[0], n_trees)).copy()
            while True:
                xf = np.take_along_axis(xb, feature[idx], axis=1)
                nxt = np.where(xf <= threshold[idx], left[idx], right[idx])
                if np.array_equal(nxt, idx):
                    break
                idx = nxt
            out[start : start + chunk] = value[idx].sum(axis=1)
        return self.base_value + self.learning_rate * out

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_stacked"] = None
        return state

    def __repr__(self):
        return f"BoostedTreesFn(n_trees={len(self.trees)})"


def _features(states: np.ndarray) -> np.ndarray:
    """Tree feature matrix: tabular indices become a single float column."""
    if states.ndim == 1:
        return states.astype(np.float64).reshape(-1, 1)
    return states


def _normalize_pairs(pairs):
    """Accept a list of RegressionPair or an (states, targets) array pair."""
    if isinstance(pairs, tuple) and len(pairs) == 2:
        states, targets = pairs
        states = as_states(states)
        targets = np.asarray(targets, dtype=np.float64).reshape(-1)
    else:
        pairs = list(pairs)
        if not pairs:
            raise ValueError("empty regression input")
        states = as_states(np.asarray([p.x for p in pairs]))
        targets = np.asarray([p.y for p in pairs], dtype=np.float64)
    if states.shape[0] == 0:
        raise ValueError("empty regression input")
    if states.shape[0] != targets.shape[0]:
        raise ValueError("state and target counts differ")
    if not np.isfinite(targets).all():
        raise ValueError("targets must be finite")
    return states, targets


def _fit_tabular_mean(states: np.ndarray, targets: np.ndarray) -> TabularMeanFn:
    if not np.issubdtype(states.dtype, np.integer):
        raise ValueError("tabular_mean requires integer states")
    if states.min() < 0:
        raise ValueError("state indices must be nonnegative")
    size = int(states.max()) + 1
    counts = np.bincount(states, minlength=size)
    sums = np.bincount(states, weights=targets, minlength=size)
    values = np.divide(sums, counts, out=np.zeros(size), where=counts > 0)
    return TabularMeanFn(values, counts)


def _fit_boosted(states, targets, config: RegressorConfig, seed: int) -> BoostedTreesFn:
    x = _features(states)
    n = x.shape[0]
    rng = np.random.default_rng(seed)
    base = float(targets.mean())
    pred = np.full(n, base)
    residual = targets - pred
    trees = []
    mse_path = [float(np.mean(residual**2))]
    for _ in range(config.n_trees):
        if config.subsample < 1.0:
            k = max(1, int(round(config.subsample * n)))
            rows = np.sort(rng.permutation(n)[:k])
        else:
            rows = slice(None)
        tree = RegressionTree(config.max_depth, config.min_leaf).fit(x[rows], residual[rows])
        pred += config.learning_rate * tree.predict(x)
        residual = targets - pred
        trees.append(tree)
        mse_path.append(float(np.mean(residual**2)))
    return BoostedTreesFn(base, config.learning_rate, trees, mse_path)


def fit(pairs, config: RegressorConfig, seed: int = 0):
    """Fit the configured regressor to (state, target) pairs.

    ``pairs`` is a list of RegressionPair or a tuple of (states, targets)
    arrays.  Returns an evaluable fitted function.
    """
    states, targets = _normalize_pairs(pairs)
    if config.kind == "tabular_mean":
        return _fit_tabular_mean(states, targets)
    return _fit_boosted(states, targets, config, seed)


def residual_targets(v, data: Dataset, gamma: float) -> np.ndarray:
    """Targets v(x) - (r + gamma v(x')) for residual regression."""
    return v(data.states) - (data.rewards + gamma * v(data.next_states))


def backup_targets(v, data: Dataset, gamma: float) -> np.ndarray:
    """Targets r + gamma v(x') for backup (fitted value iteration) regression."""
    return data.rewards + gamma * v(data.next_states)


def fit_residual(v, data: Dataset, gamma: float, config: RegressorConfig, seed: int = 0):
    """Fit the sampled Bellman residual of v on the dataset."""
    return fit((data.states, residual_targets(v, data, gamma)), config, seed)


def fit_backup(v, data: Dataset, gamma: float, config: RegressorConfig, seed: int = 0):
    """Fit the sampled Bellman backup of v on the dataset."""
    return fit((data.states, backup_targets(v, data, gamma)), config, seed)


# ---------------------------------------------------------------------------
# Serialization (self-describing binary blobs; internal format)
# ---------------------------------------------------------------------------


def serialize_fitted(fn) -> bytes:
    buf = io.BytesIO()
    if isinstance(fn, TabularMeanFn):
        np.savez(buf, kind=np.array("tabular_mean"), values=fn.values, counts=fn.counts)
    elif isinstance(fn, BoostedTreesFn):
        payload = {
            "kind": np.array("boosted_trees"),
            "base_value": np.array(fn.base_value),
            "learning_rate": np.array(fn.learning_rate),
            "n_trees": np.array(len(fn.trees)),
            "train_mse_path": fn.train_mse_path,
        }
        for i, tree in enumerate(fn.trees):
            for key, arr in tree.to_arrays().items():
                payload[f"tree{i}_{key}"] = arr
        np.savez(buf, **payload)
    else:
        raise ValueError(f"cannot serialize {type(fn).__name__}")
    return buf.getvalue()


def deserialize_fitted(raw: bytes):
    data = np.load(io.BytesIO(raw))
    kind = str(data["kind"])
    if kind == "tabular_mean":
        return TabularMeanFn(data["values"], data["counts"])
    if kind == "boosted_trees":
        n_trees = int(data["n_trees"])
        trees = [
            RegressionTree.from_arrays(
                {key: data[f"tree{i}_{key}"] for key in ("feature", "threshold", "left", "right", "value")},
                max_depth=0,
                min_leaf=1,
            )
            for i in range(n_trees)
        ]
        return BoostedTreesFn(
            float(data["base_value"]),
            float(data["learning_rate"]),
            trees,
            data["train_mse_path"],
        )
    raise ValueError(f"unknown fitted-function kind: {kind!r}")
