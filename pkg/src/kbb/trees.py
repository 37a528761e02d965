"""Regression trees with exact greedy axis-aligned splits.

Splits minimize the sum of squared errors; candidate thresholds are the
midpoints between consecutive distinct sorted feature values.  Ties are
broken deterministically: lowest feature index first, then the smallest
threshold.  Leaves predict the mean of their targets.
"""

from __future__ import annotations

import numpy as np

__all__ = ["RegressionTree", "best_split"]


def best_split(x_col: np.ndarray, y: np.ndarray, min_leaf: int):
    """Best SSE-reducing split of one feature column.

    Returns (score, threshold) where score = sum_L^2/n_L + sum_R^2/n_R is to
    be maximized (total sum of squares is constant), or None when no valid
    split exists.  The first maximizer in sorted order is returned, i.e. the
    smallest threshold.
    """
    n = x_col.shape[0]
    if n < 2 * min_leaf:
        return None
    order = np.argsort(x_col, kind="stable")
    sv = x_col[order]
    sy = y[order]
    csum = np.cumsum(sy)
    total = csum[-1]
    i = np.arange(n - 1)
    n_left = i + 1
    n_right = n - n_left
    valid = (sv[:-1] < sv[1:]) & (n_left >= min_leaf) & (n_right >= min_leaf)
    if not valid.any():
        return None
    left_sum = csum[:-1]
    score = np.where(valid, left_sum**2 / n_left + (total - left_sum) ** 2 / n_right, -np.inf)
    j = int(np.argmax(score))
    return float(score[j]), float(0.5 * (sv[j] + sv[j + 1]))


class RegressionTree:
    """CART regression tree stored as flat node arrays."""

    def __init__(self, max_depth: int, min_leaf: int):
        self.max_depth = int(max_depth)
        self.min_leaf = int(min_leaf)
        self.feature: np.ndarray | None = None  # -1 marks a leaf
        self.threshold: np.ndarray | None = None
        self.left: np.ndarray | None = None
        self.right: np.ndarray | None = None
        self.value: np.ndarray | None = None

    def fit(self, x: np.ndarray, y: np.ndarray) -> "RegressionTree":
        feature, threshold, left, right, value = [], [], [], [], []

        def new_node():
            feature.append(-1)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
            return len(feature) - 1

        # Depth-first build; explicit stack keeps node ids deterministic.
        stack = [(new_node(), np.arange(x.shape[0]), 0)]
        while stack:
            node, rows, depth = stack.pop()
            ysub = y[rows]
            value[node] = float(ysub.mean())
            if depth >= self.max_depth or rows.shape[0] < 2 * self.min_leaf:
                continue
            best = None
            for f in range(x.shape[1]):
                cand = best_split(x[rows, f], ysub, self.min_leaf)
                if cand is None:
                    continue
                if best is None or cand[0] > best[0]:
                    best = (cand[0], f, cand[1])
            if best is None:
                continue
            score, f, thr = best
            n = rows.shape[0]
            if score - float(ysub.sum()) ** 2 / n <= 0.0:
                continue  # no SSE reduction: keep the leaf
            go_left = x[rows, f] <= thr
            feature[node] = f
            threshold[node] = thr
            left_id, right_id = new_node(), new_node()
            left[node], right[node] = left_id, right_id
            stack.append((right_id, rows[~go_left], depth + 1))
            stack.append((left_id, rows[go_left], depth + 1))

        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.float64)
        return self

    def predict(self, x: np.ndarray) -> np.ndarray:
        idx = np.zeros(x.shape[0], dtype=np.int64)
        while True:
            f = self.feature[idx]
            active = np.nonzero(f >= 0)[0]
            if active.size == 0:
                break
            cur = idx[active]
            go_left = x[active, f[active]] <= self.threshold[cur]
            idx[active] = np.where(go_left, self.left[cur], self.right[cur])
        return self.value[idx]

    def to_arrays(self) -> dict:
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left,
            "right": self.right,
            "value": self.value,
        }

    @classmethod
    def from_arrays(cls, arrays: dict, max_depth: int, min_leaf: int) -> "RegressionTree":
        tree = cls(max_depth, min_leaf)
        tree.feature = np.asarray(arrays["feature"], dtype=np.int64)
        tree.threshold = np.asarray(arrays["threshold"], dtype=np.float64)
        tree.left = np.asarray(arrays["left"], dtype=np.int64)
        tree.right = np.asarray(arrays["right"], dtype=np.int64)
        tree.value = np.asarray(arrays["value"], dtype=np.float64)
        return tree
