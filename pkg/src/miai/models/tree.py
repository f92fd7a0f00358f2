"""CART classifier with native categorical splits.

Categorical columns hold integer codes ``0..c-1``; a split sends a subset of
codes left.  Codes never seen at a node, and the code ``-1`` (a value outside
the training domain), follow the child that received more training records.
Leaves keep raw class counts; probabilities are Laplace smoothed so they are
never exactly 0 or 1.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

LEAF = -1


def _gini_score(counts: np.ndarray, totals: np.ndarray) -> np.ndarray:
    # sum_c n_c^2 / n; larger is purer. Empty partitions score 0.
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (counts.astype(float) ** 2).sum(axis=-1) / totals
    return np.where(totals > 0, s, 0.0)


def _gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - (p * p).sum())


class CARTClassifier(ClassifierMixin, BaseEstimator):
    """Gini-impurity decision tree.

    Parameters
    ----------
    max_depth : int
        Maximum depth; 0 yields a single leaf.
    min_leaf_count : int
        Minimum number of training records in every leaf.
    categorical : sequence of int, optional
        Column indices holding categorical codes.
    n_categories : sequence of int, optional
        Domain size of each categorical column (same order as ``categorical``).
        Defaults to ``max code + 1`` observed during fit.
    """

    def __init__(self, max_depth=12, min_leaf_count=5, categorical=(), n_categories=None):
        self.max_depth = max_depth
        self.min_leaf_count = min_leaf_count
        self.categorical = categorical
        self.n_categories = n_categories

    # -- fitting ---------------------------------------------------------
    def fit(self, X, y, classes=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        if X.ndim != 2:
            raise ValueError("X must be 2-dimensional")
        if len(X) == 0:
            raise ValueError("empty training set")
        if len(X) != len(y):
            raise ValueError("X and y have different lengths")
        if self.max_depth < 0 or self.min_leaf_count < 1:
            raise ValueError("max_depth must be >= 0 and min_leaf_count >= 1")

        if classes is None:
            classes = np.unique(y)
        self.classes_ = np.asarray(list(classes), dtype=object)
        index = {c: i for i, c in enumerate(self.classes_.tolist())}
        try:
            y_idx = np.array([index[v] for v in y.tolist()], dtype=np.intp)
        except KeyError as e:
            raise ValueError(f"label {e.args[0]!r} not among classes") from None
        self.n_features_in_ = X.shape[1]
        m = len(self.classes_)

        cat_cols = list(self.categorical)
        if self.n_categories is None:
            sizes = [int(X[:, j].max()) + 1 if len(X) else 1 for j in cat_cols]
        else:
            sizes = list(self.n_categories)
        self._is_cat = np.zeros(self.n_features_in_, dtype=bool)
        self._is_cat[cat_cols] = True
        self._n_cats = np.zeros(self.n_features_in_, dtype=np.intp)
        self._n_cats[cat_cols] = sizes
        width = max([1] + sizes)

        self.feature_ = []
        self.threshold_ = []
        self.left_set_ = []  # per node: bool row of length `width`
        self.children_left_ = []
        self.children_right_ = []
        self.default_left_ = []
        self.value_ = []
        self._width = width
        importance = np.zeros(self.n_features_in_)

        stack = [(np.arange(len(X)), 0, None, None)]
        while stack:
            idx, depth, parent, is_left = stack.pop()
            node = self._add_node(np.bincount(y_idx[idx], minlength=m))
            if parent is not None:
                (self.children_left_ if is_left else self.children_right_)[parent] = node
            split = None
            if depth < self.max_depth and len(idx) >= 2 * self.min_leaf_count and np.count_nonzero(self.value_[node]) > 1:
                split = self._best_split(X[idx], y_idx[idx], m)
            if split is None:
                continue
            j, thr, left_set, go_left, gain = split
            self.feature_[node] = j
            self.threshold_[node] = thr
            if left_set is not None:
                self.left_set_[node][: len(left_set)] = left_set
            n_left = int(go_left.sum())
            self.default_left_[node] = n_left >= len(idx) - n_left
            importance[j] += gain * len(idx) / len(X)
            # right child pushed first so the left subtree is numbered first
            stack.append((idx[~go_left], depth + 1, node, False))
            stack.append((idx[go_left], depth + 1, node, True))

        self.feature_ = np.array(self.feature_, dtype=np.intp)
        self.threshold_ = np.array(self.threshold_, dtype=float)
        self.left_set_ = np.array(self.left_set_, dtype=bool).reshape(-1, width)
        self.children_left_ = np.array(self.children_left_, dtype=np.intp)
        self.children_right_ = np.array(self.children_right_, dtype=np.intp)
        self.default_left_ = np.array(self.default_left_, dtype=bool)
        self.value_ = np.array(self.value_, dtype=np.int64).reshape(-1, m)
        total = importance.sum()
        self.feature_importances_ = importance / total if total > 0 else importance
        return self

    def _add_node(self, counts):
        self.feature_.append(LEAF)
        self.threshold_.append(np.nan)
        self.left_set_.append(np.zeros(self._width, dtype=bool))
        self.children_left_.append(LEAF)
        self.children_right_.append(LEAF)
        self.default_left_.append(True)
        self.value_.append(counts)
        return len(self.value_) - 1

    def _best_split(self, X, y, m):
        n = len(y)
        parent = np.bincount(y, minlength=m)
        parent_gini = _gini(parent)
        min_leaf = self.min_leaf_count
        best = None  # (score, j, thr, left_set)
        for j in range(X.shape[1]):
            col = X[:, j]
            if self._is_cat[j]:
                cand = self._categorical_split(col.astype(np.intp), y, m, self._n_cats[j], min_leaf)
            else:
                cand = self._numeric_split(col, y, m, min_leaf)
            if cand is not None and (best is None or cand[0] > best[0] + 1e-12):
                best = (cand[0], j, cand[1], cand[2])
        if best is None:
            return None
        score, j, thr, left_set = best
        if left_set is None:
            go_left = X[:, j] <= thr
        else:
            go_left = left_set[X[:, j].astype(np.intp)]
        child = n - score  # weighted child impurity * n
        gain = parent_gini - child / n
        return j, thr, left_set, go_left, max(gain, 0.0)

    @staticmethod
    def _numeric_split(col, y, m, min_leaf):
        n = len(y)
        order = np.argsort(col, kind="stable")
        xs = col[order]
        onehot = np.zeros((n, m))
        onehot[np.arange(n), y[order]] = 1.0
        cum = np.cumsum(onehot, axis=0)
        # candidate i: first i records go left
        i = np.arange(min_leaf, n - min_leaf + 1)
        if len(i) == 0:
            return None
        i = i[xs[i - 1] < xs[np.minimum(i, n - 1)]]
        if len(i) == 0:
            return None
        left = cum[i - 1]
        right = cum[-1] - left
        score = _gini_score(left, i.astype(float)) + _gini_score(right, (n - i).astype(float))
        b = int(np.argmax(score))
        k = i[b]
        return float(score[b]), float((xs[k - 1] + xs[k]) / 2.0), None

    @staticmethod
    def _categorical_split(codes, y, m, n_cats, min_leaf):
        n = len(y)
        table = np.bincount(codes * m + y, minlength=n_cats * m).reshape(n_cats, m)
        sizes = table.sum(axis=1)
        present = np.flatnonzero(sizes)
        if len(present) < 2:
            return None
        best = None
        # ordering by one class proportion is exact for two classes; for more
        # classes each class ordering is tried
        for c in range(m if m > 2 else 1):
            cls = c if m > 2 else 1
            frac = table[present, cls] / sizes[present]
            order = present[np.argsort(frac, kind="stable")]
            cum = np.cumsum(table[order], axis=0)
            n_left = cum.sum(axis=1)
            t = np.arange(1, len(order))
            ok = (n_left[t - 1] >= min_leaf) & (n - n_left[t - 1] >= min_leaf)
            t = t[ok]
            if len(t) == 0:
                continue
            left = cum[t - 1]
            right = cum[-1] - left
            score = _gini_score(left, n_left[t - 1].astype(float)) + _gini_score(right, (n - n_left[t - 1]).astype(float))
            b = int(np.argmax(score))
            if best is None or score[b] > best[0] + 1e-12:
                left_set = np.zeros(n_cats, dtype=bool)
                left_set[order[: t[b]]] = True
                n_l = n_left[t[b] - 1]
                # categories absent here go with the larger child
                absent = sizes == 0
                left_set[absent] = n_l >= n - n_l
                best = (float(score[b]), np.nan, left_set)
        return best

    # -- prediction ------------------------------------------------------
    def apply(self, X):
        """Leaf index reached by every row."""
        check_is_fitted(self, "value_")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        node = np.zeros(len(X), dtype=np.intp)
        rows = np.arange(len(X))
        active = self.feature_[node] != LEAF
        while active.any():
            r = rows[active]
            nd = node[r]
            j = self.feature_[nd]
            v = X[r, j]
            cat = self._is_cat[j]
            go_left = np.empty(len(r), dtype=bool)
            num = ~cat
            go_left[num] = v[num] <= self.threshold_[nd[num]]
            if cat.any():
                codes = v[cat].astype(np.intp)
                ncat = self._n_cats[j[cat]]
                valid = (codes >= 0) & (codes < ncat)
                lookup = self.left_set_[nd[cat], np.where(valid, codes, 0)]
                go_left[cat] = np.where(valid, lookup, self.default_left_[nd[cat]])
            node[r] = np.where(go_left, self.children_left_[nd], self.children_right_[nd])
            active = self.feature_[node] != LEAF
        return node

    def predict_proba(self, X):
        counts = self.value_[self.apply(X)]
        m = counts.shape[1]
        return (counts + 1.0) / (counts.sum(axis=1, keepdims=True) + m)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    @property
    def depth_(self) -> int:
        check_is_fitted(self, "value_")
        depth = np.zeros(len(self.value_), dtype=int)
        for nd in range(len(self.value_)):
            for ch in (self.children_left_[nd], self.children_right_[nd]):
                if ch != LEAF:
                    depth[ch] = depth[nd] + 1
        return int(depth.max())

    # -- persistence -----------------------------------------------------
    def to_dict(self) -> dict:
        check_is_fitted(self, "value_")
        return {
            "params": self.get_params(),
            "classes": self.classes_.tolist(),
            "is_cat": self._is_cat.tolist(),
            "n_cats": self._n_cats.tolist(),
            "feature": self.feature_.tolist(),
            "threshold": [None if np.isnan(t) else t for t in self.threshold_.tolist()],
            "left_set": [np.flatnonzero(row).tolist() for row in self.left_set_],
            "children_left": self.children_left_.tolist(),
            "children_right": self.children_right_.tolist(),
            "default_left": self.default_left_.tolist(),
            "value": self.value_.tolist(),
            "importances": self.feature_importances_.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CARTClassifier":
        params = dict(d["params"])
        params["categorical"] = tuple(params.get("categorical") or ())
        if params.get("n_categories") is not None:
            params["n_categories"] = tuple(params["n_categories"])
        tree = cls(**params)
        tree.classes_ = np.asarray(d["classes"], dtype=object)
        tree._is_cat = np.asarray(d["is_cat"], dtype=bool)
        tree._n_cats = np.asarray(d["n_cats"], dtype=np.intp)
        tree.n_features_in_ = len(tree._is_cat)
        tree._width = max([1] + tree._n_cats.tolist())
        tree.feature_ = np.asarray(d["feature"], dtype=np.intp)
        tree.threshold_ = np.array([np.nan if t is None else t for t in d["threshold"]], dtype=float)
        tree.left_set_ = np.zeros((len(tree.feature_), tree._width), dtype=bool)
        for i, members in enumerate(d["left_set"]):
            tree.left_set_[i, members] = True
        tree.children_left_ = np.asarray(d["children_left"], dtype=np.intp)
        tree.children_right_ = np.asarray(d["children_right"], dtype=np.intp)
        tree.default_left_ = np.asarray(d["default_left"], dtype=bool)
        tree.value_ = np.asarray(d["value"], dtype=np.int64).reshape(len(tree.feature_), -1)
        tree.feature_importances_ = np.asarray(d["importances"], dtype=float)
        return tree
