"""Small feed-forward softmax classifier trained with momentum SGD."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


class SoftmaxMLPClassifier(ClassifierMixin, BaseEstimator):
    """ReLU hidden layers, softmax output, cross-entropy loss.

    Training is mini-batch gradient descent with classical momentum and
    He-uniform initialisation; the whole run is determined by ``seed``.
    """

    def __init__(self, hidden=(64, 32), epochs=30, batch_size=64, learning_rate=0.01,
                 momentum=0.9, seed=0):
        self.hidden = hidden
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.seed = seed

    def fit(self, X, y, classes=None):
        X = check_array(X, dtype=np.float64)
        y = np.asarray(y)
        if len(X) == 0:
            raise ValueError("empty training set")
        if classes is None:
            classes = np.unique(y)
        self.classes_ = np.asarray(list(classes), dtype=object)
        index = {c: i for i, c in enumerate(self.classes_.tolist())}
        y_idx = np.array([index[v] for v in y.tolist()], dtype=np.intp)
        n, d = X.shape
        m = len(self.classes_)
        self.n_features_in_ = d

        rng = np.random.default_rng(self.seed)
        sizes = [d, *self.hidden, m]
        self.weights_ = []
        self.biases_ = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = np.sqrt(6.0 / fan_in)
            self.weights_.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            self.biases_.append(np.zeros(fan_out))
        vel_w = [np.zeros_like(w) for w in self.weights_]
        vel_b = [np.zeros_like(b) for b in self.biases_]

        target = np.zeros((n, m))
        target[np.arange(n), y_idx] = 1.0
        self.loss_curve_ = []
        for epoch in range(1, self.epochs + 1):
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, self.batch_size):
                b = order[start:start + self.batch_size]
                acts = self._forward(X[b])
                p = acts[-1]
                total += -np.log(np.clip(p[np.arange(len(b)), y_idx[b]], 1e-300, None)).sum()
                delta = (p - target[b]) / len(b)
                for layer in range(len(self.weights_) - 1, -1, -1):
                    gw = acts[layer].T @ delta
                    gb = delta.sum(axis=0)
                    if layer > 0:
                        delta = (delta @ self.weights_[layer].T) * (acts[layer] > 0)
                    vel_w[layer] = self.momentum * vel_w[layer] - self.learning_rate * gw
                    vel_b[layer] = self.momentum * vel_b[layer] - self.learning_rate * gb
                    self.weights_[layer] += vel_w[layer]
                    self.biases_[layer] += vel_b[layer]
            loss = total / n
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch)
            self.loss_curve_.append(loss)
        return self

    def _forward(self, X):
        acts = [X]
        h = X
        last = len(self.weights_) - 1
        for i, (w, b) in enumerate(zip(self.weights_, self.biases_)):
            z = h @ w + b
            h = softmax(z) if i == last else np.maximum(z, 0.0)
            acts.append(h)
        return acts

    def predict_proba(self, X):
        check_is_fitted(self, "weights_")
        X = check_array(X, dtype=np.float64)
        return self._forward(X)[-1]

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    def to_dict(self) -> dict:
        check_is_fitted(self, "weights_")
        params = self.get_params()
        params["hidden"] = list(params["hidden"])
        return {
            "params": params,
            "classes": self.classes_.tolist(),
            # repr of float64 round-trips exactly through JSON
            "weights": [w.tolist() for w in self.weights_],
            "biases": [b.tolist() for b in self.biases_],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SoftmaxMLPClassifier":
        params = dict(d["params"])
        params["hidden"] = tuple(params["hidden"])
        net = cls(**params)
        net.classes_ = np.asarray(d["classes"], dtype=object)
        net.weights_ = [np.asarray(w, dtype=np.float64) for w in d["weights"]]
        net.biases_ = [np.asarray(b, dtype=np.float64) for b in d["biases"]]
        net.n_features_in_ = net.weights_[0].shape[0]
        return net
