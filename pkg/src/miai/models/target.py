"""Target models: an encoder frozen at train time plus a fitted classifier."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
import pandas as pd

from ..dataset import Attribute, Dataset, Schema
from .neural import SoftmaxMLPClassifier
from .tree import CARTClassifier

FORMAT_VERSION = 1


class MalformedQueryError(ValueError):
    """A query that does not match the model's input schema."""

    def __init__(self, message: str, attribute: str | None = None):
        super().__init__(message)
        self.attribute = attribute


@dataclass(frozen=True)
class PredictionResponse:
    label: Any
    confidence: float
    scores: dict | None = None

    def to_dict(self) -> dict:
        out = {"label": self.label, "confidence": round(float(self.confidence), 6)}
        if self.scores is not None:
            out["scores"] = {str(k): round(float(v), 6) for k, v in self.scores.items()}
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "PredictionResponse":
        scores = d.get("scores")
        return cls(d["label"], float(d["confidence"]), dict(scores) if scores is not None else None)


@dataclass(frozen=True)
class FeatureEncoder:
    """Maps raw attribute values to the numeric matrix a classifier consumes.

    ``ordinal`` keeps one column per attribute (categorical codes, ``-1`` for
    out-of-domain values).  ``onehot`` expands categoricals, with an all-zero
    block for out-of-domain values, and min-max scales numerics with the
    training range.
    """

    attributes: tuple[Attribute, ...]
    mode: str = "ordinal"
    mins: tuple = ()
    maxs: tuple = ()

    @classmethod
    def fit(cls, attributes: Sequence[Attribute], frame: pd.DataFrame, mode: str) -> "FeatureEncoder":
        attributes = tuple(attributes)
        if mode == "onehot":
            nums = [a for a in attributes if not a.is_categorical]
            mins = tuple(float(frame[a.name].min()) for a in nums)
            maxs = tuple(float(frame[a.name].max()) for a in nums)
            return cls(attributes, mode, mins, maxs)
        return cls(attributes, mode)

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.attributes]

    def check(self, frame: pd.DataFrame) -> None:
        for a in self.attributes:
            if a.name not in frame.columns:
                raise MalformedQueryError(f"missing attribute {a.name!r}", a.name)

    def _numeric(self, a: Attribute, col: pd.Series) -> np.ndarray:
        try:
            vals = pd.to_numeric(col, errors="raise").to_numpy(dtype=float)
        except (ValueError, TypeError):
            raise MalformedQueryError(f"attribute {a.name!r} must be numeric", a.name) from None
        if not np.isfinite(vals).all():
            raise MalformedQueryError(f"attribute {a.name!r} must be finite", a.name)
        return vals

    def transform(self, frame: pd.DataFrame) -> np.ndarray:
        self.check(frame)
        cols = []
        num_i = 0
        for a in self.attributes:
            col = frame[a.name]
            if a.is_categorical:
                codes = pd.Categorical(col, categories=list(a.domain)).codes.astype(np.intp)
                if self.mode == "onehot":
                    block = np.zeros((len(frame), len(a.domain)))
                    ok = codes >= 0
                    block[np.flatnonzero(ok), codes[ok]] = 1.0
                    cols.append(block)
                else:
                    cols.append(codes[:, None].astype(float))
            else:
                vals = self._numeric(a, col)
                if self.mode == "onehot":
                    lo, hi = self.mins[num_i], self.maxs[num_i]
                    vals = (vals - lo) / (hi - lo) if hi > lo else np.zeros_like(vals)
                    num_i += 1
                cols.append(vals[:, None])
        return np.hstack(cols) if cols else np.zeros((len(frame), 0))

    def to_dict(self) -> dict:
        return {"attributes": [a.to_dict() for a in self.attributes], "mode": self.mode,
                "mins": list(self.mins), "maxs": list(self.maxs)}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureEncoder":
        return cls(tuple(Attribute.from_dict(a) for a in d["attributes"]), d["mode"],
                   tuple(d["mins"]), tuple(d["maxs"]))


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts indexed ``[actual][predicted]`` in ``labels`` order."""

    counts: np.ndarray
    labels: tuple

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.shape != (len(self.labels), len(self.labels)) or (c < 0).any():
            raise ValueError("confusion counts must be a non-negative m x m matrix")
        object.__setattr__(self, "counts", c)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def rates(self) -> np.ndarray:
        """Row-normalised rates; a row with no records stays all zero."""
        rows = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = self.counts / rows
        return np.where(rows > 0, r, 0.0)

    def rate(self, actual, predicted) -> float:
        i, j = self.labels.index(actual), self.labels.index(predicted)
        return float(self.rates()[i, j])

    def to_dict(self) -> dict:
        return {"labels": list(self.labels), "counts": self.counts.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "ConfusionMatrix":
        return cls(np.asarray(d["counts"]), tuple(d["labels"]))


ESTIMATORS = {"decision-tree": CARTClassifier, "neural-net": SoftmaxMLPClassifier}


@dataclass(frozen=True)
class TargetModel:
    family: str
    schema: Schema
    encoder: FeatureEncoder
    estimator: Any = field(repr=False)

    @property
    def classes(self) -> list:
        return list(self.estimator.classes_)

    @property
    def m(self) -> int:
        return len(self.estimator.classes_)

    def scores(self, frame: pd.DataFrame) -> np.ndarray:
        """Score matrix (records x m) for a frame of raw attribute values."""
        return self.estimator.predict_proba(self.encoder.transform(frame))

    def predict_many(self, frame: pd.DataFrame):
        """Vectorised prediction: (labels, confidences, score matrix)."""
        s = self.scores(frame)
        idx = np.argmax(s, axis=1)
        labels = np.asarray(self.estimator.classes_, dtype=object)[idx]
        return labels, s[np.arange(len(s)), idx], s

    def predict(self, features: Mapping[str, Any]) -> PredictionResponse:
        if not isinstance(features, Mapping):
            raise MalformedQueryError("features must be a mapping of attribute name to value")
        frame = pd.DataFrame([{n: features[n] for n in self.encoder.names if n in features}])
        labels, conf, s = self.predict_many(frame)
        return PredictionResponse(labels[0], float(conf[0]), dict(zip(self.classes, s[0].tolist())))

    def save(self, path) -> None:
        doc = {
            "format": "miai-target-model",
            "version": FORMAT_VERSION,
            "family": self.family,
            "schema": self.schema.to_dict(),
            "encoder": self.encoder.to_dict(),
            "estimator": self.estimator.to_dict(),
        }
        with open(path, "w", encoding="utf-8") as f:
            json.dump(doc, f)

    @classmethod
    def load(cls, path) -> "TargetModel":
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
        if doc.get("format") != "miai-target-model" or doc.get("version") != FORMAT_VERSION:
            raise ValueError(f"{path}: not a version-{FORMAT_VERSION} target model file")
        est = ESTIMATORS[doc["family"]].from_dict(doc["estimator"])
        return cls(doc["family"], Schema.from_dict(doc["schema"]), FeatureEncoder.from_dict(doc["encoder"]), est)


def _model_schema(schema: Schema) -> Schema:
    return Schema(tuple(schema.kept), schema.name, schema.missing)


def train_decision_tree(train: Dataset, max_depth: int = 12, min_leaf_count: int = 5) -> TargetModel:
    if len(train) == 0:
        raise ValueError("empty training set")
    schema = train.schema
    encoder = FeatureEncoder.fit(schema.inputs, train.frame, "ordinal")
    cats = [i for i, a in enumerate(encoder.attributes) if a.is_categorical]
    sizes = [len(encoder.attributes[i].domain) for i in cats]
    tree = CARTClassifier(max_depth=max_depth, min_leaf_count=min_leaf_count,
                          categorical=tuple(cats), n_categories=tuple(sizes))
    tree.fit(encoder.transform(train.frame), train.labels.to_numpy(), classes=schema.target.domain)
    return TargetModel("decision-tree", _model_schema(schema), encoder, tree)


def train_neural_net(train: Dataset, hidden=(64, 32), epochs: int = 30, learning_rate: float = 0.01,
                     batch_size: int = 64, momentum: float = 0.9, seed: int = 0) -> TargetModel:
    if len(train) == 0:
        raise ValueError("empty training set")
    schema = train.schema
    encoder = FeatureEncoder.fit(schema.inputs, train.frame, "onehot")
    net = SoftmaxMLPClassifier(hidden=tuple(hidden), epochs=epochs, batch_size=batch_size,
                               learning_rate=learning_rate, momentum=momentum, seed=seed)
    net.fit(encoder.transform(train.frame), train.labels.to_numpy(), classes=schema.target.domain)
    return TargetModel("neural-net", _model_schema(schema), encoder, net)


def confusion_matrix(model: TargetModel, eval: Dataset) -> ConfusionMatrix:
    if len(eval) == 0:
        raise ValueError("evaluation set is empty")
    labels = tuple(model.classes)
    predicted, _, _ = model.predict_many(eval.frame)
    index = {c: i for i, c in enumerate(labels)}
    actual = np.array([index[v] for v in eval.labels.tolist()])
    pred = np.array([index[v] for v in predicted.tolist()])
    m = len(labels)
    counts = np.bincount(actual * m + pred, minlength=m * m).reshape(m, m)
    return ConfusionMatrix(counts, labels)


def importance(model: TargetModel) -> dict:
    """Normalised Gini-decrease importance per input attribute (trees only)."""
    if model.family != "decision-tree":
        raise ValueError(f"importance is only defined for decision trees, not {model.family}")
    imp = model.estimator.feature_importances_
    return {a.name: float(v) for a, v in zip(model.encoder.attributes, imp)}
