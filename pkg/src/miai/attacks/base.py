"""Shared types and query helpers for the attack strategies."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator

from ..dataset import Dataset, Schema
from ..models.target import ConfusionMatrix
from ..oracle import Oracle

# rows per oracle batch; keeps the candidate grid for partial-knowledge runs small
BATCH_ROWS = 200_000


class KnowledgeError(ValueError):
    """The adversary lacks knowledge an attack requires."""


@dataclass(frozen=True)
class AttackPrediction:
    record_id: Any
    value: Any
    case: int | None
    queries: int
    aux: tuple = ()

    def to_dict(self) -> dict:
        return {"record_id": _plain(self.record_id), "value": self.value, "case": self.case,
                "queries": self.queries}


@dataclass(frozen=True)
class RecordKnowledge:
    """What the adversary knows about one target individual."""

    record_id: Any
    known: Mapping[str, Any]
    label: Any
    unknown: tuple[str, ...] = ()


@dataclass(frozen=True)
class AdversaryKnowledge:
    """Population-level knowledge shared by all targets (cf. the capability matrix)."""

    priors: Mapping[Any, float] | None = None
    confusion: ConfusionMatrix | None = None
    ds_a: Dataset | None = None
    unknown: tuple[str, ...] = field(default_factory=tuple)


def _plain(v):
    return v.item() if isinstance(v, np.generic) else v


def check_priors(priors, domain: Sequence) -> np.ndarray:
    """Priors as an array aligned with ``domain``."""
    if priors is None:
        raise KnowledgeError("this attack needs the marginal prior of the sensitive attribute")
    if isinstance(priors, Mapping):
        extra = set(priors) - set(domain)
        if extra:
            raise KnowledgeError(f"priors for values outside the sensitive domain: {sorted(map(str, extra))}")
        p = np.array([float(priors.get(v, 0.0)) for v in domain])
    else:
        p = np.asarray(priors, dtype=float)
        if p.shape != (len(domain),):
            raise KnowledgeError(f"expected {len(domain)} priors, got {p.shape}")
    if (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
        raise KnowledgeError("priors must be non-negative and sum to 1")
    return p


def split_targets(ds: Dataset) -> tuple[pd.DataFrame, pd.Series]:
    """Known attributes (sensitive column removed) and true labels of a dataset."""
    schema = ds.schema
    X = ds.frame.drop(columns=[schema.sensitive.name])
    return X, ds.labels


def as_frame(records) -> pd.DataFrame:
    if isinstance(records, Dataset):
        return records.frame
    if isinstance(records, pd.DataFrame):
        return records
    return pd.DataFrame(list(records))


def sweep(oracle: Oracle, X: pd.DataFrame, vary: Sequence[tuple[str, Sequence]]):
    """Query every row of ``X`` once per point of the grid over ``vary``.

    ``vary`` lists ``(attribute, values)`` pairs; the grid is their cartesian
    product in lexicographic order, the first attribute varying slowest.
    Returns label and confidence arrays of shape ``(len(X), *grid_shape)``.
    """
    shape = tuple(len(v) for _, v in vary)
    grid = list(itertools.product(*[v for _, v in vary]))
    q = len(grid)
    n = len(X)
    labels = np.empty((n, q), dtype=object)
    conf = np.empty((n, q))
    base = X.reset_index(drop=True)
    step = max(1, BATCH_ROWS // max(q, 1))
    for start in range(0, n, step):
        chunk = base.iloc[start:start + step]
        rows = chunk.loc[chunk.index.repeat(q)].reset_index(drop=True)
        reps = len(chunk)
        for j, (name, _) in enumerate(vary):
            rows[name] = [g[j] for g in grid] * reps
        batch = oracle.query_many(rows)
        labels[start:start + reps] = batch.labels.reshape(reps, q)
        conf[start:start + reps] = batch.confidences.reshape(reps, q)
    return labels.reshape((n, *shape)), conf.reshape((n, *shape))


def first_argmax(values: np.ndarray, mask: np.ndarray | None = None) -> int:
    """Index of the largest value (restricted to ``mask``); ties go to the lowest index."""
    v = np.where(mask, values, -np.inf) if mask is not None else values
    return int(np.argmax(v))


def first_argmin(values: np.ndarray, mask: np.ndarray | None = None) -> int:
    v = np.where(mask, values, np.inf) if mask is not None else values
    return int(np.argmin(v))


class BaseAttack(BaseEstimator):
    """Common estimator surface.

    ``X`` is a frame of the targets' known attributes indexed by record id and
    ``y`` their true target labels.  :meth:`attack` returns one
    :class:`AttackPrediction` per row; :meth:`predict` just the inferred values.
    """

    name = "attack"

    def fit(self, X=None, y=None, s=None):
        return self

    def attack(self, X, y=None) -> list[AttackPrediction]:
        raise NotImplementedError

    def predict(self, X, y=None) -> np.ndarray:
        return np.array([p.value for p in self.attack(X, y)], dtype=object)


def schema_of(oracle: Oracle | None, schema: Schema | None) -> Schema:
    if schema is not None:
        return schema
    if oracle is None:
        raise KnowledgeError("either an oracle or a schema is required")
    return oracle.schema
