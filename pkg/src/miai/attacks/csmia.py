"""Confidence score-based attack, with and without full knowledge of the other attributes."""

from __future__ import annotations

import numpy as np
import pandas as pd

from ..oracle import Oracle
from .base import AttackPrediction, BaseAttack, KnowledgeError, RecordKnowledge, first_argmax, first_argmin, sweep

MAX_UNKNOWN = 2


def csmia_decide(correct: np.ndarray, conf: np.ndarray) -> tuple[int, int]:
    """Three-case rule over one record's ``k`` responses.

    ``correct[i]`` tells whether candidate ``i`` reproduced the true label.
    Returns ``(candidate, case)``.
    """
    hits = int(correct.sum())
    if hits == 1:
        return int(np.flatnonzero(correct)[0]), 1
    if hits >= 2:
        return first_argmax(conf, correct), 2
    return first_argmin(conf), 3


def partial_decide(correct: np.ndarray, conf: np.ndarray) -> tuple[int, int]:
    """Count-based rule over a ``(k, q)`` grid of responses.

    Candidates are ranked by their number of correct predictions ``C_i``.
    A unique maximum decides (case 1); a tie at a positive maximum is broken
    by the summed confidence of the correct predictions (case 2); if nothing
    is ever correct the smallest total confidence wins (case 3).
    """
    counts = correct.sum(axis=1)
    top = counts.max()
    if top == 0:
        return first_argmin(conf.sum(axis=1)), 3
    tied = counts == top
    if tied.sum() == 1:
        return int(np.flatnonzero(tied)[0]), 1
    return first_argmax((conf * correct).sum(axis=1), tied), 2


def csmia_batch(X: pd.DataFrame, y, oracle: Oracle) -> list[AttackPrediction]:
    schema = oracle.schema
    domain = schema.sensitive.domain
    labels, conf = sweep(oracle, X, [(schema.sensitive.name, domain)])
    truth = np.asarray(y, dtype=object)
    correct = labels == truth[:, None]
    out = []
    for rid, ok, c in zip(X.index, correct, conf):
        i, case = csmia_decide(ok, c)
        out.append(AttackPrediction(rid, domain[i], case, len(domain), tuple(c.tolist())))
    return out


def csmia(record: RecordKnowledge, oracle: Oracle) -> AttackPrediction:
    X = pd.DataFrame([dict(record.known)], index=[record.record_id])
    return csmia_batch(X, [record.label], oracle)[0]


def check_unknown(schema, unknown) -> tuple[str, ...]:
    unknown = tuple(unknown)
    if len(unknown) > MAX_UNKNOWN:
        raise KnowledgeError(f"at most {MAX_UNKNOWN} unknown attributes are supported, got {len(unknown)}")
    if len(set(unknown)) != len(unknown):
        raise KnowledgeError("unknown attributes must be distinct")
    features = {a.name for a in schema.features}
    for name in unknown:
        if name not in features:
            raise KnowledgeError(f"{name!r} is not a non-sensitive model input")
    return unknown


def csmia_partial_batch(X: pd.DataFrame, y, oracle: Oracle, unknown) -> list[AttackPrediction]:
    schema = oracle.schema
    unknown = check_unknown(schema, unknown)
    domain = schema.sensitive.domain
    vary = [(schema.sensitive.name, domain)] + [(u, schema[u].candidates()) for u in unknown]
    labels, conf = sweep(oracle, X, vary)
    n, k = labels.shape[:2]
    labels = labels.reshape(n, k, -1)
    conf = conf.reshape(n, k, -1)
    q = labels.shape[2]
    truth = np.asarray(y, dtype=object)
    correct = labels == truth[:, None, None]
    out = []
    for rid, ok, c in zip(X.index, correct, conf):
        i, case = partial_decide(ok, c)
        out.append(AttackPrediction(rid, domain[i], case, k * q, tuple(ok.sum(axis=1).tolist())))
    return out


def csmia_partial(record: RecordKnowledge, oracle: Oracle, unknown=None) -> AttackPrediction:
    unknown = record.unknown if unknown is None else unknown
    known = {k: v for k, v in record.known.items() if k not in unknown}
    X = pd.DataFrame([known], index=[record.record_id])
    return csmia_partial_batch(X, [record.label], oracle, unknown)[0]


class ConfidenceScoreAttack(BaseAttack):
    """Needs only oracle access and each target's true label.

    With ``unknown`` naming one or two non-sensitive attributes, those are
    treated as unknown and enumerated over their schema candidates.
    """

    name = "csmia"

    def __init__(self, oracle=None, unknown=()):
        self.oracle = oracle
        self.unknown = unknown

    def fit(self, X=None, y=None, s=None):
        check_unknown(self.oracle.schema, self.unknown)
        return self

    def attack(self, X, y=None):
        if y is None:
            raise KnowledgeError("the confidence score attack needs each target's true label")
        with self.oracle.run(self.name, keep_outer=True):
            if self.unknown:
                known = X.drop(columns=[u for u in self.unknown if u in X.columns])
                return csmia_partial_batch(known, y, self.oracle, self.unknown)
            return csmia_batch(X, y, self.oracle)
