"""Fredrikson et al. black-box attack: confusion rate times marginal prior."""

from __future__ import annotations

import numpy as np
import pandas as pd

from ..models.target import ConfusionMatrix
from ..oracle import Oracle
from .base import (AttackPrediction, BaseAttack, KnowledgeError, RecordKnowledge, check_priors,
                   schema_of, sweep)


def fjr_decide(pred_idx: np.ndarray, y_idx: int, rates: np.ndarray, priors: np.ndarray):
    """Pick the candidate maximising ``rates[y, y'_i] * p_i``.

    Ties fall to the highest prior, then to the earliest candidate.
    Returns ``(candidate, scores)``.
    """
    scores = rates[y_idx, pred_idx] * priors
    best = scores == scores.max()
    cand = np.flatnonzero(best)
    winner = cand[int(np.argmax(priors[cand]))]
    return int(winner), scores


def _check(confusion, schema):
    if confusion is None:
        raise KnowledgeError("the Fredrikson attack needs the model's confusion matrix")
    if list(confusion.labels) != list(schema.target.domain):
        raise KnowledgeError("confusion matrix labels do not match the model's classes")


def fjrmia_batch(X: pd.DataFrame, y, oracle: Oracle, priors, confusion: ConfusionMatrix) -> list[AttackPrediction]:
    schema = oracle.schema
    domain = schema.sensitive.domain
    p = check_priors(priors, domain)
    _check(confusion, schema)
    rates = confusion.rates()
    label_index = {c: i for i, c in enumerate(confusion.labels)}
    labels, _ = sweep(oracle, X, [(schema.sensitive.name, domain)])
    out = []
    for rid, row, truth in zip(X.index, labels, np.asarray(y, dtype=object)):
        pred_idx = np.array([label_index[v] for v in row])
        i, scores = fjr_decide(pred_idx, label_index[truth], rates, p)
        out.append(AttackPrediction(rid, domain[i], None, len(domain), tuple(scores.tolist())))
    return out


def fjrmia(record: RecordKnowledge, oracle: Oracle, priors, confusion: ConfusionMatrix) -> AttackPrediction:
    X = pd.DataFrame([dict(record.known)], index=[record.record_id])
    return fjrmia_batch(X, [record.label], oracle, priors, confusion)[0]


class FredriksonAttack(BaseAttack):
    """Needs the sensitive prior and the target model's confusion matrix."""

    name = "fjrmia"

    def __init__(self, oracle=None, priors=None, confusion=None):
        self.oracle = oracle
        self.priors = priors
        self.confusion = confusion

    def fit(self, X=None, y=None, s=None):
        schema = schema_of(self.oracle, None)
        check_priors(self.priors, schema.sensitive.domain)
        _check(self.confusion, schema)
        return self

    def attack(self, X, y=None):
        if y is None:
            raise KnowledgeError("the Fredrikson attack needs each target's true label")
        with self.oracle.run(self.name, keep_outer=True):
            return fjrmia_batch(X, y, self.oracle, self.priors, self.confusion)
