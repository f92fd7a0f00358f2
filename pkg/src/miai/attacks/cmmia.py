"""Confidence modeling-based attack.

The adversary sweeps the sensitive attribute over its auxiliary dataset,
routes each record to one of three cases by how many candidates reproduce the
true label, and trains one attack model per (case, true label).  Targets are
then routed the same way and answered by the matching attack model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..dataset import Dataset
from ..models.tree import CARTClassifier
from ..oracle import Oracle
from .base import AttackPrediction, BaseAttack, KnowledgeError, RecordKnowledge, split_targets, sweep

CASES = (1, 2, 3)
MASKED = -1.0


def case_of(correct: np.ndarray) -> int:
    hits = int(correct.sum())
    return 1 if hits == 1 else (2 if hits >= 2 else 3)


def case_features(label_idx: np.ndarray, conf: np.ndarray, correct: np.ndarray, case: int) -> np.ndarray:
    """Attack-model input row.

    Cases 1 and 3 use ``[y'_0, conf_0, ..., y'_{k-1}, conf_{k-1}]``.  Case 2
    keeps only the correct responses: ``[present_i, y'_i, conf_i]`` per slot,
    with absent slots set to ``-1``.
    """
    k = len(label_idx)
    if case == 2:
        row = np.full(3 * k, MASKED)
        row[0::3] = correct.astype(float)
        row[1::3] = np.where(correct, label_idx, MASKED)
        row[2::3] = np.where(correct, conf, MASKED)
        return row
    row = np.empty(2 * k)
    row[0::2] = label_idx
    row[1::2] = conf
    return row


@dataclass
class CaseTables:
    """Attack-model training rows keyed by ``(case, label index)``."""

    k: int
    m: int
    rows: dict = field(default_factory=dict)
    targets: dict = field(default_factory=dict)
    majority: int = 0
    queries: int = 0

    def add(self, case: int, label: int, features: np.ndarray, sensitive: int) -> None:
        self.rows.setdefault((case, label), []).append(features)
        self.targets.setdefault((case, label), []).append(sensitive)

    def bucket(self, case: int, label: int):
        X = self.rows.get((case, label), [])
        width = 3 * self.k if case == 2 else 2 * self.k
        return (np.array(X).reshape(-1, width), np.array(self.targets.get((case, label), []), dtype=np.intp))

    def counts(self) -> dict:
        return {key: len(v) for key, v in self.rows.items()}


class ConstantPredictor:
    def __init__(self, value: int):
        self.value = value

    def predict(self, X):
        return np.full(len(X), self.value, dtype=np.intp)


@dataclass
class AttackBank:
    """The ``3 * m`` attack models, keyed by ``(case, label index)``."""

    models: dict
    k: int
    m: int

    def __len__(self) -> int:
        return len(self.models)

    def model_for(self, case: int, label: int):
        return self.models[(case, label)]


def _respond(oracle: Oracle, X: pd.DataFrame, y):
    schema = oracle.schema
    domain = schema.sensitive.domain
    labels, conf = sweep(oracle, X, [(schema.sensitive.name, domain)])
    index = {c: i for i, c in enumerate(schema.target.domain)}
    label_idx = np.vectorize(index.__getitem__, otypes=[np.intp])(labels) if labels.size else labels.astype(np.intp)
    truth = np.array([index[v] for v in np.asarray(y, dtype=object)], dtype=np.intp)
    return label_idx, conf, truth


def cmmia_collect(ds_a: Dataset, oracle: Oracle) -> CaseTables:
    """Query the model with every auxiliary record under every sensitive value."""
    schema = oracle.schema
    domain = schema.sensitive.domain
    k, m = len(domain), len(schema.target.domain)
    X, y = split_targets(ds_a)
    s_index = {v: i for i, v in enumerate(domain)}
    s = np.array([s_index[v] for v in ds_a.sensitive_values], dtype=np.intp)
    label_idx, conf, truth = _respond(oracle, X, y)
    tables = CaseTables(k=k, m=m, majority=int(np.argmax(np.bincount(s, minlength=k))), queries=len(X) * k)
    for li, c, t, si in zip(label_idx, conf, truth, s):
        correct = li == t
        case = case_of(correct)
        tables.add(case, int(t), case_features(li, c, correct, case), int(si))
    return tables


def cmmia_train(tables: CaseTables, max_depth: int = 6, min_leaf_count: int = 10) -> AttackBank:
    """Fit one depth-limited tree per bucket; degenerate buckets get a constant."""
    models = {}
    k, m = tables.k, tables.m
    for case in CASES:
        for label in range(m):
            X, s = tables.bucket(case, label)
            if len(s) == 0:
                models[(case, label)] = ConstantPredictor(tables.majority)
                continue
            present = np.unique(s)
            if len(present) == 1:
                models[(case, label)] = ConstantPredictor(int(present[0]))
                continue
            # case 1/3 label slots are categorical codes; case 2 slots may hold the sentinel
            cats = tuple(range(0, 2 * k, 2)) if case != 2 else ()
            tree = CARTClassifier(max_depth=max_depth, min_leaf_count=min_leaf_count,
                                  categorical=cats, n_categories=(m,) * len(cats))
            models[(case, label)] = tree.fit(X, s, classes=list(range(k)))
    return AttackBank(models, k, m)


def cmmia_attack_batch(X: pd.DataFrame, y, oracle: Oracle, bank: AttackBank) -> list[AttackPrediction]:
    domain = oracle.schema.sensitive.domain
    if len(domain) != bank.k:
        raise KnowledgeError("attack bank was trained for a different sensitive domain")
    label_idx, conf, truth = _respond(oracle, X, y)
    grouped: dict = {}
    cases = []
    for pos, (li, c, t) in enumerate(zip(label_idx, conf, truth)):
        correct = li == t
        case = case_of(correct)
        cases.append(case)
        grouped.setdefault((case, int(t)), []).append((pos, case_features(li, c, correct, case)))
    values = np.empty(len(X), dtype=np.intp)
    for key, items in grouped.items():
        pos = [p for p, _ in items]
        rows = np.array([r for _, r in items])
        values[pos] = np.asarray(bank.model_for(*key).predict(rows), dtype=np.intp)
    k = len(domain)
    return [AttackPrediction(rid, domain[v], case, k) for rid, v, case in zip(X.index, values, cases)]


def cmmia_attack(record: RecordKnowledge, oracle: Oracle, bank: AttackBank) -> AttackPrediction:
    X = pd.DataFrame([dict(record.known)], index=[record.record_id])
    return cmmia_attack_batch(X, [record.label], oracle, bank)[0]


class ConfidenceModelingAttack(BaseAttack):
    """Needs oracle access plus an auxiliary dataset disjoint from the training set.

    ``fit`` takes the auxiliary dataset (a :class:`~miai.dataset.Dataset`).
    """

    name = "cmmia"

    def __init__(self, oracle=None, max_depth=6, min_leaf_count=10):
        self.oracle = oracle
        self.max_depth = max_depth
        self.min_leaf_count = min_leaf_count

    def fit(self, X=None, y=None, s=None):
        if not isinstance(X, Dataset):
            raise KnowledgeError("the confidence modeling attack needs the auxiliary dataset DS_A")
        with self.oracle.run(self.name, keep_outer=True):
            self.tables_ = cmmia_collect(X, self.oracle)
        self.bank_ = cmmia_train(self.tables_, self.max_depth, self.min_leaf_count)
        return self

    def attack(self, X, y=None):
        if not hasattr(self, "bank_"):
            raise KnowledgeError("fit the attack on DS_A first")
        if y is None:
            raise KnowledgeError("the confidence modeling attack needs each target's true label")
        with self.oracle.run(self.name, keep_outer=True):
            return cmmia_attack_batch(X, y, self.oracle, self.bank_)
