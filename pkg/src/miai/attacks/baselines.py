"""Attacks that never query the model: naive majority guess and random guessing."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .base import AttackPrediction, BaseAttack, KnowledgeError, as_frame, check_priors


def naive_attack(records, priors, domain: Sequence) -> list[AttackPrediction]:
    """Predict the sensitive value with the highest prior for every record.

    Ties go to the earliest value in ``domain``.
    """
    p = check_priors(priors, domain)
    value = domain[int(np.argmax(p))]
    ids = as_frame(records).index
    return [AttackPrediction(rid, value, None, 0) for rid in ids]


def random_guessing_attack(records, p_positive: float, seed: int, domain: Sequence,
                           positive=None) -> list[AttackPrediction]:
    """Predict the positive value independently with probability ``p_positive``."""
    if len(domain) != 2:
        raise KnowledgeError("random guessing is defined for a binary sensitive attribute")
    if not 0.0 <= p_positive <= 1.0:
        raise ValueError("p_positive must be in [0, 1]")
    positive = domain[-1] if positive is None else positive
    if positive not in domain:
        raise ValueError(f"positive value {positive!r} not in domain")
    negative = domain[0] if domain[1] == positive else domain[1]
    ids = as_frame(records).index
    draws = np.random.default_rng(seed).random(len(ids)) < p_positive
    return [AttackPrediction(rid, positive if d else negative, None, 0) for rid, d in zip(ids, draws)]


class NaiveAttack(BaseAttack):
    name = "naive"

    def __init__(self, priors=None, domain=None):
        self.priors = priors
        self.domain = domain

    def fit(self, X=None, y=None, s=None):
        domain = self.domain if self.domain is not None else list(self.priors or ())
        check_priors(self.priors, domain)
        self.domain_ = tuple(domain)
        return self

    def attack(self, X, y=None):
        if not hasattr(self, "domain_"):
            self.fit()
        return naive_attack(X, self.priors, self.domain_)


class RandomGuessingAttack(BaseAttack):
    name = "random"

    def __init__(self, domain=None, positive=None, p_positive=0.5, seed=0):
        self.domain = domain
        self.positive = positive
        self.p_positive = p_positive
        self.seed = seed

    def attack(self, X, y=None):
        if self.domain is None:
            raise KnowledgeError("random guessing needs the sensitive attribute's domain")
        return random_guessing_attack(X, self.p_positive, self.seed, tuple(self.domain), self.positive)
