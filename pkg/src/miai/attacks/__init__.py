"""Model inversion attribute inference attacks.

Each strategy is available as a per-record function (``csmia(record, oracle)``),
a batched function over a frame of targets, and a scikit-learn style
estimator with ``fit``/``attack``/``predict``.
"""

from .base import (AdversaryKnowledge, AttackPrediction, BaseAttack, KnowledgeError, RecordKnowledge,
                   split_targets)
from .baselines import NaiveAttack, RandomGuessingAttack, naive_attack, random_guessing_attack
from .cmmia import (AttackBank, CaseTables, ConfidenceModelingAttack, cmmia_attack, cmmia_attack_batch,
                    cmmia_collect, cmmia_train)
from .csmia import (ConfidenceScoreAttack, csmia, csmia_batch, csmia_decide, csmia_partial,
                    csmia_partial_batch, partial_decide)
from .fjrmia import FredriksonAttack, fjr_decide, fjrmia, fjrmia_batch

ATTACKS = {
    "naive": NaiveAttack,
    "random": RandomGuessingAttack,
    "fjrmia": FredriksonAttack,
    "cmmia": ConfidenceModelingAttack,
    "csmia": ConfidenceScoreAttack,
    "csmia_partial": ConfidenceScoreAttack,
}

__all__ = [
    "ATTACKS",
    "AdversaryKnowledge",
    "AttackBank",
    "AttackPrediction",
    "BaseAttack",
    "CaseTables",
    "ConfidenceModelingAttack",
    "ConfidenceScoreAttack",
    "FredriksonAttack",
    "KnowledgeError",
    "NaiveAttack",
    "RandomGuessingAttack",
    "RecordKnowledge",
    "cmmia_attack",
    "cmmia_attack_batch",
    "cmmia_collect",
    "cmmia_train",
    "csmia",
    "csmia_batch",
    "csmia_decide",
    "csmia_partial",
    "csmia_partial_batch",
    "fjr_decide",
    "fjrmia",
    "fjrmia_batch",
    "naive_attack",
    "partial_decide",
    "random_guessing_attack",
    "split_targets",
]
