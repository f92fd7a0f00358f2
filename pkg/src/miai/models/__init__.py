"""Target-model families and their black-box prediction surface."""

from .neural import SoftmaxMLPClassifier, TrainingDivergedError
from .target import (
    ConfusionMatrix,
    FeatureEncoder,
    MalformedQueryError,
    PredictionResponse,
    TargetModel,
    confusion_matrix,
    importance,
    train_decision_tree,
    train_neural_net,
)
from .tree import CARTClassifier


def predict(model: TargetModel, features) -> PredictionResponse:
    return model.predict(features)


__all__ = [
    "CARTClassifier",
    "ConfusionMatrix",
    "FeatureEncoder",
    "MalformedQueryError",
    "PredictionResponse",
    "SoftmaxMLPClassifier",
    "TargetModel",
    "TrainingDivergedError",
    "confusion_matrix",
    "importance",
    "predict",
    "train_decision_tree",
    "train_neural_net",
]
