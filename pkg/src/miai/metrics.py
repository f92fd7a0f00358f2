"""Evaluation battery for binary attribute inference.

Counts are exact integers and every ratio is computed as a
:class:`~fractions.Fraction`; only the two square roots (G-mean and MCC)
leave exact arithmetic.  Zero denominators yield 0.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, Mapping, Sequence

EDU_GROUPS = {
    "Edu1": ("Preschool", "1st-4th", "5th-6th", "7th-8th", "9th", "10th", "11th", "12th"),
    "Edu2": ("HS-grad", "Some-college"),
    "Edu3": ("Assoc-voc", "Assoc-acdm", "Bachelors", "Masters", "Prof-school", "Doctorate"),
}

METRICS = ("precision", "recall", "accuracy", "f1", "g_mean", "mcc")


class AlignmentError(ValueError):
    """Predictions and ground truth do not cover the same record ids."""


@dataclass(frozen=True)
class BinaryCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0
    positive: Any = None

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other: "BinaryCounts") -> "BinaryCounts":
        return BinaryCounts(self.tp + other.tp, self.tn + other.tn, self.fp + other.fp,
                            self.fn + other.fn, self.positive)


def _ratio(num: int, den: int) -> Fraction:
    return Fraction(num, den) if den else Fraction(0)


def precision(c: BinaryCounts) -> Fraction:
    return _ratio(c.tp, c.tp + c.fp)


def recall(c: BinaryCounts) -> Fraction:
    return _ratio(c.tp, c.tp + c.fn)


def specificity(c: BinaryCounts) -> Fraction:
    return _ratio(c.tn, c.tn + c.fp)


def accuracy(c: BinaryCounts) -> Fraction:
    return _ratio(c.tp + c.tn, c.total)


def f1(c: BinaryCounts) -> Fraction:
    p, r = precision(c), recall(c)
    return 2 * p * r / (p + r) if p + r else Fraction(0)


def g_mean(c: BinaryCounts) -> float:
    return math.sqrt(recall(c) * specificity(c))


def mcc(c: BinaryCounts) -> float:
    den = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
    if den == 0:
        return 0.0
    num = c.tp * c.tn - c.fp * c.fn
    # exact sign and square of the ratio, one rounding at the root
    value = math.sqrt(Fraction(num * num, den))
    return math.copysign(value, num)


@dataclass
class EvaluationReport:
    counts: BinaryCounts
    slices: dict = field(default_factory=dict)

    def __getattr__(self, name):
        if name in METRICS:
            return float(_METRIC_FN[name](self.counts))
        raise AttributeError(name)

    def metrics(self) -> dict:
        return {m: getattr(self, m) for m in METRICS}

    def percent(self) -> dict:
        """Metrics as percentages rounded to two decimals."""
        return {m: round(100 * v, 2) for m, v in self.metrics().items()}

    def to_dict(self) -> dict:
        c = self.counts
        out = {"tp": c.tp, "tn": c.tn, "fp": c.fp, "fn": c.fn, "total": c.total, **self.percent()}
        if self.slices:
            out["slices"] = {str(k): v.to_dict() for k, v in self.slices.items()}
        return out

    def rows(self, prefix: str = "all") -> list[dict]:
        c = self.counts
        out = [{"slice": prefix, "tp": c.tp, "tn": c.tn, "fp": c.fp, "fn": c.fn, **self.percent()}]
        for k, v in self.slices.items():
            out.extend(v.rows(f"{prefix}/{k}"))
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def to_csv(self) -> str:
        return rows_to_csv(self.rows())


_METRIC_FN: dict[str, Callable] = {
    "precision": precision, "recall": recall, "accuracy": accuracy, "f1": f1,
    "g_mean": g_mean, "mcc": mcc,
}


def rows_to_csv(rows: Sequence[Mapping]) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return buf.getvalue()


def counts_from(pairs: Iterable[tuple[Any, Any]], positive) -> BinaryCounts:
    tp = tn = fp = fn = 0
    for pred, truth in pairs:
        if pred == positive:
            if truth == positive:
                tp += 1
            else:
                fp += 1
        elif truth == positive:
            fn += 1
        else:
            tn += 1
    return BinaryCounts(tp, tn, fp, fn, positive)


def _as_mapping(predictions) -> dict:
    if isinstance(predictions, Mapping):
        return dict(predictions)
    if hasattr(predictions, "items") and hasattr(predictions, "index"):  # pandas Series
        return dict(predictions.items())
    out = {}
    for p in predictions:
        out[p.record_id] = p
    return out


def _value(p):
    return getattr(p, "value", p)


def score(predictions, truth, positive, by_case: bool = True) -> EvaluationReport:
    """Score predictions against the true sensitive values.

    ``predictions`` is a list of :class:`~miai.attacks.AttackPrediction` or a
    mapping record id -> predicted value; ``truth`` a mapping (or Series)
    record id -> true value.  With ``by_case`` the report gains one slice per
    attack case when the predictions carry case tags.
    """
    preds = _as_mapping(predictions)
    truth = _as_mapping(truth)
    if preds.keys() != truth.keys():
        missing = len(truth.keys() - preds.keys())
        extra = len(preds.keys() - truth.keys())
        raise AlignmentError(f"record ids differ: {missing} without prediction, {extra} without truth")
    report = EvaluationReport(counts_from(((_value(preds[i]), truth[i]) for i in truth), positive))
    if by_case:
        cases = {getattr(p, "case", None) for p in preds.values()}
        cases.discard(None)
        for case in sorted(cases):
            ids = [i for i, p in preds.items() if getattr(p, "case", None) == case]
            report.slices[f"case{case}"] = EvaluationReport(
                counts_from(((_value(preds[i]), truth[i]) for i in ids), positive))
    return report


def group_analysis(predictions, truth, grouping, positive) -> dict:
    """One report per group plus ``"all"``.

    ``grouping`` maps record id -> group id (mapping, Series, or callable).
    """
    preds = _as_mapping(predictions)
    truth = _as_mapping(truth)
    if callable(grouping) and not isinstance(grouping, Mapping):
        groups = {i: grouping(i) for i in truth}
    else:
        groups = _as_mapping(grouping)
    missing = [i for i in truth if groups.get(i) is None]
    if missing:
        raise AlignmentError(f"{len(missing)} records have no group (first: {missing[0]!r})")
    out = {}
    for g in sorted({groups[i] for i in truth}, key=str):
        ids = [i for i in truth if groups[i] == g]
        out[g] = score({i: preds[i] for i in ids}, {i: truth[i] for i in ids}, positive, by_case=False)
    out["all"] = score(preds, truth, positive, by_case=False)
    return out


def per_class_breakdown(predictions, truth, target_labels, positive, classes: Sequence | None = None) -> dict:
    """Partition records by their true target label and score each partition."""
    labels = _as_mapping(target_labels)
    return_classes = list(classes) if classes is not None else sorted(set(labels.values()), key=str)
    preds = _as_mapping(predictions)
    truth = _as_mapping(truth)
    out = {}
    for c in return_classes:
        ids = [i for i in truth if labels[i] == c]
        out[c] = score({i: preds[i] for i in ids}, {i: truth[i] for i in ids}, positive, by_case=False)
    return out


def edu_group(education: str) -> str:
    for g, members in EDU_GROUPS.items():
        if education in members:
            return g
    raise KeyError(f"education level {education!r} is not in any Edu group")


def edu_grouping(frame, column: str = "education") -> dict:
    """Built-in Adult grouping by education level."""
    return {i: edu_group(v) for i, v in frame[column].items()}


def slices_with(report: EvaluationReport, parts: Mapping[str, EvaluationReport], prefix: str) -> EvaluationReport:
    for k, v in parts.items():
        if k != "all":
            report.slices[f"{prefix}:{k}"] = v
    return report
