"""Confusion matrices and derived classification metrics.

Orientation: rows are predicted labels, columns are actual labels.
Matrices form a monoid under :func:`merge` (zero matrix as identity), so
shards built in parallel can be combined in any order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import EmptyMatrix, SpaceMismatch, UnknownLabel


class ConfusionMatrix:
    def __init__(self, label_space: Sequence[str], counts=None):
        self.label_space = tuple(str(getattr(l, "value", l)) for l in label_space)
        if len(set(self.label_space)) != len(self.label_space):
            raise ValueError("label space has duplicates")
        n = len(self.label_space)
        if counts is None:
            self.counts = np.zeros((n, n), dtype=np.int64)
        else:
            arr = np.array(counts, dtype=np.int64)
            if arr.shape != (n, n):
                raise ValueError(f"counts must be {n}x{n}, got {arr.shape}")
            if (arr < 0).any():
                raise ValueError("counts must be non-negative")
            self.counts = arr
        self._index = {l: i for i, l in enumerate(self.label_space)}

    def index(self, label) -> int:
        key = str(getattr(label, "value", label))
        try:
            return self._index[key]
        except KeyError:
            raise UnknownLabel(f"{label!r} not in label space {self.label_space}") from None

    def record(self, predicted, actual, count: int = 1) -> "ConfusionMatrix":
        """Increment the (predicted, actual) cell in place; returns ``self``."""
        i, j = self.index(predicted), self.index(actual)
        self.counts[i, j] += count
        return self

    def record_many(self, predicted_idx, actual_idx) -> "ConfusionMatrix":
        np.add.at(self.counts, (np.asarray(predicted_idx), np.asarray(actual_idx)), 1)
        return self

    def __getitem__(self, key):
        pred, actual = key
        return int(self.counts[self.index(pred), self.index(actual)])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def copy(self) -> "ConfusionMatrix":
        return ConfusionMatrix(self.label_space, self.counts.copy())

    def __eq__(self, other):
        return (isinstance(other, ConfusionMatrix) and self.label_space == other.label_space
                and np.array_equal(self.counts, other.counts))

    def __repr__(self):
        return f"ConfusionMatrix({list(self.label_space)}, total={self.total})"

    def to_json_obj(self) -> dict:
        return {"label_space": list(self.label_space), "counts": self.counts.tolist()}

    @classmethod
    def from_json_obj(cls, obj) -> "ConfusionMatrix":
        return cls(obj["label_space"], obj["counts"])

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), separators=(",", ":"))

    def render(self) -> str:
        """Aligned text table, rows predicted, columns actual."""
        width = max(max(len(l) for l in self.label_space),
                    len(str(int(self.counts.max()) if self.counts.size else 0)), len("pred\\actual"))
        lines = [" ".join(["pred\\actual".ljust(width)] + [l.rjust(width) for l in self.label_space])]
        for i, l in enumerate(self.label_space):
            lines.append(" ".join([l.ljust(width)] + [str(int(v)).rjust(width) for v in self.counts[i]]))
        return "\n".join(lines)


def zeros_like(m: ConfusionMatrix) -> ConfusionMatrix:
    return ConfusionMatrix(m.label_space)


def from_events(label_space: Sequence[str], events: Iterable[tuple]) -> ConfusionMatrix:
    m = ConfusionMatrix(label_space)
    for predicted, actual in events:
        m.record(predicted, actual)
    return m


def merge(a: ConfusionMatrix, b: ConfusionMatrix) -> ConfusionMatrix:
    if a.label_space != b.label_space:
        raise SpaceMismatch(f"{a.label_space} != {b.label_space}")
    return ConfusionMatrix(a.label_space, a.counts + b.counts)


@dataclass(frozen=True)
class ClassMetrics:
    label: str
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    support: int  # actual occurrences (column sum)


@dataclass(frozen=True)
class Summary:
    accuracy: float
    total: int
    per_class: tuple[ClassMetrics, ...]
    macro_precision: Optional[float]
    macro_recall: Optional[float]
    macro_f1: Optional[float]

    def to_json_obj(self) -> dict:
        # undefined metrics are omitted, never written as 0 or NaN
        def _drop_none(d):
            return {k: v for k, v in d.items() if v is not None}

        return _drop_none({
            "accuracy": self.accuracy,
            "total": self.total,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "per_class": {
                c.label: _drop_none({"precision": c.precision, "recall": c.recall,
                                     "f1": c.f1, "support": c.support})
                for c in self.per_class
            },
        })

    def metric(self, label: str, name: str) -> Optional[float]:
        for c in self.per_class:
            if c.label == str(getattr(label, "value", label)):
                return getattr(c, name)
        raise UnknownLabel(label)


def _mean_defined(values) -> Optional[float]:
    vals = [v for v in values if v is not None]
    return sum(vals) / len(vals) if vals else None


def summarize(m: ConfusionMatrix) -> Summary:
    """Accuracy, per-class precision/recall/F1 and macro averages.

    A metric whose denominator is zero is ``None`` and does not enter the
    macro average.
    """
    total = m.total
    if total == 0:
        raise EmptyMatrix("confusion matrix has no counts")
    counts = m.counts
    trace = int(np.trace(counts))
    rows = counts.sum(axis=1)
    cols = counts.sum(axis=0)
    per_class = []
    for i, label in enumerate(m.label_space):
        tp = int(counts[i, i])
        precision = tp / int(rows[i]) if rows[i] else None
        recall = tp / int(cols[i]) if cols[i] else None
        if precision is None or recall is None:
            f1 = None
        elif precision + recall == 0:
            f1 = 0.0
        else:
            f1 = 2 * precision * recall / (precision + recall)
        per_class.append(ClassMetrics(label, precision, recall, f1, int(cols[i])))
    return Summary(
        accuracy=trace / total,
        total=total,
        per_class=tuple(per_class),
        macro_precision=_mean_defined(c.precision for c in per_class),
        macro_recall=_mean_defined(c.recall for c in per_class),
        macro_f1=_mean_defined(c.f1 for c in per_class),
    )
