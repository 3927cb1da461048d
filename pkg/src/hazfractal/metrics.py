"""Confusion matrices and precision / recall / F1 reports.

Classes are 1-based levels.  A metric whose denominator is zero is reported
as 0 and flagged as undefined instead of NaN.  Macro averages run over the
classes that occur in the labels or the predictions, so a level absent from
an evaluation set does not drag the average down.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import InvalidInput


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # rows actual, columns predicted

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.counts.shape != other.counts.shape:
            raise InvalidInput("cannot merge confusion matrices of different sizes")
        return ConfusionMatrix(self.counts + other.counts)

    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else 0.0


def confusion(predictions: Sequence[int], labels: Sequence[int], num_classes: int) -> ConfusionMatrix:
    pred = np.asarray(predictions, dtype=np.int64).reshape(-1)
    true = np.asarray(labels, dtype=np.int64).reshape(-1)
    if pred.size != true.size:
        raise InvalidInput(f"{pred.size} predictions for {true.size} labels")
    for name, arr in (("prediction", pred), ("label", true)):
        if arr.size and (arr.min() < 1 or arr.max() > num_classes):
            raise InvalidInput(f"{name} outside 1..{num_classes}")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (true - 1, pred - 1), 1)
    return ConfusionMatrix(counts)


class PRF(NamedTuple):
    precision: float
    recall: float
    f1: float
    undefined: tuple[bool, bool, bool] = (False, False, False)


def _prf(tp: float, fp: float, fn: float) -> PRF:
    p_undef, r_undef = tp + fp == 0, tp + fn == 0
    p = 0.0 if p_undef else tp / (tp + fp)
    r = 0.0 if r_undef else tp / (tp + fn)
    f_undef = p + r == 0
    f1 = 0.0 if f_undef else 2.0 * p * r / (p + r)
    return PRF(p, r, f1, (p_undef, r_undef, f_undef))


def prf1(matrix: ConfusionMatrix, c: int) -> PRF:
    """One-vs-rest precision, recall and F1 of class ``c`` (1-based)."""
    counts = matrix.counts
    i = c - 1
    tp = counts[i, i]
    fp = counts[:, i].sum() - tp
    fn = counts[i, :].sum() - tp
    return _prf(float(tp), float(fp), float(fn))


def micro_prf1(matrix: ConfusionMatrix) -> PRF:
    counts = matrix.counts
    tp = float(np.trace(counts))
    fp = fn = float(counts.sum()) - tp
    return _prf(tp, fp, fn)


@dataclass(frozen=True)
class EvalReport:
    per_class: np.ndarray  # (num_classes, 3): precision, recall, f1
    macro: np.ndarray  # (3,)
    micro: np.ndarray  # (3,)
    support: np.ndarray  # (num_classes,) actual count per class
    undefined: np.ndarray | None = None  # (num_classes, 3) bool
    repetitions: int = 1

    def __post_init__(self):
        if self.undefined is None:
            object.__setattr__(self, "undefined", np.zeros(self.per_class.shape, dtype=bool))

    @property
    def num_classes(self) -> int:
        return self.per_class.shape[0]

    @property
    def macro_f1(self) -> float:
        return float(self.macro[2])

    def to_dict(self) -> dict:
        return {
            "repetitions": self.repetitions,
            "macro": dict(zip(("precision", "recall", "f1"), map(float, self.macro))),
            "micro": dict(zip(("precision", "recall", "f1"), map(float, self.micro))),
            "per_class": [
                {"class": i + 1, "support": float(self.support[i]),
                 "precision": float(p), "recall": float(r), "f1": float(f),
                 "undefined": [m for m, flag in zip(("precision", "recall", "f1"),
                                                    self.undefined[i]) if flag]}
                for i, (p, r, f) in enumerate(self.per_class)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def macro_report(matrix: ConfusionMatrix) -> EvalReport:
    per = [prf1(matrix, c) for c in range(1, matrix.num_classes + 1)]
    per_class = np.array([[m.precision, m.recall, m.f1] for m in per])
    undefined = np.array([m.undefined for m in per], dtype=bool)
    support = matrix.counts.sum(axis=1)
    active = (support > 0) | (matrix.counts.sum(axis=0) > 0)
    macro = per_class[active].mean(axis=0) if active.any() else np.zeros(3)
    micro = np.array(micro_prf1(matrix)[:3])
    return EvalReport(per_class, macro, micro, support.astype(np.float64), undefined)


def average_reports(reports: Sequence[EvalReport]) -> EvalReport:
    """Elementwise mean of several reports (e.g. repeated training runs)."""
    if not reports:
        raise InvalidInput("no reports to average")
    if len({r.num_classes for r in reports}) != 1:
        raise InvalidInput("reports disagree on the number of classes")
    return EvalReport(
        per_class=np.mean([r.per_class for r in reports], axis=0),
        macro=np.mean([r.macro for r in reports], axis=0),
        micro=np.mean([r.micro for r in reports], axis=0),
        support=np.mean([r.support for r in reports], axis=0),
        undefined=np.any([r.undefined for r in reports], axis=0),
        repetitions=sum(r.repetitions for r in reports),
    )


TABLE_HEADER = ("model", "aspect", "split", "P", "R", "F1")


def table_rows(model: str, aspect: str, reports: dict[str, EvalReport]) -> list[list[str]]:
    """Macro P/R/F1 rows, one per split, in the results-table column layout."""
    return [[model, aspect, split, *(f"{float(v):.17g}" for v in rep.macro)]
            for split, rep in reports.items()]


def table_csv(model: str, aspect: str, reports: dict[str, EvalReport]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(TABLE_HEADER)
    writer.writerows(table_rows(model, aspect, reports))
    return out.getvalue()
