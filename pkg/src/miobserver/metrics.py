"""Evaluation metrics and the serializable evaluation report.

Conventions: confusion rows are gold labels, columns are predictions.
Precision/recall/F1 are zero whenever their denominator is zero. Macro
F1 averages F1 over all labels of the set, including absent ones.
Recall@k ranks by probability with ties broken by label order (the
earlier label index wins).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ParseError


def sig6(x: float) -> float:
    """Round to 6 significant digits; the wire format for probabilities."""
    return float(f"{float(x):.6g}")


def confusion_matrix(gold, pred, n_labels: int) -> np.ndarray:
    g = np.asarray(gold, dtype=np.intp)
    p = np.asarray(pred, dtype=np.intp)
    if g.shape != p.shape:
        raise ContractError("gold and pred lengths differ")
    if g.size and (min(g.min(), p.min()) < 0 or max(g.max(), p.max()) >= n_labels):
        raise ContractError("label index out of range")
    m = np.zeros((n_labels, n_labels), dtype=np.int64)
    np.add.at(m, (g, p), 1)
    return m


def prf1(confusion: np.ndarray) -> dict:
    """Per-label precision/recall/F1 and their macro averages."""
    c = np.asarray(confusion, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ContractError("confusion matrix must be square")
    tp = np.diag(c)
    pred_tot = c.sum(axis=0)
    gold_tot = c.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.where(pred_tot > 0, tp / pred_tot, 0.0)
        recall = np.where(gold_tot > 0, tp / gold_tot, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "macro_precision": float(precision.mean()),
        "macro_recall": float(recall.mean()),
        "macro_f1": float(f1.mean()),
    }


def top_k_indices(row: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest probabilities; ties prefer lower indices."""
    order = np.lexsort((np.arange(row.size), -row))
    return order[:k]


def recall_at_k(probs: np.ndarray, gold, k: int) -> float:
    """Fraction of rows whose gold label appears in the top-k prediction."""
    p = np.asarray(probs, dtype=np.float64)
    g = np.asarray(gold, dtype=np.intp)
    if p.ndim != 2 or p.shape[0] != g.shape[0]:
        raise ContractError("probs must be [rows, labels] aligned with gold")
    if not (1 <= k <= p.shape[1]):
        raise ContractError(f"k must be in [1, {p.shape[1]}], got {k}")
    hits = 0
    for row, gi in zip(p, g):
        if gi in top_k_indices(row, k):
            hits += 1
    return hits / len(g) if len(g) else 0.0


@dataclass
class EvalReport:
    """Evaluation summary for one task/label set; JSON round-trippable."""

    labels: tuple[str, ...]
    confusion: np.ndarray          # raw counts, rows = gold
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_f1: float
    recall_at_k: dict[int, float]  # k -> recall@k
    n_examples: int

    @staticmethod
    def from_predictions(
        labels: tuple[str, ...],
        gold,
        pred,
        probs: np.ndarray | None = None,
        ks: tuple[int, ...] = (),
    ) -> "EvalReport":
        n = len(labels)
        conf = confusion_matrix(gold, pred, n)
        scores = prf1(conf)
        rk = {}
        if probs is not None:
            for k in ks:
                rk[int(k)] = recall_at_k(probs, gold, k)
        return EvalReport(
            labels=tuple(labels),
            confusion=conf,
            precision=scores["precision"],
            recall=scores["recall"],
            f1=scores["f1"],
            macro_f1=scores["macro_f1"],
            recall_at_k=rk,
            n_examples=int(np.asarray(gold).size),
        )

    def normalized_confusion(self) -> np.ndarray:
        """Row-normalized confusion; all-zero rows stay zero."""
        c = self.confusion.astype(np.float64)
        totals = c.sum(axis=1, keepdims=True)
        return np.divide(c, totals, out=np.zeros_like(c), where=totals > 0)

    def per_label(self) -> dict[str, dict[str, float]]:
        return {
            lab: {
                "precision": float(self.precision[i]),
                "recall": float(self.recall[i]),
                "f1": float(self.f1[i]),
                "support": int(self.confusion[i].sum()),
            }
            for i, lab in enumerate(self.labels)
        }

    def to_json(self) -> str:
        payload = {
            "labels": list(self.labels),
            "n_examples": self.n_examples,
            "macro_f1": self.macro_f1,
            "per_label": self.per_label(),
            "recall_at_k": {str(k): v for k, v in self.recall_at_k.items()},
            "confusion": self.confusion.tolist(),
            "confusion_normalized": [
                [round(v, 6) for v in row] for row in self.normalized_confusion()
            ],
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "EvalReport":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid report JSON: {e}") from None
        labels = tuple(payload["labels"])
        conf = np.asarray(payload["confusion"], dtype=np.int64)
        per = payload["per_label"]
        return EvalReport(
            labels=labels,
            confusion=conf,
            precision=np.array([per[l]["precision"] for l in labels]),
            recall=np.array([per[l]["recall"] for l in labels]),
            f1=np.array([per[l]["f1"] for l in labels]),
            macro_f1=float(payload["macro_f1"]),
            recall_at_k={int(k): float(v) for k, v in payload["recall_at_k"].items()},
            n_examples=int(payload["n_examples"]),
        )
