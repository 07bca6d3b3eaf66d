"""Classification, agreement, and rank metrics shared across the pipeline."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np


class MetricsError(ValueError):
    pass


@dataclass
class ClassificationMetrics:
    accuracy: float
    binary_f1: Optional[float]
    macro_f1: float
    micro_f1: float

    def as_dict(self) -> dict:
        out = {"accuracy": self.accuracy, "macro_f1": self.macro_f1, "micro_f1": self.micro_f1}
        if self.binary_f1 is not None:
            out["binary_f1"] = self.binary_f1
        return out


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def classification_metrics(
    pred: Mapping[str, object],
    gold: Mapping[str, object],
    positive_class: Optional[object] = None,
) -> ClassificationMetrics:
    """Accuracy, binary F1 (w.r.t. positive_class), macro F1, micro F1.

    Macro F1 averages per-class F1 over the classes present in gold; a class
    with zero predicted and zero gold positives scores 0 and is excluded when
    absent from gold (prediction-only classes cannot deflate the mean).
    """
    if set(pred) != set(gold):
        raise MetricsError("pred and gold must cover identical id sets")
    if not pred:
        raise MetricsError("empty id set")
    ids = list(pred)
    correct = sum(1 for i in ids if pred[i] == gold[i])
    accuracy = correct / len(ids)

    gold_classes = sorted({gold[i] for i in ids}, key=repr)
    per_class = []
    pooled_tp = pooled_fp = pooled_fn = 0
    for cls in gold_classes:
        tp = sum(1 for i in ids if pred[i] == cls and gold[i] == cls)
        fp = sum(1 for i in ids if pred[i] == cls and gold[i] != cls)
        fn = sum(1 for i in ids if pred[i] != cls and gold[i] == cls)
        per_class.append(_f1(tp, fp, fn))
        pooled_tp += tp
        pooled_fp += fp
        pooled_fn += fn
    macro_f1 = float(np.mean(per_class))
    # predicted-only classes still pool as false positives
    for cls in {pred[i] for i in ids} - set(gold_classes):
        pooled_fp += sum(1 for i in ids if pred[i] == cls)
    micro_f1 = _f1(pooled_tp, pooled_fp, pooled_fn)

    binary_f1 = None
    if positive_class is not None:
        tp = sum(1 for i in ids if pred[i] == positive_class and gold[i] == positive_class)
        fp = sum(1 for i in ids if pred[i] == positive_class and gold[i] != positive_class)
        fn = sum(1 for i in ids if pred[i] != positive_class and gold[i] == positive_class)
        binary_f1 = _f1(tp, fp, fn)
    return ClassificationMetrics(accuracy, binary_f1, macro_f1, micro_f1)


def cohen_kappa(rater_a: Mapping[str, object], rater_b: Mapping[str, object]) -> float:
    """Chance-corrected agreement k = (p_o - p_e) / (1 - p_e)."""
    if set(rater_a) != set(rater_b):
        raise MetricsError("raters must cover identical id sets")
    n = len(rater_a)
    if n < 2:
        raise MetricsError("kappa needs at least 2 items")
    ids = list(rater_a)
    p_o = sum(1 for i in ids if rater_a[i] == rater_b[i]) / n
    if p_o == 1.0:
        return 1.0
    labels = {rater_a[i] for i in ids} | {rater_b[i] for i in ids}
    p_e = 0.0
    for lab in labels:
        fa = sum(1 for i in ids if rater_a[i] == lab) / n
        fb = sum(1 for i in ids if rater_b[i] == lab) / n
        p_e += fa * fb
    if p_e == 1.0:
        raise MetricsError("kappa undefined: expected agreement is 1 with observed < 1")
    return (p_o - p_e) / (1.0 - p_e)


@dataclass
class RankMetrics:
    hit_at: dict[int, float]
    mrr: float

    def as_dict(self) -> dict:
        out = {f"hit@{k}": v for k, v in sorted(self.hit_at.items())}
        out["mrr"] = self.mrr
        return out


def rank_metrics(ranks: Sequence[Optional[int]], k_list: Sequence[int] = (1, 5, 10)) -> RankMetrics:
    """Hit@k and MRR over 1-based ranks; None means no match in the retrieved list."""
    if len(ranks) == 0:
        raise MetricsError("empty rank list")
    for r in ranks:
        if r is not None and r < 1:
            raise MetricsError("ranks are 1-based")
    n = len(ranks)
    hit_at = {k: sum(1 for r in ranks if r is not None and r <= k) / n for k in k_list}
    mrr = sum(1.0 / r for r in ranks if r is not None) / n
    return RankMetrics(hit_at=hit_at, mrr=mrr)


def write_metric_report(path, values: Mapping[str, float]) -> None:
    """Flat key=value text file, keys sorted for deterministic bytes."""
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(values):
            fh.write(f"{key}={values[key]!r}\n")
