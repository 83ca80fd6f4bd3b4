"""Pixel-level mask metrics: confusion counts, precision/recall/F-measure.

Sequence aggregates are micro-averaged: confusion counts are summed over the
labeled frames first, then the metrics are computed from the totals.
"""

import json
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other):
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self):
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class MetricReport:
    precision: float
    recall: float
    f_measure: float
    frames: int
    per_frame: List[Dict] = field(default_factory=list)

    def to_dict(self):
        return {"frames": self.frames, "precision": self.precision,
                "recall": self.recall, "f_measure": self.f_measure,
                "per_frame": self.per_frame}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def confusion(predicted, truth):
    """Pixel confusion counts between two binary masks of equal shape."""
    p = np.asarray(predicted) > 0
    t = np.asarray(truth) > 0
    if p.shape != t.shape:
        raise ValueError(f"mask shape {p.shape} != truth shape {t.shape}")
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    tn = p.size - tp - fp - fn
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def precision_recall_f(c):
    """(precision, recall, F). Empty prediction and empty truth score as
    perfect; otherwise tp = 0 scores F = 0."""
    if c.tp + c.fp == 0 and c.tp + c.fn == 0:
        return 1.0, 1.0, 1.0
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp > 0 else 0.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn > 0 else 0.0
    if precision + recall == 0.0:
        return precision, recall, 0.0
    return precision, recall, 2.0 * precision * recall / (precision + recall)


def evaluate_pairs(pairs):
    """Micro-averaged report over (index, predicted, truth) mask triples."""
    if not pairs:
        raise ValueError("no labeled frames to evaluate")
    total = ConfusionCounts()
    per_frame = []
    for index, predicted, truth in pairs:
        c = confusion(predicted, truth)
        total = total + c
        p, r, f = precision_recall_f(c)
        per_frame.append({"index": int(index), "precision": p, "recall": r,
                          "f_measure": f})
    p, r, f = precision_recall_f(total)
    return MetricReport(precision=p, recall=r, f_measure=f,
                        frames=len(per_frame), per_frame=per_frame)


def evaluate_sequence(masks, truth):
    """Score a MaskSequence against ground truth over the labeled frames."""
    offset = getattr(masks, "frame_index_offset", 0)
    predicted = masks.masks if hasattr(masks, "masks") else np.asarray(masks)
    n = predicted.shape[0]
    indices = sorted(i for i in truth.labeled_indices if offset <= i < offset + n)
    pairs = [(i, predicted[i - offset], truth.masks[i]) for i in indices]
    return evaluate_pairs(pairs)
