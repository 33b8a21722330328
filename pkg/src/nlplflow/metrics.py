"""Evaluation statistics: precision/recall/F1, agreement kappas, distributions.

All functions are pure. Undefined values (zero denominators) come back as
None and render as a dash placeholder; display rounding is half-up to one
decimal place.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Hashable, Iterable, Optional, Sequence

import numpy as np

from .errors import DegenerateMarginals
from .taxonomy import Label


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @classmethod
    def from_predictions(cls, pairs: Iterable[tuple[str, str]]) -> "ConfusionCounts":
        """pairs of (ground_truth, prediction), each yes/no."""
        tp = fp = fn = tn = 0
        for truth, pred in pairs:
            if truth == "yes" and pred == "yes":
                tp += 1
            elif truth == "no" and pred == "yes":
                fp += 1
            elif truth == "yes" and pred == "no":
                fn += 1
            else:
                tn += 1
        return cls(tp, fp, fn, tn)


def prf1(counts: ConfusionCounts) -> tuple[Optional[float], Optional[float], Optional[float]]:
    """(precision, recall, f1) as fractions; None where undefined."""
    precision = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else None
    recall = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else None
    f1 = None
    if precision is not None and recall is not None and precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    return precision, recall, f1


UNDEFINED = "—"


def pct(value: Optional[float]) -> str:
    """Half-up percentage with one decimal, or a dash when undefined."""
    if value is None:
        return UNDEFINED
    quantized = (Decimal(repr(value)) * 100).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP)
    return f"{quantized}%"


# ---------------------------------------------------------------------------
# Agreement statistics
# ---------------------------------------------------------------------------


def cohen_kappa(decisions: Sequence[tuple[Hashable, Hashable]]) -> float:
    """Two-rater chance-corrected agreement over per-item category pairs."""
    if not decisions:
        raise ValueError("cohen_kappa requires at least one item")
    n = len(decisions)
    categories = sorted({c for pair in decisions for c in pair}, key=repr)
    index = {c: i for i, c in enumerate(categories)}
    table = np.zeros((len(categories), len(categories)))
    for a, b in decisions:
        table[index[a], index[b]] += 1
    p_o = np.trace(table) / n
    p_e = float(np.sum(table.sum(axis=1) * table.sum(axis=0)) / (n * n))
    if p_e >= 1.0 - 1e-12:
        if p_o >= 1.0 - 1e-12:
            return 1.0
        raise DegenerateMarginals("expected agreement is 1 with imperfect observed agreement")
    return float((p_o - p_e) / (1 - p_e))


def cohen_kappa_from_table(table: Sequence[Sequence[int]]) -> float:
    """Cohen's kappa from a square contingency table (rows: rater 1)."""
    arr = np.asarray(table, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError("contingency table must be square")
    n = arr.sum()
    if n <= 0:
        raise ValueError("contingency table is empty")
    p_o = np.trace(arr) / n
    p_e = float(np.sum(arr.sum(axis=1) * arr.sum(axis=0)) / (n * n))
    if p_e >= 1.0 - 1e-12:
        if p_o >= 1.0 - 1e-12:
            return 1.0
        raise DegenerateMarginals("expected agreement is 1 with imperfect observed agreement")
    return float((p_o - p_e) / (1 - p_e))


def multilabel_decisions(
    rater_a: Sequence[Iterable[Label]],
    rater_b: Sequence[Iterable[Label]],
    labels: Sequence[Label] = tuple(Label),
) -> list[tuple[bool, bool]]:
    """Binarize multi-label annotations to pooled per-(item, label) decisions.

    Two raters' label sets per item expand to one binary decision per label
    per item; Cohen's kappa then applies to the pooled decisions.
    """
    if len(rater_a) != len(rater_b):
        raise ValueError("raters must annotate the same items")
    out: list[tuple[bool, bool]] = []
    for sets in zip(rater_a, rater_b):
        set_a, set_b = (frozenset(s) for s in sets)
        for label in labels:
            out.append((label in set_a, label in set_b))
    return out


def fleiss_kappa(table: Sequence[Sequence[int]]) -> float:
    """Fleiss' kappa from an items-by-categories count table.

    Every row must sum to the same rater count (n >= 2); at least two items
    and two categories are required.
    """
    arr = np.asarray(table, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] < 2:
        raise ValueError("fleiss_kappa requires >=2 items and >=2 categories")
    raters = arr[0].sum()
    if raters < 2:
        raise ValueError("fleiss_kappa requires a fixed rater count >= 2")
    if not np.allclose(arr.sum(axis=1), raters):
        raise ValueError("every item must have the same number of ratings")
    n_items = arr.shape[0]
    p_categories = arr.sum(axis=0) / (n_items * raters)
    p_items = ((arr * arr).sum(axis=1) - raters) / (raters * (raters - 1))
    p_bar = float(p_items.mean())
    p_e = float((p_categories**2).sum())
    if p_e >= 1.0 - 1e-12:
        raise DegenerateMarginals("a single category was ever used; kappa undefined")
    return float((p_bar - p_e) / (1 - p_e))


# ---------------------------------------------------------------------------
# Label distribution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DistributionRow:
    label: Label
    count: int
    share: float  # fraction of pairs carrying this label


@dataclass(frozen=True)
class LabelDistribution:
    pairs: int
    total_assignments: int
    rows: tuple[DistributionRow, ...]
    multi_label_share: float


def label_distribution(label_sets: Sequence[Iterable[Label]]) -> LabelDistribution:
    """Counts and per-pair shares; shares can sum past 100% under multi-labels."""
    counts: dict[Label, int] = {}
    multi = 0
    total = 0
    for labels in label_sets:
        labels = frozenset(labels)
        total += len(labels)
        if len(labels) >= 2:
            multi += 1
        for label in labels:
            counts[label] = counts.get(label, 0) + 1
    n = len(label_sets)
    rows = tuple(
        DistributionRow(label, count, count / n)
        for label, count in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0].value))
    )
    return LabelDistribution(
        pairs=n,
        total_assignments=total,
        rows=rows,
        multi_label_share=(multi / n) if n else 0.0,
    )
