"""Evaluation report assembly and rendering: markdown, JSON, and figures.

Rendering is deterministic: fixed section and row ordering, half-up rounding,
and Agg-rendered PNGs, so identical inputs produce byte-identical outputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .metrics import (
    ConfusionCounts,
    LabelDistribution,
    fleiss_kappa,
    label_distribution,
    pct,
    prf1,
)
from .predict import LabelRate, MethodId, per_label_rates
from .records import LabelAssignment, PairRecord, SliceRecord
from .slicing import SliceSummary, slice_report
from .taxonomy import LabelSet, as_label_set, label_metadata

REPORT_SCHEMA_VERSION = 1

METHOD_ORDER = (MethodId.A, MethodId.B, MethodId.C, MethodId.BPLUS, MethodId.CPLUS)
METHOD_TITLES = {
    MethodId.A: "A: Propagate All",
    MethodId.B: "B: Code-Only",
    MethodId.C: "C: Label Rule",
    MethodId.BPLUS: "B+: Code+Labels",
    MethodId.CPLUS: "C+: Filter+Verify",
}
_METHOD_SHORT = {
    MethodId.A: "A",
    MethodId.B: "B",
    MethodId.C: "C",
    MethodId.BPLUS: "B+",
    MethodId.CPLUS: "C+",
}


@dataclass(frozen=True)
class EvalReport:
    distribution: Optional[LabelDistribution]
    methods: dict[MethodId, ConfusionCounts]
    pairs_total: int
    pairs_yes: int
    rates: tuple[LabelRate, ...]
    fleiss: Optional[float]
    slices: Optional[SliceSummary]


def pair_label_sets(
    pairs: Sequence[PairRecord], assignments: Sequence[LabelAssignment]
) -> dict[str, Optional[LabelSet]]:
    by_triple = {a.triple_id: a for a in assignments}
    out: dict[str, Optional[LabelSet]] = {}
    for pair in pairs:
        assignment = by_triple.get(f"{pair.callsite_id}#{pair.placeholder_index}")
        out[pair.pair_id] = as_label_set(assignment.labels) if assignment else None
    return out


def build_report(
    assignments: Sequence[LabelAssignment],
    pairs: Sequence[PairRecord],
    slices: Sequence[SliceRecord],
) -> EvalReport:
    distribution = (
        label_distribution([as_label_set(a.labels) for a in assignments]) if assignments else None
    )

    truthy = [p for p in pairs if p.ground_truth in ("yes", "no")]
    methods: dict[MethodId, ConfusionCounts] = {}
    for method in METHOD_ORDER:
        scored = [
            (p.ground_truth, p.predictions[method.value])
            for p in truthy
            if method.value in p.predictions
        ]
        if scored:
            methods[method] = ConfusionCounts.from_predictions(scored)

    labels_by_pair = pair_label_sets(pairs, assignments)
    rate_input = [
        (p.ground_truth, labels_by_pair[p.pair_id])
        for p in truthy
        if labels_by_pair.get(p.pair_id)
    ]
    rates = tuple(per_label_rates(rate_input)) if rate_input else ()

    fleiss: Optional[float] = None
    voted = [p for p in pairs if p.annotator_votes]
    if len(voted) >= 2:
        table = [
            [p.annotator_votes.count("yes"), p.annotator_votes.count("no")] for p in voted
        ]
        try:
            fleiss = fleiss_kappa(table)
        except Exception:
            fleiss = None

    return EvalReport(
        distribution=distribution,
        methods=methods,
        pairs_total=len(truthy),
        pairs_yes=sum(1 for p in truthy if p.ground_truth == "yes"),
        rates=rates,
        fleiss=fleiss,
        slices=slice_report(slices) if slices else None,
    )


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def _md_table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    for row in rows:
        lines.append("| " + " | ".join(str(c) for c in row) + " |")
    return "\n".join(lines)


def render_markdown(report: EvalReport) -> str:
    out: list[str] = ["# Flow analysis report", ""]

    out.append("## Label distribution")
    if report.distribution and report.distribution.pairs:
        d = report.distribution
        rows = [
            (label_metadata(r.label).display_name, str(r.count), pct(r.share)) for r in d.rows
        ]
        out.append(
            f"{d.pairs} placeholder-output pairs, {d.total_assignments} label assignments, "
            f"multi-label share {pct(d.multi_label_share)}."
        )
        out.append("")
        out.append(_md_table(("Label", "Count", "% of pairs"), rows))
    else:
        out.append("n/a (no label assignments)")
    out.append("")

    out.append("## Propagation prediction")
    if report.methods:
        out.append(f"{report.pairs_total} pairs with ground truth ({report.pairs_yes} yes).")
        out.append("")
        rows = []
        for method in METHOD_ORDER:
            counts = report.methods.get(method)
            if counts is None:
                continue
            precision, recall, f1 = prf1(counts)
            rows.append(
                (
                    METHOD_TITLES[method],
                    pct(precision),
                    pct(recall),
                    pct(f1),
                    str(counts.fp),
                    str(counts.fn),
                )
            )
        out.append(_md_table(("Method", "Prec.", "Rec.", "F1", "FP", "FN"), rows))
    else:
        out.append("n/a (no ground-truthed predictions)")
    out.append("")

    out.append("## Per-label propagation rates")
    if report.rates:
        rows = [
            (label_metadata(r.label).display_name, str(r.yes), str(r.no), pct(r.rate))
            for r in report.rates
        ]
        out.append("Labels with fewer than 5 occurrences are omitted.")
        out.append("")
        out.append(_md_table(("Label", "Y", "N", "Rate"), rows))
    else:
        out.append("n/a")
    out.append("")

    out.append("## Annotator agreement")
    if report.fleiss is not None:
        out.append(f"Fleiss' kappa over annotator votes: {report.fleiss:.3f}")
    else:
        out.append("n/a (no annotator votes)")
    out.append("")

    out.append("## Backward slice reduction")
    if report.slices is not None:
        s = report.slices
        scope_rows = [
            ("All files", str(s.files), str(s.total_cut_lines), pct(s.mean_reduction_all)),
            (
                "With barriers",
                str(s.files_with_barriers),
                str(s.total_cut_lines),
                pct(s.mean_reduction_with_barriers),
            ),
            (
                "With >0 cut",
                str(s.files_with_cut),
                str(s.total_cut_lines),
                pct(s.mean_reduction_with_cut),
            ),
        ]
        out.append(_md_table(("Scope", "Files", "Cut lines", "Mean reduction"), scope_rows))
        out.append("")
        if s.top:
            top_rows = [
                (
                    r.file,
                    str(len(r.full_lines)),
                    str(len(r.barriered_lines)),
                    str(len(r.cut_lines)),
                    pct(r.reduction),
                )
                for r in s.top
            ]
            out.append("Top files by reduction:")
            out.append("")
            out.append(_md_table(("File", "Full", "Kept", "Cut", "Reduction"), top_rows))
    else:
        out.append("n/a (no slice results)")
    out.append("")
    return "\n".join(out)


def to_json_document(report: EvalReport) -> dict:
    doc: dict = {"schema_version": REPORT_SCHEMA_VERSION}
    if report.distribution:
        d = report.distribution
        doc["label_distribution"] = {
            "pairs": d.pairs,
            "total_assignments": d.total_assignments,
            "multi_label_share": d.multi_label_share,
            "rows": [
                {"label": r.label.value, "count": r.count, "share": r.share} for r in d.rows
            ],
        }
    else:
        doc["label_distribution"] = None
    methods = []
    for method in METHOD_ORDER:
        counts = report.methods.get(method)
        if counts is None:
            continue
        precision, recall, f1 = prf1(counts)
        methods.append(
            {
                "method": method.value,
                "precision": precision,
                "recall": recall,
                "f1": f1,
                "tp": counts.tp,
                "fp": counts.fp,
                "fn": counts.fn,
                "tn": counts.tn,
            }
        )
    doc["prediction"] = {
        "pairs": report.pairs_total,
        "yes_pairs": report.pairs_yes,
        "methods": methods,
    }
    doc["per_label_rates"] = [
        {"label": r.label.value, "yes": r.yes, "no": r.no, "rate": r.rate} for r in report.rates
    ]
    doc["fleiss_kappa"] = report.fleiss
    doc["slices"] = report.slices.to_dict() if report.slices else None
    return doc


def _figure_paths(out_dir: Path) -> dict[str, Path]:
    fig_dir = out_dir / "figures"
    return {
        "distribution": fig_dir / "label_distribution.png",
        "rates": fig_dir / "per_label_rates.png",
        "methods": fig_dir / "method_scores.png",
        "slices": fig_dir / "slice_reduction.png",
    }


def render_figures(report: EvalReport, out_dir: str | Path) -> list[Path]:
    """Render the report's tables as PNG charts next to the report files."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    paths = _figure_paths(out_dir)
    written: list[Path] = []

    def save(fig, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, dpi=120, metadata={"Software": "nlplflow"})
        plt.close(fig)
        written.append(path)

    if report.distribution and report.distribution.rows:
        rows = report.distribution.rows[:15]
        names = [label_metadata(r.label).display_name for r in rows][::-1]
        counts = [r.count for r in rows][::-1]
        fig, ax = plt.subplots(figsize=(7, 0.35 * len(rows) + 1.2))
        ax.barh(names, counts, color="#4878a8")
        ax.set_xlabel("pairs carrying label")
        ax.set_title("Label distribution")
        fig.tight_layout()
        save(fig, paths["distribution"])

    if report.rates:
        names = [label_metadata(r.label).display_name for r in report.rates][::-1]
        values = [100 * r.rate for r in report.rates][::-1]
        fig, ax = plt.subplots(figsize=(7, 0.35 * len(names) + 1.2))
        ax.barh(names, values, color="#a85448")
        ax.set_xlabel("propagation rate (%)")
        ax.set_xlim(0, 100)
        ax.set_title("Per-label propagation rates")
        fig.tight_layout()
        save(fig, paths["rates"])

    if report.methods:
        methods = [m for m in METHOD_ORDER if m in report.methods]
        import numpy as np

        x = np.arange(len(methods))
        series = {"Precision": [], "Recall": [], "F1": []}
        for m in methods:
            precision, recall, f1 = prf1(report.methods[m])
            series["Precision"].append(0 if precision is None else 100 * precision)
            series["Recall"].append(0 if recall is None else 100 * recall)
            series["F1"].append(0 if f1 is None else 100 * f1)
        fig, ax = plt.subplots(figsize=(7, 3.2))
        width = 0.27
        for i, (name, values) in enumerate(series.items()):
            ax.bar(x + (i - 1) * width, values, width, label=name)
        ax.set_xticks(x, [_METHOD_SHORT[m] for m in methods])
        ax.set_ylim(0, 100)
        ax.set_ylabel("%")
        ax.set_title("Propagation prediction")
        ax.legend(loc="lower right", fontsize=8)
        fig.tight_layout()
        save(fig, paths["methods"])

    if report.slices and report.slices.top:
        top = list(report.slices.top)
        names = [r.file for r in top][::-1]
        values = [100 * r.reduction for r in top][::-1]
        fig, ax = plt.subplots(figsize=(7, 0.35 * len(top) + 1.2))
        ax.barh(names, values, color="#558855")
        ax.set_xlabel("slice reduction (%)")
        ax.set_title("Top files by slice reduction")
        fig.tight_layout()
        save(fig, paths["slices"])

    return written


def write_report(
    report: EvalReport, out_dir: str | Path, figures: bool = True
) -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    md_path = out_dir / "report.md"
    json_path = out_dir / "report.json"
    md_path.write_text(render_markdown(report), encoding="utf-8")
    json_path.write_text(
        json.dumps(to_json_document(report), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    paths = {"markdown": md_path, "json": json_path}
    if figures:
        for i, fig_path in enumerate(render_figures(report, out_dir)):
            paths[f"figure_{i}"] = fig_path
    return paths
