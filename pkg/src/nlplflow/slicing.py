"""Backward slicing from LLM call arguments, with label-informed barriers.

A barrier is a per-file variable name that feeds only non-propagating
placeholders in that file. Slice traversal neither enters definitions of
barriered variables nor follows def-use edges carried by them, so the
variable's exclusive upstream chain drops out of the slice. Control edges
from surviving nodes are still followed, and criterion lines always remain.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Collection, Iterable, Mapping, Optional, Sequence

from .depgraph import DepGraph
from .errors import MissingLabels, UnknownCriterionNode
from .records import SliceRecord
from .taxonomy import Label, LabelSet, is_non_propagating


def backward_slice(
    graph: DepGraph,
    criterion: Iterable[str],
    barriers: Collection[str] = (),
) -> set[int]:
    """Line numbers of the transitive backward closure from the criterion nodes.

    Traverses data edges def-ward and control edges to enclosing compounds.
    Edges whose variable is barriered are not followed. Criterion node ids must
    exist in the graph.
    """
    criterion = list(criterion)
    for node_id in criterion:
        if node_id not in graph.nodes:
            raise UnknownCriterionNode(f"{node_id} not in graph for {graph.file}")
    barriers = set(barriers)

    incoming_data: dict[str, list] = {}
    for edge in graph.data_edges:
        incoming_data.setdefault(edge.dst, []).append(edge)
    control_out: dict[str, list[str]] = {}
    for edge in graph.control_edges:
        control_out.setdefault(edge.src, []).append(edge.dst)

    reached: set[str] = set(criterion)
    queue = deque(criterion)
    while queue:
        node = queue.popleft()
        for edge in incoming_data.get(node, ()):
            if edge.var in barriers:
                continue
            if edge.src not in reached:
                reached.add(edge.src)
                queue.append(edge.src)
        for comp in control_out.get(node, ()):
            if comp not in reached:
                reached.add(comp)
                queue.append(comp)

    lines: set[int] = set()
    for node_id in reached:
        lines |= graph.nodes[node_id].lines
    return lines


@dataclass(frozen=True)
class LabeledPlaceholder:
    """One placeholder's file, contributing variables, and label set."""

    file: str
    variables: frozenset[str]
    labels: Optional[LabelSet]
    origin: str = ""  # callsite id or other diagnostic handle


def compute_barriers(placeholders: Iterable[LabeledPlaceholder]) -> dict[str, frozenset[str]]:
    """Per-file barrier variables.

    A variable is barriered in a file iff it contributes to at least one
    non-propagating placeholder there and to no propagating one. Placeholders
    without labels make the file's barriers uncomputable.
    """
    non_prop: dict[str, set[str]] = {}
    prop: dict[str, set[str]] = {}
    for ph in placeholders:
        if ph.labels is None:
            raise MissingLabels(f"placeholder {ph.origin or ph.variables} in {ph.file} has no labels")
        bucket = non_prop if is_non_propagating(ph.labels) else prop
        bucket.setdefault(ph.file, set()).update(ph.variables)
    out: dict[str, frozenset[str]] = {}
    for file, candidates in non_prop.items():
        out[file] = frozenset(candidates - prop.get(file, set()))
    return out


def slice_file(
    graph: DepGraph,
    criterion_nodes: Sequence[str],
    callsite_ids: Sequence[str],
    barriers: Collection[str],
) -> SliceRecord:
    full = backward_slice(graph, criterion_nodes)
    barriered = backward_slice(graph, criterion_nodes, barriers)
    return SliceRecord(
        file=graph.file,
        criterion=tuple(callsite_ids),
        full_lines=frozenset(full),
        barriered_lines=frozenset(barriered),
        barrier_variables=tuple(sorted(barriers)),
    )


@dataclass(frozen=True)
class SliceSummary:
    files: int
    files_with_barriers: int
    files_with_cut: int
    total_cut_lines: int
    mean_reduction_all: Optional[float]
    mean_reduction_with_barriers: Optional[float]
    mean_reduction_with_cut: Optional[float]
    top: tuple[SliceRecord, ...]

    def to_dict(self) -> dict:
        return {
            "files": self.files,
            "files_with_barriers": self.files_with_barriers,
            "files_with_cut": self.files_with_cut,
            "total_cut_lines": self.total_cut_lines,
            "mean_reduction_all": self.mean_reduction_all,
            "mean_reduction_with_barriers": self.mean_reduction_with_barriers,
            "mean_reduction_with_cut": self.mean_reduction_with_cut,
            "top": [
                {
                    "file": r.file,
                    "full": len(r.full_lines),
                    "kept": len(r.barriered_lines),
                    "cut": len(r.cut_lines),
                    "reduction": r.reduction,
                }
                for r in self.top
            ],
        }


def _mean(values: list[float]) -> Optional[float]:
    if not values:
        return None
    return sum(values) / len(values)


def slice_report(results: Sequence[SliceRecord], top_n: int = 10) -> SliceSummary:
    """Scoped unweighted means of per-file reduction ratios plus a top table."""
    with_barriers = [r for r in results if r.barrier_variables]
    with_cut = [r for r in results if r.cut_lines]
    top = sorted(with_cut, key=lambda r: (-r.reduction, r.file))[:top_n]
    return SliceSummary(
        files=len(results),
        files_with_barriers=len(with_barriers),
        files_with_cut=len(with_cut),
        total_cut_lines=sum(len(r.cut_lines) for r in results),
        mean_reduction_all=_mean([r.reduction for r in results]),
        mean_reduction_with_barriers=_mean([r.reduction for r in with_barriers]),
        mean_reduction_with_cut=_mean([r.reduction for r in with_cut]),
        top=tuple(top),
    )
