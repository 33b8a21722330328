"""Command-line driver wiring the full analysis pipeline.

Subcommands, in pipeline order:

    extract   walk a corpus of .py files, write callsites.jsonl + sinks.jsonl
    render    guess placeholder values and render prompts (backend)
    generate  produce model outputs per callsite, one triple per placeholder
    label     assign flow labels per triple (backend)
    predict   run prediction methods over (placeholder x sink) pairs
    slice     compute full vs. barrier-pruned backward slices per file
    eval      aggregate everything into report.md / report.json + figures

Exit codes: 0 success, 1 environment or IO failure, 2 usage error or missing
stage prerequisite.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional

from . import __version__
from .backends import MockBackend, make_backend
from .config import RunConfig, build_run_config
from .depgraph import build_depgraph, trace_placeholder_variables
from .errors import NlplFlowError, SourceParseError
from .extract import CallsiteExtraction, analyze_source, template_text
from .pipeline import (
    generate_output,
    label_triple,
    reconstruct_callsite,
    run_stage,
    triples_for_callsite,
)
from .predict import MethodId, PairContext, Predictor
from .records import (
    Callsite,
    Diagnostic,
    LabelAssignment,
    PairRecord,
    SinkOccurrence,
    SliceRecord,
    Stage,
    Triple,
    make_pair_id,
)
from .report import build_report, write_report
from .rules import default_rules, load_rules
from .slicing import LabeledPlaceholder, compute_barriers, slice_file
from .store import (
    append_records,
    checkpoint_path,
    ensure_file,
    latest_by_id,
    load_records,
    save_checkpoint,
    load_checkpoint,
)
from .taxonomy import as_label_set

FILES = {
    "callsites": "callsites.jsonl",
    "rendered": "callsites_rendered.jsonl",
    "triples": "triples.jsonl",
    "labels": "labels.jsonl",
    "sinks": "sinks.jsonl",
    "pairs": "pairs.jsonl",
    "slices": "slices.jsonl",
    "diagnostics": "diagnostics.jsonl",
}


class PrereqError(NlplFlowError):
    def __init__(self, path: Path, stage_hint: str):
        super().__init__(f"missing prerequisite {path} (run `{stage_hint}` first)")


def _require(out_dir: Path, key: str, stage_hint: str) -> Path:
    path = out_dir / FILES[key]
    if not path.exists():
        raise PrereqError(path, stage_hint)
    return path


def _rules_for(config: RunConfig):
    if config.rules_path is not None:
        return load_rules(config.rules_path)
    return default_rules()


def _fresh_stage(config, stage: Stage, out_name: str, resume: bool) -> None:
    """Without --resume a stage starts over: clear its output and checkpoint."""
    if resume:
        return
    for path in (config.out_dir / out_name, checkpoint_path(config.out_dir, stage)):
        if path.exists():
            path.unlink()


def _read_corpus_file(config: RunConfig, rel: str) -> str:
    if config.corpus_root is None:
        raise PrereqError(Path("<corpus>"), "pass --corpus")
    return (config.corpus_root / rel).read_text(encoding="utf-8", errors="replace")


def _make_backend(config: RunConfig):
    return make_backend(config.backend)


class _ExtractionIndex:
    """Re-derives callsite templates from sources, one parse per file."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.rules = _rules_for(config)
        self._by_file: dict[str, dict[str, CallsiteExtraction]] = {}

    def lookup(self, callsite: Callsite) -> CallsiteExtraction:
        if callsite.file not in self._by_file:
            source = _read_corpus_file(self.config, callsite.file)
            analysis = analyze_source(source, self.rules, callsite.file)
            self._by_file[callsite.file] = {
                e.callsite.callsite_id: e for e in analysis.callsites
            }
        try:
            return self._by_file[callsite.file][callsite.callsite_id]
        except KeyError:
            raise NlplFlowError(
                f"callsite {callsite.callsite_id} not found in {callsite.file}; "
                "re-run extract after source changes"
            ) from None

    def source(self, rel: str) -> str:
        return _read_corpus_file(self.config, rel)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_extract(config: RunConfig) -> int:
    root = config.corpus_root
    if root is None or not root.exists():
        print(f"error: corpus root does not exist: {root}", file=sys.stderr)
        return 1
    rules = _rules_for(config)
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    for key, record_type in (
        ("callsites", Callsite),
        ("sinks", SinkOccurrence),
        ("diagnostics", Diagnostic),
    ):
        path = out / FILES[key]
        if path.exists():
            path.unlink()
        ensure_file(path, record_type)

    n_files = n_callsites = n_placeholders = n_sinks = 0
    diagnostics: list[Diagnostic] = []
    callsites: list[Callsite] = []
    sinks: list[SinkOccurrence] = []
    for path in sorted(root.rglob("*.py")):
        rel = path.relative_to(root).as_posix()
        n_files += 1
        source = path.read_text(encoding="utf-8", errors="replace")
        try:
            analysis = analyze_source(source, rules, rel)
        except SourceParseError as exc:
            diagnostics.append(Diagnostic(file=rel, message=str(exc), line=exc.line))
            continue
        for extraction in analysis.callsites:
            callsites.append(extraction.callsite)
            n_callsites += 1
            n_placeholders += len(extraction.callsite.placeholders)
        sinks.extend(analysis.sinks)
        n_sinks += len(analysis.sinks)

    append_records(out / FILES["callsites"], callsites)
    append_records(out / FILES["sinks"], sinks)
    append_records(out / FILES["diagnostics"], diagnostics)
    print(
        f"extract: files={n_files} callsites={n_callsites} placeholders={n_placeholders} "
        f"sinks={n_sinks} parse_errors={len(diagnostics)}"
    )
    return 0


def cmd_render(config: RunConfig, resume: bool) -> int:
    src_path = _require(config.out_dir, "callsites", "nlplflow extract")
    callsites, _errors = load_records(src_path, Callsite)
    index = _ExtractionIndex(config)
    backend = _make_backend(config)
    _fresh_stage(config, Stage.RENDER, FILES["rendered"], resume)
    ensure_file(config.out_dir / FILES["rendered"], Callsite)

    def worker(callsite: Callsite):
        extraction = index.lookup(callsite)
        source = index.source(callsite.file)
        return [reconstruct_callsite(source, extraction, backend)]

    report = run_stage(
        Stage.RENDER,
        callsites,
        worker,
        out_path=config.out_dir / FILES["rendered"],
        checkpoint_file=checkpoint_path(config.out_dir, Stage.RENDER),
        id_of=lambda c: c.callsite_id,
        jobs=config.jobs,
    )
    print(f"render: completed={report.completed} failed={report.failed} skipped={report.skipped}")
    _print_errors(report.errors)
    return 0


def cmd_generate(config: RunConfig, resume: bool) -> int:
    src_path = _require(config.out_dir, "rendered", "nlplflow render")
    rendered, _errors = load_records(src_path, Callsite)
    items = [c for c in rendered if c.placeholders]
    backend = _make_backend(config)
    _fresh_stage(config, Stage.GENERATE, FILES["triples"], resume)
    ensure_file(config.out_dir / FILES["triples"], Triple)

    def worker(callsite: Callsite):
        output = generate_output(callsite.rendered_prompt, backend)
        return triples_for_callsite(callsite, output, config.backend.model)

    report = run_stage(
        Stage.GENERATE,
        items,
        worker,
        out_path=config.out_dir / FILES["triples"],
        checkpoint_file=checkpoint_path(config.out_dir, Stage.GENERATE),
        id_of=lambda c: c.callsite_id,
        jobs=config.jobs,
    )
    print(
        f"generate: completed={report.completed} failed={report.failed} skipped={report.skipped}"
    )
    _print_errors(report.errors)
    return 0


def _placeholder_for(triple: Triple, rendered_by_id: dict[str, Callsite]):
    callsite = rendered_by_id.get(triple.callsite_id)
    if callsite is None or triple.placeholder_index >= len(callsite.placeholders):
        raise NlplFlowError(f"triple {triple.triple_id} has no matching rendered callsite")
    return callsite.placeholders[triple.placeholder_index]


def cmd_label(config: RunConfig, resume: bool) -> int:
    triples_path = _require(config.out_dir, "triples", "nlplflow generate")
    rendered_path = _require(config.out_dir, "rendered", "nlplflow render")
    triples, _e1 = load_records(triples_path, Triple)
    rendered, _e2 = load_records(rendered_path, Callsite)
    rendered_by_id = latest_by_id(rendered)
    backend = _make_backend(config)
    _fresh_stage(config, Stage.LABEL, FILES["labels"], resume)
    ensure_file(config.out_dir / FILES["labels"], LabelAssignment)

    def worker(triple: Triple):
        placeholder = _placeholder_for(triple, rendered_by_id)
        return [label_triple(triple, placeholder, backend)]

    report = run_stage(
        Stage.LABEL,
        triples,
        worker,
        out_path=config.out_dir / FILES["labels"],
        checkpoint_file=checkpoint_path(config.out_dir, Stage.LABEL),
        id_of=lambda t: t.triple_id,
        jobs=config.jobs,
    )
    print(f"label: completed={report.completed} failed={report.failed} skipped={report.skipped}")
    _print_errors(report.errors)
    return 0


def _build_pairs(
    rendered: list[Callsite], sinks: list[SinkOccurrence], existing: dict[str, PairRecord]
) -> list[PairRecord]:
    sinks_by_file: dict[str, list[SinkOccurrence]] = {}
    for sink in sinks:
        sinks_by_file.setdefault(sink.file, []).append(sink)
    pairs: list[PairRecord] = []
    for callsite in sorted(rendered, key=lambda c: (c.file, c.line, c.callsite_id)):
        for sink in sinks_by_file.get(callsite.file, ()):
            for index in range(len(callsite.placeholders)):
                pair_id = make_pair_id(
                    callsite.callsite_id, index, sink.file, sink.line, sink.sink_kind
                )
                if pair_id in existing:
                    pairs.append(existing[pair_id])
                else:
                    pairs.append(
                        PairRecord(
                            pair_id=pair_id,
                            callsite_id=callsite.callsite_id,
                            placeholder_index=index,
                            sink_file=sink.file,
                            sink_line=sink.line,
                            sink_kind=sink.sink_kind,
                        )
                    )
    return pairs


def cmd_predict(config: RunConfig, resume: bool) -> int:
    rendered_path = _require(config.out_dir, "rendered", "nlplflow render")
    sinks_path = _require(config.out_dir, "sinks", "nlplflow extract")
    rendered = list(latest_by_id(load_records(rendered_path, Callsite)[0]).values())
    sinks = load_records(sinks_path, SinkOccurrence)[0]

    needs_labels = {MethodId.C, MethodId.BPLUS, MethodId.CPLUS} & set(config.methods)
    labels_by_triple: dict[str, LabelAssignment] = {}
    if needs_labels:
        labels_path = _require(config.out_dir, "labels", "nlplflow label")
        labels_by_triple = latest_by_id(load_records(labels_path, LabelAssignment)[0])
    needs_outputs = {MethodId.B, MethodId.BPLUS} & set(config.methods)
    triples_by_id: dict[str, Triple] = {}
    if needs_outputs:
        triples_path = _require(config.out_dir, "triples", "nlplflow generate")
        triples_by_id = latest_by_id(load_records(triples_path, Triple)[0])

    pairs_path = config.out_dir / FILES["pairs"]
    if not resume and pairs_path.exists():
        pairs_path.unlink()
        cp = checkpoint_path(config.out_dir, Stage.PREDICT)
        if cp.exists():
            cp.unlink()
    existing = (
        latest_by_id(load_records(pairs_path, PairRecord)[0]) if pairs_path.exists() else {}
    )
    ensure_file(pairs_path, PairRecord)
    pairs = _build_pairs(rendered, sinks, existing)
    rendered_by_id = {c.callsite_id: c for c in rendered}

    index = _ExtractionIndex(config)
    backend_needed = {MethodId.B, MethodId.BPLUS, MethodId.CPLUS} & set(config.methods)
    predictor = Predictor(_make_backend(config) if backend_needed else None)

    checkpoint_file = checkpoint_path(config.out_dir, Stage.PREDICT)
    checkpoint = load_checkpoint(checkpoint_file, Stage.PREDICT)
    completed = failed = skipped = 0
    errors: list[tuple[str, str]] = []

    for pair in pairs:
        pending = [
            m for m in config.methods if f"{pair.pair_id}:{m.value}" not in checkpoint.completed_ids
        ]
        if not pending:
            skipped += 1
            continue
        callsite = rendered_by_id[pair.callsite_id]
        placeholder = callsite.placeholders[pair.placeholder_index]
        assignment = labels_by_triple.get(f"{pair.callsite_id}#{pair.placeholder_index}")
        labels = as_label_set(assignment.labels) if assignment else None
        predictions = dict(pair.predictions)
        pair_failed = False
        for method in pending:
            try:
                ctx = None
                if method in (MethodId.B, MethodId.BPLUS, MethodId.CPLUS):
                    triple = triples_by_id.get(f"{pair.callsite_id}#{pair.placeholder_index}")
                    ctx = PairContext(
                        source=index.source(pair.sink_file),
                        sink_line=pair.sink_line,
                        vuln_type=pair.sink_kind.value,
                        sink_code=next(
                            (s.snippet for s in sinks if s.file == pair.sink_file and s.line == pair.sink_line),
                            "",
                        ),
                        prompt_template=template_text(index.lookup(callsite)),
                        model_output=triple.model_output if triple else "",
                        placeholder_name=placeholder.original_expression,
                        placeholder_value=placeholder.guessed_value,
                    )
                predictions[method.value] = predictor.predict(method, ctx, labels)
            except NlplFlowError as exc:
                errors.append((f"{pair.pair_id}:{method.value}", str(exc)))
                pair_failed = True
        updated = PairRecord(
            pair_id=pair.pair_id,
            callsite_id=pair.callsite_id,
            placeholder_index=pair.placeholder_index,
            sink_file=pair.sink_file,
            sink_line=pair.sink_line,
            sink_kind=pair.sink_kind,
            ground_truth=pair.ground_truth,
            annotator_votes=pair.annotator_votes,
            predictions=predictions,
        )
        append_records(pairs_path, [updated])
        done_keys = {
            f"{pair.pair_id}:{m.value}" for m in pending if m.value in predictions
        }
        checkpoint = type(checkpoint)(
            stage=Stage.PREDICT,
            completed_ids=checkpoint.completed_ids | done_keys,
            created_at=checkpoint.created_at,
        )
        save_checkpoint(checkpoint_file, checkpoint)
        if pair_failed:
            failed += 1
        else:
            completed += 1

    print(
        f"predict: pairs={len(pairs)} completed={completed} failed={failed} skipped={skipped} "
        f"methods={','.join(m.value for m in config.methods)}"
    )
    _print_errors(tuple(errors))
    return 0


def cmd_slice(config: RunConfig) -> int:
    rendered_path = _require(config.out_dir, "rendered", "nlplflow render")
    labels_path = _require(config.out_dir, "labels", "nlplflow label")
    rendered = list(latest_by_id(load_records(rendered_path, Callsite)[0]).values())
    labels_by_triple = latest_by_id(load_records(labels_path, LabelAssignment)[0])

    slices_path = config.out_dir / FILES["slices"]
    if slices_path.exists():
        slices_path.unlink()
    ensure_file(slices_path, SliceRecord)

    by_file: dict[str, list[Callsite]] = {}
    for callsite in rendered:
        by_file.setdefault(callsite.file, []).append(callsite)

    records: list[SliceRecord] = []
    skipped: list[str] = []
    for file in sorted(by_file):
        callsites = sorted(by_file[file], key=lambda c: (c.line, c.callsite_id))
        try:
            source = _read_corpus_file(config, file)
            graph = build_depgraph(source, file)
        except (OSError, SourceParseError) as exc:
            skipped.append(f"{file}: {exc}")
            continue

        labeled: list[LabeledPlaceholder] = []
        complete = True
        for callsite in callsites:
            traced = trace_placeholder_variables(callsite, graph)
            for index in range(len(callsite.placeholders)):
                assignment = labels_by_triple.get(f"{callsite.callsite_id}#{index}")
                if assignment is None:
                    complete = False
                    break
                labeled.append(
                    LabeledPlaceholder(
                        file=file,
                        variables=traced[index],
                        labels=as_label_set(assignment.labels),
                        origin=callsite.callsite_id,
                    )
                )
            if not complete:
                break
        if not complete:
            skipped.append(f"{file}: placeholders missing labels")
            continue

        barriers = compute_barriers(labeled).get(file, frozenset())
        criterion: list[str] = []
        for callsite in callsites:
            arg_nodes = graph.call_arg_nodes(callsite.line)
            if arg_nodes:
                criterion.extend(arg_nodes)
            else:
                criterion.extend(
                    n.node_id
                    for n in graph.nodes.values()
                    if n.kind == "stmt" and n.start_line <= callsite.line <= n.end_line
                )
        if not criterion:
            skipped.append(f"{file}: no criterion nodes for callsites")
            continue
        records.append(
            slice_file(graph, criterion, [c.callsite_id for c in callsites], barriers)
        )

    append_records(slices_path, records)
    from .slicing import slice_report as _summarize

    summary = _summarize(records)
    print(
        f"slice: files={summary.files} with_barriers={summary.files_with_barriers} "
        f"with_cut={summary.files_with_cut} cut_lines={summary.total_cut_lines}"
    )
    for message in skipped:
        print(f"slice: skipped {message}", file=sys.stderr)
    return 0


def cmd_eval(config: RunConfig, figures: bool) -> int:
    labels_path = _require(config.out_dir, "labels", "nlplflow label")
    assignments = list(latest_by_id(load_records(labels_path, LabelAssignment)[0]).values())
    assignments.sort(key=lambda a: a.triple_id)

    pairs_path = config.out_dir / FILES["pairs"]
    pairs = (
        sorted(
            latest_by_id(load_records(pairs_path, PairRecord)[0]).values(),
            key=lambda p: p.pair_id,
        )
        if pairs_path.exists()
        else []
    )
    slices_path = config.out_dir / FILES["slices"]
    slices = (
        sorted(
            latest_by_id(load_records(slices_path, SliceRecord)[0]).values(),
            key=lambda s: s.file,
        )
        if slices_path.exists()
        else []
    )

    report = build_report(assignments, pairs, slices)
    paths = write_report(report, config.out_dir, figures=figures)
    print(f"eval: wrote {paths['markdown']} and {paths['json']}")
    if report.distribution:
        print(
            f"eval: pairs={report.distribution.pairs} "
            f"multi_label_share={report.distribution.multi_label_share:.1%}"
        )
    if report.slices and report.slices.mean_reduction_with_cut is not None:
        print(f"eval: slice mean reduction (cut>0) {report.slices.mean_reduction_with_cut:.1%}")
    return 0


def _print_errors(errors):
    for item_id, message in errors:
        print(f"  failed {item_id}: {message}", file=sys.stderr)


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nlplflow",
        description="Information-flow analysis at LLM API callsites.",
    )
    parser.add_argument("--version", action="version", version=f"nlplflow {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="key=value config file")
    common.add_argument("--out", dest="out", default=None, help="output directory")
    common.add_argument("--corpus", dest="corpus", default=None, help="corpus root directory")
    common.add_argument("--backend", choices=("mock", "live"), default=None)
    common.add_argument("--endpoint", default=None, help="chat-completion endpoint URL")
    common.add_argument("--model", default=None, help="model name sent to the endpoint")
    common.add_argument("--rules", dest="rules", default=None, help="detection rules JSON")
    common.add_argument("--methods", default=None, help="comma-separated: A,B,C,B+,C+")
    common.add_argument("--jobs", type=int, default=None, help="max concurrent backend requests")
    common.add_argument("--resume", action="store_true", help="resume from stage checkpoint")
    common.add_argument("-v", "--verbose", action="count", default=0)

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("extract", parents=[common], help="find callsites and sinks")
    sub.add_parser("render", parents=[common], help="guess values, render prompts")
    sub.add_parser("generate", parents=[common], help="generate model outputs")
    sub.add_parser("label", parents=[common], help="assign flow labels")
    sub.add_parser("predict", parents=[common], help="predict pair propagation")
    sub.add_parser("slice", parents=[common], help="compute backward slices")
    eval_parser = sub.add_parser("eval", parents=[common], help="write reports and figures")
    eval_parser.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = build_run_config(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "extract":
            return cmd_extract(config)
        if args.command == "render":
            return cmd_render(config, args.resume)
        if args.command == "generate":
            return cmd_generate(config, args.resume)
        if args.command == "label":
            return cmd_label(config, args.resume)
        if args.command == "predict":
            return cmd_predict(config, args.resume)
        if args.command == "slice":
            return cmd_slice(config)
        if args.command == "eval":
            return cmd_eval(config, figures=not args.no_figures)
        raise AssertionError(f"unreachable command {args.command}")
    except PrereqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
