from __future__ import annotations

import json
import threading
import time

import pytest

from nlplflow.backends import BackendConfig, LiveHTTPBackend, MockBackend, prompt_key
from nlplflow.errors import BackendError, MalformedBackendOutput
from nlplflow.extract import analyze_source
from nlplflow.pipeline import (
    StageReport,
    build_label_request,
    fill_template,
    generate_output,
    label_triple,
    reconstruct_callsite,
    run_stage,
    triples_for_callsite,
)
from nlplflow.records import Labeler, Stage, Triple
from nlplflow.store import checkpoint_path, load_checkpoint, load_records

LISTING_STYLE = '''client = make_client()
cursor = connect()


def answer(question):
    prompt = f"Write a SQL query for: {question}"
    resp = client.chat.completions.create(
        model="gpt-4",
        messages=[{"role": "user", "content": prompt}],
    )
    cursor.execute(resp.choices[0].message.content)
'''


def _extraction(src=LISTING_STYLE, path="text_to_sql.py"):
    (ext,) = analyze_source(src, path=path).callsites
    return ext


def test_backend_config_validation():
    BackendConfig(kind="mock")
    with pytest.raises(ValueError):
        BackendConfig(kind="live")  # endpoint/model required
    with pytest.raises(ValueError):
        BackendConfig(kind="other")
    BackendConfig(kind="live", endpoint="http://x/v1/chat", model="m")


def test_reconstruct_with_seeded_guess_renders_prompt():
    ext = _extraction()
    backend = MockBackend(guess_overrides={"question": "What is the GDP of France?"})
    filled = reconstruct_callsite(LISTING_STYLE, ext, backend)
    assert filled.rendered_prompt == "Write a SQL query for: What is the GDP of France?"
    assert filled.placeholders[0].guessed_value == "What is the GDP of France?"
    assert backend.calls["reconstruct"] == 1


def test_reconstruct_zero_placeholders_needs_no_backend():
    src = 'llm = make()\nllm.invoke("fixed prompt")\n'
    (ext,) = analyze_source(src, path="fixed.py").callsites
    backend = MockBackend()
    filled = reconstruct_callsite(src, ext, backend)
    assert filled.rendered_prompt == "fixed prompt"
    assert backend.total_calls == 0


def test_reconstruct_mock_sentinel_scheme():
    ext = _extraction()
    backend = MockBackend()
    filled = reconstruct_callsite(LISTING_STYLE, ext, backend)
    assert filled.placeholders[0].guessed_value == "<question:example>"
    assert "<question:example>" in filled.rendered_prompt


def test_generate_fixture_lookup_and_echo():
    backend = MockBackend(canned_outputs={"prompt A": "canned reply"})
    assert generate_output("prompt A", backend) == "canned reply"
    assert generate_output("prompt A", backend) == "canned reply"  # byte-identical

    echoed = generate_output("ask about <q:example> and <r:example>", backend)
    assert "<q:example>" in echoed
    assert "<r:example>" in echoed


def test_label_request_has_three_sections_in_order():
    ext = _extraction()
    backend = MockBackend(guess_overrides={"question": "What is the GDP of France?"})
    filled = reconstruct_callsite(LISTING_STYLE, ext, backend)
    triple = triples_for_callsite(filled, "some output", "mock")[0]
    _system, user = build_label_request(filled.placeholders[0], triple)
    a = user.index("[PLACEHOLDERS]")
    b = user.index("[RENDERED PROMPT]")
    c = user.index("[MODEL OUTPUT]")
    assert a < b < c
    for marker in ("[PLACEHOLDERS]", "[RENDERED PROMPT]", "[MODEL OUTPUT]"):
        assert user.count(marker) == 1


def test_label_triple_with_seeded_fixture_labels():
    ext = _extraction()
    backend = MockBackend(
        guess_overrides={"question": "What is the GDP of France?"},
        label_overrides={"question": ["Content Expansion", "Keyword Echo"]},
    )
    filled = reconstruct_callsite(LISTING_STYLE, ext, backend)
    output = generate_output(filled.rendered_prompt, backend)
    triple = triples_for_callsite(filled, output, "mock")[0]
    assignment = label_triple(triple, filled.placeholders[0], backend)
    assert set(assignment.labels) == {"ContentExpansion", "KeywordEcho"}
    assert assignment.labeler == Labeler.MOCK_BACKEND
    for item in assignment.evidence:
        if item.quote:
            assert " ".join(item.quote.split()) in " ".join(output.split())


def test_mock_marks_systemish_placeholders_ignored():
    src = (
        "client = make()\n"
        "def go(question, system_persona):\n"
        '    sys_msg = f"You are {system_persona}."\n'
        '    user_msg = f"Q: {question}"\n'
        "    client.chat.completions.create(model='m', messages=["
        "{'role': 'system', 'content': sys_msg}, {'role': 'user', 'content': user_msg}])\n"
    )
    (ext,) = analyze_source(src, path="two_ph.py").callsites
    backend = MockBackend()
    filled = reconstruct_callsite(src, ext, backend)
    output = generate_output(filled.rendered_prompt, backend)
    triples = triples_for_callsite(filled, output, "mock")
    by_expr = {}
    for triple, ph in zip(triples, filled.placeholders):
        by_expr[ph.original_expression] = label_triple(triple, ph, backend).labels
    assert by_expr["system_persona"] == ("Ignored",)
    assert by_expr["question"] == ("KeywordEcho",)


def test_label_triple_reprompts_once_then_fails():
    ext = _extraction()
    backend = MockBackend(guess_overrides={"question": "Q"})
    filled = reconstruct_callsite(LISTING_STYLE, ext, backend)
    triple = triples_for_callsite(filled, "output", "mock")[0]
    _system, user = build_label_request(filled.placeholders[0], triple)
    bad = MockBackend(reply_overrides={prompt_key(user): "not json at all"})
    with pytest.raises(MalformedBackendOutput):
        label_triple(triple, filled.placeholders[0], bad)
    assert bad.total_calls == 2  # one reprompt happened


def test_fill_template_leaves_unknown_braces_and_value_braces_alone():
    text = fill_template("a {x} b {unknown} c", {"x": "{y}"})
    assert text == "a {y} b {unknown} c"


def test_run_stage_processes_appends_and_checkpoints(tmp_path):
    out = tmp_path / "triples.jsonl"
    cp = checkpoint_path(tmp_path, Stage.GENERATE)
    items = [f"item{i}" for i in range(5)]

    def worker(item):
        return [
            Triple(
                callsite_id=item,
                placeholder_index=0,
                rendered_prompt="p",
                model_output="o",
                generator_model="mock",
            )
        ]

    report = run_stage(
        Stage.GENERATE, items, worker, out_path=out, checkpoint_file=cp, id_of=str, jobs=1
    )
    assert (report.completed, report.failed, report.skipped) == (5, 0, 0)
    records, errors = load_records(out)
    assert len(records) == 5 and not errors

    # All checkpointed: rerun performs no work.
    report2 = run_stage(
        Stage.GENERATE, items, worker, out_path=out, checkpoint_file=cp, id_of=str, jobs=1
    )
    assert (report2.completed, report2.failed, report2.skipped) == (0, 0, 5)


def test_run_stage_records_per_item_failures(tmp_path):
    out = tmp_path / "triples.jsonl"
    cp = checkpoint_path(tmp_path, Stage.GENERATE)

    def worker(item):
        if item == "item1":
            raise BackendError("persistent failure")
        return [
            Triple(
                callsite_id=item,
                placeholder_index=0,
                rendered_prompt="p",
                model_output="o",
                generator_model="mock",
            )
        ]

    report = run_stage(
        Stage.GENERATE,
        ["item0", "item1", "item2"],
        worker,
        out_path=out,
        checkpoint_file=cp,
        id_of=str,
        jobs=1,
    )
    assert (report.completed, report.failed, report.skipped) == (2, 1, 0)
    assert report.errors == (("item1", "persistent failure"),)


def test_run_stage_crash_then_resume_processes_remainder(tmp_path):
    out = tmp_path / "labels.jsonl"
    cp = checkpoint_path(tmp_path, Stage.LABEL)
    items = [f"t{i}" for i in range(10)]
    calls = {"n": 0}

    def crashing_worker(item):
        if calls["n"] >= 6:
            raise KeyboardInterrupt("killed")
        calls["n"] += 1
        return [
            Triple(
                callsite_id=item,
                placeholder_index=0,
                rendered_prompt="p",
                model_output="o",
                generator_model="mock",
            )
        ]

    with pytest.raises(KeyboardInterrupt):
        run_stage(
            Stage.LABEL, items, crashing_worker, out_path=out, checkpoint_file=cp, id_of=str, jobs=1
        )
    assert len(load_checkpoint(cp, Stage.LABEL).completed_ids) == 6

    processed = []

    def worker(item):
        processed.append(item)
        return [
            Triple(
                callsite_id=item,
                placeholder_index=0,
                rendered_prompt="p",
                model_output="o",
                generator_model="mock",
            )
        ]

    report = run_stage(
        Stage.LABEL, items, worker, out_path=out, checkpoint_file=cp, id_of=str, jobs=1
    )
    assert report.completed == 4
    assert report.skipped == 6
    assert processed == items[6:]
    after = load_checkpoint(cp, Stage.LABEL).completed_ids
    assert after == frozenset(items)


def test_run_stage_concurrency_bound(tmp_path):
    out = tmp_path / "triples.jsonl"
    cp = checkpoint_path(tmp_path, Stage.GENERATE)
    limit = 3
    gate = threading.Semaphore(0)
    in_flight = {"now": 0, "max": 0}
    lock = threading.Lock()

    def worker(item):
        with lock:
            in_flight["now"] += 1
            in_flight["max"] = max(in_flight["max"], in_flight["now"])
        time.sleep(0.01)
        with lock:
            in_flight["now"] -= 1
        return []

    run_stage(
        Stage.GENERATE,
        [f"i{i}" for i in range(20)],
        worker,
        out_path=out,
        checkpoint_file=cp,
        id_of=str,
        jobs=limit,
    )
    assert in_flight["max"] <= limit


def test_live_backend_retries_then_succeeds():
    attempts = {"n": 0}

    class Response:
        status_code = 200

        def json(self):
            return {"choices": [{"message": {"content": "hello"}}]}

    def flaky_post(url, json=None, headers=None, timeout=None):
        attempts["n"] += 1
        if attempts["n"] <= 2:
            raise OSError("timeout")
        return Response()

    config = BackendConfig(kind="live", endpoint="http://api/v1/chat", model="m", max_retries=3)
    backend = LiveHTTPBackend(config, post=flaky_post)
    import time as _time

    real_sleep = _time.sleep
    _time.sleep = lambda _s: None
    try:
        assert backend.complete("sys", "user") == "hello"
    finally:
        _time.sleep = real_sleep
    assert backend.retries_last_call == 2


def test_live_backend_exhausts_retries():
    def always_fail(url, json=None, headers=None, timeout=None):
        raise OSError("no route")

    config = BackendConfig(kind="live", endpoint="http://api/v1/chat", model="m", max_retries=1)
    backend = LiveHTTPBackend(config, post=always_fail)
    import time as _time

    real_sleep = _time.sleep
    _time.sleep = lambda _s: None
    try:
        with pytest.raises(BackendError):
            backend.complete("sys", "user")
    finally:
        _time.sleep = real_sleep


def test_mock_pipeline_fully_deterministic():
    src = LISTING_STYLE

    def run_once():
        (ext,) = analyze_source(src, path="d.py").callsites
        backend = MockBackend()
        filled = reconstruct_callsite(src, ext, backend)
        output = generate_output(filled.rendered_prompt, backend)
        triple = triples_for_callsite(filled, output, "mock")[0]
        assignment = label_triple(triple, filled.placeholders[0], backend)
        return json.dumps(
            [filled.to_dict(), triple.to_dict(), assignment.to_dict()], sort_keys=True
        )

    assert run_once() == run_once()
