from __future__ import annotations

import pytest

from nlplflow.errors import SourceParseError
from nlplflow.extract import (
    analyze_source,
    extract_callsites,
    extract_sinks,
    render_template,
    template_text,
)
from nlplflow.records import Cwe, ExtractionKind, Framework, SINK_CWE, SinkKind
from nlplflow.rules import default_rules

LISTING_STYLE = '''import sqlite3
from openai import OpenAI

client = OpenAI()
conn = sqlite3.connect("sales.db")
cursor = conn.cursor()


def answer(question: str) -> str:
    prompt = f"Write a SQL query for: {question}"
    resp = client.chat.completions.create(
        model="gpt-4",
        messages=[{"role": "user", "content": prompt}],
    )
    sql = resp.choices[0].message.content
    cursor.execute(sql)
    return cursor.fetchall()
'''


def test_text_to_sql_pattern():
    analysis = analyze_source(LISTING_STYLE, path="text_to_sql.py")
    assert len(analysis.callsites) == 1
    ext = analysis.callsites[0]
    cs = ext.callsite
    assert cs.callee == "client.chat.completions.create"
    assert cs.framework == Framework.DIRECT_API
    assert cs.line == 11
    assert cs.rendered_prompt == ""
    assert len(cs.placeholders) == 1
    ph = cs.placeholders[0]
    assert ph.original_expression == "question"
    assert ph.extraction_kind == ExtractionKind.FSTRING
    assert ph.variable_names == {"question"}
    assert template_text(ext) == "Write a SQL query for: {question}"
    assert render_template(ext, ["What is the GDP of France?"]) == (
        "Write a SQL query for: What is the GDP of France?"
    )

    assert len(analysis.sinks) == 1
    sink = analysis.sinks[0]
    assert sink.sink_kind == SinkKind.SQL_EXECUTE
    assert sink.cwe == Cwe.CWE89
    assert sink.line == 16
    assert "cursor.execute" in sink.snippet


def test_no_llm_calls_yields_empty():
    src = "def add(a, b):\n    return a + b\n"
    assert extract_callsites(src) == []
    assert extract_sinks(src) == []


def test_concatenation_placeholder():
    src = 'llm = get_llm()\nuser_q = input()\nprompt = "a: " + user_q\nllm.invoke(prompt)\n'
    sites = extract_callsites(src, path="c.py")
    assert len(sites) == 1
    (ph,) = sites[0].placeholders
    assert ph.original_expression == "user_q"
    assert ph.extraction_kind == ExtractionKind.CONCATENATION


def test_format_call_placeholder():
    src = (
        "TEMPLATE = 'Do {thing} now.'\n"
        "client = make()\n"
        "def go(thing):\n"
        "    client.chat.completions.create(model='m', messages=[{'role': 'user', 'content': TEMPLATE.format(thing=thing)}])\n"
    )
    analysis = analyze_source(src, path="f.py")
    (ext,) = analysis.callsites
    (ph,) = ext.callsite.placeholders
    assert ph.extraction_kind == ExtractionKind.FORMAT_CALL
    assert ph.original_expression == "thing"
    assert template_text(ext) == "Do {thing} now."


def test_template_engine_placeholder_through_chain():
    src = '''from langchain import LLMChain, PromptTemplate

template = PromptTemplate(
    input_variables=["service"],
    template="Produce a YAML config block for {service}. YAML only.",
)
chain = LLMChain(llm=None, prompt=template)
result = chain.run(service=user_input)
'''
    analysis = analyze_source(src, path="t.py")
    (ext,) = analysis.callsites
    assert ext.callsite.callee == "chain.run"
    assert ext.callsite.framework == Framework.FRAMEWORK_WRAPPED
    (ph,) = ext.callsite.placeholders
    assert ph.extraction_kind == ExtractionKind.TEMPLATE_ENGINE
    assert ph.original_expression == "service"
    # the bound kwarg contributes its free variables to the slot
    assert ph.variable_names == {"service", "user_input"}
    assert template_text(ext) == "Produce a YAML config block for {service}. YAML only."


def test_accumulator_aug_assign_placeholders():
    src = '''llm = connect()

def build(phrase, parts):
    prompt = "Start.\\n"
    prompt += f"Main: {phrase}\\n"
    for part in parts:
        prompt += part + "\\n"
    llm.invoke(prompt)
'''
    (ext,) = analyze_source(src, path="a.py").callsites
    kinds = {p.original_expression: p.extraction_kind for p in ext.callsite.placeholders}
    assert kinds == {
        "phrase": ExtractionKind.FSTRING,
        "part": ExtractionKind.CONCATENATION,
    }


def test_constant_system_message_is_template_text_not_placeholder():
    src = '''client = make()
SYSTEM = "You are a helpful assistant."

def ask(q):
    client.chat.completions.create(
        model="m",
        messages=[
            {"role": "system", "content": SYSTEM},
            {"role": "user", "content": f"Q: {q}"},
        ],
    )
'''
    (ext,) = analyze_source(src, path="s.py").callsites
    assert [p.original_expression for p in ext.callsite.placeholders] == ["q"]
    assert template_text(ext) == "You are a helpful assistant.\nQ: {q}"


def test_sink_kinds_and_fixed_cwe_mapping():
    src = '''import subprocess, os, yaml, requests
exec(a)
eval(b)
subprocess.Popen(c, shell=True)
os.system(d)
cursor.execute(e)
requests.get(f)
yaml.unsafe_load(g)
yaml.safe_load(h)
'''
    sinks = extract_sinks(src, path="sinks.py")
    kinds = [(s.line, s.sink_kind, s.cwe) for s in sinks]
    assert kinds == [
        (2, SinkKind.EXEC, Cwe.CWE94),
        (3, SinkKind.EVAL, Cwe.CWE94),
        (4, SinkKind.SUBPROCESS, Cwe.CWE78),
        (5, SinkKind.SUBPROCESS, Cwe.CWE78),
        (6, SinkKind.SQL_EXECUTE, Cwe.CWE89),
        (7, SinkKind.HTTP_REQUEST, Cwe.CWE918),
        (8, SinkKind.UNSAFE_YAML_LOAD, Cwe.CWE502),
    ]
    for s in sinks:
        assert s.cwe == SINK_CWE[s.sink_kind]


def test_parse_error_raises_source_parse_error():
    with pytest.raises(SourceParseError):
        analyze_source("def broken(:\n", path="broken.py")


def test_determinism_same_bytes_same_output():
    a = analyze_source(LISTING_STYLE, path="x.py")
    b = analyze_source(LISTING_STYLE, path="x.py")
    assert [e.callsite for e in a.callsites] == [e.callsite for e in b.callsites]
    assert a.sinks == b.sinks
    assert [e.template for e in a.callsites] == [e.template for e in b.callsites]


def test_callsite_id_stable_under_path_changes_only():
    a = extract_callsites(LISTING_STYLE, path="one.py")[0]
    b = extract_callsites(LISTING_STYLE, path="two/one.py")[0]
    assert a.callsite_id == b.callsite_id  # id hashes contents, not path
    changed = LISTING_STYLE.replace("sales.db", "other.db")
    c = extract_callsites(changed, path="one.py")[0]
    assert c.callsite_id != a.callsite_id


def test_span_soundness():
    analysis = analyze_source(LISTING_STYLE, path="x.py")
    lines = LISTING_STYLE.splitlines()
    for ext in analysis.callsites:
        call_line = lines[ext.callsite.line - 1]
        assert ext.callsite.callee.split(".")[-1] in call_line
        for ph in ext.callsite.placeholders:
            span_text = "\n".join(lines[ph.span.start_line - 1 : ph.span.end_line])
            assert ph.original_expression in span_text
    for sink in analysis.sinks:
        assert sink.snippet in lines[sink.line - 1]


def test_default_rules_cover_all_sink_kinds():
    rules = default_rules()
    assert rules.llm_call_patterns
    for kind in SinkKind:
        assert rules.sink_patterns[kind]


def test_local_helper_inlined_one_level():
    src = '''llm = connect()

def wrap(question):
    return "Context: " + question

def ask(q):
    llm.invoke(wrap(q))
'''
    (ext,) = analyze_source(src, path="h.py").callsites
    (ph,) = ext.callsite.placeholders
    assert ph.original_expression == "q"
    assert template_text(ext) == "Context: {q}"


def test_repeated_expression_is_one_placeholder():
    src = 'llm = connect()\n\ndef go(q):\n    llm.invoke(f"{q} and again {q}")\n'
    (ext,) = analyze_source(src, path="r.py").callsites
    assert len(ext.callsite.placeholders) == 1
    assert ext.template.count(0) == 2
