from __future__ import annotations

import itertools

import pytest

from nlplflow.backends import MockBackend
from nlplflow.errors import MissingLabels, TemplateFieldMissing, UnparseableVerdict
from nlplflow.predict import (
    MethodId,
    PairContext,
    Predictor,
    build_verification_request,
    parse_verdict,
    per_label_rates,
)
from nlplflow.taxonomy import ALL_LABELS, Label, NON_PROPAGATING

CTX = PairContext(
    source="def f():\n    cursor.execute(sql)\n",
    sink_line=2,
    vuln_type="SQL injection",
    sink_code="cursor.execute(sql)",
    prompt_template="Write a SQL query for: {question}",
    model_output="SELECT * FROM t",
    placeholder_name="question",
    placeholder_value="What is the GDP of France?",
)


def oracle_any_outside_n(labels) -> bool:
    return any(l not in NON_PROPAGATING for l in labels)


def test_method_id_parsing():
    assert MethodId.parse("A") == MethodId.A
    assert MethodId.parse("B+") == MethodId.BPLUS
    assert MethodId.parse("C+") == MethodId.CPLUS
    assert MethodId.parse("Bplus") == MethodId.BPLUS
    with pytest.raises(ValueError):
        MethodId.parse("Z")


def test_method_a_always_yes():
    predictor = Predictor()
    assert predictor.predict(MethodId.A) == "yes"
    assert predictor.predict(MethodId.A, CTX, frozenset({Label.IGNORED})) == "yes"


def test_method_c_matches_rule():
    predictor = Predictor()
    assert predictor.predict(MethodId.C, labels=frozenset({Label.IGNORED})) == "no"
    assert (
        predictor.predict(
            MethodId.C, labels=frozenset({Label.CONTENT_EXPANSION, Label.KEYWORD_ECHO})
        )
        == "yes"
    )
    with pytest.raises(MissingLabels):
        predictor.predict(MethodId.C)


def test_method_c_equals_oracle_on_singletons_and_pairs():
    predictor = Predictor()
    for labels in itertools.chain(
        ((l,) for l in ALL_LABELS), itertools.combinations(ALL_LABELS, 2)
    ):
        want = "yes" if oracle_any_outside_n(labels) else "no"
        assert predictor.predict(MethodId.C, labels=frozenset(labels)) == want


def test_cplus_stage_gating_blocks_without_backend_call():
    backend = MockBackend()
    predictor = Predictor(backend)
    verdict = predictor.predict(MethodId.CPLUS, CTX, frozenset({Label.IGNORED}))
    assert verdict == "no"
    assert backend.total_calls == 0

    verdict = predictor.predict(
        MethodId.CPLUS, CTX, frozenset({Label.CONTENT_EXPANSION, Label.KEYWORD_ECHO})
    )
    assert verdict == "yes"
    assert backend.calls["verdict"] == 1


def test_b_issues_exactly_one_call_per_pair():
    backend = MockBackend()
    predictor = Predictor(backend, memoize=False)
    for i in range(7):
        ctx = PairContext(
            source=f"# file {i}\n",
            sink_line=i + 1,
            vuln_type="code injection",
            sink_code="exec(x)",
            prompt_template="T {p}",
            model_output="out",
            placeholder_name="p",
            placeholder_value="v",
        )
        predictor.predict(MethodId.B, ctx)
    assert backend.calls["verdict"] == 7


def test_cplus_request_sections_are_source_and_sink_only():
    req = build_verification_request(MethodId.CPLUS, CTX)
    assert "[SOURCE CODE]" in req.text
    assert "[DANGEROUS SINK]" in req.text
    assert "[PROMPT TEMPLATE]" not in req.text
    assert "[LLM OUTPUT]" not in req.text
    assert "[PLACEHOLDER]" not in req.text
    assert CTX.prompt_template not in req.text
    assert CTX.model_output not in req.text
    assert CTX.placeholder_value not in req.text
    assert "Keyword Echo" not in req.text


def test_b_request_has_all_five_sections():
    req = build_verification_request(MethodId.B, CTX)
    for section in (
        "[SOURCE CODE]",
        "[PROMPT TEMPLATE]",
        "[LLM OUTPUT]",
        "[PLACEHOLDER]",
        "[DANGEROUS SINK]",
    ):
        assert section in req.text
    assert CTX.model_output in req.text
    assert CTX.placeholder_value in req.text


def test_bplus_request_is_b_plus_label_preamble():
    labels = frozenset({Label.CONTENT_EXPANSION, Label.KEYWORD_ECHO})
    b = build_verification_request(MethodId.B, CTX)
    bplus = build_verification_request(MethodId.BPLUS, CTX, labels)
    assert bplus.text.endswith(b.text)
    assert "classified as: Content Expansion, Keyword Echo" in bplus.text
    assert "Fragment Copy" in bplus.text  # full label guide included
    with pytest.raises(MissingLabels):
        build_verification_request(MethodId.BPLUS, CTX)


def test_b_request_requires_complete_context():
    incomplete = PairContext(source="x", sink_line=1, vuln_type="v")
    with pytest.raises(TemplateFieldMissing):
        build_verification_request(MethodId.B, incomplete)


def test_verdict_parsing_strict():
    assert parse_verdict("yes") == "yes"
    assert parse_verdict(" YES.") == "yes"
    assert parse_verdict("No, because...") == "no"
    assert parse_verdict('"no"') == "no"
    for bad in ("maybe", "", "the answer is yes", "yesterday"):
        with pytest.raises(UnparseableVerdict):
            parse_verdict(bad)


def test_unparseable_verdict_after_one_reprompt():
    backend = MockBackend(verdict_fn=lambda _req: "unsure")
    predictor = Predictor(backend)
    with pytest.raises(UnparseableVerdict):
        predictor.predict(MethodId.B, CTX)
    assert backend.calls["verdict"] == 2


def test_request_memo_reuses_identical_requests():
    backend = MockBackend()
    predictor = Predictor(backend)
    predictor.predict(MethodId.B, CTX)
    predictor.predict(MethodId.B, CTX)
    assert backend.calls["verdict"] == 1


def test_per_label_rates_thresholds_and_values():
    pairs = []
    pairs += [("yes", frozenset({Label.CODE_SNIPPET}))] * 20
    pairs += [("no", frozenset({Label.CODE_SNIPPET}))] * 1
    pairs += [("yes", frozenset({Label.GENERAL_SUMMARIZATION}))] * 1
    pairs += [("no", frozenset({Label.GENERAL_SUMMARIZATION}))] * 42
    pairs += [("yes", frozenset({Label.RANKING}))] * 4  # under threshold
    rates = {r.label: r for r in per_label_rates(pairs)}
    assert Label.RANKING not in rates
    assert rates[Label.CODE_SNIPPET].rate == pytest.approx(20 / 21)
    assert round(rates[Label.CODE_SNIPPET].rate * 100, 1) == 95.2
    assert rates[Label.GENERAL_SUMMARIZATION].rate == pytest.approx(1 / 43)
    assert round(rates[Label.GENERAL_SUMMARIZATION].rate * 100, 1) == 2.3


def test_per_label_rates_multilabel_pairs_count_everywhere():
    pairs = [("yes", frozenset({Label.KEYWORD_ECHO, Label.CODE_SNIPPET}))] * 5
    rates = {r.label: r for r in per_label_rates(pairs)}
    assert rates[Label.KEYWORD_ECHO].yes == 5
    assert rates[Label.CODE_SNIPPET].yes == 5
