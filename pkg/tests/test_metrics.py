from __future__ import annotations

import random

import pytest

from nlplflow.errors import DegenerateMarginals
from nlplflow.metrics import (
    ConfusionCounts,
    cohen_kappa,
    cohen_kappa_from_table,
    fleiss_kappa,
    label_distribution,
    multilabel_decisions,
    pct,
    prf1,
)
from nlplflow.taxonomy import Label

# Published benchmark: 353 pairs, 110 yes. Per method: (fp, fn, printed p/r/f1).
TABLE5 = {
    "A": (243, 0, "31.2%", "100.0%", "47.5%"),
    "B": (28, 22, "75.9%", "80.0%", "77.9%"),
    "C": (204, 2, "34.6%", "98.2%", "51.2%"),
    "Bplus": (9, 32, "89.7%", "70.9%", "79.2%"),
    "Cplus": (2, 14, "98.0%", "87.3%", "92.3%"),
}


def counts_from_fp_fn(fp: int, fn: int, yes: int = 110, total: int = 353) -> ConfusionCounts:
    return ConfusionCounts(tp=yes - fn, fp=fp, fn=fn, tn=(total - yes) - fp)


def test_prf1_reproduces_published_method_rows():
    for method, (fp, fn, p, r, f1) in TABLE5.items():
        precision, recall, f_one = prf1(counts_from_fp_fn(fp, fn))
        assert pct(precision) == p, method
        assert pct(recall) == r, method
        assert pct(f_one) == f1, method


def test_prf1_within_tolerance_of_published_numbers():
    published = {
        "A": (31.2, 100.0, 47.5),
        "B": (75.9, 80.0, 77.9),
        "C": (34.6, 98.2, 51.2),
        "Bplus": (89.7, 70.9, 79.2),
        "Cplus": (98.0, 87.3, 92.3),
    }
    for method, (fp, fn, *_rest) in TABLE5.items():
        got = prf1(counts_from_fp_fn(fp, fn))
        for value, expected in zip(got, published[method]):
            assert abs(value * 100 - expected) <= 0.05


def test_prf1_degenerate_cells_are_none():
    precision, recall, f1 = prf1(ConfusionCounts(tp=0, fp=0, fn=5, tn=3))
    assert precision is None
    assert recall == 0.0
    assert f1 is None
    assert pct(precision) == "—"
    assert pct(recall) == "0.0%"


def test_pct_rounding_half_up():
    assert pct(0.315) == "31.5%"
    assert pct(0.92319) == "92.3%"
    assert pct(0.0715) == "7.2%"  # 7.15 rounds half-up to 7.2
    assert pct(1.0) == "100.0%"


def test_cohen_kappa_hand_checked_2x2():
    # p_o = 0.7, p_e = 0.5 -> kappa = 0.4
    assert cohen_kappa_from_table([[20, 5], [10, 15]]) == pytest.approx(0.4, abs=1e-9)


def test_cohen_kappa_independence_case():
    decisions = [("yes", "yes"), ("yes", "no"), ("no", "no"), ("no", "yes")]
    assert cohen_kappa(decisions) == pytest.approx(0.0, abs=1e-12)


def test_cohen_kappa_perfect_agreement():
    decisions = [("a", "a"), ("b", "b"), ("a", "a"), ("c", "c")]
    assert cohen_kappa(decisions) == 1.0


def test_cohen_kappa_degenerate_single_category_perfect():
    assert cohen_kappa([("x", "x"), ("x", "x")]) == 1.0


def test_cohen_pairs_match_table_form():
    rng = random.Random(5)
    decisions = [(rng.choice("ab"), rng.choice("ab")) for _ in range(200)]
    table = [[0, 0], [0, 0]]
    idx = {"a": 0, "b": 1}
    for a, b in decisions:
        table[idx[a]][idx[b]] += 1
    assert cohen_kappa(decisions) == pytest.approx(cohen_kappa_from_table(table), abs=1e-12)


def test_multilabel_binarization():
    a = [{Label.KEYWORD_ECHO, Label.CONTENT_EXPANSION}, {Label.IGNORED}]
    b = [{Label.KEYWORD_ECHO}, {Label.IGNORED}]
    decisions = multilabel_decisions(a, b)
    assert len(decisions) == 2 * 24
    agree = sum(1 for x, y in decisions if x == y)
    assert agree == 2 * 24 - 1  # single disagreement: ContentExpansion on item 1
    kappa = cohen_kappa(decisions)
    assert -1.0 <= kappa <= 1.0


def test_fleiss_kappa_unanimous_two_categories():
    table = [[3, 0], [0, 3], [3, 0], [0, 3]]
    assert fleiss_kappa(table) == pytest.approx(1.0, abs=1e-12)


def test_fleiss_kappa_two_one_split_closed_form():
    # 10 items, 3 raters, every item split 2-1, marginals exactly 0.5/0.5:
    # P_bar = 1/3, P_e = 0.5, kappa = -1/3
    table = [[2, 1] if i % 2 == 0 else [1, 2] for i in range(10)]
    assert fleiss_kappa(table) == pytest.approx(-1 / 3, abs=1e-9)


def test_fleiss_kappa_single_category_degenerate():
    with pytest.raises(DegenerateMarginals):
        fleiss_kappa([[3, 0], [3, 0], [3, 0]])


def test_fleiss_kappa_validates_rows():
    with pytest.raises(ValueError):
        fleiss_kappa([[2, 1], [3, 1]])
    with pytest.raises(ValueError):
        fleiss_kappa([[2, 1]])


def test_kappa_bounds_random():
    rng = random.Random(11)
    for _ in range(50):
        decisions = [(rng.choice("abc"), rng.choice("abc")) for _ in range(30)]
        k = cohen_kappa(decisions)
        assert -1.0 - 1e-9 <= k <= 1.0 + 1e-9
        table = [
            [rng.randint(0, 3) for _ in range(3)] for _ in range(8)
        ]
        raters = 4
        table = []
        for _ in range(8):
            counts = [0, 0, 0]
            for _ in range(raters):
                counts[rng.randrange(3)] += 1
            table.append(counts)
        try:
            k2 = fleiss_kappa(table)
        except DegenerateMarginals:
            continue
        assert -1.0 - 1e-9 <= k2 <= 1.0 + 1e-9


def test_permutation_invariance():
    rng = random.Random(3)
    decisions = [(rng.choice("ab"), rng.choice("ab")) for _ in range(60)]
    shuffled = decisions[:]
    rng.shuffle(shuffled)
    assert cohen_kappa(decisions) == pytest.approx(cohen_kappa(shuffled), abs=1e-12)

    table = [[2, 1], [1, 2], [3, 0], [0, 3], [2, 1]]
    shuffled_table = table[:]
    rng.shuffle(shuffled_table)
    assert fleiss_kappa(table) == pytest.approx(fleiss_kappa(shuffled_table), abs=1e-12)


def test_label_distribution_counts_and_multilabel_share():
    sets = [{Label.KEYWORD_ECHO, Label.CONTENT_EXPANSION}] * 4 + [{Label.IGNORED}] * 6
    dist = label_distribution(sets)
    assert dist.pairs == 10
    shares = {row.label: row.share for row in dist.rows}
    assert shares[Label.KEYWORD_ECHO] == pytest.approx(0.4)
    assert shares[Label.CONTENT_EXPANSION] == pytest.approx(0.4)
    assert shares[Label.IGNORED] == pytest.approx(0.6)
    assert dist.multi_label_share == pytest.approx(0.4)
    assert dist.total_assignments == 4 * 2 + 6
    assert sum(r.count for r in dist.rows) == dist.total_assignments
    assert all(r.share <= 1.0 for r in dist.rows)


def test_label_distribution_all_single_labeled():
    sets = [{Label.KEYWORD_ECHO}] * 3 + [{Label.IGNORED}] * 2
    dist = label_distribution(sets)
    assert dist.multi_label_share == 0.0
    assert sum(r.share for r in dist.rows) == pytest.approx(1.0)
