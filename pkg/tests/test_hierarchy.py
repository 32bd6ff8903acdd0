import random
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from lookahead_parser.hierarchy import (E_TYPE, NULL, S_TYPE, ConstituentHierarchy,
                                        HierarchyCursor, WordHierarchies,
                                        corpus_hierarchy_counts, exact_match,
                                        extract_hierarchies, hierarchy_f1, lookahead_value,
                                        next_level, read_hierarchies, write_hierarchies)
from lookahead_parser.transition import ParserState, oracle, step
from lookahead_parser.treebank import binarize, read_ptb

from conftest import random_tree

DATA = Path(__file__).parent / "data"


def H(htype, text):
    return ConstituentHierarchy.parse(htype, text)


def test_example_golden_file(book):
    got = write_hierarchies([(book.words(), extract_hierarchies(book))])
    assert got == (DATA / "book.hier").read_text()


def test_example_named_words(book):
    hs = extract_hierarchies(book)
    assert hs[0].s.labels == ("S", "NP")
    assert hs[-1].e.labels == ("S", "VP", "NP", "PP", "NP")
    assert hs[2] == WordHierarchies(H(S_TYPE, "-"), H(E_TYPE, "-"))  # "and"


def test_hierarchy_rejects_temp_labels():
    with pytest.raises(ValueError):
        ConstituentHierarchy(S_TYPE, ("NP*",))
    with pytest.raises(ValueError):
        ConstituentHierarchy("x", ())


def test_f1_worked_example():
    p, r, f = hierarchy_f1(H(S_TYPE, "S>S>VP>NP"), H(S_TYPE, "S>NP>NP"))
    assert p == pytest.approx(0.5) and r == pytest.approx(2 / 3) and f == pytest.approx(4 / 7)


def test_f1_partial_and_identity():
    assert hierarchy_f1(H(S_TYPE, "NP"), H(S_TYPE, "S>NP")) == pytest.approx((1, 0.5, 2 / 3))
    assert hierarchy_f1(H(E_TYPE, "S>VP"), H(E_TYPE, "S>VP")) == (1, 1, 1)
    assert hierarchy_f1(H(E_TYPE, "-"), H(E_TYPE, "-")) == (1, 1, 1)
    with pytest.raises(ValueError):
        hierarchy_f1(H(E_TYPE, "-"), H(S_TYPE, "-"))


def test_next_level_and_cursor():
    labels = ("S", "NP")
    assert [next_level(labels, k) for k in range(3)] == ["NP", "S", NULL]
    c = HierarchyCursor(H(S_TYPE, "S>NP"), consumed=5)
    assert c.consumed == 2 and c.next_label() == NULL


def _book_state(book, n_actions):
    acts = oracle(binarize(book))
    s = ParserState.initial()
    for a in acts[:n_actions]:
        s = step(s, a, book.tagged())
    return s


def test_cursor_cases_on_example(book):
    gold = extract_hierarchies(book)
    # (a) "The" on the stack: s-value NP, e-value NULL
    s = _book_state(book, 1)
    item = s.top()
    assert lookahead_value(item, gold, S_TYPE) == "NP"
    assert lookahead_value(item, gold, E_TYPE) == NULL
    # a buffer word that closes ADJP ("present")
    assert lookahead_value(3, gold, E_TYPE) == "ADJP"
    # (b) once the NP "The past and present students" is built, s-value is S
    acts = oracle(binarize(book))
    k = next(i for i, a in enumerate(acts) if str(a) == "REDUCE-R-NP") + 1
    s = _book_state(book, k)
    assert (s.top().start, s.top().end) == (0, 5)
    assert lookahead_value(s.top(), gold, S_TYPE) == "S"


def test_io_roundtrip(tmp_path):
    data = read_hierarchies((DATA / "book.hier").read_text())
    assert write_hierarchies(data) == (DATA / "book.hier").read_text()
    with pytest.raises(ValueError):
        read_hierarchies("word\tS>NP\te:-\n")


def test_corpus_counts_and_exact(book):
    gold = [extract_hierarchies(book)]
    counts = corpus_hierarchy_counts(gold, gold)
    assert counts[S_TYPE].prf() == (1, 1, 1)
    assert exact_match(gold, gold) == 1.0
    wrong = [[WordHierarchies(H(S_TYPE, "-"), h.e) for h in gold[0]]]
    assert exact_match(wrong, gold) == pytest.approx(5 / 11)  # and, present, students, book, table


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**9))
def test_counts_equal_constituents(seed):
    t = random_tree(random.Random(seed), max_words=15)
    hs = extract_hierarchies(t)
    n_const = sum(1 for _ in t.spans())
    assert sum(len(h.s) for h in hs) == n_const == sum(len(h.e) for h in hs)


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**9))
def test_gold_replay_consumes_matching_labels(seed):
    """Under gold replay, each real constituent is the one its cursors announced."""
    t = random_tree(random.Random(seed), max_words=12)
    gold = extract_hierarchies(t)
    s = ParserState.initial()
    for a in oracle(binarize(t)):
        if a.label is not None and not a.label.endswith("*"):
            left = s.top() if a.kind == 3 else s.top(1)
            right = s.top()
            assert lookahead_value(left, gold, S_TYPE) == a.label
            assert lookahead_value(right, gold, E_TYPE) == a.label
        s = step(s, a, t.tagged())
    top = s.top()
    assert lookahead_value(top, gold, S_TYPE) == NULL
    assert lookahead_value(top, gold, E_TYPE) == NULL
