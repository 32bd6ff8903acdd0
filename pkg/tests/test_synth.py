import pytest

from lookahead_parser.hierarchy import extract_hierarchies
from lookahead_parser.synth import synth_treebank
from lookahead_parser.transition import Grammar, replay, oracle
from lookahead_parser.treebank import binarize, read_ptb, unbinarize, write_ptb


def test_same_seed_same_corpus():
    assert synth_treebank(4, 30) == synth_treebank(4, 30)
    assert synth_treebank(4, 30) != synth_treebank(5, 30)


def test_invariants_and_roundtrip():
    trees = synth_treebank(1, 200)
    assert read_ptb(write_ptb(trees)) == trees
    g = Grammar.from_trees(binarize(t) for t in trees)
    for t in trees:
        n = len(t.words())
        assert 5 <= n <= 40
        acts = oracle(binarize(t))
        assert 2 * n <= len(acts) <= 4 * n
        assert unbinarize(replay(acts, t.tagged(), g).tree()) == t


def test_structure_variety():
    trees = synth_treebank(1, 200)
    depths = [max(len(h.s), len(h.e)) for t in trees for h in extract_hierarchies(t)]
    assert max(depths) >= 4
    labels = {lab for t in trees for lab, *_ in t.spans()}
    assert {"NP", "VP", "PP", "S", "SBAR"} <= labels
    text = write_ptb(trees)
    assert "(S (VP (VBG" in text  # unary chain
    words = {w for t in trees for w in t.words()}
    assert any(w.endswith("ion") for w in words) and any(w.endswith("ed") for w in words)


def test_bad_n():
    with pytest.raises(ValueError):
        synth_treebank(1, 0)
