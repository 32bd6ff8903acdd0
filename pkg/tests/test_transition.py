import random

import pytest
from hypothesis import given, settings, strategies as st

from lookahead_parser.transition import (A_FINISH, A_IDLE, A_SHIFT, REDUCE_L, REDUCE_R,
                                         UNARY, Action, Grammar, IllegalActionError,
                                         ParserState, apply, legal_actions, min_remaining,
                                         oracle, replay)
from lookahead_parser.treebank import binarize, read_ptb, unbinarize

from conftest import TOY, random_tree

SENT = [("They", "PRP"), ("like", "VBP"), ("apples", "NNS")]
G = Grammar(["NP", "S", "VP", "VP*"], ["NP", "S"])


def test_action_text_roundtrip():
    for a in G.actions:
        assert Action.parse(str(a)) == a
    assert str(Action(REDUCE_L, "NP")) == "REDUCE-L-NP"
    with pytest.raises(ValueError):
        Action.parse("REDUCE-L")
    with pytest.raises(ValueError):
        Action.parse("JUMP")


def test_initial_state_only_shift():
    assert legal_actions(ParserState.initial(), 3, G) == [A_SHIFT]


def test_completed_state_only_idle():
    s = replay(oracle(binarize(read_ptb(TOY)[0])), SENT)
    assert s.completed
    assert legal_actions(s, 3, G) == [A_IDLE]


def test_single_item_buffer_empty():
    s = replay([A_SHIFT, Action(UNARY, "NP")], SENT[:1])
    got = set(legal_actions(s, 1, G))
    # one unary already on this span; the cap of 2 still allows one more
    assert got == {Action(UNARY, "NP"), Action(UNARY, "S"), A_FINISH}


def test_unary_cap():
    g = Grammar([], ["NP"], max_unary=2)
    s = replay([A_SHIFT, Action(UNARY, "NP"), Action(UNARY, "NP")], SENT[:1])
    assert legal_actions(s, 1, g) == [A_FINISH]


def test_finish_needs_a_phrase():
    s = replay([A_SHIFT], SENT[:1])
    assert A_FINISH not in legal_actions(s, 1, G)


def test_temp_label_cannot_become_root():
    s = replay([A_SHIFT, A_SHIFT], SENT[:2])
    acts = legal_actions(s, 2, G)
    assert Action(REDUCE_L, "VP*") not in acts and Action(REDUCE_L, "VP") in acts
    s3 = replay([A_SHIFT, A_SHIFT], SENT)
    assert Action(REDUCE_L, "VP*") in legal_actions(s3, 3, G)


def test_toy_derivation():
    acts = [A_SHIFT, A_SHIFT, A_SHIFT, Action(REDUCE_L, "VP"), Action(REDUCE_R, "S"), A_FINISH]
    assert oracle(binarize(read_ptb(TOY)[0])) == acts
    s = replay(acts, SENT, G)
    assert str(unbinarize(s.tree())) == TOY
    assert s.tree().head_word == "like"


def test_apply_idle_and_shift():
    s0 = ParserState.initial()
    s1 = apply(s0, A_SHIFT, SENT)
    assert (s1.front, s1.depth, s1.count) == (1, 1, 1)
    assert (s0.front, s0.depth, s0.count) == (0, 0, 0)  # input untouched
    done = replay(oracle(binarize(read_ptb(TOY)[0])), SENT)
    idle = apply(done, A_IDLE, SENT)
    assert idle.stack is done.stack and idle.front == done.front
    assert idle.count == done.count + 1


def test_illegal_action_raises():
    with pytest.raises(IllegalActionError):
        apply(ParserState.initial(), Action(REDUCE_L, "NP"), SENT)
    with pytest.raises(IllegalActionError):
        apply(ParserState.initial(), A_FINISH, SENT, G)
    with pytest.raises(IllegalActionError):
        apply(ParserState.initial(), Action(UNARY, "ADJP"), SENT, G)


def test_single_word_oracle():
    t = read_ptb("(NP (NN w))")[0]
    assert oracle(binarize(t)) == [A_SHIFT, Action(UNARY, "NP"), A_FINISH]


def test_grammar_from_trees_grows_unary_cap():
    t = read_ptb("(S (VP (NP (NN a))))")[0]
    g = Grammar.from_trees([binarize(t)])
    assert g.max_unary == 3
    assert g.unary_labels == ["NP", "S", "VP"]


def test_min_remaining_matches_oracle():
    t = read_ptb("(S (NP (DT a) (NN b)) (VP (VBD c)))")[0]
    acts = oracle(binarize(t))
    s = ParserState.initial()
    for k, a in enumerate(acts):
        assert min_remaining(s, 3) <= len(acts) - k
        s = apply(s, a, t.tagged())


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**9))
def test_oracle_roundtrip_property(seed):
    t = random_tree(random.Random(seed), max_words=15)
    b = binarize(t)
    g = Grammar.from_trees([b])
    acts = oracle(b)
    n = len(t.words())
    assert 2 * n <= len(acts) <= 4 * n
    s = replay(acts, t.tagged(), g)
    assert s.completed and s.count == len(acts)
    assert s.tree() == b
    assert unbinarize(s.tree()) == t


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**9))
def test_random_walks_stay_within_bound(seed):
    """Any sequence of legal actions completes within 4n steps."""
    rng = random.Random(seed)
    n = rng.randint(1, 8)
    sent = [(f"w{i}", "NN") for i in range(n)]
    s = ParserState.initial()
    while not s.completed:
        s = apply(s, rng.choice(legal_actions(s, n, G)), sent, G)
        assert s.count <= 4 * n
    assert 2 * n <= s.count <= 4 * n
    assert s.tree().words() == [w for w, _ in sent]
