"""Beam-search decoding and early-update perceptron training."""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from typing import Callable, Sequence

from .hierarchy import WordHierarchies
from .parser_model import LinearModel, SentenceContext, extract_features
from .transition import (A_IDLE, Action, Grammar, ParserState, legal_action_ids, oracle,
                         step)
from .treebank import DEFAULT_HEAD_RULES, HeadRules, Tree, binarize, unbinarize

logger = logging.getLogger(__name__)

DEFAULT_BEAM = 16


class DecodeError(RuntimeError):
    pass


def _features(state: ParserState, ctx: SentenceContext, model: LinearModel):
    if state.feats is None:
        state.feats = extract_features(state, ctx, model.lookahead and ctx.pred is not None)
    return state.feats


def _expand(agenda: list[ParserState], ctx: SentenceContext, model: LinearModel, k: int,
            gold_rank: int | None = None, gold_action: int | None = None):
    """One beam step: expand every state with every legal action, keep the top k.

    Candidates are ranked by score with ties broken by insertion order
    (agenda rank, then action index).  When ``gold_rank``/``gold_action``
    are given, also returns the gold successor and whether it survived.
    """
    n, grammar = ctx.n, model.grammar
    cands = []
    for rank, state in enumerate(agenda):
        scores = model.scores(_features(state, ctx, model))
        base = state.score
        for a in legal_action_ids(state, n, grammar):
            cands.append((base + scores[a], rank, a))
    # stable sort on descending score keeps insertion order among ties
    cands.sort(key=lambda c: -c[0])
    actions = grammar.actions
    new = [step(agenda[rank], actions[a], ctx.sentence, total - agenda[rank].score)
           for total, rank, a in cands[:k]]
    if gold_rank is None:
        return new, None, False
    for i, (total, rank, a) in enumerate(cands):
        if rank == gold_rank and a == gold_action:
            if i < k:
                return new, new[i], True
            parent = agenda[rank]
            return new, step(parent, actions[a], ctx.sentence, total - parent.score), False
    raise DecodeError("gold action is not legal; oracle and grammar disagree")


def beam_search(sentence: Sequence[tuple[str, str]], model: LinearModel, k: int = DEFAULT_BEAM,
                pred: Sequence[WordHierarchies] | None = None) -> ParserState:
    """Best completed state for a tagged sentence."""
    if k < 1:
        raise ValueError("beam size must be at least 1")
    if not sentence:
        raise ValueError("cannot parse an empty sentence")
    ctx = SentenceContext(sentence, pred)
    agenda = [ParserState.initial()]
    while not all(s.completed for s in agenda):
        agenda, _, _ = _expand(agenda, ctx, model, k)
        if not agenda:
            raise DecodeError("beam emptied before any state completed")
    return agenda[0]


def beam_parse(sentence: Sequence[tuple[str, str]], model: LinearModel, k: int = DEFAULT_BEAM,
               pred: Sequence[WordHierarchies] | None = None) -> Tree:
    return unbinarize(beam_search(sentence, model, k, pred).tree())


def greedy_parse(sentence, model: LinearModel, pred=None) -> ParserState:
    """Stepwise argmax; ties go to the first legal action, as in the beam."""
    ctx = SentenceContext(sentence, pred)
    state = ParserState.initial()
    while not state.completed:
        scores = model.scores(_features(state, ctx, model))
        best = None
        for a in legal_action_ids(state, ctx.n, model.grammar):
            if best is None or scores[a] > scores[best]:
                best = a
        state = step(state, model.grammar.actions[best], ctx.sentence, scores[best])
    return state


# ---------------------------------------------------------------- training

def _derivation(state: ParserState, ctx, model) -> list[tuple[list[str], int]]:
    index = model.grammar.index
    out = []
    for s in state.history()[1:]:
        out.append((_features(s.prev, ctx, model), index[s.action]))
    return out


@dataclass
class TrainStats:
    updates: int = 0
    early: int = 0
    sentences: int = 0


def train_sentence(tree: Tree, model: LinearModel, k: int = DEFAULT_BEAM,
                   pred: Sequence[WordHierarchies] | None = None, early_update: bool = True,
                   rules: HeadRules = DEFAULT_HEAD_RULES, stats: TrainStats | None = None) -> bool:
    """One online perceptron step.  Returns True if the weights changed."""
    sentence = tree.tagged()
    ctx = SentenceContext(sentence, pred)
    index = model.grammar.index
    gold_actions = [index[a] for a in oracle(binarize(tree, rules))]
    agenda = [ParserState.initial()]
    gold, gold_rank = agenda[0], 0
    t = 0
    while not (gold.completed and all(s.completed for s in agenda)):
        ga = gold_actions[t] if t < len(gold_actions) else index[A_IDLE]
        t += 1
        if gold_rank is not None:
            agenda, gold, in_beam = _expand(agenda, ctx, model, k, gold_rank, ga)
        else:
            # early update disabled and gold already lost: follow it on its own
            agenda = _expand(agenda, ctx, model, k)[0]
            score = model.scores(_features(gold, ctx, model))[ga]
            gold = step(gold, model.grammar.actions[ga], ctx.sentence, score)
            in_beam = False
        if not in_beam:
            if early_update:
                model.update(_derivation(gold, ctx, model), _derivation(agenda[0], ctx, model))
                if stats:
                    stats.updates += 1
                    stats.early += 1
                return True
            gold_rank = None
        else:
            gold_rank = next(i for i, s in enumerate(agenda) if s is gold)
    best = agenda[0]
    if best is not gold:
        model.update(_derivation(gold, ctx, model), _derivation(best, ctx, model))
        if stats:
            stats.updates += 1
        return True
    model.tick()
    return False


def train(treebank: Sequence[Tree], grammar: Grammar, epochs: int = 10, k: int = DEFAULT_BEAM,
          pred: Sequence[Sequence[WordHierarchies]] | None = None, lookahead: bool = True,
          seed: int = 1, shuffle: bool = True, early_update: bool = True,
          dev: Sequence[Tree] | None = None, dev_pred=None,
          rules: HeadRules = DEFAULT_HEAD_RULES,
          evaluate: Callable | None = None, log_train_f1: bool = False,
          hash_bits: int | None = None) -> LinearModel:
    """Train an averaged perceptron; the returned model scores with averaged weights.

    With ``dev`` the averaged weights of the best dev epoch are kept.
    """
    from .evaluation import bracket_f1

    evaluate = evaluate or bracket_f1
    if pred is not None and len(pred) != len(treebank):
        raise ValueError("need one hierarchy prediction per training tree")
    model = LinearModel(grammar, lookahead=lookahead and pred is not None, hash_bits=hash_bits)
    rng = random.Random(seed)
    order = list(range(len(treebank)))
    best = (-1.0, None)
    for epoch in range(1, epochs + 1):
        if shuffle:
            rng.shuffle(order)
        stats = TrainStats()
        for i in order:
            train_sentence(treebank[i], model, k, pred[i] if pred is not None else None,
                           early_update, rules, stats)
            stats.sentences += 1
        msg = f"epoch {epoch}: {stats.updates} updates ({stats.early} early) / {stats.sentences}"
        if log_train_f1 or dev is not None:
            model.use_averaged()
            if log_train_f1:
                out = parse_all([t.tagged() for t in treebank], model, k, pred)
                msg += f", train F1 {evaluate(out, treebank)[2]:.4f}"
            if dev is not None:
                out = parse_all([t.tagged() for t in dev], model, k, dev_pred)
                f1 = evaluate(out, dev)[2]
                msg += f", dev F1 {f1:.4f}"
                if f1 > best[0]:
                    best = (f1, (model.averaged_weights(), epoch))
            model.use_raw()
        logger.info(msg)
        if stats.updates == 0 and dev is None:
            logger.info("no updates in epoch %d; stopping", epoch)
            break
    model.use_averaged()
    if dev is not None and best[1] is not None:
        weights, epoch = best[1]
        model._scoring = weights
        model.meta["best_epoch"] = epoch
        model.meta["dev_f1"] = best[0]
        model.W = _pad(weights, model.W.shape)
        model.totals[:] = 0
        model.last[:] = 0
        model.updates = 0
    return model


def _pad(weights, shape):
    import numpy as np

    out = np.zeros(shape)
    out[:weights.shape[0]] = weights
    return out


def parse_all(sentences, model: LinearModel, k: int = DEFAULT_BEAM, preds=None) -> list[Tree]:
    return [beam_parse(s, model, k, preds[i] if preds is not None else None)
            for i, s in enumerate(sentences)]
