"""Seeded PCFG-style generator of small English-like treebanks.

Words are built from syllables with part-of-speech specific suffixes
(``-ion`` nouns, ``-ed`` verbs, ``-ous`` adjectives, ...), so character
information is predictive.  The grammar has NP/VP/PP/S/SBAR nesting, NP and
S coordination, PP attachment to nouns or verbs and subjectless clauses
that give unary chains.
"""

from __future__ import annotations

import random

from .treebank import Tree

_ONSETS = "b c d f g h k l m n p r s t v z br cr dr gr pl st tr sk".split()
_VOWELS = "a e i o u ai ea ou".split()
_CODAS = ["", "", "n", "r", "l", "m", "s", "t"]

_CLOSED = {
    "DT": ["the", "a", "this", "every", "some"],
    "IN": ["on", "in", "with", "near", "of", "under"],
    "CC": ["and", "or"],
    "PRP": ["he", "she", "they", "it"],
    "TO": ["to"],
    "COMP": ["that", "because", "while"],
}


def _stem(rng: random.Random) -> str:
    return "".join(rng.choice(_ONSETS) + rng.choice(_VOWELS) + rng.choice(_CODAS)
                   for _ in range(rng.choice((1, 2, 2))))


class _Lexicon:
    def __init__(self, rng: random.Random, nouns=60, verbs=30, adjs=20, names=15):
        def stems(k):
            out = []
            while len(out) < k:
                s = _stem(rng)
                if s not in out:
                    out.append(s)
            return out

        self.nouns = stems(nouns)
        self.noun_suffix = [rng.choice(["ion", "or", "ist", "ment"]) for _ in self.nouns]
        self.verbs = stems(verbs)
        # the first third of the verbs take a PP complement
        self.pp_verbs = set(range(verbs // 3))
        self.adjs = [s + rng.choice(["ous", "ive", "al"]) for s in stems(adjs)]
        self.names = [s.capitalize() for s in stems(names)]

    def pick(self, rng, items):
        # Zipf-like skew so that some words are frequent and some rare
        k = min(int(rng.paretovariate(1.2)) - 1, len(items) - 1)
        return items[k] if rng.random() < 0.7 else rng.choice(items)


def _leaf(word, pos):
    return Tree.leaf(word, pos)


class _Generator:
    def __init__(self, rng: random.Random, lex: _Lexicon):
        self.rng = rng
        self.lex = lex

    def noun(self, plural=False):
        i = self.lex.nouns.index(self.lex.pick(self.rng, self.lex.nouns))
        word = self.lex.nouns[i] + self.lex.noun_suffix[i]
        return _leaf(word + "s", "NNS") if plural else _leaf(word, "NN")

    def closed(self, pos, tag=None):
        return _leaf(self.rng.choice(_CLOSED[pos]), tag or pos)

    def np(self, depth):
        r = self.rng.random()
        if r < 0.12:
            return Tree("NP", (self.closed("PRP"),))
        if r < 0.22:
            return Tree("NP", (_leaf(self.lex.pick(self.rng, self.lex.names), "NNP"),))
        kids = [self.closed("DT")]
        if self.rng.random() < 0.3:
            if self.rng.random() < 0.25:
                kids.append(Tree("ADJP", (_leaf(self.rng.choice(self.lex.adjs), "JJ"),
                                          self.closed("CC"),
                                          _leaf(self.rng.choice(self.lex.adjs), "JJ"))))
            else:
                kids.append(_leaf(self.lex.pick(self.rng, self.lex.adjs), "JJ"))
        kids.append(self.noun(plural=self.rng.random() < 0.3))
        base = Tree("NP", tuple(kids))
        r = self.rng.random()
        if depth > 0 and r < 0.25:
            return Tree("NP", (base, self.pp(depth - 1)))
        if depth > 0 and r < 0.32:
            return Tree("NP", (base, self.closed("CC"), self.np(depth - 1)))
        return base

    def pp(self, depth):
        return Tree("PP", (self.closed("IN"), self.np(depth)))

    def verb(self, form):
        i = self.lex.verbs.index(self.lex.pick(self.rng, self.lex.verbs))
        stem = self.lex.verbs[i]
        suffix = {"VBD": "ed", "VBZ": "es", "VBG": "ing", "VB": ""}[form]
        return _leaf(stem + suffix, form), i in self.lex.pp_verbs

    def vp(self, depth, form=None):
        form = form or self.rng.choice(["VBD", "VBD", "VBZ"])
        v, takes_pp = self.verb(form)
        r = self.rng.random()
        if depth <= 0 or r < 0.15:
            return Tree("VP", (v,))
        if r < 0.55:
            kids = [v, self.np(depth - 1)]
            if takes_pp:
                kids.append(self.pp(depth - 1))
            return Tree("VP", tuple(kids))
        if r < 0.7:
            return Tree("VP", (v, Tree("SBAR", (self.closed("COMP", "IN"), self.s(depth - 1)))))
        if r < 0.85:
            # subjectless infinitival: S -> VP -> TO VP
            inner = self.vp(depth - 2, "VB")
            return Tree("VP", (v, Tree("S", (Tree("VP", (self.closed("TO"), inner)),))))
        # gerund complement: S -> VP -> VBG gives a unary chain
        g, _ = self.verb("VBG")
        return Tree("VP", (v, self.np(depth - 1), Tree("S", (Tree("VP", (g,)),))))

    def s(self, depth):
        clause = Tree("S", (self.np(depth - 1), self.vp(depth - 1)))
        if depth > 1 and self.rng.random() < 0.12:
            return Tree("S", (clause, self.closed("CC"), self.s(depth - 1)))
        return clause


def synth_treebank(seed: int, n: int, min_words: int = 5, max_words: int = 40,
                   depth: int = 4) -> list[Tree]:
    """``n`` trees of ``min_words``..``max_words`` words, identical for equal seeds."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = random.Random(seed)
    gen = _Generator(rng, _Lexicon(rng))
    out = []
    while len(out) < n:
        t = gen.s(depth)
        if min_words <= len(t.leaves()) <= max_words:
            out.append(t)
    return out
