"""Labelled bracketing scores and error breakdowns.

Brackets are ``(label, start, end)`` multisets over internal nodes.
Preterminals are not brackets; the root node is scored (the reader already
drops unlabelled ``( ... )`` wrappers, as the standard evaluator does).
Scores are micro-averaged from summed counts.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

from .hierarchy import prf
from .treebank import Tree

HEADER = "# brackets: labelled (label,start,end) multisets; root scored; preterminals excluded"


class AlignmentError(ValueError):
    pass


def brackets(tree: Tree) -> Counter:
    return Counter((label, i, j) for label, i, j, _ in tree.spans())


@dataclass
class Counts:
    match: int = 0
    pred: int = 0
    gold: int = 0

    def add(self, match: int, pred: int, gold: int) -> None:
        self.match += match
        self.pred += pred
        self.gold += gold

    def prf(self) -> tuple[float, float, float]:
        return prf(self.match, self.pred, self.gold)


def _pairs(pred: Sequence[Tree], gold: Sequence[Tree]):
    if len(pred) != len(gold):
        raise AlignmentError(f"{len(pred)} predicted trees for {len(gold)} gold trees")
    for k, (p, g) in enumerate(zip(pred, gold)):
        if p.words() != g.words():
            raise AlignmentError(f"sentence {k + 1}: leaves differ "
                                 f"({' '.join(p.words())!r} vs {' '.join(g.words())!r})")
        yield k, p, g


def bracket_counts(pred: Sequence[Tree], gold: Sequence[Tree]) -> Counts:
    total = Counts()
    for _, p, g in _pairs(pred, gold):
        bp, bg = brackets(p), brackets(g)
        total.add(sum((bp & bg).values()), sum(bp.values()), sum(bg.values()))
    return total


def bracket_f1(pred: Sequence[Tree], gold: Sequence[Tree]) -> tuple[float, float, float]:
    """Corpus-level (LP, LR, F1)."""
    return bracket_counts(pred, gold).prf()


def length_bin(n_words: int, width: int = 10) -> int:
    """Sentence-length bin: lengths in [0, 10) fall in bin 10, [10, 20) in 20, ..."""
    return width * (n_words // width + 1)


def breakdown(pred: Sequence[Tree], gold: Sequence[Tree]) -> dict[str, dict]:
    """Counts by phrase label, by span length (words covered), by sentence-length bin."""
    by_label: dict[str, Counts] = defaultdict(Counts)
    by_span: dict[int, Counts] = defaultdict(Counts)
    by_sent: dict[int, Counts] = defaultdict(Counts)
    for _, p, g in _pairs(pred, gold):
        bp, bg = brackets(p), brackets(g)
        both = bp & bg
        for table, key in ((by_label, lambda b: b[0]), (by_span, lambda b: b[2] - b[1])):
            for b, c in bp.items():
                table[key(b)].pred += c
            for b, c in bg.items():
                table[key(b)].gold += c
            for b, c in both.items():
                table[key(b)].match += c
        by_sent[length_bin(len(g.words()))].add(
            sum(both.values()), sum(bp.values()), sum(bg.values()))
    return {"label": dict(by_label), "span": dict(by_span), "sentence": dict(by_sent)}


def format_report(pred: Sequence[Tree], gold: Sequence[Tree]) -> str:
    total = bracket_counts(pred, gold)
    lp, lr, f1 = total.prf()
    lines = [HEADER,
             f"sentences\t{len(gold)}",
             f"brackets\tmatched={total.match}\tpred={total.pred}\tgold={total.gold}",
             f"LP\t{lp * 100:.2f}", f"LR\t{lr * 100:.2f}", f"F1\t{f1 * 100:.2f}"]
    return "\n".join(lines) + "\n"


def breakdown_rows(pred: Sequence[Tree], gold: Sequence[Tree]) -> list[tuple]:
    """Tabular form: ``(table, key, matched, pred, gold, LP, LR, F1)``."""
    tables = breakdown(pred, gold)
    rows = []
    for name in ("label", "span", "sentence"):
        for key in sorted(tables[name], key=lambda x: (isinstance(x, str), x)):
            c = tables[name][key]
            rows.append((name, key, c.match, c.pred, c.gold, *c.prf()))
    return rows


def format_table(rows: Iterable[tuple]) -> str:
    out = ["table\tkey\tmatched\tpred\tgold\tLP\tLR\tF1"]
    for name, key, m, p, g, lp, lr, f1 in rows:
        out.append(f"{name}\t{key}\t{m}\t{p}\t{g}\t{lp:.4f}\t{lr:.4f}\t{f1:.4f}")
    return "\n".join(out) + "\n"
