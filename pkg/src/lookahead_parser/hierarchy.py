"""Per-word constituent hierarchies and their lookahead values.

A word's s-type hierarchy lists the labels of every constituent starting at
the word, outermost first; the e-type hierarchy does the same for the
constituents ending at it.  Parsing consumes a hierarchy from the innermost
end as constituents are built.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

from .treebank import Tree

S_TYPE = "s"
E_TYPE = "e"
MAX_DEPTH = 32

# lookahead value for a present item whose hierarchy is empty or used up
NULL = "NULL"


@dataclass(frozen=True)
class ConstituentHierarchy:
    htype: str
    labels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.htype not in (S_TYPE, E_TYPE):
            raise ValueError(f"hierarchy type must be 's' or 'e', got {self.htype!r}")
        for lab in self.labels:
            if lab.endswith("*"):
                raise ValueError(f"temporary label {lab!r} in a hierarchy")

    def __len__(self) -> int:
        return len(self.labels)

    def bottom_up(self) -> tuple[str, ...]:
        return self.labels[::-1]

    def __str__(self) -> str:
        return ">".join(self.labels) if self.labels else "-"

    @classmethod
    def parse(cls, htype: str, text: str) -> "ConstituentHierarchy":
        if text == "-":
            return cls(htype, ())
        return cls(htype, tuple(text.split(">")))


class WordHierarchies(NamedTuple):
    s: ConstituentHierarchy
    e: ConstituentHierarchy


@dataclass
class HierarchyCursor:
    hierarchy: ConstituentHierarchy
    consumed: int = 0

    def __post_init__(self):
        if not 0 <= self.consumed <= len(self.hierarchy):
            # built constituents can outnumber a (wrong) prediction; clamp
            self.consumed = min(max(self.consumed, 0), len(self.hierarchy))

    def next_label(self) -> str:
        return next_level(self.hierarchy.labels, self.consumed)


def next_level(labels: Sequence[str], consumed: int) -> str:
    """Label ``consumed`` levels up from the innermost end, or NULL."""
    k = len(labels) - 1 - consumed
    return labels[k] if k >= 0 else NULL


def extract_hierarchies(tree: Tree) -> list[WordHierarchies]:
    n = len(tree.leaves())
    starts: list[list[str]] = [[] for _ in range(n)]
    ends: list[list[str]] = [[] for _ in range(n)]
    # preorder visits outer constituents first, giving top-down order
    for label, i, j, _ in tree.spans():
        starts[i].append(label)
        ends[j - 1].append(label)
    return [WordHierarchies(ConstituentHierarchy(S_TYPE, tuple(s)),
                            ConstituentHierarchy(E_TYPE, tuple(e)))
            for s, e in zip(starts, ends)]


def lookahead_value(item, pred: Sequence[WordHierarchies], which: str) -> str:
    """Next hierarchy level for a stack item or a buffer word.

    ``item`` is a :class:`~lookahead_parser.transition.StackItem` or an int
    (index of a buffer word, nothing consumed yet).
    """
    if isinstance(item, int):
        h = pred[item].s if which == S_TYPE else pred[item].e
        return next_level(h.labels, 0)
    if which == S_TYPE:
        return next_level(pred[item.start].s.labels, item.s_done)
    return next_level(pred[item.end - 1].e.labels, item.e_done)


# ---------------------------------------------------------------- metric

class HierarchyCounts(NamedTuple):
    correct: int
    predicted: int
    gold: int

    def __add__(self, other):
        return HierarchyCounts(self.correct + other.correct,
                               self.predicted + other.predicted,
                               self.gold + other.gold)

    def prf(self) -> tuple[float, float, float]:
        return prf(self.correct, self.predicted, self.gold)


def prf(correct: int, predicted: int, gold: int) -> tuple[float, float, float]:
    if predicted == 0 and gold == 0:
        return 1.0, 1.0, 1.0
    p = correct / predicted if predicted else 0.0
    r = correct / gold if gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def hierarchy_counts(pred: ConstituentHierarchy, gold: ConstituentHierarchy) -> HierarchyCounts:
    """Positional match counted bottom-up (index 0 = innermost label)."""
    if pred.htype != gold.htype:
        raise ValueError(f"comparing {pred.htype}-type with {gold.htype}-type hierarchy")
    correct = sum(1 for a, b in zip(pred.bottom_up(), gold.bottom_up()) if a == b)
    return HierarchyCounts(correct, len(pred), len(gold))


def hierarchy_f1(pred: ConstituentHierarchy, gold: ConstituentHierarchy) -> tuple[float, float, float]:
    return hierarchy_counts(pred, gold).prf()


def corpus_hierarchy_counts(pred: Iterable[Sequence[WordHierarchies]],
                            gold: Iterable[Sequence[WordHierarchies]]) -> dict[str, HierarchyCounts]:
    totals = {S_TYPE: HierarchyCounts(0, 0, 0), E_TYPE: HierarchyCounts(0, 0, 0)}
    for ps, gs in zip(pred, gold, strict=True):
        if len(ps) != len(gs):
            raise ValueError(f"sentence length mismatch: {len(ps)} vs {len(gs)}")
        for p, g in zip(ps, gs):
            totals[S_TYPE] += hierarchy_counts(p.s, g.s)
            totals[E_TYPE] += hierarchy_counts(p.e, g.e)
    return totals


def exact_match(pred: Iterable[Sequence[WordHierarchies]],
                gold: Iterable[Sequence[WordHierarchies]]) -> float:
    """Fraction of words whose s- and e-hierarchies are both exactly right."""
    hit = total = 0
    for ps, gs in zip(pred, gold, strict=True):
        for p, g in zip(ps, gs, strict=True):
            total += 1
            hit += (p.s.labels == g.s.labels and p.e.labels == g.e.labels)
    return hit / total if total else 1.0


# ---------------------------------------------------------------- file format

def write_hierarchies(sentences: Iterable[tuple[Sequence[str], Sequence[WordHierarchies]]]) -> str:
    """``word TAB s:S>NP TAB e:-`` per token, blank line between sentences."""
    lines = []
    for words, hs in sentences:
        for w, h in zip(words, hs, strict=True):
            lines.append(f"{w}\ts:{h.s}\te:{h.e}")
        lines.append("")
    return "\n".join(lines) + ("\n" if lines else "")


def read_hierarchies(text: str) -> list[tuple[list[str], list[WordHierarchies]]]:
    out = []
    words: list[str] = []
    hs: list[WordHierarchies] = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            if words:
                out.append((words, hs))
                words, hs = [], []
            continue
        parts = line.split("\t")
        if len(parts) != 3 or not parts[1].startswith("s:") or not parts[2].startswith("e:"):
            raise ValueError(f"line {lineno}: expected 'word<TAB>s:...<TAB>e:...', got {line!r}")
        words.append(parts[0])
        hs.append(WordHierarchies(ConstituentHierarchy.parse(S_TYPE, parts[1][2:]),
                                  ConstituentHierarchy.parse(E_TYPE, parts[2][2:])))
    if words:
        out.append((words, hs))
    return out


def load_hierarchies(path) -> list[tuple[list[str], list[WordHierarchies]]]:
    with open(path, encoding="utf-8") as f:
        return read_hierarchies(f.read())


def save_hierarchies(path, sentences) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(write_hierarchies(sentences))
