"""Penn-bracketed treebank I/O and binarization.

Trees are immutable.  A leaf carries ``word`` and ``pos`` (its ``label`` is
the POS tag, so a single-word item has a constituent label like any other).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator

logger = logging.getLogger(__name__)

TEMP_SUFFIX = "*"
BARE_POS = "_"


class PTBParseError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


class TreeStructureError(ValueError):
    pass


@dataclass(frozen=True)
class Tree:
    label: str
    children: tuple["Tree", ...] = ()
    word: str | None = None

    @staticmethod
    def leaf(word: str, pos: str) -> "Tree":
        return Tree(pos, (), word)

    @property
    def is_leaf(self) -> bool:
        return self.word is not None

    @property
    def pos(self) -> str | None:
        return self.label if self.is_leaf else None

    def leaves(self) -> list["Tree"]:
        if self.is_leaf:
            return [self]
        out = []
        for child in self.children:
            out.extend(child.leaves())
        return out

    def words(self) -> list[str]:
        return [leaf.word for leaf in self.leaves()]

    def tagged(self) -> list[tuple[str, str]]:
        return [(leaf.word, leaf.label) for leaf in self.leaves()]

    def spans(self, start: int = 0) -> Iterator[tuple[str, int, int, "Tree"]]:
        """Yield ``(label, start, end, node)`` for internal nodes in preorder."""
        if self.is_leaf:
            return
        yield from _spans(self, start)

    def __str__(self) -> str:
        return write_tree(self)


def _spans(node: Tree, start: int):
    # preorder, computing spans bottom-up lazily via leaf counts
    stack = [(node, start)]
    while stack:
        n, i = stack.pop()
        if n.is_leaf:
            continue
        width = _width(n)
        yield n.label, i, i + width, n
        pos = i
        pending = []
        for child in n.children:
            pending.append((child, pos))
            pos += _width(child)
        stack.extend(reversed(pending))


def _width(node: Tree) -> int:
    if node.is_leaf:
        return 1
    return sum(_width(c) for c in node.children)


@dataclass(frozen=True)
class BinTree:
    """Binarized tree: internal nodes have one or two children.

    ``head`` is 0 or 1 for binary nodes (index of the head child), 0 otherwise.
    """

    label: str
    children: tuple["BinTree", ...] = ()
    word: str | None = None
    head: int = 0
    # cached lexical head (word, pos) and width
    head_word: str = field(default="", compare=False)
    head_pos: str = field(default="", compare=False)

    @staticmethod
    def leaf(word: str, pos: str) -> "BinTree":
        return BinTree(pos, (), word, 0, word, pos)

    @staticmethod
    def node(label: str, children: tuple["BinTree", ...], head: int = 0) -> "BinTree":
        h = children[head]
        return BinTree(label, children, None, head, h.head_word, h.head_pos)

    @property
    def is_leaf(self) -> bool:
        return self.word is not None

    @property
    def is_temp(self) -> bool:
        return self.label.endswith(TEMP_SUFFIX)

    def words(self) -> list[str]:
        if self.is_leaf:
            return [self.word]
        out = []
        for c in self.children:
            out.extend(c.words())
        return out

    def __str__(self) -> str:
        if self.is_leaf:
            return f"({self.label} {self.word})"
        return "(" + self.label + " " + " ".join(str(c) for c in self.children) + ")"


# ---------------------------------------------------------------- reading

def _tokenize(text: str):
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line, col = line + 1, 1
            i += 1
            continue
        if ch.isspace():
            i += 1
            col += 1
            continue
        if ch == "#" and col == 1:
            # comment line
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch in "()":
            yield ch, line, col
            i += 1
            col += 1
            continue
        j = i
        while j < n and not text[j].isspace() and text[j] not in "()":
            j += 1
        yield text[i:j], line, col
        col += j - i
        i = j


def normalize_label(label: str) -> str:
    """Strip functional tags and indices (``NP-SBJ-1`` -> ``NP``, ``NP=2`` -> ``NP``)."""
    if label.startswith("-"):
        return label
    for k, ch in enumerate(label):
        if ch in "-=":
            return label[:k] if k else label
    return label


def _strip(node, keep_labels: bool):
    """Convert a raw nested list to a Tree, removing traces.  Returns None if empty."""
    label, kids = node
    if len(kids) == 1 and isinstance(kids[0], str):
        if label == "-NONE-":
            return None
        return Tree.leaf(kids[0], label)
    out = []
    for kid in kids:
        if isinstance(kid, str):
            out.append(Tree.leaf(kid, BARE_POS))
            continue
        t = _strip(kid, keep_labels)
        if t is not None:
            out.append(t)
    if not out:
        return None
    return Tree(label if keep_labels else normalize_label(label), tuple(out))


def iter_ptb(text: str, keep_labels: bool = False) -> Iterator[Tree]:
    stack: list[tuple[str | None, list]] = []
    start = (1, 1)
    expect_label = False
    for tok, line, col in _tokenize(text):
        if tok == "(":
            if not stack:
                start = (line, col)
            stack.append([None, []])
            expect_label = True
        elif tok == ")":
            if not stack:
                raise PTBParseError("unexpected ')'", line, col)
            label, kids = stack.pop()
            if not kids:
                raise PTBParseError("empty bracket", line, col)
            if label is None:
                label = ""
            expect_label = False
            if stack:
                stack[-1][1].append((label, kids))
                continue
            # a top-level group is complete
            if label == "":
                if len(kids) != 1 or isinstance(kids[0], str):
                    raise PTBParseError("unlabeled bracket must wrap exactly one tree", *start)
                raw = kids[0]
            else:
                raw = (label, kids)
            tree = _strip(raw, keep_labels)
            if tree is None:
                logger.warning("tree at line %d is empty after trace removal; skipped", start[0])
                continue
            yield tree
        else:
            if not stack:
                raise PTBParseError(f"token {tok!r} outside brackets", line, col)
            if expect_label:
                stack[-1][0] = tok
                expect_label = False
            else:
                stack[-1][1].append(tok)
    if stack:
        raise PTBParseError("unbalanced '(' (missing ')')", *start)


def read_ptb(text: str | Iterable[str], keep_labels: bool = False) -> list[Tree]:
    if not isinstance(text, str):
        text = "".join(text)
    return list(iter_ptb(text, keep_labels))


def load_ptb(path, keep_labels: bool = False) -> list[Tree]:
    with open(path, encoding="utf-8") as f:
        return read_ptb(f.read(), keep_labels)


def write_tree(tree: Tree) -> str:
    if tree.is_leaf:
        return f"({tree.label} {tree.word})"
    return "(" + tree.label + " " + " ".join(write_tree(c) for c in tree.children) + ")"


def write_ptb(trees: Iterable[Tree]) -> str:
    return "".join(write_tree(t) + "\n" for t in trees)


def save_ptb(path, trees: Iterable[Tree]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(write_ptb(trees))


# ---------------------------------------------------------------- binarization

# Head-initial categories take their leftmost child as head; everything
# else is right-headed.
DEFAULT_LEFT_HEADED = frozenset(
    "VP PP SBAR SBARQ ADVP PRT WHPP WHADVP CONJP INTJ LST FRAG PRN UCP X".split())


class HeadRules:
    """Head-direction table: ``label -> 'left' | 'right'`` with a default."""

    def __init__(self, table: dict[str, str] | None = None, default: str = "right"):
        if table is None:
            table = {lab: "left" for lab in DEFAULT_LEFT_HEADED}
        self.table = dict(table)
        self.default = default

    @classmethod
    def from_file(cls, path) -> "HeadRules":
        """Read ``LABEL left|right`` lines; ``* left|right`` sets the default."""
        table, default = {}, "right"
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                label, side = line.split()
                if side not in ("left", "right"):
                    raise ValueError(f"bad head direction {side!r} for {label}")
                if label == "*":
                    default = side
                else:
                    table[label] = side
        return cls(table, default)

    def head_index(self, label: str, n_children: int) -> int:
        side = self.table.get(label, self.default)
        return 0 if side == "left" else n_children - 1


DEFAULT_HEAD_RULES = HeadRules()


def binarize(tree: Tree, rules: HeadRules = DEFAULT_HEAD_RULES) -> BinTree:
    """Left-factored binarization with ``X*`` temporary labels.

    ``(NP a b c)`` becomes ``(NP (NP* a b) c)``.  The head child is chosen by
    ``rules`` on the original n-ary node and propagated down the chain.
    """
    if tree.is_leaf:
        return BinTree.leaf(tree.word, tree.label)
    kids = [binarize(c, rules) for c in tree.children]
    if len(kids) == 1:
        return BinTree.node(tree.label, (kids[0],), 0)
    h = rules.head_index(tree.label, len(kids))
    temp = tree.label + TEMP_SUFFIX
    node = kids[0]
    for k in range(1, len(kids)):
        label = tree.label if k == len(kids) - 1 else temp
        node = BinTree.node(label, (node, kids[k]), 1 if h == k else 0)
    return node


def unbinarize(tree: BinTree) -> Tree:
    if tree.is_temp:
        raise TreeStructureError(f"temporary node {tree.label} at the root")
    return _unbin(tree)


def _unbin(node: BinTree) -> Tree:
    if node.is_leaf:
        return Tree.leaf(node.word, node.label)
    kids: list[Tree] = []
    for child in node.children:
        if child.is_temp:
            kids.extend(_unbin(child).children)
        else:
            kids.append(_unbin(child))
    return Tree(node.label, tuple(kids))
