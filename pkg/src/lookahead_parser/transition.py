"""Shift-reduce transition system over binarized trees.

A state is ``[stack, buffer front, completed, action count]``.  States are
persistent: the stack is a cons list shared between a state and its
successors, so beam search can branch without copying.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

from .treebank import BinTree, TEMP_SUFFIX

SHIFT, REDUCE_L, REDUCE_R, UNARY, FINISH, IDLE = range(6)
_KIND_NAMES = ["SHIFT", "REDUCE-L", "REDUCE-R", "UNARY", "FINISH", "IDLE"]

MAX_UNARY_CHAIN = 2


class IllegalActionError(ValueError):
    pass


class Action(NamedTuple):
    kind: int
    label: str | None = None

    def __str__(self) -> str:
        name = _KIND_NAMES[self.kind]
        return f"{name}-{self.label}" if self.label is not None else name

    @classmethod
    def parse(cls, text: str) -> "Action":
        for kind in (REDUCE_L, REDUCE_R, UNARY):
            prefix = _KIND_NAMES[kind] + "-"
            if text.startswith(prefix):
                return cls(kind, text[len(prefix):])
        try:
            kind = _KIND_NAMES.index(text)
        except ValueError:
            raise ValueError(f"unknown action {text!r}") from None
        if kind in (REDUCE_L, REDUCE_R, UNARY):
            raise ValueError(f"action {text!r} needs a label")
        return cls(kind)


A_SHIFT = Action(SHIFT)
A_FINISH = Action(FINISH)
A_IDLE = Action(IDLE)


class StackItem:
    """A subtree on the stack with its span ``[start, end)``.

    ``unary`` counts consecutive unary actions on this span.  ``s_done`` and
    ``e_done`` count the real (non-temporary) constituents built inside the
    item that start at ``start`` / end at ``end - 1``; they drive the
    lookahead cursors.
    """

    __slots__ = ("node", "start", "end", "unary", "s_done", "e_done", "atoms")

    def __init__(self, node: BinTree, start: int, end: int, unary: int = 0,
                 s_done: int = 0, e_done: int = 0):
        self.node = node
        self.start = start
        self.end = end
        self.unary = unary
        self.s_done = s_done
        self.e_done = e_done
        self.atoms = None  # feature atoms, filled lazily by parser_model

    @property
    def is_temp(self) -> bool:
        return self.node.label.endswith(TEMP_SUFFIX)

    def __repr__(self) -> str:
        return f"StackItem({self.node}, [{self.start},{self.end}))"


class ParserState:
    __slots__ = ("stack", "depth", "front", "completed", "count", "score",
                 "prev", "action", "feats")

    def __init__(self, stack=None, depth=0, front=0, completed=False, count=0,
                 score=0.0, prev=None, action=None):
        self.stack = stack  # (StackItem, rest) cons cells or None
        self.depth = depth
        self.front = front
        self.completed = completed
        self.count = count
        self.score = score
        self.prev = prev
        self.action = action
        self.feats = None

    @classmethod
    def initial(cls) -> "ParserState":
        return cls()

    def top(self, k: int = 0) -> StackItem | None:
        cell = self.stack
        while k and cell is not None:
            cell = cell[1]
            k -= 1
        return cell[0] if cell is not None else None

    def items(self) -> list[StackItem]:
        """Stack items, bottom first."""
        out = []
        cell = self.stack
        while cell is not None:
            out.append(cell[0])
            cell = cell[1]
        return out[::-1]

    def actions(self) -> list[Action]:
        out = []
        s = self
        while s.prev is not None:
            out.append(s.action)
            s = s.prev
        return out[::-1]

    def history(self) -> list["ParserState"]:
        """Predecessor chain, initial state first (self last)."""
        out = []
        s = self
        while s is not None:
            out.append(s)
            s = s.prev
        return out[::-1]

    def tree(self) -> BinTree:
        if self.depth != 1:
            raise ValueError(f"state has {self.depth} stack items, expected 1")
        return self.stack[0].node

    def __repr__(self) -> str:
        return (f"ParserState(depth={self.depth}, front={self.front}, "
                f"completed={self.completed}, count={self.count}, score={self.score:.3f})")


@dataclass
class Grammar:
    """Label inventories for REDUCE and UNARY actions."""

    reduce_labels: list[str]
    unary_labels: list[str]
    max_unary: int = MAX_UNARY_CHAIN

    def __post_init__(self):
        self.actions: list[Action] = [A_SHIFT, A_FINISH, A_IDLE]
        for lab in self.reduce_labels:
            self.actions.append(Action(REDUCE_L, lab))
            self.actions.append(Action(REDUCE_R, lab))
        for lab in self.unary_labels:
            self.actions.append(Action(UNARY, lab))
        self.index = {a: i for i, a in enumerate(self.actions)}
        self.reduce_ids = [i for i, a in enumerate(self.actions) if a.kind in (REDUCE_L, REDUCE_R)]
        self.reduce_final_ids = [i for i in self.reduce_ids
                                 if not self.actions[i].label.endswith(TEMP_SUFFIX)]
        self.unary_ids = [i for i, a in enumerate(self.actions) if a.kind == UNARY]

    @classmethod
    def from_trees(cls, trees: Iterable[BinTree], max_unary: int = MAX_UNARY_CHAIN) -> "Grammar":
        """Collect label inventories; the unary cap grows to the longest observed chain."""
        reduce_labels, unary_labels = set(), set()
        for t in trees:
            for node in _internal_nodes(t):
                if len(node.children) == 2:
                    reduce_labels.add(node.label)
                else:
                    unary_labels.add(node.label)
                    max_unary = max(max_unary, _chain_length(node))
        return cls(sorted(reduce_labels), sorted(unary_labels), max_unary)

    def __len__(self) -> int:
        return len(self.actions)


def _internal_nodes(t: BinTree):
    stack = [t]
    while stack:
        n = stack.pop()
        if not n.is_leaf:
            yield n
            stack.extend(n.children)


def _chain_length(node: BinTree) -> int:
    k = 0
    while not node.is_leaf and len(node.children) == 1:
        k += 1
        node = node.children[0]
    return k


def min_remaining(state: ParserState, n: int) -> int:
    """Fewest actions needed to complete ``state`` (ignoring IDLE)."""
    if state.completed:
        return 0
    pending = n - state.front
    units = state.depth + pending
    need = pending + units - 1 + 1
    if units == 1:
        top = state.top()
        if top is None or top.node.is_leaf:
            need += 1  # a bare word must be raised before FINISH
    return need


def legal_action_ids(state: ParserState, n: int, grammar: Grammar) -> list[int]:
    if state.completed:
        return [grammar.index[A_IDLE]]
    out = []
    if state.front < n:
        out.append(0)
    if state.depth >= 2:
        if state.front == n and state.depth == 2:
            out.extend(grammar.reduce_final_ids)
        else:
            out.extend(grammar.reduce_ids)
    if state.depth >= 1:
        top = state.stack[0]
        if (not top.is_temp and top.unary < grammar.max_unary
                and state.count + 1 + _min_after_unary(state, n) <= 4 * n):
            out.extend(grammar.unary_ids)
        if (state.front == n and state.depth == 1 and not top.node.is_leaf
                and not top.is_temp):
            out.append(1)
    return out


def _min_after_unary(state: ParserState, n: int) -> int:
    pending = n - state.front
    return pending + (state.depth + pending - 1) + 1


def legal_actions(state: ParserState, n: int, grammar: Grammar) -> list[Action]:
    return [grammar.actions[i] for i in legal_action_ids(state, n, grammar)]


def step(state: ParserState, action: Action, sentence: Sequence[tuple[str, str]],
         score: float = 0.0) -> ParserState:
    """Apply ``action`` without a legality check."""
    kind = action.kind
    count = state.count + 1
    total = state.score + score
    if kind == SHIFT:
        word, pos = sentence[state.front]
        item = StackItem(BinTree.leaf(word, pos), state.front, state.front + 1)
        return ParserState((item, state.stack), state.depth + 1, state.front + 1,
                           False, count, total, state, action)
    if kind == REDUCE_L or kind == REDUCE_R:
        right, (left, rest) = state.stack[0], state.stack[1]
        label = action.label
        real = 0 if label.endswith(TEMP_SUFFIX) else 1
        node = BinTree.node(label, (left.node, right.node), 0 if kind == REDUCE_L else 1)
        item = StackItem(node, left.start, right.end, 0, left.s_done + real, right.e_done + real)
        return ParserState((item, rest), state.depth - 1, state.front, False, count,
                           total, state, action)
    if kind == UNARY:
        child, rest = state.stack
        node = BinTree.node(action.label, (child.node,), 0)
        item = StackItem(node, child.start, child.end, child.unary + 1,
                         child.s_done + 1, child.e_done + 1)
        return ParserState((item, rest), state.depth, state.front, False, count,
                           total, state, action)
    if kind == FINISH:
        return ParserState(state.stack, state.depth, state.front, True, count, total,
                           state, action)
    if kind == IDLE:
        return ParserState(state.stack, state.depth, state.front, True, count, total,
                           state, action)
    raise ValueError(f"bad action kind {kind}")


def apply(state: ParserState, action: Action, sentence: Sequence[tuple[str, str]],
          grammar: Grammar | None = None) -> ParserState:
    """Apply a legal action, returning a new state (``state`` is untouched).

    With ``grammar`` the full legality check (including label inventory) is
    made; without it only the structural premises are checked.
    """
    n = len(sentence)
    if grammar is not None:
        if action not in grammar.index or grammar.index[action] not in legal_action_ids(state, n, grammar):
            raise IllegalActionError(f"{action} is not legal in {state!r}")
    elif not _structurally_legal(state, action, n):
        raise IllegalActionError(f"{action} is not legal in {state!r}")
    return step(state, action, sentence)


def _structurally_legal(state: ParserState, action: Action, n: int) -> bool:
    kind = action.kind
    if state.completed:
        return kind == IDLE
    if kind == SHIFT:
        return state.front < n
    if kind in (REDUCE_L, REDUCE_R):
        return state.depth >= 2 and action.label is not None
    if kind == UNARY:
        return state.depth >= 1 and action.label is not None
    if kind == FINISH:
        return state.front == n and state.depth == 1
    return False


def oracle(tree: BinTree) -> list[Action]:
    """Gold action sequence for a binarized tree, ending in FINISH."""
    out: list[Action] = []
    _oracle(tree, out)
    out.append(A_FINISH)
    return out


def _oracle(node: BinTree, out: list[Action]) -> None:
    if node.is_leaf:
        out.append(A_SHIFT)
    elif len(node.children) == 1:
        _oracle(node.children[0], out)
        out.append(Action(UNARY, node.label))
    else:
        _oracle(node.children[0], out)
        _oracle(node.children[1], out)
        out.append(Action(REDUCE_L if node.head == 0 else REDUCE_R, node.label))


def replay(actions: Iterable[Action], sentence: Sequence[tuple[str, str]],
           grammar: Grammar | None = None) -> ParserState:
    state = ParserState.initial()
    for a in actions:
        state = apply(state, a, sentence, grammar)
    return state
