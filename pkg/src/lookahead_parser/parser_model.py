"""Feature templates and the averaged-perceptron linear model.

Features are strings ``template=atom|atom``; each feature owns one weight
per action, so a state is scored for every action with a single gather and
sum over a dense ``features x actions`` matrix.
"""

from __future__ import annotations

import io
import json
import re
import struct
import zlib
from typing import Sequence

import numpy as np

from .hierarchy import E_TYPE, S_TYPE, WordHierarchies, next_level
from .transition import Action, Grammar, ParserState, StackItem

NONE = "#NONE#"

UNIGRAM = ("s0tc s0wc s1tc s1wc s2tc s2wc s3tc s3wc q0wt q1wt q2wt q3wt "
           "s0lwc s0rwc s0uwc s1lwc s1rwc s1uwc").split()
BIGRAM = ("s0ws1w s0ws1c s0cs1w s0cs1c s0wq0w s0wq0t s0cq0w s0cq0t "
          "q0wq1w q0wq1t q0tq1w q0tq1t s1wq0w s1wq0t s1cq0w s1cq0t").split()
TRIGRAM = ("s0cs1cs2c s0ws1cs2c s0cs1wq0t s0cs1cs2w s0cs1cq0t s0ws1cq0t "
           "s0cs1ws2c s0cs1cq0w").split()
EXTENDED = ("s0llwc s0lrwc s0luwc s0rlwc s0rrwc s0ruwc s0ulwc s0urwc s0uuwc "
            "s1llwc s1lrwc s1luwc s1rlwc s1rrwc s1ruwc").split()
BASELINE_TEMPLATES = UNIGRAM + BIGRAM + TRIGRAM + EXTENDED
LOOKAHEAD_TEMPLATES = "s0cgs s0cge s1cgs s1cge q0cgs q0cge q1cgs q1cge".split()

# navigation paths below a stack item; each contributes (w, c) atoms
_PATHS = ["l", "r", "u", "ll", "lr", "lu", "rl", "rr", "ru", "ul", "ur", "uu"]
_ITEM_ATOMS = ["w", "t", "c"] + [p + a for p in _PATHS for a in ("w", "c")]
_ATOM_NAMES = ([f"s{k}{a}" for k in range(4) for a in _ITEM_ATOMS]
               + [f"q{k}{a}" for k in range(4) for a in ("w", "t")])
_ATOM_POS = {name: i for i, name in enumerate(_ATOM_NAMES)}
_NONE_ITEM = (NONE,) * len(_ITEM_ATOMS)
_SEP = "\x00"


def _template_atoms(template: str) -> list[str]:
    atoms = []
    for item, path, attrs in re.findall(r"([sq]\d)([lru]*)([wtc]+)", template):
        atoms.extend(item + path + a for a in attrs)
    if "".join(atoms) == "" or not all(a in _ATOM_POS for a in atoms):
        raise ValueError(f"cannot parse template {template!r}")
    return atoms


def _build_format(templates: Sequence[str]) -> str:
    parts = []
    for tpl in templates:
        atoms = _template_atoms(tpl)
        parts.append(tpl + "=" + "|".join("{%d}" % _ATOM_POS[a] for a in atoms))
    return _SEP.join(parts)


_BASELINE_FMT = _build_format(BASELINE_TEMPLATES)


def _child(node, path_char):
    if node is None or node.is_leaf:
        return None
    kids = node.children
    if path_char == "u":
        return kids[0] if len(kids) == 1 else None
    if len(kids) != 2:
        return None
    return kids[0] if path_char == "l" else kids[1]


def item_atoms(item: StackItem) -> tuple[str, ...]:
    if item.atoms is None:
        node = item.node
        out = [node.head_word, node.head_pos, node.label]
        for path in _PATHS:
            sub = node
            for ch in path:
                sub = _child(sub, ch)
            if sub is None:
                out.extend((NONE, NONE))
            else:
                out.extend((sub.head_word, sub.label))
        item.atoms = tuple(out)
    return item.atoms


class SentenceContext:
    """Per-sentence data shared by every state: buffer atoms and predictions."""

    def __init__(self, sentence: Sequence[tuple[str, str]],
                 pred: Sequence[WordHierarchies] | None = None):
        self.sentence = list(sentence)
        self.n = len(self.sentence)
        self.pred = pred
        if pred is not None and len(pred) != self.n:
            raise ValueError(f"{len(pred)} hierarchies for {self.n} words")
        padded = [a for w, t in self.sentence for a in (w, t)] + [NONE] * 8
        self.queue_atoms = [tuple(padded[2 * i:2 * i + 8]) for i in range(self.n + 1)]
        if pred is not None:
            vals = [(next_level(h.s.labels, 0), next_level(h.e.labels, 0)) for h in pred]
            vals += [(NONE, NONE), (NONE, NONE)]
            self.queue_look = [vals[i] + vals[i + 1] for i in range(self.n + 1)]


def _stack_atoms(state: ParserState) -> tuple[str, ...]:
    out = ()
    cell = state.stack
    for _ in range(4):
        if cell is None:
            out += _NONE_ITEM
        else:
            out += item_atoms(cell[0])
            cell = cell[1]
    return out


def extract_baseline(state: ParserState, ctx: SentenceContext) -> list[str]:
    atoms = _stack_atoms(state) + ctx.queue_atoms[state.front]
    return _BASELINE_FMT.format(*atoms).split(_SEP)


def _item_look(item: StackItem, pred) -> tuple[str, str]:
    return (next_level(pred[item.start].s.labels, item.s_done),
            next_level(pred[item.end - 1].e.labels, item.e_done))


def extract_lookahead(state: ParserState, ctx: SentenceContext) -> list[str]:
    pred = ctx.pred
    cell = state.stack
    if cell is None:
        s0 = s1 = (NONE, NONE)
    else:
        s0 = _item_look(cell[0], pred)
        s1 = _item_look(cell[1][0], pred) if cell[1] is not None else (NONE, NONE)
    q = ctx.queue_look[state.front]
    vals = s0 + s1 + q
    return [f"{tpl}={v}" for tpl, v in zip(LOOKAHEAD_TEMPLATES, vals)]


def extract_features(state: ParserState, ctx: SentenceContext, lookahead: bool) -> list[str]:
    feats = extract_baseline(state, ctx)
    if lookahead:
        feats += extract_lookahead(state, ctx)
    return feats


# ---------------------------------------------------------------- model

MODEL_MAGIC = "lookahead-parser-model"
MODEL_VERSION = 1
_BIN_MAGIC = b"LAPM"


class ModelFormatError(ValueError):
    pass


class LinearModel:
    """Sparse features x dense action weights, with lazy averaging.

    ``updates`` counts calls to :meth:`update` / :meth:`tick`; the averaged
    weights are the mean of the weight matrix taken after each of them.
    """

    def __init__(self, grammar: Grammar, lookahead: bool = True, hash_bits: int | None = None):
        self.grammar = grammar
        self.lookahead = lookahead
        self.hash_bits = hash_bits
        self.n_actions = len(grammar)
        self.index: dict[str, int] = {}
        self.keys: list[str] = []
        self.W = np.zeros((64, self.n_actions))
        self.totals = np.zeros_like(self.W)
        self.last = np.zeros(64, dtype=np.int64)
        self.updates = 0
        self.meta: dict = {}
        self._scoring = self.W
        self._averaged = False

    # -- feature rows
    def _key(self, feat: str) -> str:
        if self.hash_bits is None:
            return feat
        return "#%x" % (zlib.crc32(feat.encode("utf-8")) & ((1 << self.hash_bits) - 1))

    def rows(self, feats: Sequence[str]) -> list[int]:
        index = self.index
        if self.hash_bits is None:
            return [index[f] for f in feats if f in index]
        keys = (self._key(f) for f in feats)
        return [index[k] for k in keys if k in index]

    def _row(self, feat: str) -> int:
        key = self._key(feat)
        r = self.index.get(key)
        if r is None:
            r = len(self.keys)
            if r == self.W.shape[0]:
                self._grow()
            self.index[key] = r
            self.keys.append(key)
        return r

    def _grow(self):
        cap = self.W.shape[0] * 2
        for name in ("W", "totals"):
            old = getattr(self, name)
            new = np.zeros((cap, self.n_actions))
            new[:old.shape[0]] = old
            setattr(self, name, new)
        last = np.zeros(cap, dtype=np.int64)
        last[:self.last.shape[0]] = self.last
        self.last = last
        if not self._averaged:
            self._scoring = self.W

    # -- scoring
    def scores(self, feats: Sequence[str]) -> np.ndarray:
        """Score of every action given a state's features."""
        rows = self.rows(feats)
        if not rows:
            return np.zeros(self.n_actions)
        return self._scoring[rows].sum(axis=0)

    def score_action(self, feats: Sequence[str], action: Action | int) -> float:
        a = action if isinstance(action, int) else self.grammar.index[action]
        return float(self.scores(feats)[a])

    # -- learning
    def update(self, gold: Sequence[tuple[Sequence[str], int]],
               pred: Sequence[tuple[Sequence[str], int]]) -> int:
        """+1 along ``gold`` and -1 along ``pred``; returns #weights changed."""
        delta: dict[tuple[int, int], int] = {}
        for sign, seq in ((1, gold), (-1, pred)):
            for feats, a in seq:
                for f in feats:
                    k = (self._row(f), a)
                    delta[k] = delta.get(k, 0) + sign
        c = self.updates
        W, totals, last = self.W, self.totals, self.last
        changed = 0
        for (r, a), d in delta.items():
            if d == 0:
                continue
            if last[r] != c:
                totals[r] += (c - last[r]) * W[r]
                last[r] = c
            W[r, a] += d
            changed += 1
        self.updates = c + 1
        return changed

    def tick(self) -> None:
        """Count one step with no weight change (for per-sentence averaging)."""
        self.updates += 1

    def averaged_weights(self) -> np.ndarray:
        n = len(self.keys)
        if self.updates == 0:
            return self.W[:n].copy()
        k = self.updates
        return (self.totals[:n] + (k - self.last[:n])[:, None] * self.W[:n]) / k

    def use_averaged(self) -> None:
        self._scoring = self.averaged_weights()
        self._averaged = True

    def use_raw(self) -> None:
        self._scoring = self.W
        self._averaged = False

    # -- persistence
    def _header(self) -> dict:
        g = self.grammar
        return {
            "format": MODEL_MAGIC, "version": MODEL_VERSION,
            "reduce_labels": g.reduce_labels, "unary_labels": g.unary_labels,
            "max_unary": g.max_unary, "lookahead": self.lookahead,
            "hash_bits": self.hash_bits, "updates": self.updates,
            "features": len(self.keys), "meta": self.meta,
        }

    def save(self, path, binary: bool = False) -> None:
        data = self.to_bytes() if binary else self.to_text().encode("utf-8")
        with open(path, "wb") as f:
            f.write(data)

    def to_text(self) -> str:
        out = io.StringIO()
        out.write(json.dumps(self._header(), sort_keys=True) + "\n")
        avg = self.averaged_weights()
        n = len(self.keys)
        actions = [str(a) for a in self.grammar.actions]
        for r in range(n):
            nz = np.flatnonzero((self.W[r] != 0) | (avg[r] != 0))
            for a in nz:
                out.write(f"{self.keys[r]}\t{actions[a]}\t{float(self.W[r, a])!r}\t"
                          f"{float(avg[r, a])!r}\n")
        return out.getvalue()

    def to_bytes(self) -> bytes:
        header = self._header()
        header["keys"] = self.keys
        blob = json.dumps(header, sort_keys=True).encode("utf-8")
        n = len(self.keys)
        return (_BIN_MAGIC + struct.pack("<Q", len(blob)) + blob
                + np.ascontiguousarray(self.W[:n], dtype="<f8").tobytes()
                + np.ascontiguousarray(self.averaged_weights(), dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "LinearModel":
        with open(path, "rb") as f:
            data = f.read()
        if data[:4] == _BIN_MAGIC:
            return cls.from_bytes(data)
        return cls.from_text(data.decode("utf-8"))

    @classmethod
    def _from_header(cls, header: dict) -> "LinearModel":
        if header.get("format") != MODEL_MAGIC:
            raise ModelFormatError("not a parser model file")
        if header.get("version") != MODEL_VERSION:
            raise ModelFormatError(f"parser model version {header.get('version')} "
                                   f"is not supported (expected {MODEL_VERSION})")
        g = Grammar(header["reduce_labels"], header["unary_labels"], header["max_unary"])
        m = cls(g, header["lookahead"], header["hash_bits"])
        m.meta = header.get("meta", {})
        return m

    def _install(self, keys, W, avg, updates):
        n = len(keys)
        cap = max(64, n)
        self.W = np.zeros((cap, self.n_actions))
        self.W[:n] = W
        self.totals = np.zeros_like(self.W)
        self.last = np.zeros(cap, dtype=np.int64)
        self.keys = list(keys)
        self.index = {k: i for i, k in enumerate(self.keys)}
        self.updates = updates
        # totals reconstructed so that averaged_weights() == avg
        if updates:
            self.totals[:n] = avg * updates - W * updates
            self.last[:n] = 0
        self.use_averaged()

    @classmethod
    def from_text(cls, text: str) -> "LinearModel":
        lines = text.splitlines()
        try:
            header = json.loads(lines[0])
        except (IndexError, json.JSONDecodeError):
            raise ModelFormatError("missing or corrupt model header") from None
        m = cls._from_header(header)
        keys: list[str] = []
        index: dict[str, int] = {}
        entries = []
        for no, line in enumerate(lines[1:], 2):
            try:
                feat, action, w, avg = line.split("\t")
                entry = (m.grammar.index[Action.parse(action)], float(w), float(avg))
            except (ValueError, KeyError):
                raise ModelFormatError(f"line {no}: bad weight record {line[:60]!r}") from None
            r = index.setdefault(feat, len(keys))
            if r == len(keys):
                keys.append(feat)
            entries.append((r, *entry))
        W = np.zeros((len(keys), m.n_actions))
        A = np.zeros_like(W)
        for r, a, w, avg in entries:
            W[r, a] = w
            A[r, a] = avg
        m._install(keys, W, A, header["updates"])
        return m

    @classmethod
    def from_bytes(cls, data: bytes) -> "LinearModel":
        if data[:4] != _BIN_MAGIC or len(data) < 12:
            raise ModelFormatError("not a binary parser model file")
        (size,) = struct.unpack("<Q", data[4:12])
        try:
            header = json.loads(data[12:12 + size].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise ModelFormatError("corrupt parser model header") from None
        m = cls._from_header(header)
        keys = header["keys"]
        n, a = len(keys), m.n_actions
        body = np.frombuffer(data[12 + size:], dtype="<f8")
        if body.size != 2 * n * a:
            raise ModelFormatError("truncated parser model file")
        W = body[:n * a].reshape(n, a)
        A = body[n * a:].reshape(n, a)
        m._install(keys, W, A, header["updates"])
        return m
