"""Constituent-hierarchy predictor: BiLSTM encoder with attention decoders.

Each word is represented by its embedding joined with an attention-weighted
sum of windowed character features.  A windowed, stacked bidirectional LSTM
encodes the sentence; for every word an LSTM decoder, attending over all
encoder states, emits the word's hierarchy bottom-up until NULL.  The s- and
e-type hierarchies use two fully separate parameter sets.

All LSTMs use the coupled-gate cell with peepholes::

    i = sigmoid(W1 x + W2 h' + w3 * c' + b1);  f = 1 - i
    c~ = tanh(W4 x + W5 h' + b2);             c = f * c' + i * c~
    o = sigmoid(W6 x + W7 h' + w8 * c + b3);  h = o * tanh(c)
"""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import random
import struct
from collections import Counter
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from .hierarchy import (E_TYPE, MAX_DEPTH, S_TYPE, ConstituentHierarchy, WordHierarchies,
                        corpus_hierarchy_counts, exact_match, extract_hierarchies)
from .tensor import Node, SGDMomentum, Tape, UsageError, parameter
from .treebank import Tree

logger = logging.getLogger(__name__)

UNK = "<unk>"
PAD = "<pad>"
NULL_LABEL = "NULL"
FORMAT = "lookahead-predictor-model"
VERSION = 1
_MAGIC = b"LAPP"


@dataclass
class PredictorConfig:
    word_dim: int = 50
    char_dim: int = 30
    char_hidden: int = 60
    hidden: int = 100
    word_window: int = 2
    char_window: int = 2
    layers: int = 2
    max_depth: int = MAX_DEPTH
    epochs: int = 20
    seed: int = 1
    lr: float = 0.01
    momentum: float = 0.9
    l2: float = 1e-6
    unk_cutoff: int = 1
    unk_prob: float = 0.5
    use_chars: bool = True
    use_windows: bool = True
    clip: float | None = None

    def __post_init__(self):
        for name in ("word_dim", "char_dim", "char_hidden", "hidden", "max_depth", "epochs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.layers not in (1, 2, 3):
            raise ValueError("layers must be 1, 2 or 3")
        if self.word_window < 0 or self.char_window < 0:
            raise ValueError("windows must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "PredictorConfig":
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown predictor settings: {', '.join(sorted(unknown))}")
        return cls(**d)

    @property
    def input_dim(self) -> int:
        return self.word_dim + (self.char_hidden if self.use_chars else 0)


class Vocab:
    def __init__(self, items: Sequence[str], specials: Sequence[str] = (UNK,)):
        self.items = list(specials) + [x for x in items if x not in specials]
        self.index = {x: i for i, x in enumerate(self.items)}

    def __len__(self):
        return len(self.items)

    def __getitem__(self, item: str) -> int:
        return self.index.get(item, self.index.get(UNK, 0))


# ---------------------------------------------------------------- parameters

def _uniform(rng, shape, scale):
    return rng.uniform(-scale, scale, size=shape)


def _glorot(rng, fan_in, fan_out):
    return _uniform(rng, (fan_in, fan_out), np.sqrt(6.0 / (fan_in + fan_out)))


def _lstm_params(rng, prefix, n_in, n_hidden, out):
    """Row-vector convention: gates read ``x @ W``."""
    for k, rows in (("1", n_in), ("2", n_hidden), ("4", n_in), ("5", n_hidden),
                    ("6", n_in), ("7", n_hidden)):
        out[f"{prefix}.W{k}"] = _glorot(rng, rows, n_hidden)
    out[f"{prefix}.w3"] = np.zeros(n_hidden)
    out[f"{prefix}.w8"] = np.zeros(n_hidden)
    for k in ("b1", "b2", "b3"):
        out[f"{prefix}.{k}"] = np.zeros(n_hidden)


def init_params(cfg: PredictorConfig, n_words: int, n_chars: int, n_labels: int,
                rng: np.random.Generator) -> dict[str, np.ndarray]:
    p: dict[str, np.ndarray] = {}
    p["word_emb"] = _uniform(rng, (n_words, cfg.word_dim), 0.01)
    if cfg.use_chars:
        cw = 2 * cfg.char_window + 1
        p["char_emb"] = _uniform(rng, (n_chars, cfg.char_dim), 0.01)
        p["char.W"] = _glorot(rng, cw * cfg.char_dim, cfg.char_hidden)
        p["char.b"] = np.zeros(cfg.char_hidden)
        p["char_att.Ww"] = _glorot(rng, cfg.word_dim, cfg.char_hidden)
        p["char_att.Wc"] = _glorot(rng, cfg.char_hidden, cfg.char_hidden)
        p["char_att.b"] = np.zeros(cfg.char_hidden)
        p["char_att.v"] = _glorot(rng, cfg.char_hidden, 1)[:, 0]
    if cfg.use_windows and cfg.word_window:
        p["word_pad"] = _uniform(rng, (2, cfg.input_dim), 0.01)
    H = cfg.hidden
    n_in = cfg.input_dim * ((2 * cfg.word_window + 1) if cfg.use_windows else 1)
    for layer in range(cfg.layers):
        for d in ("fwd", "bwd"):
            _lstm_params(rng, f"enc{layer}.{d}", n_in, H, p)
        n_in = 2 * H
    # decoder input is [context; h_i]; both are encoder states
    _lstm_params(rng, "dec", 4 * H, H, p)
    p["att.U"] = _glorot(rng, H, H)
    p["att.V"] = _glorot(rng, 2 * H, H)
    p["att.b"] = np.zeros(H)
    p["att.v"] = _glorot(rng, H, 1)[:, 0]
    p["out.W"] = _glorot(rng, H, n_labels)
    return p


# ---------------------------------------------------------------- network

class HierarchyNet:
    """One (s- or e-type) predictor network over shared vocabularies."""

    def __init__(self, cfg: PredictorConfig, params: dict[str, np.ndarray]):
        self.cfg = cfg
        self.params = {k: parameter(v, k) for k, v in params.items()}

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: p.value for k, p in self.params.items()}

    # -- input layer
    def embed(self, tp: Tape, word_ids: Sequence[int], char_ids: Sequence[Sequence[int]],
              pad_id: int):
        """Input vectors ``x_i`` for a sentence (rows) and the character attention weights.

        ``x_i`` is the word embedding joined with ``sum_j alpha_ij c_ij`` where
        ``c_ij`` is a tanh layer over the window of character embeddings around
        character j and ``alpha_i`` is a softmax of ``v . tanh(Ww x_w + Wc c_ij + b)``.
        """
        P, cfg = self.params, self.cfg
        xw = tp.lookup(P["word_emb"], np.asarray(word_ids))
        if not cfg.use_chars:
            return xw, None
        n, cw = len(word_ids), cfg.char_window
        m = max(len(c) for c in char_ids)
        width = 2 * cw + 1
        idx = np.full((n, m, width), pad_id)
        mask = np.zeros((n, m), dtype=bool)
        for i, cs in enumerate(char_ids):
            padded = [pad_id] * cw + list(cs) + [pad_id] * cw
            for j in range(len(cs)):
                idx[i, j] = padded[j:j + width]
            mask[i, :len(cs)] = True
        win = tp.reshape(tp.lookup(P["char_emb"], idx), (n * m, width * cfg.char_dim))
        chars = tp.tanh(tp.add(tp.matmul(win, P["char.W"]), P["char.b"]))  # (n*m, hc)
        hc = cfg.char_hidden
        query = tp.reshape(tp.add(tp.matmul(xw, P["char_att.Ww"]), P["char_att.b"]), (n, 1, hc))
        keys = tp.reshape(tp.matmul(chars, P["char_att.Wc"]), (n, m, hc))
        e = tp.reshape(tp.tanh(tp.add(keys, query)), (n * m, hc))
        scores = tp.reshape(tp.matmul(e, P["char_att.v"]), (n, m))
        alpha = tp.softmax(scores, mask)
        weighted = tp.mul(tp.reshape(alpha, (n, m, 1)), tp.reshape(chars, (n, m, hc)))
        c_att = tp.sum(weighted, axis=1)
        return tp.concat([xw, c_att], axis=1), alpha.value

    def embed_word(self, tp: Tape, word_id: int, char_ids: Sequence[int], pad_id: int):
        x, alpha = self.embed(tp, [word_id], [char_ids], pad_id)
        return tp.index(x, 0), (alpha[0] if alpha is not None else None)

    def _gates(self, tp: Tape, prefix: str, X: Node, cols: slice | None = None) -> Node:
        """``X @ [W1 | W4 | W6]`` (optionally a row block of each)."""
        P = self.params
        Ws = [P[f"{prefix}.W{k}"] for k in (1, 4, 6)]
        if cols is not None:
            Ws = [tp.index(W, cols) for W in Ws]
        return tp.matmul(X, tp.concat(Ws, axis=1))

    def _bias(self, tp: Tape, prefix: str) -> Node:
        P = self.params
        return tp.concat([P[f"{prefix}.b{k}"] for k in (1, 2, 3)])

    def _cell(self, tp: Tape, prefix: str, z: Node, hc: Node | None, row=None) -> Node:
        P = self.params
        return tp.lstm_cell(z, hc, P[prefix + ".W2"], P[prefix + ".W5"], P[prefix + ".W7"],
                            P[prefix + ".w3"], P[prefix + ".w8"], row)

    def _lstm(self, tp: Tape, prefix: str, X: Node, reverse: bool) -> Node:
        n = X.shape[0]
        Z = tp.add(self._gates(tp, prefix, X), self._bias(tp, prefix))
        hc = None
        out = []
        for t in (range(n - 1, -1, -1) if reverse else range(n)):
            hc = self._cell(tp, prefix, Z, hc, row=t)
            out.append(hc)
        if reverse:
            out.reverse()
        return tp.index(tp.stack(out), (slice(None), 0))  # (n, H) hidden states

    def encode(self, tp: Tape, word_ids, char_ids, pad_id: int) -> Node:
        """Encoder states ``h_i`` = forward and backward top-layer outputs joined."""
        cfg, P = self.cfg, self.params
        n = len(word_ids)
        X, _ = self.embed(tp, word_ids, char_ids, pad_id)
        if cfg.use_windows and cfg.word_window:
            win = cfg.word_window
            pads = P["word_pad"]
            Xp = tp.concat([tp.lookup(pads, [0] * win), X, tp.lookup(pads, [1] * win)], axis=0)
            X = tp.concat([tp.index(Xp, slice(o, o + n)) for o in range(2 * win + 1)], axis=1)
        for layer in range(cfg.layers):
            fwd = self._lstm(tp, f"enc{layer}.fwd", X, reverse=False)
            bwd = self._lstm(tp, f"enc{layer}.bwd", X, reverse=True)
            X = tp.concat([fwd, bwd], axis=1)
        return X

    def decode_steps(self, tp: Tape, Hm: Node, steps: int):
        """Run ``steps`` decoder steps for all words at once.

        Yields ``(logits, attention)`` per step.  There is no feedback of the
        emitted labels, so rows are independent of each other.
        """
        P = self.params
        n, H = Hm.shape[0], self.cfg.hidden
        keys = tp.add(tp.matmul(Hm, P["att.V"]), P["att.b"])  # (n, H)
        keys3 = tp.reshape(keys, (1, n, H))
        # the h_i half of the decoder input is the same at every step
        z_h = tp.add(self._gates(tp, "dec", Hm, slice(2 * H, 4 * H)), self._bias(tp, "dec"))
        W_ctx = tp.concat([tp.index(P[f"dec.W{k}"], slice(0, 2 * H)) for k in (1, 4, 6)], axis=1)
        hc = None
        for _ in range(steps):
            if hc is None:
                # zero start state: attention is the same for every word
                e = tp.reshape(tp.tanh(keys3), (n, H))
                scores = tp.reshape(tp.matmul(e, P["att.v"]), (1, n))
            else:
                s = tp.index(hc, 0)
                q = tp.reshape(tp.matmul(s, P["att.U"]), (n, 1, H))
                e = tp.reshape(tp.tanh(tp.add(q, keys3)), (n * n, H))
                scores = tp.reshape(tp.matmul(e, P["att.v"]), (n, n))
            beta = tp.softmax(scores)
            ctx = tp.matmul(beta, Hm)
            z = tp.add(tp.matmul(ctx, W_ctx), z_h)
            hc = self._cell(tp, "dec", z, hc)
            yield tp.matmul(tp.index(hc, 0), P["out.W"]), beta.value

    def loss(self, tp: Tape, word_ids, char_ids, pad_id, targets: list[list[int]], null_id: int):
        """Teacher-forced loss: each word decodes ``len(gold) + 1`` steps, the last being NULL."""
        Hm = self.encode(tp, word_ids, char_ids, pad_id)
        steps = max(len(t) for t in targets) + 1
        total = None
        probs = []
        for j, (logits, _) in enumerate(self.decode_steps(tp, Hm, steps)):
            tgt = np.array([t[j] if j < len(t) else null_id for t in targets])
            mask = np.array([j <= len(t) for t in targets])
            p, l = tp.softmax_xent(logits, tgt, mask)
            probs.append(p)
            total = l if total is None else tp.add(total, l)
        return total, probs

    def predict(self, tp: Tape, word_ids, char_ids, pad_id, null_id: int, max_depth: int):
        Hm = self.encode(tp, word_ids, char_ids, pad_id)
        n = len(word_ids)
        out: list[list[int]] = [[] for _ in range(n)]
        done = np.zeros(n, dtype=bool)
        for logits, _ in self.decode_steps(tp, Hm, max_depth + 1):
            best = logits.value.argmax(axis=1)
            for i in np.flatnonzero(~done):
                if best[i] == null_id:
                    done[i] = True
                else:
                    out[i].append(int(best[i]))
            if done.all():
                break
        capped = int((~done).sum())
        for i in np.flatnonzero(~done):
            out[i] = out[i][:max_depth]
        return out, capped


# ---------------------------------------------------------------- predictor

def _chars(word: str) -> list[str]:
    return list(word) or [PAD]


class Predictor:
    """s- and e-type networks with shared vocabularies."""

    def __init__(self, cfg: PredictorConfig, words: Vocab, chars: Vocab,
                 labels: dict[str, Vocab], nets: dict[str, HierarchyNet],
                 word_counts: dict[str, int] | None = None):
        self.cfg = cfg
        self.words = words
        self.chars = chars
        self.labels = labels
        self.nets = nets
        self.word_counts = word_counts or {}
        self.stats = {"depth_cap_hits": 0}

    @classmethod
    def create(cls, cfg: PredictorConfig, treebank: Sequence[Tree]) -> "Predictor":
        if not treebank:
            raise UsageError("cannot build a predictor from an empty treebank")
        counts = Counter(w for t in treebank for w in t.words())
        words = Vocab(sorted(counts))
        chars = Vocab(sorted({ch for w in counts for ch in w}), (UNK, PAD))
        gold = [extract_hierarchies(t) for t in treebank]
        labels = {}
        for htype in (S_TYPE, E_TYPE):
            labs = sorted({lab for hs in gold for h in hs for lab in getattr(h, htype).labels})
            labels[htype] = Vocab(labs, (NULL_LABEL,))
        rng = np.random.default_rng(cfg.seed)
        nets = {htype: HierarchyNet(cfg, init_params(cfg, len(words), len(chars),
                                                     len(labels[htype]), rng))
                for htype in (S_TYPE, E_TYPE)}
        return cls(cfg, words, chars, labels, nets, dict(counts))

    def encode_words(self, words: Sequence[str], rng: random.Random | None = None):
        ids = []
        for w in words:
            if (rng is not None and self.word_counts.get(w, 0) <= self.cfg.unk_cutoff
                    and rng.random() < self.cfg.unk_prob):
                ids.append(self.words[UNK])
            else:
                ids.append(self.words[w])
        char_ids = [[self.chars[ch] for ch in _chars(w)] for w in words]
        return ids, char_ids

    def targets(self, tree: Tree, htype: str) -> list[list[int]]:
        """Gold label ids per word, bottom-up."""
        vocab = self.labels[htype]
        return [[vocab[lab] for lab in getattr(h, htype).bottom_up()]
                for h in extract_hierarchies(tree)]

    def sentence_loss(self, tree: Tree, htype: str, tp: Tape | None = None,
                      rng: random.Random | None = None):
        tp = tp or Tape()
        ids, char_ids = self.encode_words(tree.words(), rng)
        net = self.nets[htype]
        return net.loss(tp, ids, char_ids, self.chars[PAD], self.targets(tree, htype),
                        self.labels[htype][NULL_LABEL])

    def predict(self, words: Sequence[str]) -> list[WordHierarchies]:
        if not words:
            raise ValueError("cannot predict for an empty sentence")
        ids, char_ids = self.encode_words(words)
        out = {}
        for htype in (S_TYPE, E_TYPE):
            tp = Tape(record=False)
            vocab = self.labels[htype]
            seqs, capped = self.nets[htype].predict(tp, ids, char_ids, self.chars[PAD],
                                                    vocab[NULL_LABEL], self.cfg.max_depth)
            self.stats["depth_cap_hits"] += capped
            out[htype] = [ConstituentHierarchy(htype, tuple(vocab.items[k] for k in reversed(s)))
                          for s in seqs]
        return [WordHierarchies(s, e) for s, e in zip(out[S_TYPE], out[E_TYPE])]

    def predict_all(self, sentences: Sequence[Sequence[str]]) -> list[list[WordHierarchies]]:
        return [self.predict(ws) for ws in sentences]

    def evaluate(self, treebank: Sequence[Tree]) -> dict[str, float]:
        pred = self.predict_all([t.words() for t in treebank])
        gold = [extract_hierarchies(t) for t in treebank]
        counts = corpus_hierarchy_counts(pred, gold)
        return {"s_f1": counts[S_TYPE].prf()[2], "e_f1": counts[E_TYPE].prf()[2],
                "exact": exact_match(pred, gold)}

    # -- persistence
    def to_bytes(self) -> bytes:
        arrays = []
        layout = []
        for htype in (S_TYPE, E_TYPE):
            for name, arr in self.nets[htype].arrays().items():
                layout.append([htype, name, list(arr.shape)])
                arrays.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        header = {
            "format": FORMAT, "version": VERSION, "config": asdict(self.cfg),
            "words": self.words.items, "chars": self.chars.items,
            "labels": {k: v.items for k, v in self.labels.items()},
            "word_counts": self.word_counts, "layout": layout,
        }
        blob = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
        return _MAGIC + struct.pack("<Q", len(blob)) + blob + b"".join(arrays)

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Predictor":
        from .parser_model import ModelFormatError

        if data[:4] != _MAGIC:
            raise ModelFormatError("not a predictor model file")
        (size,) = struct.unpack("<Q", data[4:12])
        try:
            header = json.loads(data[12:12 + size].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise ModelFormatError("corrupt predictor model header") from None
        if header.get("format") != FORMAT or header.get("version") != VERSION:
            raise ModelFormatError(f"predictor model version {header.get('version')} "
                                   f"is not supported (expected {VERSION})")
        cfg = PredictorConfig.from_dict(header["config"])
        words = Vocab(header["words"], ())
        chars = Vocab(header["chars"], ())
        labels = {k: Vocab(v, ()) for k, v in header["labels"].items()}
        params: dict[str, dict[str, np.ndarray]] = {S_TYPE: {}, E_TYPE: {}}
        off = 12 + size
        for htype, name, shape in header["layout"]:
            count = int(np.prod(shape)) if shape else 1
            if off + 8 * count > len(data):
                raise ModelFormatError("predictor model file is truncated")
            arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).reshape(shape)
            params[htype][name] = arr.astype(np.float64)
            off += 8 * count
        if off != len(data):
            raise ModelFormatError("predictor model file has trailing or missing data")
        nets = {h: HierarchyNet(cfg, params[h]) for h in (S_TYPE, E_TYPE)}
        return cls(cfg, words, chars, labels, nets, header["word_counts"])

    @classmethod
    def load(cls, path) -> "Predictor":
        with open(path, "rb") as f:
            return cls.from_bytes(f.read())


# ---------------------------------------------------------------- training

def train_predictor(treebank: Sequence[Tree], cfg: PredictorConfig | None = None,
                    dev: Sequence[Tree] | None = None, until_exact: bool = False) -> Predictor:
    """Per-sentence momentum SGD on both networks.

    With ``dev`` the parameters of the best dev epoch (mean of s/e F1) are
    kept.  ``until_exact`` stops once every training word is predicted
    exactly.
    """
    cfg = cfg or PredictorConfig()
    if not treebank:
        raise UsageError("cannot train a predictor on an empty treebank")
    model = Predictor.create(cfg, treebank)
    rng = random.Random(cfg.seed)
    opts = {h: SGDMomentum(list(model.nets[h].params.values()), cfg.lr, cfg.momentum, cfg.l2,
                           cfg.clip)
            for h in (S_TYPE, E_TYPE)}
    order = list(range(len(treebank)))
    best = None
    for epoch in range(1, cfg.epochs + 1):
        rng.shuffle(order)
        total = {S_TYPE: 0.0, E_TYPE: 0.0}
        for i in order:
            for htype in (S_TYPE, E_TYPE):
                tp = Tape()
                loss, _ = model.sentence_loss(treebank[i], htype, tp, rng)
                tp.backward(loss)
                opts[htype].step()
                total[htype] += float(loss.value)
        msg = f"predictor epoch {epoch}: loss s={total[S_TYPE]:.3f} e={total[E_TYPE]:.3f}"
        if dev is not None:
            scores = model.evaluate(dev)
            score = (scores["s_f1"] + scores["e_f1"]) / 2
            msg += f", dev F1 s={scores['s_f1']:.4f} e={scores['e_f1']:.4f}"
            if best is None or score > best[0]:
                best = (score, epoch, {h: copy.deepcopy(model.nets[h].arrays()) for h in model.nets})
        logger.info(msg)
        if until_exact and model.evaluate(treebank)["exact"] == 1.0:
            logger.info("training hierarchies reproduced exactly after %d epochs", epoch)
            break
    if best is not None:
        for h, arrays in best[2].items():
            for name, arr in arrays.items():
                model.nets[h].params[name].value = arr
    return model


def jackknife(treebank: Sequence[Tree], folds: int = 10, cfg: PredictorConfig | None = None
              ) -> list[list[WordHierarchies]]:
    """Predict each sentence with a model trained on the other folds (fold = index mod k)."""
    if folds < 2:
        raise UsageError("jackknifing needs at least 2 folds")
    if len(treebank) < folds:
        raise UsageError(f"treebank of {len(treebank)} sentences is smaller than {folds} folds")
    cfg = cfg or PredictorConfig()
    out: list[list[WordHierarchies] | None] = [None] * len(treebank)
    for k in range(folds):
        held = [i for i in range(len(treebank)) if i % folds == k]
        rest = [treebank[i] for i in range(len(treebank)) if i % folds != k]
        logger.info("jackknife fold %d/%d: train %d, predict %d", k + 1, folds, len(rest), len(held))
        model = train_predictor(rest, cfg)
        for i in held:
            out[i] = model.predict(treebank[i].words())
    return out
