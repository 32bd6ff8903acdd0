import random
from contextlib import contextmanager

import pytest

from lookahead_parser.predictor import PredictorConfig
from lookahead_parser.treebank import Tree, read_ptb

BOOK = ("(S (NP (DT The) (ADJP (JJ past) (CC and) (JJ present)) (NNS students)) "
        "(VP (VBP like) (NP (NP (DT this) (NN book)) (PP (IN on) (NP (DT the) (NN table))))))")
TOY = "(S (PRP They) (VP (VBP like) (NNS apples)))"

LABELS = ("NP", "VP", "S", "PP", "ADJP", "SBAR")
TAGS = ("DT", "NN", "VBD", "IN", "JJ", "PRP")


def random_tree(rng: random.Random, max_words: int = 10) -> Tree:
    """Random tree with at most one unary per span (so 2n <= m <= 4n holds)."""
    n = rng.randint(1, max_words)
    words = [(f"w{rng.randrange(12)}", rng.choice(TAGS)) for _ in range(n)]

    def build(ws, after_unary=False):
        if len(ws) == 1 and (after_unary or rng.random() < 0.6):
            return Tree.leaf(*ws[0])
        if not after_unary and rng.random() < 0.15:
            return Tree(rng.choice(LABELS), (build(ws, True),))
        k = rng.randint(2, min(len(ws), 4)) if len(ws) > 1 else 1
        if k == 1:
            return Tree(rng.choice(LABELS), (Tree.leaf(*ws[0]),))
        cuts = sorted(rng.sample(range(1, len(ws)), k - 1))
        parts = [ws[a:b] for a, b in zip([0] + cuts, cuts + [len(ws)])]
        return Tree(rng.choice(LABELS), tuple(build(p) for p in parts))

    t = build(words)
    if t.is_leaf:
        t = Tree("S", (t,))
    return t


@pytest.fixture
def book():
    return read_ptb(BOOK)[0]


@pytest.fixture
def toy():
    return read_ptb(TOY)[0]


def small_config(**kw) -> PredictorConfig:
    base = dict(word_dim=8, char_dim=4, char_hidden=8, hidden=10, word_window=1,
                char_window=1, layers=1, epochs=2, seed=3)
    base.update(kw)
    return PredictorConfig(**base)


def finite_difference_check(build, params, h=1e-5):
    """Worst relative error between analytic and central-difference gradients.

    ``build(tape)`` returns a scalar loss node computed from the parameter
    nodes in ``params``.  The analytic pass runs in float64; the perturbed
    losses are evaluated in extended precision so that their difference is
    not dominated by cancellation.
    """
    import numpy as np

    from lookahead_parser.tensor import Tape

    for p in params:
        p.grad = None
    tp = Tape()
    tp.backward(build(tp))
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.value) for p in params]
    for p in params:
        p.grad = None

    def loss():
        return np.longdouble(build(Tape(record=False, dtype=np.longdouble)).value)

    worst, where, count = 0.0, None, 0
    for p, grad in zip(params, analytic):
        flat = p.value.reshape(-1)
        for k in range(flat.size):
            old = flat[k]
            flat[k] = old + h
            up = loss()
            flat[k] = old - h
            down = loss()
            flat[k] = old
            num = float((up - down) / np.longdouble(2 * h))
            a = float(grad.reshape(-1)[k])
            scale = max(abs(a), abs(num))
            rel = abs(a - num) / scale if scale > 0 else 0.0
            count += 1
            if rel > worst:
                worst, where = rel, (p.name, k, a, num)
    return worst, where, count


TOY_CFG = """\
# small dimensions so the pipeline runs in seconds
predictor.word_dim = 16
predictor.char_dim = 8
predictor.char_hidden = 16
predictor.hidden = 24
predictor.word_window = 1
predictor.char_window = 1
predictor.layers = 1
predictor.epochs = 15
"""
RUN_CFG = """\
include = dims.cfg
seed = 2
folds = 2
beam = 8
parser.epochs = 30
"""


def run(*argv):
    from lookahead_parser.pipeline import main

    return main([str(a) for a in argv])


def run_toy_pipeline(d):
    (d / "dims.cfg").write_text(TOY_CFG)
    (d / "toy.cfg").write_text(RUN_CFG)
    cfg = ["--config", d / "toy.cfg", "-q"]
    assert run("synth", "--n", 20, "--seed", 7, "--max-words", 15, "-o", d / "train.ptb") == 0
    assert run("train-predictor", d / "train.ptb", *cfg, "-o", d / "pred.bin") == 0
    assert run("jackknife", d / "train.ptb", *cfg, "-o", d / "jk.hier") == 0
    assert run("train-parser", d / "train.ptb", *cfg, "--hierarchies", d / "jk.hier",
               "--predictor", d / "pred.bin", "-o", d / "parser.txt") == 0
    assert run("parse", d / "parser.txt", d / "train.ptb", *cfg, "--predictor", d / "pred.bin",
               "-o", d / "out.ptb") == 0
    return d



# acceptance outcomes, printed once at the end of the run
CRITERIA: dict[int, tuple[str, bool, str]] = {}


@contextmanager
def criterion(number: int, name: str):
    """Record whether the block passed; ``detail`` set on the yielded dict is shown too."""
    info = {"detail": ""}
    CRITERIA[number] = (name, False, "")
    try:
        yield info
    except BaseException as exc:
        CRITERIA[number] = (name, False, info["detail"] or f"{type(exc).__name__}: {exc}")
        print(f"criterion {number:2d} FAIL  {name}  {CRITERIA[number][2]}")
        raise
    CRITERIA[number] = (name, True, info["detail"])
    print(f"criterion {number:2d} PASS  {name}  {info['detail']}")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        name, ok, detail = CRITERIA[number]
        terminalreporter.write_line(f"{number:2d} {'PASS' if ok else 'FAIL'}  {name}  {detail}")
