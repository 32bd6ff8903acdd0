import numpy as np
import pytest

from lookahead_parser.hierarchy import E_TYPE, S_TYPE, extract_hierarchies
from lookahead_parser.parser_model import ModelFormatError
from lookahead_parser.predictor import (PAD, Predictor, PredictorConfig, jackknife,
                                        train_predictor)
from lookahead_parser.synth import synth_treebank
from lookahead_parser.tensor import Tape, UsageError
from lookahead_parser.treebank import read_ptb

from conftest import TOY, finite_difference_check, small_config


@pytest.fixture(scope="module")
def toy_corpus():
    return synth_treebank(3, 5, max_words=10)


@pytest.fixture
def model(toy_corpus):
    return Predictor.create(small_config(), toy_corpus)


def _ids(model, words):
    ids, chars = model.encode_words(words)
    return ids, chars, model.chars[PAD]


def test_config_validation():
    with pytest.raises(ValueError):
        PredictorConfig(layers=4)
    with pytest.raises(ValueError):
        PredictorConfig(hidden=0)
    with pytest.raises(ValueError):
        PredictorConfig.from_dict({"hiden": 3})
    assert PredictorConfig().input_dim == 110


def test_default_input_dim(toy_corpus):
    m = Predictor.create(PredictorConfig(), toy_corpus[:1])
    x, _ = m.nets[S_TYPE].embed(Tape(record=False), *_ids(m, ["the", "dog"]))
    assert x.shape == (2, 110)


def test_one_char_word_attention(model):
    net = model.nets[S_TYPE]
    ids, chars, pad = _ids(model, ["a"])
    x, alpha = net.embed_word(Tape(record=False), ids[0], chars[0], pad)
    assert alpha.shape == (1,) and alpha[0] == 1.0


def test_attention_weights_normalised(model):
    net = model.nets[E_TYPE]
    x, alpha = net.embed(Tape(record=False), *_ids(model, ["the", "extraordinary", "x"]))
    assert np.allclose(alpha.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(alpha[2, 1:] == 0.0)  # padding positions get no weight


def test_identical_words_identical_inputs(model):
    x, _ = model.nets[S_TYPE].embed(Tape(record=False), *_ids(model, ["the", "dog", "the"]))
    assert np.array_equal(x.value[0], x.value[2])


def test_single_word_sentence(model):
    h = model.nets[S_TYPE].encode(Tape(record=False), *_ids(model, ["the"]))
    assert h.shape == (1, 2 * model.cfg.hidden)


def test_reversal_swaps_directions(toy_corpus):
    m = Predictor.create(small_config(use_windows=False), toy_corpus)
    net = m.nets[S_TYPE]
    for name in list(net.params):
        if ".bwd." in name:
            net.params[name].value = net.params[name.replace(".bwd.", ".fwd.")].value.copy()
    words = ["the", "red", "dog", "ran"]
    H = m.cfg.hidden
    fwd = net.encode(Tape(record=False), *_ids(m, words)).value
    rev = net.encode(Tape(record=False), *_ids(m, words[::-1])).value
    assert np.allclose(fwd[:, :H], rev[::-1, H:], atol=1e-12)


def test_zero_params_give_zero_states(model):
    net = model.nets[S_TYPE]
    for p in net.params.values():
        p.value = np.zeros_like(p.value)
    h = net.encode(Tape(record=False), *_ids(model, ["the", "dog"]))
    assert not h.value.any()


def test_null_first_gives_empty_hierarchy(model):
    net = model.nets[S_TYPE]
    W = np.zeros_like(net.params["out.W"].value)
    net.params["out.W"].value = W
    net.params["dec.b3"].value = np.ones_like(net.params["dec.b3"].value)
    net.params["dec.b2"].value = np.ones_like(net.params["dec.b2"].value)
    net.params["dec.b1"].value = np.ones_like(net.params["dec.b1"].value)
    W[:, 0] = 10.0  # NULL column
    out = model.predict(["the", "dog"])
    assert all(len(h.s) == 0 for h in out)


def test_depth_cap_truncates_and_counts(toy_corpus):
    m = Predictor.create(small_config(max_depth=2), toy_corpus)
    net = m.nets[E_TYPE]
    net.params["out.W"].value = np.zeros_like(net.params["out.W"].value)
    for k in ("b1", "b2", "b3"):
        net.params[f"dec.{k}"].value = np.ones_like(net.params[f"dec.{k}"].value)
    net.params["out.W"].value[:, 1] = 10.0  # never NULL
    out = m.predict(["the", "dog", "ran"])
    assert all(len(h.e) == 2 for h in out)
    assert m.stats["depth_cap_hits"] >= 3  # the s-type net may hit the cap too


def test_teacher_forced_distributions(model, toy_corpus):
    loss, probs = model.sentence_loss(toy_corpus[0], S_TYPE, Tape(record=False))
    for p in probs:
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-9)


def test_uniform_initial_loss(model, toy_corpus):
    """With zero output weights every step costs ln|L|."""
    t = toy_corpus[0]
    for htype in (S_TYPE, E_TYPE):
        net = model.nets[htype]
        net.params["out.W"].value = np.zeros_like(net.params["out.W"].value)
        loss, _ = model.sentence_loss(t, htype, Tape(record=False))
        steps = sum(len(getattr(h, htype)) + 1 for h in extract_hierarchies(t))
        assert float(loss.value) == pytest.approx(steps * np.log(len(model.labels[htype])))


def test_full_graph_gradient_check():
    t = read_ptb("(S (NP (NN ab)) (VP (VBD cde) (NP (NN f))))")[0]
    cfg = PredictorConfig(word_dim=4, char_dim=3, char_hidden=3, hidden=3, word_window=1,
                          char_window=1, layers=2)
    m = Predictor.create(cfg, [t])
    assert len(m.labels[S_TYPE]) == 4
    net = m.nets[S_TYPE]
    rng = np.random.default_rng(0)
    for p in net.params.values():
        p.value[...] = rng.normal(0, 0.5, p.value.shape)
    worst, where, count = finite_difference_check(
        lambda tp: m.sentence_loss(t, S_TYPE, tp)[0], list(net.params.values()))
    assert count == sum(p.value.size for p in net.params.values())
    assert worst < 1e-4, where


def test_loss_decreases(toy_corpus):
    losses = []
    for epochs in (1, 3, 6):
        m = train_predictor(toy_corpus, small_config(epochs=epochs, unk_prob=0.0))
        losses.append(sum(float(m.sentence_loss(t, h, Tape(record=False))[0].value)
                          for t in toy_corpus for h in (S_TYPE, E_TYPE)))
    assert losses[0] > losses[1] > losses[2]


def test_single_sentence_loss_to_zero():
    t = read_ptb(TOY)[0]
    m = train_predictor([t], small_config(epochs=150, l2=0.0, unk_prob=0.0, lr=0.05))
    loss = sum(float(m.sentence_loss(t, h, Tape(record=False))[0].value) for h in (S_TYPE, E_TYPE))
    assert loss < 0.05
    assert m.predict(t.words()) == extract_hierarchies(t)


def test_ablation_variants(toy_corpus):
    for kw in ({"use_chars": False}, {"use_windows": False},
               {"use_chars": False, "use_windows": False}, {"layers": 3}):
        m = train_predictor(toy_corpus[:2], small_config(epochs=1, **kw))
        names = set(m.nets[S_TYPE].params)
        assert ("char_emb" in names) == kw.get("use_chars", True)
        assert ("word_pad" in names) == kw.get("use_windows", True)
        assert len(m.predict(["unseen", "words"])) == 2


def test_training_deterministic_and_saved(tmp_path, toy_corpus):
    a = train_predictor(toy_corpus, small_config())
    b = train_predictor(toy_corpus, small_config())
    assert a.to_bytes() == b.to_bytes()
    a.save(tmp_path / "p.bin")
    c = Predictor.load(tmp_path / "p.bin")
    assert c.to_bytes() == a.to_bytes()
    words = toy_corpus[0].words()
    assert c.predict(words) == a.predict(words)
    assert a.digest() != train_predictor(toy_corpus, small_config(seed=9)).digest()


def test_bad_model_files(toy_corpus):
    data = train_predictor(toy_corpus[:1], small_config(epochs=1)).to_bytes()
    with pytest.raises(ModelFormatError):
        Predictor.from_bytes(b"XXXX" + data[4:])
    with pytest.raises(ModelFormatError):
        Predictor.from_bytes(data[:-8])
    blob = data.replace(b'"version": 1', b'"version": 7')
    with pytest.raises(ModelFormatError):
        Predictor.from_bytes(blob)


def test_dev_keeps_best_epoch(toy_corpus):
    m = train_predictor(toy_corpus, small_config(epochs=2), dev=toy_corpus[:2])
    assert set(m.evaluate(toy_corpus[:2])) == {"s_f1", "e_f1", "exact"}


def test_usage_errors(toy_corpus):
    with pytest.raises(UsageError):
        train_predictor([], small_config())
    with pytest.raises(UsageError):
        jackknife(toy_corpus, 1, small_config())
    with pytest.raises(UsageError):
        jackknife(toy_corpus[:3], 4, small_config())
    with pytest.raises(ValueError):
        Predictor.create(small_config(), toy_corpus).predict([])


def test_jackknife_partition_and_no_leakage():
    corpus = synth_treebank(5, 20, max_words=10)
    cfg = small_config(epochs=3)
    preds = jackknife(corpus, 2, cfg)
    assert len(preds) == 20
    assert [len(p) for p in preds] == [len(t.words()) for t in corpus]
    assert jackknife(corpus, 2, cfg) == preds
    full = train_predictor(corpus, cfg)
    assert [full.predict(t.words()) for t in corpus] != preds
