"""Command line front end.

Every subcommand reads a flat ``key = value`` config (``--config``, repeatable,
with ``include = other.cfg`` lines) and applies ``--set key=value`` and the
convenience flags on top.  Outputs go to ``-o`` or stdout and are byte
identical for identical inputs and seeds.
"""

from __future__ import annotations

import argparse
import hashlib
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from typing import Sequence

from .decoder import DEFAULT_BEAM, beam_parse, train as train_parser
from .evaluation import AlignmentError, breakdown_rows, format_report, format_table
from .hierarchy import (E_TYPE, S_TYPE, corpus_hierarchy_counts, exact_match,
                        extract_hierarchies, read_hierarchies, write_hierarchies)
from .parser_model import LinearModel, ModelFormatError
from .predictor import Predictor, PredictorConfig, jackknife, train_predictor
from .synth import synth_treebank
from .tensor import UsageError
from .transition import Grammar
from .treebank import (BARE_POS, DEFAULT_HEAD_RULES, HeadRules, PTBParseError,
                       TreeStructureError, binarize, read_ptb, write_ptb)

logger = logging.getLogger("lookahead_parser")


class ConfigError(ValueError):
    pass


class InputError(ValueError):
    pass


# ---------------------------------------------------------------- config

_PRED_FIELDS = {f.name: f for f in fields(PredictorConfig)}

DEFAULTS: dict[str, object] = {
    "seed": 1,
    "beam": DEFAULT_BEAM,
    "folds": 10,
    "workers": 1,
    "head_rules": "",
    "parser.epochs": 30,
    "parser.lookahead": True,
    "parser.early_update": True,
    "parser.shuffle": True,
    "parser.hash_bits": None,
    "parser.binary": False,
}
DEFAULTS.update({"predictor." + name: f.default for name, f in _PRED_FIELDS.items()})

_OPTIONAL_INT = {"parser.hash_bits"}
_OPTIONAL_FLOAT = {"predictor.clip"}


def _convert(key: str, text: str):
    if key not in DEFAULTS:
        raise ConfigError(f"unknown setting {key!r}")
    text = text.strip()
    default = DEFAULTS[key]
    if key in _OPTIONAL_INT or key in _OPTIONAL_FLOAT:
        if text.lower() in ("", "none"):
            return None
        kind = int if key in _OPTIONAL_INT else float
    else:
        kind = type(default)
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        return kind(text)
    except ValueError:
        raise ConfigError(f"bad value {text!r} for {key} (expected {kind.__name__})") from None


def read_config(path, settings: dict | None = None, _seen: tuple = ()) -> dict:
    """Read a flat config file into ``settings``; ``include`` lines nest."""
    settings = dict(DEFAULTS) if settings is None else settings
    path = os.path.abspath(path)
    if path in _seen:
        raise ConfigError(f"include cycle through {path}")
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    for no, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{no}: expected key = value")
        key, value = (x.strip() for x in line.split("=", 1))
        if key == "include":
            read_config(os.path.join(os.path.dirname(path), value), settings, _seen + (path,))
            continue
        try:
            settings[key] = _convert(key, value)
        except ConfigError as e:
            raise ConfigError(f"{path}:{no}: {e}") from None
    return settings


def resolve_settings(args) -> dict:
    settings = dict(DEFAULTS)
    for path in args.config or ():
        read_config(path, settings)
    for item in args.set or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        settings[key.strip()] = _convert(key.strip(), value)
    for flag, key in (("seed", "seed"), ("beam", "beam"), ("folds", "folds"),
                      ("workers", "workers")):
        value = getattr(args, flag, None)
        if value is not None:
            settings[key] = value
    if getattr(args, "seed", None) is not None:
        settings["predictor.seed"] = args.seed
    if getattr(args, "epochs", None) is not None:
        prefix = "predictor." if args.command in ("train-predictor", "jackknife") else "parser."
        settings[prefix + "epochs"] = args.epochs
    if getattr(args, "no_lookahead", False):
        settings["parser.lookahead"] = False
    if settings["beam"] < 1:
        raise ConfigError("beam must be at least 1")
    if settings["workers"] < 1:
        raise ConfigError("workers must be at least 1")
    return settings


def predictor_config(settings: dict) -> PredictorConfig:
    try:
        return PredictorConfig(**{name: settings["predictor." + name] for name in _PRED_FIELDS})
    except ValueError as e:
        raise ConfigError(str(e)) from None


def head_rules(settings: dict) -> HeadRules:
    path = settings["head_rules"]
    if not path:
        return DEFAULT_HEAD_RULES
    try:
        return HeadRules.from_file(path)
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from None


# ---------------------------------------------------------------- I/O helpers

def _read_text(path) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path, encoding="utf-8") as f:
        return f.read()


def _write(path, data: str | bytes) -> None:
    if path in (None, "-"):
        if isinstance(data, bytes):
            sys.stdout.buffer.write(data)
        else:
            sys.stdout.write(data)
        sys.stdout.flush()
        return
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(path, mode, **({} if mode == "wb" else {"encoding": "utf-8", "newline": "\n"})) as f:
        f.write(data)


def sha256_file(path) -> str:
    with open(path, "rb") as f:
        return hashlib.sha256(f.read()).hexdigest()


def read_sentences(path, need_pos: bool) -> list[list[tuple[str, str]]]:
    """Sentences from a treebank or from ``word_POS`` lines (one sentence per line).

    Plain tokens are accepted when POS tags are not needed.
    """
    text = _read_text(path)
    if text.lstrip().startswith("("):
        return [t.tagged() for t in read_ptb(text)]
    out = []
    for no, line in enumerate(text.splitlines(), 1):
        toks = line.split()
        if not toks:
            continue
        sent = []
        for tok in toks:
            word, sep, pos = tok.rpartition("_")
            if not sep or not word or not pos:
                if need_pos:
                    raise InputError(f"{path}:{no}: token {tok!r} is not word_POS")
                word, pos = tok, BARE_POS
            sent.append((word, pos))
        out.append(sent)
    return out


def load_treebank(path):
    trees = read_ptb(_read_text(path))
    if not trees:
        raise InputError(f"{path}: no trees")
    return trees


def load_predictions(path, sentences: Sequence[Sequence[str]]):
    """Hierarchies from a file, checked word by word against ``sentences``."""
    try:
        data = read_hierarchies(_read_text(path))
    except ValueError as e:
        raise InputError(f"{path}: {e}") from None
    if len(data) != len(sentences):
        raise InputError(f"{path}: {len(data)} sentences of hierarchies for "
                         f"{len(sentences)} input sentences")
    for k, ((words, _), sent) in enumerate(zip(data, sentences)):
        if list(words) != list(sent):
            raise InputError(f"{path}: sentence {k + 1} has different words than the input")
    return [hs for _, hs in data]


# ---------------------------------------------------------------- workers

_WORKER: dict = {}


def _init_worker(parser_path, predictor_path, beam):
    _WORKER.clear()
    _WORKER["parser"] = LinearModel.load(parser_path) if parser_path else None
    _WORKER["predictor"] = Predictor.load(predictor_path) if predictor_path else None
    _WORKER["beam"] = beam


def _predict_one(words):
    pred = _WORKER["predictor"]
    before = pred.stats["depth_cap_hits"]
    out = pred.predict(words)
    return out, pred.stats["depth_cap_hits"] - before


def _parse_one(job):
    sentence, hier = job
    predictor = _WORKER["predictor"]
    model = _WORKER["parser"]
    if hier is None and predictor is not None and model.lookahead:
        hier = predictor.predict([w for w, _ in sentence])
    return beam_parse(sentence, model, _WORKER["beam"], hier)


def _run(jobs, fn, initargs, workers: int):
    """Map ``fn`` over ``jobs``, in order, in this process or in a worker pool."""
    if workers <= 1 or len(jobs) <= 1:
        _init_worker(*initargs)
        return [fn(j) for j in jobs]
    chunk = max(1, len(jobs) // (workers * 4))
    with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=initargs) as ex:
        return list(ex.map(fn, jobs, chunksize=chunk))


# ---------------------------------------------------------------- subcommands

def cmd_extract(args, settings) -> int:
    trees = load_treebank(args.treebank)
    _write(args.output, write_hierarchies((t.words(), extract_hierarchies(t)) for t in trees))
    return 0


def cmd_train_predictor(args, settings) -> int:
    trees = load_treebank(args.treebank)
    dev = load_treebank(args.dev) if args.dev else None
    model = train_predictor(trees, predictor_config(settings), dev, until_exact=args.until_exact)
    _write(args.output, model.to_bytes())
    logger.info("predictor digest %s", model.digest())
    return 0


def cmd_predict(args, settings) -> int:
    sentences = [[w for w, _ in s] for s in read_sentences(args.input, need_pos=False)]
    results = _run(sentences, _predict_one, (None, args.model, 0), settings["workers"])
    capped = sum(c for _, c in results)
    if capped:
        logger.warning("%d words reached the hierarchy depth cap", capped)
    _write(args.output, write_hierarchies((s, h) for s, (h, _) in zip(sentences, results)))
    return 0


def cmd_jackknife(args, settings) -> int:
    trees = load_treebank(args.treebank)
    preds = jackknife(trees, settings["folds"], predictor_config(settings))
    _write(args.output, write_hierarchies((t.words(), h) for t, h in zip(trees, preds)))
    return 0


def cmd_train_parser(args, settings) -> int:
    rules = head_rules(settings)
    trees = load_treebank(args.treebank)
    lookahead = settings["parser.lookahead"]
    if lookahead and not args.hierarchies:
        raise ConfigError("lookahead features need --hierarchies "
                          "(or --no-lookahead for the baseline parser)")
    pred = load_predictions(args.hierarchies, [t.words() for t in trees]) if lookahead else None
    dev = load_treebank(args.dev) if args.dev else None
    dev_pred = None
    if dev is not None and lookahead:
        if not args.dev_hierarchies:
            raise ConfigError("--dev with lookahead features needs --dev-hierarchies")
        dev_pred = load_predictions(args.dev_hierarchies, [t.words() for t in dev])
    grammar = Grammar.from_trees(binarize(t, rules) for t in trees)
    model = train_parser(trees, grammar, settings["parser.epochs"], settings["beam"], pred,
                         lookahead, settings["seed"], settings["parser.shuffle"],
                         settings["parser.early_update"], dev, dev_pred, rules,
                         log_train_f1=args.log_train_f1, hash_bits=settings["parser.hash_bits"])
    model.meta.update({
        "beam": settings["beam"], "epochs": settings["parser.epochs"], "seed": settings["seed"],
        "head_rules": sha256_file(settings["head_rules"]) if settings["head_rules"] else "default",
    })
    if lookahead:
        model.meta["hierarchies_sha256"] = sha256_file(args.hierarchies)
    if args.predictor:
        model.meta["predictor_sha256"] = sha256_file(args.predictor)
    if settings["parser.binary"]:
        _write(args.output, model.to_bytes())
    else:
        _write(args.output, model.to_text().encode("utf-8"))
    return 0


def cmd_parse(args, settings) -> int:
    sentences = read_sentences(args.input, need_pos=True)
    model = LinearModel.load(args.model)
    hiers = [None] * len(sentences)
    predictor_path = None
    if model.lookahead:
        if args.hierarchies:
            hiers = load_predictions(args.hierarchies, [[w for w, _ in s] for s in sentences])
        elif args.predictor:
            predictor_path = args.predictor
            recorded = model.meta.get("predictor_sha256")
            if recorded and recorded != sha256_file(args.predictor):
                logger.warning("predictor %s differs from the one recorded in the parser model",
                               args.predictor)
        else:
            raise ConfigError("this parser uses lookahead features: "
                              "give --predictor or --hierarchies")
    trees = _run(list(zip(sentences, hiers)), _parse_one,
                 (args.model, predictor_path, settings["beam"]), settings["workers"])
    _write(args.output, write_ptb(trees))
    return 0


def _eval_hierarchies(args) -> str:
    gold_trees = load_treebank(args.gold)
    gold = [extract_hierarchies(t) for t in gold_trees]
    pred = load_predictions(args.predicted, [t.words() for t in gold_trees])
    counts = corpus_hierarchy_counts(pred, gold)
    lines = [f"sentences\t{len(gold)}"]
    for htype in (S_TYPE, E_TYPE):
        p, r, f = counts[htype].prf()
        lines.append(f"{htype}-type\tP={p * 100:.2f}\tR={r * 100:.2f}\tF1={f * 100:.2f}")
    lines.append(f"exact\t{exact_match(pred, gold) * 100:.2f}")
    return "\n".join(lines) + "\n"


def cmd_evaluate(args, settings) -> int:
    if args.hierarchies:
        _write(args.output, _eval_hierarchies(args))
        return 0
    gold = load_treebank(args.gold)
    pred = read_ptb(_read_text(args.predicted))
    _write(args.output, format_report(pred, gold))
    if args.table:
        _write(args.table, format_table(breakdown_rows(pred, gold)))
    return 0


def cmd_report(args, settings) -> int:
    gold = load_treebank(args.gold)
    pred = read_ptb(_read_text(args.predicted))
    _write(args.output, format_report(pred, gold) + "\n" + format_table(breakdown_rows(pred, gold)))
    return 0


def cmd_synth(args, settings) -> int:
    trees = synth_treebank(settings["seed"], args.n, args.min_words, args.max_words)
    _write(args.output, write_ptb(trees))
    return 0


# ---------------------------------------------------------------- argument parsing

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", action="append", metavar="FILE",
                        help="key = value settings file (repeatable, later wins)")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one setting (repeatable)")
    common.add_argument("-o", "--output", help="output file (default stdout)")
    common.add_argument("-v", "--verbose", action="store_true")
    common.add_argument("-q", "--quiet", action="store_true")

    ap = argparse.ArgumentParser(prog="lookahead-parser",
                                 description="Shift-reduce constituent parser with "
                                             "constituent hierarchy lookahead features.")
    sub = ap.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("extract-hierarchies", parents=[common],
                       help="gold s/e hierarchies of a treebank")
    p.add_argument("treebank")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train-predictor", parents=[common], help="train the hierarchy predictor")
    p.add_argument("treebank")
    p.add_argument("--dev", help="dev treebank; keeps the best epoch")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--until-exact", action="store_true",
                   help="stop once the training hierarchies are reproduced exactly")
    p.set_defaults(func=cmd_train_predictor)

    p = sub.add_parser("predict", parents=[common], help="predict hierarchies")
    p.add_argument("model")
    p.add_argument("input", help="treebank, word_POS lines or plain token lines")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("jackknife", parents=[common],
                       help="predict each fold with a model trained on the others")
    p.add_argument("treebank")
    p.add_argument("--folds", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_jackknife)

    p = sub.add_parser("train-parser", parents=[common], help="train the shift-reduce parser")
    p.add_argument("treebank")
    p.add_argument("--hierarchies", help="jackknifed hierarchies for the training treebank")
    p.add_argument("--predictor", help="predictor model used at parse time (recorded by hash)")
    p.add_argument("--dev")
    p.add_argument("--dev-hierarchies")
    p.add_argument("--no-lookahead", action="store_true", help="baseline features only")
    p.add_argument("--beam", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--log-train-f1", action="store_true")
    p.set_defaults(func=cmd_train_parser)

    p = sub.add_parser("parse", parents=[common], help="parse word_POS sentences")
    p.add_argument("model")
    p.add_argument("input", help="word_POS lines, or a treebank to re-parse")
    p.add_argument("--predictor")
    p.add_argument("--hierarchies")
    p.add_argument("--beam", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("evaluate", parents=[common], help="bracketing (or hierarchy) scores")
    p.add_argument("gold")
    p.add_argument("predicted")
    p.add_argument("--hierarchies", action="store_true",
                   help="PREDICTED is a hierarchy file; score it against the gold trees")
    p.add_argument("--table", help="also write the breakdown table here")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", parents=[common],
                       help="scores with breakdowns by label, span length and sentence length")
    p.add_argument("gold")
    p.add_argument("predicted")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic treebank")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--seed", type=int)
    p.add_argument("--min-words", type=int, default=5)
    p.add_argument("--max-words", type=int, default=40)
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s", force=True)
    try:
        settings = resolve_settings(args)
        return args.func(args, settings)
    except (ConfigError, UsageError) as e:
        print(f"lookahead-parser: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"lookahead-parser: no such file: {e.filename}", file=sys.stderr)
        return 1
    except ModelFormatError as e:
        print(f"lookahead-parser: {e}", file=sys.stderr)
        return 3
    except (PTBParseError, TreeStructureError, InputError, AlignmentError) as e:
        print(f"lookahead-parser: {e}", file=sys.stderr)
        return 4
    except OSError as e:
        print(f"lookahead-parser: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
