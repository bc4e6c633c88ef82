"""Command-line entry point: ``casrel {train,extract,eval,stats,synth}``.

Every subcommand accepts ``--config PATH``, a JSON object whose keys mirror the
long flag names (``"train"``, ``"seed"``, ...) plus optional ``"encoder"`` and
``"training"`` sub-objects. Flags given on the command line win over the file.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import fields

from .checkpoint import CheckpointError, write_atomic
from .datasets import CorpusError, RelationSet, corpus_stats, load_corpus, read_records
from .encoder import EncoderConfig, EncoderError, Vocabulary
from .evaluation import MODES, evaluate_predictions
from .extraction import extract_corpus, write_predictions
from .model import SUPERVISION_MODES, CasRelModel
from .synthetic import SynthConfig, SynthError, generate_synthetic, write_synthetic
from .training import TrainConfig, TrainingDiverged, train

log = logging.getLogger("casrel")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class ConfigError(ValueError):
    """Bad flags or config file; reported with exit status 2."""


# ------------------------------------------------------------------ parsing


def _common(p):
    p.add_argument("--config", metavar="PATH", help="JSON config file; command-line flags override its values")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser():
    parser = argparse.ArgumentParser(prog="casrel", description="Cascade binary tagging for relational triple extraction.")
    sub = parser.add_subparsers(dest="command", metavar="{train,extract,eval,stats,synth}")
    sub.required = True

    p = sub.add_parser("train", help="train a model and write a checkpoint directory")
    _common(p)
    p.add_argument("--input", "--train", dest="train", metavar="PATH", help="training corpus (JSON lines)")
    p.add_argument("--val", metavar="PATH", help="validation corpus used for early stopping")
    p.add_argument("--output", metavar="DIR", help="output directory for model.ckpt, vocab.txt, relations.json, history.json")
    p.add_argument("--relations", metavar="PATH", help="relation list; by default collected from the corpora")
    p.add_argument("--encoder", dest="encoder_kind", choices=("transformer", "bilstm"), help="encoder kind (default transformer)")
    p.add_argument("--hidden-size", type=int, metavar="D", help="hidden size d (default 32)")
    p.add_argument("--layers", type=int, metavar="N", help="encoder layers (default 2)")
    p.add_argument("--heads", type=int, metavar="H", help="attention heads (default 4)")
    p.add_argument("--max-len", type=int, metavar="L", help="maximum tokens per sentence (default 100)")
    p.add_argument("--lr", type=float, help="Adam learning rate (default 1e-3)")
    p.add_argument("--batch-size", type=int, help="sentences per mini-batch (default 6)")
    p.add_argument("--epochs", type=int, dest="max_epochs", metavar="N", help="maximum epochs (default 100)")
    p.add_argument("--patience", type=int, help="stop after this many epochs without validation improvement (default 7)")
    p.add_argument("--supervision", choices=SUPERVISION_MODES, help="subjects supervised per sentence (default all-subjects)")
    p.add_argument("--threshold", type=float, help="tag threshold used for validation decoding (default 0.5)")
    p.add_argument("--seed", type=int, help="seed for initialisation, shuffling and sampling (required)")

    p = sub.add_parser("extract", help="extract triples from a corpus with a trained model")
    _common(p)
    p.add_argument("--model", metavar="PATH", help="checkpoint file or training output directory")
    p.add_argument("--input", metavar="PATH", help="sentences to read (JSON lines with a 'text' field)")
    p.add_argument("--output", metavar="PATH", help="prediction file to write (JSON lines)")
    p.add_argument("--threshold", type=float, help="tag threshold (default 0.5)")

    p = sub.add_parser("eval", help="score predictions against gold triples")
    _common(p)
    p.add_argument("--pred", "--input", dest="pred", metavar="PATH", help="prediction file (JSON lines)")
    p.add_argument("--gold", metavar="PATH", help="gold corpus (JSON lines)")
    p.add_argument("--mode", choices=MODES, help="partial (entity heads) or exact (full strings); default partial")
    p.add_argument("--output", metavar="PATH", help="write the report as JSON here; a .txt table is written next to it")

    p = sub.add_parser("stats", help="overlap-category and triple-count statistics of corpora")
    _common(p)
    p.add_argument("--input", metavar="PATH", nargs="+", help="one or more corpus files")
    p.add_argument("--output", metavar="PATH", help="write the statistics as JSON here")

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    _common(p)
    p.add_argument("--output", metavar="PATH", help="corpus file to write (JSON lines)")
    p.add_argument("--relations-out", metavar="PATH", help="also write the relation list here")
    p.add_argument("--n", type=int, dest="num_sentences", help="number of sentences (default 200)")
    p.add_argument("--num-relations", type=int, help="relation count (default 4)")
    p.add_argument("--vocab-size", type=int, help="total vocabulary size (default 80)")
    p.add_argument("--mix", type=float, nargs=3, metavar=("NORMAL", "EPO", "SEO"), help="overlap mix (default 0.4 0.3 0.3)")
    p.add_argument("--seed", type=int, help="generator seed (required)")
    return parser


def _settings(args):
    """Merge the config file under the explicit flags."""
    cfg = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigError(f"config {args.config} must hold a JSON object")
    for key, value in vars(args).items():
        if key not in ("command", "config", "verbose") and value is not None:
            cfg[key] = value
    return cfg


def _require(cfg, *keys):
    missing = [k for k in keys if cfg.get(k) is None]
    if missing:
        raise ConfigError("missing required setting(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def _existing(path, what):
    if not os.path.exists(path):
        raise ConfigError(f"{what} not found: {path}")
    return path


def _pick(cls, values):
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} setting(s): {', '.join(sorted(unknown))}")
    return values


# ----------------------------------------------------------------- commands


def cmd_train(cfg):
    _require(cfg, "train", "output", "seed")
    _existing(cfg["train"], "training corpus")
    if cfg.get("val"):
        _existing(cfg["val"], "validation corpus")

    enc = cfg.get("encoder", {})
    if not isinstance(enc, dict):
        raise ConfigError('"encoder" in a config file must be an object of encoder settings')
    tr = cfg.get("training", {})
    if not isinstance(tr, dict):
        raise ConfigError('"training" in a config file must be an object of training settings')
    enc, tr = dict(enc), dict(tr)
    for flag, key in (("encoder_kind", "kind"), ("hidden_size", "hidden_size"), ("layers", "num_layers"),
                      ("heads", "num_heads"), ("max_len", "max_len")):
        if cfg.get(flag) is not None:
            enc[key] = cfg[flag]
    for key in ("lr", "batch_size", "max_epochs", "patience", "threshold", "seed"):
        if cfg.get(key) is not None:
            tr[key] = cfg[key]
    if cfg.get("supervision") is not None:
        tr["mode"] = cfg["supervision"]
    try:
        tconf = TrainConfig(**_pick(TrainConfig, tr))
        max_len = int(enc.get("max_len", EncoderConfig.max_len))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid training settings: {exc}") from None

    relations = RelationSet.load(_existing(cfg["relations"], "relation file")) if cfg.get("relations") else None
    unknown = "error" if relations is not None else "extend"
    train_corpus = load_corpus(cfg["train"], relations, max_len, unknown)
    relations = train_corpus.relations
    val_sentences = load_corpus(cfg["val"], relations, max_len, unknown).sentences if cfg.get("val") else []
    if not val_sentences:
        log.warning("no validation corpus; early stopping watches training-set F1")
        val_sentences = train_corpus.sentences
    if not len(relations):
        raise ConfigError("the training corpus defines no relations")

    vocab = Vocabulary.build(train_corpus)
    enc["vocab_size"] = len(vocab)
    try:
        econf = EncoderConfig(**_pick(EncoderConfig, enc))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid encoder settings: {exc}") from None

    out = cfg["output"]
    os.makedirs(out, exist_ok=True)
    model = CasRelModel.initialize(econf, relations, vocab, seed=tconf.seed)
    vocab.save(os.path.join(out, "vocab.txt"))
    relations.save(os.path.join(out, "relations.json"))
    ckpt = os.path.join(out, "model.ckpt")

    def on_best(m, epoch):
        m.save(ckpt)
        log.info("epoch %d: new best, checkpoint written", epoch)

    best, history = train(model, train_corpus.sentences, val_sentences, tconf,
                          on_best=on_best, log_path=os.path.join(out, "train_log.jsonl"))
    best.save(ckpt)
    write_atomic(os.path.join(out, "history.json"), json.dumps(history.to_dict(), indent=1) + "\n")
    print(f"best epoch {history.best_epoch} val F1 {history.best_f1:.4f}; wrote {ckpt}")
    return EXIT_OK


def _load_model(path):
    if os.path.isdir(path):
        path = os.path.join(path, "model.ckpt")
    return CasRelModel.load(_existing(path, "checkpoint"))


def cmd_extract(cfg):
    _require(cfg, "model", "input", "output")
    _existing(cfg["input"], "input corpus")
    model = _load_model(cfg["model"])
    threshold = float(cfg.get("threshold", 0.5))
    if not 0.0 < threshold < 1.0:
        raise ConfigError("threshold must be in (0, 1)")
    texts = []
    for where, rec in read_records(cfg["input"]):
        if not isinstance(rec, dict) or not isinstance(rec.get("text"), str):
            raise CorpusError(f"{where}: record needs a string 'text' field")
        texts.append(rec["text"])
    preds = extract_corpus([t.split() for t in texts], model, threshold)
    write_predictions(cfg["output"], texts, preds)
    print(f"wrote {sum(map(len, preds))} triples for {len(texts)} sentences to {cfg['output']}")
    return EXIT_OK


def _triples(where, rec):
    if not isinstance(rec, dict) or not isinstance(rec.get("triple_list", []), list):
        raise CorpusError(f"{where}: record needs a 'triple_list' array")
    out = []
    for t in rec.get("triple_list", []):
        if not (isinstance(t, (list, tuple)) and len(t) == 3 and all(isinstance(x, str) for x in t)):
            raise CorpusError(f"{where}: malformed triple {t!r}")
        out.append(tuple(t))
    return out


def cmd_eval(cfg):
    _require(cfg, "pred", "gold")
    mode = cfg.get("mode", "partial")
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    preds = [_triples(w, r) for w, r in read_records(_existing(cfg["pred"], "prediction file"))]
    golds = [_triples(w, r) for w, r in read_records(_existing(cfg["gold"], "gold corpus"))]
    if len(preds) != len(golds):
        raise CorpusError(f"{len(preds)} prediction records but {len(golds)} gold records")
    report = evaluate_predictions(preds, golds, mode)
    table = report.format_table()
    print(table)
    if cfg.get("output"):
        write_atomic(cfg["output"], json.dumps(report.to_dict(), indent=1) + "\n")
        write_atomic(os.path.splitext(cfg["output"])[0] + ".txt", table + "\n")
    return EXIT_OK


def cmd_stats(cfg):
    _require(cfg, "input")
    paths = cfg["input"] if isinstance(cfg["input"], list) else [cfg["input"]]
    result = {}
    for path in paths:
        corpus = load_corpus(_existing(path, "corpus"), max_len=10**9)
        st = corpus_stats(corpus.sentences)
        print(st.format_table(os.path.basename(path)))
        print()
        result[path] = st.to_dict()
    if cfg.get("output"):
        write_atomic(cfg["output"], json.dumps(result, indent=1) + "\n")
    return EXIT_OK


def cmd_synth(cfg):
    _require(cfg, "output", "seed")
    values = {k: cfg[k] for k in ("num_sentences", "num_relations", "vocab_size", "seed",
                                  "max_entity_words", "max_fillers") if cfg.get(k) is not None}
    if cfg.get("mix") is not None:
        values["mix"] = tuple(cfg["mix"])
    try:
        corpus = generate_synthetic(SynthConfig(**values))
    except (SynthError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    write_synthetic(corpus, cfg["output"], cfg.get("relations_out"))
    print(f"wrote {len(corpus.records)} sentences to {cfg['output']}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "extract": cmd_extract, "eval": cmd_eval, "stats": cmd_stats, "synth": cmd_synth}


def run(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: usage errors exit 2, --help exits 0
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](_settings(args))
    except ConfigError as exc:
        print(f"casrel {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusError, CheckpointError, EncoderError, TrainingDiverged, OSError, ValueError) as exc:
        print(f"casrel {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
