"""Command-line interface: build-vocab, augment-preview, train, embed, eval-classify, eval-cluster.

Option resolution order is defaults < preset < config file < explicit flags.
The fully resolved configuration is echoed to stderr at startup (suppress with
--quiet) so any run can be reproduced by pasting the echoed values into a
config file. Config files are flat ``key = value`` text.
"""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import augment as aug
from . import evaluation as ev
from .checkpoint import CheckpointError, load_checkpoint
from .corpus import Corpus, CorpusError, Vocabulary, build_vocab, iter_corpus_lines, load_corpus, tokenize
from .trainer import ConfigError, PRESETS, TrainConfig, Trainer, TrainingDivergedError

EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_CONFIG = 4
EXIT_DATA = 1

# config-file spellings that differ from the internal option names
FILE_KEY_ALIASES = {"lambda": "lam", "strategy": "aug", "learning_rate": "lr",
                    "doc_sample": "doc_sample_size", "batch": "batch_size"}


class UsageError(Exception):
    """A required option is missing (exit code 2, like a parse failure)."""


LEXICON_FILES = {
    "wordnet": "synonyms_wordnet.tsv",
    "ppdb": "synonyms_ppdb.tsv",
    "uninformative": "synonyms_wordnet.tsv",
    "antonym": "antonyms.tsv",
    "backtranslation": "paraphrases.tsv",
}


def default_lexicon_dir() -> Path:
    return Path(resources.files("docembed").joinpath("data/lexicons"))


def read_config_file(path) -> dict[str, str]:
    """Flat ``key = value`` file; '#' starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key = key.strip().replace("-", "_")
            out[FILE_KEY_ALIASES.get(key, key)] = value.strip()
    return out


def _coerce(value: str, like):
    if isinstance(like, bool):
        lowered = value.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {value!r}")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


def resolve_options(args: argparse.Namespace, defaults: dict, file_values: dict) -> dict:
    """defaults < preset < config file < flags; flags parse with default=None."""
    resolved = dict(defaults)
    preset = getattr(args, "preset", None) or file_values.get("preset")
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r} (have {sorted(PRESETS)})")
        for key, value in PRESETS[preset].items():
            if key in resolved:
                resolved[key] = value
    for key, raw in file_values.items():
        if key in resolved:
            resolved[key] = _coerce(raw, resolved[key]) if resolved[key] is not None else raw
    for key in resolved:
        cli_value = getattr(args, key, None)
        if cli_value is not None:
            resolved[key] = cli_value
    return resolved


def echo_config(resolved: dict, quiet: bool, command: str):
    if quiet:
        return
    for key in sorted(resolved):
        print(f"config {command}.{key} = {resolved[key]}", file=sys.stderr)


def _corpus_from_options(opts) -> Corpus:
    vocab = Vocabulary.load(opts["vocab"]) if opts.get("vocab") else None
    return load_corpus(opts["corpus"], test_path=opts.get("corpus_test") or None,
                       min_count=opts["min_count"], vocab=vocab)


def _load_lexicon_for(strategy: str, opts, vocab: Vocabulary) -> aug.AugmentationLexicon:
    lex_dir = Path(opts.get("lexicon_dir") or default_lexicon_dir())

    def pick(explicit_key: str, kinds: tuple[str, ...]):
        explicit = opts.get(explicit_key)
        if explicit:
            return explicit
        if strategy in kinds:
            path = lex_dir / LEXICON_FILES[strategy]
            if not path.exists():
                raise FileNotFoundError(f"lexicon file not found: {path}")
            return path
        return None

    return aug.load_lexicon(
        vocab,
        synonym_path=pick("synonyms", ("wordnet", "ppdb", "uninformative")),
        antonym_path=pick("antonyms", ("antonym",)),
        paraphrase_path=pick("paraphrases", ("backtranslation",)),
    )


# ---------------------------------------------------------------------------
# subcommands

def cmd_build_vocab(args, file_values) -> int:
    opts = resolve_options(args, {
        "corpus": None, "corpus_test": None, "min_count": 10, "out": None,
    }, file_values)
    if not opts["corpus"] or not opts["out"]:
        raise UsageError("build-vocab needs --corpus and --out")
    echo_config(opts, args.quiet, "build-vocab")
    token_lists = []
    for path in filter(None, [opts["corpus"], opts["corpus_test"]]):
        for _, _, text in iter_corpus_lines(path):
            token_lists.append(tokenize(text))
    vocab = build_vocab(token_lists, min_count=opts["min_count"])
    vocab.save(opts["out"])
    if not args.quiet:
        print(f"wrote {len(vocab)} words to {opts['out']}", file=sys.stderr)
    return 0


def cmd_augment_preview(args, file_values) -> int:
    opts = resolve_options(args, {
        "corpus": None, "corpus_test": None, "vocab": None, "min_count": 10,
        "aug": None, "doc_id": 0, "samples": 3, "seed": 1,
        "lexicon_dir": None, "synonyms": None, "antonyms": None, "paraphrases": None,
        "antonym_prob": 0.15, "uninformative_threshold": 10,
    }, file_values)
    if not opts["corpus"] or not opts["aug"]:
        raise UsageError("augment-preview needs --corpus and --aug")
    echo_config(opts, args.quiet, "augment-preview")

    corpus = _corpus_from_options(opts)
    lex = _load_lexicon_for(opts["aug"], opts, corpus.vocab)
    strategy = aug.AugmentStrategy(kind=opts["aug"], antonym_prob=opts["antonym_prob"],
                                   uninformative_threshold=opts["uninformative_threshold"])
    by_id = {d.doc_id: d for d in corpus.documents}
    if opts["doc_id"] not in by_id:
        raise CorpusError(f"no document with id {opts['doc_id']}")
    doc = by_id[opts["doc_id"]]

    def words(tokens):
        return " ".join(corpus.vocab.words[t] for t in tokens)

    print(f"original : {words(doc.tokens)}")
    for i in range(opts["samples"]):
        rng = aug.augmentation_rng(opts["seed"], doc.doc_id, i)
        view = aug.augment(doc, strategy, lex, rng)
        print(f"sample {i:2d}: {words(view.tokens)}")
    return 0


TRAIN_DEFAULTS = {
    "corpus": None, "corpus_test": None, "vocab": None, "min_count": 10,
    "dim": 100, "window": 5, "negatives": 5, "doc_sample_size": 5,
    "batch_size": 4096, "lr": 1e-3, "epochs": 20, "dropout": 0.3,
    "lam": 1.0, "tau": 1.0, "framework": "simclr", "aug": "none",
    "antonym_prob": 0.15, "uninformative_threshold": 10,
    "predictor_hidden": 64, "simsiam_literal": False, "view_cache": 0,
    "subsample": 0.0, "seed": 1, "threads": 1, "deterministic": True,
    "early_stop": True, "patience": 3,
    "lexicon_dir": None, "synonyms": None, "antonyms": None, "paraphrases": None,
    "checkpoint_out": None, "report_dir": None,
}

# keys that PRESETS uses but TRAIN_DEFAULTS spells differently
_PRESET_ALIASES = {"strategy": "aug"}


def _train_config_from(opts) -> TrainConfig:
    return TrainConfig(
        dim=opts["dim"], window=opts["window"], negatives=opts["negatives"],
        doc_sample_size=opts["doc_sample_size"], batch_size=opts["batch_size"],
        learning_rate=opts["lr"], epochs=opts["epochs"], dropout=opts["dropout"],
        lam=opts["lam"], tau=opts["tau"], framework=opts["framework"],
        strategy=opts["aug"], antonym_prob=opts["antonym_prob"],
        uninformative_threshold=opts["uninformative_threshold"],
        predictor_hidden=opts["predictor_hidden"],
        simsiam_literal=opts["simsiam_literal"], view_cache=opts["view_cache"],
        subsample=opts["subsample"], seed=opts["seed"],
        threads=opts["threads"], deterministic=opts["deterministic"],
        early_stop=opts["early_stop"], patience=opts["patience"],
    )


def cmd_train(args, file_values) -> int:
    defaults = dict(TRAIN_DEFAULTS)
    opts = resolve_options(args, defaults, file_values)
    # resolve_options only handles keys present in defaults; map preset names
    preset_name = getattr(args, "preset", None) or file_values.get("preset")
    if preset_name:
        preset = PRESETS[preset_name]
        for key, alias in _PRESET_ALIASES.items():
            if key in preset and getattr(args, alias, None) is None \
                    and alias not in file_values:
                opts[alias] = preset[key]
    if not opts["corpus"]:
        raise UsageError("train needs --corpus")
    echo_config(opts, args.quiet, "train")

    corpus = _corpus_from_options(opts)
    config = _train_config_from(opts)
    lexicon = None
    if config.lam > 0 and config.strategy != "none":
        lexicon = _load_lexicon_for(config.strategy, opts, corpus.vocab)

    trainer = Trainer(corpus, config, lexicon=lexicon)
    trainer.run()

    if opts["checkpoint_out"]:
        trainer.save(opts["checkpoint_out"])
        if not args.quiet:
            print(f"checkpoint written to {opts['checkpoint_out']}", file=sys.stderr)
    if opts["report_dir"]:
        from .report import write_loss_report

        paths = write_loss_report(trainer.history, opts["report_dir"])
        if not args.quiet:
            print("report files: " + " ".join(paths), file=sys.stderr)
    if not args.quiet:
        last = trainer.history[-1] if trainer.history else None
        if last:
            print(f"finished after {last.step} steps; final batch loss "
                  f"{last.loss:.4f} (backbone {last.backbone:.4f})", file=sys.stderr)
    return 0


def cmd_embed(args, file_values) -> int:
    opts = resolve_options(args, {
        "corpus": None, "corpus_test": None, "vocab": None, "min_count": 10,
        "checkpoint": None, "out": None, "format": "text",
        "labels_out": None, "split_out": None,
    }, file_values)
    if not opts["corpus"] or not opts["checkpoint"] or not opts["out"]:
        raise UsageError("embed needs --corpus, --checkpoint, and --out")
    echo_config(opts, args.quiet, "embed")

    corpus = _corpus_from_options(opts)
    ckpt = load_checkpoint(opts["checkpoint"], vocab=corpus.vocab)
    embeddings = ev.embed_corpus(corpus, ckpt.params)
    ev.export_embeddings(embeddings, opts["out"], format=opts["format"])

    if opts["labels_out"]:
        with open(opts["labels_out"], "w", encoding="utf-8") as fh:
            for doc in corpus.documents:
                if doc.label is not None:
                    fh.write(f"{doc.doc_id}\t{corpus.label_names[doc.label]}\n")
    if opts["split_out"]:
        with open(opts["split_out"], "w", encoding="utf-8") as fh:
            for doc in corpus.documents:
                fh.write(f"{doc.doc_id}\t{doc.split}\n")
    if not args.quiet:
        print(f"wrote {embeddings.n} embeddings to {opts['out']}", file=sys.stderr)
    return 0


def _read_id_map(path) -> dict[int, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            doc_field, sep, value = line.partition("\t")
            if not sep:
                raise CorpusError(f"{path}:{lineno}: expected 'doc_id<TAB>value'")
            out[int(doc_field)] = value
    return out


def cmd_eval_classify(args, file_values) -> int:
    opts = resolve_options(args, {
        "embeddings": None, "labels": None, "split": None,
        "l2": 1.0, "max_iter": 500, "seed": 1, "report_dir": None,
    }, file_values)
    for key in ("embeddings", "labels", "split"):
        if not opts[key]:
            raise UsageError(f"eval-classify needs --{key}")
    echo_config(opts, args.quiet, "eval-classify")

    emb = ev.import_embeddings(opts["embeddings"])
    labels_by_id = _read_id_map(opts["labels"])
    split_by_id = _read_id_map(opts["split"])
    label_names = sorted(set(labels_by_id.values()))
    label_ids = {name: i for i, name in enumerate(label_names)}

    rows = [i for i, doc_id in enumerate(emb.doc_ids) if int(doc_id) in labels_by_id]
    y = np.asarray([label_ids[labels_by_id[int(emb.doc_ids[i])]] for i in rows])
    splits = [split_by_id.get(int(emb.doc_ids[i]), "train") for i in rows]
    X = emb.vectors[rows]
    train_rows = [j for j, s in enumerate(splits) if s == "train"]
    test_rows = [j for j, s in enumerate(splits) if s == "test"]
    if not train_rows or not test_rows:
        raise CorpusError("need both train and test rows for classification")

    # l2 is an inverse strength C (larger C = weaker penalty), like common
    # linear-classifier CLIs; the objective's penalty weight is 1/C.
    weights = ev.fit_logistic_regression(X[train_rows], y[train_rows],
                                         l2=1.0 / opts["l2"], max_iter=opts["max_iter"])
    report = ev.timed_report(
        "classify", "error_rate",
        lambda: ev.classification_error(weights, X[test_rows], y[test_rows]),
        config={"l2": opts["l2"], "max_iter": opts["max_iter"],
                "n_train": len(train_rows), "n_test": len(test_rows)},
        seed=opts["seed"])
    print(report.to_json())

    if opts["report_dir"]:
        from .report import write_classification_report

        pred = ev.predict_classes(weights, X[test_rows])
        per_class = {}
        y_test = y[test_rows]
        for name, cid in label_ids.items():
            mask = y_test == cid
            if mask.any():
                per_class[name] = float((pred[mask] != cid).mean())
        write_classification_report(report, per_class, opts["report_dir"])
    return 0


def cmd_eval_cluster(args, file_values) -> int:
    opts = resolve_options(args, {
        "embeddings": None, "labels": None, "k": None,
        "restarts": 10, "seed": 1, "threads": 1, "report_dir": None,
    }, file_values)
    for key in ("embeddings", "labels", "k"):
        if opts[key] is None:
            raise UsageError(f"eval-cluster needs --{key}")
    opts["k"] = int(opts["k"])  # may arrive as a config-file string
    echo_config(opts, args.quiet, "eval-cluster")

    emb = ev.import_embeddings(opts["embeddings"])
    labels_by_id = _read_id_map(opts["labels"])
    label_names = sorted(set(labels_by_id.values()))
    label_ids = {name: i for i, name in enumerate(label_names)}
    rows = [i for i, doc_id in enumerate(emb.doc_ids) if int(doc_id) in labels_by_id]
    y = np.asarray([label_ids[labels_by_id[int(emb.doc_ids[i])]] for i in rows])

    assignment = ev.kmeans_cluster(emb.vectors[rows], k=opts["k"],
                                   seed=opts["seed"], restarts=opts["restarts"],
                                   threads=opts["threads"])
    report = ev.timed_report(
        "cluster", "nmi", lambda: ev.nmi(assignment, y),
        config={"k": opts["k"], "restarts": opts["restarts"], "n": len(rows)},
        seed=opts["seed"])
    print(report.to_json())

    if opts["report_dir"]:
        from .report import write_clustering_report

        write_clustering_report(report, assignment, opts["report_dir"])
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="docembed",
        description="Train and evaluate contrastively augmented document embeddings.")
    parser.add_argument("--config", default=None, help="flat key = value config file")
    parser.add_argument("--quiet", action="store_true", default=False,
                        help="suppress config echo")
    # global flags are also accepted after the subcommand; SUPPRESS keeps the
    # subparser from clobbering values parsed at the top level
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="flat key = value config file")
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS,
                        help="suppress config echo")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_corpus_opts(p):
        p.add_argument("--corpus", help="train corpus file (label<TAB>text lines)")
        p.add_argument("--corpus-test", dest="corpus_test", help="test corpus file")
        p.add_argument("--vocab", help="prebuilt vocabulary file")
        p.add_argument("--min-count", dest="min_count", type=int,
                       help="vocabulary frequency threshold (default 10)")

    def add_lexicon_opts(p):
        p.add_argument("--lexicon-dir", dest="lexicon_dir",
                       help="directory with the packaged lexicon TSV names")
        p.add_argument("--synonyms", help="synonym TSV (word<TAB>cand1,cand2,...)")
        p.add_argument("--antonyms", help="antonym TSV (word<TAB>negated phrase)")
        p.add_argument("--paraphrases", help="paraphrase TSV (doc_id<TAB>text)")
        p.add_argument("--antonym-prob", dest="antonym_prob", type=float,
                       help="per-token antonym replacement probability (default 0.15)")
        p.add_argument("--uninformative-threshold", dest="uninformative_threshold",
                       type=int, help="rare-word frequency threshold (default 10)")

    p = sub.add_parser("build-vocab", parents=[common], help="write the word<TAB>frequency vocabulary file")
    add_corpus_opts(p)
    p.add_argument("--out", help="output vocabulary path")
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("augment-preview", parents=[common], help="print sampled augmentations of one document")
    add_corpus_opts(p)
    add_lexicon_opts(p)
    p.add_argument("--aug", choices=aug.STRATEGY_KINDS, help="augmentation strategy")
    p.add_argument("--doc-id", dest="doc_id", type=int, help="document id (default 0)")
    p.add_argument("-n", "--samples", dest="samples", type=int,
                   help="number of samples to print (default 3)")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_augment_preview)

    p = sub.add_parser("train", parents=[common], help="train embeddings and write a checkpoint")
    add_corpus_opts(p)
    add_lexicon_opts(p)
    p.add_argument("--preset", choices=sorted(PRESETS),
                   help="per-dataset hyperparameter preset")
    p.add_argument("--dim", type=int, help="embedding dimensionality (default 100)")
    p.add_argument("--window", type=int, help="context window per side (default 5)")
    p.add_argument("--negatives", type=int, help="negative samples per window (default 5)")
    p.add_argument("--doc-sample", dest="doc_sample_size", type=int,
                   help="words sampled to form the training document vector (default 5)")
    p.add_argument("--batch", dest="batch_size", type=int,
                   help="documents per mini-batch (default 4096)")
    p.add_argument("--lr", type=float, help="learning rate (default 1e-3)")
    p.add_argument("--epochs", type=int, help="training epochs (default 20)")
    p.add_argument("--dropout", type=float, help="dropout on training inputs (default 0.3)")
    p.add_argument("--lambda", dest="lam", type=float,
                   help="contrastive loss weight (default 1.0)")
    p.add_argument("--tau", type=float, help="softmax temperature (default 1.0)")
    p.add_argument("--framework", choices=("simclr", "simsiam"),
                   help="contrastive framework (default simclr)")
    p.add_argument("--aug", choices=aug.STRATEGY_KINDS + ("none",),
                   help="augmentation strategy (default none)")
    p.add_argument("--predictor-hidden", dest="predictor_hidden", type=int,
                   help="predictor MLP hidden width (default 64)")
    p.add_argument("--subsample", type=float,
                   help="frequent-word subsampling threshold; experimental, "
                        "0 disables (default)")
    p.add_argument("--view-cache", dest="view_cache", type=int,
                   help="cache K augmented views per document, cycling by epoch "
                        "(default 0 = fresh view every epoch)")
    p.add_argument("--simsiam-as-printed", dest="simsiam_literal",
                   action="store_const", const=True,
                   help="stop gradients on the predictor outputs instead "
                        "(ablation of the usual orientation)")
    p.add_argument("--seed", type=int, help="global seed (default 1)")
    p.add_argument("--threads", type=int, help="gradient worker threads (default 1)")
    p.add_argument("--deterministic", action=argparse.BooleanOptionalAction,
                   help="fixed-order gradient reduction (default on)")
    p.add_argument("--early-stop", dest="early_stop", action=argparse.BooleanOptionalAction,
                   help="stop on backbone-loss plateau (default on)")
    p.add_argument("--patience", type=int, help="plateau epochs before stopping (default 3)")
    p.add_argument("--checkpoint-out", dest="checkpoint_out", help="checkpoint output path")
    p.add_argument("--report-dir", dest="report_dir",
                   help="write loss_history.csv and loss_curve.png here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("embed", parents=[common], help="embed every document with a trained checkpoint")
    add_corpus_opts(p)
    p.add_argument("--checkpoint", help="trained checkpoint path")
    p.add_argument("--out", help="embedding output path")
    p.add_argument("--format", choices=("text", "binary"), help="output format (default text)")
    p.add_argument("--labels-out", dest="labels_out", help="write doc_id<TAB>label here")
    p.add_argument("--split-out", dest="split_out", help="write doc_id<TAB>split here")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("eval-classify", parents=[common],
                       help="linear classification error of frozen embeddings")
    p.add_argument("--embeddings", help="embedding file (text or binary)")
    p.add_argument("--labels", help="doc_id<TAB>label file")
    p.add_argument("--split", help="doc_id<TAB>train|test file")
    p.add_argument("--l2", type=float,
                   help="inverse regularization strength C (penalty weight is 1/C, default 1.0)")
    p.add_argument("--max-iter", dest="max_iter", type=int,
                   help="solver iteration cap (default 500)")
    p.add_argument("--seed", type=int)
    p.add_argument("--report-dir", dest="report_dir",
                   help="write report.jsonl, per_class_error.{csv,png} here")
    p.set_defaults(func=cmd_eval_classify)

    p = sub.add_parser("eval-cluster", parents=[common], help="k-means clustering NMI of frozen embeddings")
    p.add_argument("--embeddings", help="embedding file (text or binary)")
    p.add_argument("--labels", help="doc_id<TAB>label file")
    p.add_argument("--k", type=int, help="number of clusters")
    p.add_argument("--restarts", type=int, help="k-means restarts (default 10)")
    p.add_argument("--threads", type=int, help="parallel restart workers (default 1)")
    p.add_argument("--seed", type=int)
    p.add_argument("--report-dir", dest="report_dir",
                   help="write report.jsonl, cluster_sizes.{csv,png} here")
    p.set_defaults(func=cmd_eval_cluster)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    file_values = {}
    try:
        if args.config:
            file_values = read_config_file(args.config)
        return args.func(args, file_values)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except (ConfigError, CheckpointError) as exc:
        print(f"error: config conflict: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CorpusError, aug.LexiconError, TrainingDivergedError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
