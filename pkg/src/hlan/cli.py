"""Command-line pipeline: corpus generation, embedding training, model
training, evaluation, prediction, explanation, and layer-overlap analysis.

Configuration comes from one JSON file (``--config``) with optional
sections "model", "train", "generator", "embed", and "encode"; individual
flags override file values, which override built-in defaults. Every
subcommand echoes the merged configuration it actually ran with into the
output directory as ``config.json``.

Exit codes: 0 success; 1 usage or configuration error; 2 runtime or data
error; 3 numeric divergence during training.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .corpus import (
    CorpusError,
    GeneratorConfig,
    Vocabulary,
    build_vocab,
    encode,
    generate_synthetic,
    label_universe,
    read_corpus,
    tokenize,
    write_synthetic,
)
from .embeddings import EmbeddingError, EmbeddingTable, train_cbow
from .explain import (
    MU_DEFAULT,
    SENTENCE_THRESHOLD,
    WORD_THRESHOLD,
    ExplainError,
    export_visual,
    select_highlights,
    write_structured,
)
from .figures import jaccard_bars, per_label_bars, training_curves
from .metrics import (
    MetricsError,
    evaluate_scores,
    format_report,
    jaccard_le_analysis,
)
from .model import (
    ModelConfig,
    ModelError,
    config_diff,
    forward_batch,
    load_checkpoint,
    save_checkpoint,
    stack_documents,
)
from .training import (
    DivergenceError,
    TrainConfig,
    TrainingError,
    predict_scores,
    train,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_DIVERGED = 3

# structural fields that must agree between a checkpoint and any
# configuration the caller supplies alongside it
STRUCTURAL_FIELDS = (
    "num_labels", "vocab_size", "d_e", "d_h", "d_w", "d_s", "n", "n_t", "variant",
)


class UsageError(Exception):
    """Bad flags or configuration; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); keep our code scheme
        raise UsageError(message)


# ----------------------------------------------------------- config plumbing


def _read_json_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise UsageError(f"config file {p} is not valid JSON: {e}")
    if not isinstance(data, dict):
        raise UsageError(f"config file {p} must hold a JSON object")
    return data


def _build(cls, section: dict, overrides: dict):
    """Dataclass from config section + non-None overrides; bad fields or
    values become usage errors."""
    merged = dict(section)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return cls(**merged)
    except TypeError as e:
        raise UsageError(f"{cls.__name__}: {e}")
    except ValueError as e:
        raise UsageError(f"{cls.__name__}: {e}")


def _echo_config(out_dir, payload: dict) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    (out / "config.json").write_text(text, encoding="utf-8")


def default_k(num_labels: int) -> int:
    """Ranking depth matched to label-universe size."""
    if num_labels <= 25:
        return 1
    if num_labels <= 75:
        return 5
    return 8


def _file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _model_overrides(args) -> dict:
    out = {}
    if getattr(args, "variant", None) is not None:
        out["variant"] = args.variant
    if getattr(args, "le_init", None) is not None:
        out["le_init"] = args.le_init == "on"
    if getattr(args, "threshold", None) is not None:
        out["threshold"] = args.threshold
    return out


def _check_checkpoint_config(ckpt, model_section: dict, args) -> None:
    """Refuse to run when supplied configuration contradicts the checkpoint."""
    supplied = dict(model_section)
    supplied.update(_model_overrides(args))
    have = ckpt.config.to_dict()
    mismatches = [
        f"{k}: checkpoint has {have[k]!r}, supplied {supplied[k]!r}"
        for k in STRUCTURAL_FIELDS
        if k in supplied and supplied[k] != have[k]
    ]
    if mismatches:
        raise UsageError(
            "checkpoint/config mismatch:\n  " + "\n  ".join(mismatches)
        )


def _load_vocab_for(ckpt, args) -> Vocabulary:
    vocab_path = args.vocab
    if vocab_path is None:
        vocab_path = Path(args.checkpoint).parent / "vocab.txt"
    vocab_path = Path(vocab_path)
    if not vocab_path.exists():
        raise CorpusError(f"vocabulary file not found: {vocab_path}")
    if ckpt.vocab_sha256:
        digest = _file_sha256(vocab_path)
        if digest != ckpt.vocab_sha256:
            raise CorpusError(
                f"vocabulary file {vocab_path} does not match the checkpoint "
                f"(sha256 {digest[:12]} != {ckpt.vocab_sha256[:12]})"
            )
    return Vocabulary.load(vocab_path)


def _encode_for_checkpoint(raw_docs, vocab, ckpt, segment_mode: str):
    universe = set(ckpt.labels)
    foreign = sorted({l for d in raw_docs for l in d.labels} - universe)
    if foreign:
        raise CorpusError(
            f"corpus labels outside the checkpoint's universe: {foreign[:5]}"
        )
    cfg = ckpt.config
    return [
        encode(d, vocab, ckpt.labels, cfg.n, cfg.n_t, mode=segment_mode)
        for d in raw_docs
    ]


def _label_tables(dir_path) -> dict:
    """Load labels_d{dim}.vec files from a directory, keyed by dimension."""
    root = Path(dir_path)
    if not root.is_dir():
        raise UsageError(f"label embedding directory not found: {root}")
    tables = {}
    for path in sorted(root.glob("labels_d*.vec")):
        table = EmbeddingTable.load(path)
        tables[table.d] = table
    if not tables:
        raise UsageError(f"no labels_d*.vec files in {root}")
    return tables


def _required_le_dims(cfg: ModelConfig) -> list:
    dims = [cfg.doc_dim]
    if cfg.word_context_rows == cfg.num_labels:
        dims.append(cfg.d_w)
    if cfg.sentence_context_rows == cfg.num_labels:
        dims.append(cfg.d_s)
    return sorted(set(dims))


# ---------------------------------------------------------------- subcommands


def cmd_gen_synth(args) -> int:
    file_cfg = _read_json_config(args.config)
    gen_cfg = _build(
        GeneratorConfig, file_cfg.get("generator", {}), {"seed": args.seed}
    )
    try:
        corpus = generate_synthetic(gen_cfg)
    except CorpusError as e:
        # the generator's own validation is configuration validation
        raise UsageError(str(e))
    out = Path(args.out)
    paths = write_synthetic(corpus, out)
    (out / "labels.txt").write_text(
        "\n".join(corpus.labels) + "\n", encoding="utf-8"
    )
    _echo_config(out, {"subcommand": "gen-synth", "generator": gen_cfg.__dict__})
    print(f"wrote {', '.join(sorted(p.name for p in paths.values()))} to {out}")
    return EXIT_OK


def cmd_embed(args) -> int:
    file_cfg = _read_json_config(args.config)
    section = dict(file_cfg.get("embed", {}))
    if args.seed is not None:
        section["seed"] = args.seed
    knobs = {
        "window": section.get("window", 5),
        "min_count": section.get("min_count", 1),
        "negatives": section.get("negatives", 5),
        "epochs": section.get("epochs", 30),
        "learning_rate": section.get("learning_rate", 0.025),
        "seed": section.get("seed", 0),
    }
    try:
        dims = [int(d) for d in args.dims.split(",") if d.strip()]
    except ValueError:
        raise UsageError(f"--dims must be comma-separated integers, got {args.dims!r}")
    if not dims or any(d <= 0 for d in dims):
        raise UsageError("--dims needs at least one positive dimension")

    raw_docs = read_corpus(args.corpus)
    if args.target == "labels":
        sequences = [sorted(d.labels) for d in raw_docs if d.labels]
        if not sequences:
            raise CorpusError(f"{args.corpus}: no document has any labels")
        # label sets are unordered: reshuffle per epoch, and widen the
        # window to the largest set so every co-assignment is a context pair
        knobs["shuffle_sequences"] = True
        if "window" not in section:
            knobs["window"] = max(len(s) for s in sequences)
    else:
        sequences = [tokenize(d.text) for d in raw_docs]

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for d in dims:
        table = train_cbow(sequences, d=d, **knobs)
        path = out / f"{args.target}_d{d}.vec"
        table.save(path)
        written.append(path.name)
    _echo_config(out, {
        "subcommand": "embed", "target": args.target, "dims": dims,
        "corpus": str(args.corpus), "embed": knobs,
    })
    print(f"wrote {', '.join(written)} to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    file_cfg = _read_json_config(args.config)
    corpus_dir = Path(args.corpus_dir)
    train_path = corpus_dir / "train.jsonl"
    valid_path = corpus_dir / "valid.jsonl"
    for p in (train_path, valid_path):
        if not p.exists():
            raise UsageError(f"missing corpus file: {p}")

    raw_train = read_corpus(train_path)
    raw_valid = read_corpus(valid_path)
    labels = label_universe(raw_train + raw_valid)
    if not labels:
        raise CorpusError("training corpus has no labels")

    encode_cfg = file_cfg.get("encode", {})
    segment_mode = encode_cfg.get("segment_mode", "chunk")
    min_count = encode_cfg.get("min_count", 1)
    vocab = build_vocab(raw_train, min_count=min_count)

    model_section = dict(file_cfg.get("model", {}))
    model_section["num_labels"] = len(labels)
    model_section["vocab_size"] = len(vocab)
    model_cfg = _build(ModelConfig, model_section, _model_overrides(args))

    train_overrides = {"seed": args.seed, "k": args.k}
    train_cfg = _build(TrainConfig, file_cfg.get("train", {}), train_overrides)

    word_table = None
    if args.word_embeddings:
        word_table = EmbeddingTable.load(args.word_embeddings)
        if word_table.d != model_cfg.d_e:
            raise UsageError(
                f"word embeddings have dimension {word_table.d}, model wants "
                f"d_e={model_cfg.d_e}"
            )
    label_tables = None
    if model_cfg.le_init:
        if not args.label_embeddings:
            raise UsageError("--le-init on requires --label-embeddings DIR")
        label_tables = _label_tables(args.label_embeddings)
        missing = [d for d in _required_le_dims(model_cfg) if d not in label_tables]
        if missing:
            raise UsageError(
                f"label embedding tables missing for dimensions {missing}; "
                f"found {sorted(label_tables)}"
            )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    vocab_path = out / "vocab.txt"
    vocab.save(vocab_path)
    (out / "labels.txt").write_text("\n".join(labels) + "\n", encoding="utf-8")
    vocab_sha = _file_sha256(vocab_path)

    docs_train = [
        encode(d, vocab, labels, model_cfg.n, model_cfg.n_t, mode=segment_mode)
        for d in raw_train
    ]
    docs_valid = [
        encode(d, vocab, labels, model_cfg.n, model_cfg.n_t, mode=segment_mode)
        for d in raw_valid
    ]

    def log(record):
        metric = record.metrics[train_cfg.early_stop_metric]
        print(
            f"epoch {record.epoch}: loss {record.train_loss:.4f} "
            f"{train_cfg.early_stop_metric} {metric:.4f}"
        )

    try:
        result = train(
            docs_train, docs_valid, model_cfg, train_cfg, labels,
            word_table=word_table, vocab=vocab, label_tables=label_tables,
            vocab_sha256=vocab_sha, out_dir=out, log=log,
        )
    except DivergenceError as e:
        if e.checkpoint is not None:
            save_checkpoint(out / "diverged.ckpt", e.checkpoint)
            print(f"saved last finite state to {out / 'diverged.ckpt'}", file=sys.stderr)
        raise

    training_curves(
        [r.epoch for r in result.history],
        [r.train_loss for r in result.history],
        [r.metrics[train_cfg.early_stop_metric] for r in result.history],
        train_cfg.early_stop_metric,
        out / "training_curves.png",
    )
    _echo_config(out, {
        "subcommand": "train",
        "model": model_cfg.to_dict(),
        "train": train_cfg.to_dict(),
        "encode": {"segment_mode": segment_mode, "min_count": min_count},
        "corpus_dir": str(corpus_dir),
        "word_embeddings": str(args.word_embeddings) if args.word_embeddings else None,
        "label_embeddings": str(args.label_embeddings) if args.label_embeddings else None,
    })
    best = result.history[result.best_epoch - 1]
    print(
        f"best epoch {result.best_epoch}: "
        f"{train_cfg.early_stop_metric} "
        f"{best.metrics[train_cfg.early_stop_metric]:.4f}"
    )
    return EXIT_OK


def _open_checkpoint(args, file_cfg) -> tuple:
    if not args.checkpoint:
        raise UsageError("--checkpoint is required")
    path = Path(args.checkpoint)
    if not path.exists():
        raise UsageError(f"checkpoint not found: {path}")
    ckpt = load_checkpoint(path)
    _check_checkpoint_config(ckpt, file_cfg.get("model", {}), args)
    return ckpt


def cmd_evaluate(args) -> int:
    file_cfg = _read_json_config(args.config)
    ckpt = _open_checkpoint(args, file_cfg)
    vocab = _load_vocab_for(ckpt, args)
    segment_mode = file_cfg.get("encode", {}).get("segment_mode", "chunk")
    raw = read_corpus(args.corpus)
    docs = _encode_for_checkpoint(raw, vocab, ckpt, segment_mode)

    threshold = args.threshold if args.threshold is not None else ckpt.config.threshold
    k = args.k if args.k is not None else default_k(ckpt.config.num_labels)
    if not 1 <= k <= ckpt.config.num_labels:
        raise UsageError(
            f"--k must be in [1, {ckpt.config.num_labels}], got {k}"
        )
    scores = predict_scores(ckpt.params, ckpt.config, docs)
    truths = np.stack([d.target for d in docs])
    report = evaluate_scores(scores, truths, threshold, ks=[k])

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.tsv").write_text(
        format_report(report, ckpt.labels), encoding="utf-8"
    )
    per_label_bars(ckpt.labels, report.prf.per_label_f1, out / "per_label_f1.png")
    _echo_config(out, {
        "subcommand": "evaluate", "checkpoint": str(args.checkpoint),
        "corpus": str(args.corpus), "threshold": threshold, "k": k,
        "model": ckpt.config.to_dict(),
    })
    print(
        f"micro-F1 {report.prf.micro_f1:.4f} macro-F1 {report.prf.macro_f1:.4f} "
        f"micro-AUC {report.micro_auc:.4f} P@{k} {report.precision_at_k[k]:.4f} "
        f"over {report.num_documents} documents"
    )
    return EXIT_OK


def cmd_predict(args) -> int:
    file_cfg = _read_json_config(args.config)
    ckpt = _open_checkpoint(args, file_cfg)
    vocab = _load_vocab_for(ckpt, args)
    segment_mode = file_cfg.get("encode", {}).get("segment_mode", "chunk")
    raw = read_corpus(args.corpus)
    docs = _encode_for_checkpoint(raw, vocab, ckpt, segment_mode)
    threshold = args.threshold if args.threshold is not None else ckpt.config.threshold
    if not 0.0 < threshold < 1.0:
        raise UsageError(f"threshold must be in (0,1), got {threshold}")

    scores = predict_scores(ckpt.params, ckpt.config, docs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["doc\tlabels\tscores"]
    for doc, row in zip(docs, scores):
        chosen = [ckpt.labels[i] for i in np.flatnonzero(row > threshold)]
        lines.append(
            f"{doc.id}\t{','.join(chosen)}\t"
            + ",".join(f"{v:.6f}" for v in row)
        )
    (out / "predictions.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    _echo_config(out, {
        "subcommand": "predict", "checkpoint": str(args.checkpoint),
        "corpus": str(args.corpus), "threshold": threshold,
        "model": ckpt.config.to_dict(),
    })
    print(f"wrote predictions for {len(docs)} documents to {out / 'predictions.tsv'}")
    return EXIT_OK


def cmd_explain(args) -> int:
    file_cfg = _read_json_config(args.config)
    ckpt = _open_checkpoint(args, file_cfg)
    vocab = _load_vocab_for(ckpt, args)
    segment_mode = file_cfg.get("encode", {}).get("segment_mode", "chunk")
    raw = read_corpus(args.corpus)
    docs = _encode_for_checkpoint(raw, vocab, ckpt, segment_mode)
    threshold = args.threshold if args.threshold is not None else ckpt.config.threshold
    if not 0.0 < threshold < 1.0:
        raise UsageError(f"threshold must be in (0,1), got {threshold}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    structured = out / "explanations.jsonl"
    structured.write_text("", encoding="utf-8")
    batch = 32
    for start in range(0, len(docs), batch):
        chunk = docs[start : start + batch]
        grids, tmask, smask, _ = stack_documents(chunk)
        result = forward_batch(grids, tmask, smask, ckpt.params, ckpt.config)
        probs = result.probabilities()
        for i, doc in enumerate(chunk):
            record = result.record_for(i)
            predicted = [int(j) for j in np.flatnonzero(probs[i] > threshold)]
            highlights = select_highlights(
                record, doc, ckpt.labels, predicted, mu=args.mu,
                sent_threshold=args.sent_threshold,
                word_threshold=args.word_threshold,
            )
            write_structured(
                structured, doc, highlights, record, ckpt.labels, append=True
            )
            export_visual(
                out / f"doc_{doc.id}.html", doc, highlights, compact=args.compact
            )
    _echo_config(out, {
        "subcommand": "explain", "checkpoint": str(args.checkpoint),
        "corpus": str(args.corpus), "threshold": threshold, "mu": args.mu,
        "sent_threshold": args.sent_threshold,
        "word_threshold": args.word_threshold, "compact": args.compact,
        "model": ckpt.config.to_dict(),
    })
    print(f"wrote explanations for {len(docs)} documents to {out}")
    return EXIT_OK


def cmd_analyze_le(args) -> int:
    file_cfg = _read_json_config(args.config)
    ckpt = _open_checkpoint(args, file_cfg)
    tables = _label_tables(args.label_embeddings)
    cfg = ckpt.config
    k = args.k if args.k is not None else 10

    layers = [("projection", ckpt.params.w_proj.data, cfg.doc_dim)]
    if cfg.word_context_rows == cfg.num_labels:
        layers.append(("word_context", ckpt.params.v_w.data, cfg.d_w))
    if cfg.sentence_context_rows == cfg.num_labels:
        layers.append(("sentence_context", ckpt.params.v_s.data, cfg.d_s))

    names, means, stds = [], [], []
    summary_lines = ["layer\tdim\tmean_jaccard\tstd_jaccard\tmissing_labels"]
    detail_lines = ["layer\tlabel\tjaccard"]
    for name, matrix, dim in layers:
        if dim not in tables:
            raise MetricsError(
                f"no label embedding table of dimension {dim} for layer "
                f"{name}; found dimensions {sorted(tables)}"
            )
        report = jaccard_le_analysis(matrix, tables[dim], ckpt.labels, k=k)
        names.append(name)
        means.append(report.mean_jaccard)
        stds.append(report.std_jaccard)
        summary_lines.append(
            f"{name}\t{dim}\t{report.mean_jaccard:.6f}\t"
            f"{report.std_jaccard:.6f}\t{len(report.missing_labels)}"
        )
        for label in sorted(report.per_label):
            detail_lines.append(f"{name}\t{label}\t{report.per_label[label]:.6f}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "le_overlap.tsv").write_text(
        "\n".join(summary_lines + [""] + detail_lines) + "\n", encoding="utf-8"
    )
    jaccard_bars(names, means, stds, out / "le_overlap.png")
    _echo_config(out, {
        "subcommand": "analyze-le", "checkpoint": str(args.checkpoint),
        "label_embeddings": str(args.label_embeddings), "k": k,
        "model": cfg.to_dict(),
    })
    for name, mean in zip(names, means):
        print(f"{name}: mean top-{k} overlap {mean:.4f}")
    return EXIT_OK


# --------------------------------------------------------------- entry point


def _add_common(sub, *, out_required=True):
    sub.add_argument("--config", help="JSON configuration file")
    sub.add_argument("--seed", type=int, help="override the configured seed")
    sub.add_argument("--out", required=out_required, help="output directory")
    sub.add_argument("--checkpoint", help="model checkpoint path")
    sub.add_argument("--variant", choices=["hlan", "hagru", "han"],
                     help="attention sharing variant")
    sub.add_argument("--le-init", dest="le_init", choices=["on", "off"],
                     help="initialize label-aware layers from label embeddings")
    sub.add_argument("--threshold", type=float,
                     help="probability cutoff for assigning a label")
    sub.add_argument("--k", type=int, help="ranking depth for top-k metrics")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hlan", description=__doc__.splitlines()[0])
    subs = parser.add_subparsers(dest="subcommand", required=True)

    p = subs.add_parser("gen-synth", help="generate a synthetic labeled corpus")
    _add_common(p)
    p.set_defaults(func=cmd_gen_synth)

    p = subs.add_parser("embed", help="train co-occurrence embeddings")
    _add_common(p)
    p.add_argument("--corpus", required=True, help="jsonl corpus file")
    p.add_argument("--target", choices=["words", "labels"], required=True)
    p.add_argument("--dims", required=True,
                   help="comma-separated embedding dimensions")
    p.set_defaults(func=cmd_embed)

    p = subs.add_parser("train", help="train a classifier")
    _add_common(p)
    p.add_argument("--corpus-dir", required=True,
                   help="directory holding train.jsonl and valid.jsonl")
    p.add_argument("--word-embeddings", help="word embedding .vec file")
    p.add_argument("--label-embeddings",
                   help="directory of labels_d{dim}.vec files")
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("evaluate", help="score a corpus against a checkpoint")
    _add_common(p)
    p.add_argument("--corpus", required=True, help="jsonl corpus file")
    p.add_argument("--vocab", help="vocabulary file (default: next to checkpoint)")
    p.set_defaults(func=cmd_evaluate)

    p = subs.add_parser("predict", help="write label sets and scores")
    _add_common(p)
    p.add_argument("--corpus", required=True, help="jsonl corpus file")
    p.add_argument("--vocab", help="vocabulary file (default: next to checkpoint)")
    p.set_defaults(func=cmd_predict)

    p = subs.add_parser("explain", help="export attention explanations")
    _add_common(p)
    p.add_argument("--corpus", required=True, help="jsonl corpus file")
    p.add_argument("--vocab", help="vocabulary file (default: next to checkpoint)")
    p.add_argument("--mu", type=float, default=MU_DEFAULT,
                   help="sentence weighting factor")
    p.add_argument("--sent-threshold", type=float, default=SENTENCE_THRESHOLD)
    p.add_argument("--word-threshold", type=float, default=WORD_THRESHOLD)
    p.add_argument("--compact", action="store_true",
                   help="truncate each sentence's display to its first tokens")
    p.set_defaults(func=cmd_explain)

    p = subs.add_parser("analyze-le",
                        help="compare label-aware layers to label embeddings")
    _add_common(p)
    p.add_argument("--label-embeddings", required=True,
                   help="directory of labels_d{dim}.vec files")
    p.set_defaults(func=cmd_analyze_le)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as e:
        print(f"training diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (CorpusError, ModelError, MetricsError, TrainingError,
            EmbeddingError, ExplainError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
