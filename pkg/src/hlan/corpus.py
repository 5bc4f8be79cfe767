"""Corpus handling: tokenization, sentence-grid encoding, vocabulary
construction, corpus file I/O, and a synthetic generator with planted
per-label signal tokens for localization tests."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PAD_INDEX = 0
UNK_INDEX = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
NUM_TOKEN = "NUM"

_TOKEN_RE = re.compile(r"[0-9a-z]+")
_DIGITS_RE = re.compile(r"[0-9]+$")
_SENTENCE_SPLIT_RE = re.compile(r"[.!?]+|\n\s*\n")


class CorpusError(ValueError):
    """Malformed corpus data or configuration."""


@dataclass
class RawDocument:
    id: str
    text: str
    labels: set[str]


@dataclass
class EncodedDocument:
    """Fixed n x n_t grid of token indices plus masks and the target vector.

    ``sentences`` keeps the post-truncation token strings so downstream
    explanation exports can quote text spans.
    """

    id: str
    grid: np.ndarray  # (n, n_t) int32
    sentence_mask: np.ndarray  # (n,) bool
    token_mask: np.ndarray  # (n, n_t) bool
    target: np.ndarray  # (|Y|,) int8
    sentences: list[list[str]] = field(default_factory=list)

    def token_at(self, sentence_index: int, token_index: int) -> str | None:
        if sentence_index < len(self.sentences):
            sent = self.sentences[sentence_index]
            if token_index < len(sent):
                return sent[token_index]
        return None


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumeric runs, map pure digit runs to NUM."""
    tokens = _TOKEN_RE.findall(text.lower())
    return [NUM_TOKEN if _DIGITS_RE.fullmatch(t) else t for t in tokens]


def segment(text_or_tokens, mode: str, n_t: int | None = None) -> list[list[str]]:
    """Split a document into sentences (lists of tokens).

    chunk mode: consecutive windows of n_t tokens over the whole token
    stream. rule mode: split the raw text on sentence-final punctuation and
    blank lines, then tokenize each piece; empty pieces are dropped.
    """
    if mode == "chunk":
        if n_t is None or n_t <= 0:
            raise CorpusError("chunk mode requires positive n_t")
        if isinstance(text_or_tokens, str):
            tokens = tokenize(text_or_tokens)
        else:
            tokens = list(text_or_tokens)
        return [tokens[i : i + n_t] for i in range(0, len(tokens), n_t)]
    if mode == "rule":
        if not isinstance(text_or_tokens, str):
            raise CorpusError("rule mode needs raw text")
        pieces = _SENTENCE_SPLIT_RE.split(text_or_tokens)
        sentences = [tokenize(p) for p in pieces]
        return [s for s in sentences if s]
    raise CorpusError(f"unknown segmentation mode {mode!r}")


class Vocabulary:
    """token <-> index maps with PAD=0, UNK=1 reserved.

    Non-special entries are ordered by (frequency desc, token asc), which
    makes index assignment a pure function of the corpus.
    """

    def __init__(self, counts: dict[str, int], min_count: int = 0):
        self.min_count = min_count
        kept = sorted(
            ((t, c) for t, c in counts.items() if c >= min_count),
            key=lambda tc: (-tc[1], tc[0]),
        )
        self._tokens = [PAD_TOKEN, UNK_TOKEN] + [t for t, _ in kept]
        self._counts = [0, 0] + [c for _, c in kept]
        self._index = {t: i for i, t in enumerate(self._tokens)}

    def __len__(self) -> int:
        return len(self._tokens)

    def index_of(self, token: str) -> int:
        return self._index.get(token, UNK_INDEX)

    def token_of(self, index: int) -> str:
        return self._tokens[index]

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def save(self, path) -> None:
        lines = [
            f"{t}\t{i}\t{c}"
            for i, (t, c) in enumerate(zip(self._tokens, self._counts))
        ]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        vocab = cls.__new__(cls)
        tokens, counts = [], []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line:
                continue
            token, index, count = line.split("\t")
            if int(index) != len(tokens):
                raise CorpusError(f"{path}: vocabulary rows out of order at {token!r}")
            tokens.append(token)
            counts.append(int(count))
        if tokens[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise CorpusError("vocabulary file missing PAD/UNK header rows")
        vocab._tokens = tokens
        vocab._counts = counts
        vocab._index = {t: i for i, t in enumerate(tokens)}
        vocab.min_count = 0
        return vocab


def build_vocab(docs: Iterable[RawDocument], min_count: int = 0) -> Vocabulary:
    counts: dict[str, int] = {}
    empty = True
    for doc in docs:
        empty = False
        for token in tokenize(doc.text):
            counts[token] = counts.get(token, 0) + 1
    if empty:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    return Vocabulary(counts, min_count)


def label_universe(docs: Iterable[RawDocument]) -> list[str]:
    """All label strings, lexicographically ordered."""
    seen: set[str] = set()
    for doc in docs:
        seen.update(doc.labels)
    return sorted(seen)


def encode(
    doc: RawDocument,
    vocab: Vocabulary,
    universe: Sequence[str],
    n: int,
    n_t: int,
    mode: str = "chunk",
) -> EncodedDocument:
    """Segment, index (UNK fallback), truncate to n x n_t keeping the head,
    pad with PAD, and build the multi-hot target over ``universe``."""
    positions = {lab: i for i, lab in enumerate(universe)}
    unknown = sorted(l for l in doc.labels if l not in positions)
    if unknown:
        raise CorpusError(f"labels not in universe: {unknown}")
    sentences = segment(doc.text, mode=mode, n_t=n_t)[:n]
    sentences = [s[:n_t] for s in sentences]

    grid = np.full((n, n_t), PAD_INDEX, dtype=np.int32)
    token_mask = np.zeros((n, n_t), dtype=bool)
    sentence_mask = np.zeros(n, dtype=bool)
    for i, sent in enumerate(sentences):
        if not sent:
            continue
        sentence_mask[i] = True
        for j, token in enumerate(sent):
            grid[i, j] = vocab.index_of(token)
            token_mask[i, j] = True

    target = np.zeros(len(universe), dtype=np.int8)
    for lab in doc.labels:
        target[positions[lab]] = 1
    return EncodedDocument(
        id=doc.id,
        grid=grid,
        sentence_mask=sentence_mask,
        token_mask=token_mask,
        target=target,
        sentences=sentences,
    )


# ------------------------------------------------------------- corpus I/O


def write_corpus(docs: Iterable[RawDocument], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            record = {"id": doc.id, "text": doc.text, "labels": sorted(doc.labels)}
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_corpus(path) -> list[RawDocument]:
    docs = []
    ids = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"{path}:{lineno}: bad record: {e}") from e
            missing = {"id", "text", "labels"} - set(record)
            if missing:
                raise CorpusError(f"{path}:{lineno}: missing fields {sorted(missing)}")
            if record["id"] in ids:
                raise CorpusError(f"{path}:{lineno}: duplicate id {record['id']!r}")
            ids.add(record["id"])
            docs.append(
                RawDocument(
                    id=str(record["id"]),
                    text=str(record["text"]),
                    labels=set(record["labels"]),
                )
            )
    return docs


# ------------------------------------------------------ synthetic corpus


@dataclass
class GeneratorConfig:
    """Knobs for the synthetic corpus.

    Each label owns ``signal_tokens_per_label`` exclusive tokens; one of
    them is planted into a random sentence of every document carrying that
    label. ``cooccurrence_pairs`` label-index pairs are completed with
    probability ``pair_strength`` whenever the first member is sampled and
    the document still has room, which drives their empirical co-occurrence
    far above chance. Defaults echo a 50-label corpus with mean cardinality
    5.69.
    """

    num_labels: int = 50
    num_docs: int = 2000
    num_valid: int | None = None
    num_test: int | None = None
    cardinality_mean: float = 5.69
    vocab_size: int = 2000
    signal_tokens_per_label: int = 1
    cooccurrence_pairs: list[tuple[int, int]] = field(default_factory=list)
    pair_strength: float = 0.8
    doc_sentences: int = 10
    sentence_len: int = 25
    seed: int = 0

    def split_sizes(self) -> tuple[int, int, int]:
        valid = self.num_valid if self.num_valid is not None else self.num_docs // 10
        test = self.num_test if self.num_test is not None else self.num_docs // 10
        return self.num_docs, valid, test


def label_name(i: int) -> str:
    return f"label{i:03d}"


def _signal_token(label_index: int, k: int) -> str:
    return f"sig{label_index:03d}x{k}"


@dataclass
class SyntheticCorpus:
    train: list[RawDocument]
    valid: list[RawDocument]
    test: list[RawDocument]
    provenance: dict[str, dict[str, tuple[int, int]]]
    labels: list[str]

    def split(self, name: str) -> list[RawDocument]:
        return {"train": self.train, "valid": self.valid, "test": self.test}[name]


def generate_synthetic(cfg: GeneratorConfig) -> SyntheticCorpus:
    """Deterministic synthetic corpus with per-label planted signal tokens.

    Provenance maps doc id -> label -> (sentence index, token index) of the
    planted occurrence, with sentences aligned to chunk boundaries when
    n_t == sentence_len.
    """
    if cfg.num_labels < 2:
        raise CorpusError("num_labels must be >= 2")
    if cfg.cardinality_mean <= 0:
        raise CorpusError("cardinality_mean must be > 0")
    n_signal = cfg.num_labels * cfg.signal_tokens_per_label
    if n_signal >= cfg.vocab_size:
        raise CorpusError(
            f"signal tokens ({n_signal}) exceed vocab_size ({cfg.vocab_size})"
        )
    for a, b in cfg.cooccurrence_pairs:
        if not (0 <= a < cfg.num_labels and 0 <= b < cfg.num_labels) or a == b:
            raise CorpusError(f"bad co-occurrence pair ({a}, {b})")

    rng = np.random.default_rng(cfg.seed)
    labels = [label_name(i) for i in range(cfg.num_labels)]
    partner = {}
    for a, b in cfg.cooccurrence_pairs:
        partner.setdefault(a, b)
        partner.setdefault(b, a)
    filler_count = cfg.vocab_size - n_signal
    fillers = [f"w{j}" for j in range(filler_count)]

    def sample_label_set() -> list[int]:
        extra = cfg.cardinality_mean - 1.0
        c = 1 + (rng.poisson(extra) if extra > 0 else 0)
        c = min(c, cfg.num_labels)
        chosen: list[int] = [int(rng.integers(cfg.num_labels))]
        while len(chosen) < c:
            last = chosen[-1]
            mate = partner.get(last)
            if (
                mate is not None
                and mate not in chosen
                and rng.random() < cfg.pair_strength
            ):
                chosen.append(mate)
                continue
            pick = int(rng.integers(cfg.num_labels))
            if pick not in chosen:
                chosen.append(pick)
        return chosen

    def make_doc(doc_id: str):
        label_idxs = sample_label_set()
        sents = [
            [fillers[int(t)] for t in rng.integers(filler_count, size=cfg.sentence_len)]
            for _ in range(cfg.doc_sentences)
        ]
        where: dict[str, tuple[int, int]] = {}
        for li in sorted(label_idxs):
            k = int(rng.integers(cfg.signal_tokens_per_label))
            si = int(rng.integers(cfg.doc_sentences))
            ti = int(rng.integers(cfg.sentence_len))
            sents[si][ti] = _signal_token(li, k)
            where[labels[li]] = (si, ti)
        # planting order can overwrite an earlier label's slot; re-plant until stable
        for li in sorted(label_idxs):
            lab = labels[li]
            si, ti = where[lab]
            if not sents[si][ti].startswith(f"sig{li:03d}x"):
                for attempt in range(1000):
                    si = int(rng.integers(cfg.doc_sentences))
                    ti = int(rng.integers(cfg.sentence_len))
                    if not sents[si][ti].startswith("sig"):
                        k = int(rng.integers(cfg.signal_tokens_per_label))
                        sents[si][ti] = _signal_token(li, k)
                        where[lab] = (si, ti)
                        break
                else:
                    raise CorpusError("document too small for its signal tokens")
        text = "\n".join(" ".join(s) for s in sents)
        doc = RawDocument(id=doc_id, text=text, labels={labels[i] for i in label_idxs})
        return doc, where

    n_train, n_valid, n_test = cfg.split_sizes()
    splits: dict[str, list[RawDocument]] = {"train": [], "valid": [], "test": []}
    provenance: dict[str, dict[str, tuple[int, int]]] = {}
    for split, count in (("train", n_train), ("valid", n_valid), ("test", n_test)):
        for i in range(count):
            doc, where = make_doc(f"{split}-{i:05d}")
            splits[split].append(doc)
            provenance[doc.id] = where
    return SyntheticCorpus(
        train=splits["train"],
        valid=splits["valid"],
        test=splits["test"],
        provenance=provenance,
        labels=labels,
    )


def write_synthetic(corpus: SyntheticCorpus, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for split in ("train", "valid", "test"):
        path = out / f"{split}.jsonl"
        write_corpus(corpus.split(split), path)
        paths[split] = path
    prov_path = out / "provenance.jsonl"
    with open(prov_path, "w", encoding="utf-8") as fh:
        for doc_id in sorted(corpus.provenance):
            signals = {
                lab: list(pos) for lab, pos in sorted(corpus.provenance[doc_id].items())
            }
            fh.write(json.dumps({"id": doc_id, "signals": signals}) + "\n")
    paths["provenance"] = prov_path
    return paths


def read_provenance(path) -> dict[str, dict[str, tuple[int, int]]]:
    table = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            table[record["id"]] = {
                lab: (int(pos[0]), int(pos[1]))
                for lab, pos in record["signals"].items()
            }
    return table
