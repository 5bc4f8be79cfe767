"""CBOW embeddings with negative sampling, trained with plain numpy.

Used twice: once over document token sequences (word embeddings) and once
over training label sets (label embeddings, one table per required layer
width). Label sets are unordered, so the trainer can reshuffle each
sequence every epoch; callers pick window >= max set size so every label
pair becomes a context pair.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np


class EmbeddingError(ValueError):
    pass


class EmbeddingTable:
    """Immutable item -> vector table of one trained dimension."""

    def __init__(self, items: Sequence[str], matrix: np.ndarray, normalized=False):
        self.items = list(items)
        self.matrix = np.asarray(matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.items):
            raise EmbeddingError("matrix must be [len(items), d]")
        self.d = self.matrix.shape[1]
        if self.d <= 0:
            raise EmbeddingError("dimension must be positive")
        self.normalized = bool(normalized)
        self._index = {item: i for i, item in enumerate(self.items)}
        self.epoch_losses: list[float] = []

    def __len__(self) -> int:
        return len(self.items)

    def __contains__(self, item: str) -> bool:
        return item in self._index

    def vector(self, item: str) -> np.ndarray:
        try:
            return self.matrix[self._index[item]]
        except KeyError:
            raise EmbeddingError(f"unknown item {item!r}") from None

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{self.d}\t{len(self.items)}\n")
            for item, row in zip(self.items, self.matrix):
                values = " ".join(f"{v:.17g}" for v in row)
                fh.write(f"{item}\t{values}\n")

    @classmethod
    def load(cls, path) -> "EmbeddingTable":
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().rstrip("\n").split("\t")
            d, count = int(header[0]), int(header[1])
            items, rows = [], []
            for line in fh:
                if not line.strip():
                    continue
                item, values = line.rstrip("\n").split("\t")
                items.append(item)
                rows.append(np.array(values.split(" "), dtype=np.float64))
        if len(items) != count:
            raise EmbeddingError(f"{path}: expected {count} rows, found {len(items)}")
        matrix = np.array(rows) if rows else np.zeros((0, d))
        if rows and matrix.shape[1] != d:
            raise EmbeddingError(f"{path}: row width != header dimension {d}")
        norms = np.linalg.norm(matrix, axis=1) if rows else np.array([])
        normalized = bool(rows) and bool(np.all(np.abs(norms - 1.0) <= 1e-9))
        return cls(items, matrix, normalized=normalized)


def train_cbow(
    sequences: Sequence[Sequence[str]],
    d: int,
    window: int,
    min_count: int = 0,
    negatives: int = 5,
    epochs: int = 30,
    learning_rate: float = 0.025,
    seed: int = 0,
    shuffle_sequences: bool = False,
) -> EmbeddingTable:
    """Continuous bag-of-words with negative sampling.

    Center items are predicted from the mean of their window context
    vectors; ``negatives`` noise items per position are drawn from the
    unigram^0.75 distribution (draws that hit the center or its current
    context are skipped: with tiny universes such collisions are frequent
    and would push genuine co-occurrers apart). One SGD update per
    position, in corpus order; the learning rate decays linearly per
    epoch. Deterministic per seed.

    Returned vectors are the sum of the context and center matrices, so
    cosine similarity reflects both shared contexts and direct
    co-occurrence; items never trained keep their initial vectors.
    """
    if d <= 0:
        raise EmbeddingError("dimension must be positive")
    if window <= 0:
        raise EmbeddingError("window must be positive")
    if not sequences:
        raise EmbeddingError("no sequences to train on")

    counts: dict[str, int] = {}
    for seq in sequences:
        for item in seq:
            counts[item] = counts.get(item, 0) + 1
    kept = sorted(
        ((t, c) for t, c in counts.items() if c >= min_count),
        key=lambda tc: (-tc[1], tc[0]),
    )
    if not kept:
        raise EmbeddingError("min_count filtered out every item")
    items = [t for t, _ in kept]
    index = {t: i for i, t in enumerate(items)}
    freqs = np.array([c for _, c in kept], dtype=np.float64)

    rng = np.random.default_rng(seed)
    vocab_size = len(items)
    w_in = (rng.random((vocab_size, d)) - 0.5) / d
    w_out = np.zeros((vocab_size, d))

    noise = freqs**0.75
    noise_cdf = np.cumsum(noise / noise.sum())

    encoded = [
        np.array([index[t] for t in seq if t in index], dtype=np.int64)
        for seq in sequences
    ]
    encoded = [seq for seq in encoded if len(seq) > 0]

    def position_table(seqs):
        centers_all, ctx_all, cnt_all = [], [], []
        max_ctx = 2 * window
        for seq in seqs:
            length = len(seq)
            if length < 2:
                continue  # no context pairs; item keeps its current vector
            ctx = np.zeros((length, max_ctx), dtype=np.int64)
            cnt = np.zeros(length, dtype=np.int64)
            for i in range(length):
                lo, hi = max(0, i - window), min(length, i + window + 1)
                span = np.concatenate([seq[lo:i], seq[i + 1 : hi]])
                ctx[i, : len(span)] = span
                cnt[i] = len(span)
            centers_all.append(seq)
            ctx_all.append(ctx)
            cnt_all.append(cnt)
        if not centers_all:
            return None
        return (
            np.concatenate(centers_all),
            np.concatenate(ctx_all, axis=0),
            np.concatenate(cnt_all),
        )

    fixed = None if shuffle_sequences else position_table(encoded)
    losses: list[float] = []
    for epoch in range(epochs):
        lr = learning_rate * max(1e-4, 1.0 - epoch / epochs)
        if shuffle_sequences:
            positions = position_table([rng.permutation(s) for s in encoded])
        else:
            positions = fixed
        if positions is None:
            losses.append(0.0)
            continue
        centers, ctx, cnt = positions
        total = len(centers)
        negs = np.searchsorted(noise_cdf, rng.random((total, negatives)))

        epoch_loss = 0.0
        for i in range(total):
            c = centers[i]
            ctx_i = ctx[i, : cnt[i]]
            h = w_in[ctx_i].mean(axis=0)
            neg_i = negs[i]
            neg_i = neg_i[(neg_i != c) & ~np.isin(neg_i, ctx_i)]
            outs = np.concatenate(([c], neg_i))
            vecs = w_out[outs]
            s = vecs @ h
            # loss: -log sigma(s_pos) - sum log sigma(-s_neg)
            epoch_loss += np.logaddexp(0.0, -s[0]) + np.logaddexp(0.0, s[1:]).sum()
            gs = _sigmoid(s)
            gs[0] -= 1.0
            gs *= lr
            gh = vecs.T @ gs
            np.subtract.at(w_out, outs, gs[:, None] * h[None, :])
            np.subtract.at(w_in, ctx_i, gh / cnt[i])
        losses.append(float(epoch_loss / total))

    table = EmbeddingTable(items, w_in + w_out)
    table.epoch_losses = losses
    return table


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def normalize_unit(table: EmbeddingTable) -> EmbeddingTable:
    """Scale every row to unit L2 norm; returns a new table."""
    norms = np.linalg.norm(table.matrix, axis=1)
    zero = np.where(norms == 0)[0]
    if len(zero):
        raise EmbeddingError(f"cannot normalize zero row for {table.items[zero[0]]!r}")
    out = EmbeddingTable(table.items, table.matrix / norms[:, None], normalized=True)
    out.epoch_losses = list(table.epoch_losses)
    return out


def cosine_matrix(matrix: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1, keepdims=True)
    safe = np.where(norms == 0, 1.0, norms)
    unit = matrix / safe
    return unit @ unit.T


def top_k_similar(table: EmbeddingTable, item: str, k: int) -> list[tuple[str, float]]:
    """k nearest neighbors of ``item`` by cosine, query excluded; ties are
    broken by item string ascending."""
    if item not in table:
        raise EmbeddingError(f"unknown item {item!r}")
    if k >= len(table):
        raise EmbeddingError(f"k={k} must be < table size {len(table)}")
    qi = table._index[item]
    cos = cosine_matrix(table.matrix)[qi]
    order = sorted(
        (i for i in range(len(table)) if i != qi),
        key=lambda i: (-cos[i], table.items[i]),
    )
    return [(table.items[i], float(cos[i])) for i in order[:k]]
