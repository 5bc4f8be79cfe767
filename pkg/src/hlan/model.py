"""Hierarchical label-wise attention classifier.

A document is a fixed grid of ``n`` sentences by ``n_t`` tokens. Each
sentence is read by a bidirectional GRU; a label-wise attention layer pools
the token states into one sentence vector per label. A second bidirectional
GRU reads the sentence vectors, a second label-wise attention layer pools
them into one document vector per label, and a per-label projection turns
that into independent per-label probabilities.

Three variants share this code path and differ only in how many rows the
attention-context matrices carry:

==========  ====================  ========================
variant     word context rows     sentence context rows
==========  ====================  ========================
``hlan``    one per label         one per label
``hagru``   single shared row     one per label
``han``     single shared row     single shared row
==========  ====================  ========================

With a single shared row the per-label computation collapses to the
classic shared-attention hierarchical network, which is what makes the
tied-row equivalence tests exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Optional


import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .corpus import PAD_INDEX, EncodedDocument, Vocabulary
from .embeddings import EmbeddingTable, normalize_unit

VARIANTS = ("hlan", "hagru", "han")

CHECKPOINT_MAGIC = b"HLANCKPT1\n"


class ModelError(ValueError):
    """Configuration or parameter-shape problem."""


@dataclass
class ModelConfig:
    """Architecture switches and dimensions.

    ``d_w`` and ``d_s`` default to 2*d_h and 4*d_h (square attention maps).
    """

    num_labels: int
    vocab_size: int
    d_e: int = 100
    d_h: int = 100
    d_w: Optional[int] = None
    d_s: Optional[int] = None
    n: int = 100
    n_t: int = 25
    variant: str = "hlan"
    le_init: bool = False
    l2_lambda: float = 1e-4
    threshold: float = 0.5
    dropout: float = 0.1

    def __post_init__(self):
        if self.d_w is None:
            self.d_w = 2 * self.d_h
        if self.d_s is None:
            self.d_s = 4 * self.d_h
        for name in ("num_labels", "vocab_size", "d_e", "d_h", "d_w", "d_s", "n", "n_t"):
            if getattr(self, name) <= 0:
                raise ModelError(f"{name} must be positive, got {getattr(self, name)}")
        if self.variant not in VARIANTS:
            raise ModelError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not 0.0 < self.threshold < 1.0:
            raise ModelError(f"threshold must be in (0,1), got {self.threshold}")
        if self.l2_lambda < 0:
            raise ModelError("l2_lambda must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ModelError("dropout must be in [0,1)")

    @property
    def word_context_rows(self) -> int:
        return self.num_labels if self.variant == "hlan" else 1

    @property
    def sentence_context_rows(self) -> int:
        return self.num_labels if self.variant in ("hlan", "hagru") else 1

    @property
    def doc_dim(self) -> int:
        return 4 * self.d_h

    def to_dict(self) -> dict:
        return {
            "num_labels": self.num_labels,
            "vocab_size": self.vocab_size,
            "d_e": self.d_e,
            "d_h": self.d_h,
            "d_w": self.d_w,
            "d_s": self.d_s,
            "n": self.n,
            "n_t": self.n_t,
            "variant": self.variant,
            "le_init": self.le_init,
            "l2_lambda": self.l2_lambda,
            "threshold": self.threshold,
            "dropout": self.dropout,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def config_diff(a: ModelConfig, b: ModelConfig) -> list[str]:
    """Human-readable field-by-field differences, empty when equal."""
    da, db = a.to_dict(), b.to_dict()
    return [f"{k}: {da[k]!r} != {db[k]!r}" for k in da if da[k] != db[k]]


@dataclass
class GruBundle:
    """One direction's gated-recurrence weights.

    Input-to-hidden maps are [d_in, d_h]; hidden-to-hidden are [d_h, d_h].
    The candidate state carries no bias term.
    """

    w_er: Tensor
    w_ez: Tensor
    w_eh: Tensor
    w_hr: Tensor
    w_hz: Tensor
    w_hh: Tensor
    b_r: Tensor
    b_z: Tensor

    @property
    def hidden_dim(self) -> int:
        return self.b_r.shape[0]

    def named(self, prefix: str):
        for f in ("w_er", "w_ez", "w_eh", "w_hr", "w_hz", "w_hh", "b_r", "b_z"):
            yield f"{prefix}.{f}", getattr(self, f)


@dataclass
class ModelParams:
    """All trainable tensors, addressable by stable dotted names."""

    w_e: Tensor
    word_fwd: GruBundle
    word_bwd: GruBundle
    sent_fwd: GruBundle
    sent_bwd: GruBundle
    w_w: Tensor
    b_w: Tensor
    w_s: Tensor
    b_s: Tensor
    v_w: Tensor
    v_s: Tensor
    w_proj: Tensor
    b_proj: Tensor

    def named_tensors(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {"w_e": self.w_e}
        for prefix in ("word_fwd", "word_bwd", "sent_fwd", "sent_bwd"):
            out.update(getattr(self, prefix).named(prefix))
        out.update(
            w_w=self.w_w,
            b_w=self.b_w,
            w_s=self.w_s,
            b_s=self.b_s,
            v_w=self.v_w,
            v_s=self.v_s,
            w_proj=self.w_proj,
            b_proj=self.b_proj,
        )
        return out

    def weight_names(self) -> list[str]:
        """Names of matrices covered by the L2 penalty.

        Biases and the word-embedding table are excluded.
        """
        return [
            name
            for name, t in self.named_tensors().items()
            if t.data.ndim >= 2 and name != "w_e"
        ]


def _xavier(rng: np.random.Generator, shape: tuple) -> np.ndarray:
    fan_in, fan_out = shape[0], shape[-1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _gru_bundle(rng, d_in: int, d_h: int) -> GruBundle:
    def t(shape):
        return Tensor(_xavier(rng, shape), requires_grad=True)

    zeros = lambda: Tensor(np.zeros(d_h), requires_grad=True)  # noqa: E731
    return GruBundle(
        w_er=t((d_in, d_h)),
        w_ez=t((d_in, d_h)),
        w_eh=t((d_in, d_h)),
        w_hr=t((d_h, d_h)),
        w_hz=t((d_h, d_h)),
        w_hh=t((d_h, d_h)),
        b_r=zeros(),
        b_z=zeros(),
    )


def _le_rows(
    base: np.ndarray,
    table: EmbeddingTable,
    labels: list[str],
    layer_name: str,
    want_dim: int,
) -> np.ndarray:
    if table.d != want_dim:
        raise ModelError(
            f"label embedding table for {layer_name} has dimension "
            f"{table.d}, layer needs {want_dim}"
        )
    unit = normalize_unit(table)
    out = base.copy()
    for row, label in enumerate(labels):
        if label in unit:
            out[row] = unit.vector(label)
    return out


def init_params(
    config: ModelConfig,
    word_table: Optional[EmbeddingTable] = None,
    vocab: Optional[Vocabulary] = None,
    label_tables: Optional[dict[int, EmbeddingTable]] = None,
    labels: Optional[list[str]] = None,
    seed: int = 0,
) -> ModelParams:
    """Build a parameter set: Xavier weights, zero biases, optional
    pre-trained rows.

    ``word_table`` rows are copied into the word-embedding matrix for every
    vocabulary token present in the table (the PAD row stays zero). With
    ``config.le_init`` on, rows of the projection matrix and of any
    per-label attention-context matrix are copied from the unit-normalized
    label table of the matching dimension; labels missing from a table keep
    their Xavier row.
    """
    rng = np.random.default_rng(seed)
    d_e, d_h, d_w, d_s = config.d_e, config.d_h, config.d_w, config.d_s

    w_e = _xavier(rng, (config.vocab_size, d_e))
    w_e[PAD_INDEX] = 0.0
    if word_table is not None:
        if word_table.d != d_e:
            raise ModelError(
                f"word embedding table has dimension {word_table.d}, "
                f"word embedding layer needs {d_e}"
            )
        if vocab is None:
            raise ModelError("word_table given without the vocabulary to map rows")
        for idx in range(len(vocab)):
            token = vocab.token_of(idx)
            if idx != PAD_INDEX and token in word_table:
                w_e[idx] = word_table.vector(token)

    word_fwd = _gru_bundle(rng, d_e, d_h)
    word_bwd = _gru_bundle(rng, d_e, d_h)
    sent_fwd = _gru_bundle(rng, 2 * d_h, 2 * d_h)
    sent_bwd = _gru_bundle(rng, 2 * d_h, 2 * d_h)

    w_w = _xavier(rng, (2 * d_h, d_w))
    w_s = _xavier(rng, (4 * d_h, d_s))
    v_w = _xavier(rng, (config.word_context_rows, d_w))
    v_s = _xavier(rng, (config.sentence_context_rows, d_s))
    w_proj = _xavier(rng, (config.num_labels, config.doc_dim))

    if config.le_init:
        if label_tables is None or labels is None:
            raise ModelError("le_init needs label_tables and the label list")
        if len(labels) != config.num_labels:
            raise ModelError(
                f"label list has {len(labels)} entries, config says "
                f"{config.num_labels}"
            )

        def table_for(dim: int, layer: str) -> EmbeddingTable:
            if dim not in label_tables:
                raise ModelError(
                    f"le_init: no label embedding table of dimension {dim} "
                    f"for {layer}"
                )
            return label_tables[dim]

        w_proj = _le_rows(
            w_proj, table_for(config.doc_dim, "projection"), labels,
            "projection", config.doc_dim,
        )
        if config.word_context_rows == config.num_labels:
            v_w = _le_rows(
                v_w, table_for(d_w, "word attention context"), labels,
                "word attention context", d_w,
            )
        if config.sentence_context_rows == config.num_labels:
            v_s = _le_rows(
                v_s, table_for(d_s, "sentence attention context"), labels,
                "sentence attention context", d_s,
            )

    def p(arr):
        return Tensor(arr, requires_grad=True)

    return ModelParams(
        w_e=p(w_e),
        word_fwd=word_fwd,
        word_bwd=word_bwd,
        sent_fwd=sent_fwd,
        sent_bwd=sent_bwd,
        w_w=p(w_w),
        b_w=p(np.zeros(d_w)),
        w_s=p(w_s),
        b_s=p(np.zeros(d_s)),
        v_w=p(v_w),
        v_s=p(v_s),
        w_proj=p(w_proj),
        b_proj=p(np.zeros(config.num_labels)),
    )


def gru_cell(e: Tensor, h_prev: Tensor, bundle: GruBundle) -> Tensor:
    """One gated-recurrence step on a batch of row vectors.

    r and z gates carry biases; the candidate state does not. The new state
    interpolates h = (1-z)*h_prev + z*candidate.
    """
    r = ad.sigmoid(e @ bundle.w_er + h_prev @ bundle.w_hr + bundle.b_r)
    z = ad.sigmoid(e @ bundle.w_ez + h_prev @ bundle.w_hz + bundle.b_z)
    cand = ad.tanh(e @ bundle.w_eh + (r * h_prev) @ bundle.w_hh)
    return (1.0 - z) * h_prev + z * cand


def _directional_pass(seq: Tensor, mask: np.ndarray, bundle: GruBundle, order):
    rows = seq.shape[0]
    d_h = bundle.hidden_dim
    # input projections do not depend on the recurrence, so one large matmul
    # per gate replaces one small matmul per step
    xr = seq @ bundle.w_er + bundle.b_r
    xz = seq @ bundle.w_ez + bundle.b_z
    xh = seq @ bundle.w_eh
    h = Tensor(np.zeros((rows, d_h)))
    outs: list[Optional[Tensor]] = [None] * seq.shape[1]
    for t in order:
        m = mask[:, t : t + 1].astype(seq.data.dtype)
        r = ad.sigmoid(ad.take_index(xr, t, axis=1) + h @ bundle.w_hr)
        z = ad.sigmoid(ad.take_index(xz, t, axis=1) + h @ bundle.w_hz)
        cand = ad.tanh(ad.take_index(xh, t, axis=1) + (r * h) @ bundle.w_hh)
        step = (1.0 - z) * h + z * cand
        # masked steps emit zeros and leave the running state untouched
        h = Tensor(m) * step + Tensor(1.0 - m) * h
        outs[t] = Tensor(m) * h
    return outs


def bigru(seq: Tensor, mask: np.ndarray, fwd: GruBundle, bwd: GruBundle) -> Tensor:
    """Bidirectional recurrence over ``seq`` [rows, steps, d_in].

    Returns [rows, steps, 2*d_h]: the forward and backward states
    concatenated per step. Masked steps yield zero states in both
    directions; a fully masked row yields all-zero states.
    """
    if seq.ndim != 3:
        raise ad.DimensionError(f"bigru expects [rows, steps, d_in], got {seq.shape}")
    steps = seq.shape[1]
    f_outs = _directional_pass(seq, mask, fwd, range(steps))
    b_outs = _directional_pass(seq, mask, bwd, range(steps - 1, -1, -1))
    f_stack = ad.stack(f_outs, axis=1)
    b_stack = ad.stack(b_outs, axis=1)
    return ad.concat([f_stack, b_stack], axis=2)


def word_attention(
    hidden: Tensor, mask: np.ndarray, w_w: Tensor, b_w: Tensor, v_w: Tensor
):
    """Pool token states into per-context-row sentence vectors.

    hidden: [rows, n_t, 2*d_h]; v_w: [L_w, d_w]. Returns (pooled
    [rows, L_w, 2*d_h], alpha [rows, L_w, n_t]).
    """
    v = ad.tanh(hidden @ w_w + b_w)
    scores = ad.swap_last2(v @ ad.transpose(v_w, (1, 0)))  # [rows, L_w, n_t]
    alpha = ad.masked_softmax(scores, mask[:, None, :], axis=-1)
    pooled = alpha @ hidden
    return pooled, alpha


def sentence_attention(
    states: Tensor,
    mask: np.ndarray,
    w_s: Tensor,
    b_s: Tensor,
    v_s: Tensor,
    batch: int,
):
    """Pool sentence states into per-label document vectors.

    states: [batch*L_w, n, 4*d_h]; v_s: [L_s, d_s]. The label axes
    broadcast: a shared word-level context (L_w=1) pairs with per-label
    sentence contexts (L_s=|Y|) without copying. Returns
    (doc vectors [batch, L_s, 4*d_h], alpha [batch, L_s, n]).
    """
    n, dim = states.shape[1], states.shape[2]
    l_w = states.shape[0] // batch
    l_s = v_s.shape[0]
    u = ad.tanh(states @ w_s + b_s)  # [batch*L_w, n, d_s]
    u4 = ad.reshape(u, (batch, l_w, n, u.shape[2]))
    ctx = ad.reshape(v_s, (1, l_s, 1, v_s.shape[1]))
    scores = ad.tensor_sum(u4 * ctx, axis=3)  # [batch, max(L_w,L_s), n]
    alpha = ad.masked_softmax(scores, mask[:, None, :], axis=-1)
    s4 = ad.reshape(states, (batch, l_w, n, dim))
    alpha4 = ad.reshape(alpha, (batch, alpha.shape[1], n, 1))
    pooled = ad.tensor_sum(alpha4 * s4, axis=2)  # [batch, L_s, 4*d_h]
    return pooled, alpha


def project(doc_vectors: Tensor, w_proj: Tensor, b_proj: Tensor, variant: str) -> Tensor:
    """Per-label scores before the sigmoid.

    Per-label document vectors pair with their own projection row; the
    shared-vector variant multiplies the single document vector by the full
    projection matrix.
    """
    batch = doc_vectors.shape[0]
    if variant == "han":
        flat = ad.reshape(doc_vectors, (batch, doc_vectors.shape[2]))
        return flat @ ad.transpose(w_proj, (1, 0)) + b_proj
    rows = ad.reshape(w_proj, (1,) + w_proj.shape)
    return ad.tensor_sum(doc_vectors * rows, axis=2) + b_proj


@dataclass
class AttentionRecord:
    """Detached attention distributions for one document.

    alpha_w rows sum to 1 over each unmasked sentence's tokens; alpha_s
    rows sum to 1 over unmasked sentences. Fully masked sentences carry a
    uniform placeholder distribution and are excluded by the masks.
    """

    alpha_w: np.ndarray  # (L_w, n, n_t)
    alpha_s: np.ndarray  # (L_s, n)
    token_mask: np.ndarray  # (n, n_t) bool
    sentence_mask: np.ndarray  # (n,) bool


@dataclass
class ForwardResult:
    scores: Tensor  # (batch, |Y|) pre-sigmoid
    alpha_w: np.ndarray  # (batch, L_w, n, n_t)
    alpha_s: np.ndarray  # (batch, L_s, n)
    token_mask: np.ndarray  # (batch, n, n_t) bool
    sentence_mask: np.ndarray  # (batch, n) bool

    def probabilities(self) -> np.ndarray:
        from .autodiff import _sigmoid_arr

        return _sigmoid_arr(self.scores.data)

    def record_for(self, i: int) -> AttentionRecord:
        return AttentionRecord(
            alpha_w=self.alpha_w[i].copy(),
            alpha_s=self.alpha_s[i].copy(),
            token_mask=self.token_mask[i].copy(),
            sentence_mask=self.sentence_mask[i].copy(),
        )


def forward_batch(
    grids: np.ndarray,
    token_mask: np.ndarray,
    sentence_mask: np.ndarray,
    params: ModelParams,
    config: ModelConfig,
    train: bool = False,
    dropout_rng: Optional[np.random.Generator] = None,
) -> ForwardResult:
    """Run the full network on a batch of encoded grids.

    grids: [batch, n, n_t] int token indices; masks as produced by the
    encoder. Gradients flow when called under an active tape; without one
    this is a plain numpy evaluation.
    """
    b, n, n_t = grids.shape
    if (n, n_t) != (config.n, config.n_t):
        raise ModelError(
            f"grid shape {(n, n_t)} does not match config ({config.n}, {config.n_t})"
        )
    wmask = token_mask.reshape(b * n, n_t).astype(float)
    smask = sentence_mask.astype(float)

    emb = ad.embedding_lookup(params.w_e, grids.reshape(b * n, n_t))
    hidden = bigru(emb, wmask, params.word_fwd, params.word_bwd)
    pooled_w, alpha_w = word_attention(hidden, wmask, params.w_w, params.b_w, params.v_w)

    l_w = config.word_context_rows
    per_label = ad.reshape(pooled_w, (b, n, l_w, 2 * config.d_h))
    per_label = ad.transpose(per_label, (0, 2, 1, 3))
    per_label = ad.reshape(per_label, (b * l_w, n, 2 * config.d_h))
    sent_row_mask = np.repeat(smask, l_w, axis=0)

    states = bigru(per_label, sent_row_mask, params.sent_fwd, params.sent_bwd)
    pooled_s, alpha_s = sentence_attention(
        states, smask, params.w_s, params.b_s, params.v_s, batch=b
    )

    if train and config.dropout > 0.0:
        if dropout_rng is None:
            raise ModelError("training forward needs a dropout rng")
        pooled_s = ad.dropout(pooled_s, config.dropout, dropout_rng)

    scores = project(pooled_s, params.w_proj, params.b_proj, config.variant)

    aw = alpha_w.data.reshape(b, n, l_w, n_t).transpose(0, 2, 1, 3).copy()
    return ForwardResult(
        scores=scores,
        alpha_w=aw,
        alpha_s=alpha_s.data.copy(),
        token_mask=token_mask.astype(bool).copy(),
        sentence_mask=sentence_mask.astype(bool).copy(),
    )


def forward(
    doc: EncodedDocument, params: ModelParams, config: ModelConfig
) -> tuple[np.ndarray, AttentionRecord]:
    """Single-document inference: per-label probabilities plus attention."""
    result = forward_batch(
        doc.grid[None],
        doc.token_mask[None],
        doc.sentence_mask[None],
        params,
        config,
    )
    return result.probabilities()[0], result.record_for(0)


def stack_documents(docs: list[EncodedDocument]):
    """Batch encoded documents into (grids, token_mask, sentence_mask, targets)."""
    grids = np.stack([d.grid for d in docs])
    tmask = np.stack([d.token_mask for d in docs])
    smask = np.stack([d.sentence_mask for d in docs])
    targets = np.stack([d.target for d in docs])
    return grids, tmask, smask, targets


@dataclass
class Checkpoint:
    config: ModelConfig
    params: ModelParams
    labels: list[str]
    vocab_sha256: str = ""
    extra: dict = field(default_factory=dict)


def _params_from_arrays(arrays: dict[str, np.ndarray]) -> ModelParams:
    def t(name):
        return Tensor(arrays[name], requires_grad=True)

    def bundle(prefix):
        return GruBundle(
            **{f: t(f"{prefix}.{f}") for f in
               ("w_er", "w_ez", "w_eh", "w_hr", "w_hz", "w_hh", "b_r", "b_z")}
        )

    return ModelParams(
        w_e=t("w_e"),
        word_fwd=bundle("word_fwd"),
        word_bwd=bundle("word_bwd"),
        sent_fwd=bundle("sent_fwd"),
        sent_bwd=bundle("sent_bwd"),
        w_w=t("w_w"),
        b_w=t("b_w"),
        w_s=t("w_s"),
        b_s=t("b_s"),
        v_w=t("v_w"),
        v_s=t("v_s"),
        w_proj=t("w_proj"),
        b_proj=t("b_proj"),
    )


def save_checkpoint(path, checkpoint: Checkpoint) -> None:
    """Write a deterministic binary checkpoint.

    Layout: magic line, 8-byte little-endian header length, an ascii JSON
    header (config, labels, vocabulary hash, array manifest, extras), then
    each array's raw bytes in manifest order. No timestamps anywhere, so
    identical state produces identical bytes.
    """
    manifest = []
    blobs = []
    offset = 0
    for name, tensor in checkpoint.params.named_tensors().items():
        arr = np.ascontiguousarray(tensor.data)
        le = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = le.tobytes()
        manifest.append(
            {
                "name": name,
                "shape": list(arr.shape),
                "dtype": le.dtype.str,
                "offset": offset,
                "nbytes": len(raw),
            }
        )
        blobs.append(raw)
        offset += len(raw)
    header = {
        "format": 1,
        "config": checkpoint.config.to_dict(),
        "labels": checkpoint.labels,
        "vocab_sha256": checkpoint.vocab_sha256,
        "extra": checkpoint.extra,
        "arrays": manifest,
    }
    encoded = json.dumps(header, sort_keys=True, ensure_ascii=True).encode("ascii")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(encoded)))
        fh.write(encoded)
        for raw in blobs:
            fh.write(raw)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ModelError(f"{path}: not a checkpoint file")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("ascii"))
        if header.get("format") != 1:
            raise ModelError(f"{path}: unsupported checkpoint format")
        body = fh.read()
    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        start, nbytes = entry["offset"], entry["nbytes"]
        arr = np.frombuffer(body[start : start + nbytes], dtype=entry["dtype"])
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
    config = ModelConfig.from_dict(header["config"])
    return Checkpoint(
        config=config,
        params=_params_from_arrays(arrays),
        labels=list(header["labels"]),
        vocab_sha256=header.get("vocab_sha256", ""),
        extra=header.get("extra", {}),
    )
