"""Loss with L2 regularization, Adam updates with global-norm clipping, the
minibatch training loop with validation-based early stopping, and
thresholded prediction."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import autodiff as ad
from . import metrics as mx
from .autodiff import Tensor
from .corpus import EncodedDocument
from .model import (
    Checkpoint,
    ModelConfig,
    ModelParams,
    _params_from_arrays,
    forward_batch,
    init_params,
    save_checkpoint,
    stack_documents,
)

EARLY_STOP_METRICS = ("micro_f1", "precision_at_k")


class TrainingError(ValueError):
    """Invalid training configuration or inputs."""


class DivergenceError(RuntimeError):
    """Loss or gradients became non-finite.

    ``checkpoint`` carries the last finite-parameter state so callers can
    still save it.
    """

    def __init__(self, message, checkpoint: Optional[Checkpoint] = None):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    l2_lambda: Optional[float] = None  # None: use the model config's value
    max_epochs: int = 30
    patience: int = 5
    early_stop_metric: str = "micro_f1"
    k: int = 5
    clip_norm: float = 5.0
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise TrainingError("batch_size must be >= 1")
        if self.patience < 1:
            raise TrainingError("patience must be >= 1")
        if self.max_epochs < 1:
            raise TrainingError("max_epochs must be >= 1")
        if self.early_stop_metric not in EARLY_STOP_METRICS:
            raise TrainingError(
                f"early_stop_metric must be one of {EARLY_STOP_METRICS}, "
                f"got {self.early_stop_metric!r}"
            )

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "l2_lambda": self.l2_lambda,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "early_stop_metric": self.early_stop_metric,
            "k": self.k,
            "clip_norm": self.clip_norm,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


def bce_loss(scores: Tensor, targets: np.ndarray) -> Tensor:
    """Summed binary cross-entropy over a batch, from pre-sigmoid scores."""
    return ad.bce_with_logits(scores, targets)


def l2_penalty(params: ModelParams, lam: float) -> Tensor:
    """lam times the summed squared Frobenius norm of the weight matrices.

    Biases and the word-embedding table are exempt.
    """
    if lam < 0:
        raise TrainingError("l2 coefficient must be >= 0")
    named = params.named_tensors()
    total = Tensor(0.0)
    if lam == 0.0:
        return total
    for name in params.weight_names():
        t = named[name]
        total = total + ad.tensor_sum(t * t)
    return Tensor(lam) * total


@dataclass
class AdamState:
    """First/second moment accumulators per parameter plus the step count."""

    m: dict
    v: dict
    step: int = 0

    @classmethod
    def fresh(cls, params: ModelParams) -> "AdamState":
        named = params.named_tensors()
        return cls(
            m={k: np.zeros_like(t.data) for k, t in named.items()},
            v={k: np.zeros_like(t.data) for k, t in named.items()},
        )


def clip_global_norm(grads: dict, max_norm: float) -> dict:
    """Scale the whole gradient set so its joint L2 norm is <= max_norm."""
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total <= max_norm or total == 0.0:
        return grads
    scale = max_norm / total
    return {k: g * scale for k, g in grads.items()}


def adam_step(
    params: ModelParams, grads: dict, state: AdamState, cfg: TrainConfig
) -> None:
    """One in-place Adam update with bias correction.

    ``grads`` maps parameter names to gradient arrays. Non-finite gradients
    abort with the offending parameter named.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for parameter {name!r}")
    state.step += 1
    t = state.step
    b1, b2 = cfg.beta1, cfg.beta2
    named = params.named_tensors()
    for name, tensor in named.items():
        g = grads.get(name)
        if g is None:
            continue
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        tensor.data -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float  # mean per document
    metrics: dict

    def to_json(self) -> str:
        return json.dumps(
            {"epoch": self.epoch, "train_loss": self.train_loss, **self.metrics},
            sort_keys=True,
        )


@dataclass
class TrainResult:
    best: Checkpoint
    last: Checkpoint
    history: list
    best_epoch: int
    stopped_early: bool


def _copy_checkpoint(
    params: ModelParams, config: ModelConfig, labels, vocab_sha, extra
) -> Checkpoint:
    arrays = {k: t.data.copy() for k, t in params.named_tensors().items()}
    return Checkpoint(
        config=config,
        params=_params_from_arrays(arrays),
        labels=list(labels),
        vocab_sha256=vocab_sha,
        extra=dict(extra),
    )


def _validation_metrics(
    params: ModelParams,
    config: ModelConfig,
    docs: list,
    k: int,
    batch_size: int,
) -> dict:
    scores = predict_scores(params, config, docs, batch_size=batch_size)
    truths = np.stack([d.target for d in docs])
    preds = scores > config.threshold
    prf = mx.micro_macro(mx.confusion(preds, truths))
    k_eff = min(k, config.num_labels)
    return {
        "micro_f1": prf.micro_f1,
        "macro_f1": prf.macro_f1,
        "micro_precision": prf.micro_p,
        "micro_recall": prf.micro_r,
        "precision_at_k": mx.precision_at_k(scores, truths, k_eff),
    }


def train(
    train_docs: list,
    valid_docs: list,
    config: ModelConfig,
    train_cfg: TrainConfig,
    labels: list,
    word_table=None,
    vocab=None,
    label_tables=None,
    vocab_sha256: str = "",
    out_dir=None,
    log=None,
) -> TrainResult:
    """Minibatch training with per-epoch validation and early stopping.

    Shuffling, dropout, and initialization derive from ``train_cfg.seed``,
    so identical inputs give identical results. When ``out_dir`` is given,
    ``best.ckpt``, ``last.ckpt``, and ``history.jsonl`` are written there.
    """
    if not train_docs:
        raise TrainingError("no training documents")
    if not valid_docs:
        raise TrainingError("no validation documents")
    params = init_params(
        config,
        word_table=word_table,
        vocab=vocab,
        label_tables=label_tables,
        labels=labels,
        seed=train_cfg.seed,
    )
    lam = train_cfg.l2_lambda if train_cfg.l2_lambda is not None else config.l2_lambda
    state = AdamState.fresh(params)
    metric_name = train_cfg.early_stop_metric
    history: list[EpochRecord] = []
    best_value = -np.inf
    best_epoch = -1
    best_ckpt: Optional[Checkpoint] = None
    stale = 0
    stopped_early = False

    def snapshot(extra):
        return _copy_checkpoint(params, config, labels, vocab_sha256, extra)

    for epoch in range(1, train_cfg.max_epochs + 1):
        order = np.random.default_rng((train_cfg.seed, epoch)).permutation(
            len(train_docs)
        )
        dropout_rng = np.random.default_rng((train_cfg.seed, epoch, 1))
        epoch_loss = 0.0
        for start in range(0, len(order), train_cfg.batch_size):
            batch = [train_docs[i] for i in order[start : start + train_cfg.batch_size]]
            grids, tmask, smask, targets = stack_documents(batch)
            with ad.Tape() as tape:
                result = forward_batch(
                    grids, tmask, smask, params, config,
                    train=True, dropout_rng=dropout_rng,
                )
                loss = bce_loss(result.scores, targets) + l2_penalty(params, lam)
            loss_val = float(loss.data)
            if not np.isfinite(loss_val):
                raise DivergenceError(
                    f"training loss became non-finite at epoch {epoch}",
                    checkpoint=best_ckpt or snapshot({"epoch": epoch - 1}),
                )
            epoch_loss += loss_val
            grads = ad.backward(tape, loss)
            named = params.named_tensors()
            grad_map = {name: grads.of(t) for name, t in named.items()}
            grad_map = clip_global_norm(grad_map, train_cfg.clip_norm)
            try:
                adam_step(params, grad_map, state, train_cfg)
            except DivergenceError as err:
                if err.checkpoint is None:
                    err.checkpoint = best_ckpt or snapshot({"epoch": epoch - 1})
                raise

        vals = _validation_metrics(
            params, config, valid_docs, train_cfg.k, train_cfg.batch_size
        )
        record = EpochRecord(
            epoch=epoch,
            train_loss=epoch_loss / len(train_docs),
            metrics=vals,
        )
        history.append(record)
        if log:
            log(record)

        value = vals[metric_name]
        if value > best_value:
            best_value = value
            best_epoch = epoch
            best_ckpt = snapshot({"epoch": epoch, metric_name: value})
            stale = 0
        else:
            stale += 1
            if stale >= train_cfg.patience:
                stopped_early = True
                break

    last_ckpt = snapshot({"epoch": history[-1].epoch})
    assert best_ckpt is not None
    result = TrainResult(
        best=best_ckpt,
        last=last_ckpt,
        history=history,
        best_epoch=best_epoch,
        stopped_early=stopped_early,
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out / "best.ckpt", best_ckpt)
        save_checkpoint(out / "last.ckpt", last_ckpt)
        with open(out / "history.jsonl", "w", encoding="utf-8") as fh:
            for record in history:
                fh.write(record.to_json() + "\n")
    return result


def predict_scores(
    params: ModelParams,
    config: ModelConfig,
    docs: list,
    batch_size: int = 32,
) -> np.ndarray:
    """Per-label probabilities for each document, evaluation mode."""
    rows = []
    for start in range(0, len(docs), batch_size):
        batch = docs[start : start + batch_size]
        grids, tmask, smask, _ = stack_documents(batch)
        result = forward_batch(grids, tmask, smask, params, config)
        rows.append(result.probabilities())
    return np.concatenate(rows, axis=0)


def predict(
    params: ModelParams,
    config: ModelConfig,
    doc: EncodedDocument,
    threshold: Optional[float] = None,
) -> tuple[list[int], np.ndarray]:
    """Label indices whose probability strictly exceeds the threshold,
    plus the full probability vector for ranking."""
    th = config.threshold if threshold is None else threshold
    if not 0.0 < th < 1.0:
        raise TrainingError(f"threshold must be in (0,1), got {th}")
    probs = predict_scores(params, config, [doc], batch_size=1)[0]
    chosen = [int(i) for i in np.flatnonzero(probs > th)]
    return chosen, probs
