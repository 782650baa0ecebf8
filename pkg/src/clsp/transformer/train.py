"""Teacher-forced minibatch training and token-level evaluation."""
from __future__ import annotations

import logging
import math
from typing import Optional, Sequence

import numpy as np

from ..core import make_rng
from ..encoding import ONE, PAD, ZERO, TokenizerConfig, encode_source, encode_target, fit_normalizer
from .checkpoint import ModelCheckpoint
from .model import Batch, ModelConfig, forward, greedy_decode_batch, init_parameters, loss_and_grads
from .optim import AdamState, NonFiniteGradient, TrainConfig, adam_step, clip_by_global_norm

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Raised when the loss or a gradient goes non-finite.

    ``checkpoint`` holds the parameters from before the failing step.
    """

    def __init__(self, message: str, checkpoint: ModelCheckpoint, history: list):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.history = history


class Encoded:
    """Pre-tokenized examples, kept as ragged lists.

    ``pairs`` holds ``(instance, setup)`` tuples or dataset records.
    """

    def __init__(self, pairs: Sequence, tokenizer: TokenizerConfig):
        self.src = []
        self.tgt = []
        for inst, y in _examples(pairs):
            self.src.append(encode_source(inst, tokenizer))
            self.tgt.append(encode_target(y))
        self.horizons = [len(t) - 1 for t in self.tgt]

    def __len__(self) -> int:
        return len(self.src)

    def batch(self, idx) -> Batch:
        idx = list(idx)
        S = max(len(self.src[i]) for i in idx)
        Lt = max(len(self.tgt[i]) - 1 for i in idx)
        src = np.zeros((len(idx), S), dtype=np.int64)
        mask = np.zeros((len(idx), S), dtype=bool)
        tgt_in = np.full((len(idx), Lt), PAD, dtype=np.int64)
        tgt_out = np.full((len(idx), Lt), PAD, dtype=np.int64)
        for r, i in enumerate(idx):
            s, t = self.src[i], self.tgt[i]
            src[r, : len(s)] = s
            mask[r, : len(s)] = True
            tgt_in[r, : len(t) - 1] = t[:-1]
            tgt_out[r, : len(t) - 1] = t[1:]
        return Batch(src=src, tgt_in=tgt_in, tgt_out=tgt_out, src_mask=mask)


def token_accuracy(params, config: ModelConfig, data: Encoded, batch_size: int = 256) -> float:
    """Teacher-forced accuracy of the ZERO/ONE argmax over all label positions."""
    hit = total = 0
    for lo in range(0, len(data), batch_size):
        b = data.batch(range(lo, min(lo + batch_size, len(data))))
        logits, _, _ = forward(params, config, b.src, b.tgt_in, b.src_mask)
        pred = np.where(logits[..., ONE] > logits[..., ZERO], ONE, ZERO)
        valid = b.tgt_out != PAD
        hit += int(((pred == b.tgt_out) & valid).sum())
        total += int(valid.sum())
    return hit / total


def greedy_accuracy(params, config: ModelConfig, data: Encoded, batch_size: int = 256) -> float:
    """Per-token accuracy of free-running greedy decoding."""
    hit = total = 0
    for lo in range(0, len(data), batch_size):
        idx = range(lo, min(lo + batch_size, len(data)))
        b = data.batch(idx)
        preds = greedy_decode_batch(params, config, b.src, [data.horizons[i] for i in idx], b.src_mask)
        for i, y in zip(idx, preds):
            truth = data.tgt[i][1:] == ONE
            hit += int(np.sum(truth == (y == 1)))
            total += len(y)
    return hit / total


def _examples(dataset) -> list:
    """Accept ``(instance, setup)`` pairs or objects with ``instance``/``setup``."""
    out = []
    for item in dataset:
        if isinstance(item, tuple):
            out.append(item)
        else:
            out.append((item.instance, item.setup))
    return out


def _batch_order(n: int, config):
    """Endless stream of minibatch index arrays; reshuffled once per epoch."""
    order_rng = make_rng(config.data_seed)
    while True:
        order = order_rng.permutation(n) if config.shuffle else np.arange(n)
        for lo in range(0, n - config.batch_size + 1, config.batch_size):
            yield order[lo : lo + config.batch_size]
        if n < config.batch_size:
            yield order


def train(
    model_config: ModelConfig,
    train_config: TrainConfig,
    dataset,
    tokenizer: Optional[TokenizerConfig] = None,
    valid=None,
    resume: Optional[ModelCheckpoint] = None,
):
    """Train on labeled instances; returns ``(checkpoint, history)``.

    ``history`` has one dict per step with the minibatch loss, plus
    ``valid_acc`` every ``eval_every`` steps when ``valid`` is given.
    The normalizer is fitted on the training instances unless supplied.
    """
    pairs = _examples(dataset)
    if not pairs:
        raise ValueError("empty training set")
    if tokenizer is None:
        tokenizer = resume.tokenizer if resume else fit_normalizer(inst for inst, _ in pairs)
    data = Encoded(pairs, tokenizer)
    valid_data = Encoded(_examples(valid), tokenizer) if valid else None

    if resume is not None:
        model_config = resume.model_config
        params = {k: v.copy() for k, v in resume.params.items()}
        if resume.optimizer is None:
            state = AdamState.zeros_like(params)
        else:
            opt = resume.optimizer
            state = AdamState({k: v.copy() for k, v in opt.m.items()}, {k: v.copy() for k, v in opt.v.items()}, opt.step)
    else:
        params = init_parameters(model_config)
        state = AdamState.zeros_like(params)

    batches = _batch_order(len(data), train_config)
    history: list = []
    start = resume.step if resume else 0
    for _ in range(start):
        next(batches)

    def snapshot(step):
        return ModelCheckpoint(model_config, tokenizer, params, state, train_config, step)

    for step in range(start, start + train_config.steps):
        idx = next(batches)
        # dropout masks depend only on (seed, step), so a resumed run replays exactly
        dropout_rng = np.random.Generator(np.random.PCG64([train_config.data_seed, 1, step]))
        batch = data.batch(idx)
        loss, grads = loss_and_grads(
            params, model_config, batch, train=True, rng=dropout_rng, smoothing=train_config.label_smoothing
        )
        if not math.isfinite(loss):
            raise TrainingDiverged(f"loss became {loss} at step {step}", snapshot(step), history)
        clip_by_global_norm(grads, train_config.clip_norm)
        try:
            adam_step(params, grads, state, train_config)
        except NonFiniteGradient as exc:
            raise TrainingDiverged(str(exc), snapshot(step), history) from exc
        record = {"step": step + 1, "loss": loss}
        if valid_data is not None and train_config.eval_every and (step + 1) % train_config.eval_every == 0:
            record["valid_acc"] = token_accuracy(params, model_config, valid_data)
            log.info("step %d loss %.4f valid token accuracy %.4f", step + 1, loss, record["valid_acc"])
        history.append(record)

    ckpt = snapshot(start + train_config.steps)
    ckpt.history = history
    return ckpt, history


__all__ = [
    "Encoded",
    "TrainingDiverged",
    "greedy_accuracy",
    "token_accuracy",
    "train",
]
