"""Central finite-difference check of the analytic gradients."""
from __future__ import annotations

import numpy as np

from ..core import make_rng
from ..encoding import BOS, ONE, ZERO
from .model import Batch, ModelConfig, backward, forward, init_parameters
from . import layers as L

ABS_FLOOR = 1e-6

TINY = ModelConfig(
    enc_layers=1, dec_layers=1, heads=2, d_model=8, d_ff=16, max_src_len=40, max_tgt_len=8, dropout=0.0
)


def random_batch(config: ModelConfig, rng, batch_size: int = 2, T: int = 4) -> Batch:
    src = rng.integers(0, config.src_vocab, size=(batch_size, 5 * T))
    labels = rng.integers(ZERO, ONE + 1, size=(batch_size, T))
    tgt_in = np.concatenate([np.full((batch_size, 1), BOS), labels[:, :-1]], axis=1)
    return Batch(src=src, tgt_in=tgt_in, tgt_out=labels)


def batch_loss(params, config: ModelConfig, batch: Batch) -> float:
    logits, _, _ = forward(params, config, batch.src, batch.tgt_in, batch.src_mask)
    return L.cross_entropy(logits, batch.tgt_out, ignore_index=0)[0]


def gradient_check(config: ModelConfig = TINY, seed: int = 0, samples: int = 200, step: float = 1e-5):
    """Worst relative error between analytic and central-difference gradients.

    Runs in float64 with dropout off.  Samples are drawn across every tensor;
    for the embedding tables only rows the batch actually uses are sampled,
    the rest are checked to carry an exactly zero gradient.
    Returns ``(max_rel_error, records)`` with one record per sampled scalar.
    """
    rng = make_rng(seed)
    params = init_parameters(config, dtype=np.float64)
    # perturb the init so layer-norm gains and biases are not at special values
    for k in params:
        params[k] = params[k] + 0.1 * rng.standard_normal(params[k].shape)
    batch = random_batch(config, rng)
    logits, _, cache = forward(params, config, batch.src, batch.tgt_in)
    _, dlogits, _ = L.cross_entropy(logits, batch.tgt_out, ignore_index=0)
    grads = backward(params, cache, dlogits)

    used = {"src_emb": np.unique(batch.src), "tgt_emb": np.unique(batch.tgt_in)}
    for name, rows in used.items():
        untouched = np.setdiff1d(np.arange(params[name].shape[0]), rows)
        if np.any(grads[name][untouched] != 0):
            raise AssertionError(f"{name} has gradient on rows the batch never used")

    names = sorted(params)
    records = []
    worst = 0.0
    for _ in range(samples):
        name = names[rng.integers(len(names))]
        arr = params[name]
        if name in used:
            idx = (int(rng.choice(used[name])), int(rng.integers(arr.shape[1])))
        else:
            idx = tuple(int(rng.integers(n)) for n in arr.shape)
        old = arr[idx]
        arr[idx] = old + step
        up = batch_loss(params, config, batch)
        arr[idx] = old - step
        down = batch_loss(params, config, batch)
        arr[idx] = old
        numeric = (up - down) / (2 * step)
        analytic = float(grads[name][idx])
        # key biases have an identically zero gradient (softmax shift invariance);
        # below the floor the difference quotient is pure round-off
        denom = max(abs(numeric), abs(analytic), ABS_FLOOR)
        rel = abs(numeric - analytic) / denom
        worst = max(worst, rel)
        records.append({"tensor": name, "index": idx, "analytic": analytic, "numeric": numeric, "rel": rel})
    return worst, records
