"""Encoder-decoder transformer over instance tokens and setup-label tokens.

Parameters live in a flat ``dict[str, np.ndarray]`` (e.g. ``enc.0.attn.wq``);
gradients use the same keys.  Blocks are pre-layer-norm with sinusoidal
positions added to scaled token embeddings.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ..core import ConfigurationError, ContractError, make_rng
from ..encoding import BOS, ONE, PAD, TARGET_VOCAB, ZERO
from . import layers as L

ATTN_KEYS = ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")
FFN_KEYS = ("w1", "b1", "w2", "b2")


@dataclass(frozen=True)
class ModelConfig:
    enc_layers: int = 2
    dec_layers: int = 2
    heads: int = 2
    d_model: int = 64
    d_ff: int = 256
    src_vocab: int = 12000
    tgt_vocab: int = TARGET_VOCAB
    max_src_len: int = 450
    max_tgt_len: int = 90
    dropout: float = 0.1
    seed: int = 0
    positional: bool = True

    def validate(self) -> None:
        if min(self.enc_layers, self.dec_layers) < 1 or self.heads < 1:
            raise ConfigurationError("need at least one layer and one head")
        if self.d_model % self.heads:
            raise ConfigurationError(f"d_model={self.d_model} is not divisible by heads={self.heads}")
        if self.d_ff < 1 or self.max_src_len < 1 or self.max_tgt_len < 1:
            raise ConfigurationError("d_ff and maximum lengths must be positive")
        if self.tgt_vocab != TARGET_VOCAB:
            raise ConfigurationError(f"target vocabulary must have {TARGET_VOCAB} tokens")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError("dropout must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        return cls(**obj)


def _block_shapes(prefix: str, D: int, F: int, sublayers: tuple) -> dict:
    shapes = {}
    for i, name in enumerate(sublayers, start=1):
        shapes[f"{prefix}.ln{i}.g"] = (D,)
        shapes[f"{prefix}.ln{i}.b"] = (D,)
        if name == "ffn":
            shapes.update({f"{prefix}.ffn.w1": (D, F), f"{prefix}.ffn.b1": (F,),
                           f"{prefix}.ffn.w2": (F, D), f"{prefix}.ffn.b2": (D,)})
        else:
            for k in ATTN_KEYS:
                shapes[f"{prefix}.{name}.{k}"] = (D, D) if k.startswith("w") else (D,)
    return shapes


def parameter_shapes(config: ModelConfig) -> dict:
    D, F = config.d_model, config.d_ff
    shapes = {"src_emb": (config.src_vocab, D), "tgt_emb": (config.tgt_vocab, D)}
    for i in range(config.enc_layers):
        shapes.update(_block_shapes(f"enc.{i}", D, F, ("attn", "ffn")))
    shapes["enc.ln.g"] = (D,)
    shapes["enc.ln.b"] = (D,)
    for i in range(config.dec_layers):
        shapes.update(_block_shapes(f"dec.{i}", D, F, ("self", "cross", "ffn")))
    shapes["dec.ln.g"] = (D,)
    shapes["dec.ln.b"] = (D,)
    shapes["out.w"] = (D, config.tgt_vocab)
    shapes["out.b"] = (config.tgt_vocab,)
    return shapes


def init_parameters(config: ModelConfig, dtype=np.float32) -> dict:
    """Xavier-uniform projections, unit-variance embeddings after scaling, zero biases."""
    config.validate()
    rng = make_rng(config.seed)
    params = {}
    for name, shape in parameter_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if name in ("src_emb", "tgt_emb"):
            bound = math.sqrt(3.0 / config.d_model)
            arr = rng.uniform(-bound, bound, size=shape)
        elif leaf == "g":
            arr = np.ones(shape)
        elif len(shape) == 2:
            bound = math.sqrt(6.0 / (shape[0] + shape[1]))
            arr = rng.uniform(-bound, bound, size=shape)
        else:
            arr = np.zeros(shape)
        params[name] = arr.astype(dtype)
    return params


def count_parameters(params: dict) -> int:
    return int(sum(a.size for a in params.values()))


def _sub(params: dict, prefix: str, keys) -> dict:
    return {k: params[f"{prefix}.{k}"] for k in keys}


def _positions(config: ModelConfig, length: int, dtype) -> np.ndarray:
    if not config.positional:
        return np.zeros((length, config.d_model), dtype=dtype)
    return L.sinusoidal_positions(length, config.d_model).astype(dtype)


def _check_tokens(tokens: np.ndarray, vocab: int, max_len: int, what: str) -> None:
    if tokens.ndim != 2:
        raise ContractError(f"{what} tokens must be a (batch, length) array")
    if tokens.shape[1] > max_len:
        raise ContractError(f"{what} length {tokens.shape[1]} exceeds model maximum {max_len}")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= vocab):
        raise ContractError(f"{what} token out of range [0, {vocab})")


def _embed(params, name, tokens, pe, rate, rng):
    D = params[name].shape[1]
    scale = np.asarray(math.sqrt(D), dtype=params[name].dtype)
    x = params[name][tokens] * scale + pe[: tokens.shape[1]]
    x, keep = L.dropout_forward(x, rate, rng)
    return x, (name, tokens, scale, keep)


def _residual(x, fn_out, rate, rng):
    y, keep = L.dropout_forward(fn_out, rate, rng)
    return x + y, keep


def encode(params, config: ModelConfig, src, src_mask, rate=0.0, rng=None):
    dtype = params["src_emb"].dtype
    x, emb_cache = _embed(params, "src_emb", src, _positions(config, src.shape[1], dtype), rate, rng)
    key_mask = src_mask[:, None, None, :]
    caches, maps = [], []
    for i in range(config.enc_layers):
        pre = f"enc.{i}"
        a, c_ln1 = L.layernorm_forward(x, params[f"{pre}.ln1.g"], params[f"{pre}.ln1.b"])
        att, w, c_att = L.attention_forward(a, a, _sub(params, f"{pre}.attn", ATTN_KEYS), config.heads, key_mask)
        x, k1 = _residual(x, att, rate, rng)
        b, c_ln2 = L.layernorm_forward(x, params[f"{pre}.ln2.g"], params[f"{pre}.ln2.b"])
        ff, c_ff = L.ffn_forward(b, _sub(params, f"{pre}.ffn", FFN_KEYS))
        x, k2 = _residual(x, ff, rate, rng)
        caches.append((c_ln1, c_att, k1, c_ln2, c_ff, k2))
        maps.append(w)
    out, c_ln = L.layernorm_forward(x, params["enc.ln.g"], params["enc.ln.b"])
    return out, maps, (emb_cache, caches, c_ln)


def decode(params, config: ModelConfig, memory, src_mask, tgt_in, rate=0.0, rng=None):
    dtype = params["tgt_emb"].dtype
    Lt = tgt_in.shape[1]
    x, emb_cache = _embed(params, "tgt_emb", tgt_in, _positions(config, Lt, dtype), rate, rng)
    causal = np.tril(np.ones((Lt, Lt), dtype=bool))[None, None]
    key_mask = src_mask[:, None, None, :]
    caches, self_maps, cross_maps = [], [], []
    for i in range(config.dec_layers):
        pre = f"dec.{i}"
        a, c_ln1 = L.layernorm_forward(x, params[f"{pre}.ln1.g"], params[f"{pre}.ln1.b"])
        sa, w_self, c_sa = L.attention_forward(a, a, _sub(params, f"{pre}.self", ATTN_KEYS), config.heads, causal)
        x, k1 = _residual(x, sa, rate, rng)
        b, c_ln2 = L.layernorm_forward(x, params[f"{pre}.ln2.g"], params[f"{pre}.ln2.b"])
        ca, w_cross, c_ca = L.attention_forward(
            b, memory, _sub(params, f"{pre}.cross", ATTN_KEYS), config.heads, key_mask
        )
        x, k2 = _residual(x, ca, rate, rng)
        c, c_ln3 = L.layernorm_forward(x, params[f"{pre}.ln3.g"], params[f"{pre}.ln3.b"])
        ff, c_ff = L.ffn_forward(c, _sub(params, f"{pre}.ffn", FFN_KEYS))
        x, k3 = _residual(x, ff, rate, rng)
        caches.append((c_ln1, c_sa, k1, c_ln2, c_ca, k2, c_ln3, c_ff, k3))
        self_maps.append(w_self)
        cross_maps.append(w_cross)
    h, c_ln = L.layernorm_forward(x, params["dec.ln.g"], params["dec.ln.b"])
    logits, c_out = L.linear_forward(h, params["out.w"], params["out.b"])
    return logits, self_maps, cross_maps, (emb_cache, caches, c_ln, c_out)


def forward(params, config: ModelConfig, src, tgt_in, src_mask=None, train=False, rng=None):
    """Logits of shape ``(batch, target_len, 4)`` and per-layer attention maps.

    ``src_mask`` marks real source positions (all True when omitted).  Dropout
    is applied only when ``train`` is set and an ``rng`` is supplied.
    Returns ``(logits, attention, cache)``; ``attention`` maps ``encoder``,
    ``decoder`` and ``cross`` to lists of ``(batch, heads, Lq, Lk)`` arrays.
    """
    src = np.asarray(src)
    tgt_in = np.asarray(tgt_in)
    if src.ndim == 1:
        src, tgt_in = src[None], tgt_in[None]
    _check_tokens(src, config.src_vocab, config.max_src_len, "source")
    _check_tokens(tgt_in, config.tgt_vocab, config.max_tgt_len, "target")
    if src_mask is None:
        src_mask = np.ones(src.shape, dtype=bool)
    rate = config.dropout if train else 0.0
    rng = rng if train else None
    memory, enc_maps, enc_cache = encode(params, config, src, src_mask, rate, rng)
    logits, self_maps, cross_maps, dec_cache = decode(params, config, memory, src_mask, tgt_in, rate, rng)
    attention = {"encoder": enc_maps, "decoder": self_maps, "cross": cross_maps}
    return logits, attention, (config, enc_cache, dec_cache)


def _add(grads, prefix, sub):
    for k, v in sub.items():
        key = f"{prefix}.{k}"
        if key in grads:
            grads[key] = grads[key] + v
        else:
            grads[key] = v


def _embed_backward(dx, cache, params, grads):
    name, tokens, scale, keep = cache
    dx = L.dropout_backward(dx, keep) * scale
    g = np.zeros_like(params[name])
    np.add.at(g, tokens.reshape(-1), dx.reshape(-1, dx.shape[-1]))
    grads[name] = g


def backward(params, cache, dlogits) -> dict:
    """Gradients of a scalar loss given its gradient w.r.t. the logits."""
    config, enc_cache, dec_cache = cache
    grads: dict = {}
    emb_cache, caches, c_ln, c_out = dec_cache
    dh, g = L.linear_backward(dlogits, c_out)
    _add(grads, "out", g)
    dx, g = L.layernorm_backward(dh, c_ln)
    _add(grads, "dec.ln", g)
    dmemory = None
    for i in reversed(range(config.dec_layers)):
        pre = f"dec.{i}"
        c_ln1, c_sa, k1, c_ln2, c_ca, k2, c_ln3, c_ff, k3 = caches[i]
        dff, g = L.ffn_backward(L.dropout_backward(dx, k3), c_ff)
        _add(grads, f"{pre}.ffn", g)
        dc, g = L.layernorm_backward(dff, c_ln3)
        _add(grads, f"{pre}.ln3", g)
        dx = dx + dc
        dq, dmem, g = L.attention_backward(L.dropout_backward(dx, k2), c_ca)
        _add(grads, f"{pre}.cross", g)
        dmemory = dmem if dmemory is None else dmemory + dmem
        db, g = L.layernorm_backward(dq, c_ln2)
        _add(grads, f"{pre}.ln2", g)
        dx = dx + db
        dq, dkv, g = L.attention_backward(L.dropout_backward(dx, k1), c_sa)
        _add(grads, f"{pre}.self", g)
        da, g = L.layernorm_backward(dq + dkv, c_ln1)
        _add(grads, f"{pre}.ln1", g)
        dx = dx + da
    _embed_backward(dx, emb_cache, params, grads)

    emb_cache, caches, c_ln = enc_cache
    dx, g = L.layernorm_backward(dmemory, c_ln)
    _add(grads, "enc.ln", g)
    for i in reversed(range(config.enc_layers)):
        pre = f"enc.{i}"
        c_ln1, c_att, k1, c_ln2, c_ff, k2 = caches[i]
        dff, g = L.ffn_backward(L.dropout_backward(dx, k2), c_ff)
        _add(grads, f"{pre}.ffn", g)
        db, g = L.layernorm_backward(dff, c_ln2)
        _add(grads, f"{pre}.ln2", g)
        dx = dx + db
        dq, dkv, g = L.attention_backward(L.dropout_backward(dx, k1), c_att)
        _add(grads, f"{pre}.attn", g)
        da, g = L.layernorm_backward(dq + dkv, c_ln1)
        _add(grads, f"{pre}.ln1", g)
        dx = dx + da
    _embed_backward(dx, emb_cache, params, grads)
    return {k: grads[k].astype(params[k].dtype, copy=False) for k in params}


@dataclass
class Batch:
    src: np.ndarray  # (B, S) source tokens
    tgt_in: np.ndarray  # (B, Lt) BOS + labels[:-1], PAD-filled
    tgt_out: np.ndarray  # (B, Lt) labels, PAD-filled
    src_mask: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.src)


def loss_and_grads(params, config: ModelConfig, batch: Batch, train=False, rng=None, smoothing=0.0):
    """Teacher-forced mean cross entropy over non-PAD targets and its gradients."""
    if len(batch) == 0:
        raise ContractError("empty batch")
    logits, _, cache = forward(params, config, batch.src, batch.tgt_in, batch.src_mask, train, rng)
    loss, dlogits, _ = L.cross_entropy(logits, batch.tgt_out, PAD, smoothing)
    return loss, backward(params, cache, dlogits)


def greedy_decode_batch(params, config: ModelConfig, src, horizons, src_mask=None) -> list:
    """Greedy label decoding, restricted to ZERO/ONE; ties go to ZERO."""
    src = np.asarray(src)
    if src_mask is None:
        src_mask = np.ones(src.shape, dtype=bool)
    horizons = [int(h) for h in horizons]
    Tmax = max(horizons)
    if Tmax > config.max_tgt_len:
        raise ContractError(f"horizon {Tmax} exceeds model maximum {config.max_tgt_len}")
    _check_tokens(src, config.src_vocab, config.max_src_len, "source")
    memory, _, _ = encode(params, config, src, src_mask)
    tokens = np.full((len(src), Tmax + 1), PAD, dtype=np.int64)
    tokens[:, 0] = BOS
    for k in range(Tmax):
        logits, _, _, _ = decode(params, config, memory, src_mask, tokens[:, : k + 1])
        last = logits[:, -1]
        tokens[:, k + 1] = np.where(last[:, ONE] > last[:, ZERO], ONE, ZERO)
    return [np.where(tokens[i, 1 : h + 1] == ONE, 1, 0).astype(np.int8) for i, h in enumerate(horizons)]


def greedy_decode(params, config: ModelConfig, src, T: int) -> np.ndarray:
    return greedy_decode_batch(params, config, np.asarray(src)[None], [T])[0]
