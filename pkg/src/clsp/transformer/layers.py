"""Forward/backward pairs for the transformer's building blocks.

Every ``*_forward`` returns ``(output, cache)`` and the matching
``*_backward`` takes ``(d_output, cache)`` and returns the input gradient(s)
plus a dict of parameter gradients keyed by the short names used in
``params``.  Arrays are batch-first; dtypes follow the parameters so the same
code runs in float32 for training and float64 for gradient checks.
"""
from __future__ import annotations

import numpy as np

LN_EPS = 1e-5
NEG_INF = -1e9


def linear_forward(x, w, b):
    return x @ w + b, (x, w)


def linear_backward(dy, cache):
    x, w = cache
    x2 = x.reshape(-1, x.shape[-1])
    dy2 = dy.reshape(-1, dy.shape[-1])
    return dy @ w.T, {"w": x2.T @ dy2, "b": dy2.sum(axis=0)}


def layernorm_forward(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    rstd = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd, g)


def layernorm_backward(dy, cache):
    xhat, rstd, g = cache
    n = xhat.shape[-1]
    dg = (dy * xhat).reshape(-1, n).sum(axis=0)
    db = dy.reshape(-1, n).sum(axis=0)
    dxhat = dy * g
    dx = rstd * (
        dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, {"g": dg, "b": db}


def softmax(scores, axis=-1):
    z = scores - scores.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def _split_heads(x, heads):
    B, L, D = x.shape
    return x.reshape(B, L, heads, D // heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    B, H, L, dk = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, L, H * dk)


def attention_forward(xq, xkv, p, heads, mask=None):
    """Multi-head attention.

    ``p`` holds ``wq bq wk bk wv bv wo bo``; ``mask`` is boolean and
    broadcastable to ``(B, heads, Lq, Lk)`` with True marking allowed keys.
    Returns ``(output, weights, cache)``.
    """
    q, cq = linear_forward(xq, p["wq"], p["bq"])
    k, ck = linear_forward(xkv, p["wk"], p["bk"])
    v, cv = linear_forward(xkv, p["wv"], p["bv"])
    qh, kh, vh = (_split_heads(a, heads) for a in (q, k, v))
    scale = np.asarray(1.0 / np.sqrt(qh.shape[-1]), dtype=qh.dtype)
    scores = (qh @ kh.transpose(0, 1, 3, 2)) * scale
    if mask is not None:
        scores = np.where(mask, scores, np.asarray(NEG_INF, dtype=scores.dtype))
    weights = softmax(scores)
    ctx = _merge_heads(weights @ vh)
    out, co = linear_forward(ctx, p["wo"], p["bo"])
    return out, weights, (cq, ck, cv, co, qh, kh, vh, weights, scale, heads)


def attention_backward(dout, cache):
    """Returns ``(d_xq, d_xkv, grads)``; callers add the two for self-attention."""
    cq, ck, cv, co, qh, kh, vh, weights, scale, heads = cache
    dctx, go = linear_backward(dout, co)
    dctx_h = _split_heads(dctx, heads)
    dweights = dctx_h @ vh.transpose(0, 1, 3, 2)
    dvh = weights.transpose(0, 1, 3, 2) @ dctx_h
    dscores = weights * (dweights - (dweights * weights).sum(axis=-1, keepdims=True))
    dscores = dscores * scale
    dqh = dscores @ kh
    dkh = dscores.transpose(0, 1, 3, 2) @ qh
    dxq, gq = linear_backward(_merge_heads(dqh), cq)
    dxk, gk = linear_backward(_merge_heads(dkh), ck)
    dxv, gv = linear_backward(_merge_heads(dvh), cv)
    grads = {
        "wq": gq["w"], "bq": gq["b"],
        "wk": gk["w"], "bk": gk["b"],
        "wv": gv["w"], "bv": gv["b"],
        "wo": go["w"], "bo": go["b"],
    }
    return dxq, dxk + dxv, grads


def ffn_forward(x, p):
    h, c1 = linear_forward(x, p["w1"], p["b1"])
    active = h > 0
    h = h * active
    out, c2 = linear_forward(h, p["w2"], p["b2"])
    return out, (c1, c2, active)


def ffn_backward(dout, cache):
    c1, c2, active = cache
    dh, g2 = linear_backward(dout, c2)
    dx, g1 = linear_backward(dh * active, c1)
    return dx, {"w1": g1["w"], "b1": g1["b"], "w2": g2["w"], "b2": g2["b"]}


def dropout_forward(x, rate, rng):
    if rate <= 0.0 or rng is None:
        return x, None
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / np.asarray(1.0 - rate, dtype=x.dtype)
    return x * keep, keep


def dropout_backward(dy, keep):
    return dy if keep is None else dy * keep


def sinusoidal_positions(length: int, d_model: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    i = np.arange(0, d_model, 2)[None, :]
    angle = pos / np.power(10000.0, i / d_model)
    pe = np.zeros((length, d_model))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : d_model // 2])
    return pe


def cross_entropy(logits, targets, ignore_index, smoothing=0.0):
    """Mean cross entropy over positions whose target is not ``ignore_index``.

    Returns ``(loss, dlogits, n_counted)``.
    """
    z = logits - logits.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    probs = np.exp(logp)
    valid = targets != ignore_index
    n = int(valid.sum())
    if n == 0:
        raise ValueError("batch has no non-padding targets")
    K = logits.shape[-1]
    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, targets[..., None], 1.0, axis=-1)
    q = onehot * (1.0 - smoothing) + smoothing / K
    per_pos = -(q * logp).sum(axis=-1)
    loss = float((per_pos * valid).sum() / n)
    dlogits = (probs - q) * valid[..., None] / np.asarray(n, dtype=probs.dtype)
    return loss, dlogits.astype(logits.dtype), n
