"""Shared test helpers."""

import math

import numpy as np
from scipy.special import erf

from protprompt import tokenizer as T


def reference_forward(model, ids):
    """Plain numpy rendition of the no-prompt encoder forward pass.

    Mirrors the model's operation order so results can be compared
    bitwise, but shares no code with the library.
    """
    p = {k: v.data for k, v in model.parameters().items()}
    n = ids.size
    x = p["embed.tok"][ids] + p["embed.seg"][np.zeros(n, dtype=np.intp)]
    x = x + p["embed.pos"][np.arange(n)]
    keep = (ids != T.PAD_ID).astype(np.float64)
    penalty = np.where(np.ones((n, n)) * keep[None, :] > 0, 0.0, -1.0e9)
    d = model.config.d
    dh = d // model.config.heads
    for li in range(model.config.layers):
        pre = f"layer{li}"
        q = x @ p[f"{pre}.attn.wq"] + p[f"{pre}.attn.bq"]
        k = x @ p[f"{pre}.attn.wk"] + p[f"{pre}.attn.bk"]
        v = x @ p[f"{pre}.attn.wv"] + p[f"{pre}.attn.bv"]
        outs = []
        for h in range(model.config.heads):
            sl = slice(h * dh, (h + 1) * dh)
            s = (q[:, sl] @ k[:, sl].T.copy()) * (1.0 / math.sqrt(dh)) + penalty
            e = np.exp(s - s.max(axis=1, keepdims=True))
            outs.append((e / e.sum(axis=1, keepdims=True)) @ v[:, sl])
        attn = np.concatenate(outs, axis=1) @ p[f"{pre}.attn.wo"] + p[f"{pre}.attn.bo"]

        def ln(z, gain, bias):
            mu = z.mean(axis=1, keepdims=True)
            var = ((z - mu) ** 2).mean(axis=1, keepdims=True)
            return (z - mu) * (1.0 / np.sqrt(var + 1e-5)) * gain + bias

        x = ln(x + attn, p[f"{pre}.ln1.gain"], p[f"{pre}.ln1.bias"])
        a1 = x @ p[f"{pre}.ff.w1"] + p[f"{pre}.ff.b1"]
        g = a1 * (0.5 * (1.0 + erf(a1 / np.sqrt(2.0))))
        x = ln(x + (g @ p[f"{pre}.ff.w2"] + p[f"{pre}.ff.b2"]),
               p[f"{pre}.ln2.gain"], p[f"{pre}.ln2.bias"])
    return x
