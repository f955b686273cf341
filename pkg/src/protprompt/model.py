"""Transformer encoder with injectable prompt tokens and a one-way mask.

Prompt vectors are prepended ahead of the embedded input (canonical layout:
prompt rows first). The binary mask M over the (m+n) x (m+n) attention grid
keeps input rows fully connected while each prompt row sees only itself, so
information flows from prompts into inputs and never back:

    M[i][j] = 0  iff  (i <= m and j > m) or (i, j <= m and i != j)   (1-based)

Two application modes exist. "additive" (default) adds a large negative
penalty to disallowed logits before the row softmax, so every attention row
still sums to 1. "literal" multiplies the already-normalised attention
matrix elementwise by M, which deliberately destroys row normalisation and
is kept for ablation. Padding key columns are always excluded by AND-ing a
padding mask into M in both modes. A row left with no allowed key falls
back to attending to itself.

Prompt rows receive no position and no segment embedding, and they pass
through the same per-layer residual/layernorm/feed-forward block as every
other row.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import numerics as nm
from .errors import ConfigError, ContractError, ShapeError
from .numerics import MASK_NEG, Tensor
from .tokenizer import PAD_ID, VOCAB_SIZE, TokenSequence

PROMPT_INIT_STD = 0.02
INIT_STD = 0.02

PAIR_TYPES = 7  # downstream interaction-type classification width
SS3_CLASSES = 3
SS8_CLASSES = 8


@dataclass
class ModelConfig:
    """Architecture-level settings consumed by the encoder."""

    d: int = 64
    layers: int = 2
    heads: int = 4
    max_len: int = 256
    mask_mode: str = "additive"
    prompt_names: tuple[str, ...] = ("Seq", "IC")
    lambda_weight: float = 1.0
    alpha: dict = field(default_factory=lambda: {"ppi": 1.0})

    def __post_init__(self):
        if self.d <= 0 or self.layers <= 0 or self.heads <= 0:
            raise ConfigError("d, layers and heads must be positive")
        if self.d % self.heads != 0:
            raise ConfigError(f"d={self.d} not divisible by heads={self.heads}")
        if self.mask_mode not in ("additive", "literal"):
            raise ConfigError(f"unknown mask_mode {self.mask_mode!r}")
        if self.lambda_weight < 0 or any(a < 0 for a in self.alpha.values()):
            raise ConfigError("lambda and alpha weights must be >= 0")

    @classmethod
    def from_run_config(cls, cfg) -> "ModelConfig":
        return cls(
            d=cfg.d,
            layers=cfg.layers,
            heads=cfg.heads,
            max_len=cfg.max_len,
            mask_mode=cfg.mask_mode,
            prompt_names=cfg.prompt_names(),
            lambda_weight=cfg.lambda_weight,
            alpha=cfg.alpha(),
        )


@dataclass
class AttentionMask:
    """Binary (m+n) x (m+n) mask, prompt rows first."""

    m: int
    n: int
    matrix: np.ndarray


def build_mask(m: int, n: int) -> AttentionMask:
    """Build the one-way information-flow mask for m prompts and n inputs."""
    if m < 0:
        raise ConfigError(f"prompt count must be >= 0, got {m}")
    if n <= 0:
        raise ConfigError(f"input length must be >= 1, got {n}")
    size = m + n
    mat = np.ones((size, size), dtype=np.float64)
    if m:
        mat[:m, :] = 0.0
        mat[np.arange(m), np.arange(m)] = 1.0
    return AttentionMask(m=m, n=n, matrix=mat)


def combine_key_mask(mask: AttentionMask, key_keep: np.ndarray | None) -> np.ndarray:
    """AND the structural mask with a per-key keep vector (False = padding).

    Any row left all-zero falls back to self-attention on its diagonal.
    """
    allowed = mask.matrix.copy()
    if key_keep is not None:
        key_keep = np.asarray(key_keep, dtype=bool)
        if key_keep.shape != (mask.m + mask.n,):
            raise ShapeError(
                f"key mask length {key_keep.shape} does not match {mask.m + mask.n} keys"
            )
        allowed *= key_keep[None, :].astype(np.float64)
    dead = allowed.sum(axis=1) == 0.0
    if dead.any():
        idx = np.flatnonzero(dead)
        allowed[idx, idx] = 1.0
    return allowed


class PromptSet:
    """Named, ordered collection of learnable prompt vectors.

    Prompts live outside the token vocabulary, so they can never collide
    with an input id; collisions are only possible on names and are errors.
    """

    def __init__(self):
        self._vectors: dict[str, Tensor] = {}
        self.trainable: dict[str, bool] = {}

    def register(self, name: str, vector: Tensor, trainable: bool = True) -> None:
        if name in self._vectors:
            raise ConfigError(f"prompt name collision: {name!r} already registered")
        if vector.data.ndim != 1:
            raise ShapeError(f"prompt {name!r} must be a vector, got {vector.shape}")
        vector.requires_grad = trainable
        self._vectors[name] = vector
        self.trainable[name] = trainable

    def names(self) -> tuple[str, ...]:
        return tuple(self._vectors)

    def get(self, name: str) -> Tensor:
        if name not in self._vectors:
            raise ConfigError(f"unknown prompt {name!r}; registered: {list(self._vectors)}")
        return self._vectors[name]

    def __len__(self) -> int:
        return len(self._vectors)


@dataclass
class EncoderOutput:
    """Final-layer representations plus the layout needed to slice them."""

    h: Tensor  # (m + n, d)
    m: int
    seq: TokenSequence
    attn: list | None = None  # per layer, per head attention rows (numpy)

    def prompt_rows(self) -> Tensor:
        return nm.slice_rows(self.h, 0, self.m)

    def input_rows(self) -> Tensor:
        return nm.slice_rows(self.h, self.m, self.h.shape[0])

    def residue_rows(self) -> Tensor:
        """Rows of real residues only (CLS, EOS, PAD and prompts excluded)."""
        return nm.select_rows(self.h, self.m + self.seq.residue_positions())


class EncoderLayer:
    """Multi-head masked attention followed by the residual/LN/FF block."""

    def __init__(self, d: int, heads: int, rng: np.random.Generator):
        self.d = d
        self.heads = heads
        self.d_head = d // heads

        def w(shape):
            return Tensor(rng.normal(0.0, INIT_STD, shape), requires_grad=True)

        def zeros(shape):
            return Tensor(np.zeros(shape), requires_grad=True)

        self.wq, self.bq = w((d, d)), zeros(d)
        self.wk, self.bk = w((d, d)), zeros(d)
        self.wv, self.bv = w((d, d)), zeros(d)
        self.wo, self.bo = w((d, d)), zeros(d)
        self.ln1_gain, self.ln1_bias = Tensor(np.ones(d), requires_grad=True), zeros(d)
        self.ff_w1, self.ff_b1 = w((d, 4 * d)), zeros(4 * d)
        self.ff_w2, self.ff_b2 = w((4 * d, d)), zeros(d)
        self.ln2_gain, self.ln2_bias = Tensor(np.ones(d), requires_grad=True), zeros(d)

    def params(self, prefix: str) -> dict[str, Tensor]:
        return {
            f"{prefix}.attn.wq": self.wq,
            f"{prefix}.attn.bq": self.bq,
            f"{prefix}.attn.wk": self.wk,
            f"{prefix}.attn.bk": self.bk,
            f"{prefix}.attn.wv": self.wv,
            f"{prefix}.attn.bv": self.bv,
            f"{prefix}.attn.wo": self.wo,
            f"{prefix}.attn.bo": self.bo,
            f"{prefix}.ln1.gain": self.ln1_gain,
            f"{prefix}.ln1.bias": self.ln1_bias,
            f"{prefix}.ff.w1": self.ff_w1,
            f"{prefix}.ff.b1": self.ff_b1,
            f"{prefix}.ff.w2": self.ff_w2,
            f"{prefix}.ff.b2": self.ff_b2,
            f"{prefix}.ln2.gain": self.ln2_gain,
            f"{prefix}.ln2.bias": self.ln2_bias,
        }

    def forward(
        self,
        x: Tensor,
        allowed: np.ndarray,
        mask_mode: str,
        collect: list | None = None,
    ) -> Tensor:
        attn_out = masked_attention(x, allowed, self, mask_mode, collect)
        x = nm.layernorm(nm.add(x, attn_out), self.ln1_gain, self.ln1_bias)
        ff = nm.affine(nm.gelu(nm.affine(x, self.ff_w1, self.ff_b1)), self.ff_w2, self.ff_b2)
        return nm.layernorm(nm.add(x, ff), self.ln2_gain, self.ln2_bias)


def masked_attention(
    x: Tensor,
    allowed: np.ndarray,
    layer: EncoderLayer,
    mask_mode: str,
    collect: list | None = None,
) -> Tensor:
    """Multi-head attention over x with the combined binary mask applied.

    additive: disallowed logits get MASK_NEG before softmax (rows sum to 1).
    literal: the softmax output is multiplied elementwise by the mask
    (row mass equals the surviving probability, <= 1).
    """
    size = x.shape[0]
    if allowed.shape != (size, size):
        raise ShapeError(f"mask shape {allowed.shape} does not match {size} rows")
    q = nm.affine(x, layer.wq, layer.bq)
    k = nm.affine(x, layer.wk, layer.bk)
    v = nm.affine(x, layer.wv, layer.bv)
    inv_sqrt = 1.0 / math.sqrt(layer.d_head)
    additive = Tensor(np.where(allowed > 0, 0.0, MASK_NEG))
    multiplicative = Tensor(allowed)
    outs = []
    layer_maps = [] if collect is not None else None
    for h in range(layer.heads):
        lo, hi = h * layer.d_head, (h + 1) * layer.d_head
        qh = nm.slice_cols(q, lo, hi)
        kh = nm.slice_cols(k, lo, hi)
        vh = nm.slice_cols(v, lo, hi)
        scores = nm.scale(nm.matmul(qh, nm.transpose(kh)), inv_sqrt)
        if mask_mode == "additive":
            weights = nm.softmax_rows(nm.add(scores, additive))
        elif mask_mode == "literal":
            weights = nm.mul(nm.softmax_rows(scores), multiplicative)
        else:
            raise ConfigError(f"unknown mask_mode {mask_mode!r}")
        if layer_maps is not None:
            layer_maps.append(weights.data.copy())
        outs.append(nm.matmul(weights, vh))
    if collect is not None:
        collect.append(layer_maps)
    return nm.affine(nm.concat_cols(outs), layer.wo, layer.bo)


class ProteinEncoder:
    """The full embed -> attach prompts -> masked layers stack, plus heads."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        d = config.d

        def w(shape):
            return Tensor(rng.normal(0.0, INIT_STD, shape), requires_grad=True)

        def zeros(shape):
            return Tensor(np.zeros(shape), requires_grad=True)

        self.tok_table = w((VOCAB_SIZE, d))
        self.pos_table = w((config.max_len, d))
        self.seg_table = w((1, d))
        self.layers = [EncoderLayer(d, config.heads, rng) for _ in range(config.layers)]
        self.prompts = PromptSet()
        for name in config.prompt_names:
            self.prompts.register(name, Tensor(rng.normal(0.0, PROMPT_INIT_STD, d)))
        # task heads; all are plain affine maps on encoder representations
        self.mlm_w, self.mlm_b = w((d, VOCAB_SIZE)), zeros(VOCAB_SIZE)
        self.pair_w, self.pair_b = w((d, PAIR_TYPES)), zeros(PAIR_TYPES)
        self.pair_bin_w, self.pair_bin_b = w((d, 1)), zeros(1)
        self.contact_w_prod, self.contact_w_diff = w((d, 1)), w((d, 1))
        self.contact_b = zeros(1)
        self.ss3_w, self.ss3_b = w((d, SS3_CLASSES)), zeros(SS3_CLASSES)
        self.ss8_w, self.ss8_b = w((d, SS8_CLASSES)), zeros(SS8_CLASSES)
        self.regress_w, self.regress_b = w((d, 1)), zeros(1)

    # -- parameter registry (fixed, documented order) --

    def parameters(self) -> dict[str, Tensor]:
        """Insertion-ordered name -> tensor map; this order is the
        checkpoint serialisation order."""
        params: dict[str, Tensor] = {
            "embed.tok": self.tok_table,
            "embed.pos": self.pos_table,
            "embed.seg": self.seg_table,
        }
        for i, layer in enumerate(self.layers):
            params.update(layer.params(f"layer{i}"))
        for name in self.prompts.names():
            params[f"prompt.{name}"] = self.prompts.get(name)
        params.update(
            {
                "head.mlm.w": self.mlm_w,
                "head.mlm.b": self.mlm_b,
                "head.pair.w": self.pair_w,
                "head.pair.b": self.pair_b,
                "head.pair_bin.w": self.pair_bin_w,
                "head.pair_bin.b": self.pair_bin_b,
                "head.contact.w_prod": self.contact_w_prod,
                "head.contact.w_diff": self.contact_w_diff,
                "head.contact.b": self.contact_b,
                "head.ss3.w": self.ss3_w,
                "head.ss3.b": self.ss3_b,
                "head.ss8.w": self.ss8_w,
                "head.ss8.b": self.ss8_b,
                "head.regress.w": self.regress_w,
                "head.regress.b": self.regress_b,
            }
        )
        return params

    def encoder_parameters(self) -> dict[str, Tensor]:
        """Parameters counted as 'the encoder' for freezing purposes."""
        return {
            name: t
            for name, t in self.parameters().items()
            if not name.startswith("prompt.") and not name.startswith("head.")
        }

    # -- forward pieces --

    def embed(self, seq: TokenSequence) -> Tensor:
        """Token + segment + position embedding sum over the padded length."""
        n = seq.ids.size
        if n > self.config.max_len:
            raise ShapeError(
                f"sequence of {n} tokens exceeds position table of {self.config.max_len}"
            )
        tok = nm.embedding_lookup(self.tok_table, seq.ids)
        seg = nm.embedding_lookup(self.seg_table, np.zeros(n, dtype=np.intp))
        pos = nm.embedding_lookup(self.pos_table, np.arange(n, dtype=np.intp))
        return nm.add(nm.add(tok, seg), pos)

    def attach_prompts(self, x_in: Tensor, prompt_names: tuple[str, ...]) -> Tensor:
        """Prepend prompt rows (no position/segment embedding) to x_in."""
        if not prompt_names:
            return x_in
        rows = [nm.reshape(self.prompts.get(n), (1, self.config.d)) for n in prompt_names]
        return nm.concat_rows(rows + [x_in])

    def encode(
        self,
        seq: TokenSequence,
        prompt_names: tuple[str, ...] = (),
        collect_attn: bool = False,
    ) -> EncoderOutput:
        m = len(prompt_names)
        n = seq.ids.size
        x = self.attach_prompts(self.embed(seq), prompt_names)
        key_keep = np.concatenate([np.ones(m, dtype=bool), seq.ids != PAD_ID])
        allowed = combine_key_mask(build_mask(m, n), key_keep)
        collect: list | None = [] if collect_attn else None
        for layer in self.layers:
            x = layer.forward(x, allowed, self.config.mask_mode, collect)
        return EncoderOutput(h=x, m=m, seq=seq, attn=collect)

    def pool(self, out: EncoderOutput) -> Tensor:
        """Mean of real-residue rows; prompts, CLS, EOS and PAD excluded."""
        if out.seq.n_residues < 1:
            raise ContractError("pool needs at least one real residue")
        return nm.mean_over_rows(out.residue_rows())

    # -- heads --

    def mlm_logits(self, out: EncoderOutput, positions) -> Tensor:
        """Vocabulary logits at the given input positions, (|Y|, 25)."""
        pos = np.asarray(positions, dtype=np.intp)
        if pos.size == 0:
            raise ContractError("mlm_logits needs at least one target position")
        rows = nm.select_rows(out.h, out.m + pos)
        return nm.affine(rows, self.mlm_w, self.mlm_b)

    def pair_logits(self, pooled_p: Tensor, pooled_q: Tensor, kind: str = "types") -> Tensor:
        """Symmetric pair scores from two pooled vectors.

        kind "types" gives 7 interaction-type logits, "binary" one logit.
        Symmetry holds by construction: the feature is the elementwise
        product, which is commutative.
        """
        feat = nm.mul(pooled_p, pooled_q)
        if kind == "types":
            return nm.affine(feat, self.pair_w, self.pair_b)
        if kind == "binary":
            return nm.affine(feat, self.pair_bin_w, self.pair_bin_b)
        raise ConfigError(f"unknown pair head kind {kind!r}")

    def contact_logits(self, out: EncoderOutput) -> Tensor:
        """Residue-residue contact logits, (n_res, n_res), symmetric.

        Feature for pair (i, j) is [h_i * h_j, |h_i - h_j|], an affine map
        to one logit; both blocks are symmetric in (i, j) by construction.
        """
        n = out.seq.n_residues
        if n < 1:
            raise ContractError("contact_logits needs at least one residue")
        h = out.residue_rows()
        ii = np.repeat(np.arange(n), n)
        jj = np.tile(np.arange(n), n)
        hi = nm.select_rows(h, ii)
        hj = nm.select_rows(h, jj)
        prod = nm.affine(nm.mul(hi, hj), self.contact_w_prod, self.contact_b)
        diff = nm.matmul(nm.absval(nm.sub(hi, hj)), self.contact_w_diff)
        return nm.reshape(nm.add(prod, diff), (n, n))

    def token_logits(self, out: EncoderOutput, classes: int) -> Tensor:
        """Per-residue class logits for 3- or 8-state structure labels."""
        if classes == SS3_CLASSES:
            return nm.affine(out.residue_rows(), self.ss3_w, self.ss3_b)
        if classes == SS8_CLASSES:
            return nm.affine(out.residue_rows(), self.ss8_w, self.ss8_b)
        raise ConfigError(f"token classification supports 3 or 8 classes, got {classes}")

    def regress(self, pooled: Tensor) -> Tensor:
        """Scalar regression on a pooled sequence vector."""
        return nm.reshape(nm.affine(pooled, self.regress_w, self.regress_b), ())
