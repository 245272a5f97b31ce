"""Transformer building blocks: multi-head self-attention, the
position-wise feed-forward network, and the composed layer.

Conventions
-----------
* Sequences are row-major: x
 is [L, d_item] or batched [B, L, d_item];
  each row is one item embedding.
* Attention logits are scaled by 1/sqrt(d_head) with d_head =
  d_item / n_heads (standard multi-head splitting); the softmax runs
  over keys, so every attention row is a distribution over input items.
* The composed layer is post-norm: layer_norm(x + mhsa(x)) followed by
  layer_norm(y + ffn(y)).
* No masking, no dropout. The blocks carry no positional information,
  so they are permutation-equivariant along the sequence axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import (
    RngState,
    ShapeError,
    Tensor,
    add,
    concat,
    layer_norm,
    linear,
    matmul,
    relu,
    reshape,
    scale,
    softmax,
    transpose,
)


@dataclass(frozen=True)
class TransformerConfig:
    """Width parameters of one transformer layer."""

    d_item: int = 128
    n_heads: int = 4
    d_hidden: int = 256

    def __post_init__(self):
        if self.d_item <= 0 or self.n_heads <= 0 or self.d_hidden <= 0:
            raise ValueError(f"transformer dims must be positive, got {self}")
        if self.d_item % self.n_heads:
            raise ValueError(f"d_item={self.d_item} not divisible by n_heads={self.n_heads}")

    @property
    def d_head(self) -> int:
        return self.d_item // self.n_heads


def _xavier(rng: RngState, fan_in: int, fan_out: int, shape) -> Tensor:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.tensor_uniform(shape, -limit, limit, requires_grad=True)


@dataclass
class MhsaParams:
    """Per-head query/key/value projections plus the output fusion matrix."""

    w_q: list[Tensor]
    w_k: list[Tensor]
    w_v: list[Tensor]
    w_o: Tensor

    @classmethod
    def init(cls, cfg: TransformerConfig, rng: RngState) -> "MhsaParams":
        d, dh = cfg.d_item, cfg.d_head
        mk = lambda: [_xavier(rng, d, dh, (d, dh)) for _ in range(cfg.n_heads)]
        return cls(w_q=mk(), w_k=mk(), w_v=mk(), w_o=_xavier(rng, d, d, (d, d)))

    @property
    def n_heads(self) -> int:
        return len(self.w_q)

    @property
    def d_head(self) -> int:
        return self.w_q[0].shape[1]


@dataclass
class FfnParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    @classmethod
    def init(cls, cfg: TransformerConfig, rng: RngState) -> "FfnParams":
        d, h = cfg.d_item, cfg.d_hidden
        return cls(
            w1=_xavier(rng, d, h, (d, h)),
            b1=Tensor.zeros(h, requires_grad=True),
            w2=_xavier(rng, h, d, (h, d)),
            b2=Tensor.zeros(d, requires_grad=True),
        )


@dataclass
class TransformerLayerParams:
    mhsa: MhsaParams
    ffn: FfnParams
    ln1_gamma: Tensor
    ln1_beta: Tensor
    ln2_gamma: Tensor
    ln2_beta: Tensor

    @classmethod
    def init(cls, cfg: TransformerConfig, rng: RngState) -> "TransformerLayerParams":
        d = cfg.d_item
        return cls(
            mhsa=MhsaParams.init(cfg, rng),
            ffn=FfnParams.init(cfg, rng),
            ln1_gamma=Tensor.ones(d, requires_grad=True),
            ln1_beta=Tensor.zeros(d, requires_grad=True),
            ln2_gamma=Tensor.ones(d, requires_grad=True),
            ln2_beta=Tensor.zeros(d, requires_grad=True),
        )

    def tensors(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i in range(self.mhsa.n_heads):
            out[f"{prefix}mhsa.q{i}"] = self.mhsa.w_q[i]
            out[f"{prefix}mhsa.k{i}"] = self.mhsa.w_k[i]
            out[f"{prefix}mhsa.v{i}"] = self.mhsa.w_v[i]
        out[f"{prefix}mhsa.o"] = self.mhsa.w_o
        out[f"{prefix}ffn.w1"] = self.ffn.w1
        out[f"{prefix}ffn.b1"] = self.ffn.b1
        out[f"{prefix}ffn.w2"] = self.ffn.w2
        out[f"{prefix}ffn.b2"] = self.ffn.b2
        out[f"{prefix}ln1.gamma"] = self.ln1_gamma
        out[f"{prefix}ln1.beta"] = self.ln1_beta
        out[f"{prefix}ln2.gamma"] = self.ln2_gamma
        out[f"{prefix}ln2.beta"] = self.ln2_beta
        return out


def _as_batched(x: Tensor) -> tuple[Tensor, bool]:
    if x.ndim == 2:
        return reshape(x, (1,) + x.shape), True
    if x.ndim == 3:
        return x, False
    raise ShapeError(f"expected [L, d] or [B, L, d] sequence, got {x.shape}")


def mhsa_forward(x: Tensor, params: MhsaParams, return_attention: bool = False):
    """Multi-head self-attention over a sequence of item embeddings.

    Per head: A = softmax(Q K^T / sqrt(d_head)) over keys, Z = A V; the
    head outputs are concatenated and fused through w_o.
    """
    xb, squeezed = _as_batched(x)
    b, l, d = xb.shape
    h, dh = params.n_heads, params.d_head
    if params.w_q[0].shape[0] != d:
        raise ShapeError(f"input dim {d} does not match mhsa params {params.w_q[0].shape}")

    def project(mats):
        y = matmul(xb, concat(mats, axis=1))  # [B, L, h*dh]
        return transpose(reshape(y, (b, l, h, dh)), (0, 2, 1, 3))  # [B, h, L, dh]

    q = project(params.w_q)
    k = project(params.w_k)
    v = project(params.w_v)
    logits = scale(matmul(q, transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
    att = softmax(logits, axis=-1)  # [B, h, L, L], rows sum to 1
    z = matmul(att, v)  # [B, h, L, dh]
    z = reshape(transpose(z, (0, 2, 1, 3)), (b, l, d))
    out = matmul(z, params.w_o)
    if squeezed:
        out = reshape(out, (l, d))
    if return_attention:
        return out, att
    return out


def ffn_forward(x: Tensor, params: FfnParams) -> Tensor:
    """w2 . relu(w1 . x + b1) + b2, applied independently at each position."""
    return linear(relu(linear(x, params.w1, params.b1)), params.w2, params.b2)


def transformer_layer_forward(x: Tensor, params: TransformerLayerParams) -> Tensor:
    """Post-norm residual composition of MHSA and FFN."""
    y1 = layer_norm(add(x, mhsa_forward(x, params.mhsa)), params.ln1_gamma, params.ln1_beta, axis=-1)
    return layer_norm(add(y1, ffn_forward(y1, params.ffn)), params.ln2_gamma, params.ln2_beta, axis=-1)
