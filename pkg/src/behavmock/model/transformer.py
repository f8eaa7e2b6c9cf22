"""Compact encoder-decoder transformer.

Pre-norm layers, sinusoidal positions, attention written out explicitly so
the weights can be inspected.  Layout of one encoder layer::

    x = x + drop(self_attn(norm1(x)))
    x = x + drop(ff(norm2(x)))

and a decoder layer adds a cross-attention block between the two.
"""

from __future__ import annotations

import math
from typing import Optional

import torch
from torch import Tensor, nn

from ..tokenization.vocab import PAD_ID
from .config import ModelConfig


def sinusoidal_positions(length: int, dim: int) -> Tensor:
    pos = torch.arange(length, dtype=torch.float64).unsqueeze(1)
    rate = torch.exp(torch.arange(0, dim, 2, dtype=torch.float64) * (-math.log(10000.0) / dim))
    table = torch.zeros(length, dim, dtype=torch.float64)
    table[:, 0::2] = torch.sin(pos * rate)
    table[:, 1::2] = torch.cos(pos * rate)[:, : dim // 2]
    return table.float()


class MultiHeadAttention(nn.Module):
    def __init__(self, dim: int, heads: int, dropout: float):
        super().__init__()
        self.heads = heads
        self.head_dim = dim // heads
        self.q = nn.Linear(dim, dim)
        self.k = nn.Linear(dim, dim)
        self.v = nn.Linear(dim, dim)
        self.out = nn.Linear(dim, dim)
        self.drop = nn.Dropout(dropout)

    def forward(self, query: Tensor, key: Tensor, mask: Optional[Tensor] = None, return_weights=False):
        """``mask`` is boolean, broadcastable to (batch, heads, q_len, k_len),
        True where attention is allowed."""
        b, lq, d = query.shape
        lk = key.shape[1]
        q = self.q(query).view(b, lq, self.heads, self.head_dim).transpose(1, 2)
        k = self.k(key).view(b, lk, self.heads, self.head_dim).transpose(1, 2)
        v = self.v(key).view(b, lk, self.heads, self.head_dim).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        if mask is not None:
            scores = scores.masked_fill(~mask, float("-inf"))
        weights = torch.softmax(scores, dim=-1)
        ctx = (self.drop(weights) @ v).transpose(1, 2).reshape(b, lq, d)
        out = self.out(ctx)
        return (out, weights) if return_weights else out


class FeedForward(nn.Module):
    def __init__(self, dim: int, hidden: int, dropout: float):
        super().__init__()
        self.inp = nn.Linear(dim, hidden)
        self.out = nn.Linear(hidden, dim)
        self.drop = nn.Dropout(dropout)

    def forward(self, x):
        return self.out(self.drop(torch.relu(self.inp(x))))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d = cfg.embedding_size
        self.self_attn = MultiHeadAttention(d, cfg.attention_heads, cfg.dropout)
        self.ff = FeedForward(d, cfg.feedforward_size, cfg.dropout)
        self.norm1 = nn.LayerNorm(d)
        self.norm2 = nn.LayerNorm(d)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, x, mask):
        h = self.norm1(x)
        x = x + self.drop(self.self_attn(h, h, mask))
        return x + self.drop(self.ff(self.norm2(x)))


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        d = cfg.embedding_size
        self.self_attn = MultiHeadAttention(d, cfg.attention_heads, cfg.dropout)
        self.cross_attn = MultiHeadAttention(d, cfg.attention_heads, cfg.dropout)
        self.ff = FeedForward(d, cfg.feedforward_size, cfg.dropout)
        self.norm1 = nn.LayerNorm(d)
        self.norm2 = nn.LayerNorm(d)
        self.norm3 = nn.LayerNorm(d)
        self.drop = nn.Dropout(cfg.dropout)

    def forward(self, y, memory, self_mask, cross_mask):
        h = self.norm1(y)
        y = y + self.drop(self.self_attn(h, h, self_mask))
        y = y + self.drop(self.cross_attn(self.norm2(y), memory, cross_mask))
        return y + self.drop(self.ff(self.norm3(y)))


class Seq2SeqTransformer(nn.Module):
    """Encoder-decoder over token ids.  Padding id is 0 on both sides."""

    def __init__(self, cfg: ModelConfig, src_vocab_size: int, tgt_vocab_size: int):
        super().__init__()
        self.cfg = cfg
        d = cfg.embedding_size
        self.src_embed = nn.Embedding(src_vocab_size, d)
        self.tgt_embed = nn.Embedding(tgt_vocab_size, d)
        self.encoder = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.encoder_layers))
        self.decoder = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.decoder_layers))
        self.enc_norm = nn.LayerNorm(d)
        self.dec_norm = nn.LayerNorm(d)
        self.generator = nn.Linear(d, tgt_vocab_size)
        self.drop = nn.Dropout(cfg.dropout)
        self.register_buffer("positions", sinusoidal_positions(cfg.context_window, d), persistent=False)
        self.scale = math.sqrt(d)

    def _embed(self, table: nn.Embedding, ids: Tensor) -> Tensor:
        x = table(ids) * self.scale + self.positions[: ids.shape[1]].to(table.weight.dtype)
        return self.drop(x)

    def encode(self, src: Tensor):
        src_mask = (src != PAD_ID)[:, None, None, :]
        x = self._embed(self.src_embed, src)
        for layer in self.encoder:
            x = layer(x, src_mask)
        return self.enc_norm(x), src_mask

    def decode(self, tgt_in: Tensor, memory: Tensor, src_mask: Tensor) -> Tensor:
        n = tgt_in.shape[1]
        causal = torch.ones(n, n, dtype=torch.bool, device=tgt_in.device).tril()
        self_mask = causal[None, None] & (tgt_in != PAD_ID)[:, None, None, :]
        y = self._embed(self.tgt_embed, tgt_in)
        for layer in self.decoder:
            y = layer(y, memory, self_mask, src_mask)
        return self.generator(self.dec_norm(y))

    def forward(self, src: Tensor, tgt_in: Tensor) -> Tensor:
        """Logits of shape (batch, tgt_len, tgt_vocab)."""
        memory, src_mask = self.encode(src)
        return self.decode(tgt_in, memory, src_mask)


def init_weights(module: nn.Module, seed: int):
    """Deterministic init: linear weights U(-1/sqrt(fan_in), +1/sqrt(fan_in)),
    biases 0, embeddings U(-1/sqrt(d), +1/sqrt(d)), layer norms identity."""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, nn.Linear):
                bound = 1.0 / math.sqrt(m.in_features)
                m.weight.copy_(torch.rand(m.weight.shape, generator=gen, dtype=torch.float64)
                               .mul(2 * bound).sub(bound))
                m.bias.zero_()
            elif isinstance(m, nn.Embedding):
                bound = 1.0 / math.sqrt(m.embedding_dim)
                m.weight.copy_(torch.rand(m.weight.shape, generator=gen, dtype=torch.float64)
                               .mul(2 * bound).sub(bound))
            elif isinstance(m, nn.LayerNorm):
                m.weight.fill_(1.0)
                m.bias.zero_()


def expected_param_count(cfg: ModelConfig, src_vocab_size: int, tgt_vocab_size: int) -> int:
    """Closed-form parameter count of :class:`Seq2SeqTransformer`."""
    d, f = cfg.embedding_size, cfg.feedforward_size
    attention = 4 * d * d + 4 * d
    feedforward = 2 * d * f + f + d
    norm = 2 * d
    encoder_layer = attention + feedforward + 2 * norm
    decoder_layer = 2 * attention + feedforward + 3 * norm
    return ((src_vocab_size + tgt_vocab_size) * d
            + cfg.encoder_layers * encoder_layer
            + cfg.decoder_layers * decoder_layer
            + 2 * norm
            + d * tgt_vocab_size + tgt_vocab_size)


def param_count(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())
