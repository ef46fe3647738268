"""Self-attention infilling model.

A transformer decoder fills one blank at a time.  Its memory is the
embedded template (word embedding + segment-aware PE; no encoder stack):
each block runs causal self-attention over the generated prefix, then
attends into the template memory, then a position-wise feed-forward, all
as pre-norm residual sublayers.  Logits come from an untied output
projection after a final layer norm.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError
from .layers import Linear, LayerNorm, MultiHeadAttention, causal_mask, key_padding_mask
from .models import embed_with_positions, pad_unit_batch, prepare_unit, DecodeUnit
from .positions import make_position_encoder


@dataclass
class ModelConfig:
    vocab_size: int
    d_model: int = 400
    num_blocks: int = 6
    num_heads: int = 8
    ffn_dim: int = 0
    dropout: float = 0.10
    base: int = 64
    position_kind: str = "sinusoidal"
    max_seg: int = 128

    def __post_init__(self):
        if self.ffn_dim == 0:
            self.ffn_dim = 4 * self.d_model
        if self.d_model <= 0 or self.d_model % 2:
            raise ConfigError(f"d_model must be positive and even, got {self.d_model}")
        if self.num_heads <= 0 or self.d_model % self.num_heads:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by num_heads {self.num_heads}")
        if self.num_blocks < 1:
            raise ConfigError("num_blocks must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.vocab_size < 8:
            raise ConfigError("vocab_size must cover the 7 reserved tokens")
        if self.base < 1:
            raise ConfigError("position base must be positive")


class _Block:
    def __init__(self, rng, cfg):
        d = cfg.d_model
        self.ln1 = LayerNorm(d)
        self.self_attn = MultiHeadAttention(rng, d, cfg.num_heads)
        self.ln2 = LayerNorm(d)
        self.cross_attn = MultiHeadAttention(rng, d, cfg.num_heads)
        self.ln3 = LayerNorm(d)
        self.ff1 = Linear(rng, d, cfg.ffn_dim)
        self.ff2 = Linear(rng, cfg.ffn_dim, d)

    def __call__(self, x, memory, self_mask, mem_mask, drop, arng, training):
        h = self.ln1(x)
        x = x + drop(self.self_attn(
            h, h, h, self_mask, dropout=drop.rate, rng=arng, training=training))
        h = self.ln2(x)
        x = x + drop(self.cross_attn(
            h, memory, memory, mem_mask, dropout=drop.rate, rng=arng, training=training))
        h = self.ln3(x)
        x = x + drop(self.ff2(T.relu(self.ff1(h))))
        return x

    def params(self, prefix):
        out = {}
        out.update(self.ln1.params(f"{prefix}.ln1"))
        out.update(self.self_attn.params(f"{prefix}.self"))
        out.update(self.ln2.params(f"{prefix}.ln2"))
        out.update(self.cross_attn.params(f"{prefix}.cross"))
        out.update(self.ln3.params(f"{prefix}.ln3"))
        out.update(self.ff1.params(f"{prefix}.ff1"))
        out.update(self.ff2.params(f"{prefix}.ff2"))
        return out


class _Drop:
    """Residual/embedding dropout helper bound to one forward pass."""

    def __init__(self, rate, rng, training):
        self.rate = rate
        self.rng = rng
        self.training = training

    def __call__(self, x):
        if self.training and self.rate:
            return T.dropout(x, self.rate, self.rng, True)
        return x


class SelfAttnModel:
    kind = "self_attn"

    def __init__(self, vocab, config, rng):
        if len(vocab) != config.vocab_size:
            raise ConfigError(
                f"config vocab_size {config.vocab_size} != vocab length {len(vocab)}")
        self.vocab = vocab
        self.config = config
        d = config.d_model
        self.embedding = T.Tensor(
            rng.normal(scale=0.02, size=(config.vocab_size, d)), requires_grad=True)
        self.pos = make_position_encoder(
            config.position_kind, config.base, d, config.max_seg, rng)
        self.blocks = [_Block(rng, config) for _ in range(config.num_blocks)]
        self.final_ln = LayerNorm(d)
        self.out = Linear(rng, d, config.vocab_size)

    def params(self):
        out = {"emb.weight": self.embedding}
        out.update(self.pos.params())
        for i, block in enumerate(self.blocks):
            out.update(block.params(f"block{i}"))
        out.update(self.final_ln.params("final_ln"))
        out.update(self.out.params("out"))
        return out

    def forward_units(self, units, training=False, rng=None):
        """Teacher-forced logits for a batch of decode units.

        Step j's logits see the template memory and teacher tokens < j
        only: self-attention is causally masked and padded key positions
        are hidden on both attention paths.
        """
        if not units:
            raise ConfigError("forward_units needs at least one unit")
        if training and rng is None:
            rng = np.random.default_rng(0)
        batch = pad_unit_batch([prepare_unit(self.vocab, u) for u in units])
        B, M, S = batch["B"], batch["M"], batch["S"]
        drop = _Drop(self.config.dropout, rng, training)

        memory = drop(embed_with_positions(
            self.embedding, self.pos, batch["mem_ids"], batch["mem_pairs"], B, M))
        x = drop(embed_with_positions(
            self.embedding, self.pos, batch["dec_ids"], batch["dec_pairs"], B, S))
        self_mask = causal_mask(S) + key_padding_mask(batch["dec_valid"])
        mem_mask = key_padding_mask(batch["mem_valid"])
        for block in self.blocks:
            x = block(x, memory, self_mask, mem_mask, drop, rng, training)
        logits = self.out(self.final_ln(x))
        return logits, batch["targets"], batch["dec_valid"]

    def blank_logits(self, template, seg_id, teacher_tokens):
        """(steps, V) evaluation-mode logits for one blank's teacher prefix."""
        unit = DecodeUnit(template, seg_id, tuple(teacher_tokens))
        logits, _, _ = self.forward_units([unit])
        _, S, V = logits.shape
        return T.reshape(logits, (S, V))
