"""Attentional LSTM encoder-decoder baseline.

The encoder runs a single unidirectional LSTM over the embedded template
(word embedding + segment-aware PE); the decoder LSTM starts from the
encoder's final state and, at each step, attends into a learned projection
of the encoder memory (Luong-style multiplicative attention), combines the
context with its hidden state through a tanh layer, and projects to vocab
logits.  Loss accounting (per blank, <eob> scored) matches the
self-attention model exactly so perplexities are comparable.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError
from .layers import Linear, glorot, MASKED
from .models import embed_with_positions, pad_unit_batch, prepare_unit, DecodeUnit
from .positions import make_position_encoder


@dataclass
class Seq2SeqConfig:
    vocab_size: int
    embedding_size: int = 400
    num_units: int = 1600
    dropout: float = 0.10
    base: int = 64
    position_kind: str = "sinusoidal"
    max_seg: int = 128

    def __post_init__(self):
        if self.num_units <= 0:
            raise ConfigError(f"num_units must be positive, got {self.num_units}")
        if self.embedding_size <= 0 or self.embedding_size % 2:
            raise ConfigError(
                f"embedding_size must be positive and even, got {self.embedding_size}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.vocab_size < 8:
            raise ConfigError("vocab_size must cover the 7 reserved tokens")
        if self.base < 1:
            raise ConfigError("position base must be positive")


def lstm_cell_params(rng, input_size, num_units):
    """Gate weights [x; h] -> 4 gates (i, f, g, o) and bias with forget=1."""
    w = T.Tensor(glorot(rng, input_size + num_units, 4 * num_units),
                 requires_grad=True)
    b0 = np.zeros(4 * num_units)
    b0[num_units:2 * num_units] = 1.0
    return w, T.Tensor(b0, requires_grad=True)


def lstm_step(x, state, w, b):
    """One gated recurrence step.

    Args:
        x: (B, input_size) tensor.
        state: (h, c) pair of (B, num_units) tensors.
        w, b: gate parameters as built by lstm_cell_params.

    Returns:
        (output, new_state) where output is the new hidden vector.
    """
    h, c = state
    units = h.shape[-1]
    z = T.concat([x, h], axis=-1) @ w + b
    i = T.sigmoid(T.slice_axis(z, 0, units))
    f = T.sigmoid(T.slice_axis(z, units, 2 * units))
    g = T.tanh(T.slice_axis(z, 2 * units, 3 * units))
    o = T.sigmoid(T.slice_axis(z, 3 * units, 4 * units))
    c2 = f * c + i * g
    h2 = o * T.tanh(c2)
    return h2, (h2, c2)


class Seq2SeqModel:
    kind = "seq2seq"

    def __init__(self, vocab, config, rng):
        if len(vocab) != config.vocab_size:
            raise ConfigError(
                f"config vocab_size {config.vocab_size} != vocab length {len(vocab)}")
        self.vocab = vocab
        self.config = config
        e, u = config.embedding_size, config.num_units
        self.embedding = T.Tensor(
            rng.normal(scale=0.02, size=(config.vocab_size, e)), requires_grad=True)
        self.pos = make_position_encoder(
            config.position_kind, config.base, e, config.max_seg, rng)
        self.enc_w, self.enc_b = lstm_cell_params(rng, e, u)
        self.dec_w, self.dec_b = lstm_cell_params(rng, e, u)
        self.attn_proj = Linear(rng, u, u)
        self.combine = Linear(rng, 2 * u, u)
        self.out = Linear(rng, u, config.vocab_size)

    def params(self):
        out = {"emb.weight": self.embedding}
        out.update(self.pos.params())
        out.update({"enc.w": self.enc_w, "enc.b": self.enc_b,
                    "dec.w": self.dec_w, "dec.b": self.dec_b})
        out.update(self.attn_proj.params("attn.proj"))
        out.update(self.combine.params("comb"))
        out.update(self.out.params("out"))
        return out

    def _zeros(self, B):
        u = self.config.num_units
        return T.Tensor(np.zeros((B, u))), T.Tensor(np.zeros((B, u)))

    def _run_encoder(self, x, valid):
        """Unidirectional LSTM with masked state carry over right padding.

        Returns (memory (B, M, units), final (h, c)); padded time steps
        copy the previous state, so the final state is the state at each
        row's last real token.
        """
        B, M, _ = x.shape
        h, c = self._zeros(B)
        rows = []
        for t in range(M):
            x_t = T.reshape(T.slice_axis(x, t, t + 1, axis=1), (B, x.shape[2]))
            h_new, (_, c_new) = lstm_step(x_t, (h, c), self.enc_w, self.enc_b)
            m = T.Tensor(valid[:, t:t + 1])
            h = m * h_new + (1.0 - m) * h
            c = m * c_new + (1.0 - m) * c
            rows.append(T.reshape(h, (B, 1, self.config.num_units)))
        return T.concat(rows, axis=1), (h, c)

    def forward_units(self, units, training=False, rng=None):
        """Teacher-forced logits for a batch of decode units."""
        if not units:
            raise ConfigError("forward_units needs at least one unit")
        if training and rng is None:
            rng = np.random.default_rng(0)
        batch = pad_unit_batch([prepare_unit(self.vocab, u) for u in units])
        B, M, S = batch["B"], batch["M"], batch["S"]
        e, u = self.config.embedding_size, self.config.num_units
        rate = self.config.dropout

        def drop(t):
            if training and rate:
                return T.dropout(t, rate, rng, True)
            return t

        enc_in = drop(embed_with_positions(
            self.embedding, self.pos, batch["mem_ids"], batch["mem_pairs"], B, M))
        memory, (h, c) = self._run_encoder(enc_in, batch["mem_valid"])
        memp = self.attn_proj(memory)
        mem_mask = T.Tensor(
            np.where(batch["mem_valid"].astype(bool), 0.0, MASKED)[:, None, :])

        dec_in = drop(embed_with_positions(
            self.embedding, self.pos, batch["dec_ids"], batch["dec_pairs"], B, S))
        step_logits = []
        for t in range(S):
            x_t = T.reshape(T.slice_axis(dec_in, t, t + 1, axis=1), (B, e))
            h, (_, c) = lstm_step(x_t, (h, c), self.dec_w, self.dec_b)
            hq = T.reshape(h, (B, 1, u))
            scores = hq @ T.transpose(memp, (0, 2, 1)) + mem_mask
            weights = T.softmax(scores, axis=-1)
            ctx = weights @ memory
            comb = drop(T.tanh(self.combine(T.concat([ctx, hq], axis=-1))))
            step_logits.append(self.out(comb))
        logits = T.concat(step_logits, axis=1)
        return logits, batch["targets"], batch["dec_valid"]

    def blank_logits(self, template, seg_id, teacher_tokens):
        """(steps, V) evaluation-mode logits for one blank's teacher prefix."""
        unit = DecodeUnit(template, seg_id, tuple(teacher_tokens))
        logits, _, _ = self.forward_units([unit])
        _, S, V = logits.shape
        return T.reshape(logits, (S, V))
