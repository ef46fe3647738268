"""Segment-aware position indexing and positional encodings.

Every token is addressed by a (seg_id, offset_id) pair: the 1-based segment
it belongs to and its 1-based offset within that segment.  The pair is
flattened to a single integer

    pos = seg_id * base + offset_id

which is injective as long as 1 <= offset_id <= base.  Positions are
segment-local, so the encoding of a token inside one blank does not move
when another blank's fill changes length.

Two encoders share one interface: the default computes fixed sinusoidal
vectors from the flattened index; the alternative learns separate seg and
offset embedding tables and sums them.
"""

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError
from .template import BLANK
from .vocab import RESERVED, BOS, EOS, MASK


def position_index(seg_id, offset_id, base):
    """Flatten a (seg_id, offset_id) pair into its unique integer index."""
    if base < 1:
        raise ConfigError(f"position base must be positive, got {base}")
    if seg_id < 0:
        raise ContractError(f"seg_id must be non-negative, got {seg_id}")
    if not 1 <= offset_id <= base:
        raise ContractError(
            f"position overflow: offset {offset_id} outside [1, {base}] "
            f"(segment longer than base)")
    return seg_id * base + offset_id


def positional_encoding(pos, d_model):
    """Sinusoidal encoding of one integer position, as a float64 vector.

    Even dims hold sin(pos / 10000^(2i/d_model)), odd dims the matching cos.
    """
    if d_model <= 0 or d_model % 2:
        raise ConfigError(f"d_model must be a positive even integer, got {d_model}")
    i = np.arange(d_model // 2, dtype=np.float64)
    angle = float(pos) / np.power(10000.0, 2.0 * i / d_model)
    out = np.empty(d_model, dtype=np.float64)
    out[0::2] = np.sin(angle)
    out[1::2] = np.cos(angle)
    return out


def pe_matrix(positions, d_model):
    """Stack positional_encoding over a sequence of integer positions."""
    if d_model <= 0 or d_model % 2:
        raise ConfigError(f"d_model must be a positive even integer, got {d_model}")
    pos = np.asarray(list(positions), dtype=np.float64).reshape(-1, 1)
    i = np.arange(d_model // 2, dtype=np.float64)
    angle = pos / np.power(10000.0, 2.0 * i / d_model)
    out = np.empty((pos.shape[0], d_model), dtype=np.float64)
    out[:, 0::2] = np.sin(angle)
    out[:, 1::2] = np.cos(angle)
    return out


def template_token_pairs(template):
    """Tokens and (seg_id, offset_id) pairs for encoding a template.

    The sequence is wrapped in sentinels: <bos> at (0, 1) and <eos> at
    (n_segments + 1, 1).  Known and Filled segments contribute their tokens
    at offsets 1, 2, ...; an open blank contributes a single <mask> token at
    offset 1.  An empty filled segment contributes nothing.
    """
    tokens = [RESERVED[BOS]]
    pairs = [(0, 1)]
    for seg in template.segments:
        if seg.kind == BLANK:
            tokens.append(RESERVED[MASK])
            pairs.append((seg.seg_id, 1))
        else:
            for j, tok in enumerate(seg.tokens):
                tokens.append(tok)
                pairs.append((seg.seg_id, j + 1))
    tokens.append(RESERVED[EOS])
    pairs.append((len(template.segments) + 1, 1))
    return tokens, pairs


def blank_step_pairs(seg_id, n_steps):
    """(seg, offset) pairs for a blank's decoder prefix of n_steps tokens.

    Prefix position p (0-based; p=0 is <bob>) is assigned offset p + 1, so
    the query predicting the token that will land at template offset k
    carries offset k itself.
    """
    return [(seg_id, p + 1) for p in range(n_steps)]


class SinusoidalPositions:
    """Fixed sinusoidal encoder over flattened (seg, offset) indices."""

    kind = "sinusoidal"

    def __init__(self, base, d_model):
        if d_model <= 0 or d_model % 2:
            raise ConfigError(f"d_model must be a positive even integer, got {d_model}")
        self.base = base
        self.d_model = d_model

    def encode(self, pairs):
        """Encode a list of (seg_id, offset_id) pairs as a constant Tensor."""
        idx = [position_index(s, o, self.base) for s, o in pairs]
        return T.Tensor(pe_matrix(idx, self.d_model))

    def params(self):
        return {}


class LearnedPositions:
    """Learned 2-dim position embeddings: seg table + offset table, summed."""

    kind = "learned"

    def __init__(self, base, d_model, max_seg, rng, scale=0.02):
        if d_model <= 0:
            raise ConfigError(f"d_model must be positive, got {d_model}")
        self.base = base
        self.d_model = d_model
        self.max_seg = max_seg
        # row 0 of the seg table serves the <bos> sentinel; rows beyond
        # max_seg cover the <eos> sentinel at seg n+1
        self.seg_table = T.Tensor(
            rng.normal(scale=scale, size=(max_seg + 2, d_model)), requires_grad=True)
        self.offset_table = T.Tensor(
            rng.normal(scale=scale, size=(base + 1, d_model)), requires_grad=True)

    def encode(self, pairs):
        segs = []
        offs = []
        for s, o in pairs:
            position_index(s, o, self.base)  # range validation only
            if s > self.max_seg + 1:
                raise ContractError(
                    f"seg_id {s} exceeds learned table capacity {self.max_seg + 1}")
            segs.append(s)
            offs.append(o)
        seg_e = T.embedding_lookup(self.seg_table, np.asarray(segs, dtype=np.int64))
        off_e = T.embedding_lookup(self.offset_table, np.asarray(offs, dtype=np.int64))
        return seg_e + off_e

    def params(self):
        return {"pos.seg_table": self.seg_table, "pos.offset_table": self.offset_table}


def make_position_encoder(kind, base, d_model, max_seg=128, rng=None):
    if kind == "sinusoidal":
        return SinusoidalPositions(base, d_model)
    if kind == "learned":
        if rng is None:
            rng = np.random.default_rng(0)
        return LearnedPositions(base, d_model, max_seg, rng)
    raise ConfigError(f"unknown position.kind {kind!r}")
