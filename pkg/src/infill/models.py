"""Model-independent infilling machinery: decode units, padding, losses.

Training and evaluation decompose an InfillExample into one decode unit per
blank: the template state seen when that blank is filled (earlier blanks
already golden-filled), the blank's seg_id, and its golden tokens.  Both
model families consume units through the same forward_units protocol:

    forward_units(units, training=False, rng=None)
        -> (logits Tensor (B, S, V), targets int (B, S), loss_mask (B, S))

so the loss accounting below is written once.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError
from .positions import blank_step_pairs, template_token_pairs
from .template import update_template
from .vocab import BOB, EOB, PAD


@dataclass(frozen=True)
class DecodeUnit:
    """One blank to decode: template state, target blank, golden fill."""

    template: object
    seg_id: int
    golden: tuple


def decode_units(example):
    """Split an example into per-blank units, ascending, golden-updated."""
    t = example.template
    units = []
    for seg_id in t.blank_ids:
        golden = tuple(example.golden[seg_id])
        units.append(DecodeUnit(t, seg_id, golden))
        t = update_template(t, seg_id, golden)
    return units


def prepare_unit(vocab, unit):
    """Encode one unit into id/position arrays.

    Returns (mem_ids, mem_pairs, in_ids, tgt_ids, step_pairs): the template
    memory token ids and their (seg, offset) pairs, the decoder input ids
    (<bob> + golden), the target ids (golden + <eob>), and the decoder
    (seg, offset) pairs where prefix position p carries offset p+1.
    """
    tokens, mem_pairs = template_token_pairs(unit.template)
    mem_ids = vocab.encode(tokens)
    golden_ids = vocab.encode(list(unit.golden))
    in_ids = [BOB] + golden_ids
    tgt_ids = golden_ids + [EOB]
    step_pairs = blank_step_pairs(unit.seg_id, len(in_ids))
    return mem_ids, mem_pairs, in_ids, tgt_ids, step_pairs


def pad_unit_batch(prepped):
    """Right-pad a list of prepared units into rectangular arrays.

    Padded id slots hold <pad>; padded (seg, offset) slots hold (0, 1),
    a valid position that the masks hide.
    """
    B = len(prepped)
    M = max(len(p[0]) for p in prepped)
    S = max(len(p[2]) for p in prepped)
    mem_ids = np.full((B, M), PAD, dtype=np.int64)
    mem_valid = np.zeros((B, M), dtype=np.float64)
    dec_ids = np.full((B, S), PAD, dtype=np.int64)
    dec_valid = np.zeros((B, S), dtype=np.float64)
    targets = np.full((B, S), PAD, dtype=np.int64)
    mem_pairs = []
    dec_pairs = []
    for b, (mids, mpairs, ids, tgt, spairs) in enumerate(prepped):
        mem_ids[b, :len(mids)] = mids
        mem_valid[b, :len(mids)] = 1.0
        dec_ids[b, :len(ids)] = ids
        dec_valid[b, :len(ids)] = 1.0
        targets[b, :len(tgt)] = tgt
        mem_pairs.extend(mpairs + [(0, 1)] * (M - len(mpairs)))
        dec_pairs.extend(spairs + [(0, 1)] * (S - len(spairs)))
    return {
        "mem_ids": mem_ids, "mem_valid": mem_valid, "mem_pairs": mem_pairs,
        "dec_ids": dec_ids, "dec_valid": dec_valid, "dec_pairs": dec_pairs,
        "targets": targets, "B": B, "M": M, "S": S,
    }


def embed_with_positions(table, encoder, ids, pairs, B, S):
    """Word embedding + positional encoding, shaped (B, S, d)."""
    emb = T.embedding_lookup(table, ids)
    pe = encoder.encode(pairs)
    return emb + T.reshape(pe, (B, S, table.shape[1]))


def unit_loss(model, unit):
    """Summed cross-entropy of one unit's teacher-forced steps."""
    logits, targets, _ = model.forward_units([unit])
    _, S, V = logits.shape
    return T.cross_entropy(T.reshape(logits, (S, V)), targets[0])


def infill_loss(model, example):
    """Total loss: per-blank losses in ascending seg_id order, summed.

    The sum is accumulated scalar by scalar in blank order, so it equals
    the independently computed per-blank losses added in the same order.
    """
    units = decode_units(example)
    if not units:
        raise ContractError("example has no blanks to score")
    total = None
    for unit in units:
        li = unit_loss(model, unit)
        total = li if total is None else total + li
    return total


def batch_loss(model, examples, training=False, rng=None):
    """One padded forward over all blanks of all examples.

    Returns (loss Tensor, scored token count).  The loss is the masked sum
    of per-token cross-entropies, identical in meaning to summing
    infill_loss over the examples.
    """
    units = []
    for ex in examples:
        units.extend(decode_units(ex))
    if not units:
        raise ContractError("batch has no blanks to score")
    logits, targets, mask = model.forward_units(units, training=training, rng=rng)
    B, S, V = logits.shape
    flat = T.reshape(logits, (B * S, V))
    loss = T.cross_entropy(flat, targets.reshape(-1), mask.reshape(-1))
    return loss, float(mask.sum())


def make_model(kind, vocab, config, rng):
    """Instantiate a model by config kind: self_attn or seq2seq."""
    if kind == "self_attn":
        from .model_attn import SelfAttnModel
        return SelfAttnModel(vocab, config, rng)
    if kind == "seq2seq":
        from .model_seq2seq import Seq2SeqModel
        return Seq2SeqModel(vocab, config, rng)
    raise ConfigError(f"unknown model.kind {kind!r}")
