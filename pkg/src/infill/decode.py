"""Autoregressive blank filling.

Blanks are completed in ascending segment order.  Each blank is decoded
token by token until the model emits the end-of-blank symbol or a length
cap fires; the template is updated in place between blanks so later
blanks condition on earlier fills.
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

import infill.tensor as T
from infill.errors import ConfigError, ContractError
from infill.template import Template, reconstruct, update_template
from infill.vocab import EOB, RESERVED

# every reserved id except <eob>, which is the legitimate stop symbol
_SUPPRESSED_IDS = tuple(i for i, tok in enumerate(RESERVED) if i != EOB)


@dataclass(frozen=True)
class DecodeOptions:
    strategy: str = "greedy"
    temperature: float = 1.0
    max_blank_len: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.strategy not in ("greedy", "sample"):
            raise ConfigError(f"unknown decode strategy {self.strategy!r}")
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if self.max_blank_len < 1:
            raise ConfigError("max_blank_len must be at least 1")


@dataclass
class FillResult:
    template: Template
    tokens: List[str]
    fills: Dict[int, Tuple[str, ...]]
    log_probs: Dict[int, List[float]] = field(default_factory=dict)
    truncated: Tuple[int, ...] = ()


def _log_softmax(row):
    shifted = row - row.max()
    return shifted - np.log(np.exp(shifted).sum())


def _next_token_dist(model, template, seg_id, generated_ids):
    tokens = model.vocab.decode(generated_ids)
    logits = model.blank_logits(template, seg_id, tokens)
    row = np.asarray(logits.data[-1], dtype=np.float64).copy()
    row[list(_SUPPRESSED_IDS)] = -np.inf
    return row


def _pick(row, options, rng):
    if options.strategy == "greedy":
        return int(np.argmax(row))
    scaled = _log_softmax(row / options.temperature)
    probs = np.exp(scaled)
    probs /= probs.sum()
    return int(rng.choice(len(probs), p=probs))


def fill_blank(model, template, seg_id, options, rng):
    """Decode one blank; returns (fill_tokens, log_probs, truncated)."""
    generated: List[int] = []
    log_probs: List[float] = []
    truncated = False
    with T.no_grad():
        for _ in range(options.max_blank_len):
            row = _next_token_dist(model, template, seg_id, generated)
            choice = _pick(row, options, rng)
            log_probs.append(float(_log_softmax(row)[choice]))
            if choice == EOB:
                break
            generated.append(choice)
        else:
            truncated = True
    return tuple(model.vocab.decode(generated)), log_probs, truncated


def fill_template(model, template, options=None, rng=None):
    """Complete every open blank of ``template`` with model predictions."""
    options = options or DecodeOptions()
    if rng is None:
        rng = np.random.default_rng(options.seed)
    current = template
    fills: Dict[int, Tuple[str, ...]] = {}
    log_probs: Dict[int, List[float]] = {}
    cut: List[int] = []
    for seg_id in template.blank_ids:
        fill, lps, truncated = fill_blank(model, current, seg_id, options, rng)
        fills[seg_id] = fill
        log_probs[seg_id] = lps
        if truncated:
            cut.append(seg_id)
        current = update_template(current, seg_id, fill)
    if not current.is_complete:
        raise ContractError("decoding left open blanks behind")
    return FillResult(template=current, tokens=reconstruct(current),
                      fills=fills, log_probs=log_probs, truncated=tuple(cut))


def teacher_force(model, example):
    """Log-probs of the golden fill tokens (including the end symbol).

    Returns {seg_id: [log p(token)]} with one entry per golden token plus
    the closing <eob>, scored under the unmodified model distribution.
    """
    from infill.models import decode_units

    out: Dict[int, List[float]] = {}
    with T.no_grad():
        for unit in decode_units(example):
            logits, targets, _ = model.forward_units([unit])
            rows = np.asarray(logits.data[0], dtype=np.float64)
            out[unit.seg_id] = [
                float(_log_softmax(rows[t])[targets[0, t]])
                for t in range(rows.shape[0])
            ]
    return out


def fill_corpus(model, templates, options=None, seed=0):
    """Fill a list of templates, one independent rng stream per sentence."""
    options = options or DecodeOptions()
    results = []
    for i, template in enumerate(templates):
        rng = np.random.default_rng([seed, i])
        results.append(fill_template(model, template, options, rng))
    return results
