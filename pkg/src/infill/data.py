"""Corpus ingestion and the masking strategies that manufacture examples.

Masking is pure given (tokens, spec, rng); the corpus driver derives one
rng per sentence from the run seed and the sentence index, so sentences
can be processed in any order (or in parallel) with identical output.

Strategies:
  random       - num_blanks non-adjacent spans totalling round(rate * len)
  anchor       - keep anchor tokens (entities/numerics/annotated/keep-words),
                 mask everything else as collapsed runs
  closed_class - up to 3 single-token blanks on closed-class words, padded
                 with empty-mask blanks at free boundaries
"""

import json
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .template import example_from_parts, parse_template
from .vocab import tokenize

SPLIT_PUNCT = frozenset({",", ";", ":", "!", "?", ".", "--"})

ENTITY_RE = re.compile(r"^[A-Z][A-Za-z]*(?:_[A-Z0-9][A-Za-z0-9]*)+$")
NUMERIC_RE = re.compile(r"^[0-9]+$")

# articles, determiners, and prepositions; single-token blank targets
CLOSED_CLASS_WORDS = frozenset("""
    a an the
    this that these those some any each every no all both either neither
    of in on at by for with from to into onto over under about after
    before between through during against among around out off up down
    near without within upon toward towards behind beside beyond above
    below across along past since until
""".split())


@dataclass
class MaskSpec:
    strategy: str
    mask_rate: float = 0.3
    num_blanks: int = None   # default depends on strategy: 3 for closed_class
    word_list: frozenset = CLOSED_CLASS_WORDS
    keep_words: tuple = ()
    annotations: object = None   # list of index lists, aligned with sentences

    def __post_init__(self):
        if self.strategy not in ("random", "anchor", "closed_class"):
            raise ConfigError(f"unknown mask strategy {self.strategy!r}")
        if self.num_blanks is None:
            self.num_blanks = 3 if self.strategy == "closed_class" else 1
        if not 0.0 < self.mask_rate < 1.0:
            raise ConfigError(f"mask_rate must lie in (0, 1), got {self.mask_rate}")
        if self.num_blanks < 1:
            raise ConfigError(f"num_blanks must be >= 1, got {self.num_blanks}")


@dataclass
class CorpusStats:
    sentence_count: int = 0
    skipped_count: int = 0
    vocab_size: int = 0
    total_tokens: int = 0
    masked_tokens: int = 0
    total_blanks: int = 0

    @property
    def mask_rate(self):
        return self.masked_tokens / self.total_tokens if self.total_tokens else 0.0

    @property
    def blanks_per_sentence(self):
        return self.total_blanks / self.sentence_count if self.sentence_count else 0.0

    def to_dict(self):
        return {
            "sentence_count": self.sentence_count,
            "skipped_count": self.skipped_count,
            "vocab_size": self.vocab_size,
            "total_tokens": self.total_tokens,
            "masked_tokens": self.masked_tokens,
            "total_blanks": self.total_blanks,
            "mask_rate": self.mask_rate,
            "blanks_per_sentence": self.blanks_per_sentence,
        }

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

def split_clauses(tokens, max_len):
    """Recursively split at the internal punctuation nearest the midpoint.

    The punctuation token stays with its left clause.  A long stretch with
    no internal punctuation is returned whole (the length filter drops it).
    """
    n = len(tokens)
    if n <= max_len:
        return [list(tokens)]
    candidates = [i for i in range(n - 1) if tokens[i] in SPLIT_PUNCT]
    if not candidates:
        return [list(tokens)]
    mid = n / 2.0
    cut = min(candidates, key=lambda i: (abs((i + 1) - mid), i))
    left = tokens[:cut + 1]
    right = tokens[cut + 1:]
    return split_clauses(left, max_len) + split_clauses(right, max_len)


def ingest_corpus(path, min_len=10, max_len=18, lowercase=False):
    """Read one-sentence-per-line text into clause token lists.

    Clauses outside [min_len, max_len] are dropped after splitting.
    """
    if min_len < 1 or max_len < min_len:
        raise ConfigError(f"bad length bounds [{min_len}, {max_len}]")
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            tokens = tokenize(line, lowercase=lowercase)
            if not tokens:
                continue
            for clause in split_clauses(tokens, max_len):
                if min_len <= len(clause) <= max_len:
                    out.append(clause)
    return out


# ---------------------------------------------------------------------------
# Random spans
# ---------------------------------------------------------------------------

def _uniform_composition(total, parts, rng):
    """Uniform weak composition of `total` into `parts` non-negative parts."""
    if parts == 1:
        return [total]
    slots = total + parts - 1
    bars = np.sort(rng.choice(slots, size=parts - 1, replace=False))
    out = []
    prev = -1
    for b in bars:
        out.append(int(b - prev - 1))
        prev = b
    out.append(int(slots - prev - 1))
    return out


def mask_random(tokens, mask_rate, num_blanks, rng):
    """Mask num_blanks non-adjacent spans totalling round(mask_rate * len).

    The masked-token budget is round-half-up of rate * len, floored at one
    token per blank.  Span lengths are a uniform composition of the budget;
    span placement is a uniform draw over all non-adjacent arrangements
    (gap lengths between blanks are a uniform composition of the leftover
    known tokens, with one mandatory separator per interior gap).

    Returns None when the sentence is too short to host the blanks.
    """
    n = len(tokens)
    budget = max(int(np.floor(mask_rate * n + 0.5)), num_blanks)
    known = n - budget
    # interior gaps need >= 1 known token; ends may touch the sentence edge
    if budget < num_blanks or known < num_blanks - 1:
        return None
    spans = [s + 1 for s in _uniform_composition(budget - num_blanks, num_blanks, rng)]
    gaps = _uniform_composition(known - (num_blanks - 1), num_blanks + 1, rng)
    gaps = [gaps[0]] + [g + 1 for g in gaps[1:-1]] + [gaps[-1]]

    parts = []
    fills = []
    pos = 0
    for i, span in enumerate(spans):
        g = gaps[i]
        parts.extend(tokens[pos:pos + g])
        pos += g
        parts.append("__m__")
        fills.append(tuple(tokens[pos:pos + span]))
        pos += span
    parts.extend(tokens[pos:])
    template = parse_template(" ".join(parts))
    golden = dict(zip(template.blank_ids, fills))
    return example_from_parts(template, golden, tokens)


# ---------------------------------------------------------------------------
# Anchors
# ---------------------------------------------------------------------------

def entity_numeric_anchors(tokens):
    """Indices to keep: first Entity_Name token, all integers, and any
    hyphen bridging two kept numerics (score patterns like "114 - 110")."""
    keep = set()
    for i, tok in enumerate(tokens):
        if ENTITY_RE.match(tok):
            keep.add(i)
            break
    for i, tok in enumerate(tokens):
        if NUMERIC_RE.match(tok):
            keep.add(i)
    for i, tok in enumerate(tokens):
        if tok == "-" and (i - 1) in keep and (i + 1) in keep \
                and NUMERIC_RE.match(tokens[i - 1]) and NUMERIC_RE.match(tokens[i + 1]):
            keep.add(i)
    return sorted(keep)


def keep_word_anchors(tokens, keep_words):
    """Indices of the first occurrence of each keep word."""
    keep = []
    remaining = set(keep_words)
    for i, tok in enumerate(tokens):
        if tok in remaining:
            keep.append(i)
            remaining.discard(tok)
    return keep


def mask_anchor(tokens, keep_indices, rng=None):
    """Mask everything except the anchor indices; runs collapse to blanks.

    Returns None when nothing is kept (no anchors) or nothing is masked
    (anchors cover the sentence) - both degenerate for training.
    """
    n = len(tokens)
    keep = sorted(set(keep_indices))
    if not keep or len(keep) == n:
        return None
    if any(i < 0 or i >= n for i in keep):
        raise DataError(f"anchor index out of range for length-{n} sentence")
    keep_set = set(keep)
    parts = []
    fills = []
    i = 0
    while i < n:
        if i in keep_set:
            parts.append(tokens[i])
            i += 1
        else:
            j = i
            while j < n and j not in keep_set:
                j += 1
            parts.append("__m__")
            fills.append(tuple(tokens[i:j]))
            i = j
    template = parse_template(" ".join(parts))
    golden = dict(zip(template.blank_ids, fills))
    return example_from_parts(template, golden, tokens)


# ---------------------------------------------------------------------------
# Closed-class words
# ---------------------------------------------------------------------------

def mask_closed_class(tokens, word_list=CLOSED_CLASS_WORDS, num_blanks=3, rng=None):
    """Blank up to num_blanks closed-class tokens; pad with empty masks.

    Candidate positions are tokens on the word list; a random subset with
    pairwise distance >= 2 is chosen (greedy pass over a random
    permutation).  When fewer real blanks fit, empty-mask blanks are
    appended at uniformly random boundaries not adjacent to any blank.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    n = len(tokens)
    candidates = [i for i, tok in enumerate(tokens) if tok.lower() in word_list]
    chosen = []
    if candidates:
        for i in rng.permutation(candidates):
            if all(abs(int(i) - c) > 1 for c in chosen):
                chosen.append(int(i))
            if len(chosen) == num_blanks:
                break
    chosen_set = set(chosen)

    boundaries = []
    while len(chosen) + len(boundaries) < num_blanks:
        valid = [b for b in range(n + 1)
                 if (b == 0 or b - 1 not in chosen_set)
                 and (b == n or b not in chosen_set)
                 and b not in boundaries]
        if not valid:
            break
        boundaries.append(int(rng.choice(valid)))

    parts = []
    fills = []
    for b in range(n + 1):
        if b in boundaries:
            parts.append("__m__")
            fills.append(())
        if b < n:
            if b in chosen_set:
                parts.append("__m__")
                fills.append((tokens[b],))
            else:
                parts.append(tokens[b])
    template = parse_template(" ".join(parts))
    golden = dict(zip(template.blank_ids, fills))
    return example_from_parts(template, golden, tokens)


# ---------------------------------------------------------------------------
# Corpus driver
# ---------------------------------------------------------------------------

def sentence_rng(seed, index):
    """Deterministic per-sentence generator, independent of processing order."""
    return np.random.default_rng([int(seed), int(index)])


def mask_sentence(tokens, spec, rng, annotation=None):
    """Apply one strategy to one sentence; None means skipped."""
    if spec.strategy == "random":
        return mask_random(tokens, spec.mask_rate, spec.num_blanks, rng)
    if spec.strategy == "anchor":
        if annotation is not None:
            keep = list(annotation)
        elif spec.keep_words:
            keep = keep_word_anchors(tokens, spec.keep_words)
        else:
            keep = entity_numeric_anchors(tokens)
        return mask_anchor(tokens, keep, rng)
    return mask_closed_class(tokens, spec.word_list, spec.num_blanks, rng)


def mask_corpus(sentences, spec, seed):
    """Mask every sentence with per-sentence derived seeds.

    Returns (examples, stats); skipped sentences are counted, not emitted.
    """
    examples = []
    stats = CorpusStats()
    vocab = set()
    annotations = spec.annotations
    for idx, tokens in enumerate(sentences):
        ann = annotations[idx] if annotations is not None else None
        ex = mask_sentence(tokens, spec, sentence_rng(seed, idx), ann)
        if ex is None:
            stats.skipped_count += 1
            continue
        examples.append(ex)
        stats.sentence_count += 1
        stats.total_tokens += len(ex.original)
        stats.masked_tokens += sum(len(v) for v in ex.golden.values())
        stats.total_blanks += len(ex.golden)
        vocab.update(ex.original)
    stats.vocab_size = len(vocab)
    return examples, stats


def read_annotations(path):
    """Annotation file: one line per sentence, space-separated keep indices."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            try:
                out.append([int(v) for v in line.split()] if line else [])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: bad annotation index") from exc
    return out


def batchify(examples, batch_size, rng=None):
    """Yield example batches, optionally shuffled; padding happens later
    at the decode-unit level (the models right-pad with <pad> and build
    loss masks there)."""
    if not examples:
        raise DataError("batchify needs a non-empty example list")
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    order = np.arange(len(examples))
    if rng is not None:
        order = rng.permutation(order)
    for start in range(0, len(examples), batch_size):
        yield [examples[i] for i in order[start:start + batch_size]]
