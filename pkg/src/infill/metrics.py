"""Corpus BLEU, teacher-forced perplexity, and the evaluation driver."""
import math
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from infill.decode import DecodeOptions, fill_template, teacher_force
from infill.errors import ContractError, DataError
from infill.template import KNOWN
from infill.vocab import EOB


def thread_count():
    raw = os.environ.get("INFILL_THREADS", "")
    if raw.strip():
        try:
            n = int(raw)
        except ValueError:
            raise DataError(f"INFILL_THREADS must be an integer, got {raw!r}")
        if n < 1:
            raise DataError("INFILL_THREADS must be at least 1")
        return n
    return min(4, os.cpu_count() or 1)


def _map_ordered(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _ngram_counts(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidates, references, max_n=4):
    """Corpus-level BLEU on a 0-100 scale, unsmoothed, with brevity penalty."""
    if len(candidates) != len(references):
        raise DataError("candidate/reference count mismatch: "
                        f"{len(candidates)} vs {len(references)}")
    if not candidates:
        raise DataError("BLEU needs a non-empty corpus")
    clipped = [0] * max_n
    total = [0] * max_n
    cand_len = 0
    ref_len = 0
    for cand, ref in zip(candidates, references):
        cand = list(cand)
        ref = list(ref)
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            counts = _ngram_counts(cand, n)
            ref_counts = _ngram_counts(ref, n)
            total[n - 1] += sum(counts.values())
            clipped[n - 1] += sum(min(c, ref_counts[g])
                                  for g, c in counts.items())
    if cand_len == 0:
        return 0.0
    if any(c == 0 for c in clipped) or any(t == 0 for t in total):
        return 0.0
    log_prec = sum(math.log(c / t) for c, t in zip(clipped, total)) / max_n
    if cand_len >= ref_len:
        penalty = 1.0
    else:
        penalty = math.exp(1.0 - ref_len / cand_len)
    return 100.0 * penalty * math.exp(log_prec)


def sentence_log_probs(model, example):
    """Flat list of golden-fill log-probs for one sentence, blanks ascending."""
    scored = teacher_force(model, example)
    out = []
    for seg_id in sorted(scored):
        out.extend(scored[seg_id])
    return out


def perplexity(model, examples, threads=None):
    """exp of mean negative log-likelihood per scored blank token.

    Scores golden fills teacher-forced, one stop symbol per blank included.
    """
    if not examples:
        raise DataError("perplexity needs a non-empty test set")
    threads = thread_count() if threads is None else threads
    per_sentence = _map_ordered(lambda ex: sentence_log_probs(model, ex),
                                examples, threads)
    total = 0.0
    count = 0
    for lps in per_sentence:
        for lp in lps:
            total -= lp
            count += 1
    return math.exp(total / count)


class UnigramBaseline:
    """Laplace-smoothed unigram model over blank tokens.

    The same scoring convention as the neural models: every golden token
    plus one <eob> per blank, so perplexities are directly comparable.
    """

    def __init__(self, vocab):
        self.vocab = vocab
        self.counts = Counter()
        self.total = 0

    def fit(self, examples):
        for ex in examples:
            for fill in ex.golden.values():
                for tok in fill:
                    self.counts[self.vocab.id_for(tok)] += 1
                self.counts[EOB] += 1
                self.total += len(fill) + 1
        return self

    def log_prob(self, token_id):
        v = len(self.vocab)
        return math.log((self.counts[token_id] + 1) / (self.total + v))

    def perplexity(self, examples):
        if not examples:
            raise DataError("perplexity needs a non-empty test set")
        total = 0.0
        count = 0
        for ex in examples:
            for fill in ex.golden.values():
                for tok in fill:
                    total -= self.log_prob(self.vocab.id_for(tok))
                total -= self.log_prob(EOB)
                count += len(fill) + 1
        return math.exp(total / count)


@dataclass
class EvalReport:
    bleu: float
    template_bleu: float
    ppl: float
    sentences: int
    skipped: int

    def to_dict(self):
        return {"bleu": self.bleu, "template_bleu": self.template_bleu,
                "ppl": self.ppl, "sentences": self.sentences,
                "skipped": self.skipped}


def template_tokens(template):
    """The known tokens of a template in order, blanks dropped."""
    out = []
    for seg in template.segments:
        if seg.kind is KNOWN:
            out.extend(seg.tokens)
    return out


def evaluate(model, examples, options=None, threads=None, seed=0):
    """Fill every template, then score reconstructions and golden fills."""
    if not examples:
        raise DataError("evaluate needs a non-empty test set")
    options = options or DecodeOptions()
    threads = thread_count() if threads is None else threads

    def one(indexed):
        i, ex = indexed
        rng = np.random.default_rng([seed, i])
        try:
            result = fill_template(model, ex.template, options, rng)
            lps = sentence_log_probs(model, ex)
        except ContractError:
            return None
        return result.tokens, lps

    outcomes = _map_ordered(one, list(enumerate(examples)), threads)
    candidates = []
    references = []
    template_only = []
    total_nll = 0.0
    count = 0
    skipped = 0
    for ex, outcome in zip(examples, outcomes):
        if outcome is None:
            skipped += 1
            continue
        tokens, lps = outcome
        candidates.append(tokens)
        references.append(list(ex.original))
        template_only.append(template_tokens(ex.template))
        for lp in lps:
            total_nll -= lp
            count += 1
    if not candidates:
        raise DataError("every sentence was skipped during evaluation")
    return EvalReport(
        bleu=bleu(candidates, references),
        template_bleu=bleu(template_only, references),
        ppl=math.exp(total_nll / count),
        sentences=len(candidates),
        skipped=skipped,
    )


def format_report(report, style="table"):
    items = report.to_dict()
    if style == "machine":
        return "".join(f"{k}={v!r}\n" for k, v in items.items())
    width = max(len(k) for k in items)
    lines = [f"{'metric'.ljust(width)}  value",
             f"{'-' * width}  {'-' * 12}"]
    for k, v in items.items():
        shown = f"{v:.4f}" if isinstance(v, float) else str(v)
        lines.append(f"{k.ljust(width)}  {shown}")
    return "\n".join(lines) + "\n"
