"""Synthetic game-report corpus generator.

A tiny probabilistic grammar over a closed lexicon: two team entities, a
score pair, and a date-ish tail.  Every sentence lands inside the default
ingest bounds, entities match the anchor heuristics, and a fixed seed
reproduces the corpus byte for byte.
"""
import numpy as np

from infill.errors import ConfigError

TEAMS = (
    "Delta_Dragons", "Harbor_Hawks", "Iron_Wolves", "River_Kings",
    "Summit_Eagles", "Coastal_Storm", "Valley_Giants", "Desert_Foxes",
)
WEEKDAYS = ("Monday", "Tuesday", "Wednesday", "Thursday",
            "Friday", "Saturday", "Sunday")
MONTHS = ("January", "March", "June", "October")
SCORE_LO = 90
SCORE_HI = 119

_PATTERNS = (
    "The {w} defeated the {l} {hi} - {lo} on {day} night .",
    "The {w} beat the {l} {hi} - {lo} at home in {month} .",
    "The {w} lost to the {l} {lo} - {hi} despite a late rally .",
    "The {w} edged the {l} {hi} - {lo} in overtime on {day} .",
    "The {w} and the {l} finished {hi} - {lo} after two extra periods .",
    "The {w} routed the {l} {hi} - {lo} before a sellout crowd .",
)


def lexicon():
    """Every token the grammar can emit."""
    tokens = set(TEAMS) | set(WEEKDAYS) | set(MONTHS)
    tokens.update(str(s) for s in range(SCORE_LO, SCORE_HI + 1))
    for pattern in _PATTERNS:
        for tok in pattern.split():
            if not (tok.startswith("{") and tok.endswith("}")):
                tokens.add(tok)
    return tokens


def gen_synth(n, seed=0):
    """Generate ``n`` tokenized report sentences."""
    if n < 1:
        raise ConfigError("gen_synth needs n >= 1")
    rng = np.random.default_rng(seed)
    sentences = []
    for _ in range(n):
        pattern = _PATTERNS[int(rng.integers(len(_PATTERNS)))]
        winner, loser = rng.choice(len(TEAMS), size=2, replace=False)
        hi = int(rng.integers(SCORE_LO + 1, SCORE_HI + 1))
        lo = int(rng.integers(SCORE_LO, hi))
        line = pattern.format(
            w=TEAMS[int(winner)], l=TEAMS[int(loser)], hi=hi, lo=lo,
            day=WEEKDAYS[int(rng.integers(len(WEEKDAYS)))],
            month=MONTHS[int(rng.integers(len(MONTHS)))])
        sentences.append(line.split())
    return sentences


def write_corpus(path, sentences):
    with open(path, "w", encoding="utf-8") as fh:
        for tokens in sentences:
            fh.write(" ".join(tokens) + "\n")
