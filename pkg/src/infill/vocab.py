"""Tokenization and vocabulary with pinned reserved ids.

Reserved tokens occupy ids 0..6 in a fixed order so that checkpoints stay
portable across vocab rebuilds of the same corpus.  Tokenization is plain
whitespace splitting with an optional lowercasing flag.
"""

import hashlib
from collections import Counter

from .errors import DataError

PAD, UNK, BOS, EOS, BOB, EOB, MASK = range(7)
RESERVED = ("<pad>", "<unk>", "<bos>", "<eos>", "<bob>", "<eob>", "<mask>")


def tokenize(line, lowercase=False):
    """Split a line into tokens on whitespace."""
    if lowercase:
        line = line.lower()
    return line.split()


class Vocab:
    """Bijective token<->id map over non-reserved tokens.

    ids 0..6 are the reserved tokens; corpus tokens follow in rank order.
    """

    def __init__(self, tokens):
        self._id_to_token = list(RESERVED) + list(tokens)
        self._token_to_id = {t: i for i, t in enumerate(self._id_to_token)}
        if len(self._token_to_id) != len(self._id_to_token):
            raise DataError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self._id_to_token)

    def __contains__(self, token):
        return token in self._token_to_id

    def id_for(self, token):
        return self._token_to_id.get(token, UNK)

    def token_for(self, idx):
        return self._id_to_token[idx]

    def encode(self, tokens):
        """Token list -> id list; out-of-vocabulary tokens become <unk>."""
        return [self._token_to_id.get(t, UNK) for t in tokens]

    def decode(self, ids):
        return [self._id_to_token[i] for i in ids]

    def serialize(self):
        """One token per line, line number == id, reserved tokens first."""
        return "\n".join(self._id_to_token) + "\n"

    def content_hash(self):
        """Hex sha256 of the serialized vocab file content."""
        return hashlib.sha256(self.serialize().encode("utf-8")).hexdigest()

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.serialize())

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if tuple(lines[:7]) != RESERVED:
            raise DataError(f"vocab file {path} does not start with the reserved tokens")
        return cls(lines[7:])


def build_vocab(sentences, max_size=10000, min_freq=1):
    """Build a Vocab from an iterable of token lists.

    The most frequent tokens are kept up to max_size total entries
    (reserved included); frequency ties break lexicographically.  Everything
    else maps to <unk> at encode time.
    """
    counts = Counter()
    n_sentences = 0
    for tokens in sentences:
        n_sentences += 1
        counts.update(tokens)
    if n_sentences == 0 or not counts:
        raise DataError("cannot build a vocabulary from an empty corpus")
    keep = max_size - len(RESERVED)
    if keep < 0:
        raise DataError(f"max_size {max_size} is smaller than the reserved set")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    tokens = [t for t, c in ranked if c >= min_freq and t not in RESERVED]
    return Vocab(tokens[:keep])
