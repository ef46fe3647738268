"""Templates: token sequences with blank placeholders, and their lifecycle.

A template is an ordered list of segments, each a known-text snippet, a
blank (written ``__m__`` in text form), or a snippet filled into a former
blank.  Segments carry 1-based ids; blanks are filled one at a time and the
fully-filled template reconstructs a flat token sequence.

Values are immutable: ``update_template`` returns a new Template.
"""

from dataclasses import dataclass

from .errors import ContractError, DataError, TemplateFormatError
from .vocab import RESERVED

MARKER = "__m__"

KNOWN = "known"
BLANK = "blank"
FILLED = "filled"


@dataclass(frozen=True)
class Segment:
    """One maximal template unit: seg_id, kind, and its tokens (empty for a blank)."""

    seg_id: int
    kind: str
    tokens: tuple

    def __post_init__(self):
        if self.kind not in (KNOWN, BLANK, FILLED):
            raise ContractError(f"bad segment kind {self.kind!r}")
        if self.kind == BLANK and self.tokens:
            raise ContractError("blank segments carry no tokens")
        if self.kind == KNOWN and not self.tokens:
            raise ContractError("known segments must be non-empty")


@dataclass(frozen=True)
class Template:
    """Ordered segments with consecutive seg_ids starting at 1."""

    segments: tuple

    def __post_init__(self):
        for i, seg in enumerate(self.segments):
            if seg.seg_id != i + 1:
                raise ContractError("segment ids must be consecutive from 1")
        for a, b in zip(self.segments, self.segments[1:]):
            if a.kind == KNOWN and b.kind == KNOWN:
                raise ContractError("adjacent known segments must be merged")

    @property
    def blank_ids(self):
        """Ascending seg_ids of the remaining blanks (the set of open blanks)."""
        return tuple(s.seg_id for s in self.segments if s.kind == BLANK)

    @property
    def is_complete(self):
        return not self.blank_ids

    def segment(self, seg_id):
        return self.segments[seg_id - 1]


def parse_template(text):
    """Parse a marker line into a Template.

    Tokens are whitespace-separated; each standalone ``__m__`` token opens a
    blank.  Two adjacent markers are rejected: blanks must be separated by
    known text for the segment structure to be well defined.
    """
    tokens = text.split() if isinstance(text, str) else list(text)
    segments = []
    run = []
    prev_marker = False
    for tok in tokens:
        if tok == MARKER:
            if prev_marker:
                raise TemplateFormatError("adjacent blanks are not allowed")
            if run:
                segments.append((KNOWN, tuple(run)))
                run = []
            segments.append((BLANK, ()))
            prev_marker = True
        else:
            run.append(tok)
            prev_marker = False
    if run:
        segments.append((KNOWN, tuple(run)))
    if not segments:
        raise TemplateFormatError("empty template line")
    return Template(tuple(
        Segment(i + 1, kind, toks) for i, (kind, toks) in enumerate(segments)))


def render_template(template):
    """Inverse of parse_template: segments back to marker text tokens."""
    parts = []
    for seg in template.segments:
        if seg.kind == BLANK:
            parts.append(MARKER)
        else:
            parts.extend(seg.tokens)
    return " ".join(parts)


def update_template(template, seg_id, fill):
    """Fill one blank, returning a new Template.

    The segment becomes FILLED with the given tokens (an empty fill is
    legal: it represents an empty mask).  All other segments are unchanged.
    """
    fill = tuple(fill)
    if seg_id not in template.blank_ids:
        raise ContractError(f"segment {seg_id} is not an open blank")
    for tok in fill:
        if tok in RESERVED or tok == MARKER:
            raise ContractError(f"reserved token {tok!r} cannot be filled into a template")
    segments = list(template.segments)
    segments[seg_id - 1] = Segment(seg_id, FILLED, fill)
    return Template(tuple(segments))


def reconstruct(template):
    """Concatenate all segment tokens; requires every blank to be filled."""
    if template.blank_ids:
        raise ContractError(f"template still has open blanks: {template.blank_ids}")
    out = []
    for seg in template.segments:
        out.extend(seg.tokens)
    return out


@dataclass(frozen=True)
class InfillExample:
    """A supervised pair: template plus the golden tokens for each blank."""

    template: Template
    golden: dict
    original: tuple

    def validate(self):
        """Check that golden-filling every blank reproduces the original."""
        t = self.template
        for seg_id in t.blank_ids:
            t = update_template(t, seg_id, self.golden[seg_id])
        if tuple(reconstruct(t)) != tuple(self.original):
            raise DataError("template + golden does not reproduce the original")
        return self


def example_from_parts(template, golden, original=None):
    """Build an InfillExample, deriving the original when not supplied."""
    golden = {k: tuple(v) for k, v in golden.items()}
    if original is None:
        t = template
        for seg_id in template.blank_ids:
            t = update_template(t, seg_id, golden[seg_id])
        original = tuple(reconstruct(t))
    return InfillExample(template, golden, tuple(original)).validate()


def format_pair(example):
    """Tab-separated pair-file line: template text, then the original."""
    return render_template(example.template) + "\t" + " ".join(example.original)


def parse_pair(line):
    """Parse a pair-file line back into an InfillExample.

    Golden fills are recovered by aligning the template's known segments
    against the original; among valid alignments, blanks take the leftmost
    (shortest-first) fills.
    """
    parts = line.rstrip("\n").split("\t")
    if len(parts) != 2:
        raise TemplateFormatError("pair line must be 'template<TAB>original'")
    template = parse_template(parts[0])
    original = tuple(parts[1].split())
    golden = _align_golden(template, original)
    return InfillExample(template, golden, original).validate()


def _align_golden(template, original):
    """Recover blank fills from (template, original) by exact alignment."""
    segs = template.segments
    n = len(original)
    n_segs = len(segs)
    # feasible[si][pos]: segments si.. can consume original[pos:] exactly
    feasible = [[False] * (n + 1) for _ in range(n_segs + 1)]
    feasible[n_segs][n] = True
    for si in range(n_segs - 1, -1, -1):
        seg = segs[si]
        if seg.kind == BLANK:
            # a blank absorbs any suffix length: suffix-OR of the next row
            acc = False
            for pos in range(n, -1, -1):
                acc = acc or feasible[si + 1][pos]
                feasible[si][pos] = acc
        else:
            k = len(seg.tokens)
            for pos in range(n - k + 1):
                feasible[si][pos] = (
                    tuple(original[pos:pos + k]) == seg.tokens
                    and feasible[si + 1][pos + k]
                )
    if not feasible[0][0]:
        raise DataError("original does not match the template's known text")
    golden = {}
    pos = 0
    for si, seg in enumerate(segs):
        if seg.kind == BLANK:
            length = 0
            while not feasible[si + 1][pos + length]:
                length += 1
            golden[seg.seg_id] = tuple(original[pos:pos + length])
            pos += length
        else:
            pos += len(seg.tokens)
    return golden


def read_pair_file(path):
    """Load a tab-separated pair file into a list of InfillExamples."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(parse_pair(line))
            except (TemplateFormatError, DataError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
    return out


def write_pair_file(path, examples):
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(format_pair(ex) + "\n")
