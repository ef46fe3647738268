import numpy as np
import pytest

from infill.errors import ContractError, DataError, TemplateFormatError
from infill.template import (
    BLANK, FILLED, KNOWN, InfillExample, example_from_parts, format_pair,
    parse_pair, parse_template, read_pair_file, reconstruct, render_template,
    update_template, write_pair_file,
)

FIG1 = "__m__ have a __m__ , please ."


def test_parse_fig1_shape():
    t = parse_template(FIG1)
    assert len(t.segments) == 4
    assert t.blank_ids == (1, 3)
    assert [s.kind for s in t.segments] == [BLANK, KNOWN, BLANK, KNOWN]
    assert t.segment(2).tokens == ("have", "a")
    assert t.segment(4).tokens == (",", "please", ".")


def test_parse_plain_sentence():
    t = parse_template("hello world")
    assert len(t.segments) == 1
    assert t.blank_ids == ()
    assert t.segment(1).tokens == ("hello", "world")


def test_parse_single_blank():
    t = parse_template("__m__")
    assert len(t.segments) == 1
    assert t.blank_ids == (1,)


def test_parse_adjacent_blanks_rejected():
    with pytest.raises(TemplateFormatError):
        parse_template("__m__ __m__ hello")


def test_parse_empty_line_rejected():
    with pytest.raises(TemplateFormatError):
        parse_template("   ")


def test_update_fig1_first_blank():
    t = parse_template(FIG1)
    t2 = update_template(t, 1, ["can", "i"])
    assert t2.blank_ids == (3,)
    assert t2.segment(1).kind == FILLED
    assert t2.segment(1).tokens == ("can", "i")
    # untouched segments are identical values
    assert t2.segment(2) == t.segment(2)
    assert t2.segment(4) == t.segment(4)
    # original template value is unchanged
    assert t.blank_ids == (1, 3)


def test_update_empty_fill():
    t = parse_template(FIG1)
    t2 = update_template(t, 3, [])
    assert t2.segment(3).kind == FILLED
    assert t2.segment(3).tokens == ()
    assert t2.blank_ids == (1,)


def test_update_non_blank_rejected():
    t = parse_template(FIG1)
    with pytest.raises(ContractError):
        update_template(t, 2, ["x"])
    filled = update_template(t, 1, ["x"])
    with pytest.raises(ContractError):
        update_template(filled, 1, ["y"])


def test_update_reserved_fill_rejected():
    t = parse_template(FIG1)
    with pytest.raises(ContractError):
        update_template(t, 1, ["<eob>"])
    with pytest.raises(ContractError):
        update_template(t, 1, ["__m__"])


def test_reconstruct_fig1():
    t = parse_template(FIG1)
    t = update_template(t, 1, ["can", "i"])
    t = update_template(t, 3, ["beef", "burger", "with", "cheddar"])
    assert reconstruct(t) == "can i have a beef burger with cheddar , please .".split()


def test_reconstruct_open_blank_rejected():
    with pytest.raises(ContractError):
        reconstruct(parse_template(FIG1))


def test_render_parse_identity():
    for text in (FIG1, "hello world", "__m__", "a __m__ b __m__ c"):
        t = parse_template(text)
        assert render_template(t) == text
        assert parse_template(render_template(t)) == t


def _random_example(rng):
    """Mask 1-3 non-adjacent random spans of a random sentence."""
    n = int(rng.integers(5, 15))
    words = [f"w{int(rng.integers(0, 50))}" for _ in range(n)]
    golden = {}
    segments = []
    i = 0
    pos = 0
    parts = []
    while pos < n:
        if rng.random() < 0.4 and (not parts or parts[-1] != "__m__") and pos < n - 1:
            span = int(rng.integers(1, min(4, n - pos)))
            parts.append("__m__")
            segments.append(tuple(words[pos:pos + span]))
            pos += span
            # force a known token after the blank so blanks never touch
            parts.append(words[pos])
            pos += 1
        else:
            parts.append(words[pos])
            pos += 1
    t = parse_template(" ".join(parts))
    fills = iter(segments)
    for seg_id in t.blank_ids:
        golden[seg_id] = next(fills)
    return example_from_parts(t, golden, words)


def test_round_trip_1k_random_examples():
    rng = np.random.default_rng(20260822)
    for _ in range(1000):
        ex = _random_example(rng)
        t = ex.template
        for seg_id in t.blank_ids:
            t = update_template(t, seg_id, ex.golden[seg_id])
        assert reconstruct(t) == list(ex.original)


def test_example_validate_catches_mismatch():
    t = parse_template("__m__ b")
    with pytest.raises(DataError):
        InfillExample(t, {1: ("a",)}, ("x", "b")).validate()


def test_pair_round_trip():
    ex = example_from_parts(
        parse_template(FIG1),
        {1: ("can", "i"), 3: ("beef", "burger", "with", "cheddar")})
    line = format_pair(ex)
    assert line.count("\t") == 1
    back = parse_pair(line)
    assert back.template == ex.template
    assert back.golden == ex.golden
    assert back.original == ex.original


def test_pair_alignment_prefers_leftmost_shortest():
    # "__m__ a __m__" against "a a a": the empty first fill is the leftmost
    # valid alignment, leaving "a a" for the second blank
    ex = parse_pair("__m__ a __m__\ta a a")
    assert ex.golden == {1: (), 3: ("a", "a")}


def test_pair_alignment_mismatch_rejected():
    with pytest.raises(DataError):
        parse_pair("__m__ have a __m__\tnothing matches here")


def test_pair_bad_field_count():
    with pytest.raises(TemplateFormatError):
        parse_pair("no tab separator")


def test_pair_random_alignment_reproduces_original():
    rng = np.random.default_rng(7)
    for _ in range(300):
        ex = _random_example(rng)
        back = parse_pair(format_pair(ex))
        assert back.original == ex.original
        assert back.template == ex.template
        # recovered golden fills must themselves reproduce the original
        t = back.template
        for seg_id in t.blank_ids:
            t = update_template(t, seg_id, back.golden[seg_id])
        assert tuple(reconstruct(t)) == ex.original


def test_pair_file_io(tmp_path):
    rng = np.random.default_rng(3)
    examples = [_random_example(rng) for _ in range(20)]
    path = tmp_path / "pairs.tsv"
    write_pair_file(path, examples)
    back = read_pair_file(path)
    assert [e.original for e in back] == [e.original for e in examples]
    assert [e.template for e in back] == [e.template for e in examples]


def test_pair_file_reports_line_number(tmp_path):
    path = tmp_path / "pairs.tsv"
    path.write_text("a b\ta b\nbroken line\n", encoding="utf-8")
    with pytest.raises(DataError, match="pairs.tsv:2"):
        read_pair_file(path)
