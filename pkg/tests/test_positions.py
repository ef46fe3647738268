import math

import numpy as np
import pytest

import infill.tensor as T
from infill.errors import ConfigError, ContractError
from infill.positions import (
    LearnedPositions, SinusoidalPositions, blank_step_pairs,
    make_position_encoder, pe_matrix, position_index, positional_encoding,
    template_token_pairs,
)
from infill.template import parse_template, update_template


class TestPositionIndex:
    def test_paper_example(self):
        assert position_index(2, 1, base=16) == 33

    def test_first_slot(self):
        assert position_index(1, 1, base=16) == 17

    def test_offset_bounds(self):
        with pytest.raises(ContractError):
            position_index(1, 0, base=16)
        with pytest.raises(ContractError):
            position_index(1, 17, base=16)
        assert position_index(1, 16, base=16) == 32

    def test_negative_seg(self):
        with pytest.raises(ContractError):
            position_index(-1, 1, base=16)

    def test_bad_base(self):
        with pytest.raises(ConfigError):
            position_index(1, 1, base=0)

    @pytest.mark.parametrize("base", [4, 16, 64])
    def test_injectivity_exhaustive(self, base):
        seen = set()
        for seg in range(65):
            for off in range(1, base + 1):
                seen.add(position_index(seg, off, base))
        assert len(seen) == 65 * base


class TestSinusoidalFormula:
    def test_pos_zero(self):
        pe = positional_encoding(0, 8)
        np.testing.assert_array_equal(pe, [0, 1, 0, 1, 0, 1, 0, 1])

    def test_pos_one_d4(self):
        pe = positional_encoding(1, 4)
        expected = [math.sin(1.0), math.cos(1.0), math.sin(0.01), math.cos(0.01)]
        np.testing.assert_allclose(pe, expected, rtol=0, atol=1e-15)

    def test_norm_squared(self):
        rng = np.random.default_rng(0)
        for pos in rng.integers(0, 10000, size=50):
            pe = positional_encoding(int(pos), 32)
            assert abs(np.dot(pe, pe) - 16.0) < 1e-6

    def test_closed_form_probes(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            pos = int(rng.integers(0, 8192))
            d_model = 2 * int(rng.integers(1, 65))
            dim = int(rng.integers(0, d_model))
            i = dim // 2
            arg = pos / 10000.0 ** (2.0 * i / d_model)
            want = math.sin(arg) if dim % 2 == 0 else math.cos(arg)
            got = positional_encoding(pos, d_model)[dim]
            assert abs(got - want) < 1e-6

    def test_odd_d_model_rejected(self):
        with pytest.raises(ConfigError):
            positional_encoding(3, 5)
        with pytest.raises(ConfigError):
            pe_matrix([1, 2], 7)

    def test_matrix_matches_rows(self):
        positions = [0, 1, 33, 999]
        mat = pe_matrix(positions, 16)
        for row, pos in zip(mat, positions):
            np.testing.assert_array_equal(row, positional_encoding(pos, 16))


class TestTemplatePairs:
    def test_fig1_layout(self):
        t = parse_template("__m__ have a __m__ , please .")
        tokens, pairs = template_token_pairs(t)
        assert tokens == [
            "<bos>", "<mask>", "have", "a", "<mask>", ",", "please", ".", "<eos>"]
        assert pairs == [
            (0, 1), (1, 1), (2, 1), (2, 2), (3, 1), (4, 1), (4, 2), (4, 3), (5, 1)]

    def test_filled_segment_expands(self):
        t = parse_template("__m__ have a __m__ , please .")
        t = update_template(t, 1, ["can", "i"])
        tokens, pairs = template_token_pairs(t)
        assert tokens[1:3] == ["can", "i"]
        assert pairs[1:3] == [(1, 1), (1, 2)]

    def test_empty_fill_contributes_nothing(self):
        t = update_template(parse_template("__m__ hello"), 1, [])
        tokens, pairs = template_token_pairs(t)
        assert tokens == ["<bos>", "hello", "<eos>"]
        assert pairs == [(0, 1), (2, 1), (3, 1)]

    def test_fill_length_independence(self):
        """PE of segment-3 tokens does not move when blank 1's fill grows."""
        base, d_model = 64, 16
        enc = SinusoidalPositions(base, d_model)
        t0 = parse_template("__m__ mid __m__ end")
        rows = {}
        for fill in (["a"], ["a", "b", "c"]):
            t = update_template(t0, 1, fill)
            tokens, pairs = template_token_pairs(t)
            i = tokens.index("<mask>")
            rows[len(fill)] = enc.encode(pairs).numpy()[i]
        np.testing.assert_array_equal(rows[1], rows[3])

    def test_blank_step_pairs(self):
        assert blank_step_pairs(3, 4) == [(3, 1), (3, 2), (3, 3), (3, 4)]
        assert blank_step_pairs(1, 0) == []


class TestEncoders:
    def test_sinusoidal_encode_matches_matrix(self):
        enc = SinusoidalPositions(base=16, d_model=8)
        pairs = [(0, 1), (1, 2), (2, 1)]
        out = enc.encode(pairs)
        idx = [1, 18, 33]
        np.testing.assert_allclose(
            out.numpy(), pe_matrix(idx, 8).astype(out.dtype), rtol=0, atol=0)
        assert enc.params() == {}

    def test_sinusoidal_overflow(self):
        enc = SinusoidalPositions(base=4, d_model=8)
        with pytest.raises(ContractError):
            enc.encode([(1, 5)])

    def test_learned_sums_tables(self):
        rng = np.random.default_rng(0)
        enc = LearnedPositions(base=8, d_model=6, max_seg=10, rng=rng)
        pairs = [(2, 3), (0, 1)]
        out = enc.encode(pairs).numpy()
        seg = enc.seg_table.numpy()
        off = enc.offset_table.numpy()
        np.testing.assert_array_equal(out[0], seg[2] + off[3])
        np.testing.assert_array_equal(out[1], seg[0] + off[1])

    def test_learned_gradients_flow(self):
        rng = np.random.default_rng(1)
        enc = LearnedPositions(base=8, d_model=6, max_seg=10, rng=rng)
        with T.Tape():
            out = enc.encode([(1, 1), (1, 2)])
            loss = T.tsum(out)
            loss.backward()
        assert enc.seg_table.grad is not None
        assert enc.offset_table.grad is not None
        assert enc.seg_table.grad[1].sum() == pytest.approx(12.0)

    def test_learned_overflow(self):
        rng = np.random.default_rng(2)
        enc = LearnedPositions(base=4, d_model=6, max_seg=3, rng=rng)
        with pytest.raises(ContractError):
            enc.encode([(1, 5)])
        with pytest.raises(ContractError):
            enc.encode([(5, 1)])

    def test_factory(self):
        assert make_position_encoder("sinusoidal", 64, 8).kind == "sinusoidal"
        assert make_position_encoder("learned", 64, 8).kind == "learned"
        with pytest.raises(ConfigError):
            make_position_encoder("fourier", 64, 8)
