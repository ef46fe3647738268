import json

import pytest

from infill.cli import main
from infill.template import read_pair_file
from infill.vocab import RESERVED, Vocab


def run(*argv):
    return main(list(argv))


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One tiny corpus->vocab->mask->train chain shared by the module."""
    root = tmp_path_factory.mktemp("cli")
    assert run("gen-synth", "--out", str(root / "corpus"),
               "--gen.n", "40", "--seed", "3") == 0
    corpus = root / "corpus" / "corpus.txt"
    assert run("build-vocab", "--corpus", str(corpus),
               "--out", str(root / "vocab")) == 0
    vocab = root / "vocab" / "vocab.txt"
    assert run("mask", "--corpus", str(corpus), "--out", str(root / "masked"),
               "--mask.rate", "0.3", "--mask.blanks", "2", "--seed", "3") == 0
    pairs = root / "masked" / "pairs.tsv"
    lines = pairs.read_text().splitlines()
    train_tsv = root / "train.tsv"
    test_tsv = root / "test.tsv"
    train_tsv.write_text("\n".join(lines[:32]) + "\n")
    test_tsv.write_text("\n".join(lines[32:]) + "\n")
    assert run("train", "--pairs", str(train_tsv), "--vocab", str(vocab),
               "--out", str(root / "run"),
               "--model.d_model", "16", "--model.num_blocks", "1",
               "--model.num_heads", "2", "--position.base", "32",
               "--position.max_seg", "32", "--train.epochs", "2",
               "--train.batch_size", "16", "--train.warmup_steps", "10",
               "--seed", "3") == 0
    return {"root": root, "corpus": corpus, "vocab": vocab,
            "pairs": pairs, "train": train_tsv, "test": test_tsv,
            "ckpt": root / "run" / "best.ckpt"}


class TestUsage:
    def test_no_arguments(self, capsys):
        assert run() == 1
        capsys.readouterr()

    def test_unknown_subcommand(self, capsys):
        assert run("frobnicate") == 1
        capsys.readouterr()

    def test_unknown_flag(self, capsys):
        assert run("gen-synth", "--out", "x", "--bogus", "1") == 1
        capsys.readouterr()


class TestGenSynth:
    def test_reproducible_and_echoed(self, tmp_path):
        for d in ("a", "b"):
            assert run("gen-synth", "--out", str(tmp_path / d),
                       "--gen.n", "25", "--seed", "5") == 0
        a = (tmp_path / "a" / "corpus.txt").read_bytes()
        b = (tmp_path / "b" / "corpus.txt").read_bytes()
        assert a == b
        echo = (tmp_path / "a" / "config.txt").read_text()
        assert "gen.n = 25" in echo
        assert "seed = 5" in echo

    def test_config_file_layering(self, tmp_path):
        cfg = tmp_path / "my.cfg"
        cfg.write_text("gen.n = 30\nseed = 1\n")
        assert run("gen-synth", "--out", str(tmp_path / "o"),
                   "--config", str(cfg), "--gen.n", "10") == 0
        lines = (tmp_path / "o" / "corpus.txt").read_text().splitlines()
        assert len(lines) == 10  # flag beat file
        assert "seed = 1" in (tmp_path / "o" / "config.txt").read_text()

    def test_bad_config_file(self, tmp_path, capsys):
        cfg = tmp_path / "my.cfg"
        cfg.write_text("gen.num = 30\n")
        assert run("gen-synth", "--out", str(tmp_path / "o"),
                   "--config", str(cfg)) == 2
        assert "unknown" in capsys.readouterr().err


class TestDataCommands:
    def test_vocab_file_shape(self, pipeline):
        vocab = Vocab.load(pipeline["vocab"])
        for i, tok in enumerate(RESERVED):
            assert vocab.token_for(i) == tok
        assert len(vocab) > len(RESERVED)

    def test_mask_outputs(self, pipeline):
        examples = read_pair_file(pipeline["pairs"])
        assert len(examples) == 40
        stats = json.loads(
            (pipeline["root"] / "masked" / "stats.json").read_text())
        assert stats["sentence_count"] == 40
        assert stats["blanks_per_sentence"] == 2.0

    def test_mask_bad_strategy(self, tmp_path, pipeline, capsys):
        assert run("mask", "--corpus", str(pipeline["corpus"]),
                   "--out", str(tmp_path / "m"),
                   "--mask.strategy", "sideways") == 2
        capsys.readouterr()

    def test_missing_corpus_is_runtime_error(self, tmp_path, capsys):
        assert run("build-vocab", "--corpus", str(tmp_path / "nope.txt"),
                   "--out", str(tmp_path / "v")) == 3
        capsys.readouterr()


class TestTrainCommand:
    def test_artifacts(self, pipeline):
        run_dir = pipeline["root"] / "run"
        assert (run_dir / "best.ckpt").exists()
        assert (run_dir / "metrics.csv").exists()
        header = (run_dir / "metrics.csv").read_text().splitlines()[0]
        assert header == "step,loss,lr,val_ppl"
        echo = (run_dir / "config.txt").read_text()
        assert "model.d_model = 16" in echo


class TestInfillCommand:
    def test_fill_and_sidecar(self, pipeline, tmp_path):
        templates = tmp_path / "templates.txt"
        pair_lines = pipeline["test"].read_text().splitlines()
        templates.write_text(
            "\n".join(line.split("\t")[0] for line in pair_lines) + "\n")
        out = tmp_path / "fill"
        assert run("infill", "--templates", str(templates),
                   "--checkpoint", str(pipeline["ckpt"]),
                   "--vocab", str(pipeline["vocab"]),
                   "--out", str(out), "--log-probs", "--seed", "3") == 0
        filled = (out / "filled.txt").read_text().splitlines()
        assert len(filled) == len(pair_lines)
        for line in filled:
            assert "__m__" not in line
        side = [json.loads(l)
                for l in (out / "log_probs.jsonl").read_text().splitlines()]
        assert len(side) == len(filled)
        assert all("fills" in rec and "log_probs" in rec for rec in side)

    def test_greedy_deterministic(self, pipeline, tmp_path):
        templates = tmp_path / "t.txt"
        first = pipeline["test"].read_text().splitlines()[0].split("\t")[0]
        templates.write_text(first + "\n")
        outs = []
        for d in ("x", "y"):
            out = tmp_path / d
            assert run("infill", "--templates", str(templates),
                       "--checkpoint", str(pipeline["ckpt"]),
                       "--vocab", str(pipeline["vocab"]),
                       "--out", str(out)) == 0
            outs.append((out / "filled.txt").read_bytes())
        assert outs[0] == outs[1]


class TestEvaluateCommand:
    def test_report_files(self, pipeline, tmp_path):
        out = tmp_path / "eval"
        assert run("evaluate", "--pairs", str(pipeline["test"]),
                   "--checkpoint", str(pipeline["ckpt"]),
                   "--vocab", str(pipeline["vocab"]),
                   "--baseline-pairs", str(pipeline["train"]),
                   "--out", str(out), "--seed", "3") == 0
        kv = dict(line.split("=", 1) for line in
                  (out / "report.kv").read_text().strip().splitlines())
        assert 0.0 <= float(kv["bleu"]) <= 100.0
        assert float(kv["ppl"]) >= 1.0
        assert int(kv["sentences"]) == 8
        assert kv["model.kind"] == "self_attn"
        assert float(kv["baseline_ppl"]) > 1.0
        assert (out / "report.txt").exists()

    def test_vocab_mismatch_exits_2(self, pipeline, tmp_path, capsys):
        other_corpus = tmp_path / "other.txt"
        other_corpus.write_text(
            "a b c d e f g h i j k l\n" * 12)
        assert run("build-vocab", "--corpus", str(other_corpus),
                   "--out", str(tmp_path / "ov")) == 0
        assert run("evaluate", "--pairs", str(pipeline["test"]),
                   "--checkpoint", str(pipeline["ckpt"]),
                   "--vocab", str(tmp_path / "ov" / "vocab.txt"),
                   "--out", str(tmp_path / "e")) == 2
        assert "vocab" in capsys.readouterr().err
