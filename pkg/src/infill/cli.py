"""Command line entry point.

One executable, subcommand per pipeline stage:

    infill gen-synth   --out DIR
    infill build-vocab --corpus F --out DIR
    infill mask        --corpus F --out DIR
    infill train       --pairs F [--val-pairs F] --vocab F --out DIR
    infill infill      --templates F --checkpoint F --vocab F --out DIR
    infill evaluate    --pairs F --checkpoint F --vocab F --out DIR

Configuration layers as defaults < --config file < flags; each flag
mirrors a config key (for example ``--train.epochs 5``).  The resolved
configuration is echoed to ``config.txt`` in the output directory.

Exit codes: 0 success, 1 usage, 2 bad data or config, 3 runtime failure.
"""
import argparse
import json
import os
import sys

import numpy as np

from . import tensor as T
from .checkpoint import load_model
from .config import DEFAULTS, coerce, load_config, resolve, write_config
from .data import MaskSpec, ingest_corpus, mask_corpus, read_annotations
from .decode import DecodeOptions, fill_corpus
from .errors import (
    CheckpointError, ConfigError, ContractError, DataError, NumericsError,
    TemplateFormatError,
)
from .metrics import UnigramBaseline, evaluate, format_report
from .model_attn import ModelConfig
from .model_seq2seq import Seq2SeqConfig
from .models import make_model
from .synth import gen_synth, write_corpus
from .template import parse_template, read_pair_file, write_pair_file
from .train import TrainConfig, train
from .vocab import Vocab, build_vocab

_SECTIONS = {
    "gen-synth": ("seed", "gen."),
    "build-vocab": ("data.",),
    "mask": ("seed", "data.", "mask."),
    "train": ("seed", "dtype", "model.", "position.", "train."),
    "infill": ("seed", "dtype", "decode."),
    "evaluate": ("seed", "dtype", "decode."),
}


def _add_common(sub, command):
    prefixes = _SECTIONS[command]
    for key in DEFAULTS:
        if any(key == p or key.startswith(p) for p in prefixes):
            sub.add_argument(f"--{key}", dest=key, metavar="V",
                             default=argparse.SUPPRESS)
    sub.add_argument("--config", default=None, metavar="PATH")
    sub.add_argument("--out", required=True, metavar="DIR")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="infill", description="text infilling toolkit")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("gen-synth", help="generate a synthetic corpus")
    _add_common(p, "gen-synth")
    p.set_defaults(func=cmd_gen_synth)

    p = commands.add_parser("build-vocab", help="build a vocabulary file")
    p.add_argument("--corpus", required=True)
    _add_common(p, "build-vocab")
    p.set_defaults(func=cmd_build_vocab)

    p = commands.add_parser("mask", help="mask a corpus into template pairs")
    p.add_argument("--corpus", required=True)
    _add_common(p, "mask")
    p.set_defaults(func=cmd_mask)

    p = commands.add_parser("train", help="train a model on template pairs")
    p.add_argument("--pairs", required=True)
    p.add_argument("--val-pairs", default=None)
    p.add_argument("--vocab", required=True)
    _add_common(p, "train")
    p.set_defaults(func=cmd_train)

    p = commands.add_parser("infill", help="fill template lines")
    p.add_argument("--templates", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--log-probs", action="store_true")
    _add_common(p, "infill")
    p.set_defaults(func=cmd_infill)

    p = commands.add_parser("evaluate", help="score a model on a test set")
    p.add_argument("--pairs", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--baseline-pairs", default=None)
    _add_common(p, "evaluate")
    p.set_defaults(func=cmd_evaluate)
    return parser


def _resolved(args):
    flag_overrides = {k: coerce(k, v) for k, v in vars(args).items()
                      if k in DEFAULTS}
    file_overrides = load_config(args.config) if args.config else None
    cfg = resolve(file_overrides, flag_overrides)
    os.makedirs(args.out, exist_ok=True)
    write_config(os.path.join(args.out, "config.txt"), cfg)
    return cfg


def _model_config(cfg, vocab_size):
    if cfg["model.kind"] == "seq2seq":
        return Seq2SeqConfig(
            vocab_size=vocab_size,
            embedding_size=cfg["model.embedding_size"],
            num_units=cfg["model.num_units"],
            dropout=cfg["model.dropout"],
            base=cfg["position.base"],
            position_kind=cfg["position.kind"],
            max_seg=cfg["position.max_seg"])
    return ModelConfig(
        vocab_size=vocab_size,
        d_model=cfg["model.d_model"],
        num_blocks=cfg["model.num_blocks"],
        num_heads=cfg["model.num_heads"],
        ffn_dim=cfg["model.ffn_dim"],
        dropout=cfg["model.dropout"],
        base=cfg["position.base"],
        position_kind=cfg["position.kind"],
        max_seg=cfg["position.max_seg"])


def _decode_options(cfg):
    return DecodeOptions(
        strategy=cfg["decode.strategy"],
        temperature=cfg["decode.temperature"],
        max_blank_len=cfg["decode.max_blank_len"],
        seed=cfg["seed"])


def cmd_gen_synth(args):
    cfg = _resolved(args)
    sentences = gen_synth(cfg["gen.n"], seed=cfg["seed"])
    path = os.path.join(args.out, "corpus.txt")
    write_corpus(path, sentences)
    print(f"wrote {len(sentences)} sentences to {path}")
    return 0


def cmd_build_vocab(args):
    cfg = _resolved(args)
    sentences = ingest_corpus(args.corpus, min_len=cfg["data.min_len"],
                              max_len=cfg["data.max_len"],
                              lowercase=cfg["data.lowercase"])
    vocab = build_vocab(sentences, max_size=cfg["data.max_vocab"],
                        min_freq=cfg["data.min_freq"])
    path = os.path.join(args.out, "vocab.txt")
    vocab.save(path)
    print(f"wrote {len(vocab)} entries to {path}")
    return 0


def _mask_spec(cfg):
    kwargs = {
        "strategy": cfg["mask.strategy"],
        "mask_rate": cfg["mask.rate"],
        "num_blanks": cfg["mask.blanks"] or None,
    }
    if cfg["mask.word_list"]:
        with open(cfg["mask.word_list"], encoding="utf-8") as fh:
            kwargs["word_list"] = frozenset(w.strip() for w in fh if w.strip())
    if cfg["mask.keep_words"]:
        kwargs["keep_words"] = tuple(
            w.strip() for w in cfg["mask.keep_words"].split(",") if w.strip())
    if cfg["mask.annotations"]:
        kwargs["annotations"] = read_annotations(cfg["mask.annotations"])
    return MaskSpec(**kwargs)


def cmd_mask(args):
    cfg = _resolved(args)
    sentences = ingest_corpus(args.corpus, min_len=cfg["data.min_len"],
                              max_len=cfg["data.max_len"],
                              lowercase=cfg["data.lowercase"])
    examples, stats = mask_corpus(sentences, _mask_spec(cfg), seed=cfg["seed"])
    pairs_path = os.path.join(args.out, "pairs.tsv")
    write_pair_file(pairs_path, examples)
    stats.save(os.path.join(args.out, "stats.json"))
    print(f"wrote {len(examples)} pairs to {pairs_path} "
          f"({stats.skipped_count} skipped)")
    return 0


def cmd_train(args):
    cfg = _resolved(args)
    vocab = Vocab.load(args.vocab)
    train_examples = read_pair_file(args.pairs)
    val_examples = read_pair_file(args.val_pairs) if args.val_pairs else []
    train_cfg = TrainConfig(
        epochs=cfg["train.epochs"],
        batch_size=cfg["train.batch_size"],
        seed=cfg["seed"],
        val_every=cfg["train.val_every"],
        max_steps=cfg["train.max_steps"],
        lr_const=cfg["train.lr_const"],
        warmup_steps=cfg["train.warmup_steps"],
        dtype=cfg["dtype"])
    with T.use_dtype(train_cfg.dtype):
        model = make_model(cfg["model.kind"], vocab,
                           _model_config(cfg, len(vocab)),
                           np.random.default_rng(cfg["seed"]))
        result = train(model, train_examples, val_examples, train_cfg,
                       args.out)
    print(f"trained {result.steps} steps; "
          f"best val ppl {result.best_val_ppl:.4f}; "
          f"checkpoint {result.checkpoint_path}")
    return 0


def cmd_infill(args):
    cfg = _resolved(args)
    vocab = Vocab.load(args.vocab)
    templates = []
    with open(args.templates, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                templates.append(parse_template(line.strip()))
    with T.use_dtype(cfg["dtype"]):
        model, _ = load_model(args.checkpoint, vocab)
        results = fill_corpus(model, templates, _decode_options(cfg),
                              seed=cfg["seed"])
    filled_path = os.path.join(args.out, "filled.txt")
    with open(filled_path, "w", encoding="utf-8") as fh:
        for result in results:
            fh.write(" ".join(result.tokens) + "\n")
    if args.log_probs:
        side_path = os.path.join(args.out, "log_probs.jsonl")
        with open(side_path, "w", encoding="utf-8") as fh:
            for i, result in enumerate(results):
                fh.write(json.dumps({
                    "line": i,
                    "fills": {str(k): list(v)
                              for k, v in result.fills.items()},
                    "log_probs": {str(k): v
                                  for k, v in result.log_probs.items()},
                    "truncated": list(result.truncated),
                }) + "\n")
    print(f"filled {len(results)} templates into {filled_path}")
    return 0


def cmd_evaluate(args):
    cfg = _resolved(args)
    vocab = Vocab.load(args.vocab)
    examples = read_pair_file(args.pairs)
    with T.use_dtype(cfg["dtype"]):
        model, _ = load_model(args.checkpoint, vocab)
        report = evaluate(model, examples, _decode_options(cfg),
                          seed=cfg["seed"])
    extra = {"model.kind": model.kind}
    if args.baseline_pairs:
        fit_examples = read_pair_file(args.baseline_pairs)
        baseline = UnigramBaseline(vocab).fit(fit_examples)
        extra["baseline_ppl"] = baseline.perplexity(examples)
    table = format_report(report)
    machine = format_report(report, style="machine")
    for key, value in extra.items():
        table += f"{key}  {value}\n"
        machine += f"{key}={value}\n"
    with open(os.path.join(args.out, "report.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(table)
    with open(os.path.join(args.out, "report.kv"), "w",
              encoding="utf-8") as fh:
        fh.write(machine)
    sys.stdout.write(table)
    return 0


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        return args.func(args) or 0
    except (ConfigError, DataError, TemplateFormatError,
            CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericsError, ContractError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
