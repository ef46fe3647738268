"""Flat key = value configuration with dotted sections.

Resolution order is defaults, then the optional config file, then
command-line flags.  Unknown keys are rejected rather than ignored so a
typo cannot silently fall back to a default.  Every run echoes its fully
resolved configuration into the output directory.
"""
import os

from infill.errors import ConfigError

DEFAULTS = {
    "seed": 0,
    "dtype": "float32",
    "gen.n": 2000,
    "data.lowercase": False,
    "data.min_len": 10,
    "data.max_len": 18,
    "data.max_vocab": 10000,
    "data.min_freq": 1,
    "mask.strategy": "random",
    "mask.rate": 0.3,
    "mask.blanks": 0,
    "mask.word_list": "",
    "mask.keep_words": "",
    "mask.annotations": "",
    "model.kind": "self_attn",
    "model.d_model": 400,
    "model.num_blocks": 6,
    "model.num_heads": 8,
    "model.ffn_dim": 0,
    "model.dropout": 0.1,
    "model.embedding_size": 400,
    "model.num_units": 1600,
    "position.kind": "sinusoidal",
    "position.base": 64,
    "position.max_seg": 128,
    "train.epochs": 150,
    "train.batch_size": 200,
    "train.val_every": 50,
    "train.max_steps": 0,
    "train.lr_const": 0.3,
    "train.warmup_steps": 10000,
    "decode.strategy": "greedy",
    "decode.temperature": 1.0,
    "decode.max_blank_len": 20,
}


def coerce(key, raw):
    """Parse a raw string according to the default's type for ``key``."""
    if key not in DEFAULTS:
        raise ConfigError(f"unknown config key {key!r}")
    default = DEFAULTS[key]
    if isinstance(default, bool):
        lowered = str(raw).strip().lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        if isinstance(default, int):
            return int(str(raw).strip())
        if isinstance(default, float):
            return float(str(raw).strip())
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}")
    return str(raw).strip()


def parse_config_text(text, source="<config>"):
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(
                f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = coerce(key, raw)
    return out


def load_config(path):
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), source=str(path))


def resolve(file_overrides=None, flag_overrides=None):
    """Layer defaults < file < flags into one flat dict."""
    cfg = dict(DEFAULTS)
    for layer in (file_overrides or {}, flag_overrides or {}):
        for key, value in layer.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            cfg[key] = value
    return cfg


def write_config(path, cfg):
    """Echo a resolved configuration, one sorted key per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(cfg):
            fh.write(f"{key} = {cfg[key]}\n")
