"""Binary checkpoint format.

Layout, all integers little-endian:

    8 bytes   magic "TIFC0001"
    u32       manifest byte length
    bytes     manifest: UTF-8 "key=value" lines (model kind, config fields,
              vocab content hash, step)
    repeated until EOF, one record per parameter:
        u32       name byte length
        bytes     parameter name (UTF-8)
        u64       rank
        u64*rank  dims
        f32*n     row-major parameter data

Parameters are stored as float32 regardless of the training dtype, so
save(load(x)) is byte-identical and checkpoints are portable between
float32 and float64 runs.
"""

import dataclasses
import struct

import numpy as np

from .errors import CheckpointError

MAGIC = b"TIFC0001"


def _encode_manifest(manifest):
    for key, value in manifest.items():
        if "=" in key or "\n" in key or "\n" in str(value):
            raise CheckpointError(f"manifest key/value not encodable: {key!r}")
    lines = [f"{k}={v}" for k, v in manifest.items()]
    return "\n".join(lines).encode("utf-8")


def _decode_manifest(blob):
    manifest = {}
    text = blob.decode("utf-8")
    if not text:
        return manifest
    for line in text.split("\n"):
        key, sep, value = line.partition("=")
        if not sep:
            raise CheckpointError(f"malformed manifest line {line!r}")
        manifest[key] = value
    return manifest


def save_checkpoint(path, manifest, params):
    """Write manifest (dict of str->str-able) and named float arrays."""
    blob = _encode_manifest({k: str(v) for k, v in manifest.items()})
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name, arr in params.items():
            data = np.ascontiguousarray(np.asarray(arr), dtype="<f4")
            name_b = name.encode("utf-8")
            fh.write(struct.pack("<I", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<Q", data.ndim))
            for dim in data.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(data.tobytes())


def _read_exact(fh, n, what):
    buf = fh.read(n)
    if len(buf) != n:
        raise CheckpointError(f"truncated checkpoint: short read in {what}")
    return buf


def load_checkpoint(path):
    """Read a checkpoint back as (manifest dict, {name: float32 array})."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(
                f"bad magic {magic!r}: not a checkpoint file")
        (mlen,) = struct.unpack("<I", _read_exact(fh, 4, "manifest length"))
        manifest = _decode_manifest(_read_exact(fh, mlen, "manifest"))
        params = {}
        while True:
            head = fh.read(4)
            if not head:
                break
            if len(head) != 4:
                raise CheckpointError("truncated checkpoint: short read in name length")
            (nlen,) = struct.unpack("<I", head)
            name = _read_exact(fh, nlen, "name").decode("utf-8")
            (rank,) = struct.unpack("<Q", _read_exact(fh, 8, f"{name} rank"))
            if rank > 8:
                raise CheckpointError(f"implausible rank {rank} for {name}")
            dims = struct.unpack(
                f"<{rank}Q", _read_exact(fh, 8 * rank, f"{name} dims"))
            count = 1
            for d in dims:
                count *= d
            raw = _read_exact(fh, 4 * count, f"{name} data")
            params[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).copy()
        return manifest, params


def model_manifest(model, step):
    """Manifest describing a model: kind, config fields, vocab hash, step."""
    manifest = {"model.kind": model.kind, "step": int(step),
                "vocab.sha256": model.vocab.content_hash()}
    for f in dataclasses.fields(model.config):
        manifest[f"config.{f.name}"] = getattr(model.config, f.name)
    return manifest


def save_model(path, model, step):
    params = {name: p.data for name, p in model.params().items()}
    save_checkpoint(path, model_manifest(model, step), params)


def config_from_manifest(manifest):
    """Rebuild (kind, config) from a manifest's config.* entries."""
    from .model_attn import ModelConfig
    from .model_seq2seq import Seq2SeqConfig
    kind = manifest.get("model.kind")
    if kind == "self_attn":
        cls = ModelConfig
    elif kind == "seq2seq":
        cls = Seq2SeqConfig
    else:
        raise CheckpointError(f"manifest names unknown model.kind {kind!r}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        key = f"config.{f.name}"
        if key not in manifest:
            raise CheckpointError(f"manifest missing {key}")
        kwargs[f.name] = f.type(manifest[key])
    return kind, cls(**kwargs)


def load_model(path, vocab):
    """Rebuild a model from a checkpoint, validating vocab and shapes."""
    from . import tensor as T
    from .models import make_model
    manifest, params = load_checkpoint(path)
    kind, config = config_from_manifest(manifest)
    if "vocab.sha256" not in manifest:
        raise CheckpointError("manifest missing vocab.sha256")
    if manifest["vocab.sha256"] != vocab.content_hash():
        raise CheckpointError(
            "vocab.sha256 mismatch: checkpoint was trained with a different "
            f"vocabulary (checkpoint {manifest['vocab.sha256'][:12]}..., "
            f"current {vocab.content_hash()[:12]}...)")
    model = make_model(kind, vocab, config, np.random.default_rng(0))
    model_params = model.params()
    missing = sorted(set(model_params) - set(params))
    extra = sorted(set(params) - set(model_params))
    if missing or extra:
        raise CheckpointError(
            f"parameter names disagree: missing {missing}, unexpected {extra}")
    dtype = T.get_default_dtype()
    for name, arr in params.items():
        tensor = model_params[name]
        if tuple(arr.shape) != tuple(tensor.shape):
            raise CheckpointError(
                f"shape mismatch for {name}: checkpoint {arr.shape}, "
                f"model {tuple(tensor.shape)}")
        tensor.data = arr.astype(dtype)
    step = int(manifest.get("step", "0"))
    return model, step
