"""Binary model checkpoints.

Layout::

    b"AOA1"                      4 bytes magic
    header_len                   uint64, little-endian
    header                       header_len bytes of UTF-8 JSON
    payload                      concatenated little-endian tensor blobs

The header holds ``format_version``, ``config``, ``vocab`` (index order),
``oov_indices``, ``tokenizer_version``, ``payload_bytes`` and a ``tensors``
manifest of ``{name, shape, dtype, offset, nbytes}`` records whose offsets
tile the payload exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import jsonfmt
from .classifier import LinearLayer
from .data import TOKENIZER_VERSION
from .embeddings import EmbeddingTable, Vocab
from .encoder import BiLstm, LstmWeights
from .trainer import ModelParams, TrainConfig

MAGIC = b"AOA1"
FORMAT_VERSION = 1
_DTYPES = {"<f8": np.dtype("<f8"), "<f4": np.dtype("<f4")}


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    model: ModelParams
    config: TrainConfig
    vocab: Vocab


def _tensors(model: ModelParams) -> list[tuple[str, np.ndarray]]:
    return model.named_tensors() + [("embeddings", model.embeddings.matrix)]


def save_checkpoint(model: ModelParams, vocab: Vocab, config: TrainConfig, path) -> None:
    manifest, blobs, offset = [], [], 0
    for name, t in _tensors(model):
        arr = np.ascontiguousarray(t, dtype=t.dtype.newbyteorder("<"))
        blob = arr.tobytes()
        manifest.append(
            {"name": name, "shape": list(arr.shape), "dtype": arr.dtype.str, "offset": offset, "nbytes": len(blob)}
        )
        blobs.append(blob)
        offset += len(blob)
    header = {
        "format_version": FORMAT_VERSION,
        "tokenizer_version": TOKENIZER_VERSION,
        "config": config.to_dict(),
        "vocab": vocab.itos,
        "oov_indices": sorted(model.embeddings.oov_indices),
        "payload_bytes": offset,
        "tensors": manifest,
    }
    head = jsonfmt.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for blob in blobs:
            fh.write(blob)


def _check_manifest(manifest: list[dict], payload_bytes: int) -> None:
    pos = 0
    for rec in sorted(manifest, key=lambda r: r["offset"]):
        dtype = _DTYPES.get(rec["dtype"])
        if dtype is None:
            raise CheckpointError(f"tensor {rec['name']}: unsupported dtype {rec['dtype']!r}")
        expected = int(np.prod(rec["shape"], dtype=np.int64)) * dtype.itemsize
        if expected != rec["nbytes"]:
            raise CheckpointError(
                f"tensor {rec['name']}: shape {rec['shape']} needs {expected} bytes but manifest says {rec['nbytes']}"
            )
        if rec["offset"] != pos:
            raise CheckpointError(f"tensor {rec['name']}: offset {rec['offset']} leaves a gap or overlap at {pos}")
        pos += rec["nbytes"]
    if pos != payload_bytes:
        raise CheckpointError(f"manifest covers {pos} bytes but payload_bytes is {payload_bytes}")


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}, not an AOA checkpoint")
    if len(raw) < 12:
        raise CheckpointError(f"{path}: truncated header")
    (head_len,) = struct.unpack("<Q", raw[4:12])
    if len(raw) < 12 + head_len:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[12 : 12 + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: format version {header.get('format_version')!r} not supported (expected {FORMAT_VERSION})"
        )
    if header.get("tokenizer_version") != TOKENIZER_VERSION:
        raise CheckpointError(f"{path}: tokenizer version {header.get('tokenizer_version')!r} does not match {TOKENIZER_VERSION}")
    payload = raw[12 + head_len :]
    _check_manifest(header["tensors"], header["payload_bytes"])
    if len(payload) < header["payload_bytes"]:
        raise CheckpointError(f"{path}: truncated payload ({len(payload)} of {header['payload_bytes']} bytes)")
    if len(payload) > header["payload_bytes"]:
        raise CheckpointError(f"{path}: {len(payload) - header['payload_bytes']} trailing bytes after payload")

    arrays = {}
    for rec in header["tensors"]:
        dtype = _DTYPES[rec["dtype"]]
        buf = payload[rec["offset"] : rec["offset"] + rec["nbytes"]]
        arrays[rec["name"]] = np.frombuffer(buf, dtype=dtype).reshape(rec["shape"]).astype(dtype.newbyteorder("="))

    def lstm(prefix):
        return LstmWeights(arrays[f"{prefix}.W"], arrays[f"{prefix}.U"], arrays[f"{prefix}.b"])

    try:
        vocab = Vocab(header["vocab"])
        table = EmbeddingTable(vocab, arrays["embeddings"], frozenset(header["oov_indices"]))
        model = ModelParams(
            BiLstm(lstm("sentence.fwd"), lstm("sentence.bwd")),
            BiLstm(lstm("target.fwd"), lstm("target.bwd")),
            LinearLayer(arrays["linear.W"], arrays["linear.b"]),
            table,
        )
        config = TrainConfig.from_dict(header["config"])
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: inconsistent checkpoint contents ({exc})") from None
    if table.matrix.shape[0] != len(vocab):
        raise CheckpointError(f"{path}: embedding table has {table.matrix.shape[0]} rows for {len(vocab)} vocabulary entries")
    d_w, d_h = table.d_w, model.sentence_encoder.forward.d_h
    for enc in (model.sentence_encoder, model.target_encoder):
        for w in (enc.forward, enc.backward):
            if w.d_in != d_w or w.d_h != d_h:
                raise CheckpointError(f"{path}: encoder shapes ({w.d_in}, {w.d_h}) disagree with d_w={d_w}, d_h={d_h}")
    if model.linear.W.shape[1] != 2 * d_h:
        raise CheckpointError(f"{path}: linear layer expects {model.linear.W.shape[1]} inputs, encoder gives {2 * d_h}")
    return Checkpoint(model, config, vocab)
