"""Self-describing binary checkpoint container.

Layout (all integers little-endian)::

    magic      8 bytes   b"BMCKPT\\x00\\x01"
    version    u32
    4 blocks   u64 length + payload each:
                 config JSON (model config, seed, loss history, extras)
                 source vocabulary (JSON list of tokens)
                 target vocabulary (JSON list of tokens)
                 weights: u32 header length, JSON header of
                          [name, dtype, shape] entries, then raw tensors
    checksum   32 bytes  SHA-256 over everything before it
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np
import torch

from ..errors import ChecksumMismatch, VersionMismatch
from ..tokenization.vocab import Vocabulary
from .config import ModelConfig
from .training import TranslationModel, init_model

MAGIC = b"BMCKPT\x00\x01"
FORMAT_VERSION = 1
_DTYPES = {torch.float32: "<f4", torch.float64: "<f8"}


def _block(payload: bytes) -> bytes:
    return struct.pack("<Q", len(payload)) + payload


def _weights_blob(state) -> bytes:
    header = []
    chunks = []
    for name, tensor in state.items():
        arr = tensor.detach().cpu().numpy().astype(_DTYPES[tensor.dtype], copy=False)
        header.append([name, _DTYPES[tensor.dtype], list(arr.shape)])
        chunks.append(arr.tobytes(order="C"))
    head = json.dumps(header).encode("utf-8")
    return struct.pack("<I", len(head)) + head + b"".join(chunks)


def _read_weights(blob: bytes):
    (n,) = struct.unpack_from("<I", blob, 0)
    header = json.loads(blob[4:4 + n].decode("utf-8"))
    pos = 4 + n
    state = {}
    for name, dtype, shape in header:
        count = int(np.prod(shape)) if shape else 1
        size = count * np.dtype(dtype).itemsize
        arr = np.frombuffer(blob, dtype=dtype, count=count, offset=pos).reshape(shape)
        state[name] = torch.from_numpy(arr.copy())
        pos += size
    if pos != len(blob):
        raise ChecksumMismatch("weight blob has trailing bytes")
    return state


def checkpoint_bytes(model: TranslationModel, extra=None, version: int = FORMAT_VERSION) -> bytes:
    config = {
        "model": model.config.to_dict(),
        "seed": model.seed,
        "loss_history": model.loss_history,
        "param_count": model.param_count(),
        "extra": extra or {},
    }
    body = (MAGIC + struct.pack("<I", version)
            + _block(json.dumps(config).encode("utf-8"))
            + _block(json.dumps(model.src_vocab.to_list(), ensure_ascii=False).encode("utf-8"))
            + _block(json.dumps(model.tgt_vocab.to_list(), ensure_ascii=False).encode("utf-8"))
            + _block(_weights_blob(model.net.state_dict())))
    return body + hashlib.sha256(body).digest()


def save_checkpoint(model: TranslationModel, path, extra=None):
    """Write ``model`` to ``path``; ``extra`` is a JSON-able dict kept verbatim."""
    Path(path).write_bytes(checkpoint_bytes(model, extra))


def read_checkpoint(path):
    """Parse and verify a checkpoint file; returns (config dict, src vocab, tgt vocab, state)."""
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 4 + 32:
        raise ChecksumMismatch(f"{path}: file too short to be a checkpoint")
    body, checksum = data[:-32], data[-32:]
    if body[:len(MAGIC)] != MAGIC:
        raise ChecksumMismatch(f"{path}: not a checkpoint (bad magic bytes)")
    if hashlib.sha256(body).digest() != checksum:
        raise ChecksumMismatch(f"{path}: checksum mismatch (truncated or corrupted file)")
    (version,) = struct.unpack_from("<I", body, len(MAGIC))
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"{path}: checkpoint format {version}, this build reads {FORMAT_VERSION}")
    pos = len(MAGIC) + 4
    blocks = []
    for _ in range(4):
        (n,) = struct.unpack_from("<Q", body, pos)
        blocks.append(body[pos + 8:pos + 8 + n])
        pos += 8 + n
    config = json.loads(blocks[0].decode("utf-8"))
    src = Vocabulary(json.loads(blocks[1].decode("utf-8")))
    tgt = Vocabulary(json.loads(blocks[2].decode("utf-8")))
    return config, src, tgt, _read_weights(blocks[3])


def load_checkpoint(path, with_extra: bool = False):
    """Restore a model saved by :func:`save_checkpoint`."""
    config, src, tgt, state = read_checkpoint(path)
    cfg = ModelConfig.from_dict(config["model"])
    model = init_model(cfg, src, tgt, config.get("seed", 0))
    stored = sum(t.numel() for t in state.values())
    if stored != model.expected_param_count():
        raise ChecksumMismatch(f"{path}: stored weights hold {stored} values, "
                               f"config implies {model.expected_param_count()}")
    dtype = next(iter(state.values())).dtype if state else torch.float32
    model.net.to(dtype)
    model.net.load_state_dict(state)
    model.net.eval()
    model.loss_history = list(config.get("loss_history", []))
    if with_extra:
        return model, config.get("extra", {})
    return model
