"""Self-describing checkpoint container.

Layout::

    b"CLSPCKPT"              8-byte magic
    uint64 little-endian     header length in bytes
    header                   UTF-8 JSON: version, model_config, tokenizer,
                             train_config, step, tensors[{name, shape, dtype,
                             offset, nbytes}]
    tensor data              raw little-endian bytes, offsets relative to the
                             first byte after the header

Tensor names are ``param/<name>``, ``adam_m/<name>`` and ``adam_v/<name>``.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..encoding import TokenizerConfig
from .model import ModelConfig
from .optim import AdamState, TrainConfig

MAGIC = b"CLSPCKPT"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


@dataclass
class ModelCheckpoint:
    model_config: ModelConfig
    tokenizer: TokenizerConfig
    params: dict
    optimizer: Optional[AdamState] = None
    train_config: Optional[TrainConfig] = None
    step: int = 0
    version: int = FORMAT_VERSION
    history: list = field(default_factory=list, compare=False)

    def tensors(self) -> dict:
        out = {f"param/{k}": v for k, v in self.params.items()}
        if self.optimizer is not None:
            out.update({f"adam_m/{k}": v for k, v in self.optimizer.m.items()})
            out.update({f"adam_v/{k}": v for k, v in self.optimizer.v.items()})
        return out


def to_bytes(ckpt: ModelCheckpoint) -> bytes:
    directory = []
    chunks = []
    offset = 0
    for name, arr in ckpt.tensors().items():
        le = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<"))
        raw = le.tobytes()
        directory.append(
            {"name": name, "shape": list(arr.shape), "dtype": le.dtype.str, "offset": offset, "nbytes": len(raw)}
        )
        chunks.append(raw)
        offset += len(raw)
    header = {
        "version": ckpt.version,
        "model_config": ckpt.model_config.to_dict(),
        "tokenizer": ckpt.tokenizer.to_dict(),
        "train_config": None if ckpt.train_config is None else ckpt.train_config.to_dict(),
        "step": ckpt.step,
        "optimizer_step": None if ckpt.optimizer is None else ckpt.optimizer.step,
        "tensors": directory,
    }
    head = json.dumps(header, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(head)) + head + b"".join(chunks)


def from_bytes(blob: bytes) -> ModelCheckpoint:
    if blob[:8] != MAGIC or len(blob) < 16:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (hlen,) = struct.unpack("<Q", blob[8:16])
    if 16 + hlen > len(blob):
        raise CheckpointError("truncated checkpoint header")
    try:
        return _parse(blob, hlen)
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc!r}") from exc


def _parse(blob: bytes, hlen: int) -> ModelCheckpoint:
    header = json.loads(blob[16 : 16 + hlen].decode("utf-8"))
    if header["version"] != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {header['version']}")
    base = 16 + hlen
    groups: dict = {"param": {}, "adam_m": {}, "adam_v": {}}
    for entry in header["tensors"]:
        kind, name = entry["name"].split("/", 1)
        start = base + entry["offset"]
        if start + entry["nbytes"] > len(blob):
            raise CheckpointError(f"tensor {entry['name']} runs past the end of the file")
        arr = np.frombuffer(blob[start : start + entry["nbytes"]], dtype=np.dtype(entry["dtype"]))
        groups[kind][name] = arr.reshape(entry["shape"]).astype(np.dtype(entry["dtype"]).newbyteorder("="))
    optimizer = None
    if header["optimizer_step"] is not None:
        optimizer = AdamState(m=groups["adam_m"], v=groups["adam_v"], step=header["optimizer_step"])
    train_config = header.get("train_config")
    return ModelCheckpoint(
        model_config=ModelConfig.from_dict(header["model_config"]),
        tokenizer=TokenizerConfig.from_dict(header["tokenizer"]),
        params=groups["param"],
        optimizer=optimizer,
        train_config=None if train_config is None else TrainConfig.from_dict(train_config),
        step=header["step"],
        version=header["version"],
    )


def save_checkpoint(ckpt: ModelCheckpoint, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(ckpt))


def load_checkpoint(path) -> ModelCheckpoint:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
