"""
Checkpoint files.

Layout: a magic line ``TIGAN-CHECKPOINT 1``, one line of JSON header (sorted
keys), then the raw little-endian float64 bytes of every tensor in header
order. The header lists ``[name, shape, offset, count]`` per tensor, with
offsets counted in float64 items from the start of the data block.
"""
from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .corpus import Vocabulary, vocabulary_hash
from .exceptions import CheckpointError, ConfigError
from .tigan import TiganConfig, TiganModel, TrainState

logger = logging.getLogger(__name__)

MAGIC = b"TIGAN-CHECKPOINT"
FORMAT_VERSION = 1
DTYPE = np.dtype("<f8")


@dataclass
class Checkpoint:
    config: TiganConfig
    vocab_hash: str
    vocab_size: int
    step: int
    epoch: int
    tensors: dict[str, np.ndarray]
    format_version: int = FORMAT_VERSION

    def model(self) -> TiganModel:
        return TiganModel.from_tensors(self.config, self.vocab_size, self.tensors)


def write_checkpoint(
    path: str | Path,
    tensors: Mapping[str, np.ndarray],
    config: TiganConfig,
    vocab: Vocabulary,
    step: int = 0,
    epoch: int = 0,
) -> Path:
    path = Path(path)
    entries, blocks, offset = [], [], 0
    for name in sorted(tensors):
        array = np.ascontiguousarray(tensors[name], dtype=DTYPE)
        entries.append([name, list(array.shape), offset, int(array.size)])
        blocks.append(array.tobytes())
        offset += array.size
    header = {
        "config": config.to_dict(),
        "epoch": int(epoch),
        "format_version": FORMAT_VERSION,
        "step": int(step),
        "tensors": entries,
        "vocab_hash": vocabulary_hash(vocab),
        "vocab_size": len(vocab),
    }
    partial = path.with_name(path.name + ".partial")
    with open(partial, "wb") as fh:
        fh.write(MAGIC + b" " + str(FORMAT_VERSION).encode("ascii") + b"\n")
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8") + b"\n")
        for block in blocks:
            fh.write(block)
    os.replace(partial, path)
    return path


def save_checkpoint(path: str | Path, model: TiganModel, vocab: Vocabulary, state: TrainState | None = None) -> Path:
    step = state.step if state is not None else 0
    epoch = state.epoch if state is not None else 0
    path = write_checkpoint(path, model.tensors(), model.config, vocab, step, epoch)
    logger.info("wrote checkpoint %s (epoch %d, step %d)", path, epoch, step)
    return path


def load_checkpoint(path: str | Path, vocab: Vocabulary | None = None) -> Checkpoint:
    """Read a checkpoint; with ``vocab`` given, its hash must match the stored one."""
    try:
        with open(path, "rb") as fh:
            magic = fh.readline().rstrip(b"\n").split(b" ")
            if len(magic) != 2 or magic[0] != MAGIC:
                raise CheckpointError(f"{path}: not a checkpoint file")
            if magic[1] != str(FORMAT_VERSION).encode("ascii"):
                raise CheckpointError(f"{path}: unsupported checkpoint version {magic[1].decode(errors='replace')}")
            header = json.loads(fh.readline().decode("utf-8"))
            data = fh.read()
    except OSError as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    except (ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc

    if vocab is not None and header["vocab_hash"] != vocabulary_hash(vocab):
        raise CheckpointError(
            f"{path}: vocabulary mismatch (checkpoint {header['vocab_hash'][:12]}, "
            f"given {vocabulary_hash(vocab)[:12]})"
        )
    flat = np.frombuffer(data, dtype=DTYPE)
    tensors = {}
    for name, shape, offset, count in header["tensors"]:
        if offset + count > flat.size:
            raise CheckpointError(f"{path}: tensor {name} runs past the end of the file")
        tensors[name] = flat[offset : offset + count].reshape(shape).copy()
    try:
        config = TiganConfig.from_dict(header["config"])
    except (ConfigError, TypeError) as exc:
        raise CheckpointError(f"{path}: invalid stored config: {exc}") from exc
    return Checkpoint(
        config=config,
        vocab_hash=header["vocab_hash"],
        vocab_size=int(header["vocab_size"]),
        step=int(header["step"]),
        epoch=int(header["epoch"]),
        tensors=tensors,
        format_version=int(header["format_version"]),
    )


def load_model(path: str | Path, vocab: Vocabulary) -> TiganModel:
    return load_checkpoint(path, vocab).model()
