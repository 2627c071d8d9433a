"""Versioned binary checkpoint container.

Layout: 9-byte magic, 1-byte format version, little-endian u32 header length,
a canonical JSON header (stage tag, seed, config fingerprint, metadata, and a
name-sorted tensor table), then the raw float64 payload in table order. All
serialization is canonical so identical training runs produce byte-identical
files.
"""
from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import CheckpointMismatch, IoFailure

MAGIC = b"FLOWGATE1"
FORMAT_VERSION = 1

STAGE_EXTRACTOR = "EXTRACTOR"
STAGE_FLOW = "FLOW"
STAGE_CLASSIFIER = "CLASSIFIER"
STAGES = (STAGE_EXTRACTOR, STAGE_FLOW, STAGE_CLASSIFIER)


def config_fingerprint(config: Mapping) -> str:
    """sha256 of the canonical JSON form of a stage config."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(eq=False)
class Checkpoint:
    stage: str
    seed: int
    config_fingerprint: str
    tensors: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)
    # names present in the file; equals tensors.keys() unless loading filtered
    available: tuple[str, ...] = ()

    def __post_init__(self):
        if self.stage not in STAGES:
            raise CheckpointMismatch(f"unknown stage tag {self.stage!r}")
        if not self.available:
            self.available = tuple(sorted(self.tensors))

    @property
    def parameter_count(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    names = sorted(ckpt.tensors)
    header = {
        "format": FORMAT_VERSION,
        "stage": ckpt.stage,
        "seed": int(ckpt.seed),
        "config_fingerprint": ckpt.config_fingerprint,
        "meta": ckpt.meta,
        "tensors": [[name, list(ckpt.tensors[name].shape)] for name in names],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<B", FORMAT_VERSION))
            fh.write(struct.pack("<I", len(blob)))
            fh.write(blob)
            for name in names:
                fh.write(np.ascontiguousarray(ckpt.tensors[name], dtype=np.float64).tobytes())
    except OSError as err:
        raise IoFailure(f"cannot write checkpoint {path}: {err}") from err


def load_checkpoint(path: str | Path, expect_stage: Optional[str] = None,
                    include: Optional[Sequence[str]] = None) -> Checkpoint:
    """Load and verify a checkpoint.

    `include` restricts which parameter tables are materialized: only tensors
    whose name starts with one of the given prefixes are read, everything else
    is skipped over. The returned Checkpoint's `tensors` holds exactly what was
    materialized; `available` lists every table in the file.
    """
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as err:
        raise IoFailure(f"cannot read checkpoint {path}: {err}") from err
    if raw[:len(MAGIC)] != MAGIC:
        raise CheckpointMismatch(f"{path}: bad magic")
    offset = len(MAGIC)
    version = raw[offset]
    if version != FORMAT_VERSION:
        raise CheckpointMismatch(f"{path}: unsupported format version {version}")
    offset += 1
    (header_len,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    try:
        header = json.loads(raw[offset:offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise CheckpointMismatch(f"{path}: corrupt header") from err
    offset += header_len

    stage = header.get("stage")
    if stage not in STAGES:
        raise CheckpointMismatch(f"{path}: unknown stage tag {stage!r}")
    if expect_stage is not None and stage != expect_stage:
        raise CheckpointMismatch(
            f"{path}: expected stage {expect_stage}, found {stage}")

    table = header.get("tensors", [])
    total = sum(int(np.prod(shape, dtype=np.int64)) for _, shape in table)
    if len(raw) - offset != total * 8:
        raise CheckpointMismatch(
            f"{path}: payload holds {(len(raw) - offset) // 8} values, "
            f"shape table wants {total}")

    tensors: dict[str, np.ndarray] = {}
    for name, shape in table:
        size = int(np.prod(shape, dtype=np.int64))
        if include is None or any(name.startswith(p) for p in include):
            flat = np.frombuffer(raw, dtype="<f8", count=size, offset=offset)
            tensors[name] = flat.reshape(shape).copy()
        offset += size * 8

    return Checkpoint(stage=stage, seed=int(header["seed"]),
                      config_fingerprint=header["config_fingerprint"],
                      tensors=tensors, meta=header.get("meta", {}),
                      available=tuple(name for name, _ in table))


def matches(ckpt: Checkpoint, stage: str, fingerprint: str, seed: int) -> bool:
    return (ckpt.stage == stage and ckpt.config_fingerprint == fingerprint
            and ckpt.seed == seed)
