"""CSV storage for encoded packets and latent vectors.

Packet rows are 1600 values plus a label column ("0" normal, "1" anomaly,
empty when unlabeled). Values are written as shortest exact decimals so a
round trip reproduces them bit for bit.
"""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import IoFailure, MalformedRow
from .packets import EncodedPacket, Label, VECTOR_LEN

DATASET_HEADER = [f"f{i}" for i in range(VECTOR_LEN)] + ["label"]

# all 256 representable byte values, pre-formatted
_BYTE_STR = [repr(b / 255.0) for b in range(256)]


def _label_str(label: Optional[Label]) -> str:
    return "" if label is None else str(label.value)


def _parse_label(text: str) -> Optional[Label]:
    if text == "":
        return None
    if text == "0":
        return Label.NORMAL
    if text == "1":
        return Label.ANOMALY
    raise MalformedRow(f"bad label field {text!r}")


def write_dataset(packets: Iterable[EncodedPacket], out: str | Path) -> int:
    """One row per packet; returns the number of rows written."""
    count = 0
    try:
        with open(out, "w", newline="") as fh:
            fh.write(",".join(DATASET_HEADER) + "\n")
            for packet in packets:
                idx = np.rint(packet.values * 255.0).astype(np.int64)
                fh.write(",".join(_BYTE_STR[i] for i in idx))
                fh.write("," + _label_str(packet.label) + "\n")
                count += 1
    except OSError as err:
        raise IoFailure(f"cannot write {out}: {err}") from err
    return count


def read_dataset(path: str | Path) -> list[EncodedPacket]:
    """Read rows written by write_dataset, validating every one."""
    fid = Path(path).name
    packets: list[EncodedPacket] = []
    try:
        fh = open(path, "r", newline="")
    except OSError as err:
        raise IoFailure(f"cannot read {path}: {err}") from err
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != DATASET_HEADER:
            raise MalformedRow(f"{path}: missing or wrong header row")
        for lineno, row in enumerate(reader):
            if len(row) != VECTOR_LEN + 1:
                raise MalformedRow(
                    f"{path}:{lineno + 2}: expected {VECTOR_LEN + 1} columns, got {len(row)}")
            try:
                values = np.array(row[:-1], dtype=np.float64)
            except ValueError as err:
                raise MalformedRow(f"{path}:{lineno + 2}: non-numeric value") from err
            if values.min() < 0.0 or values.max() > 1.0:
                raise MalformedRow(f"{path}:{lineno + 2}: value outside [0, 1]")
            label = _parse_label(row[-1])
            try:
                packets.append(EncodedPacket(values=values, label=label,
                                             source_id=(fid, lineno)))
            except ValueError as err:
                raise MalformedRow(f"{path}:{lineno + 2}: {err}") from err
    return packets


def values_matrix(packets: Sequence[EncodedPacket]) -> np.ndarray:
    """Stack packet values into an [n, 1600] float64 matrix."""
    if not packets:
        return np.zeros((0, VECTOR_LEN))
    return np.stack([p.values for p in packets])


def labels_of(packets: Sequence[EncodedPacket]) -> list[Optional[Label]]:
    return [p.label for p in packets]


# --- latent-vector CSV (70 columns + label) ---

def write_latents(path: str | Path, latents: np.ndarray,
                  labels: Optional[Sequence[Optional[Label]]] = None) -> int:
    arr = np.asarray(latents, dtype=np.float64)
    if arr.ndim != 2:
        raise MalformedRow(f"latents must be 2-D, got shape {arr.shape}")
    try:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(f"z{i}" for i in range(arr.shape[1])) + ",label\n")
            for i, row in enumerate(arr):
                label = labels[i] if labels is not None else None
                fh.write(",".join(repr(float(v)) for v in row))
                fh.write("," + _label_str(label) + "\n")
    except OSError as err:
        raise IoFailure(f"cannot write {path}: {err}") from err
    return arr.shape[0]


def read_latents(path: str | Path) -> tuple[np.ndarray, list[Optional[Label]]]:
    try:
        fh = open(path, "r", newline="")
    except OSError as err:
        raise IoFailure(f"cannot read {path}: {err}") from err
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-1] != "label":
            raise MalformedRow(f"{path}: missing latent header row")
        dim = len(header) - 1
        rows, labels = [], []
        for lineno, row in enumerate(reader):
            if len(row) != dim + 1:
                raise MalformedRow(
                    f"{path}:{lineno + 2}: expected {dim + 1} columns, got {len(row)}")
            try:
                rows.append(np.array(row[:-1], dtype=np.float64))
            except ValueError as err:
                raise MalformedRow(f"{path}:{lineno + 2}: non-numeric value") from err
            labels.append(_parse_label(row[-1]))
    matrix = np.stack(rows) if rows else np.zeros((0, dim))
    if matrix.size and not np.isfinite(matrix).all():
        raise MalformedRow(f"{path}: non-finite latent value")
    return matrix, labels
