"""Scoring, AUROC, and evaluation reports.

AUROC is computed from tied rank sums: the probability that a uniformly
random positive outranks a uniformly random negative, with ties counted as
one half. The report carries the AUROC, class counts, and 50-bin score
histograms per class; it serializes to a small key/value text format that
parses back exactly.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import IoFailure, MalformedRow, OneClassOnly
from .packets import Label

HISTOGRAM_BINS = 50


@dataclass(frozen=True)
class ScoredSample:
    score: float
    label: Optional[Label] = None
    source_id: Optional[tuple[str, int]] = None

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")


def tied_ranks(values: np.ndarray) -> np.ndarray:
    """1-based ranks with ties averaged; averages land on exact half-integers."""
    values = np.asarray(values)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(values.size, dtype=np.float64)
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def auroc(scored: Iterable[tuple[float, int]]) -> float:
    """Rank-sum AUROC over (score, label) pairs; label 1 is the positive class."""
    pairs = list(scored)
    scores = np.array([s for s, _ in pairs], dtype=np.float64)
    labels = np.array([int(l) for _, l in pairs])
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnly(f"need both classes, got {n_pos} positive / {n_neg} negative")
    ranks = tied_ranks(scores)
    pos_rank_sum = ranks[labels == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass(eq=True)
class EvalReport:
    auroc: float
    n_pos: int
    n_neg: int
    bins: int = HISTOGRAM_BINS
    hist_normal: tuple[int, ...] = ()
    hist_anomaly: tuple[int, ...] = ()
    scores: Optional[list[ScoredSample]] = field(default=None, compare=False)


def _histogram(scores: np.ndarray, bins: int) -> tuple[int, ...]:
    counts, _ = np.histogram(scores, bins=bins, range=(0.0, 1.0))
    return tuple(int(c) for c in counts)


def evaluate(scored: Sequence[ScoredSample], keep_scores: bool = False) -> EvalReport:
    """Report over fully labeled scored samples."""
    if any(s.label is None for s in scored):
        raise OneClassOnly("every sample must carry a ground-truth label")
    labels = np.array([1 if s.label is Label.ANOMALY else 0 for s in scored])
    values = np.array([s.score for s in scored])
    area = auroc(zip(values, labels))
    return EvalReport(
        auroc=area,
        n_pos=int((labels == 1).sum()),
        n_neg=int((labels == 0).sum()),
        bins=HISTOGRAM_BINS,
        hist_normal=_histogram(values[labels == 0], HISTOGRAM_BINS),
        hist_anomaly=_histogram(values[labels == 1], HISTOGRAM_BINS),
        scores=list(scored) if keep_scores else None,
    )


def format_report(report: EvalReport) -> str:
    lines = [
        f"auroc: {report.auroc!r}",
        f"n_pos: {report.n_pos}",
        f"n_neg: {report.n_neg}",
        f"bins: {report.bins}",
        "hist_normal: " + ",".join(str(c) for c in report.hist_normal),
        "hist_anomaly: " + ",".join(str(c) for c in report.hist_anomaly),
    ]
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> EvalReport:
    fields: dict[str, str] = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition(":")
        fields[key.strip()] = value.strip()
    try:
        return EvalReport(
            auroc=float(fields["auroc"]),
            n_pos=int(fields["n_pos"]),
            n_neg=int(fields["n_neg"]),
            bins=int(fields["bins"]),
            hist_normal=tuple(int(v) for v in fields["hist_normal"].split(",") if v),
            hist_anomaly=tuple(int(v) for v in fields["hist_anomaly"].split(",") if v),
        )
    except (KeyError, ValueError) as err:
        raise MalformedRow(f"cannot parse report: {err}") from err


def write_report(path: str | Path, report: EvalReport) -> None:
    try:
        Path(path).write_text(format_report(report))
    except OSError as err:
        raise IoFailure(f"cannot write report {path}: {err}") from err


def read_report(path: str | Path) -> EvalReport:
    try:
        return parse_report(Path(path).read_text())
    except OSError as err:
        raise IoFailure(f"cannot read report {path}: {err}") from err


# --- per-sample score CSV ---

SCORES_HEADER = ["source_file", "capture_index", "score", "label"]


def write_scores(path: str | Path, scored: Sequence[ScoredSample]) -> int:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(SCORES_HEADER)
            for s in scored:
                fid, idx = s.source_id if s.source_id else ("", -1)
                label = "" if s.label is None else str(s.label.value)
                writer.writerow([fid, idx, repr(float(s.score)), label])
    except OSError as err:
        raise IoFailure(f"cannot write scores {path}: {err}") from err
    return len(scored)


def read_scores(path: str | Path) -> list[ScoredSample]:
    try:
        fh = open(path, "r", newline="")
    except OSError as err:
        raise IoFailure(f"cannot read scores {path}: {err}") from err
    out = []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SCORES_HEADER:
            raise MalformedRow(f"{path}: missing scores header")
        for lineno, row in enumerate(reader):
            if len(row) != 4:
                raise MalformedRow(f"{path}:{lineno + 2}: expected 4 columns")
            fid, idx, score, label = row
            try:
                out.append(ScoredSample(
                    score=float(score),
                    label=None if label == "" else Label(int(label)),
                    source_id=(fid, int(idx)) if fid else None))
            except ValueError as err:
                raise MalformedRow(f"{path}:{lineno + 2}: {err}") from err
    return out
