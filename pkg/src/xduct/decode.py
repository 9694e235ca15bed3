"""Greedy decoding, alignment extraction and crossing-edge analysis."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as tn
from .batch import collate_sources
from .data import BOS, EOS, PAD, UNK
from .errors import ArgumentError
from .models import TransducerModel, next_symbol_distribution, start_decoding

EXTRA_LENGTH = 50
_BANNED = (PAD, BOS, UNK)


@dataclass
class DecodeResult:
    output: list[int]  # emitted indices, EOS included when reached
    alpha: np.ndarray  # one alignment row per emitted symbol
    log_probs: np.ndarray
    source_symbols: list[str] = field(default_factory=list)
    output_symbols: list[str] = field(default_factory=list)

    @property
    def finished(self) -> bool:
        return bool(self.output) and self.output[-1] == EOS

    @property
    def symbols(self) -> list[str]:
        """Output symbols without the trailing EOS."""
        return self.output_symbols[:-1] if self.finished else list(self.output_symbols)


def greedy_decode_batch(
    model: TransducerModel, sources: Sequence[Sequence[int]], max_len: int | None = None
) -> list[DecodeResult]:
    """Greedy decoding of several sources at once.

    Each step emits the argmax of the full next-symbol distribution (PAD,
    BOS and UNK excluded; ties go to the lowest index) and a row stops at
    EOS or after ``max_len`` symbols (default ``|x| + 50``).
    """
    if not sources:
        return []
    src, src_mask, src_len = collate_sources(sources)
    caps = src_len + EXTRA_LENGTH if max_len is None else np.full(len(sources), max_len)
    if (caps < 1).any():
        raise ArgumentError("max_len must be at least 1")
    B = len(sources)
    outputs: list[list[int]] = [[] for _ in range(B)]
    alphas: list[list[np.ndarray]] = [[] for _ in range(B)]
    logps: list[list[float]] = [[] for _ in range(B)]
    active = np.ones(B, dtype=bool)
    y_prev = np.full(B, BOS, dtype=np.intp)
    with tn.no_grad():
        st = start_decoding(model, src, src_len, src_mask)
        while active.any():
            dist, alpha, st = next_symbol_distribution(model, st, y_prev)
            dist = dist.copy()
            dist[:, list(_BANNED)] = -np.inf
            choice = np.argmax(dist, axis=1)
            for b in np.flatnonzero(active):
                c = int(choice[b])
                outputs[b].append(c)
                alphas[b].append(alpha[b, : src_len[b]].copy())
                logps[b].append(float(dist[b, c]))
                if c == EOS or len(outputs[b]) >= caps[b]:
                    active[b] = False
            y_prev = choice.astype(np.intp)
    results = []
    for b in range(B):
        results.append(
            DecodeResult(
                outputs[b],
                np.array(alphas[b]).reshape(len(outputs[b]), src_len[b]),
                np.array(logps[b]),
                model.src_vocab.decode(sources[b]),
                model.tgt_vocab.decode(outputs[b]),
            )
        )
    return results


def greedy_decode(model: TransducerModel, x: Sequence[int], max_len: int | None = None) -> DecodeResult:
    return greedy_decode_batch(model, [list(x)], max_len)[0]


def decode_many(
    model: TransducerModel,
    sources: Sequence[Sequence[int]],
    batch_size: int = 100,
    threads: int = 1,
    max_len: int | None = None,
) -> list[DecodeResult]:
    """Decode in chunks, optionally spreading chunks over worker threads.

    Results do not depend on ``threads``: every chunk is decoded independently.
    """
    chunks = [sources[k : k + batch_size] for k in range(0, len(sources), batch_size)]
    run = lambda c: greedy_decode_batch(model, c, max_len)
    if threads <= 1 or len(chunks) <= 1:
        parts = [run(c) for c in chunks]
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, chunks))
    return [r for part in parts for r in part]


# -- monotonicity --------------------------------------------------------

@dataclass
class MonotonicityVerdict:
    edges: list[tuple[int, int]]  # (source position j, output step i), 0-based
    crossing: bool
    correct: bool | None = None

    @property
    def monotonic(self) -> bool:
        return not self.crossing


def alignment_edges(alpha: np.ndarray, threshold: float = 0.1) -> list[tuple[int, int]]:
    steps, positions = np.nonzero(np.asarray(alpha) > threshold)
    return [(int(j), int(i)) for i, j in zip(steps, positions)]


def has_crossing(edges: Sequence[tuple[int, int]]) -> bool:
    """True iff some edges (j, i), (j', i') have i < i' and j > j'."""
    by_step: dict[int, list[int]] = {}
    for j, i in edges:
        by_step.setdefault(i, []).append(j)
    max_so_far = -1
    for i in sorted(by_step):
        js = by_step[i]
        if min(js) < max_so_far:
            return True
        max_so_far = max(max_so_far, max(js))
    return False


def classify_monotonicity(
    result: DecodeResult,
    threshold: float = 0.1,
    reference: Sequence[str] | None = None,
    include_eos: bool = False,
) -> MonotonicityVerdict:
    """Edges where alpha_j(i) > threshold; non-monotonic iff two edges cross.

    The EOS row is left out unless ``include_eos``.
    """
    alpha = np.asarray(result.alpha)
    if result.finished and not include_eos:
        alpha = alpha[:-1]
    edges = alignment_edges(alpha, threshold)
    correct = None if reference is None else result.symbols == list(reference)
    return MonotonicityVerdict(edges, has_crossing(edges), correct)


@dataclass
class ConfusionTable:
    """Counts of {monotonic, non-monotonic} x {correct, incorrect}."""

    counts: np.ndarray = field(default_factory=lambda: np.zeros((2, 2), dtype=int))

    ROWS = ("monotonic", "non-monotonic")
    COLS = ("correct", "incorrect")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def get(self, row: str, col: str) -> int:
        return int(self.counts[self.ROWS.index(row), self.COLS.index(col)])

    def fraction_monotonic(self) -> float:
        return float(self.counts[0].sum()) / max(self.total, 1)

    def to_tsv(self) -> str:
        lines = ["\t" + "\t".join(self.COLS)]
        for r, name in enumerate(self.ROWS):
            lines.append(name + "\t" + "\t".join(str(int(c)) for c in self.counts[r]))
        return "\n".join(lines) + "\n"


def confusion_table(
    results: Sequence[DecodeResult],
    references: Sequence[Sequence[str]],
    threshold: float = 0.1,
    include_eos: bool = False,
) -> ConfusionTable:
    if len(results) != len(references):
        raise ArgumentError(f"{len(results)} results vs {len(references)} references")
    table = ConfusionTable()
    for res, ref in zip(results, references):
        v = classify_monotonicity(res, threshold, ref, include_eos)
        table.counts[int(v.crossing), 0 if v.correct else 1] += 1
    return table


# -- heatmaps ------------------------------------------------------------

def export_heatmap(result: DecodeResult, path) -> None:
    """TSV matrix: header row of source symbols, one row per emitted symbol."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
        w.writerow([""] + list(result.source_symbols))
        for sym, row in zip(result.output_symbols, result.alpha):
            w.writerow([sym] + [f"{v:.6f}" for v in row])


def read_heatmap(path) -> tuple[list[str], list[str], np.ndarray]:
    """Parse a file written by :func:`export_heatmap` -> (source, output, alpha)."""
    with Path(path).open(encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh, delimiter="\t"))
    source = rows[0][1:]
    output = [r[0] for r in rows[1:]]
    alpha = np.array([[float(v) for v in r[1:]] for r in rows[1:]]).reshape(len(output), len(source))
    return source, output, alpha
