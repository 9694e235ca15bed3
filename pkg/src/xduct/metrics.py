"""String transduction metrics: WER, PER, ACC, MFS and MLD.

All functions take parallel lists of symbol sequences (strings or lists of
symbols), references first.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import ArgumentError


def edit_distance(a: Sequence, b: Sequence) -> int:
    """Levenshtein distance with unit insertion, deletion and substitution costs."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def _check_parallel(refs, hyps) -> None:
    if len(refs) != len(hyps):
        raise ArgumentError(f"{len(refs)} references vs {len(hyps)} hypotheses")


def per(refs, hyps) -> float:
    """Corpus phoneme error rate: sum of edit distances over total reference length."""
    _check_parallel(refs, hyps)
    if any(len(r) == 0 for r in refs):
        raise ArgumentError("PER needs non-empty references")
    return sum(edit_distance(h, r) for r, h in zip(refs, hyps)) / sum(len(r) for r in refs)


def per_mean(refs, hyps) -> float:
    """Mean of the per-string ratios ED / |r|."""
    _check_parallel(refs, hyps)
    if any(len(r) == 0 for r in refs):
        raise ArgumentError("PER needs non-empty references")
    return sum(edit_distance(h, r) / len(r) for r, h in zip(refs, hyps)) / len(refs)


def wer(refs, hyps) -> float:
    """Fraction of strings that are not reproduced exactly."""
    _check_parallel(refs, hyps)
    if not refs:
        return 0.0
    return sum(list(r) != list(h) for r, h in zip(refs, hyps)) / len(refs)


def acc(refs, hyps) -> float:
    """Exact-match accuracy in percent."""
    return 100.0 * (1.0 - wer(refs, hyps))


def f_score(ref: Sequence, hyp: Sequence) -> float:
    """LCS-based F-score of one pair, with LCS = (|c| + |r| - ED) / 2."""
    if len(ref) == 0:
        raise ArgumentError("F-score needs a non-empty reference")
    lcs = 0.5 * (len(hyp) + len(ref) - edit_distance(hyp, ref))
    if lcs == 0 or len(hyp) == 0:
        return 0.0
    recall = lcs / len(ref)
    precision = lcs / len(hyp)
    return 2.0 * recall * precision / (recall + precision)


def mfs(refs, hyps) -> float:
    _check_parallel(refs, hyps)
    if not refs:
        raise ArgumentError("MFS of an empty corpus")
    return sum(f_score(r, h) for r, h in zip(refs, hyps)) / len(refs)


def mld(refs, hyps) -> float:
    _check_parallel(refs, hyps)
    if not refs:
        raise ArgumentError("MLD of an empty corpus")
    return sum(edit_distance(h, r) for r, h in zip(refs, hyps)) / len(refs)


# The columns each task reports, in table order.
TASK_METRICS = {
    "g2p": ("WER", "PER"),
    "translit": ("ACC", "MFS"),
    "inflection": ("ACC", "MLD"),
    "synthetic": ("ACC", "MLD"),
}


@dataclass
class EvalRecord:
    source: str
    reference: str
    hypothesis: str
    distance: int


@dataclass
class EvalReport:
    records: list[EvalRecord] = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)

    def summary_line(self, task: str) -> str:
        cols = TASK_METRICS[task]
        return "\t".join(f"{c}={format_metric(c, self.aggregates[c])}" for c in cols)

    def summary_tsv(self, task: str) -> str:
        cols = TASK_METRICS[task]
        return "\t".join(cols) + "\n" + "\t".join(format_metric(c, self.aggregates[c]) for c in cols) + "\n"

    def records_tsv(self) -> str:
        lines = ["source\treference\thypothesis\tedit_distance"]
        lines += [f"{r.source}\t{r.reference}\t{r.hypothesis}\t{r.distance}" for r in self.records]
        return "\n".join(lines) + "\n"

    def write(self, out_dir, task: str) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "predictions.tsv").write_text(self.records_tsv(), encoding="utf-8")
        (out / "summary.tsv").write_text(self.summary_tsv(task), encoding="utf-8")


def format_metric(name: str, value: float) -> str:
    # printed as percentages: WER (stored as a fraction) and ACC
    if name == "WER":
        return f"{100.0 * value:.1f}"
    if name == "ACC":
        return f"{value:.1f}"
    return f"{value:.3f}"


def evaluate(refs, hyps, sources=None, joiner: str = "") -> EvalReport:
    """All five metrics plus per-example records.

    ``WER`` is stored as a fraction and ``ACC`` in percent, as the individual
    functions return them.
    """
    _check_parallel(refs, hyps)
    sources = sources if sources is not None else [""] * len(refs)
    records = [
        EvalRecord(
            joiner.join(s) if not isinstance(s, str) else s,
            joiner.join(r), joiner.join(h), edit_distance(h, r),
        )
        for s, r, h in zip(sources, refs, hyps)
    ]
    agg = {
        "WER": wer(refs, hyps),
        "PER": per(refs, hyps),
        "PER_MEAN": per_mean(refs, hyps),
        "ACC": acc(refs, hyps),
        "MFS": mfs(refs, hyps),
        "MLD": mld(refs, hyps),
    }
    return EvalReport(records, agg)
