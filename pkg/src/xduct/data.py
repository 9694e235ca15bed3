"""Task file readers, vocabularies, splits and synthetic transduction tasks.

File formats (UTF-8, one example per line, tab-separated):

* ``g2p``         ``word<TAB>P H O N E S``   (phonemes split on whitespace)
* ``translit``    ``source<TAB>target``      (both split into characters)
* ``inflection``  ``lemma<TAB>form<TAB>T1;T2;...``  (tags prepended to the source)
* ``synthetic``   same layout as ``translit``
"""

from __future__ import annotations

import enum
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ArgumentError, DataFormatError, SizeError

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<s>", "</s>", "<unk>")


class TaskKind(str, enum.Enum):
    G2P = "g2p"
    TRANSLIT = "translit"
    INFLECTION = "inflection"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class Example:
    source: tuple
    target: tuple
    n_tags: int = 0  # leading source symbols that are morphological subtags

    def __post_init__(self):
        if not self.source or not self.target:
            raise ArgumentError("examples need non-empty source and target")


@dataclass
class Dataset:
    task: TaskKind
    train: list = field(default_factory=list)
    dev: list = field(default_factory=list)
    test: list = field(default_factory=list)


class Vocabulary:
    """Symbol <-> index map; indices 0..3 are PAD, BOS, EOS, UNK."""

    def __init__(self, symbols: Iterable[str] = ()):
        self.symbols: list[str] = list(RESERVED)
        self._index: dict[str, int] = {s: i for i, s in enumerate(RESERVED)}
        for s in symbols:
            self.add(s)

    def add(self, symbol: str) -> int:
        if symbol in RESERVED:
            raise DataFormatError(f"symbol {symbol!r} collides with a reserved entry")
        if symbol not in self._index:
            self._index[symbol] = len(self.symbols)
            self.symbols.append(symbol)
        return self._index[symbol]

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._index

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.symbols == other.symbols

    def index(self, symbol: str) -> int:
        return self._index.get(symbol, UNK)

    def encode(self, symbols: Iterable[str]) -> list[int]:
        return [self._index.get(s, UNK) for s in symbols]

    def decode(self, indices: Iterable[int]) -> list[str]:
        return [self.symbols[int(i)] for i in indices]

    def data_symbols(self) -> list[str]:
        return self.symbols[len(RESERVED):]

    @classmethod
    def from_symbols(cls, data_symbols: Sequence[str]) -> "Vocabulary":
        return cls(data_symbols)


def build_vocab(examples: Sequence[Example], side: str) -> Vocabulary:
    """Vocabulary of ``side`` ('source' or 'target') in order of first occurrence."""
    if side not in ("source", "target"):
        raise ArgumentError(f"side must be 'source' or 'target', got {side!r}")
    if not examples:
        raise ArgumentError("build_vocab: no examples")
    vocab = Vocabulary()
    for ex in examples:
        for s in getattr(ex, side):
            vocab.add(s)
    return vocab


def encode_example(ex: Example, src_vocab: Vocabulary, tgt_vocab: Vocabulary) -> tuple[list, list]:
    """Index sequences for one example; EOS is appended to the target."""
    return src_vocab.encode(ex.source), tgt_vocab.encode(ex.target) + [EOS]


def _nfc(s: str) -> str:
    return unicodedata.normalize("NFC", s)


def tokenize_line(line: str, task: TaskKind) -> Example:
    """Parse one non-blank line; raises ``DataFormatError`` on malformed input."""
    task = TaskKind(task)
    cols = _nfc(line.rstrip("\r\n")).split("\t")
    if task is TaskKind.INFLECTION:
        if len(cols) != 3 or not cols[0] or not cols[1] or not cols[2]:
            raise DataFormatError("expected lemma<TAB>form<TAB>tags")
        tags = tuple(t for t in cols[2].split(";") if t)
        return Example(tags + tuple(cols[0]), tuple(cols[1]), n_tags=len(tags))
    if len(cols) != 2 or not cols[0] or not cols[1].strip():
        raise DataFormatError("expected source<TAB>target")
    if task is TaskKind.G2P:
        return Example(tuple(cols[0]), tuple(cols[1].split()))
    return Example(tuple(cols[0]), tuple(cols[1]))


def detokenize(ex: Example, task: TaskKind) -> str:
    """Inverse of :func:`tokenize_line`."""
    task = TaskKind(task)
    if task is TaskKind.INFLECTION:
        tags = ";".join(ex.source[: ex.n_tags])
        return f"{''.join(ex.source[ex.n_tags:])}\t{''.join(ex.target)}\t{tags}"
    if task is TaskKind.G2P:
        return f"{''.join(ex.source)}\t{' '.join(ex.target)}"
    return f"{''.join(ex.source)}\t{''.join(ex.target)}"


def join_target(symbols: Sequence[str], task: TaskKind) -> str:
    return " ".join(symbols) if TaskKind(task) is TaskKind.G2P else "".join(symbols)


def read_tsv(path, task: TaskKind) -> list[Example]:
    """Read a task file; blank lines are skipped.

    Raises ``DataFormatError`` naming the file and line for malformed rows,
    and for a zero-byte file. A file of blank lines yields no examples.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if not text:
        raise DataFormatError(f"{path}: empty file")
    examples = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            examples.append(tokenize_line(line, task))
        except (DataFormatError, ArgumentError) as exc:
            raise DataFormatError(f"{path}:{lineno}: {exc}") from None
    return examples


def write_tsv(examples: Iterable[Example], path, task: TaskKind) -> None:
    lines = [detokenize(ex, task) for ex in examples]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def require_examples(examples: Sequence[Example], what: str = "dataset") -> None:
    if not examples:
        raise SizeError(f"{what} is empty")


def split_g2p(examples: Sequence[Example], seed: int) -> tuple[list, list, list]:
    """Random 85/5/10 train/dev/test split."""
    n = len(examples)
    if n < 20:
        raise SizeError(f"split_g2p needs at least 20 examples, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_dev, n_test = int(round(0.05 * n)), int(round(0.10 * n))
    dev = [examples[i] for i in order[:n_dev]]
    test = [examples[i] for i in order[n_dev : n_dev + n_test]]
    train = [examples[i] for i in order[n_dev + n_test :]]
    return train, dev, test


# -- synthetic tasks -----------------------------------------------------

REDUP_PREFIX = 3
_ALPHABET = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"


def reduplicate(s: str) -> str:
    """Prepend a copy of the first three symbols: ``mejr -> mejmejr``."""
    return s[:REDUP_PREFIX] + s


SYNTHETIC_RULES = {
    "copy": lambda s: s,
    "reverse": lambda s: s[::-1],
    "reduplicate": reduplicate,
}


def gen_synthetic(
    task: str,
    n: int,
    max_len: int,
    alphabet_size: int,
    seed: int,
    min_len: int | None = None,
    n_dev: int | None = None,
    n_test: int | None = None,
) -> Dataset:
    """Random strings mapped through ``copy``, ``reverse`` or ``reduplicate``.

    ``n`` training pairs plus ``n_dev``/``n_test`` held-out pairs (default
    ``n // 10`` each); no source string appears in two splits.
    """
    if task not in SYNTHETIC_RULES:
        raise ArgumentError(f"unknown synthetic task {task!r}")
    if min_len is None:
        min_len = REDUP_PREFIX if task == "reduplicate" else 1
    if task == "reduplicate" and (max_len < REDUP_PREFIX or min_len < REDUP_PREFIX):
        raise ArgumentError("reduplication needs strings of length >= 3")
    if not 1 <= min_len <= max_len:
        raise ArgumentError(f"bad length range {min_len}..{max_len}")
    if not 1 <= alphabet_size <= len(_ALPHABET):
        raise ArgumentError(f"alphabet size must be in 1..{len(_ALPHABET)}")
    n_dev = n // 10 if n_dev is None else n_dev
    n_test = n // 10 if n_test is None else n_test
    total = n + n_dev + n_test
    possible = sum(alphabet_size**L for L in range(min_len, max_len + 1))
    if possible < total:
        raise SizeError(f"only {possible} distinct strings available, {total} requested")
    rng = np.random.default_rng(seed)
    letters = _ALPHABET[:alphabet_size]
    seen: set[str] = set()
    strings: list[str] = []
    while len(strings) < total:
        s = "".join(letters[k] for k in rng.integers(0, alphabet_size, rng.integers(min_len, max_len + 1)))
        if s not in seen:
            seen.add(s)
            strings.append(s)
    rule = SYNTHETIC_RULES[task]
    exs = [Example(tuple(s), tuple(rule(s))) for s in strings]
    return Dataset(TaskKind.SYNTHETIC, exs[:n], exs[n : n + n_dev], exs[n + n_dev :])
