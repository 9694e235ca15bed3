"""Padded mini-batches of index sequences."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import BOS, PAD
from .errors import ArgumentError


@dataclass
class Batch:
    src: np.ndarray  # B x Lx, PAD-filled
    src_mask: np.ndarray  # True at real symbols
    src_len: np.ndarray
    tgt: np.ndarray  # B x Ly output symbols (EOS included), PAD-filled
    tgt_mask: np.ndarray
    tgt_len: np.ndarray
    ids: np.ndarray  # position of each row in the source dataset

    @property
    def size(self) -> int:
        return len(self.src)

    @property
    def tgt_in(self) -> np.ndarray:
        """Decoder inputs: BOS followed by the targets shifted right."""
        out = np.full_like(self.tgt, PAD)
        out[:, 0] = BOS
        out[:, 1:] = self.tgt[:, :-1]
        return np.where(self.tgt_mask, out, PAD)


def _pad(seqs: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    lengths = np.array([len(s) for s in seqs], dtype=np.intp)
    if (lengths == 0).any():
        raise ArgumentError("empty sequence in batch")
    out = np.full((len(seqs), lengths.max()), PAD, dtype=np.intp)
    for k, s in enumerate(seqs):
        out[k, : len(s)] = s
    mask = np.arange(out.shape[1])[None, :] < lengths[:, None]
    return out, mask, lengths


def collate(pairs: Sequence[tuple], ids: Sequence[int] | None = None) -> Batch:
    """Pad ``(source indices, target indices)`` pairs into one :class:`Batch`."""
    if not pairs:
        raise ArgumentError("cannot collate an empty batch")
    src, src_mask, src_len = _pad([p[0] for p in pairs])
    tgt, tgt_mask, tgt_len = _pad([p[1] for p in pairs])
    ids = np.arange(len(pairs)) if ids is None else np.asarray(ids, dtype=np.intp)
    return Batch(src, src_mask, src_len, tgt, tgt_mask, tgt_len, ids)


def collate_sources(sources: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return _pad(sources)
