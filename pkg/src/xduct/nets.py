"""LSTM cell, bidirectional encoder and (optionally input-fed) decoder.

Shapes follow the "input-major" convention: a weight used as ``x @ W`` is
stored as ``(fan_in, fan_out)``.  The four LSTM gates are packed in the
order input, forget, output, candidate.

Everything works on single sequences (vectors) and on batches (leading
batch axis) alike.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as tn
from .errors import ArgumentError, ContractError, EncodingError, ShapeError
from .tensor import Tensor

FEED_NONE = "none"
FEED_MERGE = "merge"
FEED_CONCAT = "concat"


def uniform_init(rng: np.random.Generator, fan_in: int, shape: tuple) -> np.ndarray:
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class LstmParams:
    w_x: Tensor  # d_in x 4d_h
    w_h: Tensor  # d_h x 4d_h
    b: Tensor  # 4d_h

    @property
    def d_in(self) -> int:
        return self.w_x.shape[0]

    @property
    def d_h(self) -> int:
        return self.w_h.shape[0]

    @classmethod
    def init(cls, d_in: int, d_h: int, rng: np.random.Generator) -> "LstmParams":
        b = np.zeros(4 * d_h)
        b[d_h : 2 * d_h] = 1.0  # forget gate
        return cls(
            Tensor(uniform_init(rng, d_in, (d_in, 4 * d_h)), requires_grad=True),
            Tensor(uniform_init(rng, d_h, (d_h, 4 * d_h)), requires_grad=True),
            Tensor(b, requires_grad=True),
        )

    def named(self, prefix: str) -> list[tuple[str, Tensor]]:
        return [(f"{prefix}.w_x", self.w_x), (f"{prefix}.w_h", self.w_h), (f"{prefix}.b", self.b)]


def _gates(z: Tensor, c_prev: Tensor, d_h: int) -> tuple[Tensor, Tensor]:
    sig = tn.sigmoid(z[..., : 3 * d_h])
    cand = tn.tanh(z[..., 3 * d_h :])
    c = sig[..., d_h : 2 * d_h] * c_prev + sig[..., :d_h] * cand
    h = sig[..., 2 * d_h :] * tn.tanh(c)
    return h, c


def lstm_step(p: LstmParams, x_t, h_prev, c_prev) -> tuple[Tensor, Tensor]:
    """One LSTM transition; returns ``(h_t, c_t)``."""
    x_t, h_prev, c_prev = tn._t(x_t), tn._t(h_prev), tn._t(c_prev)
    if x_t.shape[-1] != p.d_in or h_prev.shape[-1] != p.d_h or c_prev.shape[-1] != p.d_h:
        raise ShapeError(
            f"lstm_step: x {x_t.shape}, h {h_prev.shape}, c {c_prev.shape} "
            f"vs params d_in={p.d_in}, d_h={p.d_h}"
        )
    z = x_t @ p.w_x + h_prev @ p.w_h + p.b
    return _gates(z, c_prev, p.d_h)


def run_lstm(p: LstmParams, xs: Tensor) -> Tensor:
    """Fold an LSTM over ``xs`` (batch x time x d_in) from zero state."""
    batch, steps = xs.shape[0], xs.shape[1]
    zx = xs @ p.w_x + p.b
    h = Tensor(np.zeros((batch, p.d_h)))
    c = Tensor(np.zeros((batch, p.d_h)))
    outs = []
    for t in range(steps):
        h, c = _gates(zx[:, t] + h @ p.w_h, c, p.d_h)
        outs.append(h)
    return tn.stack(outs, axis=1)


@dataclass
class EncoderParams:
    embedding: Tensor  # |source vocab| x d_e
    forward: list[LstmParams]
    backward: list[LstmParams]

    @property
    def layers(self) -> int:
        return len(self.forward)

    @property
    def d_h(self) -> int:
        return self.forward[0].d_h

    @classmethod
    def init(cls, vocab_size: int, d_e: int, d_h: int, layers: int, rng) -> "EncoderParams":
        emb = Tensor(uniform_init(rng, vocab_size, (vocab_size, d_e)), requires_grad=True)
        fwd, bwd = [], []
        for layer in range(layers):
            d_in = d_e if layer == 0 else 2 * d_h
            fwd.append(LstmParams.init(d_in, d_h, rng))
            bwd.append(LstmParams.init(d_in, d_h, rng))
        return cls(emb, fwd, bwd)

    def named(self, prefix: str = "encoder") -> list[tuple[str, Tensor]]:
        out = [(f"{prefix}.embedding", self.embedding)]
        for k, p in enumerate(self.forward):
            out += p.named(f"{prefix}.fwd.{k}")
        for k, p in enumerate(self.backward):
            out += p.named(f"{prefix}.bwd.{k}")
        return out


def _reverse_index(lengths: np.ndarray, steps: int) -> tuple[np.ndarray, np.ndarray]:
    # Reverses each row within its own length; padding stays in place.
    t = np.arange(steps)[None, :]
    rev = np.where(t < lengths[:, None], lengths[:, None] - 1 - t, t)
    return np.arange(len(lengths))[:, None], rev


def encode_batch(
    p: EncoderParams,
    x: np.ndarray,
    lengths: np.ndarray,
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Encode a padded batch ``x`` (batch x time) into ``batch x time x 2d_h``.

    Rows past a sequence's length hold unspecified values and must be
    masked by the caller.
    """
    x = np.asarray(x, dtype=np.intp)
    lengths = np.asarray(lengths, dtype=np.intp)
    if x.ndim != 2 or x.shape[1] == 0 or (lengths < 1).any():
        raise ArgumentError("encode: empty source sequence")
    vocab = p.embedding.shape[0]
    if (x < 0).any() or (x >= vocab).any():
        raise EncodingError(f"encode: index outside source vocabulary of size {vocab}")
    rows, rev = _reverse_index(lengths, x.shape[1])
    layer_in = tn.dropout(p.embedding[x], dropout_rate, rng)
    for fwd, bwd in zip(p.forward, p.backward):
        h_f = run_lstm(fwd, layer_in)
        h_b = run_lstm(bwd, layer_in[rows, rev])[rows, rev]
        layer_in = tn.dropout(tn.concat([h_f, h_b], axis=-1), dropout_rate, rng)
    return layer_in


def encode(p: EncoderParams, x, dropout_rate: float = 0.0, rng=None) -> Tensor:
    """Encode one source index sequence into a ``|x| x 2d_h`` matrix."""
    x = np.asarray(x, dtype=np.intp)
    if x.ndim != 1 or len(x) == 0:
        raise ArgumentError("encode: empty source sequence")
    return encode_batch(p, x[None, :], np.array([len(x)]), dropout_rate, rng)[0]


@dataclass
class DecoderParams:
    embedding: Tensor  # |target vocab| x d_e
    layers: list[LstmParams]
    feed: str = FEED_NONE
    merge: Tensor | None = None  # (d_e + d_s) x d_e when feed == "merge"

    def __post_init__(self):
        if (self.feed == FEED_MERGE) != (self.merge is not None):
            raise ContractError("decoder: merge map present iff feed mode is 'merge'")

    @property
    def input_fed(self) -> bool:
        return self.feed != FEED_NONE

    @property
    def d_h(self) -> int:
        return self.layers[-1].d_h

    @property
    def d_e(self) -> int:
        return self.embedding.shape[1]

    @classmethod
    def init(
        cls, vocab_size: int, d_e: int, d_h: int, layers: int, rng,
        feed: str = FEED_NONE, d_s: int = 0,
    ) -> "DecoderParams":
        emb = Tensor(uniform_init(rng, vocab_size, (vocab_size, d_e)), requires_grad=True)
        d_first = d_e + d_s if feed == FEED_CONCAT else d_e
        stack = [LstmParams.init(d_first if k == 0 else d_h, d_h, rng) for k in range(layers)]
        merge = None
        if feed == FEED_MERGE:
            merge = Tensor(uniform_init(rng, d_e + d_s, (d_e + d_s, d_e)), requires_grad=True)
        return cls(emb, stack, feed, merge)

    def named(self, prefix: str = "decoder") -> list[tuple[str, Tensor]]:
        out = [(f"{prefix}.embedding", self.embedding)]
        for k, p in enumerate(self.layers):
            out += p.named(f"{prefix}.lstm.{k}")
        if self.merge is not None:
            out.append((f"{prefix}.merge", self.merge))
        return out


@dataclass
class DecoderState:
    h: list[Tensor] = field(default_factory=list)
    c: list[Tensor] = field(default_factory=list)

    @property
    def top(self) -> Tensor:
        return self.h[-1]


def initial_state(p: DecoderParams, batch: int | None = None) -> DecoderState:
    shape = (p.d_h,) if batch is None else (batch, p.d_h)
    zeros = [Tensor(np.zeros(shape)) for _ in p.layers]
    return DecoderState(list(zeros), list(zeros))


def decoder_step(
    p: DecoderParams,
    y_prev,
    state: DecoderState,
    feed: Tensor | None = None,
    dropout_rate: float = 0.0,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, DecoderState]:
    """Advance the decoder by one symbol.

    ``y_prev`` is an index (or batch of indices); ``feed`` is the previous
    attentional vector and must be given exactly when the decoder is
    input-fed.
    """
    if p.input_fed and feed is None:
        raise ContractError("decoder_step: input-fed decoder requires the previous attentional vector")
    if not p.input_fed and feed is not None:
        raise ContractError("decoder_step: plain decoder does not accept a fed vector")
    inp = tn.dropout(p.embedding[np.asarray(y_prev, dtype=np.intp)], dropout_rate, rng)
    if p.feed == FEED_MERGE:
        inp = tn.concat([inp, feed], axis=-1) @ p.merge
    elif p.feed == FEED_CONCAT:
        inp = tn.concat([inp, feed], axis=-1)
    hs, cs = [], []
    for k, layer in enumerate(p.layers):
        h, c = lstm_step(layer, inp, state.h[k], state.c[k])
        hs.append(h)
        cs.append(c)
        inp = tn.dropout(h, dropout_rate, rng)
    return inp, DecoderState(hs, cs)
