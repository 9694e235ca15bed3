"""The four attention architectures behind one likelihood interface.

=========  ==============  ===========================================
kind       attention       decoder
=========  ==============  ===========================================
soft-if    soft            input-fed (attentional vector fed back)
hard-if    hard            input-fed, trained with REINFORCE
soft       soft            plain
hard       hard            plain, exact marginalization
=========  ==============  ===========================================

``hard`` with ``reinforce=True`` trains with the sampling estimator but is
still evaluated with the exact marginal.
"""

from __future__ import annotations

import enum
from collections import OrderedDict
from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np

from . import alignment as al
from . import tensor as tn
from .batch import Batch, collate
from .data import Vocabulary
from .errors import ConfigError, ContractError, ShapeError
from .nets import (
    FEED_CONCAT,
    FEED_MERGE,
    FEED_NONE,
    DecoderParams,
    DecoderState,
    EncoderParams,
    decoder_step,
    encode_batch,
    initial_state,
    uniform_init,
)
from .seeding import named_rng
from .tensor import Tensor


class Architecture(str, enum.Enum):
    SOFT_INPUT_FED = "soft-if"
    HARD_INPUT_FED = "hard-if"
    SOFT = "soft"
    HARD = "hard"

    @property
    def is_hard(self) -> bool:
        return self in (Architecture.HARD, Architecture.HARD_INPUT_FED)

    @property
    def input_fed(self) -> bool:
        return self in (Architecture.SOFT_INPUT_FED, Architecture.HARD_INPUT_FED)


PRESETS = {
    "small": dict(d_e=100, d_h=200, enc_layers=1, d_dec=200, dec_layers=1, dropout=0.2, samples=2),
    "large": dict(d_e=200, d_h=400, enc_layers=2, d_dec=400, dec_layers=1, dropout=0.4, samples=4),
}


@dataclass
class ModelConfig:
    d_e: int = 100
    d_h: int = 200  # per encoder direction
    enc_layers: int = 1
    d_dec: int = 200
    dec_layers: int = 1
    dropout: float = 0.2
    arch: Architecture = Architecture.HARD
    d_s: int | None = None  # None: derived from the architecture
    reinforce: bool = False
    samples: int = 2
    uncontrolled: bool = False

    def __post_init__(self):
        try:
            self.arch = Architecture(self.arch)
        except ValueError:
            raise ConfigError(f"unknown architecture {self.arch!r}") from None

    @classmethod
    def preset(cls, name: str, **overrides) -> "ModelConfig":
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        return cls(**{**PRESETS[name], **overrides})

    @property
    def uses_reinforce(self) -> bool:
        return self.arch is Architecture.HARD_INPUT_FED or (self.arch is Architecture.HARD and self.reinforce)

    @property
    def output_input_width(self) -> int:
        return self.d_dec + 2 * self.d_h

    def validate(self) -> None:
        for name in ("d_e", "d_h", "enc_layers", "d_dec", "dec_layers", "samples"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.d_s is not None and self.d_s < 1:
            raise ConfigError(f"d_s must be positive, got {self.d_s}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.reinforce and not self.arch.is_hard:
            raise ConfigError("REINFORCE training applies to hard attention only")
        if self.uncontrolled and self.arch is not Architecture.SOFT_INPUT_FED:
            raise ConfigError("the uncontrolled variant exists only for soft-if")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["arch"] = self.arch.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def resolve_d_s(config: ModelConfig, tgt_vocab_size: int) -> int:
    """Width of the attentional layer.

    Defaults to ``d_dec + 2 d_h``.  The parameter-controlled soft-if model
    shrinks it so that merge map + S + W hold as many weights as S + W do
    in the other models (rounded down).
    """
    if config.d_s is not None:
        return config.d_s
    base = config.output_input_width
    if config.arch is Architecture.SOFT_INPUT_FED and not config.uncontrolled:
        width = base + tgt_vocab_size
        return (base * width - config.d_e**2) // (width + config.d_e)
    return base


def feed_mode(config: ModelConfig) -> str:
    if not config.arch.input_fed:
        return FEED_NONE
    return FEED_CONCAT if config.uncontrolled else FEED_MERGE


class TransducerModel:
    """Parameters of one transducer plus the configuration that wires them."""

    def __init__(
        self,
        config: ModelConfig,
        src_vocab: Vocabulary,
        tgt_vocab: Vocabulary,
        encoder: EncoderParams,
        decoder: DecoderParams,
        T: Tensor,
        S: Tensor,
        W: Tensor,
    ):
        self.config = config
        self.src_vocab = src_vocab
        self.tgt_vocab = tgt_vocab
        self.encoder = encoder
        self.decoder = decoder
        self.T, self.S, self.W = T, S, W
        named = encoder.named() + decoder.named() + [
            ("attention.T", T), ("output.S", S), ("output.W", W)
        ]
        self.params: "OrderedDict[str, Tensor]" = OrderedDict()
        for name, p in named:
            if name in self.params:
                raise ConfigError(f"duplicate parameter name {name}")
            p.name = name
            self.params[name] = p

    @property
    def arch(self) -> Architecture:
        return self.config.arch

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def state_arrays(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((k, p.data.copy()) for k, p in self.params.items())

    def load_arrays(self, arrays) -> None:
        if list(arrays) != list(self.params):
            raise ShapeError("parameter names do not match the model registry")
        for name, arr in arrays.items():
            p = self.params[name]
            if arr.shape != p.shape:
                raise ShapeError(f"{name}: shape {arr.shape} vs {p.shape}")
            p.data = np.array(arr, dtype=np.float64)

    def __repr__(self) -> str:
        return f"TransducerModel(arch={self.arch.value}, params={parameter_count(self)})"


def build_model(
    config: ModelConfig, src_vocab: Vocabulary, tgt_vocab: Vocabulary, seed: int
) -> TransducerModel:
    """Initialize a model deterministically from ``seed``."""
    config.validate()
    if len(src_vocab) == 0 or len(tgt_vocab) == 0:
        raise ConfigError("vocabularies must be non-empty")
    d_s = resolve_d_s(config, len(tgt_vocab))
    config = replace(config, d_s=d_s)
    rng = named_rng(seed, "init")
    encoder = EncoderParams.init(len(src_vocab), config.d_e, config.d_h, config.enc_layers, rng)
    decoder = DecoderParams.init(
        len(tgt_vocab), config.d_e, config.d_dec, config.dec_layers, rng, feed_mode(config), d_s
    )
    width = config.output_input_width
    T = Tensor(uniform_init(rng, config.d_dec, (config.d_dec, 2 * config.d_h)), requires_grad=True)
    S = Tensor(uniform_init(rng, width, (width, d_s)), requires_grad=True)
    W = Tensor(uniform_init(rng, d_s, (d_s, len(tgt_vocab))), requires_grad=True)
    return TransducerModel(config, src_vocab, tgt_vocab, encoder, decoder, T, S, W)


def parameter_count(model: TransducerModel) -> int:
    return int(sum(p.size for p in model.params.values()))


# -- likelihood ----------------------------------------------------------

@dataclass
class ForwardResult:
    alpha: Tensor  # B x Ly x Lx
    h_dec: Tensor  # B x Ly x d_dec
    step_log_probs: Tensor | None = None  # soft models: log p(y_i | y_<i, x), padded steps 0
    tables: al.AlignmentTables | None = None  # hard models

    def log_likelihood(self) -> Tensor:
        if self.tables is not None:
            return al.marginalize(self.tables)
        return self.step_log_probs.sum(axis=-1)


def _forced_alpha(alpha: np.ndarray) -> tuple[Tensor, Tensor]:
    alpha = np.asarray(alpha, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return Tensor(alpha), Tensor(np.log(alpha))


def forward(
    model: TransducerModel,
    batch: Batch,
    rng: np.random.Generator | None = None,
    alpha: np.ndarray | None = None,
) -> ForwardResult:
    """Run encoder and decoder over a batch with teacher forcing.

    ``rng`` enables dropout.  ``alpha`` (``B x Ly x Lx``) overrides the
    alignment distribution, for analysis.
    """
    cfg = model.config
    drop = cfg.dropout if rng is not None else 0.0
    h_enc = encode_batch(model.encoder, batch.src, batch.src_len, drop, rng)
    y_in, y_out, mask = batch.tgt_in, batch.tgt, batch.tgt_mask
    B, Ly = y_out.shape
    if alpha is not None and alpha.shape != (B, Ly, batch.src.shape[1]):
        raise ShapeError(f"forced alpha {alpha.shape} vs {(B, Ly, batch.src.shape[1])}")
    if cfg.arch.input_fed:
        return _forward_input_fed(model, h_enc, batch, drop, rng, alpha)

    state = initial_state(model.decoder, B)
    hs = []
    for i in range(Ly):
        h, state = decoder_step(model.decoder, y_in[:, i], state, None, drop, rng)
        hs.append(h)
    h_dec = tn.stack(hs, axis=1)
    scores = al.attention_scores(h_dec, h_enc, model.T, batch.src_mask)
    if alpha is not None:
        alpha_t, log_alpha = _forced_alpha(alpha)
    else:
        log_alpha = al.log_alignment_distribution(scores)
        alpha_t = al.alignment_distribution(scores)
    if cfg.arch.is_hard:
        logp = al.pairwise_log_probs(h_dec, h_enc, model.S, model.W)
        emit = tn.pick(logp, np.broadcast_to(y_out[..., None], logp.shape[:-1]))
        return ForwardResult(alpha_t, h_dec, tables=al.AlignmentTables(log_alpha, emit, mask))
    ctx = al.soft_context(alpha_t, h_enc)
    logp = tn.log_softmax(al.attentional_vector(h_dec, ctx, model.S) @ model.W, axis=-1)
    steps = tn.masked_fill(tn.pick(logp, y_out), ~mask, 0.0)
    return ForwardResult(alpha_t, h_dec, step_log_probs=steps)


def _forward_input_fed(model, h_enc, batch, drop, rng, alpha) -> ForwardResult:
    cfg = model.config
    y_in, y_out, mask = batch.tgt_in, batch.tgt, batch.tgt_mask
    B, Ly = y_out.shape
    feed = Tensor(np.zeros((B, cfg.d_s)))
    state = initial_state(model.decoder, B)
    hs, alphas, log_alphas, outs = [], [], [], []
    for i in range(Ly):
        h, state = decoder_step(model.decoder, y_in[:, i], state, feed, drop, rng)
        h3 = h.reshape(B, 1, cfg.d_dec)
        scores = al.attention_scores(h3, h_enc, model.T, batch.src_mask)
        if alpha is not None:
            a_i, la_i = _forced_alpha(alpha[:, i : i + 1])
        else:
            a_i = al.alignment_distribution(scores)
            la_i = al.log_alignment_distribution(scores)
        cbar = al.attentional_vector(h3, al.soft_context(a_i, h_enc), model.S)
        if cfg.arch.is_hard:
            logp = al.pairwise_log_probs(h3, h_enc, model.S, model.W)
            tgt = np.broadcast_to(y_out[:, i : i + 1, None], logp.shape[:-1])
            outs.append(tn.pick(logp, tgt))
        else:
            logp = tn.log_softmax(cbar @ model.W, axis=-1)
            outs.append(tn.pick(logp, y_out[:, i : i + 1]))
        hs.append(h3)
        alphas.append(a_i)
        log_alphas.append(la_i)
        feed = cbar.reshape(B, cfg.d_s)
    h_dec = tn.concat(hs, axis=1)
    alpha_t = tn.concat(alphas, axis=1)
    if cfg.arch.is_hard:
        tables = al.AlignmentTables(tn.concat(log_alphas, axis=1), tn.concat(outs, axis=1), mask)
        return ForwardResult(alpha_t, h_dec, tables=tables)
    steps = tn.masked_fill(tn.concat(outs, axis=1), ~mask, 0.0)
    return ForwardResult(alpha_t, h_dec, step_log_probs=steps)


def batch_log_likelihood(model: TransducerModel, batch: Batch, alpha=None) -> Tensor:
    """Exact per-sequence log p(y | x) (no dropout, no sampling)."""
    return forward(model, batch, None, alpha).log_likelihood()


def sequence_log_likelihood(model: TransducerModel, x: Sequence[int], y: Sequence[int], alpha=None) -> Tensor:
    """log p(y | x) for one pair; ``y`` should end with EOS."""
    batch = collate([(list(x), list(y))])
    forced = None if alpha is None else np.asarray(alpha)[None]
    return batch_log_likelihood(model, batch, forced)[0]


def batch_loss(
    model: TransducerModel,
    batch: Batch,
    dropout_rng: np.random.Generator | None = None,
    sample_rng: np.random.Generator | None = None,
    baseline: al.MovingBaseline | None = None,
) -> Tensor:
    """Mean per-sequence training loss.

    Negative log-likelihood for exactly marginalized models; the REINFORCE
    surrogate (``sample_rng`` and ``baseline`` required) otherwise.
    """
    res = forward(model, batch, dropout_rng)
    if not model.config.uses_reinforce:
        return res.log_likelihood().mean() * -1.0
    if sample_rng is None or baseline is None:
        raise ContractError("REINFORCE training needs a sample generator and a baseline")
    probs = np.exp(res.tables.log_alpha.data)
    samples = [al.sample_alignment(probs, sample_rng) for _ in range(model.config.samples)]
    return al.reinforce_objective(res.tables, samples, baseline).mean()


# -- incremental decoding ------------------------------------------------

@dataclass
class DecodeState:
    h_enc: Tensor
    src_mask: np.ndarray
    dec: DecoderState
    feed: Tensor | None


def start_decoding(model: TransducerModel, src: np.ndarray, src_len: np.ndarray, src_mask: np.ndarray) -> DecodeState:
    h_enc = encode_batch(model.encoder, src, src_len)
    B = src.shape[0]
    feed = Tensor(np.zeros((B, model.config.d_s))) if model.arch.input_fed else None
    return DecodeState(h_enc, src_mask, initial_state(model.decoder, B), feed)


def next_symbol_distribution(
    model: TransducerModel, st: DecodeState, y_prev: np.ndarray
) -> tuple[np.ndarray, np.ndarray, DecodeState]:
    """Log-distribution over the next symbol and the step's alignment distribution.

    Soft models use the single softmax over the context; hard models use the
    mixture ``sum_j alpha_j p(y | a = j)``.
    """
    cfg = model.config
    B = len(y_prev)
    h, dec = decoder_step(model.decoder, y_prev, st.dec, st.feed)
    h3 = h.reshape(B, 1, cfg.d_dec)
    scores = al.attention_scores(h3, st.h_enc, model.T, st.src_mask)
    alpha = al.alignment_distribution(scores)
    cbar = None
    if cfg.arch.input_fed or not cfg.arch.is_hard:
        cbar = al.attentional_vector(h3, al.soft_context(alpha, st.h_enc), model.S)
    if cfg.arch.is_hard:
        logp = al.pairwise_log_probs(h3, st.h_enc, model.S, model.W)[:, 0]
        log_alpha = al.log_alignment_distribution(scores)[:, 0]
        dist = tn.logsumexp(log_alpha.reshape(B, -1, 1) + logp, axis=1)
    else:
        dist = tn.log_softmax(cbar @ model.W, axis=-1)[:, 0]
    feed = cbar.reshape(B, cfg.d_s) if cfg.arch.input_fed else None
    return dist.data, alpha.data[:, 0], DecodeState(st.h_enc, st.src_mask, dec, feed)
