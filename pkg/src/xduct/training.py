"""Mini-batch maximum-likelihood training with Adam and a halving LR schedule.

Checkpoint layout (all integers little-endian)::

    b"XDCK"                      magic
    uint32                       format version
    uint64                       header length N
    N bytes                      UTF-8 JSON header
    payload                      float64 LE tensors, in header order
    uint32                       CRC-32 of everything before it

The header holds the model config, both vocabularies, the tensor table
(name, shape) for parameters and Adam moments, the epoch and the dev
history.
"""

from __future__ import annotations

import json
import logging
import math
import struct
import zlib
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import tensor as tn
from .alignment import MovingBaseline
from .batch import Batch, collate
from .data import Example, Vocabulary, encode_example, require_examples
from .errors import ArgumentError, CheckpointError, ConfigError, NonFiniteError, ShapeError
from .models import Architecture, ModelConfig, TransducerModel, batch_log_likelihood, batch_loss, build_model
from .seeding import named_rng

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
MAGIC = b"XDCK"


@dataclass
class TrainConfig:
    lr: float = 1e-3
    lr_floor: float = 1e-5
    max_epochs: int = 50
    batch_size: int = 20
    clip_norm: float | None = None  # the large preset uses 5
    seed: int = 0
    checked: bool = False
    eval_batch_size: int = 100

    def validate(self) -> None:
        if not 0 < self.lr_floor < self.lr:
            raise ConfigError(f"need 0 < lr_floor < lr, got {self.lr_floor}, {self.lr}")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be positive")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive")


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params, grads, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update of ``params`` (name -> Tensor) in place.

    Parameters whose gradient is missing are treated as having zero gradient.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        elif g.shape != p.shape:
            raise ShapeError(f"adam_step: gradient {g.shape} vs parameter {name} {p.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name], state.v[name] = m, v
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def make_batches(pairs: Sequence[tuple], batch_size: int, rng: np.random.Generator | None) -> list[Batch]:
    """Shuffle (when ``rng`` is given) and cut into padded batches."""
    if not pairs:
        raise ArgumentError("make_batches: empty dataset")
    order = np.arange(len(pairs)) if rng is None else rng.permutation(len(pairs))
    out = []
    for start in range(0, len(order), batch_size):
        ids = order[start : start + batch_size]
        out.append(collate([pairs[i] for i in ids], ids))
    return out


@dataclass
class Checkpoint:
    config: ModelConfig
    src_vocab: Vocabulary
    tgt_vocab: Vocabulary
    params: "OrderedDict[str, np.ndarray]"
    adam: AdamState | None = None
    epoch: int = 0
    history: list = field(default_factory=list)
    task: str | None = None
    version: int = FORMAT_VERSION

    @classmethod
    def from_model(cls, model: TransducerModel, **kw) -> "Checkpoint":
        return cls(model.config, model.src_vocab, model.tgt_vocab, model.state_arrays(), **kw)

    def to_model(self) -> TransducerModel:
        model = build_model(self.config, self.src_vocab, self.tgt_vocab, seed=0)
        model.load_arrays(self.params)
        return model


def _copy_adam(state: AdamState) -> AdamState:
    return AdamState(
        {k: v.copy() for k, v in state.m.items()},
        {k: v.copy() for k, v in state.v.items()},
        state.step, state.beta1, state.beta2, state.eps,
    )


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    tensors = [("param", k, v) for k, v in ckpt.params.items()]
    if ckpt.adam is not None:
        tensors += [("adam_m", k, v) for k, v in ckpt.adam.m.items()]
        tensors += [("adam_v", k, v) for k, v in ckpt.adam.v.items()]
    header = {
        "config": ckpt.config.to_dict(),
        "src_vocab": ckpt.src_vocab.data_symbols(),
        "tgt_vocab": ckpt.tgt_vocab.data_symbols(),
        "tensors": [[kind, name, list(arr.shape)] for kind, name, arr in tensors],
        "adam": None if ckpt.adam is None else {
            "step": ckpt.adam.step, "beta1": ckpt.adam.beta1,
            "beta2": ckpt.adam.beta2, "eps": ckpt.adam.eps,
        },
        "epoch": ckpt.epoch,
        "history": ckpt.history,
        "task": ckpt.task,
    }
    head = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    body = bytearray(MAGIC)
    body += struct.pack("<IQ", ckpt.version, len(head))
    body += head
    for _, _, arr in tensors:
        body += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    body += struct.pack("<I", zlib.crc32(bytes(body)))
    Path(path).write_bytes(bytes(body))


def load_checkpoint(path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if len(raw) < 20 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not an xduct checkpoint")
    (crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(raw[:-4]) != crc:
        raise CheckpointError(f"{path}: checksum mismatch (truncated or corrupted)")
    version, n_head = struct.unpack("<IQ", raw[4:16])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    header = json.loads(raw[16 : 16 + n_head].decode("utf-8"))
    offset = 16 + n_head
    payload_end = len(raw) - 4
    groups = {"param": OrderedDict(), "adam_m": {}, "adam_v": {}}
    for kind, name, shape in header["tensors"]:
        n = int(np.prod(shape)) * 8
        if offset + n > payload_end:
            raise CheckpointError(f"{path}: payload shorter than header declares")
        arr = np.frombuffer(raw, dtype="<f8", count=n // 8, offset=offset).astype(np.float64)
        groups[kind][name] = arr.reshape(shape)
        offset += n
    if offset != payload_end:
        raise CheckpointError(f"{path}: {payload_end - offset} unexpected trailing bytes")
    adam = None
    if header["adam"] is not None:
        a = header["adam"]
        adam = AdamState(groups["adam_m"], groups["adam_v"], a["step"], a["beta1"], a["beta2"], a["eps"])
    return Checkpoint(
        ModelConfig.from_dict(header["config"]),
        Vocabulary(header["src_vocab"]),
        Vocabulary(header["tgt_vocab"]),
        groups["param"],
        adam,
        header["epoch"],
        header["history"],
        header["task"],
        version,
    )


def load_model(path, arch: Architecture | str | None = None, override: bool = False) -> TransducerModel:
    """Rebuild a model from a checkpoint, refusing an architecture mismatch.

    With ``override`` the stored parameters are rewired into ``arch``; this
    only works between architectures that share a parameter layout.
    """
    ckpt = load_checkpoint(path)
    if arch is not None and Architecture(arch) is not ckpt.config.arch:
        if not override:
            raise ConfigError(
                f"checkpoint holds a {ckpt.config.arch.value} model, not {Architecture(arch).value}"
            )
        ckpt.config.arch = Architecture(arch)
        ckpt.config.reinforce = False
    return ckpt.to_model()


# -- fitting -------------------------------------------------------------

def dev_log_likelihood(model: TransducerModel, pairs: Sequence[tuple], batch_size: int = 100) -> float:
    """Mean exact per-sequence log-likelihood over ``pairs``."""
    total = 0.0
    with tn.no_grad():
        for batch in make_batches(pairs, batch_size, None):
            total += float(batch_log_likelihood(model, batch).data.sum())
    return total / len(pairs)


def accuracy_metric(model: TransducerModel, examples: Sequence[Example]) -> float:
    """Sequence accuracy (%) of greedy decoding."""
    from .decode import greedy_decode_batch

    srcs = [model.src_vocab.encode(ex.source) for ex in examples]
    results = greedy_decode_batch(model, srcs)
    hits = sum(r.symbols == list(ex.target) for r, ex in zip(results, examples))
    return 100.0 * hits / len(examples)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    dev_loss: float
    dev_metric: float
    lr: float

    def as_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class FitResult:
    checkpoint: Checkpoint
    log: list[EpochRecord]

    @property
    def best_epoch(self) -> int:
        return self.checkpoint.epoch


def fit(
    model: TransducerModel,
    train: Sequence[Example],
    dev: Sequence[Example],
    config: TrainConfig,
    metric: Callable[[TransducerModel, Sequence[Example]], float] = accuracy_metric,
    task: str | None = None,
    on_epoch: Callable[[EpochRecord, bool, "TransducerModel"], None] | None = None,
    dev_loss_fn: Callable[[TransducerModel, Sequence[tuple]], float] | None = None,
) -> FitResult:
    """Train until the learning rate falls below the floor or epochs run out.

    After each epoch the dev log-likelihood drives the schedule (no strict
    improvement halves the LR) and ``metric`` (higher is better, ties broken
    by dev log-likelihood) selects the returned checkpoint.  The model is
    left holding the best parameters.
    """
    config.validate()
    require_examples(train, "training set")
    require_examples(dev, "development set")
    enc = lambda exs: [encode_example(ex, model.src_vocab, model.tgt_vocab) for ex in exs]
    train_pairs, dev_pairs = enc(train), enc(dev)
    shuffle_rng = named_rng(config.seed, "shuffle")
    dropout_rng = named_rng(config.seed, "dropout")
    sample_rng = named_rng(config.seed, "reinforce") if model.config.uses_reinforce else None
    baseline = MovingBaseline(0.9) if model.config.uses_reinforce else None
    dev_loss_fn = dev_loss_fn or (lambda m, pairs: dev_log_likelihood(m, pairs, config.eval_batch_size))
    params = model.params
    adam = AdamState()
    lr = config.lr
    best_key = (-math.inf, -math.inf)
    best_ll = -math.inf
    best: Checkpoint | None = None
    history: list[EpochRecord] = []

    with tn.checked(config.checked):
        for epoch in range(1, config.max_epochs + 1):
            losses = []
            for b_idx, batch in enumerate(make_batches(train_pairs, config.batch_size, shuffle_rng)):
                tn.zero_grad(params.values())
                try:
                    loss = batch_loss(model, batch, dropout_rng, sample_rng, baseline)
                    value = loss.item()
                    if config.checked and not math.isfinite(value):
                        raise NonFiniteError("non-finite loss")
                    tn.backward(loss)
                except NonFiniteError as exc:
                    raise NonFiniteError(f"epoch {epoch}, batch {b_idx}: {exc}") from None
                if config.clip_norm is not None:
                    tn.clip_global_norm(params.values(), config.clip_norm)
                adam_step(params, {k: p.grad for k, p in params.items()}, adam, lr)
                losses.append(value * batch.size)
            train_loss = sum(losses) / len(train_pairs)
            dev_ll = dev_loss_fn(model, dev_pairs)
            dev_metric = metric(model, dev)
            rec = EpochRecord(epoch, train_loss, -dev_ll, dev_metric, lr)
            history.append(rec)
            key = (dev_metric, dev_ll)
            improved = key > best_key
            if improved:
                best_key = key
                best = Checkpoint.from_model(
                    model, adam=_copy_adam(adam), epoch=epoch, task=task,
                )
            log.info(
                "epoch %d train_loss %.4f dev_loss %.4f dev_metric %.2f lr %.2e%s",
                epoch, train_loss, -dev_ll, dev_metric, lr, " *" if improved else "",
            )
            if on_epoch is not None:
                on_epoch(rec, improved, model)
            if dev_ll > best_ll:
                best_ll = dev_ll
            else:
                lr /= 2.0
            if lr < config.lr_floor:
                break
    best.history = [r.as_dict() for r in history]
    model.load_arrays(best.params)
    return FitResult(best, history)
