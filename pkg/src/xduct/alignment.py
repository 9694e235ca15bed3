"""Alignment distributions, soft contexts and latent-alignment likelihoods.

The hard-attention likelihood factorizes over output steps because each
alignment variable depends only on the output prefix, so

    log p(y | x) = sum_i logsumexp_j [log alpha_j(i) + log p(y_i | a_i = j, y_<i, x)]

costs O(|x| |y| |V|).  :func:`brute_force_log_likelihood` enumerates all
``|x|**|y|`` alignments instead and exists to check the factorized form.

Tensors may carry leading batch axes; the last two axes of score and
probability tables are (output step, source position).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import tensor as tn
from .errors import ContractError, ShapeError, SizeError
from .tensor import Tensor

BRUTE_FORCE_LIMIT = 10**6
# Target size (elements) of one block of the |y| x |x| x |V| output table.
EMISSION_BLOCK = 1 << 16


@dataclass
class AlignmentTables:
    """Per-step alignment log-prior and per-alignment emission log-probabilities.

    ``log_alpha[..., i, j] = log alpha_j(i)`` and
    ``log_emit[..., i, j] = log p(y_i | a_i = j, y_<i, x)``.
    ``step_mask`` (bool, ``[..., |y|]``) marks real (non-padding) output steps.
    """

    log_alpha: Tensor
    log_emit: Tensor
    step_mask: np.ndarray | None = None

    @property
    def shape(self) -> tuple:
        return self.log_alpha.shape


@dataclass
class AlignmentSample:
    positions: np.ndarray  # [..., |y|] source index per output step
    step_log_probs: np.ndarray  # log alpha at the sampled positions

    @property
    def log_prob(self) -> np.ndarray:
        return self.step_log_probs.sum(axis=-1)


def attention_scores(h_dec, h_enc, T, mask=None) -> Tensor:
    """Bilinear scores ``e_ij = h_dec_i^T T h_enc_j``; masked columns get ``-inf``.

    ``mask`` is boolean over source positions (True = real symbol).
    """
    h_dec, h_enc, T = tn._t(h_dec), tn._t(h_enc), tn._t(T)
    if h_dec.shape[-1] != T.shape[0] or h_enc.shape[-1] != T.shape[1]:
        raise ShapeError(
            f"attention_scores: h_dec {h_dec.shape}, h_enc {h_enc.shape}, T {T.shape}"
        )
    scores = (h_dec @ T) @ h_enc.T
    if mask is None:
        return scores
    mask = np.asarray(mask, dtype=bool)
    if mask.shape[-1] != h_enc.shape[-2]:
        raise ShapeError(f"attention_scores: mask {mask.shape} vs {h_enc.shape[-2]} source positions")
    if h_dec.ndim > 1:
        mask = mask[..., None, :]
    return tn.masked_fill(scores, ~mask, -np.inf)


def _require_support(scores: Tensor) -> None:
    if np.isneginf(scores.data).all(axis=-1).any():
        raise ContractError("alignment distribution: a row has every source position masked")


def alignment_distribution(scores) -> Tensor:
    """Row-wise softmax of the scores: alpha_j(i)."""
    scores = tn._t(scores)
    _require_support(scores)
    return tn.softmax(scores, axis=-1)


def log_alignment_distribution(scores) -> Tensor:
    scores = tn._t(scores)
    _require_support(scores)
    return tn.log_softmax(scores, axis=-1)


def soft_context(alpha, h_enc) -> Tensor:
    """Context vector ``c_i = sum_j alpha_j(i) h_enc_j``."""
    return tn.matmul(alpha, h_enc)


def attentional_vector(h_dec, context, S) -> Tensor:
    """``tanh(S (h_dec ⊕ context))``, the hidden layer under the output softmax."""
    return tn.tanh(tn.concat([tn._t(h_dec), tn._t(context)], axis=-1) @ S)


def output_logits_given_alignment(h_dec, h_enc_j, S, W) -> Tensor:
    """Log-distribution over the target vocabulary when aligned to ``h_enc_j``."""
    h_dec, h_enc_j, S, W = tn._t(h_dec), tn._t(h_enc_j), tn._t(S), tn._t(W)
    if h_dec.shape[-1] + h_enc_j.shape[-1] != S.shape[0] or S.shape[1] != W.shape[0]:
        raise ShapeError(
            f"output layer: h_dec {h_dec.shape}, h_enc {h_enc_j.shape}, S {S.shape}, W {W.shape}"
        )
    return tn.log_softmax(attentional_vector(h_dec, h_enc_j, S) @ W, axis=-1)


def pairwise_log_probs(h_dec, h_enc, S, W) -> Tensor:
    """Output log-distributions for every (step, source position) pair.

    Returns ``[..., |y|, |x|, |V|]``.  The concatenation inside the output
    layer is split as ``S_dec h_dec + S_enc h_enc`` so each half is projected
    once rather than |x| |y| times.
    """
    h_dec, h_enc, S, W = tn._t(h_dec), tn._t(h_enc), tn._t(S), tn._t(W)
    d_dec = h_dec.shape[-1]
    if d_dec + h_enc.shape[-1] != S.shape[0] or S.shape[1] != W.shape[0]:
        raise ShapeError(
            f"output layer: h_dec {h_dec.shape}, h_enc {h_enc.shape}, S {S.shape}, W {W.shape}"
        )
    a = h_dec @ S[:d_dec]
    b = h_enc @ S[d_dec:]
    a_shape = a.shape[:-1] + (1,) + a.shape[-1:]
    b_shape = b.shape[:-2] + (1,) + b.shape[-2:]
    hidden = tn.tanh(a.reshape(a_shape) + b.reshape(b_shape))
    return tn.log_softmax(hidden @ W, axis=-1)


def emission_log_probs(h_dec, h_enc, y, S, W, block: int = EMISSION_BLOCK) -> Tensor:
    """``log p(y_i | a_i = j, ...)`` for all (i, j), shape ``[..., |y|, |x|]``.

    Source positions are processed in blocks so the full |V|-wide table never
    exists at once; the result equals picking from :func:`pairwise_log_probs`.
    """
    h_dec, h_enc = tn._t(h_dec), tn._t(h_enc)
    y = np.asarray(y, dtype=np.intp)
    n_src = h_enc.shape[-2]
    per_position = max(1, int(np.prod(h_dec.shape[:-1])) * tn._t(W).shape[-1])
    step = 1 << max(0, (block // per_position).bit_length() - 1)  # power of two
    parts = []
    for start in range(0, n_src, step):
        logp = pairwise_log_probs(h_dec, h_enc[..., start : start + step, :], S, W)
        parts.append(tn.pick(logp, np.broadcast_to(y[..., None], logp.shape[:-1])))
    return parts[0] if len(parts) == 1 else tn.concat(parts, axis=-1)


def alignment_tables(h_dec, h_enc, y, T, S, W, src_mask=None, tgt_mask=None) -> AlignmentTables:
    """Everything the hard likelihood needs; this is the Θ(|x||y||V|) part."""
    scores = attention_scores(h_dec, h_enc, T, src_mask)
    log_alpha = log_alignment_distribution(scores)
    log_emit = emission_log_probs(h_dec, h_enc, y, S, W)
    return AlignmentTables(log_alpha, log_emit, None if tgt_mask is None else np.asarray(tgt_mask, bool))


def marginalize(tables: AlignmentTables) -> Tensor:
    """Exact log-marginal over alignments via per-step logsumexp."""
    per_step = tn.logsumexp(tables.log_alpha + tables.log_emit, axis=-1)
    if tables.step_mask is not None:
        per_step = tn.masked_fill(per_step, ~tables.step_mask, 0.0)
    return per_step.sum(axis=-1)


def hard_marginal_log_likelihood(h_dec, h_enc, y, T, S, W, src_mask=None, tgt_mask=None) -> Tensor:
    """log p(y | x) of the hard-attention model, summed over all alignments."""
    return marginalize(alignment_tables(h_dec, h_enc, y, T, S, W, src_mask, tgt_mask))


def enumerate_alignments(n_src: int, n_tgt: int):
    """Yield every many-to-one alignment as a tuple of source indices."""
    return itertools.product(range(n_src), repeat=n_tgt)


def _all_alignments(tables: AlignmentTables, limit: int) -> np.ndarray:
    if tables.log_alpha.ndim != 2:
        raise ShapeError("brute force works on one sequence at a time")
    n_tgt, n_src = tables.log_alpha.shape
    if n_src**n_tgt > limit:
        raise SizeError(f"{n_src}**{n_tgt} alignments exceed the enumeration limit {limit}")
    rows = list(enumerate_alignments(n_src, n_tgt))
    return np.array(rows, dtype=np.intp).reshape(len(rows), n_tgt)


def brute_force_log_likelihood(
    tables: AlignmentTables, limit: int = BRUTE_FORCE_LIMIT, return_count: bool = False
):
    """log sum_a prod_i alpha_{a_i}(i) p(y_i | a_i, ...), enumerating every alignment.

    Test oracle; exponential in |y|.  With ``return_count`` also returns
    the number of alignments visited.
    """
    align = _all_alignments(tables, limit)
    steps = np.arange(align.shape[1])[None, :]
    joint = (tables.log_alpha[steps, align] + tables.log_emit[steps, align]).sum(axis=-1)
    value = tn.logsumexp(joint)
    return (value, len(align)) if return_count else value


def jensen_bound(tables: AlignmentTables, limit: int = BRUTE_FORCE_LIMIT) -> Tensor:
    """sum_a p(a | x) log p(y | x, a), by enumeration (differentiable)."""
    align = _all_alignments(tables, limit)
    steps = np.arange(align.shape[1])[None, :]
    log_pa = tables.log_alpha[steps, align].sum(axis=-1)
    log_py = tables.log_emit[steps, align].sum(axis=-1)
    return (tn.exp(log_pa) * log_py).sum()


def sample_alignment(alpha, rng: np.random.Generator) -> AlignmentSample:
    """Draw ``a_i ~ alpha(i)`` independently for every output step."""
    a = alpha.data if isinstance(alpha, Tensor) else np.asarray(alpha, dtype=np.float64)
    cdf = np.cumsum(a, axis=-1)
    target = rng.random(a.shape[:-1]) * cdf[..., -1]
    pos = (cdf <= target[..., None]).sum(axis=-1)
    pos = np.minimum(pos, a.shape[-1] - 1)
    with np.errstate(divide="ignore"):
        lp = np.log(np.take_along_axis(a, pos[..., None], axis=-1)[..., 0])
    return AlignmentSample(pos, lp)


@dataclass
class MovingBaseline:
    """Exponential moving average of rewards, ``b <- decay*b + (1-decay)*r``.

    An unset baseline takes the first reward it sees.
    """

    decay: float = 0.9
    value: float | None = None

    def current(self, fallback: float) -> float:
        return fallback if self.value is None else self.value

    def update(self, reward: float) -> float:
        if self.value is None:
            self.value = float(reward)
        else:
            self.value = self.decay * self.value + (1.0 - self.decay) * float(reward)
        return self.value


def reinforce_objective(
    tables: AlignmentTables,
    samples: Sequence[AlignmentSample],
    baseline: MovingBaseline,
    update_baseline: bool = True,
) -> Tensor:
    """Surrogate loss whose gradient is a REINFORCE estimate of -grad(Jensen bound).

    For each sample ``a`` the reward is ``R = log p(y | x, a)``; the loss is
    ``-(1/k) sum_s [R_s + (R_s - b) log p(a_s | x)]`` with the bracketed
    reward difference held constant.  Returns one value per sequence.
    """
    if not samples:
        raise ContractError("reinforce_objective needs at least one sample")
    mask = tables.step_mask
    rewards, log_pas = [], []
    for s in samples:
        r = tn.pick(tables.log_emit, s.positions)
        lp = tn.pick(tables.log_alpha, s.positions)
        if mask is not None:
            r = tn.masked_fill(r, ~mask, 0.0)
            lp = tn.masked_fill(lp, ~mask, 0.0)
        rewards.append(r.sum(axis=-1))
        log_pas.append(lp.sum(axis=-1))
    mean_reward = float(np.mean([r.data for r in rewards]))
    b = baseline.current(mean_reward)
    total = None
    for r, lp in zip(rewards, log_pas):
        term = r + Tensor(r.data - b) * lp
        total = term if total is None else total + term
    if update_baseline:
        baseline.update(mean_reward)
    return total * (-1.0 / len(samples))
