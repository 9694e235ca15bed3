"""Finite-difference oracles and small fixtures shared by the test modules."""

import numpy as np

from xduct import tensor as tn
from xduct.data import Example, Vocabulary, build_vocab


def numeric_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of the scalar function ``f`` at ``x`` (mutated and restored)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        g[idx] = (fp - fm) / (2 * h)
    return g


def rel_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-3)
    return float(np.max(np.abs(a - b) / scale))


def check_param_grads(params: dict, loss_fn, h: float = 1e-5) -> dict:
    """Max relative error of autodiff vs central differences per named parameter."""
    tn.zero_grad(params.values())
    tn.backward(loss_fn())
    analytic = {k: (np.zeros_like(p.data) if p.grad is None else p.grad.copy()) for k, p in params.items()}
    errs = {}
    with tn.no_grad():
        for name, p in params.items():
            num = numeric_grad(lambda: float(loss_fn().data), p.data, h)
            errs[name] = rel_error(analytic[name], num)
    return errs


def toy_examples():
    pairs = [("abc", "xy"), ("ba", "yyx"), ("cab", "x"), ("a", "yx")]
    return [Example(tuple(s), tuple(t)) for s, t in pairs]


def toy_vocabs():
    exs = toy_examples()
    return build_vocab(exs, "source"), build_vocab(exs, "target")


def random_alignment_instance(rng, n_src, n_tgt, vocab, d_dec=3, d_h=2, d_s=4, scale=1.0):
    """Random decoder/encoder states and output weights for one (x, y) pair."""
    from xduct.tensor import Tensor

    return dict(
        h_dec=Tensor(rng.normal(size=(n_tgt, d_dec)) * scale),
        h_enc=Tensor(rng.normal(size=(n_src, 2 * d_h)) * scale),
        y=rng.integers(0, vocab, n_tgt),
        T=Tensor(rng.normal(size=(d_dec, 2 * d_h)), requires_grad=True),
        S=Tensor(rng.normal(size=(d_dec + 2 * d_h, d_s)), requires_grad=True),
        W=Tensor(rng.normal(size=(d_s, vocab)) * 2, requires_grad=True),
    )


def toy_tables():
    """The 2x2 fixture: alpha rows and emission probabilities of y1, y2."""
    from xduct.alignment import AlignmentTables
    from xduct.tensor import Tensor

    alpha = np.array([[0.6, 0.4], [0.3, 0.7]])
    emit = np.array([[0.9, 0.2], [0.5, 0.8]])
    return AlignmentTables(Tensor(np.log(alpha)), Tensor(np.log(emit)))
