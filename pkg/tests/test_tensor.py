import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from xduct import tensor as tn
from xduct.errors import ArgumentError, DomainError, NonFiniteError, ShapeError
from xduct.tensor import Tensor

from helpers import numeric_grad, rel_error

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


def leaf(a):
    return Tensor(np.array(a, dtype=np.float64), requires_grad=True)


class TestMatmul:
    def test_identity(self, rng):
        A = rng.normal(size=(2, 2))
        np.testing.assert_array_equal(tn.matmul(np.eye(2), A).data, A)

    def test_hand_case(self):
        out = tn.matmul([[1.0, 2.0], [3.0, 4.0]], [[1.0], [1.0]])
        np.testing.assert_array_equal(out.data, [[3.0], [7.0]])

    def test_triple_loop_oracle(self, rng):
        a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
        ref = np.zeros((3, 2))
        for i in range(3):
            for j in range(2):
                for k in range(4):
                    ref[i, j] += a[i, k] * b[k, j]
        np.testing.assert_allclose(tn.matmul(a, b).data, ref, atol=1e-12)

    def test_shape_error_names_both(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            tn.matmul(np.ones((2, 3)), np.ones((2, 3)))

    def test_gradient(self, rng):
        a, b = leaf(rng.normal(size=(3, 4))), leaf(rng.normal(size=(4, 2)))
        loss = lambda: tn.tanh(a @ b).sum()
        tn.backward(loss())
        with tn.no_grad():
            assert rel_error(a.grad, numeric_grad(lambda: loss().item(), a.data)) < 1e-6
            assert rel_error(b.grad, numeric_grad(lambda: loss().item(), b.data)) < 1e-6


class TestUnary:
    def test_tanh_zero(self):
        x = leaf(0.0)
        y = tn.apply_unary(x, "tanh")
        tn.backward(y)
        assert y.item() == 0.0 and x.grad == 1.0

    def test_sigmoid_zero(self):
        assert tn.apply_unary(Tensor(0.0), "sigmoid").item() == 0.5

    def test_tanh_derivative_fd(self):
        x = leaf(0.3)
        tn.backward(tn.tanh(x))
        h = 1e-6
        fd = (math.tanh(0.3 + h) - math.tanh(0.3 - h)) / (2 * h)
        assert abs(x.grad - fd) < 1e-8

    @pytest.mark.parametrize("name", ["tanh", "sigmoid", "exp", "log"])
    def test_gradients_fd(self, name, rng):
        x = leaf(rng.uniform(0.2, 2.0, size=5))
        loss = lambda: tn.apply_unary(x, name).sum()
        tn.backward(loss())
        with tn.no_grad():
            assert rel_error(x.grad, numeric_grad(lambda: loss().item(), x.data)) < 1e-6

    def test_log_domain_error(self):
        with pytest.raises(DomainError, match=r"\(1,\)"):
            tn.log(Tensor([1.0, -1.0]))

    def test_unknown_function(self):
        with pytest.raises(ArgumentError):
            tn.apply_unary(Tensor(1.0), "relu")

    def test_sigmoid_extremes_are_finite(self):
        out = tn.sigmoid(Tensor([-800.0, 800.0])).data
        assert out[0] >= 0.0 and out[1] == 1.0


class TestConcat:
    def test_values(self):
        np.testing.assert_array_equal(tn.concat([Tensor([1.0, 2.0]), Tensor([3.0])]).data, [1, 2, 3])

    def test_bidirectional_width(self, rng):
        d_h = 7
        out = tn.concat([Tensor(rng.normal(size=d_h)), Tensor(rng.normal(size=d_h))])
        assert out.shape == (2 * d_h,)

    def test_gradient_all_ones(self):
        a, b = leaf([1.0, 2.0]), leaf([3.0])
        tn.backward(tn.concat([a, b]).sum())
        np.testing.assert_array_equal(a.grad, [1, 1])
        np.testing.assert_array_equal(b.grad, [1])

    def test_mismatch(self):
        with pytest.raises(ShapeError):
            tn.concat([Tensor(np.ones((2, 2))), Tensor(np.ones((3, 2)))], axis=1)


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_array_equal(tn.softmax_rows([[0.0, 0.0]]).data, [[0.5, 0.5]])

    def test_no_overflow(self):
        np.testing.assert_array_equal(tn.softmax_rows([[1000.0, 1000.0]]).data, [[0.5, 0.5]])

    def test_extended_precision_oracle(self):
        e = [Fraction(math.exp(1)), Fraction(math.exp(2)), Fraction(math.exp(3))]
        ref = [float(v / sum(e)) for v in e]
        np.testing.assert_allclose(tn.softmax_rows([[1.0, 2.0, 3.0]]).data[0], ref, atol=1e-12)

    def test_rejects_vector(self):
        with pytest.raises(ShapeError):
            tn.softmax_rows([1.0, 2.0])

    @given(hnp.arrays(np.float64, (3, 4), elements=st.floats(-10, 10)))
    @settings(max_examples=50, deadline=None)
    def test_rows_are_distributions(self, x):
        p = tn.softmax_rows(x).data
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert ((p > 0) & (p < 1)).all()

    def test_log_softmax_gradient(self, rng):
        x = leaf(rng.normal(size=(2, 5)))
        w = rng.normal(size=(2, 5))
        loss = lambda: (tn.log_softmax(x) * Tensor(w)).sum()
        tn.backward(loss())
        with tn.no_grad():
            assert rel_error(x.grad, numeric_grad(lambda: loss().item(), x.data)) < 1e-6


class TestLogsumexp:
    def test_half_half(self):
        assert abs(tn.logsumexp([math.log(0.5), math.log(0.5)]).item()) < 1e-15

    def test_single(self):
        assert tn.logsumexp([-3.25]).item() == -3.25

    def test_shifted_oracle(self):
        v = tn.logsumexp([-1000.0, -1001.0]).item()
        assert abs(v - (-1000.0 + math.log1p(math.exp(-1)))) < 1e-12

    def test_empty(self):
        with pytest.raises(ArgumentError):
            tn.logsumexp(np.zeros(0))

    def test_all_neg_inf(self):
        assert tn.logsumexp([-np.inf, -np.inf]).item() == -np.inf

    @given(hnp.arrays(np.float64, st.integers(1, 8), elements=st.floats(-50, 50)))
    @settings(max_examples=100, deadline=None)
    def test_bounds(self, x):
        v = tn.logsumexp(x).item()
        assert x.max() - 1e-12 <= v <= x.max() + math.log(len(x)) + 1e-12

    def test_gradient_is_softmax(self, rng):
        x = leaf(rng.normal(size=6))
        tn.backward(tn.logsumexp(x))
        np.testing.assert_allclose(x.grad, np.exp(x.data) / np.exp(x.data).sum(), atol=1e-14)


class TestBackward:
    def test_product(self):
        x, y = leaf(2.0), leaf(3.0)
        tn.backward(x * y)
        assert x.grad == 3.0 and y.grad == 2.0

    def test_tanh_wv_fd(self, rng):
        W = leaf(rng.normal(size=(3, 4)))
        v = Tensor(rng.normal(size=4))
        loss = lambda: tn.tanh(W @ v).sum()
        tn.backward(loss())
        with tn.no_grad():
            num = numeric_grad(lambda: loss().item(), W.data)
        assert rel_error(W.grad, num) < 1e-6

    def test_independent_leaf(self):
        x, unused = leaf(2.0), leaf(5.0)
        y = x * x
        tn.backward(y)
        assert unused.grad is None or unused.grad == 0.0

    def test_non_scalar_root(self):
        with pytest.raises(ArgumentError):
            tn.backward(leaf([1.0, 2.0]) * 2.0)

    def test_repeat_is_identical(self, rng):
        W = leaf(rng.normal(size=(4, 4)))
        v = Tensor(rng.normal(size=4))
        loss = tn.logsumexp(tn.tanh(W @ v) * 3.0)
        tn.backward(loss)
        first = W.grad.copy()
        tn.zero_grad([W])
        tn.backward(loss)
        np.testing.assert_array_equal(first, W.grad)

    def test_shared_subexpression(self):
        x = leaf(1.5)
        y = x * x
        tn.backward(y + y * x)
        assert abs(x.grad - (2 * 1.5 + 3 * 1.5**2)) < 1e-12

    def test_no_grad_records_nothing(self):
        x = leaf(1.0)
        with tn.no_grad():
            y = x * 2.0
        assert not y.requires_grad

    @pytest.mark.parametrize("seed", range(100))
    def test_composite_fd(self, seed):
        r = np.random.default_rng(seed)
        a = leaf(r.normal(size=(2, 3)))
        b = leaf(r.normal(size=(3, 3)))
        m = r.random((2, 3)) > 0.3
        m[:, 0] = True

        def loss():
            z = tn.masked_fill(a @ b, ~m, -np.inf)
            s = tn.log_softmax(z) + tn.sigmoid(a) * tn.exp(a * 0.1)
            picked = tn.pick(tn.masked_fill(s, ~m, 0.0), np.array([0, 0]))
            return tn.logsumexp(tn.concat([picked, tn.tanh(a).sum(axis=1)])) + (a / (b[:2] * b[:2] + 1.0)).mean()

        tn.zero_grad([a, b])
        tn.backward(loss())
        with tn.no_grad():
            for p in (a, b):
                assert rel_error(p.grad, numeric_grad(lambda: loss().item(), p.data)) <= 1e-4


class TestIndexingAndShape:
    def test_fancy_index_accumulates(self):
        E = leaf(np.zeros((3, 2)))
        tn.backward(E[np.array([0, 0, 2])].sum())
        np.testing.assert_array_equal(E.grad, [[2, 2], [0, 0], [1, 1]])

    def test_reshape_swap_roundtrip(self, rng):
        x = leaf(rng.normal(size=(2, 3, 4)))
        y = x.swapaxes(1, 2).reshape(2, 12)
        tn.backward((y * Tensor(np.arange(24.0).reshape(2, 12))).sum())
        np.testing.assert_array_equal(x.grad, np.arange(24.0).reshape(2, 4, 3).swapaxes(1, 2))

    def test_stack(self):
        a, b = leaf([1.0, 2.0]), leaf([3.0, 4.0])
        s = tn.stack([a, b], axis=1)
        assert s.shape == (2, 2)
        tn.backward((s * Tensor([[1.0, 2.0], [3.0, 4.0]])).sum())
        np.testing.assert_array_equal(a.grad, [1, 3])
        np.testing.assert_array_equal(b.grad, [2, 4])

    def test_dropout_zero_rate_is_identity(self, rng):
        x = Tensor(rng.normal(size=5))
        assert tn.dropout(x, 0.0, rng) is x

    def test_dropout_scaling(self):
        x = Tensor(np.ones(20000))
        out = tn.dropout(x, 0.25, np.random.default_rng(0)).data
        assert set(np.unique(out)) <= {0.0, 1.0 / 0.75}
        assert abs(out.mean() - 1.0) < 0.03


class TestClip:
    def _grads(self, *arrays):
        ts = []
        for a in arrays:
            t = leaf(np.zeros_like(np.asarray(a, float)))
            t.grad = np.array(a, float)
            ts.append(t)
        return ts

    def test_norm_ten(self):
        ts = self._grads([6.0, 0.0], [8.0])
        assert tn.clip_global_norm(ts, 5.0) == 0.5
        np.testing.assert_array_equal(ts[0].grad, [3.0, 0.0])

    def test_norm_three(self):
        ts = self._grads([3.0])
        assert tn.clip_global_norm(ts, 5.0) == 1.0
        np.testing.assert_array_equal(ts[0].grad, [3.0])

    @given(hnp.arrays(np.float64, 6, elements=finite), st.floats(0.1, 10))
    @settings(max_examples=100, deadline=None)
    def test_post_clip_norm_and_direction(self, g, max_norm):
        ts = self._grads(g[:2], g[2:])
        before = np.concatenate([t.grad for t in ts])
        tn.clip_global_norm(ts, max_norm)
        after = np.concatenate([t.grad for t in ts])
        n0 = np.linalg.norm(before)
        assert abs(np.linalg.norm(after) - min(n0, max_norm)) <= 1e-12 * max(1.0, n0)
        if n0 > 0:
            cos = after @ before / (np.linalg.norm(after) * n0)
            assert abs(cos - 1.0) <= 1e-12

    def test_bad_max_norm(self):
        with pytest.raises(ArgumentError):
            tn.clip_global_norm([], 0.0)


class TestCheckedMode:
    def test_nan_rejected(self):
        with pytest.raises(NonFiniteError):
            Tensor([1.0, np.nan]) + 1.0

    def test_inf_overflow_rejected(self):
        with pytest.raises(NonFiniteError):
            tn.exp(Tensor([1000.0]))

    def test_neg_inf_mask_allowed(self):
        out = tn.masked_fill(Tensor([1.0, 2.0]), np.array([False, True]), -np.inf)
        assert out.data[1] == -np.inf

    def test_unchecked_lets_nan_through(self):
        with tn.checked(False):
            out = Tensor([np.nan]) + 1.0
        assert np.isnan(out.data[0])

    def test_grad_shape_matches_data(self, rng):
        x = leaf(rng.normal(size=(3, 2)))
        tn.backward((x * x).sum())
        assert x.grad.shape == x.data.shape and x.size == x.data.size
