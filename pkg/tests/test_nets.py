import math

import numpy as np
import pytest

from xduct import tensor as tn
from xduct.errors import ArgumentError, ContractError, EncodingError, ShapeError
from xduct.nets import (
    FEED_MERGE,
    DecoderParams,
    EncoderParams,
    LstmParams,
    decoder_step,
    encode,
    encode_batch,
    initial_state,
    lstm_step,
)
from xduct.tensor import Tensor

from helpers import check_param_grads


def zero_lstm(d_in, d_h):
    return LstmParams(Tensor(np.zeros((d_in, 4 * d_h))), Tensor(np.zeros((d_h, 4 * d_h))), Tensor(np.zeros(4 * d_h)))


def sig(v):
    return 1.0 / (1.0 + math.exp(-v))


class TestLstmStep:
    def test_zero_params_zero_output(self, rng):
        h, c = lstm_step(zero_lstm(3, 2), rng.normal(size=3), np.zeros(2), np.zeros(2))
        np.testing.assert_array_equal(h.data, 0.0)
        np.testing.assert_array_equal(c.data, 0.0)

    def test_output_in_open_interval(self, rng):
        p = LstmParams.init(4, 5, rng)
        for k in range(4):
            p.w_x.data *= 10
        h, _ = lstm_step(p, rng.normal(size=4) * 5, rng.uniform(-1, 1, 5), rng.normal(size=5) * 5)
        assert (np.abs(h.data) < 1).all()

    def test_scalar_oracle(self):
        # gate order: input, forget, output, candidate
        wx = np.array([[0.5, -0.3, 0.8, 0.2]])
        wh = np.array([[0.1, 0.4, -0.6, 0.7]])
        b = np.array([0.05, 1.0, -0.1, 0.3])
        p = LstmParams(Tensor(wx), Tensor(wh), Tensor(b))
        x, hp, cp = 0.7, -0.2, 0.4
        z = [wx[0, k] * x + wh[0, k] * hp + b[k] for k in range(4)]
        c = sig(z[1]) * cp + sig(z[0]) * math.tanh(z[3])
        h = sig(z[2]) * math.tanh(c)
        h_t, c_t = lstm_step(p, [x], [hp], [cp])
        assert abs(h_t.data[0] - h) < 1e-12
        assert abs(c_t.data[0] - c) < 1e-12

    def test_forget_bias_init(self, rng):
        p = LstmParams.init(3, 4, rng)
        np.testing.assert_array_equal(p.b.data, [0] * 4 + [1] * 4 + [0] * 8)
        assert np.abs(p.w_x.data).max() <= math.sqrt(1 / 3)

    def test_shape_error(self, rng):
        with pytest.raises(ShapeError):
            lstm_step(LstmParams.init(3, 2, rng), np.zeros(4), np.zeros(2), np.zeros(2))


class TestEncode:
    def test_single_symbol(self, rng):
        p = EncoderParams.init(5, 3, 4, 1, rng)
        H = encode(p, [2])
        assert H.shape == (1, 8)
        assert np.abs(H.data[0, :4]).sum() > 0 and np.abs(H.data[0, 4:]).sum() > 0

    def test_tied_direction_symmetry(self, rng):
        p = EncoderParams.init(6, 3, 4, 1, rng)
        p.backward = p.forward
        x = [1, 4, 2, 5, 3]
        H = encode(p, x).data
        Hr = encode(p, x[::-1]).data[::-1]
        np.testing.assert_allclose(Hr[:, :4], H[:, 4:], atol=1e-14)
        np.testing.assert_allclose(Hr[:, 4:], H[:, :4], atol=1e-14)

    def test_no_dropout_is_deterministic(self, rng):
        p = EncoderParams.init(5, 3, 4, 2, rng)
        a = encode(p, [1, 2, 3], 0.0, np.random.default_rng(0)).data
        b = encode(p, [1, 2, 3], 0.0, np.random.default_rng(0)).data
        np.testing.assert_array_equal(a, b)

    def test_batch_matches_single(self, rng):
        p = EncoderParams.init(7, 3, 4, 2, rng)
        seqs = [[1, 2, 3, 4], [5, 6]]
        x = np.array([[1, 2, 3, 4], [5, 6, 0, 0]])
        H = encode_batch(p, x, np.array([4, 2])).data
        for k, s in enumerate(seqs):
            np.testing.assert_allclose(H[k, : len(s)], encode(p, s).data, atol=1e-14)

    def test_two_layer_width(self, rng):
        p = EncoderParams.init(5, 3, 4, 2, rng)
        assert p.forward[1].d_in == 8 and encode(p, [1, 2]).shape == (2, 8)

    def test_empty_and_oov(self, rng):
        p = EncoderParams.init(5, 3, 4, 1, rng)
        with pytest.raises(ArgumentError):
            encode(p, [])
        with pytest.raises(EncodingError):
            encode(p, [9])

    def test_gradient(self, rng):
        p = EncoderParams.init(5, 2, 3, 2, rng)
        params = dict(p.named())
        w = Tensor(rng.normal(size=(3, 6)))
        errs = check_param_grads(params, lambda: (encode(p, [1, 3, 2]) * w).sum())
        assert max(errs.values()) <= 1e-4, errs


class TestDecoderStep:
    def test_zero_params_zero_state(self):
        p = DecoderParams(Tensor(np.zeros((4, 3))), [zero_lstm(3, 2)])
        h, st = decoder_step(p, 1, initial_state(p))
        np.testing.assert_array_equal(h.data, 0.0)

    def test_plain_ignores_downstream(self, rng):
        # the state depends on the prefix only, so two passes agree bitwise
        p = DecoderParams.init(6, 3, 4, 1, rng)
        prefix = [1, 4, 2, 5]

        def run():
            st, hs = initial_state(p), []
            for y in prefix:
                h, st = decoder_step(p, y, st)
                hs.append(h.data)
            return np.array(hs)

        np.testing.assert_array_equal(run(), run())

    def test_identity_merge_with_zero_feed(self, rng):
        plain = DecoderParams.init(6, 3, 4, 1, rng)
        merge = np.vstack([np.eye(3), np.zeros((5, 3))])
        fed = DecoderParams(plain.embedding, plain.layers, FEED_MERGE, Tensor(merge))
        h1, _ = decoder_step(plain, 2, initial_state(plain))
        h2, _ = decoder_step(fed, 2, initial_state(fed), Tensor(np.zeros(5)))
        np.testing.assert_array_equal(h1.data, h2.data)
        # and a non-identity merge changes the result
        fed.merge = Tensor(merge * 0.5)
        h3, _ = decoder_step(fed, 2, initial_state(fed), Tensor(np.zeros(5)))
        assert not np.array_equal(h1.data, h3.data)

    def test_feed_contract(self, rng):
        plain = DecoderParams.init(6, 3, 4, 1, rng)
        fed = DecoderParams.init(6, 3, 4, 1, rng, FEED_MERGE, 5)
        with pytest.raises(ContractError):
            decoder_step(plain, 1, initial_state(plain), Tensor(np.zeros(5)))
        with pytest.raises(ContractError):
            decoder_step(fed, 1, initial_state(fed))
        with pytest.raises(ContractError):
            DecoderParams(plain.embedding, plain.layers, FEED_MERGE, None)

    def test_encoder_decoder_gradient(self, rng):
        enc = EncoderParams.init(5, 2, 2, 1, rng)
        dec = DecoderParams.init(4, 2, 3, 1, rng, FEED_MERGE, 4)
        proj = Tensor(rng.normal(size=(4, 4)))
        params = dict(enc.named() + dec.named())

        def loss():
            H = encode(enc, [1, 2, 4])
            feed = tn.tanh(H.sum(axis=0) @ proj)
            st, total = initial_state(dec), None
            for y in (1, 3, 2):
                h, st = decoder_step(dec, y, st, feed)
                total = h.sum() if total is None else total + h.sum()
            return total

        errs = check_param_grads(params, loss)
        assert max(errs.values()) <= 1e-4, errs
