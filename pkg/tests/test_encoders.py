import math

import numpy as np
import pytest

from agfn.encoders import (CrossAttention, EncodedTriple, Encoder, ModalityBundle,
                           MultimodalEncoder, cross_attention, encode, encode_bundle)
from agfn.errors import DomainError, ShapeError
from agfn.numerics import Rng


def _softmax_rows(S):
    out = np.zeros_like(S)
    for i, row in enumerate(S):
        e = [math.exp(v - max(row)) for v in row]
        out[i] = [x / sum(e) for x in e]
    return out


def _attention_oracle(q, kv, Wq, Wk, Wv):
    Q, K, V = q @ Wq, kv @ Wk, kv @ Wv
    P = _softmax_rows(Q @ K.T / math.sqrt(q.shape[1]))
    return q + P @ V


def _encoder_oracle(enc, seq):
    pooled = seq.sum(axis=0) / seq.shape[0]
    return np.tanh(pooled @ enc.params["proj.W"] + enc.params["proj.b"])


class TestEncode:
    def test_single_row_identity_projection(self):
        enc = Encoder(4, 4)
        enc.params["proj.W"][...] = np.eye(4)
        row = Rng(1).normal((1, 4))
        np.testing.assert_allclose(encode(enc, row), np.tanh(row[0]), atol=1e-15)

    def test_constant_sequence_equals_single_row(self):
        enc = Encoder(4, 6, Rng(2))
        row = Rng(3).normal((1, 4))
        np.testing.assert_allclose(encode(enc, np.repeat(row, 5, axis=0)), encode(enc, row),
                                   atol=1e-15)

    def test_matches_pool_affine_tanh(self):
        rng = Rng(4)
        enc = Encoder(5, 7, rng)
        enc.params["proj.b"][...] = rng.normal(7)
        seq = rng.normal((6, 5))
        np.testing.assert_allclose(encode(enc, seq), _encoder_oracle(enc, seq), atol=1e-12, rtol=0)

    def test_row_permutation_invariance(self):
        rng = Rng(5)
        enc = Encoder(5, 7, rng)
        seq = rng.normal((6, 5))
        perm = rng.permutation(6)
        np.testing.assert_allclose(encode(enc, seq[perm]), encode(enc, seq), atol=1e-14)

    def test_width_mismatch(self):
        with pytest.raises(ShapeError):
            encode(Encoder(5, 3, Rng(1)), np.ones((2, 4)))

    def test_empty_sequence(self):
        with pytest.raises(ShapeError):
            encode(Encoder(5, 3, Rng(1)), np.ones((0, 5)))


class TestCrossAttention:
    def test_single_key_gets_all_weight(self):
        rng = Rng(6)
        att = CrossAttention(4, rng)
        q, kv = rng.normal((3, 4)), rng.normal((1, 4))
        out = cross_attention(att, q, kv)
        assert np.all(att.last_weights == 1.0)
        np.testing.assert_allclose(out, q + kv @ att.params["Wv"], atol=1e-15)

    def test_zero_projections_residual_identity(self):
        att = CrossAttention(4)
        q, kv = Rng(7).normal((3, 4)), Rng(8).normal((2, 4))
        np.testing.assert_array_equal(cross_attention(att, q, kv), q)

    def test_matches_explicit_formula(self):
        rng = Rng(9)
        att = CrossAttention(4, rng)
        q, kv = rng.normal((3, 4)), rng.normal((2, 4))
        oracle = _attention_oracle(q, kv, *(att.params[k] for k in ("Wq", "Wk", "Wv")))
        np.testing.assert_allclose(cross_attention(att, q, kv), oracle, atol=1e-12, rtol=0)

    def test_weight_rows_sum_to_one(self):
        rng = Rng(10)
        att = CrossAttention(4, rng, init_scale=5.0)
        cross_attention(att, rng.normal((5, 4)), rng.normal((7, 4)))
        np.testing.assert_allclose(att.last_weights.sum(axis=-1), 1.0, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            cross_attention(CrossAttention(4, Rng(1)), np.ones((2, 4)), np.ones((2, 3)))


def _bundle(rng, L=(3, 2, 4), d=4, label=0.5):
    return ModalityBundle(rng.normal((L[0], d)), rng.normal((L[1], d)), rng.normal((L[2], d)),
                          label, "x")


class TestEncodeBundle:
    def test_without_attention_equals_independent_encodes(self):
        rng = Rng(11)
        enc = MultimodalEncoder((4, 4, 4), 5, use_attention=True, rng=rng)
        b = _bundle(rng)
        t = encode_bundle(enc, b, use_attention=False)
        for h, sub, seq in zip((t.h_T, t.h_A, t.h_V), enc.encoders, b.sequences):
            np.testing.assert_array_equal(h, encode(sub, seq))

    def test_zero_attention_equals_no_attention(self):
        rng = Rng(12)
        enc = MultimodalEncoder((4, 4, 4), 5, use_attention=True, rng=rng)
        for att in enc.attention:
            for p in att.params.values():
                p[...] = 0.0
        b = _bundle(rng)
        on = encode_bundle(enc, b, use_attention=True)
        off = encode_bundle(enc, b, use_attention=False)
        np.testing.assert_array_equal(on.stacked(), off.stacked())

    def test_matches_step_by_step_oracle(self):
        rng = Rng(13)
        enc = MultimodalEncoder((4, 4, 4), 5, use_attention=True, rng=rng)
        b = _bundle(rng)
        seqs = b.sequences
        expected = []
        for i in range(3):
            kv = np.vstack([seqs[j] for j in range(3) if j != i])
            att = enc.attention[i]
            refined = _attention_oracle(seqs[i], kv, *(att.params[k] for k in ("Wq", "Wk", "Wv")))
            expected.append(_encoder_oracle(enc.encoders[i], refined))
        got = encode_bundle(enc, b).stacked()
        np.testing.assert_allclose(got, np.stack(expected), atol=1e-12, rtol=0)

    def test_attention_needs_equal_widths(self):
        with pytest.raises(ShapeError):
            MultimodalEncoder((4, 3, 4), 5, use_attention=True, rng=Rng(1))

    def test_unequal_widths_without_attention(self):
        rng = Rng(14)
        enc = MultimodalEncoder((4, 3, 6), 5, use_attention=False, rng=rng)
        b = ModalityBundle(rng.normal((2, 4)), rng.normal((2, 3)), rng.normal((2, 6)), 0.0, "y")
        assert encode_bundle(enc, b).stacked().shape == (3, 5)


class TestTypes:
    def test_label_range(self):
        with pytest.raises(DomainError):
            ModalityBundle(np.ones((1, 2)), np.ones((1, 2)), np.ones((1, 2)), 3.5, "bad")

    def test_triple_dimensions_must_agree(self):
        with pytest.raises(ShapeError):
            EncodedTriple(np.ones(3), np.ones(3), np.ones(4))
