import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from allograph import autodiff as ad
from allograph.acoustic import (Encoder, EncoderConfig, FeatureSequence, OutputLayer, encode, pooling_matrix,
                                softmax_out, subsampled_length)
from allograph.ctc import ctc_loss
from allograph.wfst import UC, AllophoneGraph, compose

from conftest import table


def test_identity_encoder_passes_features_through(rng):
    x = rng.normal(size=(6, 4))
    enc = Encoder(EncoderConfig(4, [4], nonlinearity="none", init="identity"))
    assert np.array_equal(encode(x, enc).data, x)


def test_subsampled_length():
    assert subsampled_length(10, 4) == 3
    enc = Encoder(EncoderConfig(2, [3], subsampling=4))
    assert encode(np.ones((10, 2)), enc).shape == (3, 3)


def test_mean_pooling_groups():
    pool, lengths = pooling_matrix([5], 2)
    assert lengths == [3]
    assert np.allclose(pool, [[0.5, 0.5, 0, 0, 0], [0, 0, 0.5, 0.5, 0], [0, 0, 0, 0, 1]])


def test_batch_matches_single_utterances(rng):
    enc = Encoder(EncoderConfig(3, [5, 4], subsampling=2, seed=4))
    xs = [rng.normal(size=(n, 3)) for n in (3, 6, 1)]
    h, spans = enc.batch(xs)
    assert spans == [(0, 2), (2, 5), (5, 6)]
    for x, (a, b) in zip(xs, spans):
        assert np.allclose(h.data[a:b], encode(x, enc).data, atol=1e-15)


def test_dimension_mismatch_rejected():
    with pytest.raises(ad.ShapeError):
        encode(np.zeros((4, 3)), Encoder(EncoderConfig(2, [3])))


def test_config_validation():
    with pytest.raises(ValueError):
        EncoderConfig(2, [3], subsampling=0)
    with pytest.raises(ValueError):
        EncoderConfig(2, [0])
    with pytest.raises(ValueError):
        FeatureSequence("u", "x", np.zeros((0, 2)))


def test_encode_is_pure(rng):
    enc = Encoder(EncoderConfig(3, [8, 4], seed=9))
    x = rng.normal(size=(7, 3))
    assert np.array_equal(encode(x, enc).data, encode(x, enc).data)
    assert np.array_equal(Encoder(EncoderConfig(3, [8, 4], seed=9)).layers[0][0].data, enc.layers[0][0].data)


def test_uniform_init_bounds():
    enc = Encoder(EncoderConfig(16, [8], seed=1))
    w, b = enc.layers[0]
    assert np.all(np.abs(w.data) <= 0.25) and np.all(np.abs(b.data) <= 0.25)


def test_zero_state_gives_uniform_posteriors():
    layer = OutputLayer(3, ["a", "b", "c"], weight=np.zeros((3, 4)), bias=np.zeros(4))
    out = softmax_out(ad.Tensor(np.zeros((2, 3))), layer)
    assert np.allclose(np.exp(out.values.data), 0.25, atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_frames_normalized(seed):
    rng = np.random.default_rng(seed)
    layer = OutputLayer(4, ["a", "b"], rng)
    out = softmax_out(ad.Tensor(rng.normal(scale=10, size=(5, 4))), layer)
    lse = np.logaddexp.reduce(out.values.data, axis=1)
    assert np.max(np.abs(lse)) <= 1e-9


def test_softmax_linear_space_oracle(rng):
    layer = OutputLayer(4, ["a", "b", "c"], rng)
    h = rng.normal(size=(3, 4))
    z = h @ layer.weight.data + layer.bias.data
    oracle = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    assert np.allclose(np.exp(softmax_out(ad.Tensor(h), layer).values.data), oracle, atol=1e-14)


def test_gradcheck_encode_softmax(rng):
    enc = Encoder(EncoderConfig(3, [4, 3], seed=2))
    layer = OutputLayer(3, ["a", "b"], rng)
    x = rng.uniform(-2, 2, (4, 3))
    weights = rng.uniform(-1, 1, (4, 3))
    report = ad.gradcheck(lambda: ad.reduce_sum(softmax_out(encode(x, enc), layer).values * weights),
                          enc.parameters() + layer.parameters(), tolerance=1e-4)
    assert report.passed, report.max_rel_error


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_end_to_end_gradient(universal, seed):
    rng = np.random.default_rng(seed)
    inv = universal.subset(["k", "q", "a"])
    g = AllophoneGraph(table(inv, [("k", "k"), ("k", "q"), ("q", "q"), ("a", "a")]), UC,
                       ad.Tensor(rng.uniform(-2, 2, 4)))
    enc = Encoder(EncoderConfig(3, [4], seed=seed))
    layer = OutputLayer(4, inv.symbols, rng)
    x = rng.uniform(-2, 2, (2, 3))
    report = ad.gradcheck(lambda: ctc_loss(compose(softmax_out(encode(x, enc), layer), g), [2]),
                          enc.parameters() + layer.parameters() + [g.params], tolerance=1e-3)
    assert report.passed, report.max_rel_error
