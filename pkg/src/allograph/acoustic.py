"""Desk-scale frame encoder and phone output layer.

The encoder is a feed-forward stack applied to each feature frame,
optionally followed by mean pooling over groups of ``subsampling`` frames.
Because it works frame by frame, a batch of utterances is encoded as one
concatenated matrix; pooling is a constant matrix product.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .wfst import LOGIT, EmissionLattice, log_softmax_lattice

NONLINEARITIES = {"tanh": ad.tanh, "relu": ad.relu, "none": None}


@dataclass
class FeatureSequence:
    utterance_id: str
    language: str
    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1:
            raise ValueError(f"{self.utterance_id}: features must be a non-empty T x F matrix")

    @property
    def num_frames(self):
        return self.frames.shape[0]


@dataclass
class EncoderConfig:
    input_dim: int
    hidden_dims: list = field(default_factory=lambda: [32])
    subsampling: int = 1
    nonlinearity: str = "tanh"
    init: str = "uniform"
    seed: int = 0

    def __post_init__(self):
        if not self.hidden_dims or min(self.hidden_dims) < 1:
            raise ValueError("hidden dimensions must be >= 1")
        if self.subsampling < 1:
            raise ValueError("subsampling factor must be >= 1")
        if self.nonlinearity not in NONLINEARITIES:
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")
        if self.init not in ("uniform", "identity"):
            raise ValueError(f"unknown init {self.init!r}")

    @property
    def output_dim(self):
        return self.hidden_dims[-1]


def uniform_init(rng, fan_in, shape):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Encoder:
    def __init__(self, config, rng=None):
        self.config = config
        rng = np.random.default_rng(config.seed) if rng is None else rng
        self.layers = []
        fan_in = config.input_dim
        for k, width in enumerate(config.hidden_dims):
            if config.init == "identity":
                w, b = np.eye(fan_in, width), np.zeros(width)
            else:
                w, b = uniform_init(rng, fan_in, (fan_in, width)), uniform_init(rng, fan_in, width)
            self.layers.append((ad.Tensor(w, requires_grad=True, name=f"enc{k}.W"),
                                ad.Tensor(b, requires_grad=True, name=f"enc{k}.b")))
            fan_in = width

    def parameters(self):
        return [p for layer in self.layers for p in layer]

    def frames(self, x):
        """Hidden states of a (frames x F) matrix, no subsampling."""
        x = ad.as_tensor(x)
        if x.data.ndim != 2 or x.shape[1] != self.config.input_dim:
            raise ad.ShapeError(f"encoder expects F={self.config.input_dim}, got features of shape {x.shape}")
        act = NONLINEARITIES[self.config.nonlinearity]
        h = x
        for w, b in self.layers:
            h = ad.matmul(h, w) + b
            if act is not None:
                h = act(h)
        return h

    def batch(self, sequences):
        """Encode several sequences at once; returns (hidden tensor, row spans)."""
        lengths = [s.num_frames if isinstance(s, FeatureSequence) else len(s) for s in sequences]
        stacked = np.concatenate([s.frames if isinstance(s, FeatureSequence) else np.asarray(s, float)
                                  for s in sequences])
        h = self.frames(stacked)
        if self.config.subsampling == 1:
            return h, _spans(lengths)
        pool, out_lengths = pooling_matrix(lengths, self.config.subsampling)
        return ad.matmul(ad.Tensor(pool), h), _spans(out_lengths)

    def __call__(self, x):
        frames = x.frames if isinstance(x, FeatureSequence) else x
        h, _ = self.batch([frames])
        return h


def encode(x, encoder):
    """Hidden states h for one utterance, T' = ceil(T / subsampling) rows."""
    return encoder(x)


def _spans(lengths):
    ends = np.cumsum(lengths)
    return [(int(e - n), int(e)) for n, e in zip(lengths, ends)]


def subsampled_length(num_frames, factor):
    return -(-num_frames // factor)


def pooling_matrix(lengths, factor):
    """Mean-pooling operator over groups of ``factor`` frames within each utterance."""
    out_lengths = [subsampled_length(n, factor) for n in lengths]
    pool = np.zeros((sum(out_lengths), sum(lengths)))
    row, col = 0, 0
    for n in lengths:
        for start in range(0, n, factor):
            stop = min(start + factor, n)
            pool[row, col + start:col + stop] = 1.0 / (stop - start)
            row += 1
        col += n
    return pool, out_lengths


class OutputLayer:
    """Affine projection from hidden states to ``symbols`` plus blank (column 0)."""

    def __init__(self, input_dim, symbols, rng=None, name="out", weight=None, bias=None):
        self.symbols = tuple(symbols)
        n_out = len(self.symbols) + 1
        rng = np.random.default_rng(0) if rng is None else rng
        if weight is None:
            weight = uniform_init(rng, input_dim, (input_dim, n_out))
        if bias is None:
            bias = uniform_init(rng, input_dim, n_out)
        self.weight = ad.Tensor(weight, requires_grad=True, name=f"{name}.W")
        self.bias = ad.Tensor(bias, requires_grad=True, name=f"{name}.b")
        if self.weight.shape != (input_dim, n_out) or self.bias.shape != (n_out,):
            raise ad.ShapeError(f"output layer needs ({input_dim}, {n_out}) weights")

    def parameters(self):
        return [self.weight, self.bias]

    def logits(self, h):
        return EmissionLattice(ad.matmul(h, self.weight) + self.bias, self.symbols, LOGIT)

    def __call__(self, h):
        return softmax_out(h, self)


def softmax_out(h, layer):
    """Frame-normalized log posteriors over the layer's symbols plus blank."""
    return log_softmax_lattice(layer.logits(h))
