"""Non-linear basis transformations over 2n x 2n real block matrices.

All four models map a (batch, 2n, 2n) tensor to the same shape.  The FCNN
treats each column as a token and applies one shared two-layer map to it; the
attention block mixes rows with weights softmax(Q K^T / sqrt(d_k)) where
Q = T W_q and K = T W_k.
"""

from __future__ import annotations

import math

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from .base import Module, glorot

LEAKY_SLOPE = 0.3


class FCNN(Module):
    """Shared per-column map 2n -> width -> 2n with a leaky-ReLU hidden layer.

    With ``identity_init`` (and ``width >= 4n``) the first 4n hidden units
    start as the pair (x, -x), which the second layer recombines into x, so
    the network begins at the identity map plus ``init_noise`` times Glorot
    noise.  Narrower networks fall back to a plain Glorot start.
    """

    name = "fcnn"

    def __init__(self, n, width=650, seed=0, identity_init=True, init_noise=0.1):
        super().__init__()
        m = 2 * n
        self.n, self.width = n, width
        identity_init = bool(identity_init) and width >= 2 * m
        self.hparams = {"n": n, "width": width, "identity_init": identity_init}
        rng = np.random.default_rng(seed)
        w1 = glorot(rng, m, width, (m, width))
        w2 = glorot(rng, width, m, (width, m))
        if identity_init:
            eye = np.eye(m)
            w1 = init_noise * w1
            w2 = init_noise * w2
            w1[:, :m] += eye
            w1[:, m:2 * m] -= eye
            # leaky(x) - leaky(-x) = (1 + slope) x
            w2[:m] += eye / (1 + LEAKY_SLOPE)
            w2[m:2 * m] -= eye / (1 + LEAKY_SLOPE)
        self.param("w1", w1)
        self.param("b1", np.zeros(width))
        self.param("w2", w2)
        self.param("b2", np.zeros(m))

    def forward(self, x: Tensor) -> Tensor:
        p = self.params
        cols = ad.transpose(x)  # (B, column, feature)
        h = ad.leaky_relu(ad.dense(cols, p["w1"], p["b1"]), LEAKY_SLOPE)
        return ad.transpose(ad.dense(h, p["w2"], p["b2"]))


class CNN(Module):
    """Four conv(3x3) + maxpool stages, then four upsample + conv stages.

    The input is zero-padded at the high edges to a multiple of 16 and the
    output cropped back.  The last convolution is linear.
    """

    name = "cnn"

    def __init__(self, n, channels=(16, 32, 72, 112), seed=0):
        super().__init__()
        if len(channels) != 4:
            raise ValueError("CNN needs exactly four channel widths")
        self.n = n
        self.channels = tuple(int(c) for c in channels)
        self.hparams = {"n": n, "channels": list(self.channels)}
        m = 2 * n
        self.padded = -(-m // 16) * 16
        self.padding = self.padded - m
        rng = np.random.default_rng(seed)
        enc = (1,) + self.channels
        for i in range(4):
            self._conv(rng, f"enc{i}", enc[i], enc[i + 1])
        dec = self.channels[::-1] + (1,)
        for i in range(4):
            self._conv(rng, f"dec{i}", dec[i], dec[i + 1])

    def _conv(self, rng, key, cin, cout):
        self.param(key + "_w", glorot(rng, cin * 9, cout * 9, (cout, cin, 3, 3)))
        self.param(key + "_b", np.zeros(cout))

    def forward(self, x: Tensor) -> Tensor:
        p = self.params
        bsz, m, _ = x.shape
        h = ad.reshape(x, (bsz, 1, m, m))
        h = ad.pad2d(h, self.padding, self.padding)
        for i in range(4):
            h = ad.maxpool2d(ad.leaky_relu(ad.conv2d(h, p[f"enc{i}_w"], p[f"enc{i}_b"]), LEAKY_SLOPE))
        for i in range(4):
            h = ad.conv2d(ad.upsample2d(h), p[f"dec{i}_w"], p[f"dec{i}_b"])
            if i < 3:
                h = ad.leaky_relu(h, LEAKY_SLOPE)
        if self.padding:
            h = ad.getitem(h, (slice(None), slice(None), slice(0, m), slice(0, m)))
        return ad.reshape(h, (bsz, m, m))


def default_identity_gain(n) -> float:
    # diagonal scores ~ gain^2 / sqrt(2n) for unit-norm rows; this keeps them near 2.9
    return 1.7 * (2 * n) ** 0.25


class Attention(Module):
    """A = softmax(Q K^T / sqrt(2n)), output A T.

    The projections start at ``identity_gain * I`` plus Glorot noise, so the
    initial weights favour each row's own position instead of averaging all
    rows (which would erase the input).  ``identity_gain=0`` gives a plain
    Glorot start.
    """

    name = "attention"

    def __init__(self, n, seed=0, softmax_axis="row", identity_gain="auto"):
        super().__init__()
        if softmax_axis not in ("row", "column"):
            raise ValueError("softmax_axis must be 'row' or 'column'")
        m = 2 * n
        self.n, self.d_k = n, m
        self.softmax_axis = softmax_axis
        gain = default_identity_gain(n) if identity_gain == "auto" else float(identity_gain)
        self.hparams = {"n": n, "softmax_axis": softmax_axis, "identity_gain": gain}
        rng = np.random.default_rng(seed)
        self.param("w_q", glorot(rng, m, m, (m, m)) + gain * np.eye(m))
        self.param("w_k", glorot(rng, m, m, (m, m)) + gain * np.eye(m))

    def weights(self, x: Tensor) -> Tensor:
        """Attention matrix A; rows (or columns) are probability vectors."""
        q = ad.matmul(x, self.params["w_q"])
        k = ad.matmul(x, self.params["w_k"])
        scores = ad.scale(ad.matmul(q, ad.transpose(k)), 1.0 / math.sqrt(self.d_k))
        return ad.softmax(scores, axis=-1 if self.softmax_axis == "row" else -2)

    def forward(self, x: Tensor) -> Tensor:
        return ad.matmul(self.weights(x), x)


class AttentionFCNN(Module):
    name = "attention_fcnn"

    def __init__(self, n, width=650, seed=0, softmax_axis="row", identity_gain="auto", identity_init=True):
        super().__init__()
        self.attention = Attention(n, seed=seed, softmax_axis=softmax_axis, identity_gain=identity_gain)
        self.fcnn = FCNN(n, width=width, seed=seed + 1, identity_init=identity_init)
        self.n = n
        self.hparams = {"n": n, "width": width, **self.attention.hparams,
                        "identity_init": self.fcnn.hparams["identity_init"]}
        self.params = {**self.attention.parameters("attn."), **self.fcnn.parameters("fcnn.")}

    def forward(self, x: Tensor) -> Tensor:
        return self.fcnn(self.attention(x))
