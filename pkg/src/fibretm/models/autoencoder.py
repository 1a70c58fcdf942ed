"""The two constraint networks: a bottlenecked sparsity autoencoder over the
transformed matrix, and a decoder that recovers the original matrix."""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from .base import Module, glorot
from .nonlinear import LEAKY_SLOPE


def _mlp_params(mod, rng, prefix, sizes):
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        mod.param(f"{prefix}{i}_w", glorot(rng, a, b, (a, b)))
        mod.param(f"{prefix}{i}_b", np.zeros(b))


def _mlp(mod, prefix, x, depth, final_activation=False):
    p = mod.params
    for i in range(depth):
        x = ad.dense(x, p[f"{prefix}{i}_w"], p[f"{prefix}{i}_b"])
        if i < depth - 1 or final_activation:
            x = ad.leaky_relu(x, LEAKY_SLOPE)
    return x


class SparsityAE(Module):
    """dim -> [hidden] -> s -> [hidden] -> dim; ``hidden=None`` gives a linear AE.

    ``hidden`` defaults to ``min(4 s, dim)``.
    """

    name = "sparsity_ae"

    def __init__(self, dim, bottleneck, hidden="auto", seed=0):
        super().__init__()
        if not 0 < bottleneck < dim:
            raise ValueError(f"bottleneck must satisfy 0 < s < {dim}, got {bottleneck}")
        if hidden == "auto":
            hidden = min(4 * bottleneck, dim)
        self.dim, self.bottleneck, self.hidden = dim, bottleneck, hidden
        self.hparams = {"dim": dim, "bottleneck": bottleneck, "hidden": hidden}
        rng = np.random.default_rng(seed)
        mid = () if hidden is None else (hidden,)
        self.depth = len(mid) + 1
        _mlp_params(self, rng, "enc", (dim,) + mid + (bottleneck,))
        _mlp_params(self, rng, "dec", (bottleneck,) + mid + (dim,))

    def encode(self, x: Tensor) -> Tensor:
        return _mlp(self, "enc", x, self.depth)

    def decode(self, z: Tensor) -> Tensor:
        return _mlp(self, "dec", z, self.depth)

    def forward(self, x: Tensor):
        """Returns (LS1 bottleneck activation, reconstruction)."""
        _check_dim(x, self.dim)
        z = self.encode(x)
        return z, self.decode(z)


class InvertDecoder(Module):
    """dim -> hidden -> dim map from the transformed matrix back to the original."""

    name = "invert_decoder"

    def __init__(self, dim, hidden="auto", seed=0):
        super().__init__()
        if hidden == "auto":
            hidden = dim
        self.dim, self.hidden = dim, hidden
        self.hparams = {"dim": dim, "hidden": hidden}
        rng = np.random.default_rng(seed)
        mid = () if hidden is None else (hidden,)
        self.depth = len(mid) + 1
        _mlp_params(self, rng, "dec", (dim,) + mid + (dim,))

    def forward(self, x: Tensor) -> Tensor:
        _check_dim(x, self.dim)
        return _mlp(self, "dec", x, self.depth)


def _check_dim(x, dim):
    if x.shape[-1] != dim:
        raise ad.ShapeError(f"expected flattened input of length {dim}, node {x.id} has shape {x.shape}")


class AutoencoderPair:
    def __init__(self, sparsity_ae: SparsityAE, invert_decoder: InvertDecoder):
        self.sparsity_ae = sparsity_ae
        self.invert_decoder = invert_decoder

    def parameters(self):
        return {**self.sparsity_ae.parameters("sae."), **self.invert_decoder.parameters("inv.")}
