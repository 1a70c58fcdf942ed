"""Basis-transformation models and the constraint autoencoders."""

from __future__ import annotations

import math

import numpy as np

from .. import autodiff as ad
from ..autodiff import Tensor
from ..matrix import embed, unembed
from .autoencoder import AutoencoderPair, InvertDecoder, SparsityAE
from .base import Module
from .linear import LinearSimilarity, similarity
from .nonlinear import CNN, FCNN, Attention, AttentionFCNN

MODEL_NAMES = ("linear", "cnn", "fcnn", "attention", "attention_fcnn")

__all__ = [
    "MODEL_NAMES", "CNN", "FCNN", "Attention", "AttentionFCNN", "AutoencoderPair", "InvertDecoder",
    "LinearSimilarity", "Module", "Pipeline", "SparsityAE", "build_model", "build_pipeline", "similarity",
]


def build_model(name, n, seed=0, fcnn_width=650, cnn_channels=(16, 32, 72, 112), softmax_axis="row",
                init_eps=0.01, cond_ceiling=1e8, attn_identity_gain="auto", fcnn_identity_init=True) -> Module:
    if name == "linear":
        return LinearSimilarity(n, seed=seed, init_eps=init_eps, cond_ceiling=cond_ceiling)
    if name == "cnn":
        return CNN(n, channels=cnn_channels, seed=seed)
    if name == "fcnn":
        return FCNN(n, width=fcnn_width, seed=seed, identity_init=fcnn_identity_init)
    if name == "attention":
        return Attention(n, seed=seed, softmax_axis=softmax_axis, identity_gain=attn_identity_gain)
    if name == "attention_fcnn":
        return AttentionFCNN(n, width=fcnn_width, seed=seed, softmax_axis=softmax_axis,
                             identity_gain=attn_identity_gain, identity_init=fcnn_identity_init)
    raise ValueError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")


class Pipeline:
    """Transformation model plus its sparsity autoencoder and invert decoder.

    Inputs are complex (k, n, n) stacks at the numpy boundary and
    (k, 2n, 2n) real block tensors inside the graph.
    """

    def __init__(self, model: Module, pair: AutoencoderPair):
        self.model = model
        self.pair = pair
        self.build_kwargs: dict | None = None

    @property
    def n(self) -> int:
        return self.model.n

    @property
    def exact_inverse(self) -> bool:
        return isinstance(self.model, LinearSimilarity)

    def parameters(self) -> dict[str, Tensor]:
        params = self.model.parameters("model.")
        params.update(self.pair.parameters())
        return params

    def modules(self) -> dict[str, Module]:
        return {"model": self.model, "sae": self.pair.sparsity_ae, "inv": self.pair.invert_decoder}

    def state(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.parameters().items()}

    def load_state(self, state) -> None:
        for k, p in self.parameters().items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"parameter {k!r}: stored shape {arr.shape} != model shape {p.shape}")
            p.data = arr.copy()

    def describe(self) -> dict:
        return {name: {"arch": m.arch, "hparams": m.hparams} for name, m in self.modules().items()}

    def transform(self, t: np.ndarray) -> np.ndarray:
        """Real block outputs (k, 2n, 2n) for a complex stack (k, n, n)."""
        with ad.no_grad():
            return self.model(Tensor(embed(t))).data

    def transform_complex(self, t: np.ndarray) -> np.ndarray:
        return unembed(self.transform(t))

    def reconstruct(self, transformed: np.ndarray) -> np.ndarray:
        """Original-basis real block matrices recovered from transformed ones."""
        if self.exact_inverse:
            return self.model.invert(transformed)
        k, m, _ = transformed.shape
        with ad.no_grad():
            flat = Tensor(transformed.reshape(k, m * m))
            return self.pair.invert_decoder(flat).data.reshape(k, m, m)


def build_pipeline(name, n, seed=0, ae_bottleneck=None, ae_bottleneck_frac=0.04, ae_hidden="auto",
                   invert_hidden="auto", **model_kwargs) -> Pipeline:
    dim = (2 * n) ** 2
    s = ae_bottleneck or max(1, math.ceil(ae_bottleneck_frac * dim))
    model = build_model(name, n, seed=seed, **model_kwargs)
    pair = AutoencoderPair(SparsityAE(dim, s, hidden=ae_hidden, seed=seed + 101),
                           InvertDecoder(dim, hidden=invert_hidden, seed=seed + 202))
    pipe = Pipeline(model, pair)
    pipe.build_kwargs = dict(name=name, n=n, seed=seed, ae_bottleneck=s, ae_hidden=ae_hidden,
                             invert_hidden=invert_hidden, **model_kwargs)
    return pipe
