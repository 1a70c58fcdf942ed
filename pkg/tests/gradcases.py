"""Seeded gradient-check instances for every autodiff operator, shared by the
unit tests and the acceptance suite."""

import numpy as np

from fibretm import autodiff as ad
from fibretm.autodiff import Tensor

SEEDS = range(20)


def leaf(rng, *shape, away_from_zero=False):
    x = rng.standard_normal(shape)
    if away_from_zero:
        # keep kinks of |x| and leaky_relu outside the finite-difference stencil
        x = np.where(np.abs(x) < 1e-2, 0.5, x)
    return Tensor(x, requires_grad=True)


# each builder returns (loss_fn, params) for one seeded instance
def case_matmul(rng):
    a, b = leaf(rng, 2, 3, 4), leaf(rng, 4, 5)
    r = rng.standard_normal((2, 3, 5))
    return lambda: ad.sum(ad.mul(ad.matmul(a, b), Tensor(r))), {"a": a, "b": b}


def case_add_bias(rng):
    a, b = leaf(rng, 3, 4), leaf(rng, 4)
    r = rng.standard_normal((3, 4))
    return lambda: ad.sum(ad.mul(ad.add(a, b), Tensor(r))), {"a": a, "b": b}


def case_mul_scale(rng):
    a, b = leaf(rng, 3, 3), leaf(rng, 3, 3)
    return lambda: ad.sum(ad.scale(ad.mul(a, ad.mul(a, b)), -1.7)), {"a": a, "b": b}


def case_transpose_reshape(rng):
    a = leaf(rng, 2, 3, 4)
    r = rng.standard_normal((4, 6))
    return lambda: ad.sum(ad.mul(ad.reshape(ad.transpose(a), (4, 6)), Tensor(r))), {"a": a}


def case_getitem_pad(rng):
    a = leaf(rng, 2, 5, 5)
    r = rng.standard_normal((2, 5, 4))
    return lambda: ad.sum(ad.mul(ad.pad2d(ad.getitem(a, (slice(None), slice(1, 4), slice(0, 3))), 2, 1),
                                 Tensor(r))), {"a": a}


def case_leaky_relu(rng):
    a = leaf(rng, 4, 5, away_from_zero=True)
    r = rng.standard_normal((4, 5))
    return lambda: ad.sum(ad.mul(ad.leaky_relu(a), Tensor(r))), {"a": a}


def case_softmax(rng, axis=-1):
    a = leaf(rng, 3, 4, 5)
    r = rng.standard_normal((3, 4, 5))
    return lambda: ad.sum(ad.mul(ad.softmax(a, axis=axis), Tensor(r))), {"a": a}


def case_dense(rng):
    x, w, b = leaf(rng, 2, 3, 4), leaf(rng, 4, 3), leaf(rng, 3)
    r = rng.standard_normal((2, 3, 3))
    return lambda: ad.sum(ad.mul(ad.dense(x, w, b), Tensor(r))), {"x": x, "w": w, "b": b}


def case_conv2d(rng):
    x, w, b = leaf(rng, 2, 3, 6, 5), leaf(rng, 4, 3, 3, 3), leaf(rng, 4)
    r = rng.standard_normal((2, 4, 6, 5))
    return lambda: ad.sum(ad.mul(ad.conv2d(x, w, b), Tensor(r))), {"x": x, "w": w, "b": b}


def case_maxpool(rng):
    x = leaf(rng, 2, 2, 4, 6)
    r = rng.standard_normal((2, 2, 2, 3))
    return lambda: ad.sum(ad.mul(ad.maxpool2d(x), Tensor(r))), {"x": x}


def case_upsample(rng):
    x = leaf(rng, 1, 2, 3, 2)
    r = rng.standard_normal((1, 2, 6, 4))
    return lambda: ad.sum(ad.mul(ad.upsample2d(x), Tensor(r))), {"x": x}


def case_l1(rng):
    x = leaf(rng, 3, 4, away_from_zero=True)
    return lambda: ad.l1_mean(x), {"x": x}


def case_mse(rng):
    a, b = leaf(rng, 3, 4), leaf(rng, 3, 4)
    return lambda: ad.mse_mean(a, b), {"a": a, "b": b}


def case_three_op_graph(rng):
    a, b = leaf(rng, 3, 3), leaf(rng, 3, 3)
    return lambda: ad.sum(ad.leaky_relu(ad.add(ad.matmul(a, b), a))), {"a": a, "b": b}


CASES = [case_matmul, case_add_bias, case_mul_scale, case_transpose_reshape, case_getitem_pad,
         case_leaky_relu, case_softmax, case_dense, case_conv2d, case_maxpool, case_upsample, case_l1,
         case_mse, case_three_op_graph]
