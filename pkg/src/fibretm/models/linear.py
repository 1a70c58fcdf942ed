"""Learned similarity transform T' = B^-1 T B with a complex basis matrix B."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from ..autodiff import Tensor, make
from ..matrix import SingularMatrixError, condition_estimate, embed, lu_factor, unembed
from .base import Module


def _batched_solve(fac, rhs, trans=0):
    # solve B X_i = rhs_i for a (k, n, n) stack with one factorization
    k, n, _ = rhs.shape
    stacked = np.ascontiguousarray(rhs.transpose(1, 0, 2)).reshape(n, k * n)
    x = scipy.linalg.lu_solve((fac.lu, fac._lapack_piv), stacked, trans=trans)
    return x.reshape(n, k, n).transpose(1, 0, 2)


def similarity(b: Tensor, t: np.ndarray, pivot_tol=1e-13) -> Tensor:
    """Block-embedded B^-1 T B for a stack of complex T.

    ``b`` holds (Re B, Im B) as a (2, n, n) tensor.  The backward pass uses
    d(B^-1) = -B^-1 dB B^-1, giving, with G the complex output gradient,
    dL/dB = sum_i T_i^H W_i - W_i T'_i^H where W_i = B^-H G_i.
    """
    bc = b.data[0] + 1j * b.data[1]
    fac = lu_factor(bc, pivot_tol=pivot_tol)
    x = _batched_solve(fac, t)
    tp = x @ bc

    def bw(g):
        n = bc.shape[0]
        gc = (g[:, :n, :n] + g[:, n:, n:]) + 1j * (g[:, n:, :n] - g[:, :n, n:])
        w = _batched_solve(fac, gc, trans=2)
        gb = np.einsum("kji,kjl->il", t.conj(), w) - np.einsum("kij,klj->il", w, tp.conj())
        return (np.stack([gb.real, gb.imag]),)

    return make(embed(tp), (b,), bw, "similarity")


class LinearSimilarity(Module):
    name = "linear"

    def __init__(self, n, seed=0, init_eps=0.01, cond_ceiling=1e8):
        super().__init__()
        self.n = n
        self.cond_ceiling = cond_ceiling
        self.hparams = {"n": n, "init_eps": init_eps, "cond_ceiling": cond_ceiling}
        rng = np.random.default_rng(seed)
        b = np.stack([np.eye(n), np.zeros((n, n))]) + init_eps * rng.standard_normal((2, n, n))
        self.param("b", b)

    @property
    def basis(self) -> np.ndarray:
        d = self.params["b"].data
        return d[0] + 1j * d[1]

    def forward(self, x: Tensor) -> Tensor:
        return similarity(self.params["b"], unembed(x.data))

    def transform_complex(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=np.complex128)
        single = t.ndim == 2
        t = t[None] if single else t
        out = _batched_solve(lu_factor(self.basis), t) @ self.basis
        return out[0] if single else out

    def invert_complex(self, tp: np.ndarray) -> np.ndarray:
        """B T' B^-1, the exact inverse of the forward map."""
        tp = np.asarray(tp, dtype=np.complex128)
        single = tp.ndim == 2
        tp = tp[None] if single else tp
        bc = self.basis
        # Y = B T' B^-1  <=>  B^T Y^T = (B T')^T
        rhs = np.swapaxes(bc @ tp, -1, -2)
        y = np.swapaxes(_batched_solve(lu_factor(bc), rhs, trans=1), -1, -2)
        return y[0] if single else y

    def invert(self, x: np.ndarray) -> np.ndarray:
        """Inverse on block-embedded arrays."""
        return embed(self.invert_complex(unembed(x)))

    def check_condition(self) -> float:
        cond = condition_estimate(self.basis)
        if not cond <= self.cond_ceiling:
            raise SingularMatrixError(
                f"basis condition estimate {cond:.3e} exceeds ceiling {self.cond_ceiling:.1e}",
                float(np.abs(np.diag(lu_factor(self.basis, check=False).lu)).min()))
        return cond
