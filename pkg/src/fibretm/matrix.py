"""Dense complex/real matrix types, the real block embedding, LU solves and
the participation ratio."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.linalg import lapack


class Family(str, enum.Enum):
    FORWARD = "forward"
    ROUNDTRIP = "roundtrip"
    PHYSICAL = "physical"

    @property
    def code(self) -> int:
        return _FAMILY_CODES[self]

    @classmethod
    def from_code(cls, code: int) -> "Family":
        for fam, c in _FAMILY_CODES.items():
            if c == code:
                return fam
        raise ValueError(f"unknown family code {code}")


_FAMILY_CODES = {Family.FORWARD: 0, Family.ROUNDTRIP: 1, Family.PHYSICAL: 2}


class SingularMatrixError(ArithmeticError):
    """Raised when a factorization meets a pivot that is zero to tolerance."""

    def __init__(self, message: str, pivot_magnitude: float):
        super().__init__(message)
        self.pivot_magnitude = pivot_magnitude


@dataclass(frozen=True, eq=False)
class ComplexTM:
    """An n x n complex transmission matrix plus provenance."""

    data: np.ndarray
    family: Family | None = None
    seed: int | None = None

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.complex128)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise ValueError(f"ComplexTM must be square, got shape {data.shape}")
        if data.shape[0] < 2:
            raise ValueError("ComplexTM needs n >= 2")
        if not np.all(np.isfinite(data)):
            raise ValueError("ComplexTM data contains non-finite values")
        if self.family is not None:
            object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other):
        if not isinstance(other, ComplexTM):
            return NotImplemented
        return (self.family == other.family and self.seed == other.seed
                and np.array_equal(self.data, other.data))


@dataclass(frozen=True)
class RealBlockTM:
    """2n x 2n real matrix, normally the [[Re, -Im], [Im, Re]] embedding."""

    data: np.ndarray

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise ValueError(f"RealBlockTM must be square, got shape {data.shape}")
        object.__setattr__(self, "data", data)

    @property
    def m(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class LUFactorization:
    """Row-pivoted LU factors, ``a[perm] == L @ U``."""

    lu: np.ndarray
    pivots: np.ndarray
    sign: int
    _lapack_piv: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.lu.shape[0]

    def lower(self) -> np.ndarray:
        return np.tril(self.lu, -1) + np.eye(self.n)

    def upper(self) -> np.ndarray:
        return np.triu(self.lu)

    def reconstruct(self) -> np.ndarray:
        """Return P @ L @ U, which equals the factored matrix."""
        out = np.empty_like(self.lu)
        out[self.pivots] = self.lower() @ self.upper()
        return out

    def det(self) -> complex:
        return self.sign * np.prod(np.diag(self.lu))


def _as_array(t) -> np.ndarray:
    if isinstance(t, (ComplexTM, RealBlockTM)):
        return t.data
    return np.asarray(t)


def embed(a: np.ndarray) -> np.ndarray:
    """Array-level block embedding; works on (..., n, n) stacks."""
    a = np.asarray(a)
    re, im = a.real, a.imag
    top = np.concatenate([re, -im], axis=-1)
    bottom = np.concatenate([im, re], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def unembed(r: np.ndarray) -> np.ndarray:
    """Array-level inverse of :func:`embed`, averaging the redundant blocks."""
    r = np.asarray(r, dtype=np.float64)
    m = r.shape[-1]
    if m % 2 or r.shape[-2] != m:
        raise ValueError(f"real block matrix must be square with even size, got {r.shape[-2:]}")
    n = m // 2
    tl, tr = r[..., :n, :n], r[..., :n, n:]
    bl, br = r[..., n:, :n], r[..., n:, n:]
    return 0.5 * (tl + br) + 0.5j * (bl - tr)


def complex_to_real_block(t: ComplexTM | np.ndarray) -> RealBlockTM:
    data = _as_array(t)
    if not np.all(np.isfinite(data)):
        raise ValueError("cannot embed a non-finite matrix")
    return RealBlockTM(embed(data))


def real_block_to_complex(r: RealBlockTM | np.ndarray, family=None, seed=None) -> ComplexTM:
    return ComplexTM(unembed(_as_array(r)), family=family, seed=seed)


def participation_ratio(t: ComplexTM | np.ndarray) -> float:
    """Fraction of occupied elements, 1/n^2 (one element) to 1 (uniform).

    The matrix is normalised to unit Frobenius norm first, so the value is
    invariant to any nonzero complex rescaling.
    """
    a = _as_array(t)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"participation ratio needs a square matrix, got {a.shape}")
    power = np.abs(a) ** 2
    total = power.sum()
    if not total > 0:
        raise ValueError("participation ratio is undefined for an all-zero matrix")
    power = power / total
    return float(1.0 / (np.sum(power ** 2) * a.size))


def participation_ratios(stack: np.ndarray) -> np.ndarray:
    """Vectorised :func:`participation_ratio` over a (k, n, n) stack."""
    power = np.abs(np.asarray(stack)) ** 2
    total = power.sum(axis=(-2, -1))
    if np.any(total <= 0):
        raise ValueError("participation ratio is undefined for an all-zero matrix")
    power = power / total[..., None, None]
    size = stack.shape[-1] * stack.shape[-2]
    return 1.0 / (np.sum(power ** 2, axis=(-2, -1)) * size)


def condition_estimate(a: np.ndarray, lu: LUFactorization | None = None) -> float:
    """LAPACK 1-norm reciprocal condition estimate, returned as kappa_1."""
    a = np.asarray(a, dtype=np.complex128)
    lu = lu or lu_factor(a, check=False)
    anorm = np.abs(a).sum(axis=0).max()
    rcond, info = lapack.zgecon(lu.lu, anorm, norm="1")
    if info != 0 or rcond == 0:
        return np.inf
    return float(1.0 / rcond)


def lu_factor(a: ComplexTM | np.ndarray, pivot_tol: float = 1e-13, check: bool = True) -> LUFactorization:
    """Partial-pivoting LU of a square complex matrix.

    With ``check`` a pivot smaller than ``pivot_tol * max|a|`` raises
    :class:`SingularMatrixError`.
    """
    a = np.asarray(_as_array(a), dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"lu_factor needs a square matrix, got {a.shape}")
    with warnings.catch_warnings():
        # exact zero pivots are reported below with their magnitude
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=True)
    n = a.shape[0]
    perm = np.arange(n)
    swaps = 0
    for i, p in enumerate(piv):
        if p != i:
            perm[[i, p]] = perm[[p, i]]
            swaps += 1
    fac = LUFactorization(lu=lu, pivots=perm, sign=-1 if swaps % 2 else 1, _lapack_piv=piv)
    if check:
        scale = np.abs(a).max()
        smallest = float(np.abs(np.diag(lu)).min())
        if scale == 0 or smallest <= pivot_tol * scale:
            raise SingularMatrixError(f"matrix is singular to tolerance (pivot magnitude {smallest:.3e})", smallest)
    return fac


def lu_solve(b_mat: ComplexTM | np.ndarray, rhs: ComplexTM | np.ndarray,
             cond_ceiling: float = 1e12, family=None, seed=None) -> ComplexTM:
    """Solve ``b_mat @ X = rhs`` for X."""
    a = np.asarray(_as_array(b_mat), dtype=np.complex128)
    y = np.asarray(_as_array(rhs), dtype=np.complex128)
    x = solve_array(a, y, cond_ceiling=cond_ceiling)
    return ComplexTM(x, family=family, seed=seed)


def solve_array(a: np.ndarray, y: np.ndarray, cond_ceiling: float = 1e12) -> np.ndarray:
    if y.shape[0] != a.shape[0]:
        raise ValueError(f"rhs has {y.shape[0]} rows, matrix has {a.shape[0]}")
    fac = lu_factor(a)
    cond = condition_estimate(a, fac)
    if cond > cond_ceiling:
        raise SingularMatrixError(f"condition estimate {cond:.3e} exceeds ceiling {cond_ceiling:.1e}",
                                  float(np.abs(np.diag(fac.lu)).min()))
    return scipy.linalg.lu_solve((fac.lu, fac._lapack_piv), y)
