"""Matrix exponential by scaling and squaring with a truncated Taylor series."""

import numpy as np


def expm(a, theta=0.5, tol=1e-17, max_terms=40):
    """exp(a) for a dense square matrix.

    ``a`` is scaled by 2**-s so its 1-norm is at most ``theta``; the series is
    summed until the next term drops below ``tol`` relative, then the result is
    squared s times.
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expm needs a square matrix, got {a.shape}")
    dtype = np.result_type(a.dtype, np.float64)
    a = a.astype(dtype, copy=False)
    norm = np.abs(a).sum(axis=0).max() if a.size else 0.0
    s = 0
    if norm > theta:
        s = int(np.ceil(np.log2(norm / theta)))
    scaled = a / (2.0 ** s)

    n = a.shape[0]
    out = np.eye(n, dtype=dtype)
    term = np.eye(n, dtype=dtype)
    for k in range(1, max_terms + 1):
        term = term @ scaled / k
        out = out + term
        if np.abs(term).max() <= tol * np.abs(out).max():
            break
    for _ in range(s):
        out = out @ out
    return out


def unitary_propagator(hermitian, length):
    """exp(i * H * L) for Hermitian H; the generator i*H*L is skew-Hermitian.

    The result is re-orthonormalised with one Newton-Schulz polar step, which
    removes the rounding drift accumulated during squaring.
    """
    h = np.asarray(hermitian, dtype=np.complex128)
    gen = 1j * length * 0.5 * (h + h.conj().T)
    u = expm(gen)
    return 1.5 * u - 0.5 * u @ (u.conj().T @ u)
