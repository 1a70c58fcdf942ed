"""Test-split metrics: participation ratio, latent-space ratio and
reconstruction error."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Tensor
from .matrix import embed, participation_ratios, unembed
from .models import Pipeline, SparsityAE

DEFAULT_TAU = 0.10


class DegenerateTransformError(ValueError):
    """The model mapped a test matrix to all zeros, so p is undefined."""


class MonotonicityError(RuntimeError):
    """A larger bottleneck failed where a smaller one passed, even after retries."""


@dataclass
class MetricsRecord:
    dataset: str
    family: str
    model: str
    p_mean: float
    p_std: float
    ls_ratio_pct: float | None = None
    ls_overflow: bool = False
    err_mean: float = 0.0
    err_std: float = 0.0
    tau: float = DEFAULT_TAU
    config_hash: str = ""

    def __post_init__(self):
        if not 0 < self.p_mean <= 1 + 1e-12:
            raise ValueError(f"p_mean must lie in (0, 1], got {self.p_mean}")
        if self.ls_ratio_pct is not None and not 0 < self.ls_ratio_pct <= 100:
            raise ValueError(f"ls_ratio_pct must lie in (0, 100], got {self.ls_ratio_pct}")
        if self.err_mean < 0 or self.err_std < 0 or self.p_std < 0:
            raise ValueError("errors and deviations must be non-negative")


def eval_participation(pipeline: Pipeline, test: np.ndarray, transformed: np.ndarray | None = None):
    """Mean and std of p over the transformed test matrices (converted back to complex)."""
    tp = pipeline.transform(test) if transformed is None else transformed
    c = unembed(tp)
    power = (np.abs(c) ** 2).sum(axis=(1, 2))
    if np.any(power == 0):
        bad = int(np.flatnonzero(power == 0)[0])
        raise DegenerateTransformError(f"transform of test matrix {bad} is all zeros")
    p = participation_ratios(c)
    return float(p.mean()), float(p.std())


def relative_errors(recon: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Per-matrix ||recon - target||^2 / ||target||^2."""
    axes = tuple(range(1, target.ndim))
    return ((recon - target) ** 2).sum(axis=axes) / (target ** 2).sum(axis=axes)


def eval_mean_error(pipeline: Pipeline, test: np.ndarray, transformed: np.ndarray | None = None):
    """Mean and std of the relative squared reconstruction error of the original matrices."""
    tp = pipeline.transform(test) if transformed is None else transformed
    err = relative_errors(pipeline.reconstruct(tp), embed(test))
    return float(err.mean()), float(err.std())


# ---------------------------------------------------------------------------
# latent-space ratio


@dataclass
class LSResult:
    ratio_pct: float | None
    s_star: int | None
    overflow: bool
    ladder_max: int
    dim: int
    tau: float
    errors: dict = field(default_factory=dict)  # bottleneck -> test relative error
    retries: int = 0

    def label(self) -> str:
        if self.overflow:
            return f">{100.0 * self.ladder_max / self.dim:.2f}%"
        return f"{self.ratio_pct:.2f}%"


def default_ladder_root(m: int) -> int:
    # 128 of 156 at full scale (n = 78), i.e. the ">67.32%" ceiling
    return max(1, int(round(m * 128 / 156)))


def _warm_start(new: SparsityAE, old: SparsityAE | None):
    if old is None:
        return
    for k, p in new.params.items():
        src = old.params[k].data
        region = tuple(slice(0, min(a, b)) for a, b in zip(p.shape, src.shape))
        p.data[region] = src[region]


def fit_autoencoder(data: np.ndarray, bottleneck: int, epochs=30, batch_size=32, seed=0,
                    hidden="auto", lr=1e-3, warm: SparsityAE | None = None) -> SparsityAE:
    """Train a sparsity autoencoder on flattened rows of ``data`` (k, dim)."""
    dim = data.shape[1]
    ae = SparsityAE(dim, bottleneck, hidden=hidden, seed=seed)
    _warm_start(ae, warm)
    opt = Adam(ae.parameters(), lr=lr, decay=0.0)
    for epoch in range(epochs):
        order = np.random.default_rng([seed, bottleneck, epoch]).permutation(len(data))
        for b in range(0, len(order), batch_size):
            x = Tensor(data[order[b:b + batch_size]])
            opt.zero_grad()
            _, out = ae(x)
            ad.backward(ad.mse_mean(out, x))
            opt.step()
    return ae


def _ae_error(ae: SparsityAE, data: np.ndarray) -> float:
    with ad.no_grad():
        _, out = ae(Tensor(data))
    return float(relative_errors(out.data, data).mean())


def ls_ratio_search(train_transformed: np.ndarray, test_transformed: np.ndarray | None = None,
                    tau: float = DEFAULT_TAU, ladder_max_root: int | None = None, epochs: int = 30,
                    batch_size: int = 32, seed: int = 0, hidden="auto", max_retries: int = 2,
                    lr: float = 1e-3) -> LSResult:
    """Smallest square bottleneck s = r^2 whose autoencoder reaches relative error <= tau.

    Roots are probed on a doubling grid 1, 2, 4, ... up to the ladder maximum,
    then bisected between the last failing and first passing root, and one
    confirmation probe at twice the found root checks that a larger bottleneck
    also passes.  Each autoencoder is warm-started from the previously trained
    one, so the probe order matters.  If a larger bottleneck fails where a
    smaller one passed,
    the larger point is retrained with twice the epochs (up to
    ``max_retries`` times) before :class:`MonotonicityError` is raised.
    """
    train = np.asarray(train_transformed, dtype=np.float64)
    test = train if test_transformed is None else np.asarray(test_transformed, dtype=np.float64)
    m = train.shape[-1]
    train = train.reshape(len(train), -1)
    test = test.reshape(len(test), -1)
    dim = train.shape[1]
    scale = math.sqrt(np.mean((train ** 2).sum(axis=1))) or 1.0
    train, test = train / scale, test / scale * 1.0
    r_max = min(ladder_max_root or default_ladder_root(m), int(math.isqrt(dim - 1)))
    result = LSResult(None, None, False, r_max * r_max, dim, tau)
    passed: dict[int, bool] = {}
    last: list[SparsityAE | None] = [None]

    def probe(r, ep=epochs):
        s = r * r
        ae = fit_autoencoder(train, s, epochs=ep, batch_size=batch_size, seed=seed, hidden=hidden, lr=lr,
                             warm=last[0])
        last[0] = ae
        err = _ae_error(ae, test)
        result.errors[s] = err
        passed[r] = err <= tau
        return passed[r]

    def check_monotone(r):
        # any smaller passing root with this one failing is a violation
        return not (not passed[r] and any(passed[q] for q in passed if q < r))

    def probe_checked(r):
        ok = probe(r)
        ep = epochs
        while not check_monotone(r):
            if result.retries >= max_retries:
                raise MonotonicityError(f"bottleneck {r * r} fails after a smaller one passed")
            result.retries += 1
            ep *= 2
            ok = probe(r, ep)
        return ok

    grid = []
    r = 1
    while r < r_max:
        grid.append(r)
        r *= 2
    grid.append(r_max)
    lo, hi = 0, None
    for r in grid:
        if probe_checked(r):
            hi = r
            break
        lo = r
    if hi is None:
        result.overflow = True
        return result
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if probe_checked(mid):
            hi = mid
        else:
            lo = mid
    # confirmation probe above s*: a larger bottleneck must pass as well
    above = min(2 * hi, r_max)
    if above > hi and above not in passed:
        probe_checked(above)
    result.s_star = hi * hi
    result.ratio_pct = 100.0 * result.s_star / dim
    return result


def evaluate(pipeline: Pipeline, test: np.ndarray, *, dataset: str, family: str, model: str,
             tau: float = DEFAULT_TAU, config_hash: str = "", ls_train: np.ndarray | None = None,
             ls_options: dict | None = None) -> MetricsRecord:
    """All metrics for one trained pipeline; the LS search runs only when ``ls_train`` is given."""
    tp = pipeline.transform(test)
    p_mean, p_std = eval_participation(pipeline, test, tp)
    err_mean, err_std = eval_mean_error(pipeline, test, tp)
    ls_pct, overflow = None, False
    if ls_train is not None:
        res = ls_ratio_search(pipeline.transform(ls_train), tp, tau=tau, **(ls_options or {}))
        overflow = res.overflow
        ls_pct = 100.0 * res.ladder_max / res.dim if overflow else res.ratio_pct
    return MetricsRecord(dataset=dataset, family=family, model=model, p_mean=p_mean, p_std=p_std,
                         ls_ratio_pct=ls_pct, ls_overflow=overflow, err_mean=err_mean, err_std=err_std,
                         tau=tau, config_hash=config_hash)
