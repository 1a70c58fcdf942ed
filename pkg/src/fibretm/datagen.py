"""Synthetic transmission-matrix ensembles.

Three families are produced:

* ``forward``: banded complex Gaussian matrices whose power decays away from
  the main diagonal, with the singular spectrum clamped to a target condition
  number.
* ``roundtrip``: ``T_f^T R T_f`` where ``R`` is a random symmetric unitary
  reflector, giving dense matrices.
* ``physical``: products of bent-segment propagators ``exp(i (D + k C) L)``
  built from a step-index fibre's mode-group structure.

Every matrix is a pure function of its parameters and a per-item seed; item
seeds come from a splitmix64 stream over the master seed.
"""

from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .expm import unitary_propagator
from .matrix import ComplexTM, Family

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15

# Silica strain-optic coefficients used for the bend photoelastic correction.
_P11 = 0.12
_P12 = 0.27


def splitmix64(x: int) -> int:
    """One splitmix64 output for state ``x`` (already advanced)."""
    z = x & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(master_seed: int, index: int) -> int:
    """Seed of item ``index``: the (index+1)-th splitmix64 output from ``master_seed``."""
    return splitmix64((master_seed + (index + 1) * _GOLDEN) & _MASK64)


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed & _MASK64)


def _normalise(t: np.ndarray) -> np.ndarray:
    # common scale across families: ||T||_F^2 = n, as for a unitary matrix
    return t * (math.sqrt(t.shape[0]) / np.linalg.norm(t))


# ---------------------------------------------------------------------------
# forward TMs


@dataclass(frozen=True)
class ForwardTMParams:
    n: int = 78
    diag_power_decay: float = 0.4
    cond_min: float = 3.0
    cond_max: float = 10.0
    seed: int = 0
    band_floor: float = 1e-8  # relative band power below which entries are zero

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if not self.diag_power_decay > 0:
            raise ValueError("diag_power_decay must be positive")
        if not 0 < self.cond_min <= self.cond_max:
            raise ValueError("need 0 < cond_min <= cond_max")

    def band_profile(self) -> np.ndarray:
        """Expected power of each element, exp(-decay * |i - j|), truncated."""
        k = np.abs(np.subtract.outer(np.arange(self.n), np.arange(self.n))).astype(float)
        with np.errstate(invalid="ignore", over="ignore"):
            power = np.where(k == 0, 1.0, np.exp(-self.diag_power_decay * k))
        return np.where(power >= self.band_floor, power, 0.0)


def gen_forward_tm(params: ForwardTMParams, item_seed: int) -> ComplexTM:
    rng = _rng(item_seed)
    n = params.n
    amp = np.sqrt(params.band_profile())
    g = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) * (amp / math.sqrt(2))
    cond = rng.uniform(params.cond_min, params.cond_max)
    u, s, vh = np.linalg.svd(g)
    floor = s[0] / cond
    s = np.maximum(s, floor)
    s[-1] = floor
    t = (u * s) @ vh
    return ComplexTM(_normalise(t), family=Family.FORWARD, seed=item_seed)


# ---------------------------------------------------------------------------
# round-trip TMs


def gen_reflection_matrix(n: int, item_seed: int, phases: np.ndarray | None = None) -> ComplexTM:
    """Random symmetric unitary reflector Q diag(exp(i theta)) Q^T."""
    if n < 2:
        raise ValueError("n must be >= 2")
    rng = _rng(item_seed)
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
    theta = rng.uniform(-np.pi, np.pi, n) if phases is None else np.asarray(phases, dtype=float)
    refl = (q * np.exp(1j * theta)) @ q.T
    refl = 0.5 * (refl + refl.T)
    return ComplexTM(refl, seed=item_seed)


def gen_roundtrip_tm(t_f: ComplexTM, r: ComplexTM, normalise: bool = False) -> ComplexTM:
    """T_r = T_f^T R T_f."""
    if t_f.n != r.n:
        raise ValueError(f"dimension mismatch: T_f is {t_f.n}x{t_f.n}, R is {r.n}x{r.n}")
    t = t_f.data.T @ r.data @ t_f.data
    if normalise:
        t = _normalise(t)
    return ComplexTM(t, family=Family.ROUNDTRIP, seed=t_f.seed)


# ---------------------------------------------------------------------------
# physical segment-model TMs


@dataclass(frozen=True)
class PhysicalFibreParams:
    """One fibre realisation: z segments with their lengths and bend radii (metres).

    A bend radius of ``inf`` is a straight segment.
    """

    n: int = 78
    segment_lengths: tuple = (0.05,)
    bend_radii: tuple = (0.03,)
    seed: int = 0
    core_radius: float = 8e-6
    na: float = 0.22
    poisson_ratio: float = 0.17
    wavelength: float = 633e-9
    cladding_index: float = 1.457
    coupling_scale: float = 5e-4

    def __post_init__(self):
        object.__setattr__(self, "segment_lengths", tuple(float(x) for x in self.segment_lengths))
        object.__setattr__(self, "bend_radii", tuple(float(x) for x in self.bend_radii))
        if len(self.segment_lengths) != len(self.bend_radii) or not self.segment_lengths:
            raise ValueError("segment_lengths and bend_radii must be non-empty and of equal length")
        if any(x < 0 for x in self.segment_lengths):
            raise ValueError("segment lengths must be non-negative")
        if any(not x > 0 for x in self.bend_radii):
            raise ValueError("bend radii must be positive (use inf for a straight segment)")
        for name in ("core_radius", "na", "wavelength", "cladding_index"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.n > self.mode_count:
            raise ValueError(f"fibre supports {self.mode_count} modes, cannot build n={self.n}")

    @property
    def segment_count(self) -> int:
        return len(self.segment_lengths)

    @property
    def core_index(self) -> float:
        return math.sqrt(self.cladding_index ** 2 + self.na ** 2)

    @property
    def k0(self) -> float:
        return 2 * math.pi / self.wavelength

    @property
    def v_number(self) -> float:
        return self.k0 * self.core_radius * self.na

    @property
    def group_count(self) -> int:
        # step-index limit of the power-law profile: M = V / sqrt(2) principal groups
        return int(math.floor(self.v_number / math.sqrt(2)))

    @property
    def mode_count(self) -> int:
        g = self.group_count
        return g * (g + 1) // 2

    @property
    def photoelastic_factor(self) -> float:
        n1 = self.core_index
        return 1.0 - 0.5 * n1 ** 2 * (_P12 - self.poisson_ratio * (_P11 + _P12))

    def mode_groups(self) -> np.ndarray:
        """Principal mode-group number of each of the n lowest-order modes (group g holds g modes)."""
        groups = np.concatenate([np.full(g, g) for g in range(1, self.group_count + 1)])
        return groups[: self.n]

    def propagation_constants(self) -> np.ndarray:
        """beta_g = k n1 sqrt(1 - 2 Delta (g / M)^2) in rad/m, per mode."""
        n1, n2 = self.core_index, self.cladding_index
        delta = (n1 ** 2 - n2 ** 2) / (2 * n1 ** 2)
        m = self.v_number / math.sqrt(2)
        g = self.mode_groups().astype(float)
        return self.k0 * n1 * np.sqrt(1 - 2 * delta * (g / m) ** 2)


@dataclass(frozen=True)
class PhysicalEnsembleParams:
    """Distribution of fibre realisations for a physical dataset."""

    n: int = 78
    segment_count: int = 5
    length_range: tuple = (0.02, 0.1)
    bend_radius_range: tuple = (0.01, 0.05)
    core_radius: float = 8e-6
    na: float = 0.22
    poisson_ratio: float = 0.17
    wavelength: float = 633e-9
    cladding_index: float = 1.457
    coupling_scale: float = 5e-4
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "length_range", tuple(float(x) for x in self.length_range))
        object.__setattr__(self, "bend_radius_range", tuple(float(x) for x in self.bend_radius_range))
        if self.segment_count < 1:
            raise ValueError("segment_count must be >= 1")
        lo, hi = self.length_range
        if not 0 <= lo <= hi:
            raise ValueError("length_range must satisfy 0 <= lo <= hi")
        lo, hi = self.bend_radius_range
        if not 0 < lo <= hi:
            raise ValueError("bend_radius_range must satisfy 0 < lo <= hi")

    def draw(self, item_seed: int) -> PhysicalFibreParams:
        rng = _rng(item_seed)
        lengths = rng.uniform(*self.length_range, self.segment_count)
        radii = rng.uniform(*self.bend_radius_range, self.segment_count)
        return PhysicalFibreParams(
            n=self.n, segment_lengths=tuple(lengths), bend_radii=tuple(radii), seed=item_seed,
            core_radius=self.core_radius, na=self.na, poisson_ratio=self.poisson_ratio,
            wavelength=self.wavelength, cladding_index=self.cladding_index,
            coupling_scale=self.coupling_scale)


def bend_coupling_matrix(params: PhysicalFibreParams, segment_index: int) -> np.ndarray:
    """Hermitian coupling matrix with |C_pq| = 1 / (1 + |g_p - g_q|) and random phases."""
    rng = _rng(derive_seed(params.seed, segment_index))
    g = params.mode_groups()
    mag = 1.0 / (1.0 + np.abs(np.subtract.outer(g, g)))
    phase = rng.uniform(-np.pi, np.pi, (params.n, params.n))
    upper = np.triu(mag * np.exp(1j * phase), 1)
    return upper + upper.conj().T


def gen_segment_tm(params: PhysicalFibreParams, segment_index: int) -> ComplexTM:
    """exp(i (D + kappa C) L) for one segment."""
    if not 0 <= segment_index < params.segment_count:
        raise IndexError(f"segment_index {segment_index} out of range for {params.segment_count} segments")
    length = params.segment_lengths[segment_index]
    radius = params.bend_radii[segment_index]
    beta = params.propagation_constants()
    ref = beta[0]
    kappa = params.photoelastic_factor / radius
    h = np.diag(beta - ref).astype(np.complex128)
    if kappa > 0:
        scale = params.coupling_scale * params.k0 * params.core_index * params.core_radius * kappa
        h = h + scale * bend_coupling_matrix(params, segment_index)
    # the common phase exp(i beta_0 L) is applied exactly, outside the exponential
    t = unitary_propagator(h, length) * np.exp(1j * math.fmod(ref * length, 2 * math.pi))
    return ComplexTM(t, family=Family.PHYSICAL, seed=params.seed)


def gen_physical_tm(params: PhysicalFibreParams) -> ComplexTM:
    """T_e = T_s1 T_s2 ... T_sz."""
    t = gen_segment_tm(params, 0).data
    for i in range(1, params.segment_count):
        t = t @ gen_segment_tm(params, i).data
    return ComplexTM(t, family=Family.PHYSICAL, seed=params.seed)


# ---------------------------------------------------------------------------
# datasets


def split_sizes(count: int) -> tuple[int, int, int]:
    """Train/validation/test sizes in 8:2:1 proportion."""
    if count < 11:
        raise ValueError(f"count={count} is below the minimum of 11 needed for an 8:2:1 split")
    n_train = round(8 * count / 11)
    n_val = round(2 * count / 11)
    return n_train, n_val, count - n_train - n_val


def make_split(count: int, master_seed: int) -> dict[str, np.ndarray]:
    n_train, n_val, _ = split_sizes(count)
    perm = _rng(splitmix64(master_seed ^ 0x5EED5EED)).permutation(count)
    return {"train": np.sort(perm[:n_train]),
            "val": np.sort(perm[n_train:n_train + n_val]),
            "test": np.sort(perm[n_train + n_val:])}


@dataclass(eq=False)
class TMDataset:
    family: Family
    data: np.ndarray  # (count, n, n) complex128
    split: dict[str, np.ndarray] | None = None
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        self.family = Family(self.family)
        self.data = np.ascontiguousarray(self.data, dtype=np.complex128)
        if self.data.ndim != 3 or self.data.shape[1] != self.data.shape[2]:
            raise ValueError(f"dataset array must be (count, n, n), got {self.data.shape}")
        if self.split is not None:
            self.split = {k: np.asarray(v, dtype=np.int64) for k, v in self.split.items()}
            idx = np.concatenate([self.split[k] for k in ("train", "val", "test")])
            if not np.array_equal(np.sort(idx), np.arange(self.count)):
                raise ValueError("split sets must be disjoint and cover every index")

    @property
    def n(self) -> int:
        return self.data.shape[1]

    @property
    def count(self) -> int:
        return self.data.shape[0]

    @property
    def master_seed(self) -> int | None:
        return self.manifest.get("master_seed")

    def item_seed(self, index: int) -> int | None:
        ms = self.master_seed
        return None if ms is None else derive_seed(ms, index)

    def __len__(self):
        return self.count

    def __getitem__(self, index: int) -> ComplexTM:
        return ComplexTM(self.data[index], family=self.family, seed=self.item_seed(index))

    @property
    def tms(self) -> list[ComplexTM]:
        return [self[i] for i in range(self.count)]

    def subset(self, name: str) -> np.ndarray:
        if self.split is None:
            raise ValueError("dataset has no split")
        return self.data[self.split[name]]

    def resplit(self, master_seed: int | None = None) -> None:
        seed = self.master_seed if master_seed is None else master_seed
        self.split = make_split(self.count, seed or 0)

    def __eq__(self, other):
        if not isinstance(other, TMDataset):
            return NotImplemented
        if self.family != other.family or not np.array_equal(self.data, other.data):
            return False
        if (self.split is None) != (other.split is None):
            return False
        if self.split is not None:
            return all(np.array_equal(self.split[k], other.split[k]) for k in self.split)
        return True


def default_params(family: Family | str, n: int):
    family = Family(family)
    if family is Family.PHYSICAL:
        return PhysicalEnsembleParams(n=n)
    return ForwardTMParams(n=n)


def generate_item(family: Family | str, params, item_seed: int) -> ComplexTM:
    """One ensemble member of ``family``; deterministic in (params, item_seed)."""
    family = Family(family)
    if family is Family.FORWARD:
        return gen_forward_tm(params, item_seed)
    if family is Family.ROUNDTRIP:
        t_f = gen_forward_tm(params, splitmix64(item_seed ^ 0xF0F0F0F0))
        r = gen_reflection_matrix(params.n, splitmix64(item_seed ^ 0x0F0F0F0F))
        t = gen_roundtrip_tm(t_f, r, normalise=True)
        return ComplexTM(t.data, family=Family.ROUNDTRIP, seed=item_seed)
    fibre = params.draw(item_seed) if isinstance(params, PhysicalEnsembleParams) else params
    t = gen_physical_tm(fibre)
    return ComplexTM(t.data, family=Family.PHYSICAL, seed=item_seed)


def generate_ensemble(family, params, count: int, master_seed: int, threads: int = 1) -> np.ndarray:
    seeds = [derive_seed(master_seed, i) for i in range(count)]

    def one(seed):
        return generate_item(family, params, seed).data

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            items = list(pool.map(one, seeds))
    else:
        items = [one(s) for s in seeds]
    return np.stack(items) if items else np.zeros((0, params.n, params.n), np.complex128)


def build_dataset(family, params=None, count: int = 22000, master_seed: int = 0,
                  n: int = 78, threads: int = 1) -> TMDataset:
    """Deterministic ensemble with a seeded 8:2:1 split."""
    family = Family(family)
    params = default_params(family, n) if params is None else params
    split = make_split(count, master_seed)
    data = generate_ensemble(family, params, count, master_seed, threads=threads)
    manifest = {
        "family": family.value,
        "n": params.n,
        "count": count,
        "master_seed": master_seed,
        "item_seed_rule": "splitmix64(master_seed + (index + 1) * 0x9E3779B97F4A7C15)",
        "params": {"type": type(params).__name__, **dataclasses.asdict(params)},
        "split_sizes": dict(zip(("train", "val", "test"), split_sizes(count))),
    }
    return TMDataset(family=family, data=data, split=split, manifest=manifest)
