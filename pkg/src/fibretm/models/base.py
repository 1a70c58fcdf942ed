from __future__ import annotations

import numpy as np

from ..autodiff import Tensor

ARCH_VERSION = 1


def glorot(rng, fan_in, fan_out, shape):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape)


class Module:
    """A set of named parameter tensors plus a forward map.

    Subclasses fill ``self.params`` in ``__init__`` and record the arguments
    needed to rebuild themselves in ``self.hparams``.
    """

    name = "module"

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.hparams: dict = {}

    @property
    def arch(self) -> str:
        return f"{self.name}/v{ARCH_VERSION}"

    def param(self, key, value) -> Tensor:
        t = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)
        self.params[key] = t
        return t

    def parameters(self, prefix="") -> dict[str, Tensor]:
        return {prefix + k: v for k, v in self.params.items()}

    def parameter_count(self) -> int:
        return int(sum(p.data.size for p in self.params.values()))

    def state(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for k, p in self.params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"parameter {k!r}: stored shape {arr.shape} != model shape {p.shape}")
            p.data = arr.copy()

    def __call__(self, x):
        return self.forward(x)

    def forward(self, x):
        raise NotImplementedError
