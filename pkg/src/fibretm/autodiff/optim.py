import numpy as np


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, name):
        super().__init__(f"non-finite gradient for parameter {name!r}")
        self.name = name


class Adam:
    """Bias-corrected Adam with inverse-time learning-rate decay.

    The rate used for update t (0-based count of completed updates) is
    ``lr / (1 + decay * t)``.  With ``decay_mode="weight"`` the decay value is
    instead applied as L2 weight decay added to the gradient and the rate stays
    fixed.
    """

    def __init__(self, params, lr=1e-3, decay=1e-5, beta1=0.9, beta2=0.999, eps=1e-8,
                 decay_mode="lr"):
        if decay_mode not in ("lr", "weight"):
            raise ValueError(f"decay_mode must be 'lr' or 'weight', got {decay_mode!r}")
        self.params = dict(params)
        self.lr = lr
        self.decay = decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.decay_mode = decay_mode
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def effective_rate(self, step=None):
        step = self.step_count if step is None else step
        if self.decay_mode == "weight":
            return self.lr
        return self.lr / (1.0 + self.decay * step)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self, grads=None):
        """Apply one update; ``grads`` defaults to each parameter's ``.grad``."""
        if grads is None:
            grads = {k: p.grad for k, p in self.params.items()}
        for name, g in grads.items():
            if g is not None and not np.all(np.isfinite(g)):
                raise NonFiniteGradientError(name)
        rate = self.effective_rate()
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            g = grads.get(name)
            if g is None:
                continue
            if self.decay_mode == "weight" and self.decay:
                g = g + self.decay * p.data
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= rate * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self):
        return {"step": self.step_count, "m": {k: v.copy() for k, v in self.m.items()},
                "v": {k: v.copy() for k, v in self.v.items()},
                "hparams": {"lr": self.lr, "decay": self.decay, "beta1": self.beta1,
                            "beta2": self.beta2, "eps": self.eps, "decay_mode": self.decay_mode}}

    def load_state_dict(self, state):
        self.step_count = int(state["step"])
        for k in self.params:
            self.m[k] = np.array(state["m"][k], dtype=np.float64)
            self.v[k] = np.array(state["v"][k], dtype=np.float64)


def clip_grad_norm(grads, max_norm):
    """Scale all gradients so their global L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values() if g is not None)))
    if max_norm and total > max_norm:
        factor = max_norm / total
        for k, g in grads.items():
            if g is not None:
                grads[k] = g * factor
    return total
