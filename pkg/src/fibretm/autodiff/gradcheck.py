from dataclasses import dataclass, field

import numpy as np

from .tensor import backward


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    per_param: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error <= self.tolerance)


def gradient_check(loss_fn, params, tolerance=1e-4, step=1e-5, max_checks=None, seed=0):
    """Compare analytic gradients of ``loss_fn()`` with central differences.

    ``params`` maps names to leaf tensors that ``loss_fn`` closes over.  The
    error per parameter is ``||analytic - numeric|| / max(||analytic||, ||numeric||)``
    over the checked coordinates; at most ``max_checks`` coordinates per
    parameter are probed, chosen with a seeded generator.
    """
    params = dict(params)
    for p in params.values():
        p.grad = None
    loss = loss_fn()
    backward(loss)
    analytic = {k: (np.zeros_like(p.data) if p.grad is None else p.grad.copy()) for k, p in params.items()}

    rng = np.random.default_rng(seed)
    report = GradCheckReport(max_rel_error=0.0, tolerance=tolerance)
    for name, p in params.items():
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_checks is not None and flat.size > max_checks:
            idx = np.sort(rng.choice(flat.size, max_checks, replace=False))
        numeric = np.empty(idx.size)
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + step
            up = float(loss_fn().data)
            flat[i] = orig - step
            down = float(loss_fn().data)
            flat[i] = orig
            numeric[j] = (up - down) / (2 * step)
        a = analytic[name].reshape(-1)[idx]
        denom = max(np.linalg.norm(a), np.linalg.norm(numeric))
        err = 0.0 if denom == 0 else float(np.linalg.norm(a - numeric) / denom)
        report.per_param[name] = err
        report.max_rel_error = max(report.max_rel_error, err)
    for p in params.values():
        p.grad = None
    return report
