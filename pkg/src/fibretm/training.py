"""Composite-loss training with validation early stopping.

The objective for a batch of m matrices T_i with transforms T'_i is

    L1 = alpha / m * sum_i ||T'_i||_1
    L2 = 1/m * sum_i ||D(T'_i) - T_i||^2        (invert decoder D)
    L3 = 1/m * sum_i ||A(T'_i) - T'_i||^2       (sparsity autoencoder A)

all on the real block representation.  The three networks are optimised
jointly.  For the linear similarity model D is the exact inverse B T' B^-1,
so L2 carries no gradient.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Tensor, clip_grad_norm
from .checkpoint import checkpoint_save
from .datagen import TMDataset
from .matrix import embed
from .models import Pipeline, build_pipeline

COMPONENTS = ("L1", "L2", "L3", "total")


class NonFiniteLossError(FloatingPointError):
    def __init__(self, component, value):
        super().__init__(f"loss component {component} is non-finite ({value})")
        self.component = component


class TrainingDivergedError(FloatingPointError):
    """Non-finite loss during training; the best checkpoint so far is kept."""

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass
class TrainConfig:
    model: str = "attention_fcnn"
    dataset: str | None = None
    alpha: float = 0.2
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    lr: float = 1e-3
    decay: float = 1e-5
    decay_mode: str = "lr"
    clip_norm: float = 10.0
    l1_target: str = "transformed"
    model_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")
        if self.l1_target not in ("transformed", "input"):
            raise ValueError("l1_target must be 'transformed' or 'input'")


@dataclass
class EpochRecord:
    epoch: int
    train: dict
    val: dict


@dataclass
class RunRecord:
    epochs: list = field(default_factory=list)
    best_epoch: int | None = None
    best_val_total: float | None = None
    checkpoint: str | None = None
    config_hash: str | None = None
    wall_clock: float = 0.0

    def __eq__(self, other):
        # wall-clock time is not part of the reproducibility contract
        if not isinstance(other, RunRecord):
            return NotImplemented
        return (self.epochs == other.epochs and self.best_epoch == other.best_epoch
                and self.best_val_total == other.best_val_total and self.config_hash == other.config_hash)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        d = {k: v for k, v in d.items() if k in known}  # artifact stamps are not record fields
        d["epochs"] = [EpochRecord(**e) for e in d.get("epochs", [])]
        return cls(**d)

    def log_lines(self):
        for e in self.epochs:
            t = e.train
            yield (f"epoch={e.epoch} L1={t['L1']:.10g} L2={t['L2']:.10g} L3={t['L3']:.10g} "
                   f"total={t['total']:.10g} val_total={e.val['total']:.10g}")


def total_loss(pipeline: Pipeline, batch: np.ndarray, alpha: float = 0.2, l1_target: str = "transformed"):
    """Composite loss for a complex (m, n, n) batch; returns (total tensor, float components)."""
    x_np = embed(batch)
    m, dim = x_np.shape[0], x_np.shape[1] ** 2
    x = Tensor(x_np)
    tp = pipeline.model(x)
    l1 = ad.scale(ad.l1_mean(tp if l1_target == "transformed" else x), alpha)
    flat = ad.reshape(tp, (m, dim))
    target = Tensor(x_np.reshape(m, dim))
    if pipeline.exact_inverse:
        recon = Tensor(pipeline.model.invert(tp.data).reshape(m, dim))
    else:
        recon = pipeline.pair.invert_decoder(flat)
    l2 = ad.mse_mean(recon, target)
    _, sae_out = pipeline.pair.sparsity_ae(flat)
    l3 = ad.mse_mean(sae_out, flat)
    total = ad.add(ad.add(l1, l2), l3)
    comps = {"L1": float(l1.data), "L2": float(l2.data), "L3": float(l3.data)}
    comps["total"] = comps["L1"] + comps["L2"] + comps["L3"]
    for k, v in comps.items():
        if not np.isfinite(v):
            raise NonFiniteLossError(k, v)
    return total, comps


def evaluate_loss(pipeline: Pipeline, data: np.ndarray, alpha=0.2, l1_target="transformed", chunk=128) -> dict:
    """Sample-weighted mean loss components over ``data`` with frozen parameters."""
    sums = dict.fromkeys(COMPONENTS, 0.0)
    with ad.no_grad():
        for start in range(0, len(data), chunk):
            part = data[start:start + chunk]
            _, comps = total_loss(pipeline, part, alpha, l1_target)
            for k in COMPONENTS:
                sums[k] += comps[k] * len(part)
    return {k: v / len(data) for k, v in sums.items()}


def pipeline_from_config(config: TrainConfig, n: int) -> Pipeline:
    return build_pipeline(config.model, n, seed=config.seed, **config.model_options)


def train(config: TrainConfig, dataset: TMDataset, out_dir=None, pipeline: Pipeline | None = None,
          config_hash: str | None = None, log=None, callback=None, extra: dict | None = None):
    """Train on the train split, early-stop on validation total loss.

    Returns ``(RunRecord, pipeline)`` with the pipeline holding the
    best-validation parameters.  With ``out_dir`` the best checkpoint
    (``best.tmck``), the per-epoch log and a JSON summary are written there.
    ``callback(epoch_record, pipeline)`` runs after every epoch; ``extra`` is
    stored in the checkpoint header.
    """
    if dataset.split is None:
        raise ValueError("dataset has no train/val/test split")
    start_time = time.perf_counter()
    pipeline = pipeline or pipeline_from_config(config, dataset.n)
    params = pipeline.parameters()
    opt = Adam(params, lr=config.lr, decay=config.decay, decay_mode=config.decay_mode)
    train_data = dataset.subset("train")
    val_data = dataset.subset("val")
    out_dir = Path(out_dir) if out_dir is not None else None
    ckpt_path = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        ckpt_path = out_dir / "best.tmck"

    record = RunRecord(config_hash=config_hash, checkpoint=str(ckpt_path) if ckpt_path else None)
    best_state = pipeline.state()
    best_total = np.inf
    stale = 0

    def save_best():
        if ckpt_path is not None:
            checkpoint_save(ckpt_path, pipeline, opt.state_dict(), config_hash=config_hash,
                            extra={"best_epoch": record.best_epoch, "train_config": asdict(config), **(extra or {})})

    for epoch in range(1, config.max_epochs + 1):
        rng = np.random.default_rng([config.seed, epoch])
        order = rng.permutation(len(train_data))
        sums = dict.fromkeys(COMPONENTS, 0.0)
        try:
            for b in range(0, len(order), config.batch_size):
                batch = train_data[order[b:b + config.batch_size]]
                opt.zero_grad()
                loss, comps = total_loss(pipeline, batch, config.alpha, config.l1_target)
                ad.backward(loss)
                grads = {k: p.grad for k, p in params.items()}
                clip_grad_norm(grads, config.clip_norm)
                opt.step(grads)
                if hasattr(pipeline.model, "check_condition"):
                    pipeline.model.check_condition()
                for k in COMPONENTS:
                    sums[k] += comps[k] * len(batch)
            val = evaluate_loss(pipeline, val_data, config.alpha, config.l1_target)
            if not np.isfinite(val["total"]):
                raise NonFiniteLossError("total", val["total"])
        except (NonFiniteLossError, ad.NonFiniteGradientError) as exc:
            pipeline.load_state(best_state)
            raise TrainingDivergedError(f"training diverged in epoch {epoch}: {exc}", ckpt_path) from exc

        train_means = {k: v / len(train_data) for k, v in sums.items()}
        record.epochs.append(EpochRecord(epoch=epoch, train=train_means, val=val))
        if log is not None:
            log(next(iter(RunRecord(epochs=[record.epochs[-1]]).log_lines())))
        if callback is not None:
            callback(record.epochs[-1], pipeline)
        if val["total"] < best_total:
            best_total = val["total"]
            best_state = pipeline.state()
            record.best_epoch = epoch
            record.best_val_total = float(best_total)
            stale = 0
            save_best()
        else:
            stale += 1
            if stale >= config.patience:
                break

    pipeline.load_state(best_state)
    record.wall_clock = time.perf_counter() - start_time
    if out_dir is not None:
        (out_dir / "run.log").write_text("\n".join(record.log_lines()) + "\n", encoding="utf-8")
        (out_dir / "run.json").write_text(json.dumps(record.to_dict(), indent=1), encoding="utf-8")
    return record, pipeline
