"""Training loop: Adam, cosine annealing with warm restarts, evaluation.

Training samples random patches (random image, random crop) per step,
averages the pixel L1 loss over the batch, and applies Adam updates under
a cosine-annealed learning rate that restarts at `restart_period` steps
(default: one cosine over the whole run). Everything is driven by one
seeded generator, so a rerun reproduces the loss curve bit for bit.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..model import ModelConfig, ModelParams, forward, l1_loss
from ..numerics import Tensor, no_grad
from .data import DatasetRecord, load_dataset, load_prior_map
from .metrics import psnr, ssim


@dataclass
class TrainConfig:
    lr_initial: float = 2e-4
    lr_final: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    batch: int = 4
    steps: int = 2000
    patch: int = 16
    restart_period: int = 0  # 0 means one cosine over all steps
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.lr_final <= self.lr_initial:
            raise ValueError(
                f"need 0 < lr_final <= lr_initial, got "
                f"{self.lr_final} / {self.lr_initial}"
            )
        for name in ("beta1", "beta2"):
            value = getattr(self, name)
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must be in (0, 1), got {value}")
        if min(self.batch, self.steps, self.patch) < 1:
            raise ValueError("batch, steps, patch must be >= 1")
        if self.patch & (self.patch - 1):
            raise ValueError(f"patch must be a power of two, got {self.patch}")
        if self.restart_period < 0:
            raise ValueError("restart_period must be >= 0")


def cosine_restart_lr(step: int, config: TrainConfig) -> float:
    """Cosine from lr_initial to lr_final, resetting every restart period."""
    period = config.restart_period or config.steps
    t = step % period
    span = config.lr_initial - config.lr_final
    return config.lr_final + 0.5 * span * (1.0 + math.cos(math.pi * t / period))


class Adam:
    """Moment-tracking optimizer over a named parameter collection."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.99,
                 eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, named_params, lr: float) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in named_params:
            if p.grad is None:
                continue
            g = p.grad
            m = self._m.setdefault(name, np.zeros_like(p.data))
            v = self._v.setdefault(name, np.zeros_like(p.data))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass
class LoadedItem:
    record: DatasetRecord
    clean: np.ndarray
    degraded: np.ndarray
    prior: np.ndarray | None


@dataclass
class EvalReport:
    psnr_db: float
    ssim: float
    per_image: list[tuple[str, float, float]] = field(default_factory=list)


def load_items(root: str | Path, records: list[DatasetRecord],
               need_prior: bool) -> list[LoadedItem]:
    items = []
    for record in records:
        prior = load_prior_map(root, record.image_id) if need_prior else None
        items.append(LoadedItem(record, record.load_clean(),
                                record.load_degraded(), prior))
    return items


def split_records(records: list[DatasetRecord],
                  test_count: int) -> tuple[list[DatasetRecord], list[DatasetRecord]]:
    if not 0 < test_count < len(records):
        raise ValueError(
            f"test_count must leave a non-empty train split "
            f"({test_count} of {len(records)})"
        )
    return records[:-test_count], records[-test_count:]


def _upscale(config: ModelConfig) -> int:
    return config.scale_factor if config.task == "super_resolve" else 1


def _sample_patch(item: LoadedItem, patch: int, upscale: int,
                  rng: np.random.Generator):
    h, w = item.degraded.shape
    if patch > min(h, w):
        raise ValueError(
            f"patch {patch} exceeds degraded extents {item.degraded.shape}"
        )
    y = int(rng.integers(0, h - patch + 1))
    x = int(rng.integers(0, w - patch + 1))
    lq = item.degraded[y:y + patch, x:x + patch]
    target = item.clean[y * upscale:(y + patch) * upscale,
                        x * upscale:(x + patch) * upscale]
    prior = None
    if item.prior is not None:
        prior = item.prior[y:y + patch, x:x + patch]
    return lq, prior, target


def train_model(model_config: ModelConfig, train_config: TrainConfig,
                items: list[LoadedItem],
                progress=None) -> tuple[ModelParams, list[tuple[int, float, float]]]:
    """Train from scratch on loaded items; returns params and the loss curve."""
    if not items:
        raise ValueError("training set is empty")
    need_prior = model_config.prior != "none"
    for item in items:
        if need_prior and item.prior is None:
            raise FileNotFoundError(
                f"no prior loaded for image {item.record.image_id!r}"
            )
    rng = np.random.default_rng(train_config.seed)
    params = ModelParams.init(model_config, rng)
    named = list(params.named_parameters())
    optimizer = Adam(train_config.beta1, train_config.beta2, train_config.eps)
    upscale = _upscale(model_config)
    history = []
    for step in range(train_config.steps):
        lr = cosine_restart_lr(step, train_config)
        loss_sum = None
        for _ in range(train_config.batch):
            item = items[int(rng.integers(len(items)))]
            lq, prior, target = _sample_patch(item, train_config.patch,
                                              upscale, rng)
            pred = forward(Tensor(lq[None]),
                           None if prior is None else Tensor(prior[None]),
                           params, model_config)
            loss = l1_loss(pred, Tensor(target[None]))
            loss_sum = loss if loss_sum is None else loss_sum + loss
        total = loss_sum * (1.0 / train_config.batch)
        for _, p in named:
            p.grad = None
        total.backward()
        optimizer.step(named, lr)
        history.append((step, lr, total.item()))
        if progress is not None and (step + 1) % max(1, train_config.steps // 10) == 0:
            progress(step + 1, train_config.steps, total.item())
    return params, history


def evaluate_model(params: ModelParams, config: ModelConfig,
                   items: list[LoadedItem], peak: float = 1.0) -> EvalReport:
    """Full-image restoration metrics over a test split."""
    if not items:
        raise ValueError("evaluation set is empty")
    per_image = []
    with no_grad():
        for item in items:
            prior = None if item.prior is None else Tensor(item.prior[None])
            restored = forward(Tensor(item.degraded[None]), prior, params,
                               config).data[0]
            per_image.append((item.record.image_id,
                              psnr(restored, item.clean, peak),
                              ssim(restored, item.clean, peak)))
    mean_psnr = float(np.mean([p for _, p, _ in per_image]))
    mean_ssim = float(np.mean([s for _, _, s in per_image]))
    return EvalReport(psnr_db=mean_psnr, ssim=mean_ssim, per_image=per_image)


def degraded_input_report(items: list[LoadedItem], peak: float = 1.0,
                          upscale: int = 1) -> EvalReport:
    """Metrics of the unrestored degraded input (the no-op baseline)."""
    per_image = []
    for item in items:
        degraded = item.degraded
        if upscale > 1:
            degraded = np.kron(degraded, np.ones((upscale, upscale)))
        per_image.append((item.record.image_id,
                          psnr(degraded, item.clean, peak),
                          ssim(degraded, item.clean, peak)))
    mean_psnr = float(np.mean([p for _, p, _ in per_image]))
    mean_ssim = float(np.mean([s for _, _, s in per_image]))
    return EvalReport(psnr_db=mean_psnr, ssim=mean_ssim, per_image=per_image)


def train_on_dataset(root: str | Path, model_config: ModelConfig,
                     train_config: TrainConfig, test_count: int = 4,
                     progress=None):
    """Convenience wrapper: split, load, train; returns params, history, items."""
    records = load_dataset(root)
    train_records, test_records = split_records(records, test_count)
    need_prior = model_config.prior != "none"
    train_items = load_items(root, train_records, need_prior)
    test_items = load_items(root, test_records, need_prior)
    params, history = train_model(model_config, train_config, train_items,
                                  progress)
    return params, history, train_items, test_items


def write_loss_curve(path: str | Path, history) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "lr", "loss"])
        for step, lr, loss in history:
            writer.writerow([step, f"{lr:.10g}", f"{loss:.12g}"])


def write_eval_report(path: str | Path, report: EvalReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image_id", "psnr_db", "ssim"])
        for image_id, p, s in report.per_image:
            writer.writerow([image_id, f"{p:.6g}", f"{s:.8g}"])
        writer.writerow(["mean", f"{report.psnr_db:.6g}", f"{report.ssim:.8g}"])
