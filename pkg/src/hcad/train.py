"""BCE contrastive objective, gradients (with a finite-difference check), Adam and the epoch loop."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import torch

from .graph import AttributedGraph
from .manifold import DIAGNOSTICS
from .model import Batch, HCADModel, ModelConfig, collate
from .sampler import RwrConfig, sample_epoch

log = logging.getLogger(__name__)

PROB_EPS = 1e-7


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    weight_decay: float = 1e-4
    epochs: int = 100
    batch_size: int = 300
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("betas must lie in (0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")


@dataclass
class LossStats:
    saturation_events: int = 0


def bce_loss(q, y, reduction: str = "sum", stats: LossStats | None = None) -> torch.Tensor:
    """-sum_i [y_i log q_i + (1 - y_i) log(1 - q_i)], q clamped to [eps, 1 - eps]."""
    q = torch.as_tensor(q, dtype=torch.float64)
    y = torch.as_tensor(y, dtype=torch.float64)
    outside = (q < PROB_EPS) | (q > 1 - PROB_EPS)
    if stats is not None:
        stats.saturation_events += int(outside.sum())
    q = torch.clamp(q, PROB_EPS, 1 - PROB_EPS)
    per = -(y * torch.log(q) + (1 - y) * torch.log1p(-q))
    if reduction == "sum":
        return per.sum()
    if reduction == "mean":
        return per.mean()
    if reduction == "none":
        return per
    raise ValueError(f"unknown reduction {reduction!r}")


def batch_loss(model: HCADModel, batch: Batch, training: bool = False, generator=None,
               stats: LossStats | None = None, trace=None) -> torch.Tensor:
    """Mean BCE over the batch (the training objective)."""
    q = model(batch, training=training, generator=generator, trace=trace)
    return bce_loss(q, batch.labels, reduction="mean", stats=stats)


def compute_gradients(model: HCADModel, batch: Batch, training: bool = False, generator=None,
                      stats: LossStats | None = None) -> tuple[float, dict[str, torch.Tensor]]:
    """Loss value and d(loss)/d(param) for every named parameter (reverse mode)."""
    model.zero_grad(set_to_none=True)
    loss = batch_loss(model, batch, training, generator, stats)
    loss.backward()
    grads = {}
    for name, p in model.named_parameters():
        g = torch.zeros_like(p) if p.grad is None else p.grad.detach().clone()
        if not bool(torch.isfinite(g).all()):
            raise TrainingError(f"non-finite gradient in parameter {name!r}")
        grads[name] = g
    return float(loss.detach()), grads


class AdamState:
    """Adam moments for one parameter set (classic Adam with L2 folded into the gradient)."""

    def __init__(self, params: dict[str, torch.Tensor], cfg: TrainConfig):
        self.names = sorted(params)
        self.optimizer = torch.optim.Adam(
            [params[k] for k in self.names],
            lr=cfg.lr,
            betas=(cfg.beta1, cfg.beta2),
            eps=cfg.adam_eps,
            weight_decay=cfg.weight_decay,
            foreach=False,
        )


def adam_step(params: dict[str, torch.Tensor], grads: dict[str, torch.Tensor],
              state: AdamState | None, cfg: TrainConfig) -> AdamState:
    if state is None:
        state = AdamState(params, cfg)
    if set(grads) != set(params):
        raise KeyError("gradient set does not match parameter set")
    for name in state.names:
        p = params[name]
        if grads[name].shape != p.shape:
            raise ValueError(f"gradient shape mismatch for {name!r}")
        p.grad = grads[name].clone()
    state.optimizer.step()
    return state


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    clamp_events: int
    saturation_events: int = 0


@dataclass
class TrainResult:
    model: HCADModel
    trace: list[EpochRecord] = field(default_factory=list)
    final_batch: Batch | None = None
    final_batch_loss: float | None = None


def _batch_generator(seed: int, epoch: int, index: int) -> torch.Generator:
    mixed = int(np.random.SeedSequence([seed, 2, epoch, index]).generate_state(1)[0])
    return torch.Generator().manual_seed(mixed)


def epoch_batches(g: AttributedGraph, rwr_cfg: RwrConfig, train_cfg: TrainConfig, epoch: int) -> list[list]:
    """The epoch's pairs, shuffled and cut into mini-batches."""
    pairs = sample_epoch(g, rwr_cfg, epoch)
    order = np.random.default_rng([train_cfg.seed, 3, epoch]).permutation(len(pairs))
    return [[pairs[i] for i in order[s:s + train_cfg.batch_size]] for s in range(0, len(pairs), train_cfg.batch_size)]


def train_loop(g: AttributedGraph, model_cfg: ModelConfig, train_cfg: TrainConfig,
               rwr_cfg: RwrConfig | None = None,
               on_epoch: Callable[[EpochRecord], None] | None = None) -> TrainResult:
    """Self-supervised training; anomaly labels are stripped before anything else runs."""
    g = g.with_(labels=None)
    rwr_cfg = rwr_cfg or RwrConfig(seed=train_cfg.seed)
    model = HCADModel(g.d, model_cfg, seed=train_cfg.seed)
    params = dict(model.named_parameters())
    state = None
    result = TrainResult(model)
    for epoch in range(train_cfg.epochs):
        DIAGNOSTICS.reset()
        stats = LossStats()
        total, count = 0.0, 0
        for bi, chunk in enumerate(epoch_batches(g, rwr_cfg, train_cfg, epoch)):
            batch = collate(chunk, g)
            gen = _batch_generator(train_cfg.seed, epoch, bi)
            loss, grads = compute_gradients(model, batch, training=True, generator=gen, stats=stats)
            if not math.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch} batch {bi} "
                    f"(clamp events {DIAGNOSTICS.clamp_events}, saturation events {stats.saturation_events})"
                )
            state = adam_step(params, grads, state, train_cfg)
            total += loss * len(batch)
            count += len(batch)
            result.final_batch = batch
        rec = EpochRecord(epoch, total / count, DIAGNOSTICS.clamp_events, stats.saturation_events)
        result.trace.append(rec)
        log.info("epoch %d loss %.6f clamp %d", epoch, rec.mean_loss, rec.clamp_events)
        if on_epoch is not None:
            on_epoch(rec)
    model.zero_grad(set_to_none=True)
    # evaluation-mode loss of the last batch under the final weights; a reloaded checkpoint reproduces it
    with torch.no_grad():
        result.final_batch_loss = float(batch_loss(model, result.final_batch))
    return result


@dataclass(frozen=True)
class GradientCheckReport:
    max_rel_error: float
    coordinates_checked: int
    coordinates_skipped: int
    threshold: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.threshold


def _relu_pattern(model: HCADModel, batch: Batch) -> list[torch.Tensor]:
    trace = []
    with torch.no_grad():
        model(batch, trace=trace)
    return [t > 0 for t in trace]


def gradient_check(model: HCADModel, batch: Batch, n_coords: int = 100, h: float = 1e-5,
                   threshold: float = 1e-4, seed: int = 0, floor: float = 1e-6) -> GradientCheckReport:
    """Compare reverse-mode gradients with central differences on random coordinates.

    Coordinates whose +-10h perturbation flips any ReLU are skipped. The relative
    error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
    """
    _, grads = compute_gradients(model, batch)
    params = dict(model.named_parameters())
    names = sorted(params)
    sizes = np.array([params[k].numel() for k in names])
    rng = np.random.default_rng(seed)
    # at least one coordinate from every tensor, the rest proportional to size
    picks = [(k, int(rng.integers(params[k].numel()))) for k in names]
    flat = rng.choice(sizes.sum(), size=max(0, 4 * n_coords), replace=True)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    for f in flat:
        t = int(np.searchsorted(offsets, f, side="right") - 1)
        picks.append((names[t], int(f - offsets[t])))

    def loss_at() -> float:
        with torch.no_grad():
            return float(batch_loss(model, batch))

    base_pattern = _relu_pattern(model, batch)
    worst, checked, skipped = 0.0, 0, 0
    seen = set()
    for name, idx in picks:
        if checked >= n_coords:
            break
        if (name, idx) in seen:
            continue
        seen.add((name, idx))
        p = params[name].data.view(-1)
        orig = float(p[idx])
        kink = False
        for delta in (10 * h, -10 * h):
            p[idx] = orig + delta
            if any(bool((a != b).any()) for a, b in zip(base_pattern, _relu_pattern(model, batch))):
                kink = True
        if kink:
            p[idx] = orig
            skipped += 1
            continue
        p[idx] = orig + h
        up = loss_at()
        p[idx] = orig - h
        down = loss_at()
        p[idx] = orig
        numeric = (up - down) / (2 * h)
        analytic = float(grads[name].view(-1)[idx])
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
        worst = max(worst, err)
        checked += 1
    return GradientCheckReport(worst, checked, skipped, threshold)
