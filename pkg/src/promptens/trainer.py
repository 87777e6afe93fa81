"""Batched SGD over the weight generator and redundancy heads.

One step runs the whole pipeline on a minibatch of the frozen bundle:
split features -> regularizers (KL-to-uniform, conditional-dependence) ->
concatenate relevant halves -> generate weights -> aggregate slabs ->
ensemble cross-entropy -> backprop -> plain SGD update. The regularizer
gradients touch only the redundancy heads; cross-entropy reaches them too,
through the generator's input.

Schedule: constant warmup, then a per-epoch half-cosine from the peak rate
down to zero at the final epoch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .ensemble import aggregate, build_mu, split_mu
from .errors import ConfigError, DivergenceError, NumericDomainError
from .feature_store import FeatureBundle, stack_logits
from .losses import LossReport, ce_ensemble, cmi, kl_uniform, total_loss
from .networks import (
    RdGrads,
    RedundancyNet,
    WeightGenerator,
    WgGrads,
    init_redundancy_net,
    init_weight_generator,
    rd_backward,
    rd_forward,
    wg_backward,
    wg_forward,
)
from .numerics import make_rng


@dataclass
class TrainConfig:
    batch_size: int = 128
    epochs: int = 5
    lr: float = 2e-2
    warmup_epochs: int = 1
    warmup_lr: float = 1e-5
    alpha: float = 0.2
    beta: float = 1.0
    seed: int = 0
    hidden_dim_override: int | None = None

    def validate(self) -> None:
        if not (0 < self.warmup_epochs < self.epochs):
            raise ConfigError(
                f"need 0 < warmup_epochs < epochs, got {self.warmup_epochs} / {self.epochs}"
            )
        if not (self.lr > self.warmup_lr > 0):
            raise ConfigError(f"need lr > warmup_lr > 0, got {self.lr} / {self.warmup_lr}")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be nonnegative")


@dataclass
class TrainState:
    wg: WeightGenerator
    rd: RedundancyNet
    step: int = 0
    epoch: int = 0
    loss_history: list[LossReport] = field(default_factory=list)


def lr_at(config: TrainConfig, epoch: int) -> float:
    """Constant warmup, then half-cosine decay to zero at the final epoch."""
    if not 0 <= epoch < config.epochs:
        raise ConfigError(f"epoch {epoch} outside [0, {config.epochs})")
    if epoch < config.warmup_epochs:
        return config.warmup_lr
    t = epoch - config.warmup_epochs
    horizon = config.epochs - config.warmup_epochs
    return config.lr * 0.5 * (1.0 + math.cos(math.pi * t / horizon))


def _backbone_dims(bundle: FeatureBundle) -> dict[str, int]:
    return {b.id: b.feature_dim for b in bundle.manifest.backbones}


def batch_forward(
    wg: WeightGenerator,
    rd: RedundancyNet,
    bundle: FeatureBundle,
    indices: Sequence[int],
    alpha: float,
    beta: float,
) -> LossReport:
    """Loss values only; the finite-difference oracle drives this directly."""
    report, _, _ = batch_loss_and_grads(wg, rd, bundle, indices, alpha, beta)
    return report


def batch_loss_and_grads(
    wg: WeightGenerator,
    rd: RedundancyNet,
    bundle: FeatureBundle,
    indices: Sequence[int],
    alpha: float,
    beta: float,
) -> tuple[LossReport, WgGrads, RdGrads]:
    """One full pipeline pass on a minibatch, returning all parameter grads."""
    man = bundle.manifest
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size == 0:
        raise ConfigError("empty batch")
    y = bundle.labels[idx]
    dims = _backbone_dims(bundle)
    z_img = {bid: bundle.image_features[bid][idx] for bid in man.backbone_ids}

    zr, zir = rd_forward(rd, z_img)
    kl, g_zir_kl = kl_uniform(zir, bundle.text_features, y, man.temperature)
    zr_cat = build_mu(zr)
    zir_cat = build_mu(zir)
    mutual, g_zr_cmi, g_zir_cmi = cmi(zr_cat, zir_cat, y)

    mu = zr_cat
    weights = wg_forward(wg, mu)
    slabs = stack_logits(bundle)[idx]
    logit_en = aggregate(slabs, weights)
    ce, g_en = ce_ensemble(logit_en, y)
    report = total_loss(ce, kl, mutual, alpha, beta)

    # backward: cross-entropy reaches the weight generator, then the
    # relevant halves through mu; the regularizers reach the heads directly.
    g_weights = np.einsum("nc,nkc->nk", g_en, slabs)
    wg_grads, g_mu = wg_backward(wg, mu, g_weights)
    g_zr = split_mu(g_mu + beta * g_zr_cmi, dims)
    g_zir_cat = split_mu(beta * g_zir_cmi, dims)
    g_zir = {bid: g_zir_cat[bid] + alpha * g_zir_kl[bid] for bid in dims}
    rd_grads = rd_backward(rd, z_img, g_zr, g_zir)
    return report, wg_grads, rd_grads


def apply_sgd(
    wg: WeightGenerator, rd: RedundancyNet, wg_grads: WgGrads, rd_grads: RdGrads, lr: float
) -> None:
    wg.w1 -= lr * wg_grads.w1
    wg.b1 -= lr * wg_grads.b1
    wg.w2 -= lr * wg_grads.w2
    wg.b2 -= lr * wg_grads.b2
    for bid, head in rd.heads.items():
        g = rd_grads.heads[bid]
        head.a1 -= lr * g.a1
        head.c1 -= lr * g.c1
        head.a2 -= lr * g.a2
        head.c2 -= lr * g.c2


def train_step(
    state: TrainState,
    bundle: FeatureBundle,
    batch_indices: Sequence[int],
    config: TrainConfig,
) -> LossReport:
    """One SGD step at the current epoch's rate; mutates ``state`` in place."""
    try:
        report, wg_grads, rd_grads = batch_loss_and_grads(
            state.wg, state.rd, bundle, batch_indices, config.alpha, config.beta
        )
    except NumericDomainError as exc:
        # runaway parameters overflow inside the loss pipeline
        raise DivergenceError(
            f"non-finite values in loss pipeline at step {state.step}: {exc}",
            step=state.step,
        ) from exc
    if not math.isfinite(report.total):
        raise DivergenceError(f"non-finite loss at step {state.step}", step=state.step)
    apply_sgd(state.wg, state.rd, wg_grads, rd_grads, lr_at(config, state.epoch))
    state.step += 1
    state.loss_history.append(report)
    return report


StepCallback = Callable[[int, int, float, LossReport], None]


def init_state(bundle: FeatureBundle, config: TrainConfig) -> TrainState:
    """Seeded parameter init sized from the bundle's backbone layout."""
    config.validate()
    rng = make_rng(config.seed)
    dims = _backbone_dims(bundle)
    d_mu = sum(dims.values())
    wg = init_weight_generator(
        d_mu, bundle.manifest.num_slots, rng, hidden_dim=config.hidden_dim_override
    )
    rd = init_redundancy_net(dims, rng)
    return TrainState(wg=wg, rd=rd)


def fit(
    bundle: FeatureBundle,
    config: TrainConfig,
    train_indices: Sequence[int] | None = None,
    on_step: StepCallback | None = None,
) -> TrainState:
    """Full training run: seeded init, per-epoch reshuffle, partial last batch kept.

    (bundle, config) determine every parameter value at every step bit-exactly;
    the same Philox stream drives initialization and all epoch shuffles.
    """
    config.validate()
    indices = list(bundle.manifest.splits["train"] if train_indices is None else train_indices)
    if not indices:
        raise ConfigError("training split is empty")

    rng = make_rng(config.seed)
    dims = _backbone_dims(bundle)
    d_mu = sum(dims.values())
    wg = init_weight_generator(
        d_mu, bundle.manifest.num_slots, rng, hidden_dim=config.hidden_dim_override
    )
    rd = init_redundancy_net(dims, rng)
    state = TrainState(wg=wg, rd=rd)

    order = np.asarray(indices, dtype=np.int64)
    for epoch in range(config.epochs):
        state.epoch = epoch
        shuffled = order[rng.permutation(order.size)]
        for start in range(0, shuffled.size, config.batch_size):
            batch = shuffled[start : start + config.batch_size]
            report = train_step(state, bundle, batch, config)
            if on_step is not None:
                on_step(state.step - 1, epoch, lr_at(config, epoch), report)
    return state
