"""The three training objectives and their analytic gradients.

* ``ce_ensemble`` — mean cross-entropy of the weighted ensemble logit.
* ``kl_uniform`` — pushes the class distribution induced by the irrelevant
  features toward uniform, so class evidence cannot hide there.
* ``cmi`` — a batch estimator of the conditional dependence between the
  relevant and irrelevant halves given the labels: the L1 norm of the
  batch-mean coordinatewise product between relevant features and the
  class-centered irrelevant features. The interaction is coordinatewise
  (Hadamard), not an outer product; class means are taken within the batch.

All gradients are exact for the stated expressions; kinks (ReLU upstream,
the L1 corner, the zero-norm cosine guard) use the zero subgradient.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import ConfigError, ShapeError
from .numerics import log_softmax


@dataclass(frozen=True)
class LossReport:
    ce: float
    kl: float
    mutual: float
    total: float
    alpha: float
    beta: float

    def to_dict(self) -> dict:
        return {
            "ce": self.ce,
            "kl": self.kl,
            "mutual": self.mutual,
            "total": self.total,
            "alpha": self.alpha,
            "beta": self.beta,
        }


def ce_ensemble(logit_en: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient (softmax minus one-hot, over N)."""
    if logit_en.ndim != 2:
        raise ShapeError(f"expected (N, C) logits, got {logit_en.shape}")
    n, c = logit_en.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match {n} rows")
    logp = log_softmax(logit_en, axis=1)
    loss = -float(logp[np.arange(n), labels].mean())
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return loss, grad


def kl_uniform(
    zir: Mapping[str, np.ndarray],
    text_features: Mapping[str, np.ndarray],
    labels: np.ndarray,
    tau: float,
) -> tuple[float, dict[str, np.ndarray]]:
    """KL(p || uniform) of the irrelevant-feature predictions, with gradients.

    For each sample, backbone, and prompt, p is the softmax over classes of
    cos(z_ir, text)/tau. Contributions are summed over samples and averaged
    over (backbone, prompt) pairs. A zero-norm z_ir row induces cosine 0 for
    every class, hence a uniform p and zero contribution and gradient: the
    guard is the loss's own fixed point, never an error. ``labels`` is part
    of the surface for symmetry with the other losses; the divergence itself
    is computed for every sample regardless of its label.
    """
    del labels
    num_pairs = sum(t.shape[0] for t in text_features.values())
    total = 0.0
    grads: dict[str, np.ndarray] = {}
    for bid, z in zir.items():
        text = text_features[bid]
        m, c, d = text.shape
        n = z.shape[0]
        if z.shape[1] != d:
            raise ShapeError(f"z_ir block '{bid}' has dim {z.shape[1]}, text has {d}")
        z_norm = np.linalg.norm(z, axis=1)
        ok = z_norm > 0.0
        safe_norm = np.where(ok, z_norm, 1.0)
        t_flat = text.reshape(m * c, d)
        t_norm = np.linalg.norm(t_flat, axis=1)
        dots = z @ t_flat.T  # (n, m*c)
        cos = dots / (safe_norm[:, None] * t_norm[None, :])
        cos[~ok] = 0.0
        s = (cos / tau).reshape(n, m, c)
        logp = log_softmax(s, axis=2)
        p = np.exp(logp)
        kl_terms = np.sum(p * (logp + np.log(c)), axis=2)  # (n, m)
        total += float(kl_terms.sum())

        # d(KL)/ds_c = p_c * (log(C p_c) - KL)
        g_s = p * (logp + np.log(c) - kl_terms[:, :, None])
        g_cos = (g_s / tau).reshape(n, m * c)
        # d(cos)/dz = t/(|z||t|) - cos * z/|z|^2
        g_z = (g_cos / t_norm[None, :]) @ t_flat / safe_norm[:, None]
        g_z -= (np.sum(g_cos * cos.reshape(n, m * c), axis=1, keepdims=True)) * z / (
            safe_norm[:, None] ** 2
        )
        g_z[~ok] = 0.0
        grads[bid] = g_z / num_pairs
    return total / num_pairs, grads


def _class_means(values: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-sample rows of the within-batch mean of ``values`` over each label."""
    n, d = values.shape
    out = np.empty((n, d))
    for cls in np.unique(labels):
        mask = labels == cls
        out[mask] = values[mask].mean(axis=0)
    return out


def cmi(
    zr: np.ndarray, zir: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Conditional-dependence estimator and exact gradients.

    loss = || mean_i zr_i * (zir_i - batch_class_mean(zir)[y_i]) ||_1
    where * is the coordinatewise product and class means include sample i.
    A label that appears once contributes zero by construction.
    """
    if zr.shape != zir.shape or zr.ndim != 2:
        raise ShapeError(f"zr {zr.shape} and zir {zir.shape} must be equal 2-D shapes")
    n = zr.shape[0]
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match {n} rows")
    centered = zir - _class_means(zir, labels)
    v = np.mean(zr * centered, axis=0)
    loss = float(np.sum(np.abs(v)))
    sgn = np.sign(v)
    grad_zr = sgn[None, :] * centered / n
    grad_zir = sgn[None, :] * (zr - _class_means(zr, labels)) / n
    return loss, grad_zr, grad_zir


def total_loss(ce: float, kl: float, mutual: float, alpha: float, beta: float) -> LossReport:
    """Weighted sum of the three terms."""
    if alpha < 0 or beta < 0:
        raise ConfigError(f"loss weights must be nonnegative, got alpha={alpha} beta={beta}")
    return LossReport(
        ce=float(ce),
        kl=float(kl),
        mutual=float(mutual),
        total=float(ce + alpha * kl + beta * mutual),
        alpha=float(alpha),
        beta=float(beta),
    )


__all__ = ["LossReport", "ce_ensemble", "kl_uniform", "cmi", "total_loss"]
