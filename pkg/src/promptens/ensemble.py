"""Composing the weight-generator input and aggregating logit slabs.

The slab axis is always backbone-major, prompt-minor (slot b*M + m), the
same ordering the feature store uses when stacking.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .errors import ShapeError


def build_mu(zr_by_backbone: Mapping[str, np.ndarray]) -> np.ndarray:
    """Row-wise concatenation of per-backbone relevant features.

    Iteration order of the mapping defines the concatenation order; callers
    pass dicts built in manifest backbone order.
    """
    blocks = list(zr_by_backbone.values())
    if not blocks:
        raise ShapeError("build_mu needs at least one backbone block")
    n = blocks[0].shape[0]
    for bid, block in zr_by_backbone.items():
        if block.ndim != 2 or block.shape[0] != n:
            raise ShapeError(f"block '{bid}' has shape {block.shape}, expected ({n}, d)")
    return np.concatenate(blocks, axis=1)


def split_mu(mu_like: np.ndarray, dims: Mapping[str, int]) -> dict[str, np.ndarray]:
    """Inverse of build_mu for arrays of shape (N, sum(dims))."""
    total = sum(dims.values())
    if mu_like.ndim != 2 or mu_like.shape[1] != total:
        raise ShapeError(f"array has shape {mu_like.shape}, expected (N, {total})")
    out, start = {}, 0
    for bid, d in dims.items():
        out[bid] = mu_like[:, start : start + d]
        start += d
    return out


def aggregate(logit_slabs: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted sum of slabs: (N, K, C) x (N, K) -> (N, C)."""
    if logit_slabs.ndim != 3 or weights.ndim != 2 or logit_slabs.shape[:2] != weights.shape:
        raise ShapeError(
            f"incompatible shapes {logit_slabs.shape} and {weights.shape}; "
            "expected (N, K, C) and (N, K)"
        )
    return np.einsum("nkc,nk->nc", logit_slabs, weights)


def predict(logit_en: np.ndarray) -> np.ndarray:
    """Argmax class per row; ties go to the lowest class index."""
    if logit_en.ndim != 2:
        raise ShapeError(f"expected (N, C) logits, got shape {logit_en.shape}")
    return np.argmax(logit_en, axis=1)
