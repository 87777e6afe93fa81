"""The two trainable pieces: the ensemble-weight generator and the
redundancy-splitting heads, with explicit forward and hand-derived backward
passes (no autodiff anywhere).

Weight generator: ``weights = sigmoid(relu(mu @ W1.T + b1) @ W2.T + b2)``,
one weight per (backbone, prompt) slab per sample, bounded to (0, 1) by the
sigmoid and deliberately NOT normalized across slabs.

Redundancy head (one per backbone, so unequal feature dims are fine):
``out = relu(z @ A1.T + c1) @ A2.T + c2`` with the 2d-wide output split into
a relevant half and an irrelevant half.

ReLU's subgradient at 0 is taken as 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import FormatError, ShapeError
from .feature_store import read_f32, write_f32

SIGMOID_CLIP = 60.0  # |x| beyond this, sigmoid saturates at double precision
SIGMOID_FLOOR = 1e-12  # keeps outputs strictly inside (0, 1)


def sigmoid(x: np.ndarray) -> np.ndarray:
    s = 1.0 / (1.0 + np.exp(-np.clip(x, -SIGMOID_CLIP, SIGMOID_CLIP)))
    return np.clip(s, SIGMOID_FLOOR, 1.0 - SIGMOID_FLOOR)


# ---------------------------------------------------------------------------
# Weight generator
# ---------------------------------------------------------------------------


@dataclass
class WeightGenerator:
    w1: np.ndarray  # (hidden, input_dim)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (num_slots, hidden)
    b2: np.ndarray  # (num_slots,)

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def num_slots(self) -> int:
        return self.w2.shape[0]

    def param_count(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size

    def params(self) -> dict[str, np.ndarray]:
        return {"wg.W1": self.w1, "wg.b1": self.b1, "wg.W2": self.w2, "wg.b2": self.b2}


@dataclass
class WgGrads:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


def wg_forward(wg: WeightGenerator, mu: np.ndarray) -> np.ndarray:
    """Per-sample ensemble weights in (0, 1), shape (N, num_slots)."""
    if mu.ndim != 2 or mu.shape[1] != wg.input_dim:
        raise ShapeError(f"mu has shape {mu.shape}, expected (N, {wg.input_dim})")
    hidden = np.maximum(mu @ wg.w1.T + wg.b1, 0.0)
    return sigmoid(hidden @ wg.w2.T + wg.b2)


def wg_backward(
    wg: WeightGenerator, mu: np.ndarray, upstream: np.ndarray
) -> tuple[WgGrads, np.ndarray]:
    """Gradients of ``sum(upstream * wg_forward(wg, mu))`` w.r.t. params and mu."""
    if mu.ndim != 2 or mu.shape[1] != wg.input_dim:
        raise ShapeError(f"mu has shape {mu.shape}, expected (N, {wg.input_dim})")
    if upstream.shape != (mu.shape[0], wg.num_slots):
        raise ShapeError(
            f"upstream has shape {upstream.shape}, expected {(mu.shape[0], wg.num_slots)}"
        )
    pre1 = mu @ wg.w1.T + wg.b1
    hidden = np.maximum(pre1, 0.0)
    weights = sigmoid(hidden @ wg.w2.T + wg.b2)

    g_pre2 = upstream * weights * (1.0 - weights)
    g_w2 = g_pre2.T @ hidden
    g_b2 = g_pre2.sum(axis=0)
    g_hidden = g_pre2 @ wg.w2
    g_pre1 = g_hidden * (pre1 > 0.0)
    g_w1 = g_pre1.T @ mu
    g_b1 = g_pre1.sum(axis=0)
    g_mu = g_pre1 @ wg.w1
    return WgGrads(g_w1, g_b1, g_w2, g_b2), g_mu


# ---------------------------------------------------------------------------
# Redundancy-splitting heads
# ---------------------------------------------------------------------------


@dataclass
class BackboneHead:
    a1: np.ndarray  # (d, d)
    c1: np.ndarray  # (d,)
    a2: np.ndarray  # (2d, d)
    c2: np.ndarray  # (2d,)

    @property
    def dim(self) -> int:
        return self.a1.shape[0]


@dataclass
class RedundancyNet:
    heads: dict[str, BackboneHead]  # insertion order == manifest backbone order

    def params(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for bid, h in self.heads.items():
            out[f"rd.{bid}.A1"] = h.a1
            out[f"rd.{bid}.c1"] = h.c1
            out[f"rd.{bid}.A2"] = h.a2
            out[f"rd.{bid}.c2"] = h.c2
        return out

    def param_count(self) -> int:
        return sum(p.size for p in self.params().values())


@dataclass
class RdGrads:
    heads: dict[str, BackboneHead]  # same field layout, holding gradients


def rd_forward(
    rd: RedundancyNet, z_img: Mapping[str, np.ndarray]
) -> tuple[dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Split each backbone's features into (relevant, irrelevant) halves."""
    if set(z_img) != set(rd.heads):
        raise ShapeError(f"input blocks {sorted(z_img)} do not match heads {sorted(rd.heads)}")
    zr, zir = {}, {}
    for bid, head in rd.heads.items():
        z = z_img[bid]
        if z.ndim != 2 or z.shape[1] != head.dim:
            raise ShapeError(f"block '{bid}' has shape {z.shape}, expected (N, {head.dim})")
        hidden = np.maximum(z @ head.a1.T + head.c1, 0.0)
        out = hidden @ head.a2.T + head.c2
        zr[bid] = out[:, : head.dim]
        zir[bid] = out[:, head.dim :]
    return zr, zir


def rd_backward(
    rd: RedundancyNet,
    z_img: Mapping[str, np.ndarray],
    g_zr: Mapping[str, np.ndarray],
    g_zir: Mapping[str, np.ndarray],
) -> RdGrads:
    """Gradients w.r.t. head parameters given upstream grads for both halves."""
    grads: dict[str, BackboneHead] = {}
    for bid, head in rd.heads.items():
        z = z_img[bid]
        g_out = np.concatenate([g_zr[bid], g_zir[bid]], axis=1)
        if g_out.shape != (z.shape[0], 2 * head.dim):
            raise ShapeError(f"upstream for '{bid}' has shape {g_out.shape}")
        pre1 = z @ head.a1.T + head.c1
        hidden = np.maximum(pre1, 0.0)
        g_a2 = g_out.T @ hidden
        g_c2 = g_out.sum(axis=0)
        g_hidden = g_out @ head.a2
        g_pre1 = g_hidden * (pre1 > 0.0)
        g_a1 = g_pre1.T @ z
        g_c1 = g_pre1.sum(axis=0)
        grads[bid] = BackboneHead(g_a1, g_c1, g_a2, g_c2)
    return RdGrads(grads)


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------


def _uniform_fan_in(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    bound = 1.0 / np.sqrt(shape[-1])
    return rng.uniform(-bound, bound, size=shape)


def default_hidden_dim(input_dim: int) -> int:
    return max(1, input_dim // 4)


def init_weight_generator(
    input_dim: int,
    num_slots: int,
    rng: np.random.Generator,
    hidden_dim: int | None = None,
) -> WeightGenerator:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases."""
    h = default_hidden_dim(input_dim) if hidden_dim is None else hidden_dim
    if h < 1 or input_dim < 1 or num_slots < 1:
        raise ShapeError("weight generator dims must be positive")
    return WeightGenerator(
        w1=_uniform_fan_in(rng, (h, input_dim)),
        b1=np.zeros(h),
        w2=_uniform_fan_in(rng, (num_slots, h)),
        b2=np.zeros(num_slots),
    )


def init_redundancy_net(
    backbone_dims: Mapping[str, int], rng: np.random.Generator
) -> RedundancyNet:
    heads = {}
    for bid, d in backbone_dims.items():
        if d < 1:
            raise ShapeError(f"backbone '{bid}' has non-positive dim {d}")
        heads[bid] = BackboneHead(
            a1=_uniform_fan_in(rng, (d, d)),
            c1=np.zeros(d),
            a2=_uniform_fan_in(rng, (2 * d, d)),
            c2=np.zeros(2 * d),
        )
    return RedundancyNet(heads)


# ---------------------------------------------------------------------------
# Checkpoints (same manifest + .f32 convention as the feature store)
# ---------------------------------------------------------------------------

_CKPT_KEYS = {"backbones", "hidden_dim", "num_prompts", "arrays"}


def save_checkpoint(
    out_dir, wg: WeightGenerator, rd: RedundancyNet, num_prompts: int
) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    arrays = {}
    named = {**wg.params(), **rd.params()}
    for role, arr in named.items():
        fname = role + ".f32"
        write_f32(out / fname, arr)
        arrays[role] = {"file": fname, "shape": list(arr.shape)}
    meta = {
        "backbones": [{"id": bid, "feature_dim": h.dim} for bid, h in rd.heads.items()],
        "hidden_dim": wg.hidden_dim,
        "num_prompts": num_prompts,
        "arrays": arrays,
    }
    path = out / "checkpoint.json"
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_checkpoint(ckpt_dir) -> tuple[WeightGenerator, RedundancyNet, dict]:
    """Load networks saved by :func:`save_checkpoint`.

    Returns (wg, rd, meta) where meta carries backbone layout and prompt count
    so callers can check structural compatibility against a bundle.
    """
    root = Path(ckpt_dir)
    path = root / "checkpoint.json"
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise FormatError(f"cannot read checkpoint {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"checkpoint {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict) or set(raw) != _CKPT_KEYS:
        raise FormatError(f"checkpoint must have exactly the keys {sorted(_CKPT_KEYS)}")

    def arr(role: str) -> np.ndarray:
        entry = raw["arrays"].get(role)
        if entry is None:
            raise FormatError(f"checkpoint is missing array '{role}'")
        return read_f32(root / entry["file"], tuple(entry["shape"]), role)

    wg = WeightGenerator(arr("wg.W1"), arr("wg.b1"), arr("wg.W2"), arr("wg.b2"))
    heads = {}
    for entry in raw["backbones"]:
        bid = entry["id"]
        heads[bid] = BackboneHead(
            arr(f"rd.{bid}.A1"), arr(f"rd.{bid}.c1"), arr(f"rd.{bid}.A2"), arr(f"rd.{bid}.c2")
        )
    rd = RedundancyNet(heads)
    meta = {
        "backbones": [(e["id"], e["feature_dim"]) for e in raw["backbones"]],
        "hidden_dim": int(raw["hidden_dim"]),
        "num_prompts": int(raw["num_prompts"]),
    }
    return wg, rd, meta
