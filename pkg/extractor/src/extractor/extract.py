"""Run frozen encoders over an image folder and emit a feature bundle.

The output directory follows the engine's interchange contract exactly:
a strict JSON ``manifest.json`` plus headerless little-endian float32
arrays (``labels``, and per backbone ``image_features.<id>``,
``text_features.<id>``, ``logits.<id>``). Logits are recomputed from the
float32-quantized features, so the engine's cosine/temperature
consistency check passes by construction.

Images live in one subdirectory per class, named exactly like the classes
in the prompt file. Within each class, files sort lexicographically and
alternate train/test, so reruns are order-stable.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .encoders import resolve_encoder
from .errors import DataError, EncoderError
from .prompts import PromptSet

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".webp")
# relative slack between backbone logit scales sharing one manifest
_SCALE_RTOL = 1e-6


def _quantize(arr: np.ndarray) -> np.ndarray:
    return np.asarray(arr, dtype=np.float32).astype(np.float64)


def _cosine_logits(image: np.ndarray, text_mcd: np.ndarray, tau: float) -> np.ndarray:
    m, c, d = text_mcd.shape
    flat = text_mcd.reshape(m * c, d)
    img_n = image / np.linalg.norm(image, axis=1, keepdims=True)
    txt_n = flat / np.linalg.norm(flat, axis=1, keepdims=True)
    sims = np.clip(img_n @ txt_n.T, -1.0, 1.0)
    return sims.reshape(image.shape[0], m, c) / tau


def _collect_images(images_root: Path, class_names: list[str]) -> tuple[list[Path], list[int]]:
    files: list[Path] = []
    labels: list[int] = []
    for idx, name in enumerate(class_names):
        class_dir = images_root / name
        if not class_dir.is_dir():
            raise DataError(f"missing class directory: {class_dir}")
        members = sorted(
            p for p in class_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES
        )
        if not members:
            raise DataError(f"class directory {class_dir} holds no images")
        files.extend(members)
        labels.extend([idx] * len(members))
    return files, labels


def extract(images_root, prompts: PromptSet, backbone_ids: list[str], out_dir) -> Path:
    """Encode everything and write the bundle; returns the manifest path."""
    images_root = Path(images_root)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    files, labels = _collect_images(images_root, prompts.class_names)
    c, m = len(prompts.class_names), prompts.num_prompts
    n = len(files)

    encoders = [resolve_encoder(bid) for bid in backbone_ids]
    if not encoders:
        raise EncoderError("need at least one backbone")
    tau = 1.0 / encoders[0].logit_scale
    for enc in encoders[1:]:
        if abs(enc.logit_scale - encoders[0].logit_scale) > _SCALE_RTOL * encoders[0].logit_scale:
            raise EncoderError(
                f"backbones disagree on logit scale ({encoders[0].logit_scale} vs "
                f"{enc.logit_scale}); a manifest carries a single temperature"
            )

    # prompt order: all classes for prompt 0, then prompt 1, ... so the
    # text block reshapes to (M, C, d)
    prompt_grid = [prompts.prompt_texts[cc][mm] for mm in range(m) for cc in range(c)]

    arrays: dict[str, dict] = {}
    backbones_meta = []

    def write(role: str, arr: np.ndarray) -> None:
        fname = role + ".f32"
        (out / fname).write_bytes(np.ascontiguousarray(arr, dtype="<f4").tobytes())
        arrays[role] = {"file": fname, "shape": list(arr.shape)}

    write("labels", np.asarray(labels, dtype=np.float64))
    for enc in encoders:
        img = _quantize(enc.encode_images(files))
        txt = _quantize(enc.encode_texts(prompt_grid)).reshape(m, c, enc.feature_dim)
        write(f"image_features.{enc.id}", img)
        write(f"text_features.{enc.id}", txt)
        write(f"logits.{enc.id}", _quantize(_cosine_logits(img, txt, tau)))
        backbones_meta.append({"id": enc.id, "feature_dim": enc.feature_dim})

    train = [i for i in range(n) if _rank_within_class(labels, i) % 2 == 0]
    test = [i for i in range(n) if _rank_within_class(labels, i) % 2 == 1]

    manifest = {
        "dataset_name": images_root.name,
        "num_classes": c,
        "class_names": list(prompts.class_names),
        "num_prompts": m,
        "prompt_texts": [list(p) for p in prompts.prompt_texts],
        "general_prompt_index": [0] * c,
        "backbones": backbones_meta,
        "temperature": tau,
        "splits": {"train": train, "val": [], "test": test},
        "arrays": arrays,
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest_path


def _rank_within_class(labels: list[int], i: int) -> int:
    return sum(1 for j in range(i) if labels[j] == labels[i])
