"""Frozen image/text encoders behind one tiny interface.

``toy-16``/``toy-32`` are self-contained deterministic encoders (seeded
random projections over pixel grids and character trigrams) meant for
tests and pipeline dry-runs: no checkpoints, no network, bit-stable
output. ``vit-b-16``/``vit-b-32`` wrap the matching CLIP checkpoints via
``transformers`` when that stack is installed and the weights are
reachable; inference runs in eval mode under no_grad, so repeated runs
are deterministic.

Raw encoder outputs are stored unnormalized; the engine owns the cosine.
"""

from __future__ import annotations

import zlib

import numpy as np
from PIL import Image

from .errors import EncoderError

_TOY_IMAGE_SIDE = 16
_TOY_TEXT_BINS = 1024


class ToyEncoder:
    """Deterministic projection encoder with a CLIP-like logit scale."""

    def __init__(self, encoder_id: str, feature_dim: int):
        self.id = encoder_id
        self.feature_dim = feature_dim
        self.logit_scale = 100.0
        pixels = 3 * _TOY_IMAGE_SIDE * _TOY_IMAGE_SIDE
        self._img_proj = self._projection(f"{encoder_id}/image", pixels + 1)
        self._txt_proj = self._projection(f"{encoder_id}/text", _TOY_TEXT_BINS + 1)

    def _projection(self, tag: str, in_dim: int) -> np.ndarray:
        seed = zlib.crc32(tag.encode())
        rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
        return rng.normal(size=(in_dim, self.feature_dim)) / np.sqrt(in_dim)

    def encode_images(self, paths) -> np.ndarray:
        rows = []
        for path in paths:
            try:
                with Image.open(path) as img:
                    small = img.convert("RGB").resize((_TOY_IMAGE_SIDE, _TOY_IMAGE_SIDE))
            except OSError as exc:
                raise EncoderError(f"cannot decode image {path}: {exc}") from exc
            flat = np.asarray(small, dtype=np.float64).ravel() / 255.0
            rows.append(np.concatenate([flat, [1.0]]))  # bias keeps the norm positive
        return np.stack(rows) @ self._img_proj

    def encode_texts(self, texts) -> np.ndarray:
        rows = []
        for text in texts:
            counts = np.zeros(_TOY_TEXT_BINS)
            data = text.encode("utf-8")
            for i in range(len(data) - 2):
                counts[zlib.crc32(data[i : i + 3]) % _TOY_TEXT_BINS] += 1.0
            rows.append(np.concatenate([counts, [1.0]]))
        return np.stack(rows) @ self._txt_proj


class ClipEncoder:
    """CLIP checkpoint wrapper; needs torch + transformers and the weights."""

    def __init__(self, encoder_id: str, checkpoint: str):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise EncoderError(
                f"'{encoder_id}' needs the optional clip extra (torch, transformers)"
            ) from exc
        try:
            self._model = CLIPModel.from_pretrained(checkpoint)
            self._processor = CLIPProcessor.from_pretrained(checkpoint)
        except Exception as exc:  # unreachable checkpoint, bad cache, ...
            raise EncoderError(f"cannot load checkpoint '{checkpoint}': {exc}") from exc
        self._torch = torch
        self._model.eval()
        self.id = encoder_id
        self.feature_dim = int(self._model.config.projection_dim)
        self.logit_scale = float(self._model.logit_scale.exp().item())

    def encode_images(self, paths) -> np.ndarray:
        images = [Image.open(p).convert("RGB") for p in paths]
        inputs = self._processor(images=images, return_tensors="pt")
        with self._torch.no_grad():
            feats = self._model.get_image_features(**inputs)
        return feats.double().numpy()

    def encode_texts(self, texts) -> np.ndarray:
        inputs = self._processor(text=list(texts), return_tensors="pt", padding=True)
        with self._torch.no_grad():
            feats = self._model.get_text_features(**inputs)
        return feats.double().numpy()


_REGISTRY = {
    "toy-16": lambda: ToyEncoder("toy-16", 16),
    "toy-32": lambda: ToyEncoder("toy-32", 32),
    "vit-b-16": lambda: ClipEncoder("vit-b-16", "openai/clip-vit-base-patch16"),
    "vit-b-32": lambda: ClipEncoder("vit-b-32", "openai/clip-vit-base-patch32"),
}


def resolve_encoder(encoder_id: str):
    try:
        factory = _REGISTRY[encoder_id]
    except KeyError:
        raise EncoderError(
            f"unknown backbone '{encoder_id}'; known: {sorted(_REGISTRY)}"
        ) from None
    return factory()
