"""The frozen world: image features, text features, logit slabs, labels, splits.

Interchange format is deliberately dumb: one strict JSON manifest plus one
raw ``<role>.f32`` file per array (little-endian IEEE-754 binary32,
row-major, headerless; shapes live in the manifest). Everything is
up-converted to float64 on load and frozen (read-only) so training can
never mutate the world it observes.

Logit slabs from different backbones are flattened backbone-major,
prompt-minor: slot ``m' = b * M + m``. Every module shares this ordering.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
import numpy as np

from .errors import FormatError, IntegrityError, ShapeError
from .numerics import cosine_rows, make_rng

SPLIT_NAMES = ("train", "val", "test")

_MANIFEST_KEYS = {
    "dataset_name",
    "num_classes",
    "class_names",
    "num_prompts",
    "prompt_texts",
    "general_prompt_index",
    "backbones",
    "temperature",
    "splits",
    "base_classes",
    "new_classes",
    "arrays",
}


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BackboneSpec:
    id: str
    feature_dim: int


@dataclass(frozen=True)
class ArrayRef:
    file: str
    shape: tuple[int, ...]


@dataclass
class Manifest:
    dataset_name: str
    num_classes: int
    class_names: list[str]
    num_prompts: int
    prompt_texts: list[list[str]]
    general_prompt_index: list[int]
    backbones: list[BackboneSpec]
    temperature: float
    splits: dict[str, list[int]]
    arrays: dict[str, ArrayRef]
    base_classes: list[int] | None = None
    new_classes: list[int] | None = None

    @property
    def backbone_ids(self) -> list[str]:
        return [b.id for b in self.backbones]

    @property
    def num_slots(self) -> int:
        """Total logit slabs across backbones (2M in the two-backbone case)."""
        return len(self.backbones) * self.num_prompts

    def to_json_dict(self) -> dict:
        return {
            "dataset_name": self.dataset_name,
            "num_classes": self.num_classes,
            "class_names": list(self.class_names),
            "num_prompts": self.num_prompts,
            "prompt_texts": [list(p) for p in self.prompt_texts],
            "general_prompt_index": list(self.general_prompt_index),
            "backbones": [{"id": b.id, "feature_dim": b.feature_dim} for b in self.backbones],
            "temperature": self.temperature,
            "splits": {k: list(v) for k, v in self.splits.items()},
            "base_classes": None if self.base_classes is None else list(self.base_classes),
            "new_classes": None if self.new_classes is None else list(self.new_classes),
            "arrays": {k: {"file": v.file, "shape": list(v.shape)} for k, v in self.arrays.items()},
        }


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise FormatError(msg)


def manifest_from_json_dict(raw: dict) -> Manifest:
    """Parse and validate a manifest dict; unknown keys are rejected."""
    _require(isinstance(raw, dict), "manifest root must be a JSON object")
    unknown = set(raw) - _MANIFEST_KEYS
    _require(not unknown, f"manifest has unknown keys: {sorted(unknown)}")
    missing = _MANIFEST_KEYS - {"base_classes", "new_classes"} - set(raw)
    _require(not missing, f"manifest is missing keys: {sorted(missing)}")

    c = raw["num_classes"]
    m = raw["num_prompts"]
    _require(isinstance(c, int) and c >= 1, "num_classes must be a positive int")
    _require(isinstance(m, int) and m >= 1, "num_prompts must be a positive int")
    _require(
        isinstance(raw["class_names"], list) and len(raw["class_names"]) == c,
        "class_names must list one name per class",
    )
    prompts = raw["prompt_texts"]
    _require(
        isinstance(prompts, list)
        and len(prompts) == c
        and all(isinstance(p, list) and len(p) == m for p in prompts),
        "prompt_texts must be a num_classes x num_prompts nested list",
    )
    gpi = raw["general_prompt_index"]
    _require(
        isinstance(gpi, list) and len(gpi) == c and all(isinstance(g, int) and 0 <= g < m for g in gpi),
        "general_prompt_index must give one in-range prompt index per class",
    )

    backbones = []
    _require(isinstance(raw["backbones"], list) and raw["backbones"], "backbones must be a nonempty list")
    for entry in raw["backbones"]:
        _require(isinstance(entry, dict) and set(entry) == {"id", "feature_dim"}, "backbone entries need exactly id and feature_dim")
        _require(isinstance(entry["feature_dim"], int) and entry["feature_dim"] >= 1, "feature_dim must be a positive int")
        backbones.append(BackboneSpec(id=str(entry["id"]), feature_dim=entry["feature_dim"]))
    ids = [b.id for b in backbones]
    _require(len(set(ids)) == len(ids), "backbone ids must be unique")

    tau = raw["temperature"]
    _require(isinstance(tau, (int, float)) and math.isfinite(tau) and tau > 0, "temperature must be a positive finite number")

    splits_raw = raw["splits"]
    _require(isinstance(splits_raw, dict) and set(splits_raw) == set(SPLIT_NAMES), f"splits must have exactly the keys {SPLIT_NAMES}")
    splits = {}
    for name in SPLIT_NAMES:
        idx = splits_raw[name]
        _require(isinstance(idx, list) and all(isinstance(i, int) and i >= 0 for i in idx), f"split '{name}' must be a list of nonnegative ints")
        splits[name] = list(idx)

    def class_set(key: str) -> list[int] | None:
        val = raw.get(key)
        if val is None:
            return None
        _require(isinstance(val, list) and all(isinstance(i, int) and 0 <= i < c for i in val), f"{key} must list class indices < num_classes")
        return list(val)

    base_classes = class_set("base_classes")
    new_classes = class_set("new_classes")
    if base_classes is not None and new_classes is not None:
        _require(not set(base_classes) & set(new_classes), "base_classes and new_classes overlap")

    arrays = {}
    _require(isinstance(raw["arrays"], dict), "arrays must be an object")
    for role, entry in raw["arrays"].items():
        _require(isinstance(entry, dict) and set(entry) == {"file", "shape"}, f"array '{role}' needs exactly file and shape")
        shape = entry["shape"]
        _require(
            isinstance(shape, list) and shape and all(isinstance(s, int) and s >= 1 for s in shape),
            f"array '{role}' shape must be positive ints",
        )
        arrays[role] = ArrayRef(file=str(entry["file"]), shape=tuple(shape))

    expected_roles = {"labels"}
    for bid in ids:
        expected_roles |= {f"image_features.{bid}", f"text_features.{bid}", f"logits.{bid}"}
    _require(set(arrays) == expected_roles, f"arrays must declare exactly the roles {sorted(expected_roles)}, got {sorted(arrays)}")

    return Manifest(
        dataset_name=str(raw["dataset_name"]),
        num_classes=c,
        class_names=[str(n) for n in raw["class_names"]],
        num_prompts=m,
        prompt_texts=[[str(t) for t in p] for p in prompts],
        general_prompt_index=list(gpi),
        backbones=backbones,
        temperature=float(tau),
        splits=splits,
        arrays=arrays,
        base_classes=base_classes,
        new_classes=new_classes,
    )


# ---------------------------------------------------------------------------
# Raw array IO
# ---------------------------------------------------------------------------


def read_f32(path: Path, shape: tuple[int, ...], role: str) -> np.ndarray:
    """Read a headerless little-endian float32 file into a float64 array.

    The file size must match the declared shape exactly.
    """
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(f"array '{role}': cannot read {path}: {exc}") from exc
    expected = 4 * int(np.prod(shape))
    if len(data) != expected:
        raise FormatError(
            f"array '{role}': file {path} holds {len(data)} bytes, expected {expected} for shape {tuple(shape)}"
        )
    arr = np.frombuffer(data, dtype="<f4").astype(np.float64).reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise IntegrityError(f"array '{role}' contains non-finite values")
    return np.ascontiguousarray(arr)


def write_f32(path: Path, arr: np.ndarray) -> None:
    """Write an array as headerless little-endian float32, row-major."""
    Path(path).write_bytes(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def quantize_f32(arr: np.ndarray) -> np.ndarray:
    """Round-trip through binary32 so in-memory values match the on-disk ones."""
    return np.asarray(arr, dtype=np.float32).astype(np.float64)


# ---------------------------------------------------------------------------
# FeatureBundle
# ---------------------------------------------------------------------------


@dataclass
class FeatureBundle:
    """Per-backbone features and logit slabs plus labels, all read-only."""

    image_features: dict[str, np.ndarray]  # bid -> (N, d_b)
    text_features: dict[str, np.ndarray]  # bid -> (M, C, d_b)
    logits: dict[str, np.ndarray]  # bid -> (N, M, C)
    labels: np.ndarray  # (N,) int64
    manifest: Manifest
    _stacked: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def num_samples(self) -> int:
        return int(self.labels.shape[0])

    def freeze(self) -> "FeatureBundle":
        for d in (self.image_features, self.text_features, self.logits):
            for arr in d.values():
                arr.flags.writeable = False
        self.labels.flags.writeable = False
        return self


def stack_logits(bundle: FeatureBundle) -> np.ndarray:
    """All logit slabs as one (N, B*M, C) array, backbone-major prompt-minor."""
    if bundle._stacked is None:
        slabs = [bundle.logits[bid] for bid in bundle.manifest.backbone_ids]
        stacked = np.concatenate(slabs, axis=1)
        stacked.flags.writeable = False
        bundle._stacked = stacked
    return bundle._stacked


def _validate_bundle(bundle: FeatureBundle) -> None:
    man = bundle.manifest
    n = bundle.num_samples
    c, m = man.num_classes, man.num_prompts
    for name, idx in man.splits.items():
        bad = [i for i in idx if i >= n]
        if bad:
            raise FormatError(f"split '{name}' references sample {bad[0]} but bundle has {n} samples")
    labels = bundle.labels
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise IntegrityError(f"labels must lie in [0, {c}), found {labels.min()}..{labels.max()}")
    for spec in man.backbones:
        img = bundle.image_features[spec.id]
        txt = bundle.text_features[spec.id]
        lgt = bundle.logits[spec.id]
        if img.shape != (n, spec.feature_dim):
            raise ShapeError(f"image_features.{spec.id} has shape {img.shape}, expected {(n, spec.feature_dim)}")
        if txt.shape != (m, c, spec.feature_dim):
            raise ShapeError(f"text_features.{spec.id} has shape {txt.shape}, expected {(m, c, spec.feature_dim)}")
        if lgt.shape != (n, m, c):
            raise ShapeError(f"logits.{spec.id} has shape {lgt.shape}, expected {(n, m, c)}")
        if np.any(np.linalg.norm(img, axis=1) == 0.0):
            raise IntegrityError(f"image_features.{spec.id} has a zero-norm row")
        if np.any(np.linalg.norm(txt.reshape(m * c, -1), axis=1) == 0.0):
            raise IntegrityError(f"text_features.{spec.id} has a zero-norm row")


def compute_logits(image: np.ndarray, text: np.ndarray, tau: float) -> np.ndarray:
    """Temperature-scaled cosine logits: (N, d) x (M, C, d) -> (N, M, C)."""
    m, c, d = text.shape
    sims = cosine_rows(image, text.reshape(m * c, d))
    return sims.reshape(image.shape[0], m, c) / tau


def verify_bundle_logits(bundle: FeatureBundle, tol: float = 1e-4) -> float:
    """Recompute every logit from features and compare with the stored slab.

    Returns the worst absolute deviation; raises IntegrityError above ``tol``
    naming the worst offending (backbone, sample, prompt, class) cell.
    """
    man = bundle.manifest
    worst = 0.0
    for spec in man.backbones:
        recomputed = compute_logits(
            bundle.image_features[spec.id], bundle.text_features[spec.id], man.temperature
        )
        diff = np.abs(recomputed - bundle.logits[spec.id])
        local = float(diff.max()) if diff.size else 0.0
        if local > tol:
            i, mm, cc = np.unravel_index(int(diff.argmax()), diff.shape)
            raise IntegrityError(
                f"stored logits disagree with cosine/temperature recomputation: "
                f"backbone={spec.id} sample={i} prompt={mm} class={cc} |delta|={local:.3e} > {tol:g}"
            )
        worst = max(worst, local)
    return worst


def load_bundle(manifest_path, verify_logits: bool = False) -> FeatureBundle:
    """Load and fully validate a bundle from its manifest file."""
    path = Path(manifest_path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise FormatError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest {path} is not valid JSON: {exc}") from exc
    man = manifest_from_json_dict(raw)
    root = path.parent

    def role(name: str) -> np.ndarray:
        ref = man.arrays[name]
        return read_f32(root / ref.file, ref.shape, name)

    labels_f = role("labels")
    if labels_f.ndim != 1:
        raise FormatError("labels array must be one-dimensional")
    if np.any(labels_f != np.round(labels_f)):
        raise FormatError("labels array contains non-integer values")
    labels = labels_f.astype(np.int64)

    image, text, logits = {}, {}, {}
    for spec in man.backbones:
        image[spec.id] = role(f"image_features.{spec.id}")
        text[spec.id] = role(f"text_features.{spec.id}")
        logits[spec.id] = role(f"logits.{spec.id}")

    bundle = FeatureBundle(image, text, logits, labels, man).freeze()
    _validate_bundle(bundle)
    if verify_logits:
        verify_bundle_logits(bundle)
    return bundle


def save_bundle(bundle: FeatureBundle, out_dir) -> Path:
    """Write manifest.json plus one .f32 file per array; returns manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    man = bundle.manifest

    def arr_for(role: str) -> np.ndarray:
        if role == "labels":
            return bundle.labels.astype(np.float64)
        kind, bid = role.split(".", 1)
        return {
            "image_features": bundle.image_features,
            "text_features": bundle.text_features,
            "logits": bundle.logits,
        }[kind][bid]

    for role, ref in man.arrays.items():
        write_f32(out / ref.file, arr_for(role))
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(man.to_json_dict(), indent=2, sort_keys=True) + "\n")
    return manifest_path


# ---------------------------------------------------------------------------
# Synthetic bundles
# ---------------------------------------------------------------------------

# Centroid-scale multipliers per backbone position (cycled): later backbones
# see weaker class separation, so their slabs are genuinely worse.
BACKBONE_QUALITY = (1.0, 0.85, 0.7)
# Per-class anchor drift, per backbone position (per-coordinate std). The
# drift is shared by all of a backbone's prompts, so it cannot cancel when
# slabs are averaged; only down-weighting that backbone fixes it. Being
# additive, it washes out as class_separation grows.
BACKBONE_DRIFT = (1.6, 0.0, 0.4)
# Per-coordinate std of the text-feature offset for prompt m. Prompt 0 (the
# general prompt) is the cleanest; later prompts drift further off-centroid.
PROMPT_NOISE_BASE = 0.15
PROMPT_NOISE_STEP = 0.35
IMAGE_NOISE = 0.8
# Overall magnitude of image features (cosine logits are norm-invariant, so
# this only sets the working scale of the downstream networks, like the
# unnormalized embeddings a real encoder emits).
IMAGE_SCALE = 10.0


@dataclass(frozen=True)
class SynthSpec:
    """Knobs for a desk-scale synthetic world."""

    n: int
    c: int
    m: int
    dims: tuple[int, ...] = (16, 16)
    class_separation: float = 4.0
    nuisance: float = 0.0
    temperature: float = 0.01
    dataset_name: str = "synth"


def synth_bundle(spec: SynthSpec, seed: int) -> FeatureBundle:
    """Deterministically synthesize a bundle (class centroids + noise).

    Image features are centroid + unit Gaussian noise; text features sit
    near the same centroids with prompt-dependent offsets; logits are the
    temperature-scaled cosines of the (float32-quantized) features, so the
    consistency check holds by construction. When ``spec.nuisance`` > 0 every
    backbone gains one extra image-feature coordinate of pure per-sample
    noise whose text counterpart is exactly zero: a controlled
    prompt-irrelevant direction. The manifest rides on ``bundle.manifest``.
    """
    if spec.c < 1 or spec.m < 1 or not spec.dims:
        raise ShapeError("need at least one class, one prompt, and one backbone")
    if spec.n < spec.c:
        raise ShapeError(f"need at least one sample per class (n={spec.n} < c={spec.c})")
    if any(d < 2 for d in spec.dims):
        raise ShapeError("every feature dim must be >= 2")
    rng = make_rng(seed)
    n, c, m = spec.n, spec.c, spec.m
    labels = np.arange(n, dtype=np.int64) % c
    with_nuisance = spec.nuisance > 0.0

    image, text, logits = {}, {}, {}
    backbones = []
    for pos, d in enumerate(spec.dims):
        bid = f"bb{pos}"
        quality = BACKBONE_QUALITY[pos % len(BACKBONE_QUALITY)]
        centroids = rng.normal(size=(c, d))
        centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)
        centroids *= spec.class_separation * quality

        img = (centroids[labels] + IMAGE_NOISE * rng.normal(size=(n, d))) * IMAGE_SCALE
        drift = BACKBONE_DRIFT[pos % len(BACKBONE_DRIFT)] * rng.normal(size=(c, d))
        offsets = rng.normal(size=(m, c, d))
        scales = PROMPT_NOISE_BASE + PROMPT_NOISE_STEP * np.arange(m)
        txt = (centroids + drift)[None, :, :] + scales[:, None, None] * offsets

        if with_nuisance:
            img = np.concatenate(
                [img, spec.nuisance * IMAGE_SCALE * rng.normal(size=(n, 1))], axis=1
            )
            txt = np.concatenate([txt, np.zeros((m, c, 1))], axis=2)
            d = d + 1

        img = quantize_f32(img)
        txt = quantize_f32(txt)
        image[bid] = img
        text[bid] = txt
        logits[bid] = quantize_f32(compute_logits(img, txt, spec.temperature))
        backbones.append(BackboneSpec(id=bid, feature_dim=d))

    base = list(range(math.ceil(c / 2)))
    new = list(range(math.ceil(c / 2), c))
    train, test = [], []
    for cls in range(c):
        members = np.flatnonzero(labels == cls)
        members = members[rng.permutation(members.size)]
        half = members.size // 2
        test.extend(int(i) for i in members[half:])
        if cls in base:
            train.extend(int(i) for i in members[:half])

    arrays = {"labels": ArrayRef("labels.f32", (n,))}
    for spec_b in backbones:
        arrays[f"image_features.{spec_b.id}"] = ArrayRef(f"image_features.{spec_b.id}.f32", (n, spec_b.feature_dim))
        arrays[f"text_features.{spec_b.id}"] = ArrayRef(f"text_features.{spec_b.id}.f32", (m, c, spec_b.feature_dim))
        arrays[f"logits.{spec_b.id}"] = ArrayRef(f"logits.{spec_b.id}.f32", (n, m, c))

    prompts = [
        [f"prompt {j} for class {name}" for j in range(m)]
        for name in (f"class_{k}" for k in range(c))
    ]
    manifest = Manifest(
        dataset_name=spec.dataset_name,
        num_classes=c,
        class_names=[f"class_{k}" for k in range(c)],
        num_prompts=m,
        prompt_texts=prompts,
        general_prompt_index=[0] * c,
        backbones=backbones,
        temperature=spec.temperature,
        splits={"train": sorted(train), "val": [], "test": sorted(test)},
        arrays=arrays,
        base_classes=base,
        new_classes=new,
    )
    bundle = FeatureBundle(image, text, logits, labels, manifest).freeze()
    _validate_bundle(bundle)
    return bundle


def split_base_new(manifest: Manifest) -> tuple[list[int], list[int]]:
    """Base/new class sets: manifest override verbatim, else the half split."""
    if manifest.base_classes is not None and manifest.new_classes is not None:
        return list(manifest.base_classes), list(manifest.new_classes)
    c = manifest.num_classes
    cut = math.ceil(c / 2)
    return list(range(cut)), list(range(cut, c))


def bundle_fingerprint(bundle: FeatureBundle) -> int:
    """Cheap content hash used to assert the world stays frozen."""
    acc = hash(bundle.labels.tobytes())
    for d in (bundle.image_features, bundle.text_features, bundle.logits):
        for bid in sorted(d):
            acc ^= hash((bid, d[bid].tobytes()))
    return acc


def subset_by_classes(labels: np.ndarray, indices: list[int], class_set: set[int]) -> list[int]:
    """Restrict sample indices to those whose label is in ``class_set``."""
    return [i for i in indices if int(labels[i]) in class_set]
