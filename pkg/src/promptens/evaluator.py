"""Metrics and the three evaluation protocols.

Base-to-novel scores a test split twice: samples of base classes with the
argmax restricted to base-class logit columns, samples of new classes
restricted to new-class columns, plus the harmonic mean of the two. The
transfer protocols run the trained networks against a target bundle's
features and slabs, which may describe entirely different classes as long
as the backbone/prompt structure matches.

The paired t-test computes its p-value through a self-contained regularized
incomplete beta function (continued fraction, ~1e-12 accurate), so the
package needs no stats dependency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .ensemble import aggregate, build_mu, predict
from .errors import ConfigError, DegenerateInputError
from .feature_store import FeatureBundle, split_base_new, stack_logits, subset_by_classes
from .networks import RedundancyNet, WeightGenerator, rd_forward, wg_forward

TASKS = ("base_to_novel", "cross_dataset", "domain_gen")


@dataclass(frozen=True)
class SplitScore:
    n_correct: int
    n_total: int

    @property
    def accuracy(self) -> float:
        return self.n_correct / self.n_total


@dataclass(frozen=True)
class EvalReport:
    task: str
    scores: dict[str, SplitScore]
    hm: float | None = None

    def to_dict(self) -> dict:
        out: dict = {"task": self.task}
        for name, score in self.scores.items():
            out[name] = {
                "accuracy": score.accuracy,
                "n_correct": score.n_correct,
                "n_total": score.n_total,
            }
        if self.hm is not None:
            out["hm"] = self.hm
        return out


def accuracy(predictions: np.ndarray, labels: np.ndarray) -> float:
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise DegenerateInputError(
            f"prediction/label lengths differ: {predictions.shape} vs {labels.shape}"
        )
    if predictions.size == 0:
        raise DegenerateInputError("cannot score an empty sample set")
    return float(np.mean(predictions == labels))


def harmonic_mean(base: float, new: float) -> float:
    if base < 0 or new < 0 or (base == 0 and new == 0):
        raise DegenerateInputError(f"harmonic mean undefined for ({base}, {new})")
    return 2.0 * base * new / (base + new)


def predict_classes(
    wg: WeightGenerator,
    rd: RedundancyNet,
    bundle: FeatureBundle,
    sample_indices: Sequence[int],
    class_subset: Sequence[int] | None = None,
) -> np.ndarray:
    """Ensemble predictions for the given samples.

    ``class_subset`` restricts the argmax to those logit columns and maps the
    winners back to absolute class indices.
    """
    idx = np.asarray(sample_indices, dtype=np.int64)
    man = bundle.manifest
    z_img = {bid: bundle.image_features[bid][idx] for bid in man.backbone_ids}
    zr, _ = rd_forward(rd, z_img)
    weights = wg_forward(wg, build_mu(zr))
    slabs = stack_logits(bundle)[idx]
    if class_subset is not None:
        cols = np.asarray(list(class_subset), dtype=np.int64)
        local = predict(aggregate(slabs[:, :, cols], weights))
        return cols[local]
    return predict(aggregate(slabs, weights))


def _check_structure(wg: WeightGenerator, rd: RedundancyNet, bundle: FeatureBundle) -> None:
    man = bundle.manifest
    dims = {b.id: b.feature_dim for b in man.backbones}
    head_dims = {bid: h.dim for bid, h in rd.heads.items()}
    if dims != head_dims:
        raise ConfigError(
            f"backbone layout mismatch: bundle has {dims}, networks were trained for {head_dims}"
        )
    if wg.num_slots != man.num_slots:
        raise ConfigError(
            f"slab-count mismatch: bundle provides {man.num_slots} slabs, "
            f"weight generator emits {wg.num_slots}"
        )


def eval_base_to_novel(
    wg: WeightGenerator, rd: RedundancyNet, bundle: FeatureBundle
) -> EvalReport:
    """Base and new accuracy on the test split, each restricted to its columns."""
    _check_structure(wg, rd, bundle)
    man = bundle.manifest
    test = man.splits.get("test", [])
    if not test:
        raise ConfigError("bundle has no test split")
    base_classes, new_classes = split_base_new(man)
    if not base_classes or not new_classes:
        raise ConfigError("base-to-novel needs nonempty base and new class sets")

    scores = {}
    for name, class_set in (("base", base_classes), ("new", new_classes)):
        members = subset_by_classes(bundle.labels, test, set(class_set))
        if not members:
            raise ConfigError(f"test split holds no samples of {name} classes")
        preds = predict_classes(wg, rd, bundle, members, class_subset=class_set)
        truth = bundle.labels[np.asarray(members, dtype=np.int64)]
        scores[name] = SplitScore(int(np.sum(preds == truth)), len(members))
    hm = harmonic_mean(scores["base"].accuracy, scores["new"].accuracy)
    return EvalReport(task="base_to_novel", scores=scores, hm=hm)


def eval_transfer(
    wg: WeightGenerator,
    rd: RedundancyNet,
    target_bundle: FeatureBundle,
    task: str = "cross_dataset",
) -> EvalReport:
    """Plain accuracy of the trained networks on a target bundle's test split."""
    if task not in ("cross_dataset", "domain_gen"):
        raise ConfigError(f"unknown transfer task '{task}'")
    _check_structure(wg, rd, target_bundle)
    test = target_bundle.manifest.splits.get("test", [])
    if not test:
        raise ConfigError("target bundle has no test split")
    preds = predict_classes(wg, rd, target_bundle, test)
    truth = target_bundle.labels[np.asarray(test, dtype=np.int64)]
    return EvalReport(
        task=task, scores={"target": SplitScore(int(np.sum(preds == truth)), len(test))}
    )


# ---------------------------------------------------------------------------
# Paired Student's t-test
# ---------------------------------------------------------------------------

_BETACF_MAX_ITER = 300
_BETACF_EPS = 1e-15


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz iteration)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction failed for a={a} b={b} x={x}")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b), accurate to ~1e-12 over the t-test parameter range."""
    if not (0.0 <= x <= 1.0):
        raise DegenerateInputError(f"x={x} outside [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    # the continued fraction converges fast only on one side of the mean
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf(t: float, dof: float) -> float:
    """P(|T| >= t) for Student's t with ``dof`` degrees of freedom."""
    x = dof / (dof + t * t)
    return regularized_incomplete_beta(dof / 2.0, 0.5, x)


def paired_t_test(scores_a: Sequence[float], scores_b: Sequence[float]) -> float:
    """Two-tailed paired t-test p-value."""
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DegenerateInputError("paired test needs two equal-length 1-D score lists")
    if a.size < 2:
        raise DegenerateInputError("paired test needs at least two pairs")
    diffs = a - b
    sd = float(np.std(diffs, ddof=1))
    if sd == 0.0:
        raise DegenerateInputError("differences have zero variance")
    t = float(np.mean(diffs)) * math.sqrt(diffs.size) / sd
    return student_t_sf(abs(t), diffs.size - 1)


# ---------------------------------------------------------------------------
# Tabular export
# ---------------------------------------------------------------------------


def reports_to_csv(rows: Mapping[str, EvalReport]) -> str:
    """Flat per-dataset table: dataset,task,base,new,hm,accuracy."""
    lines = ["dataset,task,base,new,hm,accuracy"]
    for dataset, report in rows.items():
        base = report.scores.get("base")
        new = report.scores.get("new")
        target = report.scores.get("target")
        lines.append(
            ",".join(
                [
                    dataset,
                    report.task,
                    f"{base.accuracy:.6f}" if base else "",
                    f"{new.accuracy:.6f}" if new else "",
                    f"{report.hm:.6f}" if report.hm is not None else "",
                    f"{target.accuracy:.6f}" if target else "",
                ]
            )
        )
    return "\n".join(lines) + "\n"
