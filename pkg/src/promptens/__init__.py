"""Adaptive debiased ensembling of multi-prompt vision-language logits.

A small numpy library that trains a per-sample weight generator and a
redundancy-splitting network over frozen, precomputed features, aggregates
per-(backbone, prompt) logit slabs into one prediction, and evaluates
base-to-novel / cross-dataset / domain-shift protocols.
"""

__version__ = "0.1.0"

from .feature_store import (  # noqa: F401
    FeatureBundle,
    Manifest,
    SynthSpec,
    load_bundle,
    save_bundle,
    split_base_new,
    stack_logits,
    synth_bundle,
)
from .losses import LossReport, ce_ensemble, cmi, kl_uniform, total_loss  # noqa: F401
from .trainer import TrainConfig, TrainState, fit, lr_at, train_step  # noqa: F401
from .evaluator import (  # noqa: F401
    EvalReport,
    accuracy,
    eval_base_to_novel,
    eval_transfer,
    harmonic_mean,
    paired_t_test,
)
from .causal import DiscreteSCM, adjustment_formula, confounded_scm, do_z, random_scm  # noqa: F401
