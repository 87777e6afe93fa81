"""Train the ensemble weighter and watch what it learns.

Two small networks train together: per-backbone redundancy heads split
each image feature into a relevant and an irrelevant half, and a weight
generator turns the concatenated relevant halves into one weight per
(backbone, prompt) logit slab. The objective is the ensemble
cross-entropy plus two regularizers (KL-to-uniform on the irrelevant
half, a conditional-dependence penalty between the halves).
"""

import numpy as np

from promptens import SynthSpec, TrainConfig, fit, synth_bundle
from promptens.ensemble import build_mu
from promptens.evaluator import eval_base_to_novel
from promptens.networks import rd_forward, wg_forward
from promptens.trainer import init_state, lr_at

bundle = synth_bundle(SynthSpec(n=256, c=8, m=3, dims=(16, 16), class_separation=2.0), seed=7)
cfg = TrainConfig(seed=0)  # batch 128, 5 epochs, warmup 1 epoch @ 1e-5, peak 2e-2

print("learning-rate schedule:", [f"{lr_at(cfg, e):.2e}" for e in range(cfg.epochs)])

records = []
state = fit(bundle, cfg, on_step=lambda s, e, lr, r: records.append((s, e, lr, r)))
print("\nstep  epoch  lr        ce       kl       mutual     total")
for s, e, lr, r in records:
    print(f"{s:>4}  {e:>5}  {lr:.2e}  {r.ce:7.4f}  {r.kl:7.3f}  {r.mutual:9.3f}  {r.total:9.3f}")

# What did it learn? Inspect the mean weight per slab: the drifted
# backbone's slabs should be suppressed relative to the clean one.
test = np.asarray(bundle.manifest.splits["test"])
z_img = {bid: bundle.image_features[bid][test] for bid in bundle.manifest.backbone_ids}
zr, _ = rd_forward(state.rd, z_img)
weights = wg_forward(state.wg, build_mu(zr))
print("\nmean learned weight per slab:")
m = bundle.manifest.num_prompts
for k, w in enumerate(weights.mean(axis=0)):
    print(f"  slot {k} ({bundle.manifest.backbone_ids[k // m]}, prompt {k % m}): {w:.3f}")

untrained = init_state(bundle, cfg)
before = eval_base_to_novel(untrained.wg, untrained.rd, bundle)
after = eval_base_to_novel(state.wg, state.rd, bundle)
print(f"\nbase accuracy: random-init {before.scores['base'].accuracy:.3f} "
      f"-> trained {after.scores['base'].accuracy:.3f}")
