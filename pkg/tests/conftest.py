import pytest

from promptens.feature_store import SynthSpec, synth_bundle

# Canonical small fixture: 64 samples, 4 classes, 3 prompts, two 16-d
# backbones. Separation 2.0 at temperature 0.25 keeps the ensemble
# cross-entropy away from saturation, so every loss has meaningful
# gradients on this bundle.
TINY_SPEC = SynthSpec(n=64, c=4, m=3, dims=(16, 16), class_separation=2.0, temperature=0.25)
TINY_SEED = 7


@pytest.fixture(scope="session")
def tiny_synth():
    return synth_bundle(TINY_SPEC, seed=TINY_SEED)
