import numpy as np
import pytest
import scipy.special
import scipy.stats

from promptens.errors import ConfigError, DegenerateInputError
from promptens.evaluator import (
    accuracy,
    eval_base_to_novel,
    eval_transfer,
    harmonic_mean,
    paired_t_test,
    predict_classes,
    regularized_incomplete_beta,
    reports_to_csv,
    student_t_sf,
)
from promptens.feature_store import (
    FeatureBundle,
    SynthSpec,
    compute_logits,
    quantize_f32,
    split_base_new,
    synth_bundle,
)
from promptens.numerics import make_rng
from promptens.trainer import TrainConfig, fit, init_state


class TestAccuracy:
    def test_all_correct(self):
        assert accuracy(np.array([1, 2, 3]), np.array([1, 2, 3])) == 1.0

    def test_half_correct(self):
        assert accuracy(np.array([1, 2, 3, 4]), np.array([1, 2, 0, 0])) == 0.5

    def test_empty_rejected(self):
        with pytest.raises(DegenerateInputError):
            accuracy(np.array([]), np.array([]))

    def test_trained_beats_untrained(self, tiny_synth):
        cfg = TrainConfig(seed=0)
        st0 = init_state(tiny_synth, cfg)
        st = fit(tiny_synth, cfg)
        test = tiny_synth.manifest.splits["test"]
        truth = tiny_synth.labels[np.asarray(test)]
        acc0 = accuracy(predict_classes(st0.wg, st0.rd, tiny_synth, test), truth)
        acc1 = accuracy(predict_classes(st.wg, st.rd, tiny_synth, test), truth)
        assert acc1 > acc0


class TestHarmonicMean:
    def test_published_average_rows(self):
        assert harmonic_mean(83.85, 77.00) == pytest.approx(80.28, abs=0.01)
        assert harmonic_mean(86.35, 79.08) == pytest.approx(82.56, abs=0.01)

    def test_equal_arguments_identity(self):
        for x in (0.1, 0.5, 73.2):
            assert harmonic_mean(x, x) == pytest.approx(x, abs=1e-12)

    def test_both_zero_rejected(self):
        with pytest.raises(DegenerateInputError):
            harmonic_mean(0.0, 0.0)

    def test_below_arithmetic_mean_with_equality_iff_equal(self):
        for a in np.linspace(0.05, 1.0, 8):
            for b in np.linspace(0.05, 1.0, 8):
                hm = harmonic_mean(a, b)
                am = (a + b) / 2
                assert hm <= am + 1e-12
                if abs(a - b) > 1e-9:
                    assert hm < am


class TestBaseToNovel:
    def test_separable_world_scores_high(self):
        b = synth_bundle(SynthSpec(n=64, c=4, m=3, dims=(16, 16), class_separation=10.0), seed=7)
        state = fit(b, TrainConfig(seed=0))
        report = eval_base_to_novel(state.wg, state.rd, b)
        assert report.scores["base"].accuracy >= 0.9
        assert report.scores["new"].accuracy >= 0.9

    def test_degenerate_model_follows_tie_rule(self, tiny_synth):
        # constant one-hot slabs: any weighting predicts class k on base
        # columns and leaves the new columns tied
        k = 1
        man = tiny_synth.manifest
        onehot = np.zeros((tiny_synth.num_samples, man.num_prompts, man.num_classes))
        onehot[:, :, k] = 5.0
        degenerate = FeatureBundle(
            dict(tiny_synth.image_features),
            dict(tiny_synth.text_features),
            {bid: onehot.copy() for bid in man.backbone_ids},
            tiny_synth.labels.copy(),
            man,
        ).freeze()
        state = init_state(tiny_synth, TrainConfig(seed=0))
        report = eval_base_to_novel(state.wg, state.rd, degenerate)
        base, new = split_base_new(man)
        assert k in base
        test = np.asarray(man.splits["test"])
        labels = tiny_synth.labels[test]
        base_members = labels[np.isin(labels, base)]
        new_members = labels[np.isin(labels, new)]
        assert report.scores["base"].accuracy == pytest.approx(
            float(np.mean(base_members == k))
        )
        # ties resolve to the lowest class index inside the restricted set
        assert report.scores["new"].accuracy == pytest.approx(
            float(np.mean(new_members == min(new)))
        )

    def test_hm_consistency(self, tiny_synth):
        state = fit(tiny_synth, TrainConfig(seed=1))
        report = eval_base_to_novel(state.wg, state.rd, tiny_synth)
        assert report.hm == pytest.approx(
            harmonic_mean(report.scores["base"].accuracy, report.scores["new"].accuracy)
        )

    def test_base_samples_never_scored_on_new_columns(self, tiny_synth):
        """Restricted argmax can only emit classes from the restricted set."""
        state = init_state(tiny_synth, TrainConfig(seed=2))
        base, new = split_base_new(tiny_synth.manifest)
        test = tiny_synth.manifest.splits["test"]
        preds = predict_classes(state.wg, state.rd, tiny_synth, test, class_subset=base)
        assert set(int(p) for p in preds) <= set(base)

    def test_deterministic_reports(self, tiny_synth):
        state = fit(tiny_synth, TrainConfig(seed=3))
        a = eval_base_to_novel(state.wg, state.rd, tiny_synth)
        b = eval_base_to_novel(state.wg, state.rd, tiny_synth)
        assert a == b


def _noisy_copy(bundle: FeatureBundle, sigma: float, seed: int) -> FeatureBundle:
    """Same manifest/world, image features perturbed, logits recomputed."""
    rng = make_rng(seed)
    image, logits = {}, {}
    for bid in bundle.manifest.backbone_ids:
        img = quantize_f32(
            bundle.image_features[bid] + sigma * rng.normal(size=bundle.image_features[bid].shape)
        )
        image[bid] = img
        logits[bid] = quantize_f32(
            compute_logits(img, bundle.text_features[bid], bundle.manifest.temperature)
        )
    return FeatureBundle(
        image, dict(bundle.text_features), logits, bundle.labels.copy(), bundle.manifest
    ).freeze()


class TestTransfer:
    def test_self_transfer_equals_in_domain(self, tiny_synth):
        state = fit(tiny_synth, TrainConfig(seed=0))
        report = eval_transfer(state.wg, state.rd, tiny_synth)
        test = tiny_synth.manifest.splits["test"]
        truth = tiny_synth.labels[np.asarray(test)]
        direct = accuracy(predict_classes(state.wg, state.rd, tiny_synth, test), truth)
        assert report.scores["target"].accuracy == pytest.approx(direct)
        assert report.task == "cross_dataset"

    def test_noisy_target_lands_between_chance_and_in_domain(self, tiny_synth):
        state = fit(tiny_synth, TrainConfig(seed=0))
        in_domain = eval_transfer(state.wg, state.rd, tiny_synth).scores["target"].accuracy
        # noise at half the feature scale: clearly degraded, clearly above chance
        sigma = 0.5 * float(np.std(tiny_synth.image_features["bb0"]))
        noisy = _noisy_copy(tiny_synth, sigma=sigma, seed=11)
        acc = eval_transfer(state.wg, state.rd, noisy).scores["target"].accuracy
        chance = 1.0 / tiny_synth.manifest.num_classes
        assert chance < acc < in_domain

    def test_structure_mismatch_rejected(self, tiny_synth):
        state = fit(tiny_synth, TrainConfig(seed=0))
        other = synth_bundle(SynthSpec(n=16, c=4, m=2, dims=(16, 16)), seed=0)  # M differs
        with pytest.raises(ConfigError):
            eval_transfer(state.wg, state.rd, other)
        other2 = synth_bundle(SynthSpec(n=16, c=4, m=3, dims=(8, 16)), seed=0)  # dim differs
        with pytest.raises(ConfigError):
            eval_transfer(state.wg, state.rd, other2)

    def test_domain_gen_task_label(self, tiny_synth):
        state = fit(tiny_synth, TrainConfig(seed=0))
        report = eval_transfer(state.wg, state.rd, tiny_synth, task="domain_gen")
        assert report.task == "domain_gen"
        with pytest.raises(ConfigError):
            eval_transfer(state.wg, state.rd, tiny_synth, task="nope")


class TestIncompleteBeta:
    def test_matches_scipy_over_grid(self):
        rng = make_rng(0)
        for _ in range(300):
            a = float(rng.uniform(0.5, 30.0))
            b = float(rng.uniform(0.5, 30.0))
            x = float(rng.uniform(0.0, 1.0))
            mine = regularized_incomplete_beta(a, b, x)
            ref = float(scipy.special.betainc(a, b, x))
            assert mine == pytest.approx(ref, abs=1e-10)

    def test_edge_values(self):
        assert regularized_incomplete_beta(2.0, 3.0, 0.0) == 0.0
        assert regularized_incomplete_beta(2.0, 3.0, 1.0) == 1.0

    def test_t_sf_matches_scipy(self):
        rng = make_rng(1)
        for _ in range(100):
            t = float(rng.uniform(0.0, 6.0))
            dof = int(rng.integers(2, 40))
            ref = 2.0 * float(scipy.stats.t.sf(t, dof))
            assert student_t_sf(t, dof) == pytest.approx(ref, abs=1e-10)


class TestPairedTTest:
    def test_identical_lists_degenerate(self):
        with pytest.raises(DegenerateInputError):
            paired_t_test([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])

    def test_constant_shift_degenerate(self):
        with pytest.raises(DegenerateInputError):
            paired_t_test([1.0, 2.0, 3.0], [1.5, 2.5, 3.5])

    def test_short_input_rejected(self):
        with pytest.raises(DegenerateInputError):
            paired_t_test([1.0], [2.0])

    def test_textbook_pair(self):
        # classic before/after pairs; expected value computed independently
        # from t = mean(d) * sqrt(n) / sd(d) with d = a-b, t = 2.2014, dof = 9
        a = [25.0, 25.0, 27.0, 44.0, 30.0, 67.0, 53.0, 53.0, 52.0, 60.0]
        b = [27.0, 29.0, 37.0, 56.0, 46.0, 82.0, 57.0, 80.0, 61.0, 59.0]
        expected = float(scipy.stats.ttest_rel(a, b).pvalue)
        assert paired_t_test(a, b) == pytest.approx(expected, abs=1e-3)
        assert paired_t_test(a, b) == pytest.approx(expected, abs=1e-10)

    def test_random_pairs_match_scipy(self):
        rng = make_rng(2)
        for _ in range(200):
            n = int(rng.integers(3, 15))
            a = rng.normal(size=n)
            b = a + rng.normal(size=n) * rng.uniform(0.1, 2.0) + rng.uniform(-1, 1)
            ref = float(scipy.stats.ttest_rel(a, b).pvalue)
            assert paired_t_test(a, b) == pytest.approx(ref, abs=1e-10)

    def test_symmetry(self):
        rng = make_rng(3)
        a, b = rng.normal(size=8), rng.normal(size=8)
        assert paired_t_test(a, b) == pytest.approx(paired_t_test(b, a), abs=1e-14)


class TestCsvExport:
    def test_layout(self, tiny_synth):
        state = fit(tiny_synth, TrainConfig(seed=0))
        rows = {
            "tiny": eval_base_to_novel(state.wg, state.rd, tiny_synth),
            "tiny-x": eval_transfer(state.wg, state.rd, tiny_synth),
        }
        text = reports_to_csv(rows)
        lines = text.strip().split("\n")
        assert lines[0] == "dataset,task,base,new,hm,accuracy"
        assert lines[1].startswith("tiny,base_to_novel,")
        assert lines[2].startswith("tiny-x,cross_dataset,,,")
        assert len(lines) == 3
