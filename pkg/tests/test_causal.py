import numpy as np
import pytest

from promptens.causal import (
    DiscreteSCM,
    adjustment_formula,
    conditional_y_given_z,
    confounded_scm,
    do_z,
    identity_max_deviation,
    random_scm,
)
from promptens.errors import IntegrityError, UndefinedConditionalError
from promptens.numerics import make_rng


def oracle_do_z_full_joint(scm: DiscreteSCM, z: int) -> np.ndarray:
    """Literal five-loop enumeration of the truncated factorization."""
    t_card, b_card, s_card, _, y_card = scm.cards
    dist = np.zeros(y_card)
    for t in range(t_card):
        for b in range(b_card):
            for s in range(s_card):
                for y in range(y_card):
                    dist[y] += (
                        scm.p_t[t]
                        * scm.p_b[b]
                        * scm.p_s_tb[t, b, s]
                        * scm.p_y_sz[s, z, y]
                    )
    return dist


def _norm(rng, shape):
    t = rng.uniform(0.05, 1.0, size=shape)
    return t / t.sum(axis=-1, keepdims=True)


def _soft_scm(rng, cards):
    t, b, s, z, y = cards
    return DiscreteSCM(
        p_t=_norm(rng, (t,)),
        p_b=_norm(rng, (b,)),
        p_s_tb=_norm(rng, (t, b, s)),
        p_z_s=_norm(rng, (s, z)),
        p_y_sz=_norm(rng, (s, z, y)),
    )


class TestValidation:
    def test_bad_slice_sum_rejected(self):
        scm, _ = confounded_scm()
        broken = DiscreteSCM(
            p_t=np.array([0.6, 0.6]),
            p_b=scm.p_b,
            p_s_tb=scm.p_s_tb,
            p_z_s=scm.p_z_s,
            p_y_sz=scm.p_y_sz,
        )
        with pytest.raises(IntegrityError):
            do_z(broken, 0)

    def test_negative_entry_rejected(self):
        scm, _ = confounded_scm()
        broken = DiscreteSCM(
            p_t=np.array([1.5, -0.5]),
            p_b=scm.p_b,
            p_s_tb=scm.p_s_tb,
            p_z_s=scm.p_z_s,
            p_y_sz=scm.p_y_sz,
        )
        with pytest.raises(IntegrityError):
            do_z(broken, 0)

    def test_joint_sums_to_one(self):
        scm = random_scm(make_rng(0), (2, 3, 2, 3, 2))
        assert scm.joint().sum() == pytest.approx(1.0, abs=1e-12)


class TestDoZ:
    def test_no_confounding_collapses_to_conditional(self):
        # semantics table flat in (t,b); label ignores semantics
        rng = make_rng(1)
        s_flat = _norm(rng, (3,))
        y_zonly = _norm(rng, (2, 2))  # depends on z only
        scm = DiscreteSCM(
            p_t=_norm(rng, (2,)),
            p_b=_norm(rng, (2,)),
            p_s_tb=np.broadcast_to(s_flat, (2, 2, 3)).copy(),
            p_z_s=_norm(rng, (3, 2)),
            p_y_sz=np.broadcast_to(y_zonly[None, :, :], (3, 2, 2)).copy(),
        )
        for z in range(2):
            np.testing.assert_allclose(do_z(scm, z), conditional_y_given_z(scm, z), atol=1e-12)

    def test_matches_full_joint_enumeration(self):
        rng = make_rng(2)
        for trial in range(50):
            scm = _soft_scm(rng, (2, 2, 2, 2, 2))  # 32-cell joint
            for z in range(2):
                np.testing.assert_allclose(do_z(scm, z), oracle_do_z_full_joint(scm, z), atol=1e-12)

    def test_output_is_distribution(self):
        rng = make_rng(3)
        for trial in range(50):
            cards = tuple(int(c) for c in rng.integers(2, 5, size=5))
            scm = random_scm(rng, cards)
            for z in range(cards[3]):
                dist = do_z(scm, z)
                assert np.all(dist >= 0)
                assert dist.sum() == pytest.approx(1.0, abs=1e-10)

    def test_out_of_range_intervention(self):
        scm, _ = confounded_scm()
        with pytest.raises(UndefinedConditionalError):
            do_z(scm, 5)


class TestAdjustmentIdentity:
    def test_holds_on_random_functional_semantics_models(self):
        assert identity_max_deviation(trials=200, seed=0) <= 1e-10

    def test_adjustment_output_is_distribution(self):
        rng = make_rng(4)
        for _ in range(30):
            cards = tuple(int(c) for c in rng.integers(2, 5, size=5))
            scm = random_scm(rng, cards)
            dist = adjustment_formula(scm, 0)
            assert np.all(dist >= -1e-15)
            assert dist.sum() == pytest.approx(1.0, abs=1e-10)

    def test_zero_probability_cell_rejected(self):
        scm, _ = confounded_scm()
        # forbid z=0 entirely: P(z=0, t, b) becomes 0 for every (t, b)
        blocked = DiscreteSCM(
            p_t=scm.p_t,
            p_b=scm.p_b,
            p_s_tb=scm.p_s_tb,
            p_z_s=np.array([[0.0, 1.0], [0.0, 1.0]]),
            p_y_sz=scm.p_y_sz,
        )
        with pytest.raises(UndefinedConditionalError):
            adjustment_formula(blocked, 0)

    def test_soft_semantics_break_the_identity(self):
        """With non-functional P(s|t,b) the semantics confound Z given (T,B)
        and the observational adjustment no longer matches the intervention;
        this is why random_scm draws one-hot semantics tables."""
        rng = make_rng(5)
        worst = 0.0
        for _ in range(200):
            scm = _soft_scm(rng, (2, 2, 3, 2, 2))
            for z in range(2):
                worst = max(worst, float(np.abs(do_z(scm, z) - adjustment_formula(scm, z)).max()))
        assert worst > 1e-3


class TestConfoundingWitness:
    def test_gap_exceeds_threshold(self):
        scm, z = confounded_scm()
        gap = float(np.abs(conditional_y_given_z(scm, z) - do_z(scm, z)).max())
        assert gap > 0.05

    def test_adjustment_still_matches_intervention(self):
        scm, z = confounded_scm()
        np.testing.assert_allclose(adjustment_formula(scm, z), do_z(scm, z), atol=1e-12)

    def test_witness_numbers(self):
        scm, z = confounded_scm()
        assert conditional_y_given_z(scm, z)[1] == pytest.approx(0.82, abs=1e-12)
        assert do_z(scm, z)[1] == pytest.approx(0.5, abs=1e-12)
