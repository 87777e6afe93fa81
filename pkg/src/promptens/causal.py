"""Finite discrete structural causal models over (T, B, S, Z, Y).

The graph: prompt T and backbone B jointly fix the semantics S; S drives
both the extracted features Z and the label Y; Z also drives Y. The joint
factorizes as P(t) P(b) P(s|t,b) P(z|s) P(y|s,z).

Two estimands are computed by exhaustive enumeration:

* ``do_z`` — the interventional distribution, dropping the Z mechanism:
  sum_{t,b,s} P(t) P(b) P(s|t,b) P(y|s,z).
* ``adjustment_formula`` — the observational estimand
  sum_{t,b} P(t) P(b) P(y|z,t,b).

The two agree exactly when semantics are a *function* of (prompt, backbone),
because only then is S independent of Z given (T, B). ``random_scm``
therefore draws one-hot P(s|t,b) tables (and strictly positive everything
else, so every conditional exists); soft tables remain legal inputs for
``do_z`` and for exhibiting confounding, where plain conditioning
P(y|z) diverges from the intervention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IntegrityError, UndefinedConditionalError
from .numerics import make_rng

_ATOL = 1e-12


@dataclass(frozen=True)
class DiscreteSCM:
    p_t: np.ndarray  # (T,)
    p_b: np.ndarray  # (B,)
    p_s_tb: np.ndarray  # (T, B, S)
    p_z_s: np.ndarray  # (S, Z)
    p_y_sz: np.ndarray  # (S, Z, Y)

    @property
    def cards(self) -> tuple[int, int, int, int, int]:
        t, b, s = self.p_s_tb.shape
        z, y = self.p_z_s.shape[1], self.p_y_sz.shape[2]
        return t, b, s, z, y

    def validate(self) -> None:
        t, b, s, z, y = self.cards
        checks = [
            ("P(t)", self.p_t, (t,), 0),
            ("P(b)", self.p_b, (b,), 0),
            ("P(s|t,b)", self.p_s_tb, (t, b, s), 2),
            ("P(z|s)", self.p_z_s, (s, z), 1),
            ("P(y|s,z)", self.p_y_sz, (s, z, y), 2),
        ]
        for name, table, shape, lead in checks:
            if table.shape != shape:
                raise IntegrityError(f"{name} has shape {table.shape}, expected {shape}")
            if np.any(table < 0) or not np.all(np.isfinite(table)):
                raise IntegrityError(f"{name} has negative or non-finite entries")
            sums = table.sum(axis=-1)
            if not np.allclose(sums, 1.0, atol=_ATOL, rtol=0):
                raise IntegrityError(f"{name} slices do not sum to 1 (max err {np.abs(sums - 1).max():.2e})")

    def joint(self) -> np.ndarray:
        """Full joint P(t, b, s, z, y) by enumeration."""
        self.validate()
        return np.einsum(
            "t,b,tbs,sz,szy->tbszy", self.p_t, self.p_b, self.p_s_tb, self.p_z_s, self.p_y_sz
        )


def do_z(scm: DiscreteSCM, z: int) -> np.ndarray:
    """Post-intervention distribution over Y after forcing Z=z."""
    scm.validate()
    _, _, _, z_card, _ = scm.cards
    if not 0 <= z < z_card:
        raise UndefinedConditionalError(f"z={z} outside [0, {z_card})")
    dist = np.einsum("t,b,tbs,sy->y", scm.p_t, scm.p_b, scm.p_s_tb, scm.p_y_sz[:, z, :])
    total = dist.sum()
    if not np.isclose(total, 1.0, atol=1e-10, rtol=0):
        raise IntegrityError(f"intervention distribution sums to {total}, not 1")
    return dist


def adjustment_formula(scm: DiscreteSCM, z: int) -> np.ndarray:
    """sum_{t,b} P(t) P(b) P(y|z,t,b), with conditionals from the full joint."""
    joint = scm.joint()
    _, _, _, z_card, _ = scm.cards
    if not 0 <= z < z_card:
        raise UndefinedConditionalError(f"z={z} outside [0, {z_card})")
    p_tbzy = joint.sum(axis=2)  # (T, B, Z, Y)
    p_tbz = p_tbzy.sum(axis=3)
    if np.any(p_tbz[:, :, z] == 0.0):
        t, b = map(int, np.argwhere(p_tbz[:, :, z] == 0.0)[0])
        raise UndefinedConditionalError(
            f"P(y|z,t,b) undefined: P(z={z}, t={t}, b={b}) = 0"
        )
    p_y_given_ztb = p_tbzy[:, :, z, :] / p_tbz[:, :, z][:, :, None]
    return np.einsum("t,b,tby->y", scm.p_t, scm.p_b, p_y_given_ztb)


def conditional_y_given_z(scm: DiscreteSCM, z: int) -> np.ndarray:
    """Plain observational P(y|z) — the correlation an intervention corrects."""
    joint = scm.joint()
    p_zy = joint.sum(axis=(0, 1, 2))  # (Z, Y)
    p_z = p_zy.sum(axis=1)
    if p_z[z] == 0.0:
        raise UndefinedConditionalError(f"P(z={z}) = 0")
    return p_zy[z] / p_z[z]


def _normalized_positive(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    table = rng.uniform(0.05, 1.0, size=shape)
    return table / table.sum(axis=-1, keepdims=True)


def random_scm(
    rng: np.random.Generator, cards: tuple[int, int, int, int, int]
) -> DiscreteSCM:
    """Random SCM with positive support everywhere and functional semantics.

    P(s|t,b) is a uniformly random one-hot table: semantics are fixed by the
    (prompt, backbone) pair, the regime in which the adjustment identity is
    exact. All other tables are normalized positive draws, so P(z,t,b) > 0
    for every cell and every conditional in the identity exists.
    """
    t, b, s, z, y = cards
    p_s_tb = np.zeros((t, b, s))
    assignment = rng.integers(0, s, size=(t, b))
    for i in range(t):
        for j in range(b):
            p_s_tb[i, j, assignment[i, j]] = 1.0
    return DiscreteSCM(
        p_t=_normalized_positive(rng, (t,)),
        p_b=_normalized_positive(rng, (b,)),
        p_s_tb=p_s_tb,
        p_z_s=_normalized_positive(rng, (s, z)),
        p_y_sz=_normalized_positive(rng, (s, z, y)),
    )


def confounded_scm() -> tuple[DiscreteSCM, int]:
    """Hand-built witness where conditioning and intervening disagree.

    Semantics copy the prompt (s = t with T a fair coin, B trivial); the
    features copy the semantics with 10% flips and so does the label,
    independently of the features. Conditioning on Z=1 then inflates
    P(y=1|z=1) to 0.82 while P(y=1|do(z=1)) stays 0.5.
    """
    eye = np.eye(2)
    scm = DiscreteSCM(
        p_t=np.array([0.5, 0.5]),
        p_b=np.array([1.0]),
        p_s_tb=eye[:, None, :],  # s = t deterministically
        p_z_s=np.array([[0.9, 0.1], [0.1, 0.9]]),
        p_y_sz=np.array([[[0.9, 0.1], [0.9, 0.1]], [[0.1, 0.9], [0.1, 0.9]]]),
    )
    return scm, 1


def identity_max_deviation(
    trials: int, seed: int, max_card: int = 4
) -> float:
    """Worst |do_z - adjustment| over random SCMs and all z values."""
    rng = make_rng(seed)
    worst = 0.0
    for _ in range(trials):
        cards = tuple(int(c) for c in rng.integers(2, max_card + 1, size=5))
        scm = random_scm(rng, cards)
        for z in range(cards[3]):
            dev = float(np.abs(do_z(scm, z) - adjustment_formula(scm, z)).max())
            worst = max(worst, dev)
    return worst
