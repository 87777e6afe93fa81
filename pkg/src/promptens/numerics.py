"""Dense float64 array kernels used by every other module.

All public functions are pure, operate on (or return) C-contiguous float64
arrays, and guarantee finite outputs for finite inputs. Randomness goes
through :func:`make_rng`, a counter-based Philox generator, so any fixture
built from a seed is bit-identical across runs and platforms.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import DegenerateInputError, NumericDomainError


def as_f64(x, name: str = "input") -> np.ndarray:
    """Convert to a float64 array and reject non-finite values."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.size and not np.all(np.isfinite(arr)):
        raise NumericDomainError(f"{name} contains non-finite values")
    return arr


def softmax(logits, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax along ``axis`` (max-subtraction form).

    Output entries are nonnegative and sum to 1 along ``axis`` to within
    1e-12 for any finite input.
    """
    x = as_f64(logits, "logits")
    if x.shape[axis] < 1:
        raise DegenerateInputError("softmax needs at least one logit")
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(logits, axis: int = -1) -> np.ndarray:
    """log(softmax(x)) computed via logsumexp; safe where softmax underflows."""
    x = as_f64(logits, "logits")
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def cosine(a, b) -> float:
    """Cosine similarity of two 1-D vectors, clipped into [-1, 1].

    Raises DegenerateInputError when either vector has zero norm.
    """
    va = as_f64(a, "a").ravel()
    vb = as_f64(b, "b").ravel()
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine of a zero-norm vector is undefined")
    return float(np.clip(va @ vb / (na * nb), -1.0, 1.0))


def cosine_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarities between rows of ``a`` (n, d) and ``b`` (k, d).

    Rows of zero norm are not allowed here; callers that need a zero-norm
    convention (the irrelevant-feature KL term) handle it themselves.
    """
    a = as_f64(a, "a")
    b = as_f64(b, "b")
    na = np.linalg.norm(a, axis=1)
    nb = np.linalg.norm(b, axis=1)
    if np.any(na == 0.0) or np.any(nb == 0.0):
        raise DegenerateInputError("cosine_rows received a zero-norm row")
    sims = (a / na[:, None]) @ (b / nb[:, None]).T
    return np.clip(sims, -1.0, 1.0)


def l1_norm(v) -> float:
    """Sum of absolute values of all entries."""
    return float(np.sum(np.abs(as_f64(v, "v"))))


def finite_diff_grad(
    f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-5
) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time.

    This is the reference oracle the analytic backward passes are checked
    against; it must stay independent of them.
    """
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = f(x)
        flat[i] = orig - eps
        f_minus = f(x)
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def make_rng(seed: int) -> np.random.Generator:
    """Seeded counter-based generator (Philox 4x64).

    Philox is a stateless counter-based algorithm, so the draw sequence for
    a given seed is reproducible bit-for-bit across platforms.
    """
    return np.random.Generator(np.random.Philox(key=np.uint64(seed)))
