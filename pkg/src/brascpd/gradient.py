"""Block gradients of the least-squares CPD objective.

Convention: every gradient here estimates the gradient of the normalized
block objective

    f_n(A) = 1 / (2 J_n) * || X_(n) - H_(n) A^T ||_F^2

so the minibatch average over B sampled fibers is an exactly unbiased
estimate, and Lipschitz constants are scaled by 1 / J_n to match.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError
from .tensor import (
    DenseTensor,
    FactorModel,
    fiber_ids,
    fibers_at,
    full_mttkrp,
    gram_hadamard,
    kr_rows,
    reconstruct,
)


@dataclass
class BlockGradient:
    mode: int
    G: np.ndarray
    batch: np.ndarray
    scale_note: str = field(default="1/|batch|")


def stochastic_block_gradient(t: DenseTensor, model: FactorModel, mode: int, fibers) -> BlockGradient:
    """Minibatch gradient (A H_s^T H_s - X_s^T H_s) / B over the sampled fibers."""
    ids = fiber_ids(fibers, mode)
    if ids.size == 0:
        raise ValueError("stochastic gradient needs at least one fiber")
    model.check_against(t.shape)
    H = kr_rows(model, mode, ids)
    X = fibers_at(t, mode, ids)
    A = model.factors[mode - 1]
    G = (A @ (H.T @ H) - X.T @ H) / ids.size
    return BlockGradient(mode=mode, G=G, batch=ids)


def full_block_gradient(t: DenseTensor, model: FactorModel, mode: int) -> np.ndarray:
    """(A H^T H - X_(n)^T H) / J_n using the Gram identity and a full MTTKRP."""
    model.check_against(t.shape)
    J = t.num_fibers(mode)
    A = model.factors[mode - 1]
    return (A @ gram_hadamard(model.factors, mode) - full_mttkrp(t, model, mode)) / J


def block_objective(t: DenseTensor, model: FactorModel, mode: int) -> float:
    """Normalized block objective f_n; its gradient is full_block_gradient."""
    model.check_against(t.shape)
    resid = t.data - reconstruct(model.factors)
    return 0.5 * float(np.vdot(resid, resid)) / t.num_fibers(mode)


def block_lipschitz(model: FactorModel, mode: int) -> float:
    """Largest eigenvalue of H_(n)^T H_(n), divided by J_n."""
    if not 1 <= mode <= model.ndim:
        raise DimensionError(f"mode {mode} out of range")
    J = 1
    for k, s in enumerate(model.shape, start=1):
        if k != mode:
            J *= s
    gram = gram_hadamard(model.factors, mode)
    lam = np.linalg.eigvalsh(gram)[-1]
    return max(float(lam), 0.0) / J

