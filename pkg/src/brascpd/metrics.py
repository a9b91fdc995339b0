"""Fit cost, permutation-resolved factor MSE and SNR bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import MetricError
from .tensor import DenseTensor, FactorModel, _einsum_letters

# entries per reconstruction chunk in cost()
_CHUNK = 1 << 20


@dataclass
class TraceRecord:
    iteration: int
    mttkrp_equivalents: float
    all_mode_mttkrp: float
    sampled_entries: int
    wall_seconds: float
    cost: float
    mse_per_mode: Optional[list] = field(default=None)

    @property
    def mse_avg(self) -> float:
        if not self.mse_per_mode:
            return float("nan")
        return float(np.mean(self.mse_per_mode))


def cost(t: DenseTensor, model: FactorModel) -> float:
    """Mean squared residual (1/prod I_n) * ||X - [[A_1..A_N]]||_F^2.

    The reconstruction is built slab by slab along the last mode, so memory
    stays bounded by one chunk of the tensor.
    """
    model.check_against(t.shape)
    *head, last = model.factors
    letters = _einsum_letters(model.ndim)
    expr = ",".join(c + "f" for c in letters) + "->" + letters
    slab = t.size // t.shape[-1]
    step = max(1, _CHUNK // max(slab, 1))
    total = 0.0
    for s in range(0, t.shape[-1], step):
        part = last[s:s + step]
        recon = np.einsum(expr, *head, part, optimize="greedy")
        resid = t.data[..., s:s + step] - recon
        total += float(np.vdot(resid, resid))
    return total / t.size


def _unit_columns(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    nrm = np.linalg.norm(A, axis=0)
    if np.any(nrm == 0) or not np.all(np.isfinite(nrm)):
        raise MetricError("cannot normalize a zero or non-finite column")
    return A / nrm


def mse_distance_matrix(A_true, A_est, resolve_sign: bool = True) -> np.ndarray:
    """D[g, f] = || a_g/|a_g| - s * ahat_f/|ahat_f| ||^2 with the best sign s."""
    U = _unit_columns(A_true)
    V = _unit_columns(A_est)
    inner = U.T @ V
    if resolve_sign:
        inner = np.abs(inner)
    return np.clip(2.0 - 2.0 * inner, 0.0, None)


def mse_factor(A_true, A_est, resolve_sign: bool = True) -> float:
    """Column-normalized MSE after the optimal column assignment."""
    A_true = np.asarray(A_true, dtype=float)
    A_est = np.asarray(A_est, dtype=float)
    if A_true.shape != A_est.shape:
        raise MetricError(f"shape mismatch {A_true.shape} vs {A_est.shape}")
    D = mse_distance_matrix(A_true, A_est, resolve_sign)
    rows, cols = linear_sum_assignment(D)
    return float(D[rows, cols].mean())


def mse(model_est: FactorModel, model_true: FactorModel, mode: int, resolve_sign: bool = True) -> float:
    """MSE of factor ``mode`` (1-based) against the ground truth."""
    if model_est.shape != model_true.shape or model_est.rank != model_true.rank:
        raise MetricError("estimated and true models differ in shape or rank")
    return mse_factor(model_true.factors[mode - 1], model_est.factors[mode - 1], resolve_sign)


def mse_all(model_est: FactorModel, model_true: FactorModel) -> list:
    return [mse(model_est, model_true, n) for n in range(1, model_est.ndim + 1)]


def snr_sigma(clean: DenseTensor, target_snr_db: float) -> float:
    """Noise standard deviation giving the requested SNR in dB."""
    power = clean.sqnorm() / clean.size
    if power == 0:
        raise ValueError("SNR is undefined for a zero tensor")
    return float(np.sqrt(power / 10.0 ** (target_snr_db / 10.0)))


def empirical_snr_db(clean: DenseTensor, noisy: DenseTensor) -> float:
    noise = noisy.data - clean.data
    return float(10.0 * np.log10(clean.sqnorm() / float(np.vdot(noise, noise))))
