"""Proximal and projection operators for factor regularizers.

``apply_prox(reg, M, alpha)`` returns argmin_Z 1/2 ||Z - M||^2 + alpha * h(Z).
Separable kinds (none, nonneg, l1, l0) accept an entrywise stepsize matrix;
the others act on whole columns or the whole matrix and need a scalar.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

KINDS = ("none", "nonneg", "l1", "l2", "l21", "l0", "simplex", "monotone")
SEPARABLE = frozenset({"none", "nonneg", "l1", "l0"})
PROJECTIONS = frozenset({"nonneg", "simplex", "monotone"})


@dataclass(frozen=True)
class Regularizer:
    """Tagged regularizer h_n: ``kind`` plus weight ``lam`` or simplex scale ``rho``."""

    kind: str = "none"
    lam: float = 0.0
    rho: float = 1.0

    def __post_init__(self):
        if self.kind == "unimodal":
            raise ConfigError("unimodal regression is not supported; use 'monotone' instead")
        if self.kind not in KINDS:
            raise ConfigError(f"unknown regularizer kind {self.kind!r}; expected one of {KINDS}")
        if self.lam < 0:
            raise ConfigError(f"regularizer weight must be >= 0, got {self.lam}")
        if self.rho <= 0:
            raise ConfigError(f"simplex scale must be > 0, got {self.rho}")

    @property
    def separable(self) -> bool:
        return self.kind in SEPARABLE

    def penalty(self, M) -> float:
        """h(M); +inf outside the feasible set of a constraint."""
        M = np.asarray(M, dtype=float)
        k = self.kind
        if k == "none":
            return 0.0
        if k == "nonneg":
            return 0.0 if np.all(M >= 0) else np.inf
        if k == "l1":
            return self.lam * float(np.abs(M).sum())
        if k == "l2":
            return self.lam * float(np.linalg.norm(M))
        if k == "l21":
            return self.lam * float(np.linalg.norm(M, axis=0).sum())
        if k == "l0":
            return self.lam * float(np.count_nonzero(M))
        if k == "simplex":
            ok = np.all(M >= 0) and np.allclose(M.sum(axis=0), self.rho, rtol=0, atol=1e-9)
            return 0.0 if ok else np.inf
        ok = np.all(np.diff(M, axis=0) >= 0)
        return 0.0 if ok else np.inf

    def describe(self) -> str:
        if self.kind == "simplex":
            return f"simplex(rho={self.rho!r})"
        if self.kind in ("l1", "l2", "l21", "l0"):
            return f"{self.kind}(lam={self.lam!r})"
        return self.kind


def prox_l2_column(v, t: float) -> np.ndarray:
    """Group shrinkage v * max(1 - t/||v||, 0)."""
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v)
    if nrm <= t or nrm == 0.0:
        return np.zeros_like(v)
    return v * (1.0 - t / nrm)


def prox_l21(M, t: float) -> np.ndarray:
    """Column-wise group shrinkage."""
    M = np.asarray(M, dtype=float)
    nrm = np.linalg.norm(M, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(nrm > t, 1.0 - t / nrm, 0.0)
    return M * scale


def soft_threshold(M, t) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    return np.sign(M) * np.maximum(np.abs(M) - t, 0.0)


def prox_l0(M, t) -> np.ndarray:
    """Hard threshold: keep x only when x**2 > 2t (ties go to zero)."""
    M = np.asarray(M, dtype=float)
    return np.where(M * M > 2.0 * np.asarray(t), M, 0.0)


def project_simplex_column(v, rho: float = 1.0) -> np.ndarray:
    """Euclidean projection onto {z >= 0, sum(z) = rho}."""
    v = np.asarray(v, dtype=float)
    return project_simplex(v[:, None], rho)[:, 0]


def project_simplex(M, rho: float = 1.0) -> np.ndarray:
    """Project every column of M onto the scaled simplex (sort-based)."""
    M = np.asarray(M, dtype=float)
    d, n = M.shape
    if d == 0:
        return M.copy()
    U = -np.sort(-M, axis=0)
    css = np.cumsum(U, axis=0) - rho
    k = np.arange(1, d + 1, dtype=float)[:, None]
    support = U - css / k > 0
    # last index where the condition holds
    r = d - np.argmax(support[::-1], axis=0)
    theta = css[r - 1, np.arange(n)] / r
    return np.maximum(M - theta, 0.0)


def isotonic_column(v) -> np.ndarray:
    """Nondecreasing least-squares fit by pool-adjacent-violators."""
    v = np.asarray(v, dtype=float)
    means: list = []
    counts: list = []
    for x in v.tolist():
        m, c = x, 1
        while means and means[-1] > m:
            pm, pc = means.pop(), counts.pop()
            m = (pm * pc + m * c) / (pc + c)
            c += pc
        means.append(m)
        counts.append(c)
    return np.repeat(means, counts)


def apply_prox(reg: Regularizer, M, alpha) -> np.ndarray:
    """Proximal step of ``reg`` at M with stepsize ``alpha`` (scalar or, for
    separable kinds, a matrix shaped like M). A vector is treated as one column."""
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        alpha = np.asarray(alpha, dtype=float)
        if alpha.ndim == 1:
            alpha = alpha[:, None]
        return _apply_prox(reg, M[:, None], alpha)[:, 0]
    return _apply_prox(reg, M, alpha)


def _apply_prox(reg, M, alpha):
    alpha_arr = np.asarray(alpha, dtype=float)
    if np.any(alpha_arr < 0):
        raise ValueError("stepsize must be nonnegative")
    if alpha_arr.ndim > 0:
        if not reg.separable:
            raise ValueError(f"prox of {reg.kind!r} needs a scalar stepsize")
        if alpha_arr.shape != M.shape:
            raise ValueError(f"stepsize shape {alpha_arr.shape} does not match {M.shape}")
    k = reg.kind
    if k == "none":
        return M.copy()
    if k == "nonneg":
        return np.maximum(M, 0.0)
    if k == "l1":
        return soft_threshold(M, reg.lam * alpha_arr)
    if k == "l0":
        return prox_l0(M, reg.lam * alpha_arr)
    t = reg.lam * float(alpha_arr)
    if k == "l2":
        return prox_l2_column(M.ravel(), t).reshape(M.shape)
    if k == "l21":
        return prox_l21(M, t)
    if k == "simplex":
        return project_simplex(M, reg.rho)
    return np.column_stack([isotonic_column(c) for c in M.T]) if M.size else M.copy()
