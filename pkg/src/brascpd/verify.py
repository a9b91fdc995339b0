"""Self-check suites comparing the fast paths against slow, independent oracles.

Each suite returns a list of checks ``{"name", "passed", "error", "tol"}``.
``verify()`` runs the selected suites and returns a JSON-ready report.
"""

from __future__ import annotations

import itertools
import time
from typing import Iterable, Optional

import numpy as np

from .gradient import block_objective, full_block_gradient, stochastic_block_gradient
from .metrics import mse_factor
from .prox import Regularizer, apply_prox
from .tensor import (
    DenseTensor,
    FactorModel,
    FiberIndex,
    decode_fiber,
    encode_fiber,
    entry_at,
    fiber_at,
    fibers_at,
    full_mttkrp,
    gram_hadamard,
    kr_rows,
    unfold,
)

PROX_KINDS = ("none", "nonneg", "l1", "l2", "l21", "l0", "simplex", "monotone")


def _check(name, error, tol) -> dict:
    error = float(error)
    return {"name": name, "passed": bool(error <= tol), "error": error, "tol": tol}


def _random_instance(rng, max_dim=4, max_rank=3, ndim=3):
    shape = tuple(int(s) for s in rng.integers(1, max_dim + 1, size=ndim))
    rank = int(rng.integers(1, max_rank + 1))
    t = DenseTensor(rng.standard_normal(shape))
    model = FactorModel([rng.standard_normal((s, rank)) for s in shape])
    return t, model


def dense_unfolding(t: DenseTensor, mode: int) -> np.ndarray:
    """X_(n) built entry by entry from decode_fiber (slow reference)."""
    rest = [s for k, s in enumerate(t.shape, start=1) if k != mode]
    J = int(np.prod(rest)) if rest else 1
    out = np.empty((J, t.shape[mode - 1]))
    for j in range(1, J + 1):
        others = list(decode_fiber(FiberIndex(mode, j), t.shape))
        for i in range(1, t.shape[mode - 1] + 1):
            idx = others[:mode - 1] + [i] + others[mode - 1:]
            out[j - 1, i - 1] = entry_at(t, idx)
    return out


def dense_khatri_rao(model: FactorModel, mode: int) -> np.ndarray:
    """Explicit H_(n) by column-wise Kronecker products, lowest mode fastest."""
    others = [a for k, a in enumerate(model.factors, start=1) if k != mode]
    cols = []
    for f in range(model.rank):
        col = np.ones(1)
        for a in others:
            col = np.kron(a[:, f], col)
        cols.append(col)
    return np.column_stack(cols)


def suite_index(rng, trials: int = 20) -> list:
    checks = []
    worst_rt, worst_fiber, worst_unf, worst_batch = 0, 0.0, 0.0, 0.0
    for _ in range(trials):
        ndim = int(rng.integers(3, 5))
        t, _ = _random_instance(rng, max_dim=4, ndim=ndim)
        for n in range(1, ndim + 1):
            J = t.num_fibers(n)
            for j in range(1, J + 1):
                fi = FiberIndex(n, j)
                back = encode_fiber(n, decode_fiber(fi, t.shape), t.shape)
                worst_rt = max(worst_rt, abs(back.j - j))
            ref = dense_unfolding(t, n)
            rows = np.array([fiber_at(t, FiberIndex(n, j)) for j in range(1, J + 1)])
            worst_fiber = max(worst_fiber, float(np.abs(rows - ref).max()))
            worst_unf = max(worst_unf, float(np.abs(unfold(t, n) - ref).max()))
            ids = rng.integers(1, J + 1, size=5)
            worst_batch = max(worst_batch, float(np.abs(fibers_at(t, n, ids) - ref[ids - 1]).max()))
    checks.append(_check("encode_decode_roundtrip", worst_rt, 0))
    checks.append(_check("fiber_matches_entries", worst_fiber, 0.0))
    checks.append(_check("unfold_matches_entries", worst_unf, 0.0))
    checks.append(_check("batch_fibers_match_entries", worst_batch, 0.0))
    return checks


def suite_kr(rng, trials: int = 20) -> list:
    err_rows, err_gram, err_mttkrp = 0.0, 0.0, 0.0
    for _ in range(trials):
        t, model = _random_instance(rng, max_dim=4, ndim=int(rng.integers(3, 5)))
        for n in range(1, t.ndim + 1):
            H = dense_khatri_rao(model, n)
            J = H.shape[0]
            ids = np.arange(1, J + 1)
            scale = max(1.0, float(np.abs(H).max()))
            err_rows = max(err_rows, float(np.abs(kr_rows(model, n, ids) - H).max()) / scale)
            G = H.T @ H
            err_gram = max(err_gram, float(np.abs(gram_hadamard(model.factors, n) - G).max())
                           / max(1.0, float(np.abs(G).max())))
            M = dense_unfolding(t, n).T @ H
            err_mttkrp = max(err_mttkrp, float(np.abs(full_mttkrp(t, model, n) - M).max())
                             / max(1.0, float(np.abs(M).max())))
    return [
        _check("kr_rows_match_explicit_product", err_rows, 1e-13),
        _check("gram_matches_explicit_product", err_gram, 1e-12),
        _check("mttkrp_matches_explicit_product", err_mttkrp, 1e-12),
    ]


def suite_unbiased(rng, trials: int = 20, gradient_scale: float = 1.0) -> list:
    """Average the minibatch gradient over every B-subset of fibers exactly."""
    err_full, err_dense = 0.0, 0.0
    for _ in range(trials):
        t, model = _random_instance(rng, max_dim=4, max_rank=3)
        n = int(rng.integers(1, 4))
        J = t.num_fibers(n)
        B = int(rng.integers(1, min(2, J) + 1))
        total = np.zeros_like(model.factors[n - 1])
        count = 0
        for subset in itertools.combinations(range(1, J + 1), B):
            g = stochastic_block_gradient(t, model, n, np.array(subset)).G
            total += gradient_scale * g
            count += 1
        mean = total / count
        err_full = max(err_full, float(np.abs(mean - full_block_gradient(t, model, n)).max()))
        H = dense_khatri_rao(model, n)
        X = dense_unfolding(t, n)
        A = model.factors[n - 1]
        dense = (A @ H.T @ H - X.T @ H) / J
        err_dense = max(err_dense, float(np.abs(mean - dense).max()))
    return [
        _check("subset_mean_equals_full_gradient", err_full, 1e-12),
        _check("subset_mean_equals_dense_gradient", err_dense, 1e-12),
    ]


def suite_gradient(rng, trials: int = 20, h: float = 1e-6) -> list:
    """Central finite differences of the normalized block objective."""
    worst = 0.0
    for _ in range(trials):
        t, model = _random_instance(rng, max_dim=4, max_rank=3)
        n = int(rng.integers(1, 4))
        G = full_block_gradient(t, model, n)
        A = model.factors[n - 1]
        fd = np.empty_like(A)
        for idx in np.ndindex(*A.shape):
            plus, minus = model.copy(), model.copy()
            plus.factors[n - 1][idx] += h
            minus.factors[n - 1][idx] -= h
            fd[idx] = (block_objective(t, plus, n) - block_objective(t, minus, n)) / (2 * h)
        rel = np.linalg.norm(fd - G) / max(np.linalg.norm(G), 1e-300)
        worst = max(worst, float(rel))
    return [_check("gradient_matches_finite_differences", worst, 1e-5)]


def _feasible_candidates(rng, kind, x, count, rho):
    d = x.size
    if kind == "simplex":
        return rho * rng.dirichlet(np.ones(d), size=count)
    spread = 1.0 + np.abs(x).max()
    cand = x + spread * rng.standard_normal((count, d)) * rng.random((count, 1))
    if kind == "nonneg":
        cand = np.abs(cand)
    elif kind == "monotone":
        cand = np.sort(cand, axis=1)
    elif kind in ("l0", "l1"):
        cand = cand * (rng.random((count, d)) < 0.6)
    elif kind in ("l2", "l21"):
        cand[: count // 10] = 0.0
    return cand


def _prox_objective(kind, Z, x, alpha, lam):
    fit = 0.5 * np.sum((Z - x) ** 2, axis=1)
    if kind == "l1":
        return fit + alpha * lam * np.abs(Z).sum(axis=1)
    if kind in ("l2", "l21"):
        return fit + alpha * lam * np.linalg.norm(Z, axis=1)
    if kind == "l0":
        return fit + alpha * lam * np.count_nonzero(Z, axis=1)
    return fit


def _infeasibility(kind, z, rho) -> float:
    if kind == "nonneg":
        return float(max(0.0, -z.min()))
    if kind == "simplex":
        return float(max(0.0, -z.min(), abs(z.sum() - rho)))
    if kind == "monotone":
        return float(max(0.0, -np.diff(z).min())) if z.size > 1 else 0.0
    return 0.0


def suite_prox(rng, inputs: int = 100, candidates: int = 10_000) -> list:
    """Prox output must beat random feasible points; projections are idempotent."""
    checks = []
    for kind in PROX_KINDS:
        gap, infeas, idem = 0.0, 0.0, 0.0
        for _ in range(inputs):
            d = int(rng.integers(1, 4))
            x = 2.0 * rng.standard_normal(d)
            alpha = float(rng.uniform(0.05, 2.0))
            lam = float(rng.uniform(0.05, 2.0))
            rho = float(rng.uniform(0.5, 3.0))
            reg = Regularizer(kind, lam=lam, rho=rho)
            z = apply_prox(reg, x, alpha)
            cand = _feasible_candidates(rng, kind, x, candidates, rho)
            best = _prox_objective(kind, cand, x, alpha, lam).min()
            mine = _prox_objective(kind, z[None, :], x, alpha, lam)[0]
            gap = max(gap, float(mine - best))
            infeas = max(infeas, _infeasibility(kind, z, rho))
            if kind in ("nonneg", "simplex", "monotone"):
                idem = max(idem, float(np.abs(apply_prox(reg, z, alpha) - z).max()))
        checks.append(_check(f"{kind}_beats_random_candidates", max(gap, 0.0), 1e-12))
        checks.append(_check(f"{kind}_output_feasible", infeas, 1e-12))
        if kind in ("nonneg", "simplex", "monotone"):
            checks.append(_check(f"{kind}_projection_idempotent", idem, 1e-12))
    return checks


def brute_force_mse(A_true, A_est) -> float:
    """Minimum over all column permutations and per-column signs (slow reference)."""
    U = A_true / np.linalg.norm(A_true, axis=0)
    V = A_est / np.linalg.norm(A_est, axis=0)
    F = U.shape[1]
    minus = ((U[:, :, None] - V[:, None, :]) ** 2).sum(axis=0)
    plus = ((U[:, :, None] + V[:, None, :]) ** 2).sum(axis=0)
    pair = np.minimum(minus, plus)
    perms = np.array(list(itertools.permutations(range(F))))
    totals = pair[np.arange(F), perms].sum(axis=1)
    return float(totals.min() / F)


def suite_mse(rng, pairs: int = 100, max_rank: int = 7) -> list:
    err_brute, err_inv = 0.0, 0.0
    for _ in range(pairs):
        F = int(rng.integers(1, max_rank + 1))
        rows = int(rng.integers(F, F + 6))
        A = rng.standard_normal((rows, F))
        Ahat = A + rng.uniform(0.0, 1.5) * rng.standard_normal((rows, F))
        m = mse_factor(A, Ahat)
        err_brute = max(err_brute, abs(m - brute_force_mse(A, Ahat)))
        perm = rng.permutation(F)
        scaled = Ahat[:, perm] * rng.uniform(0.1, 10.0, size=F)
        err_inv = max(err_inv, abs(mse_factor(A, scaled) - m))
    return [
        _check("mse_equals_brute_force_minimum", err_brute, 1e-12),
        _check("mse_invariant_to_permutation_and_scaling", err_inv, 1e-12),
    ]


SUITES = {
    "index": suite_index,
    "kr": suite_kr,
    "unbiased": suite_unbiased,
    "gradient": suite_gradient,
    "prox": suite_prox,
    "mse": suite_mse,
}


def verify(selector: Optional[Iterable[str]] = None, seed: int = 0, gradient_scale: float = 1.0) -> dict:
    """Run the chosen suites (all when ``selector`` is empty).

    ``gradient_scale`` multiplies every minibatch gradient in the unbiasedness
    suite; anything but 1 should make it fail.
    """
    names = list(selector) if selector else list(SUITES)
    unknown = [s for s in names if s not in SUITES]
    if unknown:
        raise ValueError(f"unknown suite(s) {unknown}; available: {sorted(SUITES)}")
    report = {"seed": seed, "suites": {}}
    for name in names:
        rng = np.random.default_rng([seed, list(SUITES).index(name)])
        start = time.perf_counter()
        if name == "unbiased":
            checks = SUITES[name](rng, gradient_scale=gradient_scale)
        else:
            checks = SUITES[name](rng)
        report["suites"][name] = {
            "passed": all(c["passed"] for c in checks),
            "seconds": round(time.perf_counter() - start, 3),
            "checks": checks,
        }
    report["passed"] = all(s["passed"] for s in report["suites"].values())
    return report
