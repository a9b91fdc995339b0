"""Dense tensors, fiber addressing and Khatri-Rao row machinery.

Indices in the public functions are 1-based. Linear storage puts mode 1
fastest (column-major), so the mode-n fiber number

    j = 1 + sum_{k != n} (i_k - 1) * J_k,   J_k = prod_{m < k, m != n} I_m

is the column-major linear index over the remaining modes.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import prod
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError


class DenseTensor:
    """Immutable N-way array of float64 values."""

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64, order="F", copy=True)
        if arr.ndim < 1 or any(s < 1 for s in arr.shape):
            raise DimensionError(f"invalid tensor shape {arr.shape}")
        arr.flags.writeable = False
        self._data = arr

    @classmethod
    def from_values(cls, shape: Sequence[int], values) -> "DenseTensor":
        """Build a tensor from its linear (mode-1 fastest) storage."""
        shape = tuple(int(s) for s in shape)
        values = np.asarray(values, dtype=np.float64).ravel()
        if values.size != prod(shape):
            raise DimensionError(
                f"{values.size} values do not fill shape {shape} ({prod(shape)} entries)"
            )
        return cls(values.reshape(shape, order="F"))

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> tuple:
        return self._data.shape

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return self._data.size

    @property
    def values(self) -> np.ndarray:
        """Linear storage, mode 1 fastest-varying."""
        return self._data.ravel(order="F")

    def num_fibers(self, mode: int) -> int:
        """J_n, the number of mode-``mode`` fibers."""
        _check_mode(mode, self.ndim)
        return self.size // self.shape[mode - 1]

    def sqnorm(self) -> float:
        return float(np.vdot(self._data, self._data))

    def __eq__(self, other):
        if not isinstance(other, DenseTensor):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self._data, other._data)

    def __repr__(self):
        return f"DenseTensor(shape={self.shape})"


class FactorModel:
    """Ordered collection of factor matrices A_(n), each I_n x F."""

    def __init__(self, factors: Iterable):
        factors = [np.array(a, dtype=np.float64, copy=True) for a in factors]
        if not factors:
            raise DimensionError("a factor model needs at least one factor")
        for a in factors:
            if a.ndim != 2:
                raise DimensionError(f"factor must be a matrix, got ndim={a.ndim}")
        ranks = {a.shape[1] for a in factors}
        if len(ranks) != 1:
            raise DimensionError(f"factors disagree on rank: {sorted(ranks)}")
        self.factors = factors

    @property
    def rank(self) -> int:
        return self.factors[0].shape[1]

    @property
    def ndim(self) -> int:
        return len(self.factors)

    @property
    def shape(self) -> tuple:
        return tuple(a.shape[0] for a in self.factors)

    def copy(self) -> "FactorModel":
        return FactorModel(self.factors)

    def check_against(self, shape: Sequence[int]) -> None:
        if tuple(shape) != self.shape:
            raise DimensionError(f"model shape {self.shape} does not match tensor {tuple(shape)}")

    def full(self) -> DenseTensor:
        """Materialize the CPD sum of rank-one terms."""
        return DenseTensor(reconstruct(self.factors))

    def __eq__(self, other):
        if not isinstance(other, FactorModel):
            return NotImplemented
        return len(self.factors) == len(other.factors) and all(
            a.shape == b.shape and np.array_equal(a, b)
            for a, b in zip(self.factors, other.factors)
        )

    def __repr__(self):
        return f"FactorModel(shape={self.shape}, rank={self.rank})"


@dataclass(frozen=True)
class FiberIndex:
    """Mode-``mode`` fiber number ``j`` (both 1-based)."""

    mode: int
    j: int


def _check_mode(mode: int, ndim: int) -> None:
    if not 1 <= mode <= ndim:
        raise IndexError(f"mode {mode} out of range 1..{ndim}")


def _other_shape(shape: Sequence[int], mode: int) -> tuple:
    return tuple(s for k, s in enumerate(shape, start=1) if k != mode)


def entry_at(t: DenseTensor, idx: Sequence[int]) -> float:
    """Value X(i_1, ..., i_N) for a 1-based multi-index."""
    if len(idx) != t.ndim:
        raise IndexError(f"expected {t.ndim} indices, got {len(idx)}")
    for k, (i, s) in enumerate(zip(idx, t.shape), start=1):
        if not 1 <= i <= s:
            raise IndexError(f"index {i} out of range 1..{s} in mode {k}")
    return float(t.data[tuple(i - 1 for i in idx)])


def encode_fiber(mode: int, others: Sequence[int], shape: Sequence[int]) -> FiberIndex:
    """Fiber number for the coordinates of every mode except ``mode``."""
    _check_mode(mode, len(shape))
    rest = _other_shape(shape, mode)
    if len(others) != len(rest):
        raise IndexError(f"expected {len(rest)} coordinates, got {len(others)}")
    j, stride = 1, 1
    for i, s in zip(others, rest):
        if not 1 <= i <= s:
            raise IndexError(f"coordinate {i} out of range 1..{s}")
        j += (i - 1) * stride
        stride *= s
    return FiberIndex(mode, j)


def decode_fiber(fi: FiberIndex, shape: Sequence[int]) -> tuple:
    """Coordinates (i_k)_{k != mode} of fiber ``fi``."""
    _check_mode(fi.mode, len(shape))
    rest = _other_shape(shape, fi.mode)
    total = prod(rest)
    if not 1 <= fi.j <= total:
        raise IndexError(f"fiber {fi.j} out of range 1..{total}")
    r = fi.j - 1
    out = []
    for s in rest:
        r, i = divmod(r, s)
        out.append(i + 1)
    return tuple(out)


def fiber_ids(fibers, mode: int) -> np.ndarray:
    """Normalize FiberIndex objects or plain integers into a 1-based int array."""
    if isinstance(fibers, np.ndarray):
        return fibers.astype(np.int64, copy=False).ravel()
    out = []
    for f in fibers:
        if isinstance(f, FiberIndex):
            if f.mode != mode:
                raise ValueError(f"fiber {f} does not belong to mode {mode}")
            out.append(f.j)
        else:
            out.append(int(f))
    return np.asarray(out, dtype=np.int64)


def decode_fibers(ids: np.ndarray, shape: Sequence[int], mode: int) -> list:
    """Vectorized decode: one 0-based index array per mode other than ``mode``."""
    _check_mode(mode, len(shape))
    rest = _other_shape(shape, mode)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 1 or ids.max() > prod(rest)):
        raise IndexError(f"fiber index out of range 1..{prod(rest)}")
    if not rest:
        return []
    return list(np.unravel_index(ids - 1, rest, order="F"))


def fiber_at(t: DenseTensor, fi: FiberIndex) -> np.ndarray:
    """The mode-n fiber, i.e. row j of the mode-n unfolding."""
    others = decode_fiber(fi, t.shape)
    idx = [i - 1 for i in others]
    idx.insert(fi.mode - 1, slice(None))
    return np.array(t.data[tuple(idx)])


def fibers_at(t: DenseTensor, mode: int, fibers) -> np.ndarray:
    """Sampled rows X_(n)(F_n, :) as a |F_n| x I_n matrix."""
    ids = fiber_ids(fibers, mode)
    idx = decode_fibers(ids, t.shape, mode)
    moved = np.moveaxis(t.data, mode - 1, -1)
    if not idx:
        return np.broadcast_to(moved, (ids.size, moved.shape[-1])).copy()
    return moved[tuple(idx)]


def kr_rows(model: FactorModel, mode: int, fibers) -> np.ndarray:
    """Rows F_n of H_(n) = Khatri-Rao product of every factor but ``mode``.

    Each row is the Hadamard product of the matching factor rows; the full
    J_n x F product is never formed.
    """
    _check_mode(mode, model.ndim)
    ids = fiber_ids(fibers, mode)
    idx = decode_fibers(ids, model.shape, mode)
    rows = np.ones((ids.size, model.rank))
    others = [a for k, a in enumerate(model.factors, start=1) if k != mode]
    for a, i in zip(others, idx):
        rows *= a[i]
    return rows


def gram_hadamard(factors: Sequence[np.ndarray], mode: int) -> np.ndarray:
    """H_(n)^T H_(n), computed as the Hadamard product of the factor Grams."""
    F = factors[0].shape[1]
    g = np.ones((F, F))
    for k, a in enumerate(factors, start=1):
        if k != mode:
            g *= a.T @ a
    return g


def _einsum_letters(n: int) -> str:
    letters = "abcdeghijklmnopqstuvwxyz"
    if n > len(letters):
        raise DimensionError(f"tensor order {n} is too large")
    return letters[:n]


def full_mttkrp(t: DenseTensor, model: FactorModel, mode: int) -> np.ndarray:
    """X_(n)^T H_(n), an I_n x F matrix, without materializing H_(n)."""
    _check_mode(mode, t.ndim)
    model.check_against(t.shape)
    letters = _einsum_letters(t.ndim)
    operands = [t.data]
    subs = [letters]
    for k, a in enumerate(model.factors, start=1):
        if k != mode:
            operands.append(a)
            subs.append(letters[k - 1] + "f")
    expr = ",".join(subs) + "->" + letters[mode - 1] + "f"
    return np.einsum(expr, *operands, optimize="greedy")


def reconstruct(factors: Sequence[np.ndarray]) -> np.ndarray:
    """Dense array sum_f a_1f o a_2f o ... o a_Nf."""
    letters = _einsum_letters(len(factors))
    expr = ",".join(c + "f" for c in letters) + "->" + letters
    return np.einsum(expr, *factors, optimize="greedy")


def unfold(t: DenseTensor, mode: int) -> np.ndarray:
    """Mode-n unfolding X_(n) as a J_n x I_n matrix (rows ordered by j)."""
    _check_mode(mode, t.ndim)
    moved = np.moveaxis(t.data, mode - 1, -1)
    return moved.reshape(-1, t.shape[mode - 1], order="F")
