"""Synthetic CPD instances and binary tensor/model files.

Tensor file ("DTEN1"): magic, N as uint32 LE, N shape entries as uint64 LE,
then prod(shape) float64 LE values, mode 1 fastest.

Model file ("DFAC1"): magic, N as uint32 LE, F as uint64 LE, then for each
factor its row count I_n (uint64 LE) followed by I_n * F float64 LE values,
column-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from math import prod
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import FormatError, ResourceError
from .metrics import snr_sigma
from .tensor import DenseTensor, FactorModel, reconstruct

TENSOR_MAGIC = b"DTEN1"
MODEL_MAGIC = b"DFAC1"
DEFAULT_MEMORY_LIMIT = 8 * 1024**3


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a random low-rank tensor.

    ``column_sum`` rescales every ground-truth column to that sum, which puts
    the truth inside a scaled simplex constraint set.
    """

    shape: tuple
    rank: int
    snr_db: Optional[float] = None
    seed: int = 0
    distribution: str = "uniform"
    column_sum: Optional[float] = None
    memory_limit: int = DEFAULT_MEMORY_LIMIT

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be at least 1")
        if any(s < 2 for s in self.shape):
            raise ValueError(f"every dimension must be >= 2, got {self.shape}")
        if self.distribution not in ("uniform", "gaussian"):
            raise ValueError(f"unknown factor distribution {self.distribution!r}")


@dataclass
class Instance:
    tensor: DenseTensor
    truth: FactorModel
    clean: DenseTensor


def random_factors(rng: np.random.Generator, shape: Sequence[int], rank: int,
                   distribution: str = "uniform") -> FactorModel:
    draw = rng.random if distribution == "uniform" else rng.standard_normal
    return FactorModel([draw((s, rank)) for s in shape])


def generate(spec: SyntheticSpec, seed=None) -> Instance:
    """Draw factors, build X by the CPD sum and add white Gaussian noise."""
    need = prod(spec.shape) * 8
    if need > spec.memory_limit:
        raise ResourceError(
            f"tensor of shape {tuple(spec.shape)} needs {need} bytes, limit is {spec.memory_limit}"
        )
    rng = np.random.Generator(np.random.PCG64(spec.seed if seed is None else seed))
    truth = random_factors(rng, spec.shape, spec.rank, spec.distribution)
    if spec.column_sum is not None:
        truth = FactorModel([a * (spec.column_sum / a.sum(axis=0)) for a in truth.factors])
    clean = DenseTensor(reconstruct(truth.factors))
    if spec.snr_db is None:
        return Instance(clean, truth, clean)
    sigma = snr_sigma(clean, spec.snr_db)
    noise = rng.standard_normal(clean.shape)
    return Instance(DenseTensor(clean.data + sigma * noise), truth, clean)


def save_tensor(path, t: DenseTensor) -> None:
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<I", t.ndim))
        fh.write(struct.pack(f"<{t.ndim}Q", *t.shape))
        fh.write(t.values.astype("<f8").tobytes())


def _read_exact(buf: bytes, offset: int, n: int, what: str) -> bytes:
    if offset + n > len(buf):
        raise FormatError(
            f"truncated file at offset {offset}: {what} needs {n} bytes, {len(buf) - offset} available"
        )
    return buf[offset:offset + n]


def _check_magic(buf: bytes, magic: bytes) -> int:
    head = buf[:len(magic)]
    if head != magic:
        raise FormatError(f"bad magic at offset 0: expected {magic!r}, found {head!r}")
    return len(magic)


def load_tensor(path) -> DenseTensor:
    buf = Path(path).read_bytes()
    off = _check_magic(buf, TENSOR_MAGIC)
    (ndim,) = struct.unpack("<I", _read_exact(buf, off, 4, "order"))
    off += 4
    if ndim < 1:
        raise FormatError(f"invalid tensor order {ndim} at offset {off - 4}")
    shape = struct.unpack(f"<{ndim}Q", _read_exact(buf, off, 8 * ndim, "shape"))
    if any(s < 1 for s in shape):
        raise FormatError(f"invalid shape {shape} at offset {off}")
    off += 8 * ndim
    count = prod(shape)
    payload = _read_exact(buf, off, 8 * count, f"{count} values")
    if len(buf) != off + 8 * count:
        raise FormatError(
            f"length mismatch at offset {off + 8 * count}: expected {off + 8 * count} bytes, file has {len(buf)}"
        )
    return DenseTensor.from_values(shape, np.frombuffer(payload, dtype="<f8"))


def save_model(path, model: FactorModel) -> None:
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", model.ndim))
        fh.write(struct.pack("<Q", model.rank))
        for a in model.factors:
            fh.write(struct.pack("<Q", a.shape[0]))
            fh.write(np.asarray(a, dtype="<f8").ravel(order="F").tobytes())


def load_model(path) -> FactorModel:
    buf = Path(path).read_bytes()
    if not buf:
        raise FormatError("empty model file")
    off = _check_magic(buf, MODEL_MAGIC)
    (ndim,) = struct.unpack("<I", _read_exact(buf, off, 4, "order"))
    off += 4
    (rank,) = struct.unpack("<Q", _read_exact(buf, off, 8, "rank"))
    off += 8
    if ndim < 1 or rank < 1:
        raise FormatError(f"invalid order {ndim} or rank {rank} at offset {off - 12}")
    factors = []
    for n in range(ndim):
        (rows,) = struct.unpack("<Q", _read_exact(buf, off, 8, f"factor {n + 1} rows"))
        off += 8
        size = 8 * rows * rank
        data = _read_exact(buf, off, size, f"factor {n + 1} values")
        off += size
        factors.append(np.frombuffer(data, dtype="<f8").reshape((rows, rank), order="F"))
    if off != len(buf):
        raise FormatError(
            f"length mismatch at offset {off}: {len(buf) - off} trailing bytes "
            "(factor sizes inconsistent with the declared rank)"
        )
    return FactorModel(factors)
