"""Masked scalar products against a shared random matrix.

Both parties derive the same n x ceil(n/2) matrix A from a shared seed.  The
querying side hides its vector u behind a private column vector r:

    z = u + A r            (sent)
    s = z . v              (returned)
    t = A^T v              (returned)
    delta = s - r . t      (recovered; equals u . v exactly)

Matrix entries are uniform on [-1, 1] and are a pure function of
(seed, i, j), generated with a block-addressable counter RNG.  Rows can be
produced on demand, so the responder's t costs O(nnz(v) * cols) work and no
party ever needs the full matrix in memory (though materializing is allowed
as a speedup for moderate n).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.random import Philox

from .errors import DimensionError, RangeError
from .vectors import DocumentVector

__all__ = [
    "SharedRandomMatrix",
    "DenseMaskingMatrix",
    "SecretMask",
    "MaskedVector",
    "ProductReply",
    "OpCounter",
    "generate_shared_matrix",
    "mask",
    "respond",
    "recover",
    "clear_matrix_cache",
]

# Entries above this count are never materialized; rows stream on demand.
MATERIALIZE_LIMIT_ENTRIES = 40_000_000


def _to_unit(raw: np.ndarray) -> np.ndarray:
    """Map raw 64-bit words to float64 uniform on [-1, 1)."""
    u01 = (raw >> np.uint64(11)) * (2.0**-53)
    return 2.0 * u01 - 1.0


def _raw_span(seed: int, k0: int, k1: int) -> np.ndarray:
    """Entries for flat positions [k0, k1) of the matrix stream."""
    b0 = k0 // 4
    nblocks = (k1 - 1) // 4 - b0 + 1
    raw = Philox(key=seed, counter=[b0, 0, 0, 0]).random_raw(nblocks * 4)
    return _to_unit(raw[k0 - b0 * 4 : k0 - b0 * 4 + (k1 - k0)])


@lru_cache(maxsize=3)
def _materialized(seed: int, rows: int, cols: int) -> np.ndarray:
    return _raw_span(seed, 0, rows * cols).reshape(rows, cols)


def clear_matrix_cache() -> None:
    _materialized.cache_clear()


class SharedRandomMatrix:
    """Handle to the deterministic masking matrix for one seed and size."""

    def __init__(self, seed: int, rows: int, materialize_limit: int | None = None):
        if rows < 1:
            raise RangeError("matrix needs at least one row")
        if not 0 <= seed < 2**64:
            raise RangeError("seed must fit in 64 bits")
        self.seed = seed
        self.rows = rows
        self.cols = (rows + 1) // 2
        limit = MATERIALIZE_LIMIT_ENTRIES if materialize_limit is None else materialize_limit
        self._can_materialize = rows * self.cols <= limit

    def _full(self) -> np.ndarray | None:
        if self._can_materialize:
            return _materialized(self.seed, self.rows, self.cols)
        return None

    def entry(self, i: int, j: int) -> float:
        if not (0 <= i < self.rows and 0 <= j < self.cols):
            raise RangeError(f"entry ({i}, {j}) outside {self.rows}x{self.cols}")
        k = i * self.cols + j
        return float(_raw_span(self.seed, k, k + 1)[0])

    def row_block(self, start: int, stop: int) -> np.ndarray:
        if not 0 <= start <= stop <= self.rows:
            raise RangeError(f"row block [{start}, {stop}) outside {self.rows} rows")
        if start == stop:
            return np.empty((0, self.cols))
        full = self._full()
        if full is not None:
            return full[start:stop]
        return _raw_span(self.seed, start * self.cols, stop * self.cols).reshape(
            stop - start, self.cols
        )

    def rows_for(self, indices: np.ndarray) -> np.ndarray:
        """Rows at the given (not necessarily contiguous) indices."""
        full = self._full()
        if full is not None:
            return full[indices]
        if len(indices) == 0:
            return np.empty((0, self.cols))
        return np.vstack([self.row_block(int(i), int(i) + 1) for i in indices])

    def matvec(self, r: np.ndarray) -> np.ndarray:
        """A @ r without requiring the whole matrix at once."""
        if r.shape != (self.cols,):
            raise DimensionError(f"mask length {r.shape} != ({self.cols},)")
        full = self._full()
        if full is not None:
            return full @ r
        out = np.empty(self.rows)
        chunk = max(1, 4_000_000 // self.cols)
        for start in range(0, self.rows, chunk):
            stop = min(start + chunk, self.rows)
            out[start:stop] = self.row_block(start, stop) @ r
        return out

    def transpose_apply(self, indices: np.ndarray, weights: np.ndarray) -> np.ndarray:
        """A^T v for sparse v, touching only the rows where v is nonzero."""
        if len(indices) == 0:
            return np.zeros(self.cols)
        return weights @ self.rows_for(indices)


class DenseMaskingMatrix:
    """Explicit matrix with the same access surface, for small fixed cases."""

    def __init__(self, array: np.ndarray):
        arr = np.asarray(array, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise RangeError("matrix must be 2-D with at least one row")
        self.array = arr
        self.rows, self.cols = arr.shape

    def entry(self, i: int, j: int) -> float:
        return float(self.array[i, j])

    def row_block(self, start: int, stop: int) -> np.ndarray:
        return self.array[start:stop]

    def rows_for(self, indices: np.ndarray) -> np.ndarray:
        return self.array[indices]

    def matvec(self, r: np.ndarray) -> np.ndarray:
        if r.shape != (self.cols,):
            raise DimensionError(f"mask length {r.shape} != ({self.cols},)")
        return self.array @ r

    def transpose_apply(self, indices: np.ndarray, weights: np.ndarray) -> np.ndarray:
        if len(indices) == 0:
            return np.zeros(self.cols)
        return weights @ self.array[indices]


def generate_shared_matrix(seed: int, n: int) -> SharedRandomMatrix:
    """Masking matrix for vectors of length n (n >= 1)."""
    if n < 1:
        raise RangeError(f"vector length must be positive, got {n}")
    return SharedRandomMatrix(seed, n)


@dataclass(frozen=True)
class SecretMask:
    """Private column vector r; never serialized, fresh per query."""

    values: np.ndarray

    @staticmethod
    def draw(cols: int, rng: np.random.Generator) -> "SecretMask":
        return SecretMask(values=rng.uniform(-1.0, 1.0, size=cols))


@dataclass(frozen=True)
class MaskedVector:
    """z = u + A r, safe to put on the wire."""

    values: np.ndarray


@dataclass(frozen=True)
class ProductReply:
    """Responder's answer for one document: s = z.v and t = A^T v."""

    s: float
    t: np.ndarray
    norm_v2: float | None = None


@dataclass
class OpCounter:
    """Tallies the real multiplications spent in respond()."""

    mults: int = 0


def mask(u: np.ndarray, matrix, r: SecretMask) -> MaskedVector:
    if u.shape != (matrix.rows,):
        raise DimensionError(f"vector length {u.shape} != ({matrix.rows},)")
    return MaskedVector(values=u + matrix.matvec(r.values))


def respond(
    z: MaskedVector,
    v: DocumentVector,
    matrix,
    include_norm: bool = False,
    ops: OpCounter | None = None,
) -> ProductReply:
    """Answer a masked query for one document, iterating v's nonzeros only."""
    if z.values.shape != (matrix.rows,):
        raise DimensionError(
            f"masked length {z.values.shape} != ({matrix.rows},)"
        )
    if v.dims != matrix.rows:
        raise DimensionError(f"document dims {v.dims} != {matrix.rows}")
    s = float(z.values[v.indices] @ v.weights)
    t = matrix.transpose_apply(v.indices, v.weights)
    norm_v2 = None
    if include_norm:
        norm_v2 = float(v.weights @ v.weights)
    if ops is not None:
        ops.mults += v.nnz * (1 + matrix.cols)
        if include_norm:
            ops.mults += v.nnz
    return ProductReply(s=s, t=t, norm_v2=norm_v2)


def recover(reply: ProductReply, r: SecretMask) -> float:
    """delta = s - r.t, the exact scalar product of the hidden vectors."""
    return float(reply.s - r.values @ reply.t)
