"""Truncated composite Fock spaces and sparse operator algebra.

Every subsystem is a truncated harmonic oscillator (or a qubit, which is the
dim-2 special case). Operators are stored as CSR matrices with structural
zeros removed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache, reduce
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

SUPERMODE = "supermode"  # [qubit, a_+, a_-, b]
BARE = "bare"  # [qubit, a, m, b]


class SpaceMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class CompositeSpace:
    dims: tuple[int, ...]
    layout: str | None = None

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d < 1 for d in dims):
            raise ValueError(f"subsystem dimensions must be >= 1, got {self.dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))

    def __len__(self):
        return len(self.dims)

    def check_index(self, subsystem: int) -> int:
        if not 0 <= subsystem < len(self.dims):
            raise IndexError(f"subsystem {subsystem} out of range for dims {self.dims}")
        return subsystem

    def index(self, levels: Sequence[int]) -> int:
        """Flat index of the product basis state ``|levels[0], levels[1], ...>``."""
        if len(levels) != len(self.dims):
            raise ValueError("one level per subsystem required")
        for n, d in zip(levels, self.dims):
            if not 0 <= n < d:
                raise ValueError(f"level {n} outside truncation {d}")
        return int(np.ravel_multi_index(tuple(levels), self.dims))

    def basis(self, levels: Sequence[int]) -> np.ndarray:
        ket = np.zeros(self.size, dtype=complex)
        ket[self.index(levels)] = 1.0
        return ket

    def levels(self, subsystem: int) -> np.ndarray:
        """Occupation of ``subsystem`` for every flat basis index."""
        self.check_index(subsystem)
        grids = np.unravel_index(np.arange(self.size), self.dims)
        return grids[subsystem]


def supermode_space(n_plus: int = 6, n_minus: int | None = None, n_b: int | None = None) -> CompositeSpace:
    n_minus = n_plus if n_minus is None else n_minus
    n_b = n_plus if n_b is None else n_b
    return CompositeSpace((2, n_plus, n_minus, n_b), SUPERMODE)


def bare_space(n_a: int = 6, n_m: int | None = None, n_b: int | None = None) -> CompositeSpace:
    n_m = n_a if n_m is None else n_m
    n_b = n_a if n_b is None else n_b
    return CompositeSpace((2, n_a, n_m, n_b), BARE)


def _clean(mat) -> sp.csr_matrix:
    mat = sp.csr_matrix(mat, dtype=complex)
    mat.eliminate_zeros()
    mat.sort_indices()
    return mat


@dataclass(frozen=True, eq=False)
class SparseOperator:
    space: CompositeSpace
    matrix: sp.csr_matrix = field(repr=False)

    def __post_init__(self):
        mat = _clean(self.matrix)
        if mat.shape != (self.space.size, self.space.size):
            raise ValueError(
                f"matrix shape {mat.shape} does not match space dimension {self.space.size}"
            )
        object.__setattr__(self, "matrix", mat)

    def _check(self, other: "SparseOperator"):
        if not isinstance(other, SparseOperator):
            return NotImplemented
        if other.space != self.space:
            raise SpaceMismatchError(f"{self.space} vs {other.space}")
        return None

    def __add__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return SparseOperator(self.space, self.matrix + other.matrix)

    def __sub__(self, other):
        if self._check(other) is NotImplemented:
            return NotImplemented
        return SparseOperator(self.space, self.matrix - other.matrix)

    def __neg__(self):
        return SparseOperator(self.space, -self.matrix)

    def __mul__(self, scalar):
        if isinstance(scalar, SparseOperator):
            return self @ scalar
        return SparseOperator(self.space, self.matrix * complex(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return SparseOperator(self.space, self.matrix / complex(scalar))

    def __matmul__(self, other):
        if isinstance(other, SparseOperator):
            self._check(other)
            return SparseOperator(self.space, self.matrix @ other.matrix)
        return self.matrix @ other

    def dag(self) -> "SparseOperator":
        return SparseOperator(self.space, self.matrix.conj().T)

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def is_hermitian(self, atol: float = 0.0) -> bool:
        diff = self.matrix - self.matrix.conj().T
        return diff.nnz == 0 or float(np.abs(diff.data).max()) <= atol

    @property
    def nnz(self) -> int:
        return self.matrix.nnz


def destroy(n: int) -> sp.csr_matrix:
    """Single-mode annihilator on ``n`` Fock levels."""
    return _clean(sp.diags(np.sqrt(np.arange(1, n, dtype=float)), 1, shape=(n, n)))


def embed(space: CompositeSpace, subsystem: int, local) -> SparseOperator:
    space.check_index(subsystem)
    factors = [sp.identity(d, dtype=complex, format="csr") for d in space.dims]
    factors[subsystem] = sp.csr_matrix(local, dtype=complex)
    return SparseOperator(space, reduce(lambda x, y: sp.kron(x, y, format="csr"), factors))


# operators are treated as immutable, so the embedded single-mode operators
# can be shared between Hamiltonian builds on the same space
@lru_cache(maxsize=256)
def annihilator(space: CompositeSpace, subsystem: int) -> SparseOperator:
    """Lowering operator of ``subsystem``; for a dim-2 qubit this is sigma."""
    return embed(space, subsystem, destroy(space.dims[space.check_index(subsystem)]))


@lru_cache(maxsize=256)
def number(space: CompositeSpace, subsystem: int) -> SparseOperator:
    d = space.dims[space.check_index(subsystem)]
    return embed(space, subsystem, sp.diags(np.arange(d, dtype=float)))


def identity(space: CompositeSpace) -> SparseOperator:
    return SparseOperator(space, sp.identity(space.size, dtype=complex, format="csr"))


def compose(terms: Iterable) -> SparseOperator:
    """Linear combination of operator products.

    Each term is ``(coefficient, op)`` or ``(coefficient, [op1, op2, ...])``;
    a list is multiplied left to right.
    """
    total = None
    for coeff, ops in terms:
        if isinstance(ops, SparseOperator):
            ops = [ops]
        ops = list(ops)
        if not ops:
            raise ValueError("empty operator product")
        prod = ops[0]
        for op in ops[1:]:
            prod = prod @ op
        term = prod * coeff
        total = term if total is None else total + term
    if total is None:
        raise ValueError("no terms")
    return total


@dataclass
class DensityMatrix:
    space: CompositeSpace
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        n = self.space.size
        if self.data.shape != (n, n):
            raise ValueError(f"density matrix shape {self.data.shape} != ({n}, {n})")

    @classmethod
    def from_ket(cls, space: CompositeSpace, ket: np.ndarray) -> "DensityMatrix":
        ket = np.asarray(ket, dtype=complex)
        return cls(space, np.outer(ket, ket.conj()))

    def expect(self, op: SparseOperator) -> complex:
        if op.space != self.space:
            raise SpaceMismatchError(f"{op.space} vs {self.space}")
        # Tr(A rho) = sum_ij A_ij rho_ji
        return complex((op.matrix.multiply(self.data.T)).sum())

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.data)))

    def hermiticity_error(self) -> float:
        return float(np.abs(self.data - self.data.conj().T).max())

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.data + self.data.conj().T)).min())


def vacuum(space: CompositeSpace) -> DensityMatrix:
    return DensityMatrix.from_ket(space, space.basis([0] * len(space)))


def number_distribution(state: DensityMatrix, subsystem: int) -> np.ndarray:
    """Marginal Fock-level probabilities of one subsystem."""
    space = state.space
    space.check_index(subsystem)
    diag = np.real(np.diag(state.data)).reshape(space.dims)
    axes = tuple(i for i in range(len(space)) if i != subsystem)
    p = diag.sum(axis=axes)
    return p / p.sum()
