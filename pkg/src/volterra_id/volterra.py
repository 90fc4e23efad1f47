"""Symmetric Volterra kernels, unique-coefficient vectorization and regressors.

A kernel of order ``m`` and memory ``n`` is stored by its unique coefficients,
one per sorted lag tuple ``tau_1 <= ... <= tau_m``, in lexicographic order.
Stored values equal the symmetric tensor entries; the permutation count
(multiplicity) of each tuple is folded into the regressor instead.
"""
from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache
from math import comb, factorial, prod
from typing import Sequence

import numpy as np

__all__ = [
    "multiplicity",
    "n_unique",
    "enumerate_indices",
    "multiplicities",
    "SymmetricKernel",
    "CoefficientKernel",
    "Layout",
    "VolterraModel",
    "lagged",
    "product_regressor",
    "build_regressor",
    "evaluate_volterra",
    "multilinear",
]


def multiplicity(idx: Sequence[int]) -> int:
    """Number of distinct permutations of a lag tuple."""
    counts = Counter(idx)
    return factorial(len(idx)) // prod(factorial(c) for c in counts.values())


def n_unique(m: int, n: int) -> int:
    """Multiset count ``C(n + m - 1, m)``."""
    return comb(n + m - 1, m)


@lru_cache(maxsize=256)
def _indices(m: int, n: int) -> np.ndarray:
    idx = np.array(
        list(itertools.combinations_with_replacement(range(n), m)), dtype=np.intp
    ).reshape(-1, m)
    idx.setflags(write=False)
    return idx


def enumerate_indices(m: int, n: int) -> np.ndarray:
    """Sorted lag tuples of an order-``m`` kernel with memory ``n``.

    Returns an integer array of shape ``(C(n+m-1, m), m)``; rows are sorted
    ascending and appear in lexicographic order.
    """
    if m < 1 or n < 1:
        raise ValueError(f"order and memory must be >= 1, got m={m}, n={n}")
    return _indices(m, n)


@lru_cache(maxsize=256)
def _multiplicities(m: int, n: int) -> np.ndarray:
    out = np.array([multiplicity(tuple(r)) for r in _indices(m, n)], dtype=float)
    out.setflags(write=False)
    return out


def multiplicities(m: int, n: int) -> np.ndarray:
    return _multiplicities(m, n)


@dataclass(frozen=True)
class SymmetricKernel:
    """Order-``m`` symmetric kernel with memory ``memory``.

    ``values[i]`` is the tensor entry at ``enumerate_indices(order, memory)[i]``
    and at every permutation of it.
    """

    order: int
    memory: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        expected = n_unique(self.order, self.memory)
        if values.size != expected:
            raise ValueError(
                f"order {self.order} memory {self.memory} kernel needs "
                f"{expected} coefficients, got {values.size}"
            )
        object.__setattr__(self, "values", values)

    @classmethod
    def zeros(cls, order: int, memory: int):
        return cls(order, memory, np.zeros(n_unique(order, memory)))

    @classmethod
    def from_full(cls, tensor: np.ndarray, *, check_symmetric: bool = False, atol: float = 1e-12):
        """Take the unique entries of a full ``n**m`` tensor."""
        tensor = np.asarray(tensor, dtype=float)
        m = tensor.ndim
        n = tensor.shape[0]
        if any(s != n for s in tensor.shape):
            raise ValueError(f"tensor must be hypercubic, got shape {tensor.shape}")
        if check_symmetric:
            for perm in itertools.permutations(range(m)):
                if not np.allclose(tensor, tensor.transpose(perm), atol=atol, rtol=0):
                    raise ValueError("tensor is not symmetric")
        idx = enumerate_indices(m, n)
        return cls(m, n, tensor[tuple(idx.T)])

    @property
    def indices(self) -> np.ndarray:
        return enumerate_indices(self.order, self.memory)

    @property
    def multiplicities(self) -> np.ndarray:
        return multiplicities(self.order, self.memory)

    def to_full(self) -> np.ndarray:
        m, n = self.order, self.memory
        full = np.zeros((n,) * m)
        idx = self.indices
        for perm in set(itertools.permutations(range(m))):
            full[tuple(idx[:, perm].T)] = self.values
        return full

    def energy(self) -> float:
        """Squared Frobenius norm of the full tensor."""
        return float(np.sum(self.multiplicities * self.values**2))

    def truncated(self, memory: int):
        """Restrict (or zero-extend) to a different memory length."""
        if memory == self.memory:
            return self
        # lexicographic order is preserved under restriction to max lag < memory
        if memory < self.memory:
            keep = self.indices[:, -1] < memory
            return type(self)(self.order, memory, self.values[keep])
        out = np.zeros(n_unique(self.order, memory))
        out[enumerate_indices(self.order, memory)[:, -1] < self.memory] = self.values
        return type(self)(self.order, memory, out)


class CoefficientKernel(SymmetricKernel):
    """Expansion coefficients of a kernel in a product basis.

    Storage is identical to :class:`SymmetricKernel`; ``memory`` is the number
    of basis functions and indices are 0-based basis-function numbers.
    """

    @property
    def size(self) -> int:
        return self.memory


@dataclass(frozen=True)
class Layout:
    """Block structure of a stacked parameter vector: one block per order."""

    orders: tuple
    sizes: tuple

    def __post_init__(self):
        orders = tuple(int(m) for m in self.orders)
        sizes = tuple(int(n) for n in self.sizes)
        if len(orders) != len(sizes):
            raise ValueError("orders and sizes must have equal length")
        if len(set(orders)) != len(orders):
            raise ValueError(f"duplicate kernel orders in {orders}")
        object.__setattr__(self, "orders", orders)
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def full(cls, sizes: Sequence[int]):
        """Orders ``1..len(sizes)``."""
        return cls(tuple(range(1, len(sizes) + 1)), tuple(sizes))

    @property
    def counts(self) -> tuple:
        return tuple(n_unique(m, n) for m, n in zip(self.orders, self.sizes))

    @property
    def dim(self) -> int:
        return sum(self.counts)

    @property
    def slices(self) -> tuple:
        out, start = [], 0
        for c in self.counts:
            out.append(slice(start, start + c))
            start += c
        return tuple(out)

    def blocks(self):
        return zip(self.orders, self.sizes, self.slices)


@dataclass(frozen=True)
class VolterraModel:
    """Truncated Volterra series: a tuple of kernels with distinct orders."""

    kernels: tuple

    def __post_init__(self):
        kernels = tuple(self.kernels)
        orders = [k.order for k in kernels]
        if len(set(orders)) != len(orders):
            raise ValueError(f"duplicate kernel orders {orders}")
        object.__setattr__(self, "kernels", tuple(sorted(kernels, key=lambda k: k.order)))

    @property
    def layout(self) -> Layout:
        return Layout(
            tuple(k.order for k in self.kernels), tuple(k.memory for k in self.kernels)
        )

    @property
    def max_order(self) -> int:
        return max(k.order for k in self.kernels)

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate([k.values for k in self.kernels])

    @classmethod
    def from_theta(cls, theta: np.ndarray, layout: Layout, kernel_cls=SymmetricKernel):
        theta = np.asarray(theta, dtype=float)
        if theta.size != layout.dim:
            raise ValueError(f"theta has {theta.size} entries, layout needs {layout.dim}")
        return cls(tuple(kernel_cls(m, n, theta[s]) for m, n, s in layout.blocks()))

    def kernel(self, order: int) -> SymmetricKernel:
        for k in self.kernels:
            if k.order == order:
                return k
        raise KeyError(order)


def lagged(u: np.ndarray, n: int) -> np.ndarray:
    """``X[k, j] = u[k - j]`` with ``u[k] = 0`` for ``k < 0``."""
    u = np.asarray(u, dtype=float)
    N = u.size
    X = np.zeros((N, n))
    for j in range(min(n, N)):
        X[j:, j] = u[: N - j]
    return X


def product_regressor(X: np.ndarray, m: int) -> np.ndarray:
    """Order-``m`` product columns of a signal matrix.

    Column ``i`` equals ``multiplicity(idx_i) * prod_j X[:, idx_i[j]]`` for the
    sorted tuples of :func:`enumerate_indices`. Serves both the lagged-input
    (time-domain) and filtered-input (basis) regressors.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[1]
    idx = enumerate_indices(m, n)
    out = X[:, idx[:, 0]].copy()
    for j in range(1, m):
        out *= X[:, idx[:, j]]
    out *= multiplicities(m, n)
    return out


def build_regressor(u: np.ndarray, layout: Layout) -> np.ndarray:
    """Regressor with one row per sample and one column per unique coefficient.

    This is the transpose of the ``p x N`` matrix in the usual
    ``Y = phi^T theta`` notation.
    """
    nmax = max(layout.sizes)
    X = lagged(u, nmax)
    return np.hstack([product_regressor(X[:, :n], m) for m, n in zip(layout.orders, layout.sizes)])


def multilinear(full: np.ndarray, mats) -> np.ndarray:
    """``out[k] = sum T[i1..im] A1[k,i1] ... Am[k,im]`` for a full tensor ``T``.

    ``mats`` holds one ``(rows, n)`` matrix per tensor axis.
    """
    m = full.ndim
    n = full.shape[0]
    rows = mats[0].shape[0]
    Z = mats[0] @ full.reshape(n, -1)
    for j in range(1, m):
        Z = np.einsum("ci,cij->cj", mats[j], Z.reshape(rows, n, -1))
    return Z.reshape(-1)


def evaluate_volterra(model: VolterraModel, u: np.ndarray) -> np.ndarray:
    """Noise-free Volterra output with zero pre-sample input."""
    u = np.asarray(u, dtype=float)
    N = u.size
    y = np.zeros(N)
    for k in model.kernels:
        X = lagged(u, k.memory)
        if k.order == 1:
            y += X @ k.values
            continue
        full = k.to_full()
        chunk = max(1, int(4e6 // k.memory ** (k.order - 1)))
        for start in range(0, N, chunk):
            Xc = X[start : start + chunk]
            y[start : start + chunk] += multilinear(full, [Xc] * k.order)
    return y
