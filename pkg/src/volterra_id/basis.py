"""Laguerre and two-parameter Kautz orthonormal bases.

Impulse responses follow ``F(z) = sum_{t>=0} f(t) z^-t``. Every Laguerre and
Kautz function is strictly proper, so ``f(0) = 0`` and kernels rebuilt from
these bases vanish whenever any lag is zero.

Laguerre (pole ``a``)::

    F_i(z) = sqrt(1-a^2)/(z-a) * ((1-a z)/(z-a))^(i-1)

Kautz (``b, c``), with ``D(z) = z^2 + b(c-1) z - c``::

    F_{2i-1}(z) = sqrt(1-c^2) (z-b)/D(z) * G(z)^(i-1)
    F_{2i}(z)   = sqrt((1-c^2)(1-b^2))/D(z) * G(z)^(i-1)
    G(z)        = (-c z^2 + b(c-1) z + 1)/D(z)

Both are realized as cascades of first/second-order difference equations.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.signal import lfilter

from .volterra import CoefficientKernel, SymmetricKernel, enumerate_indices, lagged, multilinear, product_regressor

__all__ = [
    "BasisSpec",
    "BasisBank",
    "laguerre_ir",
    "kautz_ir",
    "basis_responses",
    "batch_responses",
    "filter_inputs",
    "reconstruct_kernel",
    "project_kernel",
    "evaluate_coefficients",
    "TAIL_TOL",
]

KINDS = ("fir", "laguerre", "kautz")
TAIL_TOL = 1e-10
MAX_LENGTH = 1 << 20


@dataclass(frozen=True)
class BasisSpec:
    """One kernel's basis: kind, function count and generating parameters."""

    kind: str
    size: int
    params: tuple = ()

    def __post_init__(self):
        kind = self.kind.lower()
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "params", params)
        if kind not in KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}; expected one of {KINDS}")
        if self.size < 1:
            raise ValueError(f"basis size must be >= 1, got {self.size}")
        expected = {"fir": 0, "laguerre": 1, "kautz": 2}[kind]
        if len(params) != expected:
            raise ValueError(f"{kind} basis takes {expected} parameter(s), got {params}")
        if any(not -1.0 < p < 1.0 for p in params):
            raise ValueError(f"{kind} parameters must lie in (-1, 1), got {params}")
        if kind == "kautz" and self.size % 2:
            raise ValueError(f"Kautz functions come in pairs; size must be even, got {self.size}")

    @classmethod
    def fir(cls, size: int):
        return cls("fir", size)

    @classmethod
    def laguerre(cls, a: float, size: int):
        return cls("laguerre", size, (a,))

    @classmethod
    def kautz(cls, b: float, c: float, size: int):
        return cls("kautz", size, (b, c))

    def with_params(self, params) -> "BasisSpec":
        return BasisSpec(self.kind, self.size, tuple(params))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "size": self.size, "params": list(self.params)}

    @classmethod
    def from_dict(cls, d: Mapping):
        return cls(d["kind"], int(d["size"]), tuple(d.get("params", ())))


def _batch_lfilter(num: np.ndarray, den: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Row-wise zero-state IIR filtering with per-row coefficients.

    ``num`` is ``(K, p)``, ``den`` is ``(K, q)`` with ``den[:, 0] == 1`` and
    ``x`` is ``(K, T)`` (or broadcastable to it).
    """
    K = num.shape[0]
    T = x.shape[-1]
    x = np.broadcast_to(x, (K, T))
    y = np.zeros((K, T))
    p, q = num.shape[1], den.shape[1]
    for t in range(T):
        acc = num[:, 0] * x[:, t]
        for j in range(1, min(p, t + 1)):
            acc = acc + num[:, j] * x[:, t - j]
        for j in range(1, min(q, t + 1)):
            acc = acc - den[:, j] * y[:, t - j]
        y[:, t] = acc
    return y


def _stages(kind: str, params: np.ndarray):
    """Base-stage numerators, shared denominator and all-pass numerator.

    ``params`` is ``(K, P)``; all returned arrays have ``K`` rows.
    """
    K = params.shape[0]
    ones, zeros = np.ones(K), np.zeros(K)
    if kind == "laguerre":
        a = params[:, 0]
        den = np.stack([ones, -a], axis=1)
        base = [np.stack([zeros, np.sqrt(1 - a**2)], axis=1)]
        allpass = np.stack([-a, ones], axis=1)
        return base, den, allpass
    if kind == "kautz":
        b, c = params[:, 0], params[:, 1]
        d1, d2 = b * (c - 1), -c
        den = np.stack([ones, d1, d2], axis=1)
        k1 = np.sqrt(1 - c**2)
        k2 = np.sqrt((1 - c**2) * (1 - b**2))
        base = [
            np.stack([zeros, k1, -k1 * b], axis=1),
            np.stack([zeros, zeros, k2], axis=1),
        ]
        allpass = np.stack([d2, d1, ones], axis=1)
        return base, den, allpass
    raise ValueError(f"no rational stages for basis kind {kind!r}")


def batch_responses(kind: str, params, size: int, length: int) -> np.ndarray:
    """Impulse responses for many parameter sets at once.

    Returns ``(K, size, length)`` for ``params`` of shape ``(K, P)``. Intended
    for short lengths (pole search); time runs in a Python loop.
    """
    params = np.atleast_2d(np.asarray(params, dtype=float))
    K = params.shape[0]
    if kind == "fir":
        out = np.zeros((K, size, length))
        for i in range(min(size, length)):
            out[:, i, i] = 1.0
        return out
    base, den, allpass = _stages(kind, params)
    impulse = np.zeros((1, length))
    impulse[0, 0] = 1.0
    out = np.empty((K, size, length))
    heads = [_batch_lfilter(num, den, impulse) for num in base]
    step = len(heads)
    for i in range(0, size, step):
        for j, h in enumerate(heads):
            if i + j < size:
                out[:, i + j] = h
        if i + step < size:
            heads = [_batch_lfilter(allpass, den, h) for h in heads]
    return out


def _cascade(spec: BasisSpec, x: np.ndarray) -> np.ndarray:
    """Filter ``x`` through every basis function of ``spec``; returns ``(size, len(x))``."""
    x = np.asarray(x, dtype=float)
    B = spec.size
    if spec.kind == "fir":
        return lagged(x, B).T.copy()
    base, den, allpass = _stages(spec.kind, np.array([spec.params]))
    den, allpass = den[0], allpass[0]
    out = np.empty((B, x.size))
    heads = [lfilter(num[0], den, x) for num in base]
    step = len(heads)
    for i in range(0, B, step):
        for j, h in enumerate(heads):
            if i + j < B:
                out[i + j] = h
        if i + step < B:
            heads = [lfilter(allpass, den, h) for h in heads]
    return out


def basis_responses(spec: BasisSpec, length: int) -> np.ndarray:
    """Impulse-response table ``f[l, t]``, ``l = 0..size-1``, ``t = 0..length-1``."""
    impulse = np.zeros(length)
    impulse[0] = 1.0
    return _cascade(spec, impulse)


def laguerre_ir(a: float, i: int, length: int) -> np.ndarray:
    """Impulse response of the ``i``-th (1-based) Laguerre function."""
    if i < 1:
        raise ValueError("function index is 1-based")
    return basis_responses(BasisSpec.laguerre(a, i), length)[i - 1]


def kautz_ir(b: float, c: float, i: int, length: int) -> np.ndarray:
    """Impulse response of the ``i``-th (1-based) Kautz function."""
    if i < 1:
        raise ValueError("function index is 1-based")
    size = i + (i % 2)
    return basis_responses(BasisSpec.kautz(b, c, size), length)[i - 1]


def tail_energy(table: np.ndarray) -> np.ndarray:
    """Energy beyond the table for unit-norm functions: ``1 - sum f^2``."""
    return 1.0 - np.sum(table**2, axis=-1)


@dataclass(frozen=True)
class BasisBank:
    """Per-order bases with realized impulse-response tables."""

    specs: Mapping[int, BasisSpec]
    length: int
    tables: Mapping[int, np.ndarray] = field(repr=False)

    @classmethod
    def realize(cls, specs: Mapping[int, BasisSpec], memory: int = 0, length: int | None = None):
        """Tabulate every basis.

        ``length`` defaults to ``max(512, 8 * memory)`` and is doubled until
        each rational basis function keeps less than ``TAIL_TOL`` energy past
        the table end.
        """
        specs = {int(m): s for m, s in sorted(specs.items())}
        L = int(length) if length is not None else max(512, 8 * int(memory))
        if L < memory:
            raise ValueError(f"table length {L} shorter than memory {memory}")
        while True:
            tables = {m: basis_responses(s, L) for m, s in specs.items()}
            worst = max(
                (float(np.max(tail_energy(t))) for m, t in tables.items() if specs[m].kind != "fir"),
                default=0.0,
            )
            if worst < TAIL_TOL or L >= MAX_LENGTH:
                break
            L *= 2
        for t in tables.values():
            t.setflags(write=False)
        return cls(specs, L, tables)

    @property
    def orders(self) -> tuple:
        return tuple(self.specs)

    def size(self, m: int) -> int:
        return self.specs[m].size

    def table(self, m: int, memory: int | None = None) -> np.ndarray:
        t = self.tables[m]
        if memory is None:
            return t
        if memory > self.length:
            raise ValueError(f"memory {memory} exceeds realized length {self.length}")
        return t[:, :memory]

    def decay_length(self, m: int, tol: float = 1e-12) -> int:
        """Shortest memory beyond which every function of order ``m`` stays below ``tol`` in magnitude.

        The functions have unit norm, so ``tol`` is relative to their size.
        """
        if self.specs[m].kind == "fir":
            return self.specs[m].size
        big = np.flatnonzero(np.any(np.abs(self.tables[m]) >= tol, axis=0))
        return int(big[-1] + 1) if big.size else 1


def filter_inputs(bank: BasisBank, m: int, u) -> np.ndarray:
    """Filtered inputs ``u^f_{m,l}`` as columns of an ``(N, B_m)`` matrix."""
    return _cascade(bank.specs[m], np.asarray(u, dtype=float)).T


def reconstruct_kernel(alpha: SymmetricKernel, bank: BasisBank, memory: int) -> SymmetricKernel:
    """Time-domain kernel ``h(t) = sum_i alpha(i) prod_j f_{i_j}(t_j)`` on ``memory`` lags."""
    m = alpha.order
    F = bank.table(m, memory)
    if F.shape[0] != alpha.memory:
        raise ValueError(f"coefficient kernel has size {alpha.memory}, basis has {F.shape[0]} functions")
    full = alpha.to_full()
    idx = enumerate_indices(m, memory)
    out = np.empty(idx.shape[0])
    chunk = max(1, int(4e6 // alpha.memory ** max(m - 1, 1)))
    for s in range(0, idx.shape[0], chunk):
        rows = idx[s : s + chunk]
        out[s : s + chunk] = multilinear(full, [F[:, rows[:, j]].T for j in range(m)])
    return SymmetricKernel(m, memory, out)


def _mode_products(full: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Contract every axis of ``full`` with ``F`` (``B x n``)."""
    out = full
    for _ in range(full.ndim):
        # contracting axis 0 and appending the new axis cycles through all axes
        out = np.tensordot(out, F, axes=([0], [1]))
    return out


def project_kernel(h: SymmetricKernel, bank: BasisBank) -> CoefficientKernel:
    """Inner-product coefficients ``alpha(i) = sum_t h(t) prod_j f_{i_j}(t_j)``."""
    F = bank.table(h.order, h.memory)
    alpha_full = _mode_products(h.to_full(), F)
    idx = enumerate_indices(h.order, F.shape[0])
    return CoefficientKernel(h.order, F.shape[0], alpha_full[tuple(idx.T)])


def evaluate_coefficients(alphas, bank: BasisBank, u) -> np.ndarray:
    """Model output from coefficient kernels and basis-filtered inputs."""
    u = np.asarray(u, dtype=float)
    y = np.zeros(u.size)
    for alpha in alphas:
        X = filter_inputs(bank, alpha.order, u)
        y += product_regressor(X, alpha.order) @ alpha.values
    return y
