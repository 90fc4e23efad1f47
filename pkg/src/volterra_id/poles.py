"""Truncation-optimal Laguerre/Kautz parameters and the iterative pole search.

The truncation cost of a kernel ``h`` with memory ``n`` in a ``B``-function
basis is the energy of ``h`` left outside the span of the product basis,
measured on the kernel's ``n``-lag window: the least-squares residual of
``h`` against the basis functions restricted to ``t < n``. When every
function has decayed inside the window this equals ``||h||^2 - ||alpha||^2``
with ``alpha`` the inner-product coefficients. Restricting to the window keeps
a truncated kernel estimate from favouring fast-decaying bases just because
slower ones leave part of their energy past lag ``n``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .basis import BasisBank, BasisSpec, batch_responses, filter_inputs, reconstruct_kernel
from .regularization import ls_solve
from .volterra import CoefficientKernel, Layout, SymmetricKernel, VolterraModel, build_regressor, product_regressor

log = logging.getLogger(__name__)

__all__ = [
    "PoleSearchConfig",
    "PoleResult",
    "InsufficientDataError",
    "truncation_cost",
    "optimal_laguerre_pole",
    "optimal_kautz_params",
    "optimal_params",
    "Algorithm1Report",
    "algorithm1",
    "step1_feasible",
]

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


class InsufficientDataError(ValueError):
    """Too few samples for the requested estimation step."""


@dataclass(frozen=True)
class PoleSearchConfig:
    grid_points: int = 201
    grid_limit: float = 0.99
    refine_tol: float = 1e-4
    kautz_b_step: float = 0.02
    tol: float = 1e-3
    max_iter: int = 50
    # order -> basis parameters; enables the initial-guess entry path
    initial: Mapping = field(default_factory=dict)
    step1_margin: float = 1.1

    def __post_init__(self):
        if self.refine_tol <= 0 or self.tol <= 0 or self.kautz_b_step <= 0:
            raise ValueError("pole-search tolerances must be > 0")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0 < self.grid_limit < 1:
            raise ValueError("grid_limit must lie in (0, 1)")

    def c_grid(self) -> np.ndarray:
        return np.round(np.linspace(-self.grid_limit, self.grid_limit, self.grid_points), 12)

    def b_grid(self) -> np.ndarray:
        k = int(np.floor((1.0 - 1e-9) / self.kautz_b_step))
        return np.round(np.arange(-k, k + 1) * self.kautz_b_step, 12)


@dataclass(frozen=True)
class PoleResult:
    params: tuple
    cost: float
    grid_cost: float


def _window_bases(kind: str, params: np.ndarray, size: int, n: int) -> np.ndarray:
    """Orthonormal bases ``(K, n, r)`` for the basis functions restricted to ``n`` lags.

    Directions with singular value below ``1e-10`` of the largest are zeroed,
    so near-dependent truncated functions do not inflate the span.
    """
    F = batch_responses(kind, params, size, n)
    U, sv, _ = np.linalg.svd(np.swapaxes(F, 1, 2), full_matrices=False)
    keep = sv > 1e-10 * sv[:, :1]
    return U * keep[:, None, :]


def _costs(hfull: np.ndarray, energy: float, kind: str, params: np.ndarray, size: int) -> np.ndarray:
    """Truncation costs of one full kernel tensor for a batch of parameter sets."""
    params = np.atleast_2d(params)
    m, n = hfull.ndim, hfull.shape[0]
    K = params.shape[0]
    r = min(size, n)
    chunk = max(1, int(4e6 // (r * n ** max(m - 1, 1))))
    out = np.empty(K)
    for s in range(0, K, chunk):
        U = _window_bases(kind, params[s : s + chunk], size, n)
        Z = np.einsum("knb,n...->k...b", U, hfull)
        for _ in range(m - 1):
            Z = np.einsum("knb,kn...->k...b", U, Z)
        out[s : s + chunk] = energy - np.sum(Z.reshape(Z.shape[0], -1) ** 2, axis=1)
    return np.maximum(out, 0.0)


def truncation_cost(h: SymmetricKernel, spec: BasisSpec) -> float:
    """Energy of ``h`` outside the span of ``spec``'s product basis."""
    hfull = h.to_full()
    return float(_costs(hfull, float(np.sum(hfull**2)), spec.kind, np.array([spec.params]), spec.size)[0])


def _golden(cost_fn, lo: np.ndarray, hi: np.ndarray, tol: float):
    """Vectorized golden-section search; returns ``(x, f(x))`` per bracket."""
    lo, hi = lo.astype(float).copy(), hi.astype(float).copy()
    x1 = hi - GOLDEN * (hi - lo)
    x2 = lo + GOLDEN * (hi - lo)
    f1, f2 = cost_fn(x1), cost_fn(x2)
    while np.max(hi - lo) > tol:
        left = f1 <= f2
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        nx1 = np.where(left, hi - GOLDEN * (hi - lo), x2)
        nx2 = np.where(left, x1, lo + GOLDEN * (hi - lo))
        # one fresh evaluation per bracket; the other point is reused
        fresh = np.where(left, nx1, nx2)
        ff = cost_fn(fresh)
        f1, f2 = np.where(left, ff, f2), np.where(left, f1, ff)
        x1, x2 = nx1, nx2
    x = np.where(f1 <= f2, x1, x2)
    return x, np.minimum(f1, f2)


def _brackets(grid: np.ndarray, best: np.ndarray):
    lo = grid[np.maximum(best - 1, 0)]
    hi = grid[np.minimum(best + 1, grid.size - 1)]
    return lo, hi


def _require_nonzero(h: SymmetricKernel):
    if not np.any(h.values):
        raise ValueError("basis parameters are undefined for an all-zero kernel")


def optimal_laguerre_pole(h: SymmetricKernel, size: int, cfg: PoleSearchConfig | None = None) -> PoleResult:
    """Grid scan plus golden-section refinement of the Laguerre pole."""
    cfg = cfg or PoleSearchConfig()
    _require_nonzero(h)
    hfull = h.to_full()
    energy = float(np.sum(hfull**2))
    grid = cfg.c_grid()
    costs = _costs(hfull, energy, "laguerre", grid[:, None], size)
    i = int(np.argmin(costs))
    lo, hi = _brackets(grid, np.array([i]))
    x, f = _golden(lambda a: _costs(hfull, energy, "laguerre", a[:, None], size), lo, hi, cfg.refine_tol)
    if f[0] < costs[i]:
        return PoleResult((float(x[0]),), float(f[0]), float(costs[i]))
    return PoleResult((float(grid[i]),), float(costs[i]), float(costs[i]))


def optimal_kautz_params(h: SymmetricKernel, size: int, cfg: PoleSearchConfig | None = None) -> PoleResult:
    """Outer grid over ``b``; per ``b`` a grid plus golden search over ``c``.

    Near-ties (within ``1e-12 ||h||^2``) go to the smaller ``|b|``, then the
    smaller ``|c|``.
    """
    cfg = cfg or PoleSearchConfig()
    if size % 2:
        raise ValueError(f"Kautz basis size must be even, got {size}")
    _require_nonzero(h)
    hfull = h.to_full()
    energy = float(np.sum(hfull**2))
    bs, cs = cfg.b_grid(), cfg.c_grid()
    pairs = np.stack(np.meshgrid(bs, cs, indexing="ij"), axis=-1).reshape(-1, 2)
    grid_costs = _costs(hfull, energy, "kautz", pairs, size).reshape(bs.size, cs.size)
    best = np.argmin(grid_costs, axis=1)
    lo, hi = _brackets(cs, best)
    c_ref, f_ref = _golden(
        lambda c: _costs(hfull, energy, "kautz", np.stack([bs, c], axis=1), size), lo, hi, cfg.refine_tol
    )
    grid_best = grid_costs[np.arange(bs.size), best]
    use_ref = f_ref < grid_best
    c_star = np.where(use_ref, c_ref, cs[best])
    f_star = np.where(use_ref, f_ref, grid_best)
    tie = f_star <= f_star.min() + 1e-12 * max(energy, np.finfo(float).tiny)
    cand = np.flatnonzero(tie)
    j = min(cand, key=lambda k: (abs(bs[k]), abs(c_star[k])))
    return PoleResult((float(bs[j]), float(c_star[j])), float(f_star[j]), float(grid_best.min()))


def optimal_params(h: SymmetricKernel, spec: BasisSpec, cfg: PoleSearchConfig) -> PoleResult:
    if spec.kind == "laguerre":
        return optimal_laguerre_pole(h, spec.size, cfg)
    if spec.kind == "kautz":
        return optimal_kautz_params(h, spec.size, cfg)
    raise ValueError(f"no tunable parameters for basis kind {spec.kind!r}")


@dataclass
class Algorithm1Report:
    entry: str
    iterations: list = field(default_factory=list)
    converged: bool = False

    @property
    def n_iter(self) -> int:
        return len(self.iterations)

    def to_dict(self) -> dict:
        return {"entry": self.entry, "converged": self.converged, "iterations": self.iterations}


def step1_feasible(n_samples: int, layout: Layout, margin: float = 1.1) -> bool:
    return n_samples >= margin * layout.dim


def _basis_ls(u, y, bank: BasisBank):
    Phi = np.hstack([product_regressor(filter_inputs(bank, m, u), m) for m in bank.orders])
    alpha = ls_solve(Phi, y)
    residual = float(np.sum((y - Phi @ alpha) ** 2))
    return alpha, residual


def algorithm1(
    u,
    y,
    sizes: Sequence[int],
    memories: Sequence[int],
    kinds: Sequence[str],
    cfg: PoleSearchConfig | None = None,
    reconstruct_memory: Sequence[int] | None = None,
):
    """Alternate pole selection, basis-coefficient LS and kernel reconstruction.

    Starts from a time-domain LS estimate on ``memories`` lags when the data
    allow it, otherwise from ``cfg.initial``. Kernels are rebuilt on
    ``reconstruct_memory`` lags (default ``memories``) before the next pole
    selection. Returns ``(bank, coefficient kernels, report)``.
    """
    cfg = cfg or PoleSearchConfig()
    u = np.asarray(u, dtype=float)
    y = np.asarray(y, dtype=float)
    M = len(sizes)
    if len(memories) != M or len(kinds) != M:
        raise ValueError("sizes, memories and kinds need one entry per kernel order")
    orders = tuple(range(1, M + 1))
    rec_memory = tuple(reconstruct_memory) if reconstruct_memory is not None else tuple(memories)
    basis_layout = Layout(orders, tuple(sizes))
    time_layout = Layout(orders, tuple(memories))
    N = y.size
    if N < basis_layout.dim:
        raise InsufficientDataError(
            f"{N} samples cannot determine {basis_layout.dim} basis coefficients; "
            "tune basis parameters inside the marginal-likelihood search instead"
        )
    templates = {}
    for m, B, kind in zip(orders, sizes, kinds):
        kind = kind.lower()
        default = {"laguerre": (0.0,), "kautz": (0.0, 0.0)}.get(kind)
        if default is None:
            raise ValueError(f"basis kind {kind!r} has no tunable parameters")
        templates[m] = BasisSpec(kind, B, default)

    def select(kernels: Mapping[int, SymmetricKernel]):
        specs, costs = {}, {}
        for m, h in kernels.items():
            res = optimal_params(h, templates[m], cfg)
            specs[m] = templates[m].with_params(res.params)
            costs[m] = res.cost
        return specs, costs

    if cfg.initial:
        missing = set(orders) - set(int(k) for k in cfg.initial)
        if missing:
            raise ValueError(f"initial basis parameters missing for orders {sorted(missing)}")
        report = Algorithm1Report("initial-guess")
        initial = {int(k): v for k, v in cfg.initial.items()}
        specs = {m: templates[m].with_params(initial[m]) for m in orders}
        costs = {m: None for m in orders}
    elif step1_feasible(N, time_layout, cfg.step1_margin):
        report = Algorithm1Report("time-domain-ls")
        theta = ls_solve(build_regressor(u, time_layout), y)
        kernels = {k.order: k for k in VolterraModel.from_theta(theta, time_layout).kernels}
        specs, costs = select(kernels)
    else:
        raise InsufficientDataError(
            f"{N} samples < {cfg.step1_margin} x {time_layout.dim} time-domain coefficients "
            "and no initial basis parameters given"
        )

    prev = None
    for it in range(1, cfg.max_iter + 1):
        if it > 1:
            specs, costs = select(kernels)
        bank = BasisBank.realize(specs, memory=max(rec_memory))
        alpha, residual = _basis_ls(u, y, bank)
        alphas = [CoefficientKernel(m, B, alpha[s]) for m, B, s in basis_layout.blocks()]
        kernels = {a.order: reconstruct_kernel(a, bank, n) for a, n in zip(alphas, rec_memory)}
        params = {m: list(specs[m].params) for m in orders}
        change = None
        if prev is not None:
            change = max(max(abs(p - q) for p, q in zip(params[m], prev[m])) for m in orders)
        report.iterations.append(
            {"iteration": it, "params": params, "truncation_cost": costs, "residual": residual, "change": change}
        )
        log.debug("algorithm1 iteration %d params %s change %s", it, params, change)
        if change is not None and change < cfg.tol:
            report.converged = True
            break
        prev = params
    return bank, alphas, report
