"""TC penalties on kernel hyper-surfaces, empirical-Bayes tuning and ReLS.

Notation: ``Phi`` is the ``(N, p)`` regressor (one row per sample) so the
model is ``Y = Phi @ theta + E``. The prior is ``theta ~ N(0, P)`` with ``P``
block-diagonal over kernel orders. Within the order-``m`` block::

    P_m(x, y) = beta_m * prod_j lambda_mj ** max(x'_j, y'_j)

where ``x'_j = |<idx(x), v_j>|`` and ``v_1 = (1, ..., 1)``, ``v_2..v_m`` are
integer Helmert directions orthogonal to it. For ``m = 1`` this is the TC
kernel ``beta * lambda ** max(x, y)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import linalg
from scipy.optimize import minimize

from .volterra import Layout, enumerate_indices

log = logging.getLogger(__name__)

__all__ = [
    "Hyperparameters",
    "TuningBounds",
    "TuningConfig",
    "TuningResult",
    "RankDeficientError",
    "tc_matrix",
    "direction_basis",
    "projection_coords",
    "kernel_penalty",
    "block_penalty",
    "MarginalLikelihood",
    "marginal_likelihood_cost",
    "tune_hyperparameters",
    "rels_solve",
    "ls_solve",
]

EPS = np.finfo(float).eps


class RankDeficientError(ValueError):
    """Unregularized least squares is not well posed for this regressor."""


@dataclass(frozen=True)
class Hyperparameters:
    """Per-kernel scale and decay rates plus the shared noise variance.

    ``decays[k]`` has one rate per regularizing direction of the ``k``-th
    kernel in layout order.
    """

    scales: tuple
    decays: tuple
    noise_var: float

    def __post_init__(self):
        scales = tuple(float(b) for b in self.scales)
        decays = tuple(tuple(float(v) for v in d) for d in self.decays)
        object.__setattr__(self, "scales", scales)
        object.__setattr__(self, "decays", decays)
        object.__setattr__(self, "noise_var", float(self.noise_var))
        if len(scales) != len(decays):
            raise ValueError("one decay tuple per kernel scale is required")
        vals = list(scales) + [v for d in decays for v in d] + [self.noise_var]
        if not all(np.isfinite(vals)):
            raise ValueError(f"non-finite hyperparameters: {self}")
        if any(b < 0 for b in scales):
            raise ValueError(f"scales must be >= 0, got {scales}")
        if any(not 0.0 <= v < 1.0 for d in decays for v in d):
            raise ValueError(f"decay rates must lie in [0, 1), got {decays}")
        if self.noise_var <= 0:
            raise ValueError(f"noise variance must be > 0, got {self.noise_var}")

    def check_layout(self, layout: Layout):
        if len(self.scales) != len(layout.orders):
            raise ValueError(
                f"{len(self.scales)} kernel hyperparameter sets for a layout with orders {layout.orders}"
            )
        for m, d in zip(layout.orders, self.decays):
            if len(d) != m:
                raise ValueError(f"order-{m} kernel needs {m} decay rates, got {len(d)}")

    @staticmethod
    def names(layout: Layout) -> list:
        out = []
        for m in layout.orders:
            out.append(f"beta[{m}]")
            out.extend(f"lambda[{m}][{j}]" for j in range(1, m + 1))
        out.append("noise_var")
        return out

    def to_vector(self) -> np.ndarray:
        out = []
        for b, d in zip(self.scales, self.decays):
            out.append(b)
            out.extend(d)
        out.append(self.noise_var)
        return np.array(out)

    @classmethod
    def from_vector(cls, v: Sequence[float], layout: Layout):
        v = list(map(float, v))
        scales, decays, pos = [], [], 0
        for m in layout.orders:
            scales.append(v[pos])
            decays.append(tuple(v[pos + 1 : pos + 1 + m]))
            pos += 1 + m
        return cls(tuple(scales), tuple(decays), v[pos])

    def to_dict(self, layout: Layout) -> dict:
        return {
            "kernels": [
                {"order": m, "beta": b, "lambda": list(d)}
                for m, b, d in zip(layout.orders, self.scales, self.decays)
            ],
            "noise_var": self.noise_var,
        }

    @classmethod
    def from_dict(cls, d: Mapping):
        ks = d["kernels"]
        return cls(tuple(k["beta"] for k in ks), tuple(tuple(k["lambda"]) for k in ks), d["noise_var"])


def tc_matrix(beta: float, lam: float, coords) -> np.ndarray:
    """``P(x, y) = beta * lam ** max(coords[x], coords[y])`` with ``0 ** 0 = 1``."""
    if beta < 0:
        raise ValueError(f"beta must be >= 0, got {beta}")
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"lambda must lie in [0, 1), got {lam}")
    c = np.asarray(coords, dtype=float)
    return beta * np.power(lam, np.maximum.outer(c, c))


def direction_basis(m: int) -> np.ndarray:
    """Rows are ``m`` mutually orthogonal integer directions, the first all ones.

    Row ``j`` (``j >= 1``) is ``(-1, ..., -1, j, 0, ..., 0)`` with ``j``
    leading ``-1`` entries, e.g. ``m = 3``: ``(1,1,1), (-1,1,0), (-1,-1,2)``.
    """
    if m < 1:
        raise ValueError("order must be >= 1")
    V = np.zeros((m, m), dtype=np.int64)
    V[0] = 1
    for j in range(1, m):
        V[j, :j] = -1
        V[j, j] = j
    return V


def projection_coords(m: int, n: int) -> np.ndarray:
    """Absolute coordinates ``|<idx, v_j>|`` of every unique index, shape ``(count, m)``."""
    return np.abs(enumerate_indices(m, n) @ direction_basis(m).T)


class _BlockGeometry:
    """Cached ``max(x'_j, y'_j)`` exponent matrices for one kernel block."""

    def __init__(self, m: int, n: int):
        coords = projection_coords(m, n).astype(float)
        self.order = m
        self.exponents = [np.maximum.outer(coords[:, j], coords[:, j]) for j in range(m)]

    def penalty(self, beta: float, lams: Sequence[float]) -> np.ndarray:
        P = np.full(self.exponents[0].shape, float(beta))
        for E, lam in zip(self.exponents, lams):
            P *= np.power(lam, E)
        return P


def kernel_penalty(m: int, n: int, beta: float, lams: Sequence[float]) -> np.ndarray:
    """Prior covariance block of an order-``m`` kernel over its unique coefficients."""
    if len(lams) != m:
        raise ValueError(f"order-{m} kernel needs {m} decay rates, got {len(lams)}")
    if beta < 0 or any(not 0.0 <= v < 1.0 for v in lams):
        raise ValueError(f"hyperparameters out of range: beta={beta}, lambda={lams}")
    return _BlockGeometry(m, n).penalty(beta, lams)


def block_penalty(hp: Hyperparameters, layout: Layout) -> np.ndarray:
    hp.check_layout(layout)
    blocks = [
        kernel_penalty(m, n, b, d)
        for (m, n), b, d in zip(zip(layout.orders, layout.sizes), hp.scales, hp.decays)
    ]
    return linalg.block_diag(*blocks)


def _psd_factor(P: np.ndarray) -> np.ndarray:
    """``L`` with ``L @ L.T == P`` for a symmetric PSD block."""
    w, V = linalg.eigh(P)
    return V * np.sqrt(np.clip(w, 0.0, None))


class MarginalLikelihood:
    """``Y' S^-1 Y + log det S`` with ``S = Phi P Phi' + s2 I``.

    Evaluated in parameter space: with ``P = L L'`` and ``M = s2 I + L' R L``
    (``R = Phi' Phi``), ``log det S = (N - p) log s2 + log det M`` and
    ``Y' S^-1 Y = (Y'Y - c' M^-1 c) / s2`` where ``c = L' Phi' Y``.
    """

    def __init__(self, Phi: np.ndarray, Y: np.ndarray, layout: Layout):
        Phi = np.asarray(Phi, dtype=float)
        Y = np.asarray(Y, dtype=float).ravel()
        if Phi.shape != (Y.size, layout.dim):
            raise ValueError(f"regressor shape {Phi.shape} does not match N={Y.size}, p={layout.dim}")
        self.layout = layout
        self.N = Y.size
        self.R = Phi.T @ Phi
        self.b = Phi.T @ Y
        self.yy = float(Y @ Y)
        self.var_y = float(np.var(Y))
        self.geometry = [_BlockGeometry(m, n) for m, n in zip(layout.orders, layout.sizes)]
        self.jitter_used = False

    def factor(self, hp: Hyperparameters) -> np.ndarray:
        hp.check_layout(self.layout)
        Ls = [_psd_factor(g.penalty(b, d)) for g, b, d in zip(self.geometry, hp.scales, hp.decays)]
        return linalg.block_diag(*Ls)

    def _factorize(self, hp: Hyperparameters):
        L = self.factor(hp)
        s2 = hp.noise_var
        p = L.shape[0]
        c = L.T @ self.b
        M = L.T @ self.R @ L
        M[np.diag_indices(p)] += s2
        try:
            cf = linalg.cho_factor(M, lower=True, check_finite=False)
        except linalg.LinAlgError:
            jitter = 1e-10 * np.trace(M) / p
            M[np.diag_indices(p)] += jitter
            try:
                cf = linalg.cho_factor(M, lower=True, check_finite=False)
            except linalg.LinAlgError as exc:
                raise linalg.LinAlgError(f"covariance factorization failed at {hp}") from exc
            self.jitter_used = True
            log.debug("jitter %.3g added to marginal-likelihood factorization", jitter)
        w = linalg.cho_solve(cf, c, check_finite=False)
        logdet_M = 2.0 * float(np.sum(np.log(np.diag(cf[0]))))
        cost = (self.yy - float(c @ w)) / s2 + (self.N - p) * np.log(s2) + logdet_M
        return cost, L, cf, w

    def __call__(self, hp: Hyperparameters) -> float:
        return self._factorize(hp)[0]


def marginal_likelihood_cost(hp: Hyperparameters, Phi: np.ndarray, Y: np.ndarray, layout: Layout) -> float:
    return MarginalLikelihood(Phi, Y, layout)(hp)


@dataclass(frozen=True)
class TuningBounds:
    beta: tuple = (1e-8, 1e8)
    lam: tuple = (1e-6, 0.999)
    # relative to var(Y)
    noise_rel: tuple = (1e-10, 10.0)


@dataclass(frozen=True)
class TuningConfig:
    starts: int = 20
    seed: int = 0
    bounds: TuningBounds = field(default_factory=TuningBounds)
    pinned: Mapping = field(default_factory=dict)
    maxiter: int = 200

    def __post_init__(self):
        if self.starts < 1:
            raise ValueError("at least one start is required")


@dataclass
class TuningResult:
    hyperparameters: Hyperparameters
    cost: float
    start_costs: list
    final_costs: list
    history: list
    seed: int
    jitter_used: bool = False

    def to_dict(self, layout: Layout) -> dict:
        return {
            "hyperparameters": self.hyperparameters.to_dict(layout),
            "cost": self.cost,
            "starts": len(self.start_costs),
            "seed": self.seed,
            "start_costs": self.start_costs,
            "final_costs": self.final_costs,
            "jitter_used": self.jitter_used,
        }


def _logit(p):
    return np.log(p) - np.log1p(-p)


def _expit(x):
    return 1.0 / (1.0 + np.exp(-x))


class _Transform:
    """Maps hyperparameters to ``(log beta, logit lambda, log s2)`` and back."""

    def __init__(self, layout: Layout, bounds: TuningBounds, var_y: float):
        self.layout = layout
        self.kinds = []
        for m in layout.orders:
            self.kinds.append("beta")
            self.kinds.extend(["lam"] * m)
        self.kinds.append("noise")
        scale = var_y if var_y > 0 else 1.0
        self.raw_bounds = {
            "beta": bounds.beta,
            "lam": bounds.lam,
            "noise": (bounds.noise_rel[0] * scale, bounds.noise_rel[1] * scale),
        }

    def forward(self, v: np.ndarray) -> np.ndarray:
        return np.array([_logit(x) if k == "lam" else np.log(x) for x, k in zip(v, self.kinds)])

    def inverse(self, z: np.ndarray) -> np.ndarray:
        return np.array([_expit(x) if k == "lam" else np.exp(x) for x, k in zip(z, self.kinds)])

    def clip(self, v: np.ndarray) -> np.ndarray:
        return np.array([np.clip(x, *self.raw_bounds[k]) for x, k in zip(v, self.kinds)])

    def box(self) -> list:
        return [tuple(self.forward_one(k, b) for b in self.raw_bounds[k]) for k in self.kinds]

    @staticmethod
    def forward_one(kind, x):
        return float(_logit(x) if kind == "lam" else np.log(x))


def _initial_guess(ml: MarginalLikelihood, transform: _Transform, initial_noise: float | None) -> np.ndarray:
    """Scale from the largest LS coefficient per block, decay 0.8, given noise level."""
    try:
        theta = linalg.lstsq(ml.R, ml.b, check_finite=False)[0]
    except (linalg.LinAlgError, ValueError):
        theta = None
    out = []
    for m, s in zip(ml.layout.orders, ml.layout.slices):
        beta0 = ml.var_y
        if theta is not None and np.all(np.isfinite(theta[s])) and np.any(theta[s]):
            beta0 = float(np.max(theta[s] ** 2))
        out.append(beta0)
        out.extend([0.8] * m)
    out.append(initial_noise if initial_noise is not None else ml.var_y)
    return transform.clip(np.array(out))


def _draw_start(rng: np.random.Generator, center: np.ndarray, transform: _Transform) -> np.ndarray:
    v = []
    for x, k in zip(center, transform.kinds):
        lo, hi = transform.raw_bounds[k]
        if k == "lam":
            v.append(rng.uniform(max(lo, 0.05), min(hi, 0.99)))
        elif k == "beta":
            v.append(np.exp(rng.uniform(np.log(max(lo, x * 1e-3)), np.log(min(hi, x * 1e3)))))
        else:
            v.append(np.exp(rng.uniform(np.log(max(lo, x * 1e-2)), np.log(min(hi, x * 1e1)))))
    return transform.clip(np.array(v))


def tune_hyperparameters(
    Phi: np.ndarray,
    Y: np.ndarray,
    layout: Layout,
    config: TuningConfig | None = None,
    initial_noise: float | None = None,
) -> TuningResult:
    """Seeded multi-start minimization of the marginal-likelihood cost.

    Start 0 is a data-driven guess; the remaining ``starts - 1`` points are
    drawn around it. Each start runs bounded L-BFGS-B in transformed
    coordinates over the parameters not listed in ``config.pinned`` (keys as
    in :meth:`Hyperparameters.names`).
    """
    config = config or TuningConfig()
    ml = MarginalLikelihood(Phi, Y, layout)
    transform = _Transform(layout, config.bounds, ml.var_y)
    names = Hyperparameters.names(layout)
    unknown = set(config.pinned) - set(names)
    if unknown:
        raise ValueError(f"unknown pinned hyperparameters {sorted(unknown)}; valid names: {names}")
    pinned_pos = {names.index(k): float(v) for k, v in config.pinned.items()}
    free = [i for i in range(len(names)) if i not in pinned_pos]

    def full_raw(raw):
        raw = raw.copy()
        for i, v in pinned_pos.items():
            raw[i] = v
        return raw

    best = {"cost": np.inf, "raw": None}
    history = []

    def cost_raw(raw):
        try:
            c = ml(Hyperparameters.from_vector(raw, layout))
        except (ValueError, linalg.LinAlgError):
            return np.inf
        if not np.isfinite(c):
            return np.inf
        if c < best["cost"]:
            best["cost"] = c
            best["raw"] = raw.copy()
        history.append(best["cost"])
        return c

    base = full_raw(_initial_guess(ml, transform, initial_noise))
    rng = np.random.default_rng(config.seed)
    starts = [base] + [full_raw(_draw_start(rng, base, transform)) for _ in range(config.starts - 1)]
    box = transform.box()
    free_box = [box[i] for i in free]
    start_costs, final_costs = [], []

    for raw0 in starts:
        c0 = cost_raw(raw0)
        start_costs.append(float(c0))
        if not free:
            final_costs.append(float(c0))
            continue
        z_full = transform.forward(raw0)

        def objective(zf):
            z = z_full.copy()
            z[free] = zf
            c = cost_raw(full_raw(transform.inverse(z)))
            return c if np.isfinite(c) else 1e300

        res = minimize(
            objective,
            z_full[free],
            method="L-BFGS-B",
            bounds=free_box,
            options={"maxiter": config.maxiter},
        )
        z = z_full.copy()
        z[free] = res.x
        final_costs.append(float(cost_raw(full_raw(transform.inverse(z)))))

    if best["raw"] is None:
        raise RuntimeError("hyperparameter tuning failed: no start produced a finite cost")
    return TuningResult(
        Hyperparameters.from_vector(best["raw"], layout),
        float(best["cost"]),
        start_costs,
        final_costs,
        history,
        config.seed,
        ml.jitter_used,
    )


def rels_solve(Phi: np.ndarray, Y: np.ndarray, P: np.ndarray, noise_var: float) -> np.ndarray:
    """Regularized LS: solve ``(P R + s2 I) theta = P Phi' Y`` with ``R = Phi' Phi``."""
    if noise_var <= 0:
        raise ValueError(f"noise variance must be > 0, got {noise_var}")
    Phi = np.asarray(Phi, dtype=float)
    Y = np.asarray(Y, dtype=float).ravel()
    P = np.asarray(P, dtype=float)
    p = P.shape[0]
    A = P @ (Phi.T @ Phi)
    A[np.diag_indices(p)] += noise_var
    rhs = P @ (Phi.T @ Y)
    for attempt in range(2):
        lu, piv = linalg.lu_factor(A, check_finite=False)
        d = np.abs(np.diag(lu))
        if d.min() > 1e3 * EPS * d.max():
            return linalg.lu_solve((lu, piv), rhs, check_finite=False)
        A[np.diag_indices(p)] += 1e-10 * np.trace(np.abs(A)) / p
    raise np.linalg.LinAlgError("regularized system is numerically singular after jitter")


def ls_solve(Phi: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Least squares via SVD; rejects near rank-deficient regressors."""
    Phi = np.asarray(Phi, dtype=float)
    Y = np.asarray(Y, dtype=float).ravel()
    N, p = Phi.shape
    if N < p:
        raise RankDeficientError(
            f"{N} samples for {p} parameters; use regularization or more data"
        )
    theta, _, rank, sv = np.linalg.lstsq(Phi, Y, rcond=None)
    cond2 = (sv[0] / sv[-1]) ** 2 if sv[-1] > 0 else np.inf
    if rank < p or cond2 >= 1.0 / (100 * EPS):
        raise RankDeficientError(
            f"regressor is rank deficient (rank {rank}/{p}, cond^2 {cond2:.3g}); "
            "use regularization or more data"
        )
    return theta
