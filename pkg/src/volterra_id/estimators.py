"""Volterra estimation pipelines behind a single ``estimate`` entry point.

======  ===========================================================
LS      least squares on time-domain kernel coefficients
ReLS    TC-regularized time-domain kernels, hyperparameters tuned
LBF     least squares on Laguerre coefficients (poles by algorithm1)
KBF     least squares on Kautz coefficients (poles by algorithm1)
ReLBF   regularized Laguerre coefficients
ReKBF   regularized Kautz coefficients
======  ===========================================================
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisBank, evaluate_coefficients, filter_inputs, reconstruct_kernel
from .poles import PoleSearchConfig, algorithm1
from .regularization import (
    Hyperparameters,
    TuningConfig,
    TuningResult,
    block_penalty,
    ls_solve,
    rels_solve,
    tune_hyperparameters,
)
from .signals import WienerSystem, as_signal, gaussian_input, nrms
from .volterra import Layout, VolterraModel, build_regressor, evaluate_volterra, n_unique, product_regressor

__all__ = [
    "METHODS",
    "Dataset",
    "EstimatorConfig",
    "ModelEstimate",
    "estimate",
    "validate",
]

# method -> (basis kind or None for time domain, regularized)
METHODS = {
    "LS": (None, False),
    "ReLS": (None, True),
    "LBF": ("laguerre", False),
    "KBF": ("kautz", False),
    "ReLBF": ("laguerre", True),
    "ReKBF": ("kautz", True),
}

MATERIALIZE_BUDGET = 200_000


@dataclass(frozen=True)
class Dataset:
    u: np.ndarray
    y: np.ndarray
    noise_var: float | None = None

    def __post_init__(self):
        u = as_signal(self.u, "input u")
        y = as_signal(self.y, "output y")
        if u.size != y.size:
            raise ValueError(f"u and y lengths differ: {u.size} vs {y.size}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "y", y)

    @property
    def n_samples(self) -> int:
        return self.y.size


@dataclass(frozen=True)
class EstimatorConfig:
    method: str
    memory: tuple = ()
    basis_size: tuple = ()
    poles: PoleSearchConfig = field(default_factory=PoleSearchConfig)
    tuning: TuningConfig = field(default_factory=TuningConfig)
    seed: int = 0
    materialize_memory: tuple | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {list(METHODS)}")
        object.__setattr__(self, "memory", tuple(int(n) for n in self.memory))
        object.__setattr__(self, "basis_size", tuple(int(b) for b in self.basis_size))
        if not self.memory:
            raise ValueError(f"{self.method} needs a memory length per kernel order")
        if self.is_basis:
            if len(self.basis_size) != len(self.memory):
                raise ValueError(
                    f"{self.method} needs one basis size per kernel order "
                    f"(memory has {len(self.memory)}, basis_size has {len(self.basis_size)})"
                )

    @property
    def kind(self):
        return METHODS[self.method][0]

    @property
    def is_basis(self) -> bool:
        return self.kind is not None

    @property
    def regularized(self) -> bool:
        return METHODS[self.method][1]

    @property
    def max_order(self) -> int:
        return len(self.memory)


@dataclass
class ModelEstimate:
    method: str
    model: VolterraModel
    solution: np.ndarray
    layout: Layout
    bank: BasisBank | None = None
    coefficients: tuple | None = None
    hyperparameters: Hyperparameters | None = None
    diagnostics: dict = field(default_factory=dict)

    def predict(self, u) -> np.ndarray:
        """Noise-free model output; basis estimates use their filtered-input form."""
        u = as_signal(u, "input")
        if self.bank is not None:
            return evaluate_coefficients(self.coefficients, self.bank, u)
        return evaluate_volterra(self.model, u)


def _largest_memory(m: int, budget: int) -> int:
    n = 1
    while n_unique(m, n + 1) <= budget:
        n += 1
    return n


def _materialize(bank: BasisBank, alphas, memory=None) -> VolterraModel:
    kernels = []
    for i, a in enumerate(alphas):
        if memory is not None:
            n = memory[i]
        else:
            n = min(bank.decay_length(a.order), _largest_memory(a.order, MATERIALIZE_BUDGET))
        kernels.append(reconstruct_kernel(a, bank, n))
    return VolterraModel(tuple(kernels))


def _tuning_config(cfg: EstimatorConfig, data: Dataset) -> TuningConfig:
    tuning = cfg.tuning
    pinned = dict(tuning.pinned)
    if data.noise_var is not None:
        pinned["noise_var"] = float(data.noise_var)
    return TuningConfig(tuning.starts, cfg.seed, tuning.bounds, pinned, tuning.maxiter)


def _regularized(Phi, y, layout, cfg, data, diagnostics):
    initial_noise = None
    if Phi.shape[0] > Phi.shape[1]:
        try:
            theta_ls = ls_solve(Phi, y)
            initial_noise = float(np.sum((y - Phi @ theta_ls) ** 2) / (Phi.shape[0] - Phi.shape[1]))
        except ValueError:
            pass
    t0 = time.perf_counter()
    result: TuningResult = tune_hyperparameters(Phi, y, layout, _tuning_config(cfg, data), initial_noise)
    diagnostics["tuning_seconds"] = time.perf_counter() - t0
    diagnostics["tuning"] = result.to_dict(layout)
    hp = result.hyperparameters
    theta = rels_solve(Phi, y, block_penalty(hp, layout), hp.noise_var)
    return theta, hp


def estimate(data: Dataset, cfg: EstimatorConfig) -> ModelEstimate:
    """Fit a Volterra model with the method named in ``cfg``."""
    t_start = time.perf_counter()
    u, y = data.u, data.y
    M = cfg.max_order
    orders = tuple(range(1, M + 1))
    diagnostics: dict = {"method": cfg.method, "n_samples": data.n_samples}
    hp = None
    bank = alphas = None

    if not cfg.is_basis:
        layout = Layout(orders, cfg.memory)
        needed = layout.dim if cfg.regularized else int(np.ceil(cfg.poles.step1_margin * layout.dim))
        if not cfg.regularized and data.n_samples < needed:
            raise ValueError(
                f"LS needs N >= {cfg.poles.step1_margin} x {layout.dim} = {needed} samples, got {data.n_samples}"
            )
        Phi = build_regressor(u, layout)
        if cfg.regularized:
            theta, hp = _regularized(Phi, y, layout, cfg, data, diagnostics)
        else:
            theta = ls_solve(Phi, y)
        model = VolterraModel.from_theta(theta, layout)
    else:
        layout = Layout(orders, cfg.basis_size)
        kinds = [cfg.kind] * M
        t0 = time.perf_counter()
        bank, alphas, report = algorithm1(u, y, cfg.basis_size, cfg.memory, kinds, cfg.poles)
        diagnostics["pole_seconds"] = time.perf_counter() - t0
        diagnostics["algorithm1"] = report.to_dict()
        Phi = np.hstack([product_regressor(filter_inputs(bank, m, u), m) for m in orders])
        if cfg.regularized:
            theta, hp = _regularized(Phi, y, layout, cfg, data, diagnostics)
        else:
            theta = np.concatenate([a.values for a in alphas])
        coef_model = VolterraModel.from_theta(theta, layout, kernel_cls=type(alphas[0]))
        alphas = coef_model.kernels
        model = _materialize(bank, alphas, cfg.materialize_memory)

    fitted = Phi @ theta
    diagnostics["residual"] = float(np.sum((y - fitted) ** 2))
    diagnostics["fit_nrms"] = nrms(y, fitted) if np.any(y) else 0.0
    diagnostics["n_parameters"] = int(theta.size)
    diagnostics["seconds"] = time.perf_counter() - t_start
    return ModelEstimate(cfg.method, model, theta, layout, bank, alphas, hp, diagnostics)


def validate(est: ModelEstimate, sys: WienerSystem, seed, length: int = 10_000) -> float:
    """NRMS of the estimate against the true noise-free output on fresh input."""
    if length < 1:
        raise ValueError("validation length must be >= 1")
    u = gaussian_input(length, seed)
    return nrms(sys.noise_free_output(u), est.predict(u))
