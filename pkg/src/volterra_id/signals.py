"""Signals, rational filters, Wiener-system simulation and the NRMS metric."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import prod

import numpy as np
from scipy.signal import lfilter

from .volterra import SymmetricKernel, enumerate_indices

__all__ = [
    "RNG_NAME",
    "as_signal",
    "RationalFilter",
    "filter_signal",
    "WienerSystem",
    "wiener_simulate",
    "true_wiener_kernels",
    "nrms",
    "rms",
    "noise_var_for_snr",
    "realized_snr_db",
    "gaussian_input",
    "equal_contribution_gains",
    "PRESETS",
    "preset",
]

# numpy's Generator(PCG64).standard_normal draws with the ziggurat method.
RNG_NAME = "numpy.random.Generator(PCG64).standard_normal [ziggurat]"

STABILITY_TOL = 1e-10


def as_signal(x, name: str = "signal") -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} contains non-finite values")
    return x


@dataclass(frozen=True)
class RationalFilter:
    """``num(q^-1) / den(q^-1)`` with ``den[0] == 1``."""

    num: np.ndarray
    den: np.ndarray = field(default_factory=lambda: np.array([1.0]))

    def __post_init__(self):
        num = np.atleast_1d(np.asarray(self.num, dtype=float))
        den = np.atleast_1d(np.asarray(self.den, dtype=float))
        if den.size == 0 or den[0] != 1.0:
            raise ValueError(f"leading denominator coefficient must be exactly 1, got {den}")
        if den.size > 1:
            radius = np.max(np.abs(np.roots(den)))
            if radius >= 1.0 - STABILITY_TOL:
                raise ValueError(f"unstable filter: pole radius {radius:.12g} (den={den.tolist()})")
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    def impulse_response(self, n: int) -> np.ndarray:
        x = np.zeros(n)
        x[0] = 1.0
        return lfilter(self.num, self.den, x)


def filter_signal(f: RationalFilter, u) -> np.ndarray:
    """Zero-state difference-equation filtering."""
    return lfilter(f.num, f.den, as_signal(u, "input"))


@dataclass(frozen=True)
class WienerSystem:
    """Parallel Wiener branches ``y0 = sum_m (gain_m q^-1 / A(q) u)^m``.

    ``den`` holds ``A`` as ``[1, a_1, ..., a_q]`` and ``gains[m-1]`` is the
    numerator gain of the order-``m`` branch.
    """

    den: tuple
    gains: tuple
    noise_var: float = 0.0
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "den", tuple(float(v) for v in self.den))
        object.__setattr__(self, "gains", tuple(float(v) for v in self.gains))
        if len(self.gains) < 1:
            raise ValueError("a Wiener system needs at least one branch")
        if self.noise_var < 0:
            raise ValueError(f"noise variance must be >= 0, got {self.noise_var}")
        RationalFilter([0.0, 1.0], self.den)  # stability check

    @property
    def max_order(self) -> int:
        return len(self.gains)

    def branch(self, m: int) -> RationalFilter:
        return RationalFilter([0.0, self.gains[m - 1]], self.den)

    def with_noise(self, noise_var: float) -> "WienerSystem":
        return WienerSystem(self.den, self.gains, noise_var, self.name)

    def noise_free_output(self, u) -> np.ndarray:
        u = as_signal(u, "input")
        y0 = np.zeros_like(u)
        for m in range(1, self.max_order + 1):
            y0 += filter_signal(self.branch(m), u) ** m
        return y0


def wiener_simulate(sys: WienerSystem, u, noise_seed=None):
    """Return ``(y, y0)``: measured and noise-free outputs."""
    y0 = sys.noise_free_output(u)
    if sys.noise_var == 0:
        return y0.copy(), y0
    rng = np.random.default_rng(noise_seed)
    e = np.sqrt(sys.noise_var) * rng.standard_normal(y0.size)
    return y0 + e, y0


def true_wiener_kernels(sys: WienerSystem, n: int) -> list:
    """Product-form kernels ``h_m(t1..tm) = prod_j g_m(tj)``, truncated to ``n`` lags."""
    if n < 1:
        raise ValueError("memory length must be >= 1")
    kernels = []
    for m in range(1, sys.max_order + 1):
        g = sys.branch(m).impulse_response(n)
        idx = enumerate_indices(m, n)
        kernels.append(SymmetricKernel(m, n, np.prod(g[idx], axis=1)))
    return kernels


def rms(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sqrt(np.mean(x**2)))


def nrms(y_val, y_mod) -> float:
    """``rms(y_val - y_mod) / rms(y_val)``."""
    y_val = np.asarray(y_val, dtype=float)
    y_mod = np.asarray(y_mod, dtype=float)
    if y_val.shape != y_mod.shape:
        raise ValueError(f"length mismatch: {y_val.shape} vs {y_mod.shape}")
    ref = rms(y_val)
    if ref == 0:
        raise ValueError("NRMS undefined: reference signal has zero rms")
    return rms(y_val - y_mod) / ref


def noise_var_for_snr(y0, snr_db: float, convention: str = "power") -> float:
    """Noise variance giving the requested SNR against the noise-free output.

    ``power``: ``SNR = 10 log10(var(y0) / s2)``.
    ``amplitude``: ``SNR = 10 log10(std(y0) / s)``, the ratio of standard
    deviations read on a 10 log10 scale.
    """
    if np.isinf(snr_db):
        return 0.0
    v = float(np.var(y0))
    if convention == "power":
        return v / 10 ** (snr_db / 10)
    if convention == "amplitude":
        return v / 10 ** (snr_db / 5)
    raise ValueError(f"unknown SNR convention {convention!r}")


def realized_snr_db(y0, y) -> float:
    e = np.asarray(y) - np.asarray(y0)
    return float(10 * np.log10(np.var(y0) / np.var(e)))


def gaussian_input(n: int, seed) -> np.ndarray:
    """Unit-variance i.i.d. Gaussian input."""
    return np.random.default_rng(seed).standard_normal(n)


def _gaussian_power_var(m: int) -> float:
    """``var(z**m)`` for standard normal ``z``."""

    def dfact(k):
        return prod(range(k, 0, -2)) if k > 0 else 1

    even_moment = dfact(2 * m - 1)
    mean = dfact(m - 1) if m % 2 == 0 else 0
    return float(even_moment - mean**2)


def equal_contribution_gains(den, max_order: int) -> tuple:
    """Branch gains giving every order the same output variance under unit white input."""
    g = RationalFilter([0.0, 1.0], den).impulse_response(20000)
    nu = float(np.sqrt(np.sum(g**2)))
    return tuple(
        float(1.0 / (nu * _gaussian_power_var(m) ** (1.0 / (2 * m))))
        for m in range(1, max_order + 1)
    )


SYS2A_DEN = (1.0, -1.8036, 0.8338)
SYS2B_DEN = (1.0, -1.5, 0.8125)


def _make_presets() -> dict:
    return {
        "Sys2a": WienerSystem(SYS2A_DEN, equal_contribution_gains(SYS2A_DEN, 2), name="Sys2a"),
        "Sys2b": WienerSystem(SYS2B_DEN, equal_contribution_gains(SYS2B_DEN, 2), name="Sys2b"),
        "Sys3": WienerSystem(SYS2A_DEN, equal_contribution_gains(SYS2A_DEN, 3), name="Sys3"),
        "Sys4": WienerSystem(SYS2A_DEN, equal_contribution_gains(SYS2A_DEN, 4), name="Sys4"),
    }


PRESETS = _make_presets()


def preset(name: str) -> WienerSystem:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown system preset {name!r}; choose from {sorted(PRESETS)}") from None
