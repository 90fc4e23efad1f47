"""Seeded Monte Carlo campaigns: simulate, identify and validate on a grid of cells.

A cell is one ``(method, snr_db, realization)`` triple. Every method sees the
same data for a given ``(snr_db, realization)``, so methods are compared on
paired realizations; the method enters only the estimator's own seed.
"""
from __future__ import annotations

import csv
import hashlib
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .estimators import METHODS, Dataset, estimate, validate
from .io import config_hash, write_json
from .signals import RNG_NAME, WienerSystem, gaussian_input, noise_var_for_snr, wiener_simulate

__all__ = [
    "WORKERS_ENV",
    "derive_seed",
    "simulate_data",
    "CampaignConfig",
    "CampaignResult",
    "run_campaign",
    "summarize",
    "read_cells",
]

WORKERS_ENV = "VOLTERRA_ID_WORKERS"
CELL_COLUMNS = ("method", "snr_db", "realization", "nrms", "seconds", "status", "message")
SUMMARY_COLUMNS = ("method", "snr_db", "n_ok", "n_failed", "median", "q1", "q3", "min", "max", "mean_seconds")


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from any printable parts."""
    blob = "\x1f".join(repr(p) for p in parts).encode()
    return int.from_bytes(hashlib.sha256(blob).digest()[:8], "little") >> 1


def simulate_data(sys: WienerSystem, n: int, snr_db: float, seed, convention: str = "power"):
    """Gaussian input, noise-free and noisy output at the requested SNR.

    Returns ``(u, y, y0, noise_var)``. ``snr_db = inf`` gives ``y == y0``.
    """
    input_seed, noise_seed = np.random.SeedSequence(seed).spawn(2)
    u = gaussian_input(n, input_seed)
    y0 = sys.noise_free_output(u)
    s2 = noise_var_for_snr(y0, snr_db, convention)
    y, y0 = wiener_simulate(sys.with_noise(s2), u, noise_seed)
    return u, y, y0, s2


@dataclass
class CampaignConfig:
    system: WienerSystem
    methods: tuple
    n_samples: int
    snr_db: tuple
    realizations: int
    base_seed: int
    estimator: dict = field(default_factory=dict)
    validation_length: int = 10_000
    snr_convention: str = "power"
    output_dir: str | None = None
    workers: int | None = None

    def __post_init__(self):
        self.methods = tuple(self.methods)
        self.snr_db = tuple(float(s) for s in self.snr_db)
        if not self.methods:
            raise ValueError("at least one method is required")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown method(s) {bad}; choose from {list(METHODS)}")
        if self.realizations < 1:
            raise ValueError(f"realization count must be >= 1, got {self.realizations}")
        if self.n_samples < 1:
            raise ValueError(f"N must be >= 1, got {self.n_samples}")
        if not self.snr_db:
            raise ValueError("at least one SNR is required")
        if self.validation_length < 1:
            raise ValueError("validation length must be >= 1")

    def cells(self):
        for method in self.methods:
            for snr in self.snr_db:
                for r in range(self.realizations):
                    yield method, snr, r

    def data_seed(self, snr: float, r: int) -> int:
        return derive_seed(self.base_seed, "data", snr, r)

    def method_seed(self, method: str, snr: float, r: int) -> int:
        return derive_seed(self.base_seed, method, snr, r)

    def validation_seed(self, snr: float, r: int) -> int:
        return derive_seed(self.base_seed, "validation", snr, r)

    def to_dict(self) -> dict:
        return {
            "system": {"name": self.system.name, "den": list(self.system.den), "gains": list(self.system.gains)},
            "methods": list(self.methods),
            "n_samples": self.n_samples,
            "snr_db": [str(s) if np.isinf(s) else s for s in self.snr_db],
            "realizations": self.realizations,
            "base_seed": self.base_seed,
            "estimator": self.estimator,
            "validation_length": self.validation_length,
            "snr_convention": self.snr_convention,
        }


@dataclass
class CampaignResult:
    cells: list
    summary: list
    config: CampaignConfig

    def nrms(self, method: str, snr: float | None = None) -> np.ndarray:
        return np.array(
            [
                c["nrms"]
                for c in self.cells
                if c["method"] == method and (snr is None or c["snr_db"] == snr) and c["status"] != "failed"
            ]
        )

    def median(self, method: str, snr: float | None = None) -> float:
        vals = self.nrms(method, snr)
        return float(np.median(vals)) if vals.size else float("nan")


def _run_cell(cfg: CampaignConfig, method: str, snr: float, r: int) -> dict:
    # deferred import keeps the worker entry point light
    from .config import estimator_config

    record = {"method": method, "snr_db": snr, "realization": r, "nrms": float("nan"), "seconds": float("nan")}
    try:
        u, y, _, _ = simulate_data(cfg.system, cfg.n_samples, snr, cfg.data_seed(snr, r), cfg.snr_convention)
        est_cfg = estimator_config(cfg.estimator, cfg.system.max_order, method, cfg.method_seed(method, snr, r))
        t0 = time.perf_counter()
        est = estimate(Dataset(u, y), est_cfg)
        record["seconds"] = time.perf_counter() - t0
        record["nrms"] = validate(est, cfg.system, cfg.validation_seed(snr, r), cfg.validation_length)
        report = est.diagnostics.get("algorithm1")
        if report is not None and not report["converged"]:
            record["status"], record["message"] = "max-iter", "pole search hit max_iter"
        else:
            record["status"], record["message"] = "ok", ""
    except Exception as exc:  # recorded, never dropped
        record["status"], record["message"] = "failed", f"{type(exc).__name__}: {exc}"
    return record


def _run_cell_args(args):
    return _run_cell(*args)


def _workers(cfg: CampaignConfig) -> int:
    if cfg.workers is not None:
        return max(1, int(cfg.workers))
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValueError(f"{WORKERS_ENV} must be an integer, got {env!r}") from None
    return 1


def _quartiles(vals: np.ndarray):
    return tuple(float(v) for v in np.percentile(vals, [25, 50, 75]))


def summarize(cells) -> list:
    """Per ``(method, snr_db)`` statistics over non-failed cells."""
    groups = {}
    for c in cells:
        groups.setdefault((c["method"], c["snr_db"]), []).append(c)
    out = []
    for (method, snr), cs in groups.items():
        ok = [c for c in cs if c["status"] != "failed"]
        vals = np.array([c["nrms"] for c in ok])
        row = {"method": method, "snr_db": snr, "n_ok": len(ok), "n_failed": len(cs) - len(ok)}
        if vals.size:
            q1, med, q3 = _quartiles(vals)
            row.update(
                median=float(np.median(vals)), q1=q1, q3=q3, min=float(vals.min()), max=float(vals.max()),
                mean_seconds=float(np.mean([c["seconds"] for c in ok])),
            )
        else:
            row.update({k: float("nan") for k in ("median", "q1", "q3", "min", "max", "mean_seconds")})
        out.append(row)
    return out


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_rows(path: Path, columns, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row.get(c, "")) for c in columns])


def read_cells(path) -> list:
    """Per-cell CSV back into records (floats round-trip exactly)."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        r["snr_db"] = float(r["snr_db"])
        r["realization"] = int(r["realization"])
        r["nrms"] = float(r["nrms"])
        r["seconds"] = float(r["seconds"])
    return rows


def run_campaign(cfg: CampaignConfig, progress=None) -> CampaignResult:
    """Run every cell, then write ``cells.csv``, ``summary.csv`` and ``manifest.json``.

    ``progress`` is an optional callable receiving each finished record.
    """
    jobs = [(cfg, m, s, r) for m, s, r in cfg.cells()]
    workers = _workers(cfg)
    records = []
    if workers == 1:
        for job in jobs:
            rec = _run_cell_args(job)
            records.append(rec)
            if progress:
                progress(rec)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rec in pool.map(_run_cell_args, jobs):
                records.append(rec)
                if progress:
                    progress(rec)
    summary = summarize(records)
    result = CampaignResult(records, summary, cfg)
    if cfg.output_dir is not None:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_rows(out / "cells.csv", CELL_COLUMNS, records)
        _write_rows(out / "summary.csv", SUMMARY_COLUMNS, summary)
        config = cfg.to_dict()
        write_json(
            out / "manifest.json",
            {
                "artifact_version": 1,
                "package_version": __version__,
                "kind": "campaign",
                "config": config,
                "config_hash": config_hash(config),
                "seeds": {
                    "base_seed": cfg.base_seed,
                    "rng": RNG_NAME,
                    "data": {f"{s}/{r}": cfg.data_seed(s, r) for s in cfg.snr_db for r in range(cfg.realizations)},
                },
                "timing_note": "seconds are wall clock per estimate and not comparable across machines",
                "artifacts": ["cells.csv", "summary.csv"],
            },
        )
    return result
