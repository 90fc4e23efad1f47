"""``volterra-id`` command line: simulate, identify, validate, montecarlo, kernels.

Exit codes: 0 success, 1 configuration or input error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .campaign import CampaignConfig, run_campaign, simulate_data
from .config import (
    PAPER_SCALE,
    ConfigError,
    apply_override,
    estimator_config,
    load_config,
    merge,
    nested,
    resolve,
    snr_value,
    system_from_config,
)
from .estimators import Dataset, estimate, validate
from .io import (
    ManifestError,
    ParseError,
    config_hash,
    load_estimate,
    read_columns,
    read_manifest,
    save_estimate,
    write_basis_table,
    write_columns,
    write_json,
    write_kernel_csv,
)
from .signals import RNG_NAME, realized_snr_db

log = logging.getLogger("volterra_id")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class RuntimeFailure(RuntimeError):
    pass


def _meta_path(data_path: Path) -> Path:
    return data_path.with_suffix(".meta.json")


def _layers(args, flags: dict) -> list:
    """Config file, then ``--set`` assignments, then explicit flags."""
    layers = []
    if getattr(args, "scale", "desk") == "paper":
        layers.append(PAPER_SCALE)
    if args.config:
        layers.append(load_config(args.config))
    sets = {}
    for a in args.set or []:
        sets = apply_override(sets, a)
    layers.append(sets)
    fl = {}
    for key, value in flags.items():
        if value is not None:
            fl = merge(fl, nested(key, value))
    layers.append(fl)
    return layers


def _system_given(layers) -> bool:
    return any("system" in layer for layer in layers)


def cmd_simulate(args) -> int:
    flags = {
        "system.preset": args.preset,
        "data.n": args.n,
        "data.snr_db": "inf" if args.noise_free else args.snr,
        "data.seed": args.seed,
        "output": args.out,
    }
    cfg = resolve(*_layers(args, flags))
    sys_ = system_from_config(cfg)
    n = int(cfg["data"]["n"])
    if n < 1:
        raise ConfigError(f"data.n must be >= 1, got {n}")
    snr = snr_value(cfg["data"]["snr_db"], "data.snr_db")
    seed = int(cfg["data"]["seed"])
    if not cfg.get("output"):
        raise ConfigError("simulate needs an output path (--out or 'output')")
    out = Path(cfg["output"])
    u, y, y0, s2 = simulate_data(sys_, n, snr, seed, cfg["data"]["snr_convention"])
    write_columns(out, {"u": u, "y": y, "y0": y0})
    meta = {
        "package_version": __version__,
        "system": {"name": sys_.name, "den": list(sys_.den), "gains": list(sys_.gains)},
        "n": n,
        "seed": seed,
        "rng": RNG_NAME,
        "snr_db_requested": snr,
        "snr_convention": cfg["data"]["snr_convention"],
        "noise_var": s2,
        "snr_db_realized": realized_snr_db(y0, y) if s2 > 0 else float("inf"),
        "config_hash": config_hash(cfg),
    }
    write_json(_meta_path(out), meta)
    print(f"wrote {out} ({n} samples, noise variance {s2:.6g}, realized SNR {meta['snr_db_realized']:.3f} dB)")
    return EXIT_OK


def cmd_identify(args) -> int:
    flags = {
        "method": args.method,
        "memory": args.memory,
        "basis_size": args.basis_size,
        "seed": args.seed,
        "data.noise_var": args.noise_var,
        "output": args.out,
    }
    layers = _layers(args, flags)
    data_path = Path(args.data)
    meta = None
    if _meta_path(data_path).is_file():
        meta = json.loads(_meta_path(data_path).read_text())
        if not _system_given(layers):
            layers.insert(0, {"system": {k: meta["system"][k] for k in ("den", "gains", "name")}})
    cfg = resolve(*layers)
    known_system = meta is not None or _system_given(layers)
    sys_ = system_from_config(cfg) if known_system else None
    cols = read_columns(data_path, ["u", "y"])
    max_order = sys_.max_order if sys_ is not None else _order_from_cfg(cfg)
    est_cfg = estimator_config(cfg, max_order)
    if not cfg.get("output"):
        raise ConfigError("identify needs an output directory (--out or 'output')")
    noise_var = cfg["data"].get("noise_var")
    try:
        est = estimate(Dataset(cols["u"], cols["y"], noise_var), est_cfg)
    except ValueError as exc:
        raise RuntimeFailure(f"{est_cfg.method}: {exc}") from exc
    if sys_ is not None:
        vcfg = cfg["validation"]
        est.diagnostics["validation_nrms"] = validate(est, sys_, int(vcfg["seed"]), int(vcfg["length"]))
    seeds = {"estimator": est_cfg.seed, "validation": cfg["validation"]["seed"]}
    if meta is not None:
        seeds["data"] = meta["seed"]
    save_estimate(est, cfg["output"], {k: v for k, v in cfg.items() if k != "output"}, seeds)
    print((Path(cfg["output"]) / "summary.txt").read_text(), end="")
    return EXIT_OK


def _order_from_cfg(cfg) -> int:
    for key in ("memory", "basis_size"):
        v = cfg.get(key)
        if v is not None and not np.isscalar(v):
            return len(v)
    return system_from_config(cfg).max_order


def cmd_validate(args) -> int:
    manifest = read_manifest(args.estimate)
    flags = {"system.preset": args.preset, "validation.length": args.length, "validation.seed": args.seed}
    layers = _layers(args, flags)
    base = manifest.get("config", {})
    if _system_given(layers) and "system" in base:
        base = {k: v for k, v in base.items() if k != "system"}
    cfg = resolve(base, *layers)
    sys_ = system_from_config(cfg)
    est = load_estimate(args.estimate)
    length = int(cfg["validation"]["length"])
    if length < 1:
        raise ConfigError("validation.length must be >= 1")
    value = validate(est, sys_, int(cfg["validation"]["seed"]), length)
    result = {"system": sys_.name, "length": length, "seed": cfg["validation"]["seed"], "nrms": value}
    if args.out:
        write_json(args.out, result)
    print(f"validation nrms {value:.10g} ({sys_.name}, {length} samples, seed {cfg['validation']['seed']})")
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    flags = {
        "system.preset": args.preset,
        "data.n": args.n,
        "campaign.methods": args.methods,
        "campaign.snr_db": args.snr,
        "campaign.realizations": args.realizations,
        "campaign.base_seed": args.base_seed,
        "campaign.workers": args.workers,
        "memory": args.memory,
        "basis_size": args.basis_size,
        "output": args.out,
    }
    cfg = resolve(*_layers(args, flags))
    camp = cfg["campaign"]
    if not cfg.get("output"):
        raise ConfigError("montecarlo needs an output directory (--out or 'output')")
    snrs = camp["snr_db"]
    snrs = [snrs] if np.isscalar(snrs) or isinstance(snrs, str) else snrs
    estimator = {k: cfg[k] for k in ("memory", "basis_size", "poles", "tuning")}
    sys_ = system_from_config(cfg)
    # fail on estimator config errors before any cell runs
    for m in camp["methods"]:
        estimator_config(estimator, sys_.max_order, m)
    try:
        ccfg = CampaignConfig(
            system=sys_,
            methods=tuple(camp["methods"]),
            n_samples=int(cfg["data"]["n"]),
            snr_db=tuple(snr_value(s, "campaign.snr_db") for s in snrs),
            realizations=int(camp["realizations"]),
            base_seed=int(camp["base_seed"]),
            estimator=estimator,
            validation_length=int(cfg["validation"]["length"]),
            snr_convention=cfg["data"]["snr_convention"],
            output_dir=cfg["output"],
            workers=camp.get("workers"),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid campaign: {exc}") from None

    def progress(rec):
        log.info("%s snr=%s r=%d nrms=%.6g %s", rec["method"], rec["snr_db"], rec["realization"], rec["nrms"], rec["status"])

    result = run_campaign(ccfg, progress)
    print(f"{'method':8s} {'snr_db':>7s} {'ok':>4s} {'failed':>6s} {'median':>10s} {'q1':>10s} {'q3':>10s}")
    for row in result.summary:
        print(
            f"{row['method']:8s} {row['snr_db']:7g} {row['n_ok']:4d} {row['n_failed']:6d} "
            f"{row['median']:10.6f} {row['q1']:10.6f} {row['q3']:10.6f}"
        )
    print(f"wrote {Path(cfg['output']) / 'cells.csv'} and summary.csv")
    return EXIT_OK


def cmd_kernels(args) -> int:
    est = load_estimate(args.estimate)
    out = Path(args.out or Path(args.estimate) / "export")
    out.mkdir(parents=True, exist_ok=True)
    for k in est.model.kernels:
        n = k.memory
        if k.order == 1:
            write_columns(out / "h1.csv", {"tau": np.arange(n), "value": k.values})
            continue
        full = k.to_full()
        if k.order == 2:
            t1, t2 = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
            write_columns(out / "h2_grid.csv", {"tau1": t1.ravel(), "tau2": t2.ravel(), "value": full.ravel()})
            s = n - 1 if args.anti_sum is None else int(args.anti_sum)
            tau = np.arange(max(0, s - n + 1), min(s, n - 1) + 1)
            write_columns(
                out / "h2_antidiagonal.csv", {"tau1": tau, "tau2": s - tau, "value": full[tau, s - tau]}
            )
        else:
            write_kernel_csv(out / f"h{k.order}_unique.csv", k)
        diag = full[(np.arange(n),) * k.order]
        write_columns(out / f"h{k.order}_diagonal.csv", {"tau": np.arange(n), "value": diag})
    if est.bank is not None:
        for m in est.bank.orders:
            write_basis_table(out / f"basis{m}.csv", est.bank, m)
    print(f"wrote kernel exports to {out}")
    return EXIT_OK


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="YAML or JSON config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (dotted path)")
    p.add_argument("--scale", choices=("desk", "paper"), default="desk", help="preset default scale")


def _int_list(s: str):
    return [int(v) for v in s.split(",")]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="volterra-id", description="Volterra series identification with OBF and TC regularization")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate Wiener-system data")
    _common(s)
    s.add_argument("--preset")
    s.add_argument("--n", type=int)
    s.add_argument("--snr", help="SNR in dB, or 'inf'")
    s.add_argument("--noise-free", action="store_true", help="same as --snr inf")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="output CSV; metadata goes next to it")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("identify", help="estimate a Volterra model from a u,y CSV")
    _common(s)
    s.add_argument("data")
    s.add_argument("--method")
    s.add_argument("--memory", type=_int_list, help="comma separated, one per order")
    s.add_argument("--basis-size", type=_int_list, help="comma separated, one per order")
    s.add_argument("--seed", type=int)
    s.add_argument("--noise-var", type=float, help="known noise variance (pins it in tuning)")
    s.add_argument("--out", help="estimate directory")
    s.set_defaults(func=cmd_identify)

    s = sub.add_parser("validate", help="NRMS of an estimate against a true system")
    _common(s)
    s.add_argument("estimate")
    s.add_argument("--preset")
    s.add_argument("--length", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="write the result as JSON")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("montecarlo", help="seeded Monte Carlo campaign")
    _common(s)
    s.add_argument("--preset")
    s.add_argument("--n", type=int)
    s.add_argument("--methods", type=lambda v: v.split(","))
    s.add_argument("--snr", type=lambda v: v.split(","), help="comma separated dB values")
    s.add_argument("--realizations", type=int)
    s.add_argument("--base-seed", type=int)
    s.add_argument("--workers", type=int)
    s.add_argument("--memory", type=_int_list)
    s.add_argument("--basis-size", type=_int_list)
    s.add_argument("--out")
    s.set_defaults(func=cmd_montecarlo)

    s = sub.add_parser("kernels", help="export kernel grids and slices for plotting")
    s.add_argument("estimate")
    s.add_argument("--out")
    s.add_argument("--anti-sum", type=int, help="tau1 + tau2 of the anti-diagonal (default memory - 1)")
    s.set_defaults(func=cmd_kernels)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, ParseError, ManifestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
