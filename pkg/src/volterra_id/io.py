"""File formats: signal CSVs, kernel CSVs and the estimate directory.

Estimate directory layout::

    manifest.json          version, method, config, config hash, seeds, artifacts
    kernels/h<m>.csv       time-domain kernels, unique sorted lags
    coefficients/a<m>.csv  basis coefficients (basis methods only)
    basis.json             basis kinds, sizes and parameters
    hyperparameters.json   tuned values (regularized methods only)
    diagnostics.json       timing, residuals, tuning and pole-search trace
    summary.txt            human-readable report
"""
from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from . import __version__
from .basis import BasisBank, BasisSpec
from .regularization import Hyperparameters
from .volterra import CoefficientKernel, Layout, SymmetricKernel, VolterraModel, enumerate_indices

__all__ = [
    "ParseError",
    "ManifestError",
    "read_columns",
    "write_columns",
    "write_kernel_csv",
    "read_kernel_csv",
    "write_basis_table",
    "config_hash",
    "write_json",
    "save_estimate",
    "load_estimate",
    "format_summary",
]

ARTIFACT_VERSION = 1


class ParseError(ValueError):
    """Malformed input file; the message carries the file and line number."""


class ManifestError(ValueError):
    """Estimate directory without a usable manifest."""


def read_columns(path, columns) -> dict:
    """Read named float columns from a headed CSV.

    Lines starting with ``#`` are skipped and extra columns are ignored.
    Every row is checked so the error names the offending line.
    """
    path = Path(path)
    columns = list(columns)
    expected = ",".join(columns)
    with path.open(newline="") as fh:
        numbered = [(i, line) for i, line in enumerate(fh, start=1) if not line.lstrip().startswith("#")]
    numbered = [(i, line) for i, line in numbered if line.strip()]
    if not numbered:
        raise ParseError(f"{path}: empty file; expected a header line '{expected}'")
    head_line, head = numbered[0]
    header = [h.strip() for h in next(csv.reader([head]))]
    missing = [c for c in columns if c not in header]
    if missing:
        raise ParseError(
            f"{path}:{head_line}: missing column(s) {missing} in header {header}; "
            f"expected a header line '{expected}'"
        )
    pos = [header.index(c) for c in columns]
    out = [[] for _ in columns]
    for lineno, line in numbered[1:]:
        row = next(csv.reader([line]))
        if len(row) != len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        for k, p in enumerate(pos):
            try:
                v = float(row[p])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: column {columns[k]!r}: not a number: {row[p]!r}") from None
            if not np.isfinite(v):
                raise ParseError(f"{path}:{lineno}: column {columns[k]!r}: non-finite value {row[p]!r}")
            out[k].append(v)
    if not out[0]:
        raise ParseError(f"{path}: no data rows")
    return {c: np.array(v) for c, v in zip(columns, out)}


def write_columns(path, data: dict, fmt: str = "%.17g", comments=()):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(data)
    cols = [np.asarray(data[k]) for k in names]
    with path.open("w", newline="") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        fh.write(",".join(names) + "\n")
        for row in zip(*cols):
            fh.write(",".join(fmt % v if isinstance(v, (float, np.floating)) else str(v) for v in row) + "\n")


def write_kernel_csv(path, kernel: SymmetricKernel, index_name: str = "tau"):
    """Unique coefficients as ``tau1..taum,value`` rows with an order/memory comment."""
    idx = kernel.indices
    data = {f"{index_name}{j + 1}": idx[:, j] for j in range(kernel.order)}
    data["value"] = kernel.values
    write_columns(path, data, comments=[f"order={kernel.order} memory={kernel.memory}"])


def read_kernel_csv(path, cls=SymmetricKernel, index_name: str = "tau") -> SymmetricKernel:
    path = Path(path)
    with path.open() as fh:
        first = fh.readline().strip()
    try:
        meta = dict(kv.split("=") for kv in first.lstrip("#").split())
        m, n = int(meta["order"]), int(meta["memory"])
    except (ValueError, KeyError):
        raise ParseError(f"{path}:1: expected '# order=<m> memory=<n>', got {first!r}") from None
    names = [f"{index_name}{j + 1}" for j in range(m)] + ["value"]
    cols = read_columns(path, names)
    idx = np.column_stack([cols[c] for c in names[:-1]]).astype(int)
    expected = enumerate_indices(m, n)
    if idx.shape != expected.shape or not np.array_equal(idx, expected):
        raise ParseError(f"{path}: index columns do not enumerate an order-{m} memory-{n} kernel")
    return cls(m, n, cols["value"])


def write_basis_table(path, bank: BasisBank, m: int, length: int | None = None):
    """Impulse responses of order ``m``'s basis as ``tau,f1..fB`` columns."""
    length = length or bank.decay_length(m)
    table = bank.table(m, length)
    data = {"tau": np.arange(length)}
    data.update({f"f{i + 1}": row for i, row in enumerate(table)})
    s = bank.specs[m]
    write_columns(path, data, comments=[f"order={m} kind={s.kind} params={list(s.params)}"])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def config_hash(config: dict) -> str:
    blob = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def format_summary(est) -> str:
    d = est.diagnostics
    lines = [
        f"method           {est.method}",
        f"samples          {d.get('n_samples')}",
        f"parameters       {d.get('n_parameters')}",
        f"residual         {d.get('residual'):.6g}",
        f"fit nrms         {d.get('fit_nrms'):.6g}",
        f"seconds          {d.get('seconds'):.3f} (wall clock, machine dependent)",
    ]
    if "validation_nrms" in d:
        lines.append(f"validation nrms  {d['validation_nrms']:.6g}")
    for k in est.model.kernels:
        lines.append(f"kernel h{k.order}        memory {k.memory}, energy {k.energy():.6g}")
    if est.bank is not None:
        lines.append("")
        lines.append(format_convergence(d.get("algorithm1", {}), est.bank))
    if est.hyperparameters is not None:
        lines.append("")
        lines.append(format_hyperparameters(est.hyperparameters, est.layout, d.get("tuning", {})))
    return "\n".join(lines) + "\n"


def format_convergence(report: dict, bank: BasisBank) -> str:
    lines = [
        f"pole search      entry {report.get('entry')}, converged {report.get('converged')}, "
        f"{len(report.get('iterations', []))} iteration(s)"
    ]
    for it in report.get("iterations", []):
        params = "  ".join(
            f"m={m}: " + ",".join(f"{p:.6f}" for p in v) for m, v in it["params"].items()
        )
        change = "-" if it["change"] is None else f"{it['change']:.2e}"
        lines.append(f"  iter {it['iteration']:3d}  residual {it['residual']:.6g}  change {change}  {params}")
    for m, s in bank.specs.items():
        lines.append(f"  basis m={m}: {s.kind} B={s.size} params={list(s.params)}")
    return "\n".join(lines)


def format_hyperparameters(hp: Hyperparameters, layout: Layout, tuning: dict) -> str:
    lines = ["hyperparameters"]
    for m, b, lam in zip(layout.orders, hp.scales, hp.decays):
        lines.append(f"  m={m}  beta {b:.6g}  lambda " + " ".join(f"{v:.6f}" for v in lam))
    lines.append(f"  noise variance {hp.noise_var:.6g}")
    if tuning:
        lines.append(
            f"  marginal-likelihood cost {tuning.get('cost'):.6f} over {tuning.get('starts')} start(s), "
            f"seed {tuning.get('seed')}"
        )
    return "\n".join(lines)


def save_estimate(est, directory, config: dict, seeds: dict | None = None) -> Path:
    """Write ``est`` to ``directory``; returns the manifest path."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = []
    for k in est.model.kernels:
        rel = f"kernels/h{k.order}.csv"
        write_kernel_csv(out / rel, k)
        artifacts.append(rel)
    if est.bank is not None:
        for a in est.coefficients:
            rel = f"coefficients/a{a.order}.csv"
            write_kernel_csv(out / rel, a, index_name="i")
            artifacts.append(rel)
        write_json(
            out / "basis.json",
            {"length": est.bank.length, "orders": {m: s.to_dict() for m, s in est.bank.specs.items()}},
        )
        artifacts.append("basis.json")
    if est.hyperparameters is not None:
        write_json(out / "hyperparameters.json", est.hyperparameters.to_dict(est.layout))
        artifacts.append("hyperparameters.json")
    write_json(out / "diagnostics.json", est.diagnostics)
    (out / "summary.txt").write_text(format_summary(est))
    artifacts += ["diagnostics.json", "summary.txt"]
    manifest = {
        "artifact_version": ARTIFACT_VERSION,
        "package_version": __version__,
        "method": est.method,
        "layout": {"orders": list(est.layout.orders), "sizes": list(est.layout.sizes)},
        "config": config,
        "config_hash": config_hash(config),
        "seeds": seeds or {},
        "artifacts": artifacts,
    }
    write_json(out / "manifest.json", manifest)
    return out / "manifest.json"


def read_manifest(directory) -> dict:
    path = Path(directory) / "manifest.json"
    if not path.is_file():
        raise ManifestError(f"{directory}: no manifest.json; not an estimate directory")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None


def load_estimate(directory):
    """Rebuild a :class:`~volterra_id.estimators.ModelEstimate` from disk."""
    from .estimators import ModelEstimate

    directory = Path(directory)
    manifest = read_manifest(directory)
    layout = Layout(tuple(manifest["layout"]["orders"]), tuple(manifest["layout"]["sizes"]))
    kernels = tuple(read_kernel_csv(directory / f"kernels/h{m}.csv") for m in layout.orders)
    model = VolterraModel(kernels)
    bank = coefficients = hp = None
    if (directory / "basis.json").is_file():
        basis = json.loads((directory / "basis.json").read_text())
        specs = {int(m): BasisSpec.from_dict(s) for m, s in basis["orders"].items()}
        bank = BasisBank.realize(specs, length=int(basis["length"]))
        coefficients = tuple(
            read_kernel_csv(directory / f"coefficients/a{m}.csv", CoefficientKernel, index_name="i")
            for m in layout.orders
        )
        solution = np.concatenate([a.values for a in coefficients])
    else:
        solution = model.theta
    if (directory / "hyperparameters.json").is_file():
        hp = Hyperparameters.from_dict(json.loads((directory / "hyperparameters.json").read_text()))
    diagnostics = json.loads((directory / "diagnostics.json").read_text())
    return ModelEstimate(manifest["method"], model, solution, layout, bank, coefficients, hp, diagnostics)
