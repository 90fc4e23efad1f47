"""Acceptance criteria 1-10, one test each.

Every test records ``(passed, detail)`` in ``conftest.ACCEPTANCE``; the
terminal summary prints one line per criterion. Run directly with
``python -m pytest tests/test_acceptance.py`` or ``python tests/test_acceptance.py``.
Criteria 7-10 run seeded Monte Carlo campaigns, take several minutes and
carry the ``slow`` marker (``-m 'not slow'`` skips them).
"""
import time

import numpy as np
import pytest

from volterra_id.basis import BasisBank, BasisSpec, basis_responses, evaluate_coefficients, reconstruct_kernel
from volterra_id.campaign import CampaignConfig, run_campaign
from volterra_id.poles import algorithm1
from volterra_id.regularization import (
    Hyperparameters,
    block_penalty,
    direction_basis,
    kernel_penalty,
    ls_solve,
    rels_solve,
    tc_matrix,
)
from volterra_id.signals import WienerSystem, gaussian_input, preset
from volterra_id.volterra import CoefficientKernel, Layout, VolterraModel, build_regressor, evaluate_volterra, n_unique

from .conftest import ACCEPTANCE
from .oracles import penalty_literal, posterior_mean, tc_literal

# fixed before the first campaign run; never tuned
BASE_SEED = 0

CAMPAIGNS = {
    7: dict(system="Sys2a", methods=("LBF", "ReLBF"), n=1000, realizations=20, memory=[30, 30], basis=[10, 10]),
    8: dict(system="Sys2b", methods=("ReKBF", "ReLBF"), n=1000, realizations=20, memory=[30, 30], basis=[10, 10]),
    9: dict(system="Sys3", methods=("LBF", "ReLBF"), n=2000, realizations=5, memory=[15, 15, 15], basis=[6, 6, 6]),
}
_FIRST_RUN = {}


def record(k, ok, detail):
    ACCEPTANCE[k] = (bool(ok), detail)
    assert ok, detail


def run(k):
    c = CAMPAIGNS[k]
    cfg = CampaignConfig(
        preset(c["system"]), c["methods"], c["n"], (20.0,), c["realizations"], BASE_SEED,
        {"memory": c["memory"], "basis_size": c["basis"]},
    )
    t0 = time.perf_counter()
    res = run_campaign(cfg)
    return res, time.perf_counter() - t0


def first_run(k):
    if k not in _FIRST_RUN:
        _FIRST_RUN[k] = run(k)
    return _FIRST_RUN[k]


def test_criterion_01_exact_recovery():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    layout = Layout.full((4, 4))
    theta = rng.standard_normal(layout.dim)
    u = rng.standard_normal(3 * layout.dim)
    est = ls_solve(build_regressor(u, layout), build_regressor(u, layout) @ theta)
    err = float(np.max(np.abs(est - theta) / np.abs(theta)))
    secs = time.perf_counter() - t0
    record(1, err <= 1e-8 and secs < 5, f"max relative error {err:.2e}, {secs:.2f} s")


def test_criterion_02_orthonormality():
    t0 = time.perf_counter()
    specs = [BasisSpec.laguerre(a, 10) for a in (-0.9, 0.0, 0.5, 0.95)]
    specs += [BasisSpec.kautz(b, c, 10) for b in (-0.7, -0.2, 0.2, 0.7) for c in (-0.7, -0.2, 0.2, 0.7)]
    worst = 0.0
    for spec in specs:
        F = basis_responses(spec, 2000)
        worst = max(worst, float(np.max(np.abs(F @ F.T - np.eye(spec.size)))))
    secs = time.perf_counter() - t0
    record(2, worst <= 1e-8 and secs < 5, f"{len(specs)} bases, max |G - I| {worst:.2e}, {secs:.2f} s")


def test_criterion_03_model_form_identity():
    rng = np.random.default_rng(3)
    u = rng.standard_normal(200)
    worst = 0.0
    for kind in ("laguerre", "kautz"):
        for B in (2, 4):
            params = {1: (0.5,), 2: (-0.4,), 3: (0.3,)} if kind == "laguerre" else {1: (0.4, 0.2), 2: (-0.3, 0.1), 3: (0.2, -0.3)}
            bank = BasisBank.realize({m: BasisSpec(kind, B, params[m]) for m in (1, 2, 3)}, memory=200)
            alphas = [CoefficientKernel(m, B, rng.standard_normal(n_unique(m, B))) for m in (1, 2, 3)]
            kernels = tuple(reconstruct_kernel(a, bank, bank.decay_length(a.order)) for a in alphas)
            y_time = evaluate_volterra(VolterraModel(kernels), u)
            y_coef = evaluate_coefficients(alphas, bank, u)
            worst = max(worst, float(np.max(np.abs(y_time - y_coef))))
    record(3, worst <= 1e-8, f"m <= 3, B in (2, 4), Laguerre and Kautz: max difference {worst:.2e}")


def test_criterion_04_posterior_mean():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(20):
        layout = Layout.full((int(rng.integers(1, 5)), int(rng.integers(1, 3))))
        u = rng.standard_normal(25)
        Phi = build_regressor(u, layout)
        Y = Phi @ rng.standard_normal(layout.dim) + 0.1 * rng.standard_normal(25)
        hp = Hyperparameters(
            tuple(rng.uniform(0.1, 3.0) for _ in layout.orders),
            tuple(tuple(rng.uniform(0.1, 0.95, m)) for m in layout.orders),
            rng.uniform(0.01, 1.0),
        )
        P = block_penalty(hp, layout)
        diff = rels_solve(Phi, Y, P, hp.noise_var) - posterior_mean(Phi, Y, P, hp.noise_var)
        worst = max(worst, float(np.max(np.abs(diff))))
    record(4, worst <= 1e-8, f"20 instances, dim <= 8: max difference {worst:.2e}")


def test_criterion_05_penalty():
    rng = np.random.default_rng(5)
    worst, tc_exact = 0.0, True
    for _ in range(10):
        beta, lams = rng.uniform(0.1, 5.0), tuple(rng.uniform(0.05, 0.99, 2))
        got = kernel_penalty(2, 3, beta, lams)
        want = penalty_literal(2, 3, beta, lams, direction_basis(2).tolist())
        worst = max(worst, float(np.max(np.abs(got - want))))
        lam = float(rng.uniform(0.05, 0.99))
        tc_exact &= np.array_equal(kernel_penalty(1, 6, beta, (lam,)), tc_matrix(beta, lam, range(6)))
        tc_exact &= np.allclose(tc_matrix(beta, lam, range(6)), tc_literal(beta, lam, list(range(6))), rtol=1e-15, atol=0)
    record(5, worst <= 1e-12 and tc_exact, f"m=2 n=3 max difference {worst:.2e}; m=1 equals TC exactly: {tc_exact}")


def test_criterion_06_pole_recovery():
    lag = WienerSystem((1.0, -0.6), (1.0, 0.5))
    u = gaussian_input(2000, 6)
    bank, _, rep = algorithm1(u, lag.noise_free_output(u), (3, 3), (60, 40), ("laguerre", "laguerre"))
    a = [bank.specs[m].params[0] for m in (1, 2)]
    lag_ok = rep.converged and rep.n_iter <= 5 and all(abs(x - 0.6) < 0.01 for x in a)
    # q^-1 / (1 - 0.42 q^-1 + 0.4 q^-2) is spanned by the Kautz pair (b, c) = (0.3, -0.4)
    kz = WienerSystem((1.0, -0.42, 0.4), (1.0, 0.5))
    bank, _, krep = algorithm1(u, kz.noise_free_output(u), (2, 2), (60, 40), ("kautz", "kautz"))
    bc = [bank.specs[m].params for m in (1, 2)]
    kz_ok = krep.converged and all(abs(b - 0.3) <= 0.02 and abs(c + 0.4) <= 0.02 for b, c in bc)
    detail = (
        f"Laguerre a = {a[0]:.4f}, {a[1]:.4f} in {rep.n_iter} iterations; "
        f"Kautz (b, c) = ({bc[0][0]:.3f}, {bc[0][1]:.3f}), ({bc[1][0]:.3f}, {bc[1][1]:.3f})"
    )
    record(6, lag_ok and kz_ok, detail)


def _ordering(k, better, worse, strict=True):
    res, secs = first_run(k)
    mb, mw = res.median(better), res.median(worse)
    n_ok = {m: res.nrms(m).size for m in (better, worse)}
    complete = all(v == CAMPAIGNS[k]["realizations"] for v in n_ok.values())
    ok = complete and (mb < mw if strict else mb <= mw)
    rel = "<" if strict else "<="
    return res, secs, ok, f"median NRMS {better} {mb:.5f} {rel} {worse} {mw:.5f} (seed {BASE_SEED}, {secs:.0f} s)"


@pytest.mark.slow
def test_criterion_07_sys2a():
    _, secs, ok, detail = _ordering(7, "ReLBF", "LBF")
    record(7, ok and secs < 15 * 60, detail)


@pytest.mark.slow
def test_criterion_08_sys2b():
    _, _, ok, detail = _ordering(8, "ReKBF", "ReLBF")
    record(8, ok, detail)


@pytest.mark.slow
def test_criterion_09_sys3():
    res, _, ok, detail = _ordering(9, "ReLBF", "LBF", strict=False)
    slowest = max(c["seconds"] for c in res.cells if c["method"] == "ReLBF")
    record(9, ok and slowest < 600, f"{detail}; slowest ReLBF {slowest:.1f} s")


@pytest.mark.slow
def test_criterion_10_determinism():
    mismatches = []
    for k in (7, 8, 9):
        a, _ = first_run(k)
        b, _ = run(k)
        key = lambda c: (c["method"], c["snr_db"], c["realization"])  # noqa: E731
        va = {key(c): c["nrms"] for c in a.cells}
        vb = {key(c): c["nrms"] for c in b.cells}
        if va.keys() != vb.keys() or any(va[x] != vb[x] for x in va):
            mismatches.append(k)
    n = sum(len(first_run(k)[0].cells) for k in (7, 8, 9))
    record(10, not mismatches, f"{n} NRMS values rerun, bit-exact mismatches in criteria {mismatches or 'none'}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
