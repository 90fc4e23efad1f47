import numpy as np
import pytest

from volterra_id.basis import BasisSpec, kautz_ir, laguerre_ir
from volterra_id.poles import (
    InsufficientDataError,
    PoleSearchConfig,
    algorithm1,
    optimal_kautz_params,
    optimal_laguerre_pole,
    truncation_cost,
)
from volterra_id.signals import WienerSystem, gaussian_input, preset, true_wiener_kernels
from volterra_id.volterra import SymmetricKernel

from .oracles import kautz_product_form, laguerre_product_form


def first_order(h):
    return SymmetricKernel(1, len(h), h)


def second_order(g1, g2=None):
    g2 = g1 if g2 is None else g2
    full = 0.5 * (np.outer(g1, g2) + np.outer(g2, g1))
    return SymmetricKernel.from_full(full)


def windowed_residual(H, F):
    """Least-squares residual of a full kernel against products of truncated functions."""
    n = H.shape[0]
    F = F[:, :n]
    cols = F.T if H.ndim == 1 else np.stack([np.outer(f, g).ravel() for f in F for g in F], axis=1)
    coef = np.linalg.lstsq(cols, H.ravel(), rcond=None)[0]
    return float(np.sum((H.ravel() - cols @ coef) ** 2))


def test_cost_zero_inside_span():
    h = 0.8 * laguerre_ir(0.5, 1, 80) - 0.3 * laguerre_ir(0.5, 3, 80)
    assert truncation_cost(first_order(h), BasisSpec.laguerre(0.5, 3)) <= 1e-12 * np.sum(h**2)
    k = second_order(laguerre_ir(0.5, 1, 60), laguerre_ir(0.5, 2, 60))
    assert truncation_cost(k, BasisSpec.laguerre(0.5, 2)) <= 1e-12


def test_cost_of_zero_kernel():
    assert truncation_cost(SymmetricKernel.zeros(2, 5), BasisSpec.laguerre(0.3, 2)) == 0.0


@pytest.mark.parametrize("a", [0.1, 0.5, 0.9])
def test_cost_one_pole_kernel_matches_oracle(a):
    n, B = 40, 3
    h = 0.7 ** np.arange(n)
    F = np.array([laguerre_product_form(a, i, n) for i in range(1, B + 1)])
    got = truncation_cost(first_order(h), BasisSpec.laguerre(a, B))
    assert got == pytest.approx(windowed_residual(h, F), rel=1e-8, abs=1e-12)


def test_cost_second_order_matches_oracle():
    n = 25
    g = 0.6 ** np.arange(n) * np.cos(0.4 * np.arange(n))
    k = second_order(g)
    F = np.array([kautz_product_form(0.2, -0.5, i, n) for i in range(1, 5)])
    got = truncation_cost(k, BasisSpec.kautz(0.2, -0.5, 4))
    assert got == pytest.approx(windowed_residual(k.to_full(), F), rel=1e-8, abs=1e-12)


def test_cost_equals_energy_deficit_when_functions_decay():
    # functions die out well inside the window: residual == ||h||^2 - ||alpha||^2
    n = 80
    h = 0.7 ** np.arange(n)
    F = np.array([laguerre_product_form(0.2, i, n) for i in range(1, 4)])
    alpha = F @ h
    got = truncation_cost(first_order(h), BasisSpec.laguerre(0.2, 3))
    assert got == pytest.approx(np.sum(h**2) - np.sum(alpha**2), rel=1e-9)


def test_laguerre_pole_self_consistent():
    h = laguerre_ir(0.6, 2, 60)
    res = optimal_laguerre_pole(first_order(h), 2)
    assert res.params[0] == pytest.approx(0.6, abs=1e-3)
    assert res.cost <= 1e-10


def test_delay_kernel_gives_zero_pole():
    h = np.zeros(10)
    h[1] = 1.0
    res = optimal_laguerre_pole(first_order(h), 3)
    assert res.params == (0.0,)
    assert res.cost == pytest.approx(0.0, abs=1e-14)


def test_laguerre_search_beats_dense_grid():
    n = 40
    t = np.arange(n)
    h = 0.75**t * (1 + 0.5 * np.sin(0.3 * t))
    k = first_order(h)
    res = optimal_laguerre_pole(k, 3)
    grid = np.linspace(-0.99, 0.99, 2000)
    costs = np.array([truncation_cost(k, BasisSpec.laguerre(a, 3)) for a in grid])
    assert res.cost <= costs.min() + 1e-12
    assert abs(res.params[0] - grid[np.argmin(costs)]) <= 2 * (grid[1] - grid[0])
    assert res.cost <= res.grid_cost


def test_kautz_recovers_pair():
    h = 1.3 * kautz_ir(0.3, -0.4, 1, 60) - 0.4 * kautz_ir(0.3, -0.4, 2, 60)
    res = optimal_kautz_params(first_order(h), 2)
    assert res.params[0] == pytest.approx(0.3, abs=0.02)
    assert res.params[1] == pytest.approx(-0.4, abs=0.02)
    assert res.cost <= 1e-6 * np.sum(h**2)


def test_kautz_beats_laguerre_on_oscillation():
    t = np.arange(50)
    k = first_order(0.8**t * np.cos(1.2 * t))
    assert optimal_kautz_params(k, 4).cost < optimal_laguerre_pole(k, 4).cost


def test_kautz_tie_break_prefers_origin():
    # every (b, 0) spans a pure delay; ties go to the smallest |b|
    h = np.zeros(12)
    h[1] = 1.0
    res = optimal_kautz_params(first_order(h), 2)
    assert res.params == (0.0, 0.0)


def test_kautz_odd_size_and_zero_kernel_rejected():
    with pytest.raises(ValueError):
        optimal_kautz_params(first_order(np.ones(5)), 3)
    with pytest.raises(ValueError, match="all-zero"):
        optimal_laguerre_pole(SymmetricKernel.zeros(1, 5), 2)


@pytest.fixture(scope="module")
def one_pole_data():
    sys = WienerSystem((1.0, -0.6), (1.0, 0.5))
    u = gaussian_input(2000, 11)
    return u, sys.noise_free_output(u)


MEM = (60, 40)


def test_algorithm1_finds_true_laguerre_pole(one_pole_data):
    u, y = one_pole_data
    bank, alphas, report = algorithm1(u, y, (3, 3), MEM, ("laguerre", "laguerre"))
    assert report.entry == "time-domain-ls"
    assert report.converged and report.n_iter <= 5
    for m in (1, 2):
        assert bank.specs[m].params[0] == pytest.approx(0.6, abs=0.01)
    assert report.iterations[-1]["residual"] <= 1e-12 * np.sum(y**2)


def test_algorithm1_initial_guess_path(one_pole_data):
    u, y = one_pole_data
    cfg = PoleSearchConfig(initial={1: (0.6,), 2: (0.6,)})
    bank, _, report = algorithm1(u, y, (3, 3), MEM, ("laguerre", "laguerre"), cfg)
    assert report.entry == "initial-guess"
    assert report.iterations[0]["truncation_cost"] == {1: None, 2: None}
    assert report.converged
    ref, _, _ = algorithm1(u, y, (3, 3), MEM, ("laguerre", "laguerre"))
    for m in (1, 2):
        assert bank.specs[m].params[0] == pytest.approx(ref.specs[m].params[0], abs=0.01)


def test_rebuilt_kernels_keep_their_basis(one_pole_data):
    # kernels rebuilt from basis coefficients lie in that basis's span, so the
    # pole selection that follows returns the same parameters
    u, y = one_pole_data
    cfg = PoleSearchConfig(initial={1: (0.2,), 2: (0.3,)})
    bank, _, report = algorithm1(u, y, (3, 3), MEM, ("laguerre", "laguerre"), cfg)
    assert report.converged and report.n_iter == 2
    assert bank.specs[1].params[0] == pytest.approx(0.2, abs=1e-3)
    assert bank.specs[2].params[0] == pytest.approx(0.3, abs=1e-3)
    assert all(c <= 1e-8 for c in report.iterations[1]["truncation_cost"].values())


def test_algorithm1_single_iteration_never_converges(one_pole_data):
    u, y = one_pole_data
    _, _, report = algorithm1(u, y, (3, 3), MEM, ("laguerre", "laguerre"), PoleSearchConfig(max_iter=1))
    assert report.n_iter == 1 and not report.converged
    assert report.iterations[0]["change"] is None


def test_algorithm1_fixed_point():
    sys = preset("Sys2a")
    u = gaussian_input(1000, 3)
    y = sys.noise_free_output(u)
    bank, _, report = algorithm1(u, y, (6, 6), (30, 30), ("laguerre", "laguerre"))
    assert report.converged
    start = {m: bank.specs[m].params for m in (1, 2)}
    again, _, rep2 = algorithm1(
        u, y, (6, 6), (30, 30), ("laguerre", "laguerre"), PoleSearchConfig(initial=start)
    )
    assert rep2.converged and rep2.n_iter == 2
    for m in (1, 2):
        assert again.specs[m].params[0] == pytest.approx(start[m][0], abs=1e-3)


def test_true_kernel_pole_of_sys2a_in_range():
    # sanity link between the search and the preset: both branch poles have modulus ~0.913
    k1 = true_wiener_kernels(preset("Sys2a"), 200)[0]
    a = optimal_laguerre_pole(k1, 6).params[0]
    assert 0.7 < a < 0.95


def test_algorithm1_insufficient_data():
    u = gaussian_input(20, 0)
    with pytest.raises(InsufficientDataError):
        algorithm1(u, u, (10, 10), (5, 5), ("laguerre", "laguerre"))
    u = gaussian_input(100, 0)
    with pytest.raises(InsufficientDataError, match="initial"):
        algorithm1(u, u, (3, 3), (30, 30), ("laguerre", "laguerre"))


def test_algorithm1_argument_checks():
    u = gaussian_input(100, 0)
    with pytest.raises(ValueError):
        algorithm1(u, u, (3,), (10, 10), ("laguerre",))
    with pytest.raises(ValueError, match="no tunable"):
        algorithm1(u, u, (3,), (10,), ("fir",))
