import math

import numpy as np
import pytest

from lamedisp.kernel import (
    KernelRequest,
    ScanRangeError,
    critical_velocity,
    decay_fit,
    fold_derivatives,
    free_kernel,
    genericity_scan,
    kernel,
    kernel_matrix,
    kernel_values,
    lambda_chain,
    loglog_fit,
    phase,
    phase_imaginary_residual,
    spectral_nodes,
    sup_scan,
    window_half_width,
    worker_count,
)
from lamedisp.spectrum import a_from_lambda
from lamedisp.weierstrass import wp_derivatives
from oracles import brute_kernel


@pytest.fixture(scope="module")
def pair_values(ctx):
    rng = np.random.default_rng(7)
    x = rng.uniform(0, 4 * ctx.omega, 4)
    xp = rng.uniform(0, 4 * ctx.omega, 4)
    values = np.array([kernel(ctx, KernelRequest(16.0, a, b)).K for a, b in zip(x, xp)])
    return x, xp, values


def test_request_validation():
    with pytest.raises(ValueError):
        KernelRequest(0.5, 0.0, 0.0)
    assert KernelRequest(4.0, 3.0, 1.0).tau == 0.5


def test_matches_brute_force_quadrature(ctx, pair_values):
    x, xp, values = pair_values
    ref = brute_kernel(ctx, 16.0, x, xp)
    assert np.max(np.abs(values - ref) / np.abs(ref)) < 1e-6


def test_error_estimate_is_small_and_honest(ctx):
    req = KernelRequest(16.0, 1.3, 0.4)
    value = kernel(ctx, req)
    ref = brute_kernel(ctx, 16.0, 1.3, 0.4)[0]
    assert value.error_estimate < 1e-5
    assert abs(value.K - ref) < max(10 * value.error_estimate, 1e-9)
    assert value.K == value.K1 + value.K2


def test_transpose_symmetry(ctx, pair_values):
    x, xp, values = pair_values
    swapped = np.array([kernel(ctx, KernelRequest(16.0, b, a)).K for a, b in zip(x, xp)])
    assert np.max(np.abs(swapped - values)) < 1e-6 * np.max(np.abs(values))


def test_period_shift_invariance(ctx, pair_values):
    x, xp, values = pair_values
    shift = 2 * ctx.omega
    moved = np.array([kernel(ctx, KernelRequest(16.0, a + shift, b + shift)).K for a, b in zip(x, xp)])
    assert np.max(np.abs(moved - values)) < 1e-6 * np.max(np.abs(values))


def test_kernel_matrix_agrees_with_pointwise(ctx):
    x_out = np.array([0.0, 1.5, 3.0])
    x_in = np.array([0.5, 2.0])
    mat = kernel_matrix(ctx, 16.0, x_out, x_in)
    for i, a in enumerate(x_out):
        for j, b in enumerate(x_in):
            assert abs(mat[i, j] - kernel(ctx, KernelRequest(16.0, a, b)).K) < 1e-6


def test_kernel_values_without_tails_differs_by_tail(ctx):
    nodes = spectral_nodes(ctx, 16.0, (0.05, 0.05))
    with_tails = kernel_values(ctx, 16.0, 1.8, 1.0, nodes=nodes)
    without = kernel_values(ctx, 16.0, 1.8, 1.0, nodes=nodes, tails=False)
    assert with_tails[0] == without[0]
    assert 0 < abs(with_tails[1] - without[1])
    assert with_tails[2][0] < 1e-5


def test_free_kernel_propagates_gaussian():
    from lamedisp.evolution import free_gaussian

    t = 3.0
    xs = np.linspace(-40, 40, 8001)
    psi0 = np.exp(-(xs**2) / 2)
    out = np.array([np.trapezoid(free_kernel(t, x, xs) * psi0, xs) for x in (-2.0, 0.0, 1.5)])
    assert np.max(np.abs(out - free_gaussian(np.array([-2.0, 0.0, 1.5]), t, 0.0, 1.0))) < 1e-8


# -- phase ---------------------------------------------------------------------


@pytest.mark.parametrize("tau", [0.0, -0.0096, 0.4])
def test_phase_derivatives_consistent(ctx, tau):
    ph = phase(ctx, tau)
    assert ph.band1.consistency_residual() < 1e-5
    assert ph.band2.consistency_residual(step=1e-4) < 1e-6


def test_phase_is_real_on_spectrum(any_ctx):
    assert phase_imaginary_residual(any_ctx, 0.3) < 1e-10


def test_lambda_chain_against_finite_differences(ctx):
    h = 1e-3
    for lam in (-2.0, -1e-4, 0.0, 3e-3, 0.7, 5.0):
        pts = lam + h * np.arange(-2, 3)
        a = a_from_lambda(ctx, pts)
        a1 = lambda_chain(ctx, np.array([lam]), wp_derivatives(ctx, a_from_lambda(ctx, np.array([lam]))))
        fd1 = (-a[4] + 8 * a[3] - 8 * a[1] + a[0]) / (12 * h)
        fd2 = (-a[4] + 16 * a[3] - 30 * a[2] + 16 * a[1] - a[0]) / (12 * h * h)
        assert abs(a1[0][0] - fd1) < 1e-8 * abs(fd1)
        assert abs(a1[1][0] - fd2) < 1e-4 * max(1.0, abs(fd2))


def test_critical_velocity_is_a_fold(ctx):
    a0, tau0, tau0_imag = critical_velocity(ctx)
    assert abs(a0.real - ctx.omega) < 1e-15 and 0 < a0.imag < ctx.omega_prime
    assert tau0 == pytest.approx(-0.009608002, abs=1e-8)
    assert abs(tau0_imag) < 1e-12
    d1, d2, d3 = fold_derivatives(ctx, a0, tau0)
    assert abs(d1) < 1e-12 and abs(d2) < 1e-12 and abs(d3) > 1e-4


def test_window_half_width_rule(ctx):
    assert window_half_width(ctx, (0.0, 0.0)) == 8.0
    assert window_half_width(ctx, (-5.0, 5.0)) >= 20.0


def test_node_weights_integrate_spectral_measure(ctx):
    nodes = spectral_nodes(ctx, 1.0, (0.0, 0.0))
    sl = nodes.band(1)
    assert nodes.size > nodes.n_band1 > 0
    assert np.all(np.abs(nodes.a[sl].real - ctx.omega) < 1e-15)
    assert np.all(np.abs(nodes.a[nodes.band(2)].real) < 1e-15)


# -- scans and fits --------------------------------------------------------------


def test_loglog_fit_exact_power_law():
    t = 2.0 ** np.arange(4, 11)
    slope, intercept, residual = loglog_fit(t, 3.0 * t**-0.4)
    assert slope == pytest.approx(-0.4, abs=1e-12)
    assert intercept == pytest.approx(math.log(3.0))
    assert residual < 1e-12


@pytest.mark.parametrize("bad", [[16, 32, 64, 128], [8, 16, 32, 64, 128], [16, 32, 48, 64, 80]])
def test_decay_fit_rejects_bad_time_lists(ctx, bad):
    with pytest.raises(ValueError):
        decay_fit(ctx, bad)


def test_free_decay_slope(ctx):
    fit = decay_fit(ctx, free=True)
    assert fit.slope == pytest.approx(-0.5, abs=1e-9)
    assert fit.free and len(fit.rows()) == 7


def test_sup_scan_small_grid(ctx):
    scan = sup_scan(ctx, 16.0, x_grid=16, tau_grid=9)
    assert scan.table.shape == (scan.taus.size, 16)
    assert scan.sup == pytest.approx(float(scan.table.max()))
    assert not scan.underresolved
    direct = kernel(ctx, KernelRequest(16.0, scan.argmax_x, scan.argmax_x - scan.argmax_tau * 16.0)).K
    assert abs(abs(direct) - scan.sup) < 1e-6 * scan.sup
    # snapped velocities keep x - tau t on the grid
    steps = scan.taus * 16.0 / (2 * ctx.omega / 16)
    assert np.allclose(steps, np.rint(steps))


def test_sup_scan_table_entries_match_pointwise(ctx):
    scan = sup_scan(ctx, 16.0, x_grid=8, tau_grid=5, refine_fold=False, check=False)
    j, i = 1, 3
    tau = scan.taus[j]
    x = scan.x[i]
    assert abs(abs(kernel(ctx, KernelRequest(16.0, x, x - tau * 16.0)).K) - scan.table[j, i]) < 1e-6


def test_sup_scan_requires_critical_velocity(ctx):
    with pytest.raises(ScanRangeError):
        sup_scan(ctx, 16.0, x_grid=8, tau_grid=[0.0, 0.001])


def test_genericity_scan_small_grid():
    rows = genericity_scan([0.5, 2.0, 8.0], [0.5, 3.0])
    assert len(rows) == 6
    assert all(r["structural_ok"] for r in rows)
    assert {"omega", "omega_prime", "generic", "corollary_holds", "failed"} <= set(rows[0])


def test_worker_count(monkeypatch):
    monkeypatch.setenv("LAME_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("LAME_THREADS", "0")
    with pytest.raises(ValueError):
        worker_count()
    monkeypatch.delenv("LAME_THREADS")
    assert worker_count() >= 1


def test_threaded_evaluation_is_deterministic(ctx, monkeypatch):
    monkeypatch.setenv("LAME_THREADS", "1")
    one = kernel(ctx, KernelRequest(16.0, 2.0, 0.5)).K
    monkeypatch.setenv("LAME_THREADS", "4")
    four = kernel(ctx, KernelRequest(16.0, 2.0, 0.5)).K
    assert one == four
