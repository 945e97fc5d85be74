import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lamedisp.evolution import (
    ResolutionError,
    WaveSample,
    box,
    bump,
    decay_observable,
    evolve_kernel,
    free_gaussian,
    gaussian,
    initial_data,
    split_step_domain,
    split_step_oracle,
)


def rel_sup(a, b):
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


@pytest.fixture(scope="module")
def kernel_vs_oracle(ctx):
    psi0 = gaussian(ctx.omega, 1.0)
    x = ctx.omega + 0.25 * np.arange(-48, 49)
    out = {}
    oracle = split_step_oracle(ctx, psi0, [1.0, 2.0], 0.01, dx=0.125)
    for t, ref in zip((1.0, 2.0), oracle):
        mine = evolve_kernel(ctx, psi0.sample(x), t, x_out=ref.x[np.abs(ref.x - ctx.omega) < 8])
        ref_vals = np.interp(mine.x, ref.x, ref.psi.real) + 1j * np.interp(mine.x, ref.x, ref.psi.imag)
        out[t] = (mine, ref, ref_vals)
    return out


# -- samples and catalog ----------------------------------------------------------


def test_wave_sample_validation():
    with pytest.raises(ValueError):
        WaveSample(np.array([0.0, 1.0, 3.0]), np.zeros(3), 0.0)
    with pytest.raises(ValueError):
        WaveSample(np.array([0.0, 1.0]), np.array([1.0, np.nan]), 0.0)
    with pytest.raises(ValueError):
        WaveSample(np.array([0.0, 1.0]), np.zeros(3), 0.0)


def test_norms():
    x = np.linspace(-10, 10, 2001)
    sample = gaussian(0.0, 1.0).sample(x)
    assert sample.l2_norm() == pytest.approx(np.pi**0.25, rel=1e-10)
    assert sample.l1_norm() == pytest.approx(np.sqrt(2 * np.pi), rel=1e-10)
    assert sample.sup_norm() == pytest.approx(1.0)


def test_catalog():
    x = np.linspace(-3, 3, 60001)
    assert np.trapezoid(box(0.0, 0.5)(x).real, x) == pytest.approx(1.0, abs=1e-3)
    b = bump(0.0, 1.0)(x)
    assert b[np.abs(x) >= 1].max() == 0 and b.real.max() == pytest.approx(np.exp(-1))
    assert initial_data("gaussian", 1.0, 2.0).width == 2.0
    with pytest.raises(ValueError):
        initial_data("triangle", 0.0, 1.0)


def test_domain_rule(ctx):
    assert split_step_domain(None, 1.0, 0.0) == 8.0
    assert split_step_domain(ctx, 1.0, 100.0) >= 8 * 200.0


# -- split-step oracle -------------------------------------------------------------


def test_free_mode_matches_exact_gaussian():
    out = split_step_oracle(None, gaussian(0.0, 1.0), 1.0, 0.01)
    assert np.max(np.abs(out.psi - free_gaussian(out.x, 1.0, 0.0, 1.0))) < 1e-6


def test_norm_conserved_over_many_steps(ctx):
    out = split_step_oracle(ctx, gaussian(ctx.omega, 1.0), 100.0, 0.01)
    assert out.meta["dt"] == pytest.approx(0.01)
    assert out.meta["l2_drift"] < 1e-8


def test_second_order_in_time(ctx):
    psi0 = gaussian(ctx.omega, 1.0)
    runs = [split_step_oracle(ctx, psi0, 2.0, dt, domain_halfwidth=40.0).psi for dt in (0.04, 0.02, 0.01)]
    coarse = np.max(np.abs(runs[0] - runs[1]))
    fine = np.max(np.abs(runs[1] - runs[2]))
    assert coarse / fine == pytest.approx(4.0, rel=0.1)


def test_multiple_output_times(ctx):
    psi0 = gaussian(ctx.omega, 1.0)
    both = split_step_oracle(ctx, psi0, [1.0, 2.0], 0.01, domain_halfwidth=40.0)
    alone = split_step_oracle(ctx, psi0, 2.0, 0.01, domain_halfwidth=40.0)
    assert [s.t for s in both] == [1.0, 2.0]
    assert np.max(np.abs(both[1].psi - alone.psi)) < 1e-12


def test_oracle_resolution_errors(ctx):
    with pytest.raises(ResolutionError):
        split_step_oracle(ctx, gaussian(0.0, 1.0), 1.0, 0.5)
    with pytest.raises(ResolutionError):
        split_step_oracle(ctx, box(0.0, 1.0), 1.0, 0.01)
    with pytest.raises(ResolutionError):
        split_step_oracle(None, gaussian(0.0, 1.0), 50.0, 0.01, domain_halfwidth=8.0, max_doublings=0)


def test_oracle_domain_doubling():
    out = split_step_oracle(None, gaussian(0.0, 1.0), 10.0, 0.01, domain_halfwidth=8.0)
    assert np.ptp(out.x) > 32.0
    assert np.max(np.abs(out.psi - free_gaussian(out.x, 10.0, 0.0, 1.0))) < 1e-6


# -- kernel evolution ----------------------------------------------------------------


def test_zero_data_evolves_to_zero(ctx):
    x = np.linspace(0, 2, 9)
    out = evolve_kernel(ctx, WaveSample(x, np.zeros(9, dtype=complex), 0.0), 2.0)
    assert np.all(out.psi == 0)


def test_kernel_evolution_rejects_short_times(ctx):
    x = np.linspace(0, 2, 9)
    with pytest.raises(ValueError):
        evolve_kernel(ctx, gaussian(0.0, 1.0).sample(x), 0.5)


@settings(max_examples=5, deadline=None)
@given(alpha=st.complex_numbers(min_magnitude=0.1, max_magnitude=5, allow_nan=False, allow_infinity=False))
def test_kernel_evolution_is_linear(ctx, alpha):
    x = ctx.omega + 0.5 * np.arange(-8, 9)
    sample = gaussian(ctx.omega, 1.0).sample(x)
    base = evolve_kernel(ctx, sample, 1.0, x_out=x[::4])
    scaled = evolve_kernel(ctx, WaveSample(x, alpha * sample.psi, 0.0), 1.0, x_out=x[::4])
    assert np.max(np.abs(scaled.psi - alpha * base.psi)) < 1e-12 * abs(alpha) * np.max(np.abs(base.psi))


@pytest.mark.parametrize("t", [1.0, 2.0])
def test_kernel_evolution_matches_split_step(kernel_vs_oracle, t):
    mine, ref, ref_vals = kernel_vs_oracle[t]
    assert rel_sup(mine.psi, ref_vals) < 1e-2
    assert ref.meta["l2_drift"] < 1e-8


# -- decay observable ------------------------------------------------------------------


@pytest.fixture(scope="module")
def gaussian_decay(ctx):
    return {
        method: decay_observable(ctx, gaussian(ctx.omega, 1.0), 2.0 ** np.arange(4, 10), method=method)
        for method in ("split_step", "kernel")
    }


def test_decay_methods_agree(gaussian_decay):
    a, b = gaussian_decay["split_step"], gaussian_decay["kernel"]
    assert abs(a.slope - b.slope) < 0.03
    assert np.max(np.abs(a.sup_norm - b.sup_norm) / b.sup_norm) < 1e-2


def test_decay_slope_generic_band(gaussian_decay):
    slope = gaussian_decay["split_step"].slope
    assert -0.40 <= slope <= -0.26


def test_decay_rows(gaussian_decay):
    rows = gaussian_decay["kernel"].rows()
    assert len(rows) == 6
    t, sup, scaled = rows[0]
    assert scaled == pytest.approx(sup * t ** (1 / 3))
