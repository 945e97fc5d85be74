"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest -v tests/test_acceptance.py``; the summary lines are printed
even when output capture is on.
"""

import math
import time

import numpy as np
import pytest

from lamedisp.cubic import cubic_analysis
from lamedisp.evolution import evolve_kernel, gaussian, potential, split_step_oracle
from lamedisp.kernel import KernelRequest, decay_fit, genericity_scan, kernel, optimality_probe
from lamedisp.spectrum import (
    eigenfunction,
    eigenfunction_derivative,
    quasimomentum,
    reflection_identity_check,
    wronskian,
)
from lamedisp.weierstrass import Lattice, build_context, log_sigma, wp, wp_prime, zeta
from conftest import cell_points
from oracles import brute_kernel

SEED = 20240611


def report(capsys, number, ok, detail, elapsed):
    with capsys.disabled():
        print(f"\n[criterion {number:2d}] {'PASS' if ok else 'FAIL'}  {detail}  ({elapsed:.2f} s)")


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def test_criterion_01_constants(capsys):
    with Timer() as clock:
        ctx = build_context(Lattice(5.5, 2.0))
        rep = cubic_analysis(ctx)
    r = rep.critical_points
    p = rep.critical_values
    target_r = np.array([0.0628169 + 0.195787j, 0.0628169 - 0.195787j])
    target_p = np.array([-0.0386656 - 0.0300201j, -0.0386656 + 0.0300201j])

    def pair_error(values, target):
        # conjugate pairs compared as sets, each component separately
        v = values[np.argsort(values.imag)]
        t = target[np.argsort(target.imag)]
        return float(max(np.max(np.abs(v.real - t.real)), np.max(np.abs(v.imag - t.imag))))

    errs = {
        "g2": abs(ctx.g2 - 0.507343),
        "g3": abs(ctx.g3 + 0.0695438),
        "r": pair_error(r, target_r),
        "P": pair_error(p, target_p),
    }
    ok = errs["g2"] <= 5e-6 and errs["g3"] <= 5e-7 and errs["r"] <= 1e-5 and errs["P"] <= 1e-5
    ok = ok and clock.elapsed < 1.0
    detail = "g2={:.7f} g3={:.8f} r+={:.7f} P(r+)={:.7f} max errs: ".format(ctx.g2, ctx.g3, r[0], p[0])
    detail += " ".join(f"{k}={v:.1e}" for k, v in errs.items())
    report(capsys, 1, ok, detail, clock.elapsed)
    assert ok


def test_criterion_02_discriminant_gap_constant(capsys):
    with Timer() as clock:
        ctx = build_context(Lattice(1.0, 5.0))
        value = ctx.disc_gap
    ok = abs(value - 0.966104) <= 1e-4
    report(capsys, 2, ok, f"g2/12 - (zeta(omega)/omega)^2 = {value:.6e}, target 0.966104", clock.elapsed)
    assert ok


def test_criterion_03_identities(capsys):
    rng = np.random.default_rng(SEED)
    with Timer() as clock:
        ctx = build_context(Lattice(5.5, 2.0))
        lat = ctx.lattice
        legendre = abs(ctx.eta1 * lat.omega3 - ctx.eta3 * lat.omega1 - 0.5j * math.pi)
        z = cell_points(ctx, 100, rng, margin=0.1)
        p, dp = wp(ctx, z), wp_prime(ctx, z)
        dif = float(np.max(np.abs(dp**2 - (4 * p**3 - ctx.g2 * p - ctx.g3)) / (1 + np.abs(p) ** 3)))
        quasi = 0.0
        for half, eta in ((lat.omega1, ctx.eta1), (lat.omega3, ctx.eta3)):
            quasi = max(quasi, float(np.max(np.abs(zeta(ctx, z + 2 * half) - zeta(ctx, z) - 2 * eta))))
            d = log_sigma(ctx, z + 2 * half) - log_sigma(ctx, z) - 1j * math.pi - 2 * eta * (z + half)
            quasi = max(quasi, float(np.max(np.abs(np.exp(d) - 1))))
        total = abs(ctx.e1 + ctx.e2 + ctx.e3)
        addition = 0.0
        u, v = z[:50], z[50:]
        for a, b in zip(u, v):
            if min(abs(a - b), abs(a + b)) < 0.1 * ctx.omega_prime or abs(wp(ctx, a) - wp(ctx, b)) < 1e-3:
                continue
            r = zeta(ctx, a + b) - zeta(ctx, a - b) - 2 * zeta(ctx, b) + wp_prime(ctx, b) / (wp(ctx, a) - wp(ctx, b))
            addition = max(addition, abs(r))
    ok = legendre < 1e-12 and dif < 1e-10 and quasi < 1e-10 and total < 1e-11 and addition < 1e-9
    ok = ok and clock.elapsed < 5.0
    detail = f"legendre={legendre:.1e} dif={dif:.1e} quasi={quasi:.1e} sum={total:.1e} addition={addition:.1e}"
    report(capsys, 3, ok, detail, clock.elapsed)
    assert ok


def test_criterion_04_spectral(capsys):
    rng = np.random.default_rng(SEED)
    h = 1e-3
    with Timer() as clock:
        ctx = build_context(Lattice(5.5, 2.0))
        om, omp = ctx.omega, ctx.omega_prime
        x = np.linspace(0.0, 4 * om, 41)
        v = potential(ctx, x)
        arcs = {
            "omega2": om + 1j * rng.uniform(0.02, 1.98, 20) * omp,
            "omega3": 1j * rng.uniform(0.02, 1.98, 20) * omp,
        }
        ode = wr = refl = 0.0
        for centre, params in arcs.items():
            for a in params:
                f = eigenfunction(ctx, a, x + h * np.arange(-2, 3)[:, None])
                second = (-f[0] + 16 * f[1] - 30 * f[2] + 16 * f[3] - f[4]) / (12 * h * h)
                energy = -complex(wp(ctx, a))
                scale = np.abs(second) + np.abs(v * f[2]) + abs(energy) * np.abs(f[2])
                ode = max(ode, float(np.max(np.abs(-second + (v - energy) * f[2]) / scale)))
                direct = eigenfunction(ctx, a, x) * eigenfunction_derivative(ctx, -a, x) - eigenfunction_derivative(
                    ctx, a, x
                ) * eigenfunction(ctx, -a, x)
                closed = wronskian(ctx, a).value
                wr = max(wr, float(np.max(np.abs(direct - closed)) / abs(closed)))
                xa, xb = rng.uniform(0, 4 * om, 2)
                refl = max(refl, reflection_identity_check(ctx, a, xa, xb, centre=centre).residual)
        k1 = abs(quasimomentum(ctx, ctx.lattice.omega1))
        k2 = abs(quasimomentum(ctx, ctx.lattice.omega2) - math.pi / (2 * om))
    ok = ode < 1e-6 and wr < 1e-8 and refl < 1e-8 and k1 < 1e-9 and k2 < 1e-9 and clock.elapsed < 30.0
    detail = f"ode={ode:.1e} wronskian={wr:.1e} reflection={refl:.1e} k(-e1)={k1:.1e} k(-e2)-pi/2w={k2:.1e}"
    report(capsys, 4, ok, detail, clock.elapsed)
    assert ok


def test_criterion_05_kernel_oracle(capsys, ctx):
    rng = np.random.default_rng(SEED)
    worst = {}
    with Timer() as clock:
        for t in (16.0, 64.0):
            x = rng.uniform(0, 4 * ctx.omega, 10)
            xp = rng.uniform(0, 4 * ctx.omega, 10)
            mine = np.array([kernel(ctx, KernelRequest(t, a, b)).K for a, b in zip(x, xp)])
            ref = brute_kernel(ctx, t, x, xp)
            worst[t] = float(np.max(np.abs(np.abs(mine) - np.abs(ref)) / np.abs(ref)))
    ok = max(worst.values()) < 1e-3 and clock.elapsed < 120.0
    detail = " ".join(f"t={t:g}: max rel |K| diff {w:.1e}" for t, w in worst.items())
    report(capsys, 5, ok, detail, clock.elapsed)
    assert ok


def test_criterion_06_decay_exponent(capsys, ctx):
    with Timer() as clock:
        fit = decay_fit(ctx, 2.0 ** np.arange(4, 11))
    ok = -0.38 <= fit.slope <= -0.28 and clock.elapsed <= 600.0
    sups = " ".join(f"{s:.4f}" for s in fit.sup_values)
    detail = f"slope={fit.slope:.4f} (target [-0.38, -0.28]) rms={fit.residual:.3f} sup|K|: {sups}"
    report(capsys, 6, ok, detail, clock.elapsed)
    assert ok


def test_criterion_07_optimality(capsys, ctx):
    with Timer() as clock:
        probe = optimality_probe(ctx, 2.0 ** np.arange(6, 13))
    seq = probe.scaled_max
    ratio = float(seq.min() / seq.max())
    ok = ratio > 0.25
    detail = f"t^(1/3) max_x|K| along tau0={probe.tau0:.6f}: " + " ".join(f"{v:.3f}" for v in seq)
    detail += f"; min/max={ratio:.3f} (need > 0.25)"
    report(capsys, 7, ok, detail, clock.elapsed)
    assert ok


def test_criterion_08_evolution(capsys, ctx):
    psi0 = gaussian(ctx.omega, 1.0)
    x = ctx.omega + 0.25 * np.arange(-48, 49)
    errors = []
    with Timer() as clock:
        oracle = split_step_oracle(ctx, psi0, [1.0, 2.0], 0.01, dx=0.125)
        for t, ref in zip((1.0, 2.0), oracle):
            mine = evolve_kernel(ctx, psi0.sample(x), t, x_out=ref.x[np.abs(ref.x - ctx.omega) < 8])
            ref_vals = np.interp(mine.x, ref.x, ref.psi.real) + 1j * np.interp(mine.x, ref.x, ref.psi.imag)
            errors.append(float(np.max(np.abs(mine.psi - ref_vals)) / np.max(np.abs(ref_vals))))
    drift = max(r.meta["l2_drift"] for r in oracle)
    ok = max(errors) < 1e-2 and drift < 1e-8
    detail = f"rel Linf t=1: {errors[0]:.1e} t=2: {errors[1]:.1e} L2 drift {drift:.1e}"
    report(capsys, 8, ok, detail, clock.elapsed)
    assert ok


def test_criterion_09_free_control(capsys, ctx):
    with Timer() as clock:
        fit = decay_fit(ctx, free=True)
    ok = abs(fit.slope + 0.5) <= 0.02
    report(capsys, 9, ok, f"free slope={fit.slope:.6f} (target -0.5 +- 0.02)", clock.elapsed)
    assert ok


def test_criterion_10_genericity(capsys):
    grid = np.linspace(0.5, 8.0, 20)
    with Timer() as clock:
        rows = genericity_scan(grid, grid)
    bad = [(r["omega"], r["omega_prime"], r["failed"]) for r in rows if not r["structural_ok"]]
    nongeneric = [(r["omega"], r["omega_prime"]) for r in rows if not r["generic"]]
    ok = len(rows) == 400 and not bad
    detail = f"{len(rows)} cells, structural failures {bad or 'none'}, non-generic cells {nongeneric or 'none'}"
    report(capsys, 10, ok, detail, clock.elapsed)
    assert ok
