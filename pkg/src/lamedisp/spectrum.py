"""Band structure and Floquet data of the one-gap Lame operator.

The operator is ``H = -d^2/dx^2 + 2 p(x + i omega')``.  Spectral points are
labelled by a parameter ``a`` on two vertical segments of the period cell:

* band 1, ``a = omega + i s`` with ``s`` in ``[0, 2 omega']`` and energy in
  ``[-e1, -e2]``;
* band 2, ``a = i u`` with ``u`` in ``(0, 2 omega')`` and energy in
  ``[-e3, inf)``.

The energy is ``E = -p(a)``.  On band 2 the coordinate ``lam`` with
``lam**2 = e3 - p(a)`` removes the double pole at ``a = 0``; it is positive on
``(0, i omega')`` and odd under ``a -> 2 i omega' - a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .weierstrass import (
    EllipticContext,
    PoleProximityError,
    ToleranceError,
    log_sigma,
    wp,
    wp_derivatives,
    wp_offset,
    zeta,
)

__all__ = [
    "BAND1",
    "BAND2",
    "BandStructure",
    "SpectralPoint",
    "WronskianValue",
    "ReflectionResidual",
    "band_edges",
    "cubic_roots_real",
    "a_from_energy",
    "a_from_lambda",
    "lambda_of_a",
    "lambda_jacobian",
    "quasimomentum",
    "quasimomentum_derivative",
    "log_eigenfunction",
    "eigenfunction",
    "eigenfunction_derivative",
    "bloch_factor",
    "wronskian",
    "spectral_weight",
    "reflection_identity_check",
    "discriminant",
    "discriminant_convention",
    "gap_point",
]

BAND1 = "band1"
BAND2 = "band2"

# below this |lam| the Jacobian da/dlam is replaced by its limit value
JACOBIAN_PATCH = 1e-7


@dataclass(frozen=True)
class BandStructure:
    """Spectrum ``[-e1, -e2]`` and ``[-e3, inf)`` with the gap between them."""

    e1: float
    e2: float
    e3: float

    @property
    def band1(self) -> tuple:
        return (-self.e1, -self.e2)

    @property
    def band2(self) -> tuple:
        return (-self.e3, math.inf)

    @property
    def gap(self) -> tuple:
        return (-self.e2, -self.e3)

    def contains(self, energy: float) -> bool:
        return self.band1[0] <= energy <= self.band1[1] or energy >= self.band2[0]


@dataclass(frozen=True)
class SpectralPoint:
    """A spectral parameter ``a`` with its energy and, on band 2, ``lam``."""

    a: complex
    E: float
    lam: float
    band: str


class WronskianValue(NamedTuple):
    value: complex
    band_edge: bool


class ReflectionResidual(NamedTuple):
    residual: float
    skipped: bool


def cubic_roots_real(g2: float, g3: float) -> np.ndarray:
    """Real roots of ``4x^3 - g2 x - g3`` in decreasing order (trigonometric form)."""
    p = g2 / 12.0
    if p <= 0:
        raise ValueError("cubic has fewer than three real roots")
    r = math.sqrt(p)
    arg = max(-1.0, min(1.0, g3 / (8.0 * r**3)))
    phi = math.acos(arg) / 3.0
    roots = [2.0 * r * math.cos(phi - 2.0 * math.pi * j / 3.0) for j in range(3)]
    return np.array(sorted(roots, reverse=True))


def band_edges(ctx: EllipticContext) -> BandStructure:
    """Band edges from ``p`` at the half-periods, cross-checked against the cubic.

    Raises
    ------
    ToleranceError
        If the half-period values disagree with the roots of ``4x^3 - g2 x - g3``.
    """
    lat = ctx.lattice
    direct = [float(np.real(wp(ctx, w))) for w in (lat.omega1, lat.omega2, lat.omega3)]
    roots = cubic_roots_real(ctx.g2, ctx.g3)
    scale = max(1.0, float(np.max(np.abs(roots))))
    # a nearly coincident root pair has condition number ~ scale/gap, capped
    # by the square-root loss of the trigonometric form
    eps = np.finfo(float).eps
    closest = min(ctx.gaps) / scale
    slack = 10.0 * min(math.sqrt(eps), eps / max(closest, 1e-300))
    mismatch = float(np.max(np.abs(np.array(direct) - roots))) / scale
    if mismatch > max(10.0 * ctx.tol, slack):
        raise ToleranceError(f"half-period values disagree with cubic roots by {mismatch:.3e}")
    return BandStructure(ctx.e1, ctx.e2, ctx.e3)


# -- Floquet data -------------------------------------------------------------


def quasimomentum(ctx: EllipticContext, a):
    """``k(a) = i (zeta(a) - a zeta(omega)/omega)``; real on the spectrum."""
    a = np.asarray(a, dtype=complex)
    value = 1j * (np.asarray(zeta(ctx, a)) - a * ctx.zeta_ratio)
    return value[()] if value.ndim == 0 else value


def quasimomentum_derivative(ctx: EllipticContext, a):
    """``dk/da = -i (p(a) + zeta(omega)/omega)``."""
    return -1j * (np.asarray(wp(ctx, a)) + ctx.zeta_ratio)


def log_eigenfunction(ctx: EllipticContext, a, x):
    """Logarithm of the Floquet solution ``f_a(x)`` (broadcasts over ``a`` and ``x``)."""
    a = np.asarray(a, dtype=complex)
    x = np.asarray(x, dtype=float)
    shift = x + 1j * ctx.omega_prime
    _guard_parameter(ctx, a)
    return (
        np.asarray(log_sigma(ctx, shift + a))
        - np.asarray(log_sigma(ctx, shift))
        - np.asarray(zeta(ctx, a)) * x
        - ctx.eta3 * a
    )


def _guard_parameter(ctx: EllipticContext, a):
    dist = np.abs(np.asarray(a) - 0.0)
    top = np.abs(np.asarray(a) - 2j * ctx.omega_prime)
    if np.any(np.minimum(dist, top) < ctx.pole_guard):
        raise PoleProximityError("spectral parameter too close to a lattice point")


def eigenfunction(ctx: EllipticContext, a, x):
    """Floquet solution ``f_a(x) = sigma(x+i omega'+a)/sigma(x+i omega') exp(-zeta(a) x - eta3 a)``."""
    return np.exp(log_eigenfunction(ctx, a, x))


def eigenfunction_derivative(ctx: EllipticContext, a, x):
    """``f_a'(x)`` from the logarithmic derivative ``zeta(x+w3+a) - zeta(x+w3) - zeta(a)``."""
    a = np.asarray(a, dtype=complex)
    x = np.asarray(x, dtype=float)
    shift = x + 1j * ctx.omega_prime
    log_der = np.asarray(zeta(ctx, shift + a)) - np.asarray(zeta(ctx, shift)) - np.asarray(zeta(ctx, a))
    return eigenfunction(ctx, a, x) * log_der


def bloch_factor(ctx: EllipticContext, a, x):
    """Periodic part ``m_a(x) = f_a(x) exp(-i k(a) x)``, period ``2 omega``."""
    a = np.asarray(a, dtype=complex)
    x = np.asarray(x, dtype=float)
    k = np.asarray(quasimomentum(ctx, a))
    return np.exp(log_eigenfunction(ctx, a, x) - 1j * k * x)


def _log_sigma_ratio(ctx: EllipticContext, a):
    w3 = 1j * ctx.omega_prime
    return (
        np.asarray(log_sigma(ctx, w3 + a))
        + np.asarray(log_sigma(ctx, w3 - a))
        - 2.0 * np.asarray(log_sigma(ctx, w3))
    )


def wronskian(ctx: EllipticContext, a) -> WronskianValue:
    """Closed-form Wronskian ``f_a f_{-a}' - f_a' f_{-a}``.

    ``W = sigma(w3+a) sigma(w3-a) / sigma(w3)**2 * p'(a) / (e3 - p(a))``.
    At half-periods the value is an exact zero and ``band_edge`` is set.
    """
    a = complex(a)
    lat = ctx.lattice
    scale = min(lat.omega, lat.omega_prime)
    for edge in (lat.omega1, lat.omega2, lat.omega3):
        if abs(a - edge) < 1e-12 * scale:
            return WronskianValue(0j, True)
    _guard_parameter(ctx, a)
    dp = complex(wp_derivatives(ctx, a)[1])
    denom = -complex(wp_offset(ctx, a, 3))
    value = np.exp(_log_sigma_ratio(ctx, a)) * dp / denom
    return WronskianValue(complex(value), False)


def spectral_weight(ctx: EllipticContext, a):
    """Smooth density ``-p'(a)/W(a)`` of the spectral measure in ``da``.

    Equal to ``-sigma(w3)**2 (e3 - p(a)) / (sigma(w3+a) sigma(w3-a))`` and
    evaluated as ``exp(log sigma(w3+a) - log sigma(w3-a) - 2 log sigma(a) - 2 eta3 a)``,
    which stays accurate through ``a = w3`` where numerator and denominator
    both vanish.
    """
    a = np.asarray(a, dtype=complex)
    _guard_parameter(ctx, a)
    w3 = 1j * ctx.omega_prime
    with np.errstate(divide="ignore", invalid="ignore"):
        expo = (
            np.asarray(log_sigma(ctx, w3 + a))
            - np.asarray(log_sigma(ctx, w3 - a))
            - 2.0 * np.asarray(log_sigma(ctx, a))
            - 2.0 * ctx.eta3 * a
        )
        value = np.exp(expo)
    near = np.abs(a - w3) < ctx.pole_guard
    if np.any(near):
        # limit at w3: sigma''-type 0/0, approached from a nearby point
        probe = w3 + ctx.pole_guard * 10.0j
        value = np.where(near, spectral_weight(ctx, probe), value)
    return value[()] if value.ndim == 0 else value


def reflection_identity_check(ctx: EllipticContext, a, x: float, x_prime: float, centre: str = "omega2"):
    """Residual of the reflection identity pairing ``a`` with ``b = 2 w - a``.

    ``|f_a(x') f_{-a}(x) / W(a) + f_b(x) f_{-b}(x') / W(b)|`` with ``w = omega_2``
    (band 1) or ``w = omega_3`` (band 2).  At the centre itself the identity
    degenerates and the result is flagged as skipped.
    """
    lat = ctx.lattice
    centre_value = {"omega2": lat.omega2, "omega3": lat.omega3}[centre]
    a = complex(a)
    b = 2.0 * centre_value - a
    if abs(a - centre_value) < 1e-9 * min(lat.omega, lat.omega_prime):
        return ReflectionResidual(0.0, True)
    wa = wronskian(ctx, a).value
    wb = wronskian(ctx, b).value
    first = complex(eigenfunction(ctx, a, x_prime) * eigenfunction(ctx, -a, x)) / wa
    second = complex(eigenfunction(ctx, b, x) * eigenfunction(ctx, -b, x_prime)) / wb
    scale = max(abs(first), abs(second), 1e-300)
    return ReflectionResidual(abs(first + second) / scale, False)


# -- lam coordinate on band 2 -------------------------------------------------


def lambda_of_a(ctx: EllipticContext, a):
    """``lam(a)`` on band 2, the analytic branch of ``sqrt(e3 - p(a))`` positive on ``(0, w3)``.

    ``lam = i exp(-eta3 a) sigma(a + w3) / (sigma(w3) sigma(a))``.
    """
    a = np.asarray(a, dtype=complex)
    w3 = 1j * ctx.omega_prime
    expo = (
        np.asarray(log_sigma(ctx, a + w3))
        - np.asarray(log_sigma(ctx, w3))
        - np.asarray(log_sigma(ctx, a))
        - ctx.eta3 * a
    )
    value = (1j * np.exp(expo)).real
    return value[()] if value.ndim == 0 else value


def lambda_jacobian(ctx: EllipticContext, a, lam):
    """``da/dlam = 2 lam / (-p'(a))``, patched with its limit near ``lam = 0``.

    The limit is ``-i sqrt(2 / p''(w3))``; its modulus ``sqrt(2/p''(w3))`` is
    the familiar L'Hopital value.
    """
    a = np.asarray(a, dtype=complex)
    lam = np.asarray(lam, dtype=float)
    near = np.abs(lam) < JACOBIAN_PATCH
    safe_a = np.where(near, 0.5j * ctx.omega_prime, a)
    dp = np.asarray(wp_derivatives(ctx, safe_a)[1])
    jac = np.where(near, _jacobian_at_zero(ctx), 2.0 * lam / (-dp))
    return jac[()] if jac.ndim == 0 else jac


def _jacobian_at_zero(ctx: EllipticContext) -> complex:
    second = 6.0 * ctx.e3**2 - 0.5 * ctx.g2
    return -1j * math.sqrt(2.0 / second)


def _solve_monotone(residual, derivative, lo, hi, guess, tol, maxiter=100):
    """Vectorized safeguarded Newton for a monotone scalar equation on brackets.

    ``residual(x, idx)`` and ``derivative(x, idx)`` receive the flat indices
    ``idx`` of the entries being iterated; ``residual`` must change sign on
    ``[lo, hi]`` elementwise.  Newton steps
    leaving the bracket fall back to bisection.  Only unconverged entries are
    iterated.
    """
    lo = np.array(lo, dtype=float).ravel()
    hi = np.array(hi, dtype=float).ravel()
    shape = np.shape(guess)
    x = np.clip(np.array(guess, dtype=float).ravel(), lo, hi)
    active = np.arange(x.size)
    sign_lo = np.sign(residual(lo, active))
    for _ in range(maxiter):
        xa, la, ha = x[active], lo[active], hi[active]
        r = residual(xa, active)
        same = np.sign(r) == sign_lo[active]
        la = np.where(same, xa, la)
        ha = np.where(same, ha, xa)
        d = derivative(xa, active)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = xa - r / d
        bad = ~np.isfinite(step) | (step <= la) | (step >= ha)
        new = np.where(r == 0, xa, np.where(bad, 0.5 * (la + ha), step))
        scale = np.maximum(1e-300, np.abs(new))
        done = (r == 0) | (np.abs(new - xa) <= tol * scale) | (ha - la <= 4.0 * tol * scale)
        x[active], lo[active], hi[active] = new, la, ha
        active = active[~done]
        if active.size == 0:
            return x.reshape(shape)
    raise ToleranceError("monotone inversion did not converge")


def a_from_lambda(ctx: EllipticContext, lam):
    """Invert ``lam(a)`` on band 2, returning ``a = i u`` with ``u`` in ``(0, 2 omega')``."""
    lam = np.asarray(lam, dtype=float)
    omp = ctx.omega_prime
    mag = np.abs(lam)
    # u(|lam|) on (0, omega'], then reflect for negative lam
    table_u = np.linspace(1e-3 * omp, omp, 2049)
    table_lam = lambda_of_a(ctx, 1j * table_u)
    guess = np.where(
        mag > table_lam[0],
        1.0 / np.maximum(mag, 1e-300),
        np.interp(mag, table_lam[::-1], table_u[::-1]),
    )

    flat_mag = mag.ravel()

    def residual(u, idx):
        return lambda_of_a(ctx, 1j * u) - flat_mag[idx]

    def derivative(u, idx):
        lam_u = lambda_of_a(ctx, 1j * u)
        dp = np.asarray(wp_derivatives(ctx, 1j * u)[1])
        # dlam/du = i dlam/da = i (-p'(a)) / (2 lam)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.real(1j * (-dp) / (2.0 * lam_u))

    # lam ~ 1/u near the pole, so u = 5e-4 omega' lies below every root with small |lam|
    lo = np.full(mag.shape, 5e-4 * omp)
    hi = np.full(mag.shape, omp)
    big = mag > 1.0 / (1e-3 * omp)
    lo = np.where(big, 0.25 / np.maximum(mag, 1e-300), lo)
    hi = np.where(big, np.minimum(4.0 / np.maximum(mag, 1e-300), omp), hi)
    u = _solve_monotone(residual, derivative, lo, hi, guess, 1e-15)
    u = np.where(lam < 0, 2.0 * omp - u, u)
    a = 1j * u
    return a[()] if a.ndim == 0 else a


def a_from_energy(ctx: EllipticContext, E: float, band: str) -> SpectralPoint:
    """Spectral parameter on the canonical arc of ``band`` with ``-p(a) = E``.

    Band 1 uses ``a = omega + i s``, ``s`` in ``[0, omega']``; band 2 uses
    ``a = i u``, ``u`` in ``(0, omega']``.

    Raises
    ------
    ValueError
        If ``E`` is outside the band.
    """
    E = float(E)
    om, omp = ctx.omega, ctx.omega_prime
    if band == BAND1:
        lo_e, hi_e = -ctx.e1, -ctx.e2
        if not (lo_e - 10 * ctx.tol * abs(lo_e) <= E <= hi_e + 10 * ctx.tol * abs(hi_e)):
            raise ValueError(f"E={E} outside band 1 [{lo_e}, {hi_e}]")
        width = ctx.gaps[0]
        target = min(max(-E - ctx.e2, 0.0), width)
        if target >= width:
            s = 0.0
        elif target <= 0.0:
            s = omp
        else:
            # p(omega + i s) - e2 decreases from e1 - e2 to 0 on [0, omega']
            def residual(s, idx):
                return np.real(wp_offset(ctx, om + 1j * s, 2)) - target

            def derivative(s, idx):
                return np.real(1j * wp_derivatives(ctx, om + 1j * s)[1])

            s = float(_solve_monotone(residual, derivative, 0.0, omp, 0.5 * omp, 1e-15))
        a = complex(om, s)
        return SpectralPoint(a, E, math.nan, BAND1)
    if band == BAND2:
        if E < -ctx.e3 - 10 * ctx.tol * max(1.0, abs(ctx.e3)):
            raise ValueError(f"E={E} below band 2 edge {-ctx.e3}")
        lam = math.sqrt(max(E + ctx.e3, 0.0))
        a = 1j * omp if lam == 0.0 else complex(a_from_lambda(ctx, lam))
        return SpectralPoint(a, E, lam, BAND2)
    raise ValueError(f"unknown band tag {band!r}")


def gap_point(ctx: EllipticContext, E: float) -> complex:
    """Parameter ``a = s + i omega'`` with ``-p(a) = E`` for ``E`` in the gap."""
    om, omp = ctx.omega, ctx.omega_prime
    if not (-ctx.e2 < E < -ctx.e3):
        raise ValueError("energy not in the gap")
    target = -E - ctx.e3

    def residual(s, idx):
        return np.real(wp_offset(ctx, s + 1j * omp, 3)) - target

    def derivative(s, idx):
        return np.real(wp_derivatives(ctx, s + 1j * omp)[1])

    s = float(_solve_monotone(residual, derivative, 0.0, om, 0.5 * om, 1e-15))
    return complex(s, omp)


# -- discriminant -------------------------------------------------------------

CONVENTION_FULL = "2cos(2*omega*k)"
CONVENTION_PLAIN = "2cos(k)"


def discriminant_convention(ctx: EllipticContext) -> str:
    """Pick the argument convention for ``Delta`` that puts ``Delta(-e2) = -2``."""
    k_edge = complex(quasimomentum(ctx, ctx.lattice.omega2)).real
    if abs(2.0 * math.cos(2.0 * ctx.omega * k_edge) + 2.0) < 1e-9:
        return CONVENTION_FULL
    if abs(2.0 * math.cos(k_edge) + 2.0) < 1e-9:
        return CONVENTION_PLAIN
    raise ToleranceError("neither discriminant convention meets the band-edge condition")


def discriminant(ctx: EllipticContext, E: float, convention: str | None = None) -> float:
    """Floquet discriminant ``Delta(E)`` for ``E >= -e1``.

    On the spectrum ``|Delta| <= 2``; in the gap the quasimomentum is continued
    along ``[omega_2, omega_3]`` and ``Delta <= -2``.
    """
    convention = convention or discriminant_convention(ctx)
    if E < -ctx.e1 - 10 * ctx.tol * abs(ctx.e1):
        raise ValueError("energies below -e1 are outside the treated range")
    if E <= -ctx.e2:
        a = a_from_energy(ctx, E, BAND1).a
    elif E < -ctx.e3:
        a = gap_point(ctx, E)
    else:
        a = a_from_energy(ctx, E, BAND2).a
    k = complex(quasimomentum(ctx, a))
    arg = 2.0 * ctx.omega * k if convention == CONVENTION_FULL else k
    return float((2.0 * np.cos(arg)).real)
