"""Weierstrass elliptic functions for rectangular lattices.

The lattice has half-periods ``omega_1 = omega`` (real), ``omega_3 = i*omega_prime``
and ``omega_2 = omega_1 + omega_3``.  Values are computed from the Jacobi
theta series of the lattice whose nome is small: if ``omega_prime < omega``
the lattice is first rotated by a quarter turn, ``z -> -i z``, which maps a
rectangular lattice onto another rectangular lattice with the two
half-periods exchanged.  With that choice the nome never exceeds
``exp(-pi)`` and eight theta terms reach machine precision everywhere in the
fundamental cell.

All evaluators accept scalars or arrays and broadcast like numpy ufuncs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Lattice",
    "EllipticContext",
    "LatticeError",
    "PoleProximityError",
    "ToleranceError",
    "build_context",
    "reduce_to_cell",
    "wp",
    "wp_prime",
    "wp_second",
    "wp_third",
    "wp_fourth",
    "wp_derivatives",
    "wp_offset",
    "zeta",
    "log_sigma",
    "sigma",
    "sigma_scaled",
]

DEFAULT_TOL = 1e-12
_POLE_GUARD = 1e-8
_MAX_SERIES_TERMS = 2000


class LatticeError(ValueError):
    """Raised for an invalid (non-rectangular or degenerate) lattice."""


class PoleProximityError(ValueError):
    """Raised when an argument lies too close to a lattice point."""


class ToleranceError(RuntimeError):
    """Raised when an accuracy target cannot be met."""


@dataclass(frozen=True)
class Lattice:
    """Rectangular period lattice with half-periods ``omega`` and ``i*omega_prime``."""

    omega: float
    omega_prime: float

    def __post_init__(self):
        for name in ("omega", "omega_prime"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise LatticeError(f"{name} must be a positive finite real, got {value!r}")
        object.__setattr__(self, "omega", float(self.omega))
        object.__setattr__(self, "omega_prime", float(self.omega_prime))

    @property
    def omega1(self) -> complex:
        return complex(self.omega, 0.0)

    @property
    def omega2(self) -> complex:
        return complex(self.omega, self.omega_prime)

    @property
    def omega3(self) -> complex:
        return complex(0.0, self.omega_prime)

    def scaled(self, factor: float) -> "Lattice":
        return Lattice(self.omega * factor, self.omega_prime * factor)


def _divisor_sum(n: int, power: int) -> int:
    total = 0
    for d in range(1, int(math.isqrt(n)) + 1):
        if n % d == 0:
            total += d**power
            other = n // d
            if other != d:
                total += other**power
    return total


class _ThetaFrame:
    """Theta-series evaluator for a rectangular lattice with ``w_real <= w_imag``.

    Works in the frame where the real half-period is the short one, so the
    nome ``q = exp(-pi*w_imag/w_real)`` is at most ``exp(-pi)``.
    """

    def __init__(self, w_real: float, w_imag: float):
        self.w = w_real
        self.wi = w_imag
        self.log_q = -math.pi * w_imag / w_real
        self.q = math.exp(self.log_q)
        self.c = math.pi / (2.0 * w_real)
        # enough terms for the extreme corners of the cell, where the n-th term
        # scales like q**(n**2 - 1/4)
        self.n_terms = int(math.ceil(math.sqrt(40.0 / -self.log_q))) + 3
        n = np.arange(self.n_terms)
        odd = 2 * n + 1
        self._odd = odd.astype(float)
        self._coef = 2.0 * (-1.0) ** n * np.exp((n + 0.5) ** 2 * self.log_q)
        self._q_series()

    def _q_series(self):
        q = self.q
        q2 = q * q
        s = self.c**2
        tiny = 1e-18
        # theta constants; theta3**4 - 1 and E2 - 1 are summed without the
        # leading 1 so that nearly-cancelling differences stay accurate
        t2 = 0.0
        t3 = 0.0
        t4 = 0.0
        for n in range(0, _MAX_SERIES_TERMS):
            term = q ** (n * n + n)
            t2 += term
            if n >= 1:
                qn = q ** (n * n)
                t3 += 2.0 * qn
                t4 += 2.0 * (-1.0) ** n * qn
            if term < tiny and n >= 2:
                break
        theta2_4 = 16.0 * q * t2**4
        theta3_4m1 = t3 * (4.0 + t3 * (6.0 + t3 * (4.0 + t3)))
        theta4_4 = (1.0 + t4) ** 4
        e2m1 = 0.0
        e4m1 = 0.0
        e6m1 = 0.0
        ramanujan = 0.0
        converged = False
        for n in range(1, _MAX_SERIES_TERMS):
            qn = q2**n
            s1 = _divisor_sum(n, 1)
            e2m1 += -24.0 * s1 * qn
            e4m1 += 240.0 * _divisor_sum(n, 3) * qn
            e6m1 += -504.0 * _divisor_sum(n, 5) * qn
            ramanujan += 288.0 * n * s1 * qn
            if 504.0 * n**6 * qn < tiny:
                converged = True
                break
        if not converged:
            raise ToleranceError("q-series for the lattice invariants did not converge")
        self.theta2_4 = theta2_4
        self.theta3_4 = 1.0 + theta3_4m1
        self.theta4_4 = theta4_4
        self.e2_eis = 1.0 + e2m1
        self.g2 = (4.0 / 3.0) * s**2 * (1.0 + e4m1)
        self.g3 = (8.0 / 27.0) * s**3 * (1.0 + e6m1)
        # e_j and their pairwise gaps from theta constants
        self.e1 = (s / 3.0) * (self.theta3_4 + theta4_4)
        self.e2 = (s / 3.0) * (theta2_4 - theta4_4)
        self.e3 = -(s / 3.0) * (theta2_4 + self.theta3_4)
        self.gap12 = s * theta4_4
        self.gap13 = s * self.theta3_4
        self.gap23 = s * theta2_4
        # eta_1 / w and the offset e3 + eta_1/w, both cancellation free
        self.zeta_ratio = (s / 3.0) * self.e2_eis
        self.eta1 = self.zeta_ratio * self.w
        self.offset3 = (s / 3.0) * (e2m1 - theta3_4m1 - theta2_4)
        # g2/12 - (eta_1/w)**2 through Ramanujan's identity for E4 - E2**2
        self.disc_gap = (s**2 / 9.0) * ramanujan

    # -- series -------------------------------------------------------------
    def reduce(self, z):
        z = np.asarray(z, dtype=complex)
        m = np.rint(z.real / (2.0 * self.w))
        n = np.rint(z.imag / (2.0 * self.wi))
        z_red = z - 2.0 * m * self.w - 2.0j * n * self.wi
        return z_red, m.astype(np.int64), n.astype(np.int64)

    def theta(self, v, order: int):
        """theta_1 and its first ``order`` derivatives at ``v`` (lists of arrays)."""
        v = np.asarray(v, dtype=complex)
        up = np.exp(1j * v)
        down = 1.0 / up
        up2 = up * up
        down2 = down * down
        plus = up
        minus = down
        out = [np.zeros_like(v) for _ in range(order + 1)]
        for coef, k in zip(self._coef, self._odd):
            sin_k = (plus - minus) * (-0.5j)
            cos_k = (plus + minus) * 0.5
            out[0] += coef * sin_k
            if order >= 1:
                out[1] += (coef * k) * cos_k
            if order >= 2:
                out[2] -= (coef * k * k) * sin_k
            if order >= 3:
                out[3] -= (coef * k**3) * cos_k
            plus = plus * up2
            minus = minus * down2
        return out

    def log_derivatives(self, z_red, order: int):
        """Derivatives of log theta_1(c z) in v = c z, up to ``order`` (1..3)."""
        th = self.theta(self.c * z_red, order)
        inv = 1.0 / th[0]
        lead = th[1] * inv
        out = [lead]
        if order >= 2:
            r2 = th[2] * inv
            out.append(r2 - lead * lead)
        if order >= 3:
            r3 = th[3] * inv
            out.append(r3 - 3.0 * r2 * lead + 2.0 * lead**3)
        return out

    def wp_pair(self, z_red):
        _, d1, d2 = self.log_derivatives(z_red, 3)
        c = self.c
        return -self.zeta_ratio - c * c * d1, -(c**3) * d2

    def zeta_at_imaginary_half_period(self):
        z = 1j * self.wi
        (lead,) = self.log_derivatives(np.asarray(z), 1)
        return self.zeta_ratio * z + self.c * lead

    def wp(self, z_red):
        _, d1 = self.log_derivatives(z_red, 2)
        return -self.zeta_ratio - self.c**2 * d1

    def zeta(self, z_red, m, n, eta3):
        (lead,) = self.log_derivatives(z_red, 1)
        base = self.zeta_ratio * z_red + self.c * lead
        return base + 2.0 * m * self.eta1 + 2.0 * n * eta3

    def log_sigma(self, z_red, m, n, eta3):
        th = self.theta(self.c * z_red, 1)
        theta1_prime0 = float(np.sum(self._coef * self._odd))
        base = (
            -math.log(self.c)
            + 0.5 * self.zeta_ratio * z_red * z_red
            + np.log(th[0])
            - math.log(theta1_prime0)
        )
        shift = m * self.w + 1j * n * self.wi
        eta = m * self.eta1 + n * eta3
        sign = 1j * math.pi * np.mod(m + n + m * n, 2)
        return base + 2.0 * eta * (z_red + shift) + sign


LOG_I = 0.5j * math.pi


@dataclass(frozen=True)
class EllipticContext:
    """Lattice constants with cached evaluation data.

    Attributes
    ----------
    lattice : Lattice
    g2, g3 : float
        Lattice invariants.
    e1, e2, e3 : float
        Half-period values, ``e3 < e2 < e1``.
    eta1 : float
        ``zeta(omega_1)``.
    eta3 : complex
        ``zeta(omega_3)``, purely imaginary.
    tol : float
        Accuracy target the context was validated against.
    gaps : tuple of float
        ``(e1 - e2, e1 - e3, e2 - e3)`` computed without cancellation.
    offsets : tuple of float
        ``(e1 + Z, e2 + Z, e3 + Z)`` with ``Z = eta1/omega``, cancellation free.
    disc_gap : float
        ``g2/12 - Z**2`` computed without cancellation.
    """

    lattice: Lattice
    g2: float
    g3: float
    e1: float
    e2: float
    e3: float
    eta1: float
    eta3: complex
    tol: float
    gaps: tuple
    offsets: tuple
    disc_gap: float
    _frame: _ThetaFrame = field(repr=False, compare=False)
    _rotated: bool = field(repr=False, compare=False)

    @property
    def omega(self) -> float:
        return self.lattice.omega

    @property
    def omega_prime(self) -> float:
        return self.lattice.omega_prime

    @property
    def zeta_ratio(self) -> float:
        """``zeta(omega)/omega``."""
        return self.eta1 / self.lattice.omega

    @property
    def pole_guard(self) -> float:
        return _POLE_GUARD * min(self.lattice.omega, self.lattice.omega_prime)

    @property
    def discriminant(self) -> float:
        return self.g2**3 - 27.0 * self.g3**2

    def as_row(self) -> dict:
        return {
            "omega": self.omega,
            "omega_prime": self.omega_prime,
            "g2": self.g2,
            "g3": self.g3,
            "e1": self.e1,
            "e2": self.e2,
            "e3": self.e3,
            "eta1": self.eta1,
            "eta3_imag": self.eta3.imag,
        }


def _to_frame(ctx: EllipticContext, z):
    z = np.asarray(z, dtype=complex)
    return -1j * z if ctx._rotated else z


def _reduced(ctx: EllipticContext, z, guard: bool = True):
    zf = _to_frame(ctx, z)
    z_red, m, n = ctx._frame.reduce(zf)
    if guard and np.any(np.abs(z_red) < ctx.pole_guard):
        raise PoleProximityError("argument within the pole guard of a lattice point")
    return z_red, m, n


def _frame_eta3(ctx: EllipticContext) -> complex:
    # eta_3 of the working frame
    return -1j * ctx.eta1 if ctx._rotated else ctx.eta3


def _out(value):
    return value[()] if isinstance(value, np.ndarray) and value.ndim == 0 else value


def build_context(lattice: Lattice, tol: float = DEFAULT_TOL) -> EllipticContext:
    """Construct the lattice constants and validate them against ``tol``.

    Parameters
    ----------
    lattice : Lattice
    tol : float, optional
        Accuracy target in ``[1e-15, 1e-6]``.

    Raises
    ------
    LatticeError
        For an invalid lattice.
    ToleranceError
        When the internal cross-checks miss ``tol``.
    """
    if not isinstance(lattice, Lattice):
        lattice = Lattice(*lattice)
    if not (1e-15 <= tol <= 1e-6):
        raise ValueError(f"tol must lie in [1e-15, 1e-6], got {tol!r}")
    omega, omega_p = lattice.omega, lattice.omega_prime
    rotated = omega_p < omega
    frame = _ThetaFrame(omega_p, omega) if rotated else _ThetaFrame(omega, omega_p)
    frame_eta3 = complex(frame.zeta_at_imaginary_half_period())

    h = frame.offset3
    if rotated:
        g3 = -frame.g3
        e_vals = (-frame.e3, -frame.e2, -frame.e1)
        gaps = (frame.gap23, frame.gap13, frame.gap12)
        eta1 = float((1j * frame_eta3).real)
        eta3 = complex(0.0, -frame.eta1)
        p = math.pi / (2.0 * omega * omega_p)
        offsets = (p - h, p - (h + frame.gap23), p - (h + frame.gap13))
        disc_gap = frame.disc_gap + p * (2.0 * frame.zeta_ratio - p)
    else:
        g3 = frame.g3
        e_vals = (frame.e1, frame.e2, frame.e3)
        gaps = (frame.gap12, frame.gap13, frame.gap23)
        eta1 = frame.eta1
        eta3 = complex(0.0, frame_eta3.imag)
        offsets = (h + frame.gap13, h + frame.gap23, h)
        disc_gap = frame.disc_gap
    if omega == omega_p:
        # the quarter-turn symmetry of a square lattice forces g3 = e2 = 0
        g3 = 0.0
        e_vals = (e_vals[0], 0.0, e_vals[2])
    ctx = EllipticContext(
        lattice, frame.g2, g3, *e_vals, eta1, eta3, tol, gaps, offsets, disc_gap, frame, rotated
    )

    scale = max(abs(e) for e in e_vals)
    e_direct = [float(np.real(wp(ctx, w))) for w in (lattice.omega1, lattice.omega2, lattice.omega3)]
    zr = eta1 / omega
    residuals = {
        "half-period values": max(abs(a - b) for a, b in zip(e_direct, e_vals)) / scale,
        "e1+e2+e3": abs(sum(e_vals)) / scale,
        "g2 vs e_j": abs(frame.g2 - 2.0 * sum(e * e for e in e_vals)) / scale**2,
        "g3 vs e_j": abs(g3 - 4.0 * e_vals[0] * e_vals[1] * e_vals[2]) / scale**3,
        "eta3 real part": abs(frame_eta3.real) / max(1.0, abs(frame_eta3)),
        "Legendre": abs(eta1 * 1j * omega_p - eta3 * omega - 0.5j * math.pi),
        "offsets": abs((offsets[2] - e_vals[2]) - zr) / max(1.0, abs(zr)),
    }
    limit = 10.0 * max(tol, 1e-14)
    for name, value in residuals.items():
        if not value <= limit:
            raise ToleranceError(f"context check '{name}' failed: residual {value:.3e}")
    if not all(g > 0 for g in gaps):
        raise LatticeError("half-period values are not distinct")
    return ctx


def reduce_to_cell(ctx: EllipticContext, z):
    """Split ``z = z_red + 2 m omega_1 + 2 n omega_3`` with ``z_red`` in the centred cell.

    Returns
    -------
    z_red : complex or ndarray
    m, n : int or ndarray
    """
    z = np.asarray(z, dtype=complex)
    om, omp = ctx.lattice.omega, ctx.lattice.omega_prime
    m = np.rint(z.real / (2.0 * om)).astype(np.int64)
    n = np.rint(z.imag / (2.0 * omp)).astype(np.int64)
    z_red = z - 2.0 * m * om - 2.0j * n * omp
    return _out(z_red), _out(m), _out(n)


def wp(ctx: EllipticContext, z):
    """Weierstrass ``p`` function."""
    z_red, _, _ = _reduced(ctx, z)
    value = ctx._frame.wp(z_red)
    return _out(-value if ctx._rotated else value)


def wp_derivatives(ctx: EllipticContext, z):
    """Return ``p`` and its first four derivatives at ``z``.

    Derivatives beyond the first follow from ``p'' = 6 p**2 - g2/2``.
    """
    z_red, _, _ = _reduced(ctx, z)
    p, dp = ctx._frame.wp_pair(z_red)
    if ctx._rotated:
        p, dp = -p, 1j * dp
    d2 = 6.0 * p * p - 0.5 * ctx.g2
    d3 = 12.0 * p * dp
    d4 = 12.0 * dp * dp + 12.0 * p * d2
    return tuple(_out(v) for v in (p, dp, d2, d3, d4))


def wp_offset(ctx: EllipticContext, z, j: int):
    """``p(z) - e_j`` evaluated without cancellation near the half-period ``omega_j``.

    Uses ``p(z) - e_j = (exp(-eta_j z) sigma(z + omega_j) / (sigma(z) sigma(omega_j)))**2``.
    """
    lat = ctx.lattice
    half = {1: lat.omega1, 2: lat.omega2, 3: lat.omega3}[j]
    eta = {1: ctx.eta1, 2: ctx.eta1 + ctx.eta3, 3: ctx.eta3}[j]
    z = np.asarray(z, dtype=complex)
    _reduced(ctx, z)
    with np.errstate(invalid="ignore", over="ignore"):
        expo = log_sigma(ctx, z + half) - log_sigma(ctx, z) - log_sigma(ctx, half) - eta * z
        return _out(np.exp(2.0 * np.asarray(expo)))


def wp_prime(ctx: EllipticContext, z):
    """First derivative of ``p``."""
    return wp_derivatives(ctx, z)[1]


def wp_second(ctx: EllipticContext, z):
    """Second derivative of ``p`` via ``6 p**2 - g2/2``."""
    p = np.asarray(wp(ctx, z))
    return _out(6.0 * p * p - 0.5 * ctx.g2)


def wp_third(ctx: EllipticContext, z):
    return wp_derivatives(ctx, z)[3]


def wp_fourth(ctx: EllipticContext, z):
    return wp_derivatives(ctx, z)[4]


def zeta(ctx: EllipticContext, z):
    """Weierstrass ``zeta`` function (odd, with derivative ``-p``)."""
    z_red, m, n = _reduced(ctx, z)
    value = ctx._frame.zeta(z_red, m, n, _frame_eta3(ctx))
    return _out(-1j * value if ctx._rotated else value)


def log_sigma(ctx: EllipticContext, z):
    """Logarithm of the Weierstrass ``sigma`` function, any branch.

    Zeros of ``sigma`` give a real part of ``-inf``; no pole guard applies.
    """
    z_red, m, n = _reduced(ctx, z, guard=False)
    with np.errstate(divide="ignore"):
        value = ctx._frame.log_sigma(z_red, m, n, _frame_eta3(ctx))
    return _out(value + LOG_I if ctx._rotated else value)


def sigma_scaled(ctx: EllipticContext, z):
    """``sigma(z)`` as ``(mantissa, exponent)`` with ``sigma = mantissa * exp(exponent)``.

    ``exponent`` is real, so values beyond the floating range keep a usable
    representation.
    """
    ls = np.asarray(log_sigma(ctx, z))
    finite = np.isfinite(ls.real)
    exponent = np.where(finite, ls.real, 0.0)
    mantissa = np.where(finite, np.exp(1j * np.where(finite, ls.imag, 0.0)), 0.0)
    return _out(mantissa), _out(exponent)


def sigma(ctx: EllipticContext, z):
    """Weierstrass ``sigma`` function.

    Raises
    ------
    OverflowError
        If ``|sigma(z)|`` exceeds the floating range; use :func:`sigma_scaled`.
    """
    mantissa, exponent = sigma_scaled(ctx, z)
    if np.any(np.asarray(exponent) > 700.0):
        raise OverflowError("sigma exceeds the floating range; use sigma_scaled")
    return _out(np.asarray(mantissa) * np.exp(np.asarray(exponent)))
