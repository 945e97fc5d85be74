"""The critical-velocity cubic and its root classification.

A fold of the band-1 phase (first and second derivatives vanishing together)
happens at ``a`` with ``p(a)`` a root of

    P(x) = 2x^3 + 6Z x^2 + (g2/2) x + g3 - g2 Z / 2,    Z = zeta(omega)/omega.

The inflection point of ``P`` sits at ``x = -Z`` and the shift ``w = x + Z``
gives the depressed form ``P = 2w^3 + 6D w + P(-Z)`` with ``D = g2/12 - Z^2``.
Both ``D`` and ``P(-Z)`` are assembled from cancellation-free lattice data
(see :class:`~lamedisp.weierstrass.EllipticContext`), so root positions
relative to ``e1, e2, e3`` are certified even for very elongated lattices
where the three roots crowd together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .weierstrass import EllipticContext

__all__ = [
    "CubicReport",
    "CubicAssertionError",
    "DOUBLE_ROOT_THRESHOLD",
    "NEAR_DEGENERATE_BAND",
    "cubic_analysis",
    "depressed_cubic_roots",
]

DOUBLE_ROOT_THRESHOLD = 1e-7
NEAR_DEGENERATE_BAND = (1e-7, 1e-4)


class CubicAssertionError(AssertionError):
    """A structural property of the cubic failed; ``check`` names it."""

    def __init__(self, check: str, message: str):
        super().__init__(f"{check}: {message}")
        self.check = check


def depressed_cubic_roots(d: float, q: float) -> np.ndarray:
    """Roots of ``w^3 + 3 d w + q`` by the closed-form solution, Newton polished.

    The real root is listed first.  With a positive discriminant the other
    two form a conjugate pair (positive imaginary part second).
    """
    disc = 0.25 * q * q + d**3
    if disc > 0:
        root_disc = math.sqrt(disc)
        big = -0.5 * q - math.copysign(root_disc, q) if q != 0 else root_disc
        u = math.copysign(abs(big) ** (1.0 / 3.0), big)
        v = -d / u if u != 0 else 0.0
        # u + v written as -q / (u^2 - uv + v^2) to avoid cancellation
        denom = u * u - u * v + v * v
        w0 = -q / denom if denom != 0 else 0.0
        w0 = _polish(d, q, w0)
        imag = 0.5 * math.sqrt(3.0) * abs(u - v)
        return np.array([complex(w0), complex(-0.5 * w0, -imag), complex(-0.5 * w0, imag)])
    rad = math.sqrt(-d)
    arg = max(-1.0, min(1.0, -q / (2.0 * rad**3))) if rad > 0 else 0.0
    phi = math.acos(arg) / 3.0
    ws = [2.0 * rad * math.cos(phi - 2.0 * math.pi * k / 3.0) for k in range(3)]
    ws = sorted((_polish(d, q, w) for w in ws), reverse=True)
    return np.array([complex(w) for w in ws])


def _polish(d: float, q: float, w: float, steps: int = 3) -> float:
    for _ in range(steps):
        f = w**3 + 3.0 * d * w + q
        df = 3.0 * w * w + 3.0 * d
        if df == 0:
            break
        step = f / df
        w -= step
        if abs(step) <= 1e-17 * max(abs(w), 1e-300):
            break
    return w


@dataclass(frozen=True)
class CubicReport:
    """Root structure of ``P`` for one lattice.

    Attributes
    ----------
    coefficients : tuple
        ``(2, 6Z, g2/2, g3 - g2 Z/2)``, highest degree first.
    roots : ndarray
        The three roots, real root first.
    multiplicities : tuple
        One entry per distinct root.
    generic : bool
        True when ``P`` has no double root in ``(-inf, e3]``.
    zeta_ratio : float
    corollary_holds : bool
        ``Z**2 <= g2/12``.
    disc_gap : float
        ``g2/12 - Z**2``.
    critical_points, critical_values : ndarray
        ``r_pm = -Z pm sqrt(Z^2 - g2/12)`` and ``P(r_pm)``.
    band1_root : float
        The root inside ``(e2, e1)``.
    separation : float
        Smallest pairwise root distance divided by the root-cluster radius.
    near_degenerate : bool
        ``separation`` inside :data:`NEAR_DEGENERATE_BAND`.
    min_abs_critical_value : float
        ``min |P(r)|`` over real critical points in ``(-inf, e3]``, NaN if none.
    checks : dict
        Structural assertions by name.
    """

    coefficients: tuple
    roots: np.ndarray
    multiplicities: tuple
    generic: bool
    zeta_ratio: float
    corollary_holds: bool
    disc_gap: float
    critical_points: np.ndarray
    critical_values: np.ndarray
    band1_root: float
    separation: float
    near_degenerate: bool
    min_abs_critical_value: float
    checks: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def cubic_analysis(ctx: EllipticContext, strict: bool = True) -> CubicReport:
    """Classify the roots of ``P`` and check the band-1 root structure.

    Checks performed: a unique simple root in ``(e2, e1)``; ``P(e_j) != 0``;
    ``-Z`` in ``(e3, e2)``; no triple root.

    Parameters
    ----------
    ctx : EllipticContext
    strict : bool, optional
        Raise :class:`CubicAssertionError` on a failed check instead of only
        recording it in ``checks``.
    """
    z = ctx.zeta_ratio
    d = ctx.disc_gap
    e = (ctx.e1, ctx.e2, ctx.e3)
    off = ctx.offsets  # e_j + Z
    gap12, gap13, gap23 = ctx.gaps
    diffs = {  # (e_j - e_k)(e_j - e_l)
        0: gap12 * gap13,
        1: -gap12 * gap23,
        2: gap13 * gap23,
    }
    p_at_e = [2.0 * diffs[j] * off[j] for j in range(3)]

    # P(-Z) expanded around the half-period value closest to -Z
    j0 = int(np.argmin(np.abs(off)))
    h = off[j0]
    p_inflection = h * (2.0 * diffs[j0] - 2.0 * h * h - 6.0 * d)

    w = depressed_cubic_roots(d, 0.5 * p_inflection)
    roots = -z + w
    radius = float(np.max(np.abs(w)))
    pair = [abs(w[i] - w[k]) for i in range(3) for k in range(i + 1, 3)]
    separation = min(pair) / radius if radius > 0 else 0.0

    if radius == 0.0:
        multiplicities = (3,)
    elif separation < DOUBLE_ROOT_THRESHOLD:
        multiplicities = (2, 1)
    else:
        multiplicities = (1, 1, 1)

    real_mask = np.abs(w.imag) <= DOUBLE_ROOT_THRESHOLD * max(radius, 1e-300)
    # offsets x - e_j of each real root, refined on the Taylor expansion of P
    # at e_j so that roots inside very narrow bands are still resolved
    local = {k: [_local_root(j, w[k].real - off[j], off, d, p_at_e) for j in range(3)]
             for k in range(3) if real_mask[k]}
    in_band1 = [k for k, ys in local.items() if ys[1] > 0 and ys[0] < 0]
    simple_in_band1 = len(in_band1) == 1 and (
        multiplicities == (1, 1, 1) or _is_isolated(w, in_band1[0], radius)
    )
    band1_root = float(e[1] + local[in_band1[0]][1]) if in_band1 else math.nan

    sq = math.sqrt(abs(d))
    if d >= 0:
        crit = np.array([complex(-z, sq), complex(-z, -sq)])
        crit_vals = np.array([p_inflection + 4j * sq**3, p_inflection - 4j * sq**3])
    else:
        crit = np.array([complex(-z + sq), complex(-z - sq)])
        crit_vals = np.array([complex(p_inflection - 4.0 * sq**3), complex(p_inflection + 4.0 * sq**3)])

    # double root in (-inf, e3]: a real critical point there with P(r) ~ 0
    min_crit = math.nan
    generic = True
    if d < 0:
        below = [k for k in range(2) if (crit[k].real + z) - off[2] <= 0]
        if below:
            min_crit = float(min(abs(crit_vals[k]) for k in below))
        double_real = multiplicities == (2, 1)
        if double_real:
            i2 = _double_pair_index(w)
            xr = roots[i2].real
            if (xr + z) - off[2] <= 0:
                generic = False

    checks = {
        "unique simple root in (e2, e1)": simple_in_band1,
        "P(e_j) nonzero": all(v != 0.0 for v in p_at_e),
        "-Z in (e3, e2)": off[2] < 0.0 < off[1],
        "no triple root": not (d == 0.0 and p_inflection == 0.0) and multiplicities != (3,),
    }
    report = CubicReport(
        coefficients=(2.0, 6.0 * z, 0.5 * ctx.g2, ctx.g3 - 0.5 * ctx.g2 * z),
        roots=roots,
        multiplicities=multiplicities,
        generic=generic,
        zeta_ratio=z,
        corollary_holds=d >= 0.0,
        disc_gap=d,
        critical_points=crit,
        critical_values=crit_vals,
        band1_root=band1_root,
        separation=separation,
        near_degenerate=NEAR_DEGENERATE_BAND[0] <= separation <= NEAR_DEGENERATE_BAND[1],
        min_abs_critical_value=min_crit,
        checks=checks,
    )
    if strict:
        for name, passed in checks.items():
            if not passed:
                raise CubicAssertionError(name, f"failed for {ctx.lattice}")
    return report


def _local_root(j, guess, off, d, p_at_e, steps=8):
    """Root of ``P(e_j + y)`` near ``guess`` by Newton on the exact Taylor form."""
    h = off[j]
    c2 = 6.0 * h
    c1 = 6.0 * h * h + 6.0 * d
    c0 = p_at_e[j]
    y = guess
    for _ in range(steps):
        f = ((2.0 * y + c2) * y + c1) * y + c0
        df = (6.0 * y + 2.0 * c2) * y + c1
        if df == 0:
            break
        step = f / df
        y -= step
        if abs(step) <= 1e-16 * abs(y):
            break
    return y


def _is_isolated(w, k, radius):
    others = [abs(w[k] - w[i]) for i in range(3) if i != k]
    return min(others) >= DOUBLE_ROOT_THRESHOLD * radius


def _double_pair_index(w):
    best = None
    for i in range(3):
        for k in range(i + 1, 3):
            sep = abs(w[i] - w[k])
            if best is None or sep < best[0]:
                best = (sep, i)
    return best[1]
