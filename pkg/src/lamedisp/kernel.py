"""Propagator kernel of the Lame Schrodinger flow and its decay diagnostics.

The kernel of ``exp(i t H)`` for ``H = -d^2/dx^2 + 2 p(x + i omega')`` is
assembled from the Floquet data as ``K = K1 + K2`` with

    K1 = (1/2pi)  int_0^{2 omega'} exp(-i t F(a)) m_a(x) m_{-a}(x') w(a) ds,  a = omega + i s
    K2 = (1/2pi i) int_R exp(-i t F(a)) m_a(x) m_{-a}(x') w(a) a'(lam) dlam,   a = a(lam) on (0, 2 i omega')

where ``F(a) = p(a) - tau k(a)``, ``tau = (x - x')/t``, ``w`` is the spectral
weight and ``lam(a)^2 = e3 - p(a)``.  Band 2 is integrated on a finite window
``|lam| <= Lambda`` with integration-by-parts tails beyond it.

Every evaluation runs on a :class:`SpectralNodes` set: Gauss-Legendre nodes
whose panels resolve the phase for a whole interval of ``tau``, so one node
set serves a sup-scan over many velocities at once.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cubic import CubicReport, cubic_analysis
from .quadrature import (
    NODES_PER_PANEL,
    PANEL_RADIANS,
    WINDOW_NODES,
    PhaseModel,
    QuadratureError,
    StationaryPointSet,
    equidistributed_breaks,
    find_stationary_points,
    panel_nodes,
    stationary_windows,
    tail_integral,
)
from .spectrum import BAND1, a_from_energy, a_from_lambda, log_eigenfunction, quasimomentum, spectral_weight
from .weierstrass import EllipticContext, wp_derivatives

__all__ = [
    "KernelRequest",
    "KernelValue",
    "LamePhase",
    "SpectralNodes",
    "SupScanResult",
    "DecayFit",
    "OptimalityProbe",
    "ScanRangeError",
    "UnderresolvedError",
    "LAMBDA_MIN",
    "worker_count",
    "phase",
    "critical_velocity",
    "window_half_width",
    "spectral_nodes",
    "lambda_chain",
    "k1",
    "k2",
    "kernel",
    "kernel_values",
    "kernel_matrix",
    "free_kernel",
    "sup_scan",
    "decay_fit",
    "optimality_probe",
    "genericity_scan",
]

LAMBDA_MIN = 8.0
CHUNK = 2048
DEFAULT_X_POINTS = 64
DEFAULT_TAU_POINTS = 257
RESOLUTION_RTOL = 1e-3


class ScanRangeError(ValueError):
    """The velocity grid misses a critical velocity."""


class UnderresolvedError(RuntimeError):
    """A sup-scan failed its resolution self-check."""


def worker_count() -> int:
    """Worker cap from ``LAME_THREADS`` (default: available CPUs)."""
    raw = os.environ.get("LAME_THREADS")
    if raw is None or raw.strip() == "":
        return os.cpu_count() or 1
    value = int(raw)
    if value < 1:
        raise ValueError("LAME_THREADS must be a positive integer")
    return value


@dataclass(frozen=True)
class KernelRequest:
    """Kernel evaluation point; ``tau = (x - x_prime)/t``."""

    t: float
    x: float
    x_prime: float

    def __post_init__(self):
        if not self.t >= 1.0:
            raise ValueError("kernel requests need t >= 1")

    @property
    def tau(self) -> float:
        return (self.x - self.x_prime) / self.t


@dataclass(frozen=True)
class KernelValue:
    K: complex
    K1: complex
    K2: complex
    error_estimate: float


# ---------------------------------------------------------------------------
# phase and its derivatives on both arcs


def _band1_parts(ctx: EllipticContext, s, order: int):
    """Derivatives in ``s`` of ``p(a)`` and ``k(a)`` along ``a = omega + i s``."""
    a = ctx.omega + 1j * np.asarray(s, dtype=float)
    d = wp_derivatives(ctx, a)
    k = quasimomentum(ctx, a)
    ka = (k, -1j * (d[0] + ctx.zeta_ratio), -1j * d[1], -1j * d[2], -1j * d[3])
    p_parts = [np.real((1j**j) * d[j]) for j in range(order + 1)]
    k_parts = [np.real((1j**j) * ka[j]) for j in range(order + 1)]
    return p_parts, k_parts


def lambda_chain(ctx: EllipticContext, lam, d):
    """Derivatives ``a', a'', a''', a''''`` of ``a(lam)`` on band 2.

    ``d`` holds ``p`` and its first four derivatives at ``a(lam)``.  Away from
    ``lam = 0`` they follow from differentiating ``p(a(lam)) = e3 - lam^2``;
    near ``lam = 0`` the odd series ``a - w3 = J lam (1 + b lam^2 + c lam^4)``
    is used instead, since the direct formulas divide by ``p'(a) -> 0``.
    """
    lam = np.asarray(lam, dtype=float)
    p2 = 6.0 * ctx.e3**2 - 0.5 * ctx.g2
    p4 = 12.0 * ctx.e3 * p2
    p6 = 12.0 * (3.0 * p2 * p2 + ctx.e3 * p4)
    jac = -1j * math.sqrt(2.0 / p2)
    j4 = 4.0 / p2**2
    j6 = -8.0 / p2**3
    beta = p4 * j4 / 48.0
    gamma = 0.5 * (-beta * beta + p4 * j4 * beta / 6.0 + p6 * j6 / 720.0)
    patch = 1e-2 * ctx.omega_prime * math.sqrt(0.5 * p2)
    near = np.abs(lam) < patch
    l2 = lam * lam
    s1 = jac * (1.0 + 3.0 * beta * l2 + 5.0 * gamma * l2 * l2)
    s2 = jac * (6.0 * beta * lam + 20.0 * gamma * lam * l2)
    s3 = jac * (6.0 * beta + 60.0 * gamma * l2)
    s4 = jac * 120.0 * gamma * lam
    p1 = np.where(near, 1.0, d[1])
    with np.errstate(divide="ignore", invalid="ignore"):
        a1 = -2.0 * lam / p1
        a2 = (-2.0 - d[2] * a1 * a1) / p1
        a3 = -(d[3] * a1**3 + 3.0 * d[2] * a1 * a2) / p1
        a4 = -(d[4] * a1**4 + 6.0 * d[3] * a1 * a1 * a2 + d[2] * (3.0 * a2 * a2 + 4.0 * a1 * a3)) / p1
    return (
        np.where(near, s1, a1),
        np.where(near, s2, a2),
        np.where(near, s3, a3),
        np.where(near, s4, a4),
    )


def _compose(g, chain):
    """Faa di Bruno to fourth order: derivatives of ``g(a(lam))`` from those of ``g`` and ``a``."""
    a1, a2, a3, a4 = chain
    g1, g2, g3, g4 = g
    return (
        g1 * a1,
        g2 * a1 * a1 + g1 * a2,
        g3 * a1**3 + 3.0 * g2 * a1 * a2 + g1 * a3,
        g4 * a1**4 + 6.0 * g3 * a1 * a1 * a2 + g2 * (3.0 * a2 * a2 + 4.0 * a1 * a3) + g1 * a4,
    )


def _band2_parts(ctx: EllipticContext, lam, order: int, a=None):
    """Derivatives in ``lam`` of ``p(a(lam))`` and ``k(a(lam))`` on band 2."""
    lam = np.asarray(lam, dtype=float)
    if a is None:
        a = a_from_lambda(ctx, lam)
    d = wp_derivatives(ctx, a)
    chain = lambda_chain(ctx, lam, d)
    k = quasimomentum(ctx, a)
    kd = (-1j * (d[0] + ctx.zeta_ratio), -1j * d[1], -1j * d[2], -1j * d[3])
    k_lam = _compose(kd, chain)
    zero = np.zeros_like(lam)
    p_parts = [ctx.e3 - lam * lam, -2.0 * lam, zero - 2.0, zero, zero][: order + 1]
    k_parts = [np.real(k)] + [np.real(v) for v in k_lam[:order]]
    return p_parts, k_parts


def _model(parts_fn, tau: float, lo: float, hi: float) -> PhaseModel:
    def derivatives(s, order):
        p_parts, k_parts = parts_fn(s, order)
        return [p - tau * q for p, q in zip(p_parts, k_parts)]

    return PhaseModel(derivatives, lo, hi)


@dataclass(frozen=True)
class LamePhase:
    """``F_tau`` on band 1 (variable ``s``) and band 2 (variable ``lam``)."""

    tau: float
    band1: PhaseModel
    band2: PhaseModel
    Lambda: float


def phase(ctx: EllipticContext, tau: float, Lambda: float | None = None) -> LamePhase:
    """Phase models of ``F_tau = p - tau k`` on both spectral arcs."""
    tau = float(tau)
    if Lambda is None:
        Lambda = window_half_width(ctx, (tau, tau))
    band1 = _model(lambda s, o: _band1_parts(ctx, s, o), tau, 0.0, 2.0 * ctx.omega_prime)
    band2 = _model(lambda s, o: _band2_parts(ctx, s, o), tau, -Lambda, Lambda)
    return LamePhase(tau, band1, band2, float(Lambda))


def phase_imaginary_residual(ctx: EllipticContext, tau: float, n: int = 256) -> float:
    """Largest ``|Im F_tau(a)|`` along both arcs (zero up to rounding)."""
    s = np.linspace(0.0, 2.0 * ctx.omega_prime, n)
    a1 = ctx.omega + 1j * s
    u = np.linspace(0.02, 1.98, n) * ctx.omega_prime
    a2 = 1j * u
    worst = 0.0
    for a in (a1, a2):
        f = wp_derivatives(ctx, a)[0] - tau * quasimomentum(ctx, a)
        worst = max(worst, float(np.max(np.abs(np.imag(f)))))
    return worst


def critical_velocity(ctx: EllipticContext, report: CubicReport | None = None):
    """Fold point ``(a0, tau0)`` of the band-1 phase.

    ``a0 = omega + i s0`` with ``s0`` in ``(0, omega')`` and ``p(a0)`` the cubic
    root inside ``(e2, e1)``; ``tau0 = i p'(a0) / (Z + p(a0))``.  The mirror
    pair ``(2 w2 - a0, -tau0)`` is the other fold.
    """
    report = report or cubic_analysis(ctx)
    point = a_from_energy(ctx, -report.band1_root, BAND1)
    a0 = point.a
    d = wp_derivatives(ctx, a0)
    tau0 = 1j * d[1] / (ctx.zeta_ratio + d[0])
    return complex(a0), float(np.real(tau0)), float(np.imag(tau0))


def _band2_stationary_max(ctx: EllipticContext, tau: float, half_width: float) -> float:
    model = _model(lambda s, o: _band2_parts(ctx, s, o), tau, -half_width, half_width)
    points = find_stationary_points(model, 1.0, n_samples=2049)
    return max((abs(p.s) for p in points), default=0.0)


def window_half_width(ctx: EllipticContext, tau_range) -> float:
    """``Lambda = max(8, 4 max|lam*|, 4 max|tau|)`` over the velocity interval."""
    tmax = max(abs(tau_range[0]), abs(tau_range[1]))
    first = max(LAMBDA_MIN, 4.0 * tmax)
    reach = max(_band2_stationary_max(ctx, tau, 2.0 * first) for tau in set(tau_range))
    return max(first, 4.0 * reach)


# ---------------------------------------------------------------------------
# node sets


@dataclass(frozen=True)
class SpectralNodes:
    """Quadrature nodes on both arcs with their spectral data.

    ``weight`` already contains the spectral density and the Jacobian, so
    ``K = sum weight * exp(-i t p) * f_a(x) f_{-a}(x')`` over the nodes.
    """

    a: np.ndarray
    wp: np.ndarray
    k: np.ndarray
    weight: np.ndarray
    n_band1: int
    Lambda: float

    @property
    def size(self) -> int:
        return self.a.size

    def band(self, index: int) -> slice:
        return slice(0, self.n_band1) if index == 1 else slice(self.n_band1, self.size)


def _envelope_density(p_parts, k_parts, tau_lo, tau_hi, t, c, h_max):
    rates = []
    for j in (1, 2, 3):
        lo = np.abs(p_parts[j] - tau_lo * k_parts[j])
        hi = np.abs(p_parts[j] - tau_hi * k_parts[j])
        rates.append(np.maximum(lo, hi))
    return np.maximum.reduce(
        [
            np.full_like(rates[0], 1.0 / h_max),
            (1.0 + t * rates[0]) / c,
            np.sqrt(t * rates[1] / c),
            np.cbrt(t * rates[2] / c),
        ]
    )


def _arc_breaks(lo, hi, density, windows, n_nodes):
    pieces = []
    cursor = lo
    for w_lo, w_hi in windows:
        if w_lo > cursor:
            pieces.append(equidistributed_breaks(cursor, w_lo, density))
        pieces.append(np.linspace(w_lo, w_hi, max(1, WINDOW_NODES // n_nodes) + 1))
        cursor = w_hi
    if cursor < hi:
        pieces.append(equidistributed_breaks(cursor, hi, density))
    return np.unique(np.concatenate(pieces))


def spectral_nodes(
    ctx: EllipticContext,
    t: float,
    tau_range,
    *,
    Lambda: float | None = None,
    c: float = PANEL_RADIANS,
    n_nodes: int = NODES_PER_PANEL,
    split: bool = False,
) -> SpectralNodes:
    """Nodes resolving ``exp(-i t F_tau)`` for every ``tau`` in ``tau_range``.

    Panel widths follow the envelope of ``|F'|``, ``|F''|`` and ``|F'''|`` over
    the velocity interval.  For a single velocity the stationary points get
    fixed 64-node windows.  ``split`` bisects every panel (used for error
    estimates).
    """
    tau_lo, tau_hi = float(min(tau_range)), float(max(tau_range))
    if Lambda is None:
        Lambda = window_half_width(ctx, (tau_lo, tau_hi))
    single = tau_lo == tau_hi

    s_hi = 2.0 * ctx.omega_prime

    def density1(s):
        p_parts, k_parts = _band1_parts(ctx, s, 3)
        return _envelope_density(p_parts, k_parts, tau_lo, tau_hi, t, c, s_hi / 32.0)

    windows1 = []
    windows2 = []
    if single:
        ph = phase(ctx, tau_lo, Lambda)
        windows1 = stationary_windows(find_stationary_points(ph.band1, t), 0.0, s_hi)
        windows2 = stationary_windows(find_stationary_points(ph.band2, t), -Lambda, Lambda)

    sample = np.linspace(-Lambda, Lambda, 4097)
    sample_a = a_from_lambda(ctx, sample)
    p_s, k_s = _band2_parts(ctx, sample, 3, sample_a)

    def density2(lam):
        rho = _envelope_density(p_s, k_s, tau_lo, tau_hi, t, c, Lambda / 64.0)
        return np.interp(lam, sample, rho)

    breaks1 = _arc_breaks(0.0, s_hi, density1, windows1, n_nodes)
    breaks2 = _arc_breaks(-Lambda, Lambda, density2, windows2, n_nodes)
    if split:
        breaks1 = np.sort(np.concatenate([breaks1, 0.5 * (breaks1[1:] + breaks1[:-1])]))
        breaks2 = np.sort(np.concatenate([breaks2, 0.5 * (breaks2[1:] + breaks2[:-1])]))

    s, ws = panel_nodes(breaks1, n_nodes)
    lam, wl = panel_nodes(breaks2, n_nodes)
    a1 = ctx.omega + 1j * s
    a2 = a_from_lambda(ctx, lam)
    d2 = wp_derivatives(ctx, a2)
    jac = lambda_chain(ctx, lam, d2)[0]
    wp1 = np.real(wp_derivatives(ctx, a1)[0])
    wp2 = ctx.e3 - lam * lam
    weight1 = ws * spectral_weight(ctx, a1) / (2.0 * math.pi)
    weight2 = wl * spectral_weight(ctx, a2) * jac / (2.0j * math.pi)
    a = np.concatenate([a1, a2])
    return SpectralNodes(
        a=a,
        wp=np.concatenate([wp1, wp2]),
        k=np.real(quasimomentum(ctx, a)),
        weight=np.concatenate([weight1, weight2]),
        n_band1=s.size,
        Lambda=float(Lambda),
    )


def _chunks(n: int, size: int = CHUNK):
    return [slice(i, min(i + size, n)) for i in range(0, n, size)]


def _map_chunks(fn, n: int):
    """Run ``fn`` over node chunks and return results in chunk order."""
    chunks = _chunks(n)
    workers = min(worker_count(), len(chunks))
    if workers <= 1:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, chunks))


def _log_bloch(ctx, a, k, x, sign):
    """``log m_{sign a}(x)`` on the outer product of node and position arrays."""
    return log_eigenfunction(ctx, sign * a[:, None], x[None, :]) - 1j * sign * k[:, None] * x[None, :]


# ---------------------------------------------------------------------------
# integration-by-parts tails of the band-2 integral


def _tails(ctx, t, Lambda, x_points, xp_points, ix, ixp, tau, n_bound=24):
    """Band-2 tails beyond ``|lam| = Lambda`` for the pairs ``(x_points[ix], xp_points[ixp])``."""
    tau = np.asarray(tau, dtype=float)

    def phase_fn(lam):
        p_parts, k_parts = _band2_parts(ctx, lam, 2)
        return tuple(p[:, None] - tau[None, :] * q[:, None] for p, q in zip(p_parts, k_parts))

    def amplitude_fn(lam):
        a = a_from_lambda(ctx, lam)
        k = np.real(quasimomentum(ctx, a))
        jac = lambda_chain(ctx, lam, wp_derivatives(ctx, a))[0]
        pref = spectral_weight(ctx, a) * jac / (2.0j * math.pi)
        lp = _log_bloch(ctx, a, k, x_points, 1.0)[:, ix]
        lm = _log_bloch(ctx, a, k, xp_points, -1.0)[:, ixp]
        return pref[:, None] * np.exp(lp + lm)

    return tail_integral(phase_fn, amplitude_fn, t, Lambda, n_bound=n_bound)


# ---------------------------------------------------------------------------
# kernel evaluation


def _pair_parts(ctx, nodes: SpectralNodes, t, x, xp):
    """Band-1 and band-2 window sums for the pairs ``(x[p], xp[p])``."""

    def work(sl):
        a = nodes.a[sl]
        k = nodes.k[sl]
        lf = log_eigenfunction(ctx, a[:, None], x[None, :]) + log_eigenfunction(ctx, -a[:, None], xp[None, :])
        terms = (nodes.weight[sl] * np.exp(-1j * t * nodes.wp[sl]))[:, None] * np.exp(lf)
        is1 = (np.arange(sl.start, sl.stop) < nodes.n_band1)[:, None]
        return np.sum(np.where(is1, terms, 0), axis=0), np.sum(np.where(is1, 0, terms), axis=0)

    parts = _map_chunks(work, nodes.size)
    band1 = np.zeros(x.shape, dtype=complex)
    band2 = np.zeros(x.shape, dtype=complex)
    for b1, b2 in parts:
        band1 += b1
        band2 += b2
    return band1, band2


def kernel_values(ctx: EllipticContext, t: float, x, x_prime, *, nodes: SpectralNodes | None = None, tails: bool = True):
    """Kernel at arbitrary pairs; returns ``(K1, K2, tail_bound)`` arrays."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xp = np.atleast_1d(np.asarray(x_prime, dtype=float))
    x, xp = np.broadcast_arrays(x, xp)
    x, xp = x.ravel().copy(), xp.ravel().copy()
    tau = (x - xp) / t
    if nodes is None:
        nodes = spectral_nodes(ctx, t, (tau.min(), tau.max()))
    b1, b2 = _pair_parts(ctx, nodes, t, x, xp)
    bound = np.zeros(x.shape)
    if tails:
        idx = np.arange(x.size)
        tail = _tails(ctx, t, nodes.Lambda, x, xp, idx, idx, tau)
        b2 = b2 + tail.value
        bound = np.asarray(tail.bound, dtype=float)
    return b1, b2, bound


def kernel(ctx: EllipticContext, req: KernelRequest, *, estimate_error: bool = True) -> KernelValue:
    """``K(t, x, x') = K1 + K2`` with an error estimate from one bisection level."""
    nodes = spectral_nodes(ctx, req.t, (req.tau, req.tau))
    k1v, k2v, bound = kernel_values(ctx, req.t, req.x, req.x_prime, nodes=nodes)
    error = float(bound[0])
    if estimate_error:
        fine = spectral_nodes(ctx, req.t, (req.tau, req.tau), Lambda=nodes.Lambda, split=True)
        f1, f2, _ = kernel_values(ctx, req.t, req.x, req.x_prime, nodes=fine)
        error += float(abs(f1[0] - k1v[0]) + abs(f2[0] - k2v[0]))
        k1v, k2v = f1, f2
    return KernelValue(complex(k1v[0] + k2v[0]), complex(k1v[0]), complex(k2v[0]), error)


def k1(ctx: EllipticContext, req: KernelRequest) -> complex:
    """Band-1 part of the kernel."""
    return kernel(ctx, req).K1


def k2(ctx: EllipticContext, req: KernelRequest) -> complex:
    """Band-2 part of the kernel, tails included."""
    return kernel(ctx, req).K2


def kernel_matrix(ctx: EllipticContext, t: float, x_out, x_in, *, nodes: SpectralNodes | None = None):
    """``K(t, x_out[i], x_in[j])`` as a matrix, tails included."""
    x_out = np.asarray(x_out, dtype=float)
    x_in = np.asarray(x_in, dtype=float)
    tau_all = (x_out[:, None] - x_in[None, :]) / t
    if nodes is None:
        nodes = spectral_nodes(ctx, t, (tau_all.min(), tau_all.max()))

    def work(sl):
        a = nodes.a[sl]
        plus = np.exp(log_eigenfunction(ctx, a[:, None], x_out[None, :]))
        minus = np.exp(log_eigenfunction(ctx, -a[:, None], x_in[None, :]))
        q = nodes.weight[sl] * np.exp(-1j * t * nodes.wp[sl])
        return (plus * q[:, None]).T @ minus

    out = np.zeros((x_out.size, x_in.size), dtype=complex)
    for part in _map_chunks(work, nodes.size):
        out += part
    ix, ixp = np.meshgrid(np.arange(x_out.size), np.arange(x_in.size), indexing="ij")
    tail = _tails(ctx, t, nodes.Lambda, x_out, x_in, ix.ravel(), ixp.ravel(), tau_all.ravel())
    out += np.asarray(tail.value).reshape(out.shape)
    return out


def free_kernel(t, x, x_prime):
    """Kernel of ``exp(-i t d^2/dx^2)``: ``exp(i pi/4) (4 pi t)^(-1/2) exp(-i (x-x')^2 / (4t))``."""
    t = np.asarray(t, dtype=float)
    dx = np.asarray(x, dtype=float) - np.asarray(x_prime, dtype=float)
    return np.exp(0.25j * math.pi) / np.sqrt(4.0 * math.pi * t) * np.exp(-1j * dx * dx / (4.0 * t))


# ---------------------------------------------------------------------------
# sup-scans, decay fits and the optimality probe


@dataclass(frozen=True)
class SupScanResult:
    """Maximum of ``|K(t, x, x - tau t)|`` over a grid.

    ``taus`` are the velocities actually used (snapped so that ``tau t`` is a
    multiple of the position spacing) and ``table`` the kernel moduli
    ``|K|`` with shape ``(len(taus), len(x))``.
    """

    t: float
    sup: float
    argmax_tau: float
    argmax_x: float
    taus: np.ndarray
    x: np.ndarray
    table: np.ndarray
    resolution_error: float
    underresolved: bool

    def __float__(self):
        return self.sup


def _x_grid(ctx, x_grid):
    period = 2.0 * ctx.omega
    if np.isscalar(x_grid):
        n = int(x_grid)
        return np.arange(n) * (period / n)
    x = np.asarray(x_grid, dtype=float)
    n = x.size
    if n < 2 or not np.allclose(np.diff(x), period / n, rtol=1e-9, atol=0.0):
        raise ValueError("x grid must be uniform with spacing 2*omega/len(x_grid)")
    return x


def default_tau_max(ctx: EllipticContext, report: CubicReport | None = None) -> float:
    """``2 |tau0| + 1``; band 2 has no folds when the cubic has one real root."""
    _, tau0, _ = critical_velocity(ctx, report)
    return 2.0 * abs(tau0) + 1.0


def _fold_cluster(ctx, t, a0, tau0, n=49, width=6.0):
    d = wp_derivatives(ctx, a0)
    f3 = abs(d[3] + 1j * tau0 * d[2])
    k1 = abs(ctx.zeta_ratio + d[0])
    scale = f3 ** (1.0 / 3.0) / max(k1, 1e-300) * t ** (-2.0 / 3.0)
    offsets = np.linspace(-width, width, n) * scale
    return np.concatenate([tau0 + offsets, -tau0 - offsets])


def sup_scan(
    ctx: EllipticContext,
    t: float,
    x_grid=DEFAULT_X_POINTS,
    tau_grid=DEFAULT_TAU_POINTS,
    *,
    refine_fold: bool = True,
    check: bool = True,
    c: float = PANEL_RADIANS,
) -> SupScanResult:
    """``max |K(t, x, x - tau t)|`` over ``x`` in ``[0, 2 omega)`` and a velocity grid.

    Parameters
    ----------
    x_grid : int or array
        Number of uniform points on ``[0, 2 omega)``, or the grid itself.
    tau_grid : int or array
        Number of uniform velocities on ``[-tau_max, tau_max]`` with
        ``tau_max = 2 |tau0| + 1``, or explicit velocities.  Velocities are
        snapped to multiples of ``dx / t`` so that ``x - tau t`` stays on the
        position grid modulo the period.
    refine_fold : bool
        Add a cluster of velocities around ``+-tau0`` at the fold scale
        ``t^(-2/3)``.
    check : bool
        Recompute the argmax with bisected panels and flag the scan as
        underresolved when the relative change exceeds ``1e-3``.

    Raises
    ------
    ScanRangeError
        If the velocity grid does not reach the critical velocity.
    """
    report = cubic_analysis(ctx)
    a0, tau0, _ = critical_velocity(ctx, report)
    x = _x_grid(ctx, x_grid)
    n_x = x.size
    dx = 2.0 * ctx.omega / n_x
    if np.isscalar(tau_grid):
        tmax = default_tau_max(ctx, report)
        taus = np.linspace(-tmax, tmax, int(tau_grid))
    else:
        taus = np.asarray(tau_grid, dtype=float)
    if np.max(np.abs(taus)) < abs(tau0):
        raise ScanRangeError(f"velocity grid max {np.max(np.abs(taus))} misses the critical velocity {abs(tau0)}")
    if refine_fold:
        taus = np.concatenate([taus, _fold_cluster(ctx, t, a0, tau0)])
    shifts = np.unique(np.rint(taus * t / dx).astype(np.int64))
    tau_used = shifts * dx / t
    nodes = spectral_nodes(ctx, t, (tau_used.min(), tau_used.max()), c=c)
    residues = shifts % n_x
    groups = [(q, np.nonzero(residues == q)[0]) for q in np.unique(residues)]

    def work(sl):
        a = nodes.a[sl]
        k = nodes.k[sl]
        plus = np.exp(_log_bloch(ctx, a, k, x, 1.0))
        minus = np.exp(_log_bloch(ctx, a, k, x, -1.0))
        q_t = nodes.weight[sl] * np.exp(-1j * t * nodes.wp[sl])
        v = q_t[:, None] * np.exp(1j * k[:, None] * (shifts * dx)[None, :])
        part = np.zeros((shifts.size, n_x), dtype=complex)
        for q, cols in groups:
            part[cols] = v[:, cols].T @ (plus * np.roll(minus, q, axis=1))
        return part

    table = np.zeros((shifts.size, n_x), dtype=complex)
    for part in _map_chunks(work, nodes.size):
        table += part
    jj, ii = np.meshgrid(np.arange(shifts.size), np.arange(n_x), indexing="ij")
    ixp = (ii - shifts[jj]) % n_x
    tail = _tails(ctx, t, nodes.Lambda, x, x, ii.ravel(), ixp.ravel(), tau_used[jj].ravel())
    table += np.asarray(tail.value).reshape(table.shape)
    mod = np.abs(table)
    j_best, i_best = np.unravel_index(int(np.argmax(mod)), mod.shape)
    sup = float(mod[j_best, i_best])
    best_tau = float(tau_used[j_best])
    best_x = float(x[i_best])
    resolution_error = 0.0
    if check:
        xp = best_x - best_tau * t
        fine = spectral_nodes(ctx, t, (best_tau, best_tau), Lambda=nodes.Lambda, split=True)
        f1, f2, _ = kernel_values(ctx, t, best_x, xp, nodes=fine)
        resolution_error = abs(abs(f1[0] + f2[0]) - sup) / max(sup, 1e-300)
    return SupScanResult(
        t=float(t),
        sup=sup,
        argmax_tau=best_tau,
        argmax_x=best_x,
        taus=tau_used,
        x=x,
        table=mod,
        resolution_error=float(resolution_error),
        underresolved=bool(resolution_error > RESOLUTION_RTOL),
    )


@dataclass(frozen=True)
class DecayFit:
    """Least-squares fit ``log sup|K| = slope log t + intercept``."""

    t_samples: np.ndarray
    sup_values: np.ndarray
    slope: float
    intercept: float
    residual: float
    argmax_tau: np.ndarray = field(default_factory=lambda: np.array([]))
    free: bool = False

    def rows(self):
        """Rows ``(t, sup_abs_K, t13_scaled, t14_scaled)``."""
        return [
            (float(t), float(s), float(s * t ** (1.0 / 3.0)), float(s * t**0.25))
            for t, s in zip(self.t_samples, self.sup_values)
        ]


def default_t_list():
    return 2.0 ** np.arange(4, 11)


def _check_geometric(t_list):
    t = np.asarray(t_list, dtype=float)
    if t.size < 5:
        raise ValueError("t_list needs at least 5 times")
    if t.min() < 16:
        raise ValueError("t_list must start at t >= 16")
    ratios = t[1:] / t[:-1]
    if np.any(ratios <= 1) or not np.allclose(ratios, ratios[0], rtol=1e-9):
        raise ValueError("t_list must be an increasing geometric sequence")
    return t


def loglog_fit(t, values):
    """Slope, intercept and RMS residual of a straight line in log-log coordinates."""
    lt = np.log(np.asarray(t, dtype=float))
    lv = np.log(np.asarray(values, dtype=float))
    slope, intercept = np.polyfit(lt, lv, 1)
    residual = float(np.sqrt(np.mean((lv - (slope * lt + intercept)) ** 2)))
    return float(slope), float(intercept), residual


def decay_fit(
    ctx: EllipticContext | None,
    t_list=None,
    *,
    x_grid=DEFAULT_X_POINTS,
    tau_grid=DEFAULT_TAU_POINTS,
    free: bool = False,
) -> DecayFit:
    """Fit the decay exponent of ``sup |K|`` over a geometric time list.

    With ``free=True`` the potential is switched off and the sup is taken of
    :func:`free_kernel` on the same grid (``ctx`` then only sets the period).

    Raises
    ------
    UnderresolvedError
        If any sup-scan fails its resolution self-check.
    """
    t = _check_geometric(default_t_list() if t_list is None else t_list)
    sups = []
    taus = []
    for ti in t:
        if free:
            period = 2.0 * (ctx.omega if ctx is not None else 1.0)
            n_x = int(x_grid) if np.isscalar(x_grid) else len(x_grid)
            xs = np.arange(n_x) * (period / n_x)
            tv = np.linspace(-1.0, 1.0, int(tau_grid) if np.isscalar(tau_grid) else len(tau_grid))
            vals = np.abs(free_kernel(ti, xs[None, :], xs[None, :] - tv[:, None] * ti))
            j = int(np.argmax(np.max(vals, axis=1)))
            sups.append(float(vals.max()))
            taus.append(float(tv[j]))
            continue
        scan = sup_scan(ctx, ti, x_grid, tau_grid)
        if scan.underresolved:
            raise UnderresolvedError(f"sup-scan at t={ti} changed by {scan.resolution_error:.2e} under refinement")
        sups.append(scan.sup)
        taus.append(scan.argmax_tau)
    slope, intercept, residual = loglog_fit(t, sups)
    return DecayFit(t, np.array(sups), slope, intercept, residual, np.array(taus), free)


@dataclass(frozen=True)
class OptimalityProbe:
    """Scaled kernel ``t^(1/3) |K(t, x, x - tau0 t)|`` along the critical ray.

    ``scaled_values`` has shape ``(len(t_samples), len(x))``; ``scaled_min`` and
    ``scaled_max`` are its per-time extremes over ``x``.
    """

    a0: complex
    tau0: float
    t_samples: np.ndarray
    x: np.ndarray
    scaled_values: np.ndarray
    derivative_residuals: tuple
    stationary_count: int

    @property
    def scaled_min(self) -> np.ndarray:
        return self.scaled_values.min(axis=1)

    @property
    def scaled_max(self) -> np.ndarray:
        return self.scaled_values.max(axis=1)

    def rows(self):
        """Rows ``(t, scaled_min, scaled_max, tau0, a0_re, a0_im)``."""
        return [
            (float(t), float(lo), float(hi), self.tau0, self.a0.real, self.a0.imag)
            for t, lo, hi in zip(self.t_samples, self.scaled_min, self.scaled_max)
        ]


def fold_derivatives(ctx: EllipticContext, a0: complex, tau0: float):
    """``(dF, d2F, d3F)`` in ``a`` of ``F_tau0`` at ``a0``."""
    d = wp_derivatives(ctx, a0)
    z = ctx.zeta_ratio
    return (
        complex(d[1] + 1j * tau0 * (d[0] + z)),
        complex(d[2] + 1j * tau0 * d[1]),
        complex(d[3] + 1j * tau0 * d[2]),
    )


def optimality_probe(ctx: EllipticContext, t_list=None, x_grid=DEFAULT_X_POINTS) -> OptimalityProbe:
    """Evaluate the kernel along the critical ray ``x - x' = tau0 t``.

    Raises
    ------
    QuadratureError
        If the fold point does not satisfy ``|F'|, |F''| < 1e-8``.
    """
    report = cubic_analysis(ctx)
    a0, tau0, tau0_imag = critical_velocity(ctx, report)
    residuals = fold_derivatives(ctx, a0, tau0)
    if abs(residuals[0]) >= 1e-8 or abs(residuals[1]) >= 1e-8:
        raise QuadratureError(f"fold point residuals {abs(residuals[0]):.2e}, {abs(residuals[1]):.2e}")
    t = np.asarray(2.0 ** np.arange(6, 13) if t_list is None else t_list, dtype=float)
    x = _x_grid(ctx, x_grid)
    count = len(find_stationary_points(phase(ctx, tau0).band1, float(t[0])))
    scaled = []
    for ti in t:
        nodes = spectral_nodes(ctx, ti, (tau0, tau0))
        b1, b2, _ = kernel_values(ctx, ti, x, x - tau0 * ti, nodes=nodes)
        scaled.append(ti ** (1.0 / 3.0) * np.abs(b1 + b2))
    return OptimalityProbe(a0, tau0, t, x, np.array(scaled), residuals, count)


def genericity_scan(omega_grid, omega_prime_grid, tol: float = 1e-12):
    """Cubic classification over a lattice grid; per-cell failures are recorded, not raised."""
    from .weierstrass import Lattice, build_context

    rows = []
    for om in np.asarray(omega_grid, dtype=float):
        for omp in np.asarray(omega_prime_grid, dtype=float):
            row = {"omega": float(om), "omega_prime": float(omp)}
            try:
                rep = cubic_analysis(build_context(Lattice(float(om), float(omp)), tol), strict=False)
            except Exception as exc:  # recorded per cell
                row.update(
                    corollary_holds=False, generic=False, structural_ok=False,
                    min_abs_critical_value=math.nan, disc_gap=math.nan, failed=type(exc).__name__,
                )
                rows.append(row)
                continue
            failed = [name for name, ok in rep.checks.items() if not ok]
            row.update(
                corollary_holds=rep.corollary_holds,
                generic=rep.generic,
                structural_ok=not failed,
                min_abs_critical_value=rep.min_abs_critical_value,
                disc_gap=rep.disc_gap,
                failed=";".join(failed),
            )
            rows.append(row)
    return rows
