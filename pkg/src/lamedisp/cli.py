"""Command-line front end.

``lamedisp <subcommand> [--config PATH] [overrides]`` with subcommands
invariants, bands, cubic, kernel, decay, evolve, verify and scan.  Results go
to CSV files in ``--out`` together with ``meta.txt``.  Exit status is 0 on
success, 1 on a configuration error and 2 when a verification fails.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import __version__
from .cubic import cubic_analysis
from .evolution import ResolutionError, decay_observable, initial_data
from .kernel import (
    ScanRangeError,
    UnderresolvedError,
    decay_fit,
    genericity_scan,
    kernel_values,
    optimality_probe,
    spectral_nodes,
)
from .spectrum import (
    BAND1,
    BAND2,
    a_from_energy,
    discriminant,
    discriminant_convention,
    gap_point,
    quasimomentum,
)
from .svgplot import loglog_svg
from .verification import run_checks
from .weierstrass import Lattice, LatticeError, build_context

SUBCOMMANDS = ("invariants", "bands", "cubic", "kernel", "decay", "evolve", "verify", "scan")
EXIT_OK, EXIT_CONFIG, EXIT_VERIFY = 0, 1, 2


class ConfigError(ValueError):
    """Malformed or out-of-range configuration."""


class VerificationFailure(RuntimeError):
    def __init__(self, checks):
        super().__init__("failed checks: " + ", ".join(checks))
        self.checks = list(checks)


@dataclass
class RunConfig:
    """All run parameters; fields double as configuration-file keys."""

    omega: float | None = None
    omega_prime: float | None = None
    tol: float = 1e-12
    out: str = "."
    t_min: float = 16.0
    t_max: float = 1024.0
    t_count: int = 7
    grid_x: int = 64
    grid_tau: int = 257
    x_prime: float = 0.0
    psi0: str = "gaussian"
    psi0_center: float | None = None
    psi0_width: float = 1.0
    method: str = "both"
    dt: float = 0.05
    dx: float = 0.25
    scan_min: float = 0.5
    scan_max: float = 8.0
    scan_count: int = 20
    probe: bool = False
    svg: bool = False

    def t_list(self) -> np.ndarray:
        return np.geomspace(self.t_min, self.t_max, self.t_count)

    def validate(self, command: str):
        if command != "scan":
            for name in ("omega", "omega_prime"):
                if getattr(self, name) is None:
                    raise ConfigError(f"--{name.replace('_', '-')} is required")
        for name in ("omega", "omega_prime"):
            v = getattr(self, name)
            if v is not None and not (math.isfinite(v) and v > 0):
                raise ConfigError(f"{name} must be a positive finite number")
        if not 1e-15 <= self.tol <= 1e-6:
            raise ConfigError("tol must lie in [1e-15, 1e-6]")
        if not 1.0 <= self.t_min < self.t_max:
            raise ConfigError("need 1 <= t_min < t_max")
        if self.t_count < 2:
            raise ConfigError("t_count must be at least 2")
        if self.grid_x < 2 or self.grid_tau < 3:
            raise ConfigError("grid_x >= 2 and grid_tau >= 3 required")
        if self.psi0 not in ("gaussian", "box", "bump"):
            raise ConfigError("psi0 must be gaussian, box or bump")
        if self.method not in ("kernel", "split_step", "both"):
            raise ConfigError("method must be kernel, split_step or both")
        if self.psi0_width <= 0 or self.dt <= 0 or self.dx <= 0:
            raise ConfigError("psi0_width, dt and dx must be positive")
        if not 0 < self.scan_min < self.scan_max or self.scan_count < 1:
            raise ConfigError("need 0 < scan_min < scan_max and scan_count >= 1")

    def rows(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind in ("bool",):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind == "int":
            return int(raw)
        if "float" in kind:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment, unknown keys are rejected."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return values


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lamedisp", description="Dispersive decay diagnostics for the one-gap Lame potential.")
    parser.add_argument("--version", action="version", version=f"lamedisp {__version__}")
    parser.add_argument("command", choices=SUBCOMMANDS)
    parser.add_argument("--config", metavar="PATH")
    flags = {
        "omega": float, "omega-prime": float, "tol": float, "out": str,
        "t-min": float, "t-max": float, "t-count": int, "grid-x": int, "grid-tau": int,
        "x-prime": float, "psi0": str, "psi0-center": float, "psi0-width": float,
        "method": str, "dt": float, "dx": float,
        "scan-min": float, "scan-max": float, "scan-count": int,
    }
    for name, kind in flags.items():
        parser.add_argument(f"--{name}", type=kind, default=None)
    parser.add_argument("--svg", action="store_true", default=None)
    parser.add_argument("--probe", action="store_true", default=None)
    return parser


def load_config(argv) -> tuple[str, RunConfig]:
    args = build_parser().parse_args(argv)
    values = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                values.update(parse_config_text(fh.read()))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    for key in _FIELD_TYPES:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    cfg = RunConfig(**values)
    cfg.validate(args.command)
    return args.command, cfg


# -- output helpers ------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path: str, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def write_meta(cfg: RunConfig, command: str, convention: str | None):
    lines = [f"version = {__version__}", f"command = {command}"]
    lines += [f"{k} = {_fmt(v)}" for k, v in cfg.rows()]
    lines.append(f"delta_convention = {convention or 'n/a'}")
    with open(os.path.join(cfg.out, "meta.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _path(cfg, name):
    return os.path.join(cfg.out, name)


# -- subcommands ----------------------------------------------------------------------


def cmd_invariants(ctx, cfg):
    header = ("omega", "omega_prime", "g2", "g3", "e1", "e2", "e3", "eta1", "eta3_im")
    row = (ctx.omega, ctx.omega_prime, ctx.g2, ctx.g3, ctx.e1, ctx.e2, ctx.e3, ctx.eta1, ctx.eta3.imag)
    write_csv(_path(cfg, "invariants.csv"), header, [row])
    for k, v in zip(header, row):
        print(f"{k}={v:.10g}")


def cmd_bands(ctx, cfg):
    n = max(cfg.grid_x, 8)
    rows = []
    sections = (
        (BAND1, np.linspace(-ctx.e1, -ctx.e2, n)),
        ("gap", np.linspace(-ctx.e2, -ctx.e3, n + 2)[1:-1]),
        (BAND2, -ctx.e3 + np.linspace(0.0, 1.0, n) ** 2 * max(4.0, 4.0 * abs(ctx.e3))),
    )
    for label, energies in sections:
        for E in energies:
            a = gap_point(ctx, E) if label == "gap" else a_from_energy(ctx, E, label).a
            k = complex(quasimomentum(ctx, a))
            rows.append((label, E, a.real, a.imag, k.real, k.imag, discriminant(ctx, E)))
    write_csv(_path(cfg, "bands.csv"), ("band", "E", "a_re", "a_im", "k_re", "k_im", "Delta"), rows)
    print(f"band1=[{-ctx.e1:.10g}, {-ctx.e2:.10g}] band2=[{-ctx.e3:.10g}, inf)")


def cmd_cubic(ctx, cfg):
    rep = cubic_analysis(ctx, strict=False)
    order = np.argsort(-rep.critical_points.imag) if rep.disc_gap >= 0 else np.argsort(-rep.critical_points.real)
    rows = [
        ("g2", ctx.g2, 0.0),
        ("g3", ctx.g3, 0.0),
        ("r_plus", rep.critical_points[order[0]].real, rep.critical_points[order[0]].imag),
        ("r_minus", rep.critical_points[order[1]].real, rep.critical_points[order[1]].imag),
        ("P_r_plus", rep.critical_values[order[0]].real, rep.critical_values[order[0]].imag),
        ("P_r_minus", rep.critical_values[order[1]].real, rep.critical_values[order[1]].imag),
    ]
    rows += [(f"root{i}", r.real, r.imag) for i, r in enumerate(rep.roots)]
    rows += [
        ("band1_root", rep.band1_root, 0.0),
        ("disc_gap", rep.disc_gap, 0.0),
        ("generic", float(rep.generic), 0.0),
        ("corollary_holds", float(rep.corollary_holds), 0.0),
    ]
    write_csv(_path(cfg, "cubic.csv"), ("quantity", "re", "im"), rows)
    print(f"g2={ctx.g2:.6g} g3={ctx.g3:.6g}")
    for name, re, im in rows[2:6]:
        print(f"{name}={re:.6g}{im:+.6g}i")
    print(f"generic={rep.generic} corollary_holds={rep.corollary_holds}")
    failed = [name for name, ok in rep.checks.items() if not ok]
    if failed:
        raise VerificationFailure(failed)


def cmd_kernel(ctx, cfg):
    x = np.arange(cfg.grid_x) * (2.0 * ctx.omega / cfg.grid_x)
    rows = []
    for t in cfg.t_list():
        xp = np.full(x.shape, cfg.x_prime)
        tau = (x - xp) / t
        nodes = spectral_nodes(ctx, t, (tau.min(), tau.max()))
        fine = spectral_nodes(ctx, t, (tau.min(), tau.max()), Lambda=nodes.Lambda, split=True)
        c1, c2, _ = kernel_values(ctx, t, x, xp, nodes=nodes)
        f1, f2, bound = kernel_values(ctx, t, x, xp, nodes=fine)
        err = np.abs(f1 + f2 - c1 - c2) + bound
        for xi, xpi, ti, k, e in zip(x, xp, tau, f1 + f2, err):
            rows.append((t, xi, xpi, ti, k.real, k.imag, abs(k), e))
    write_csv(_path(cfg, "kernel.csv"), ("t", "x", "xprime", "tau", "re_K", "im_K", "abs_K", "err"), rows)
    print(f"wrote {len(rows)} kernel rows")


def cmd_decay(ctx, cfg):
    try:
        fit = decay_fit(ctx, cfg.t_list(), x_grid=cfg.grid_x, tau_grid=cfg.grid_tau)
    except UnderresolvedError as exc:
        raise VerificationFailure([f"sup-scan resolution ({exc})"]) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    write_csv(_path(cfg, "decay.csv"), ("t", "sup_abs_K", "t13_scaled", "t14_scaled"), fit.rows())
    print(f"slope={fit.slope:.6f} intercept={fit.intercept:.6f} rms={fit.residual:.3e}")
    if cfg.svg:
        with open(_path(cfg, "decay.svg"), "w", encoding="utf-8") as fh:
            fh.write(loglog_svg(fit.t_samples, fit.sup_values, fit.slope, fit.intercept, "sup|K|"))
    if cfg.probe:
        probe = optimality_probe(ctx)
        write_csv(_path(cfg, "probe.csv"), ("t", "scaled_min", "scaled_max", "tau0", "a0_re", "a0_im"), probe.rows())
        ratio = float(probe.scaled_max.min() / probe.scaled_max.max())
        print(f"tau0={probe.tau0:.10g} probe_min_over_max={ratio:.4f} stationary_points={probe.stationary_count}")


def cmd_evolve(ctx, cfg):
    center = ctx.omega if cfg.psi0_center is None else cfg.psi0_center
    psi0 = initial_data(cfg.psi0, center, cfg.psi0_width)
    methods = ("split_step", "kernel") if cfg.method == "both" else (cfg.method,)
    rows = []
    fits = {}
    for method in methods:
        obs = decay_observable(ctx, psi0, cfg.t_list(), method=method, dx=cfg.dx, dt=cfg.dt)
        fits[method] = obs
        rows += [(method, t, s, c) for t, s, c in obs.rows()]
        print(f"{method}: slope={obs.slope:.6f}")
    write_csv(_path(cfg, "evolve.csv"), ("method", "t", "sup_norm", "t13_scaled"), rows)
    if cfg.svg:
        obs = fits[methods[0]]
        with open(_path(cfg, "evolve.svg"), "w", encoding="utf-8") as fh:
            fh.write(loglog_svg(obs.t_samples, obs.sup_norm, obs.slope, obs.intercept, f"|psi| ({obs.method})"))


def cmd_verify(ctx, cfg):
    results = run_checks(ctx)
    write_csv(
        _path(cfg, "verify.csv"),
        ("check", "residual", "tolerance", "passed"),
        [(r.name, r.residual, r.tolerance, r.passed) for r in results],
    )
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        raise VerificationFailure(failed)


def cmd_scan(cfg):
    grid = np.linspace(cfg.scan_min, cfg.scan_max, cfg.scan_count)
    rows = genericity_scan(grid, grid, cfg.tol)
    keys = ("omega", "omega_prime", "corollary_holds", "generic", "structural_ok", "min_abs_critical_value", "disc_gap", "failed")
    write_csv(_path(cfg, "genericity.csv"), keys, [[r[k] for k in keys] for r in rows])
    bad = [r for r in rows if not r["structural_ok"]]
    nongeneric = [r for r in rows if not r["generic"]]
    print(f"{len(rows)} cells, {len(bad)} structural failures, {len(nongeneric)} non-generic")
    for r in nongeneric:
        print(f"non-generic cell omega={r['omega']:.6g} omega_prime={r['omega_prime']:.6g}")
    if bad:
        raise VerificationFailure([f"cubic structure at ({r['omega']:.6g}, {r['omega_prime']:.6g}): {r['failed']}" for r in bad])


COMMANDS = {
    "invariants": cmd_invariants,
    "bands": cmd_bands,
    "cubic": cmd_cubic,
    "kernel": cmd_kernel,
    "decay": cmd_decay,
    "evolve": cmd_evolve,
    "verify": cmd_verify,
}


def run_cli(argv=None) -> int:
    """Run one subcommand and return the exit status."""
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        command, cfg = load_config(argv)
        os.makedirs(cfg.out, exist_ok=True)
        if command == "scan":
            write_meta(cfg, command, None)
            cmd_scan(cfg)
            return EXIT_OK
        try:
            ctx = build_context(Lattice(cfg.omega, cfg.omega_prime), cfg.tol)
        except (LatticeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        write_meta(cfg, command, discriminant_convention(ctx))
        COMMANDS[command](ctx, cfg)
        return EXIT_OK
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(build_parser().format_usage(), file=sys.stderr, end="")
        return EXIT_CONFIG
    except VerificationFailure as exc:
        for name in exc.checks:
            print(f"FAILED: {name}", file=sys.stderr)
        return EXIT_VERIFY
    except (ScanRangeError, ResolutionError) as exc:
        print(f"FAILED: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VERIFY


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
