"""Kernel along the critical velocity and the size of the Airy zone.

Prints ``t^(1/3) max_x |K(t, x, x - tau0 t)|`` together with the Airy length
``(6 / (t |F'''(a0)|))^(1/3)`` and the band-1 parameter length, showing when
the cubic stationary point becomes isolated.
"""

import numpy as np

from lamedisp.kernel import critical_velocity, fold_derivatives, optimality_probe
from lamedisp.weierstrass import Lattice, build_context


def main():
    ctx = build_context(Lattice(5.5, 2.0))
    a0, tau0, _ = critical_velocity(ctx)
    f3 = abs(fold_derivatives(ctx, a0, tau0)[2])
    print(f"a0 = {a0:.8f}, tau0 = {tau0:.9f}, |F'''(a0)| = {f3:.4e}")
    probe = optimality_probe(ctx, 2.0 ** np.arange(6, 11), x_grid=32)
    for t, hi, lo in zip(probe.t_samples, probe.scaled_max, probe.scaled_min):
        airy = (6.0 / (t * f3)) ** (1.0 / 3.0)
        print(f"t={t:6.0f}  scaled max {hi:.3f}  min {lo:.3f}  Airy length {airy:.3f} vs arc 2 omega' = {2 * ctx.omega_prime}")


if __name__ == "__main__":
    main()
