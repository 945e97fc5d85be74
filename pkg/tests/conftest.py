import numpy as np
import pytest

from lamedisp.weierstrass import Lattice, build_context


@pytest.fixture(scope="session")
def ctx():
    return build_context(Lattice(5.5, 2.0))


@pytest.fixture(scope="session")
def square_ctx():
    return build_context(Lattice(1.0, 1.0))


@pytest.fixture(scope="session", params=[(5.5, 2.0), (1.0, 1.0), (1.0, 5.0), (3.0, 0.7)], ids=lambda p: f"{p[0]}x{p[1]}")
def any_ctx(request):
    return build_context(Lattice(*request.param))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def cell_points(ctx, n, rng, margin=0.05):
    """Random points in the fundamental cell at distance >= margin*min(omega, omega') from lattice points."""
    om, omp = ctx.omega, ctx.omega_prime
    guard = margin * min(om, omp)
    out = []
    while len(out) < n:
        z = complex(rng.uniform(-om, om), rng.uniform(-omp, omp))
        corners = [complex(m * 2 * om, k * 2 * omp) for m in (-1, 0, 1) for k in (-1, 0, 1)]
        if min(abs(z - c) for c in corners) >= guard:
            out.append(z)
    return np.array(out)
