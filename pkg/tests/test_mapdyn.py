import logging

import numpy as np
import pytest

from telapsed import mapdyn
from telapsed.grid import Grid
from telapsed.model import RateModel, tanh_phi_target

# fixed point of f(f(I)) = I for the tanh target (r0 = 0.5, gamma = 1.5), by a
# 2000-point scan plus 100 bisection steps on the closed form
I_MINUS = 0.5353600908399723


def tanh_pair_oracle(gamma):
    f = lambda I: tanh_phi_target(I, 0.5, gamma)  # noqa: E731
    H = lambda I: f(f(I)) - I  # noqa: E731
    xs = np.linspace(0.0, 0.749, 2000)
    hs = H(xs)
    k = np.nonzero(np.diff(np.sign(hs)))[0][0]
    lo, hi = xs[k], xs[k + 1]
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if np.sign(H(mid)) == np.sign(H(lo)):
            lo = mid
        else:
            hi = mid
    return lo, f(lo)


@pytest.fixture(scope="module")
def grid():
    return Grid(1e-2, 4000)


def test_oracle_frozen():
    assert tanh_pair_oracle(1.5)[0] == pytest.approx(I_MINUS, abs=1e-13)


def test_constant_orbit(grid):
    m = RateModel.constant(1.0)
    assert mapdyn.iterate_phi(m, 1.0, 5, grid) == pytest.approx([1.0] * 6)
    assert mapdyn.phi_prime(m, 0.5, grid) == pytest.approx(0.0, abs=1e-9)
    a = mapdyn.classify(m, grid)
    assert a.classification is mapdyn.Regime.CONVERGING and a.period2 is None


def test_contracting_orbit(grid):
    m = RateModel.tanh_phi(0.5, 0.5)
    orbit = np.array(mapdyn.iterate_phi(m, 0.1, 30, grid))
    err = np.abs(orbit - 0.75)
    assert err[-1] < 1e-8
    assert np.all(err[1:] <= 0.5 * err[:-1] + 1e-14)


def test_phi_prime_tanh(grid):
    m = RateModel.tanh_phi(0.5, 1.5)
    d = mapdyn.phi_prime(m, 0.75, grid)
    assert d == pytest.approx(-1.5, abs=1e-6)
    h = 1e-5 * m.rM
    single = mapdyn._central(lambda v: mapdyn.phi(m, v, grid), 0.75, h)
    assert abs(single - d) < 1e-6


def test_phi_prime_boundary_warns(grid, caplog):
    m = RateModel.tanh_phi(0.5, 1.5)
    with caplog.at_level(logging.WARNING):
        d = mapdyn.phi_prime(m, 0.0, grid)
    assert "one-sided" in caplog.text
    assert d < 0


def test_period2_pair(grid):
    m = RateModel.tanh_phi(0.5, 1.5)
    lo, hi = mapdyn.period2_points(m, grid)
    o_lo, o_hi = tanh_pair_oracle(1.5)
    assert abs(lo - o_lo) < 1e-10 and abs(hi - o_hi) < 1e-10
    assert abs(lo + hi - 1.5) < 1e-8
    assert lo < 0.75 < hi
    assert abs(mapdyn.psi(m, lo, grid) - lo) < 1e-10
    assert abs(mapdyn.psi(m, hi, grid) - hi) < 1e-10
    orbit = mapdyn.iterate_phi(m, lo, 6, grid)
    assert np.allclose(orbit[::2], lo, atol=1e-10) and np.allclose(orbit[1::2], hi, atol=1e-10)


def test_no_pair_when_slope_mild(grid):
    assert mapdyn.period2_points(RateModel.tanh_phi(0.5, 0.5), grid) is None


def test_classify(grid):
    a = mapdyn.classify(RateModel.tanh_phi(0.5, 1.5), grid)
    assert a.classification is mapdyn.Regime.PERIOD2
    assert a.phi_prime_at_fp < -1
    b = mapdyn.classify(RateModel.tanh_phi(0.5, 0.9), grid)
    assert b.classification is mapdyn.Regime.CONVERGING


def test_psi_monotone_and_chain_rule(grid):
    m = RateModel.step(0.5, lambda I: 0.5 + 2 * I)
    I = np.linspace(0, m.rM, 1000)
    p = np.array([mapdyn.psi(m, v, grid) for v in I])
    assert np.all(np.diff(p) >= -1e-12)
    I_bar = mapdyn.fixed_point_phi(m, grid).I_bar
    d1 = mapdyn.phi_prime(m, I_bar, grid)
    h = 1e-4
    d2 = (mapdyn.psi(m, I_bar + h, grid) - mapdyn.psi(m, I_bar - h, grid)) / (2 * h)
    assert d2 == pytest.approx(d1 ** 2, rel=1e-5)


def test_map_table_shape(grid):
    tab = mapdyn.map_table(RateModel.tanh_phi(0.5, 1.5), 11, grid)
    assert tab.shape == (11, 3)
    assert tab[5, 1] == pytest.approx(0.75, abs=1e-12)
