import math

import numpy as np
import pytest

from telapsed.errors import TailError
from telapsed.grid import Grid
from telapsed.model import RateModel, phi_step
from telapsed.steadystate import cumulative_rate, fixed_point_phi, phi, phi_detail, stationary_density


def test_cumulative_rate():
    assert cumulative_rate(RateModel.constant(2.0), 3.0, 0.1) == pytest.approx(6.0)
    assert cumulative_rate(RateModel.step(0.5, 1.0), 2.0, 0.4, dx=1e-2) == pytest.approx(2.0, abs=1e-12)
    assert cumulative_rate(RateModel.step(0.5, 1.0), 0.0, 0.4) == 0.0


def test_constant_phi_and_density():
    m = RateModel.constant(1.0)
    g = Grid.for_model(m, 1e-2)
    assert phi(m, 0.3, g) == pytest.approx(1.0, abs=1e-12)
    n = stationary_density(m, 0.3, g)
    assert np.max(np.abs(n.values - np.exp(-g.nodes))) < 1e-12
    assert n.values[0] == pytest.approx(phi(m, 0.3, g))


@pytest.mark.parametrize("sigma", [0.0, 0.37, 1.0, 4.2])
def test_step_phi_closed_form(sigma):
    m = RateModel.step(0.5, sigma)
    assert phi(m, 0.4, Grid.for_model(m, 1e-2)) == pytest.approx(phi_step(sigma, 0.5), abs=1e-12)


def test_step_phi_range():
    m = RateModel.step(0.5, lambda I: 3 * I)
    g = Grid.for_model(m, 1e-2)
    for I in np.linspace(0, 1.5, 7):
        assert 0.5 <= phi(m, I, g) <= 1.5


@pytest.mark.parametrize("model", [RateModel.constant(0.7), RateModel.step(0.5, 1.3),
                                   RateModel.tanh_phi(0.5, 0.9)])
def test_stationary_mass(model):
    n = stationary_density(model, 0.6, Grid.for_model(model, 1e-2))
    assert abs(n.mass - 1) < 1e-8
    assert np.all(n.values >= 0)


def test_tail_bracket_too_wide():
    m = RateModel.step(0.5, 1.0)
    with pytest.raises(TailError):
        phi_detail(m, 0.3, Grid.for_model(m, 0.1, x_max=5.0))


def test_fixed_point_dense_scan():
    m = RateModel.step(0.5, lambda I: I)
    ss = fixed_point_phi(m, Grid.for_model(m, 1e-2))
    # the 10^6-point scan of phi_step(I) - I brackets the root in [0.877146, 0.8771475]
    assert 0.877146 <= ss.I_bar <= 0.8771475
    assert ss.residual <= 1e-12 * m.rM


def test_fixed_point_tanh():
    m = RateModel.tanh_phi(0.5, 1.5)
    assert fixed_point_phi(m, Grid.for_model(m, 1e-2)).I_bar == pytest.approx(0.75, abs=1e-12)


def test_fixed_point_needs_inhibition():
    m = RateModel.step(0.5, lambda I: 1.5 - I)
    with pytest.raises(ValueError):
        fixed_point_phi(m)


def test_stationary_profile_is_phi_times_survival():
    m = RateModel.step(0.5, 1.0)
    g = Grid.for_model(m, 1e-2)
    n = stationary_density(m, 0.2, g)
    R = np.where(g.nodes < 1, 0.5 * g.nodes, 0.5 + 1.5 * (g.nodes - 1))
    assert np.max(np.abs(n.values - phi_step(1.0, 0.5) * np.exp(-R))) < 1e-12


def test_integrability_check_step_model():
    from telapsed.steadystate import check_integrability
    m = RateModel.step(0.5, lambda I: 0.5 + I)
    c = check_integrability(m, Grid.for_model(m, 1e-2, x_max=30))
    assert c.ok and np.isfinite(c.survival_at_rM)
    # R jumps by one unit of slope past sigma(I); d_I R = -1 there
    assert 0.1 < c.sup_dI_moment < 2.0


def test_integrability_check_flags_vanishing_rate(caplog):
    from telapsed.steadystate import check_integrability
    x = np.linspace(0, 20, 201)
    m = RateModel.tabulated(x, [0.0, 1.0], np.vstack([np.ones(201), np.zeros(201)]))
    with caplog.at_level("WARNING"):
        c = check_integrability(m, Grid.for_model(m, 1e-2, x_max=20))
    assert not c.ok and c.survival_at_rM == np.inf
    assert "integrability" in caplog.text
