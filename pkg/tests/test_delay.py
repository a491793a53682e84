import logging
import math

import numpy as np
import pytest

from telapsed import delay, mapdyn
from telapsed.diagnostics import decay_rate
from telapsed.grid import Grid, project
from telapsed.model import RateModel
from telapsed.steadystate import fixed_point_phi, stationary_density
from conftest import weak_model


def test_history_ring():
    h = delay.ActivityHistory(3, 0.4)
    out = []
    for v in [1.0, 2.0, 3.0, 4.0, 5.0]:
        out.append(h.delayed())
        h.push(v)
    assert out == [0.4, 0.4, 0.4, 1.0, 2.0]
    with pytest.raises(ValueError):
        delay.ActivityHistory(0, 0.1)


def test_snap_delay_warns(caplog):
    with caplog.at_level(logging.WARNING):
        assert delay.snap_delay(1.03, 0.1) == 10
    assert "snapped" in caplog.text
    assert delay.snap_delay(2.0, 0.1) == 20


def test_stationary_delayed_run():
    m = RateModel.step(0.5, lambda I: 0.5 + I)
    g = Grid.for_model(m, 2e-2, x_max=30)
    ss = fixed_point_phi(m, g)
    prof = delay.limit_profile(m, ss.I_bar, 3, g)
    assert np.allclose(prof.iterates, ss.I_bar, atol=1e-12)
    _, tr = delay.run_delayed(m, ss.density, ss.I_bar, 2.0, 6.0, profile=prof)
    assert np.max(np.abs(tr.I - ss.I_bar)) < 1e-12
    err = delay.cesaro_error(tr, prof, 3)
    assert err.activity < 1e-10 and err.density < 1e-10
    with pytest.raises(ValueError):
        delay.cesaro_error(tr, delay.limit_profile(m, ss.I_bar, 5, g), 5)


def test_limit_profile_period2():
    m = RateModel.tanh_phi(0.5, 1.5)
    g = Grid(1e-2, 4000)
    lo, hi = mapdyn.period2_points(m, g)
    prof = delay.limit_profile(m, lo, 6, g)
    assert np.allclose(prof.iterates[0::2], lo, atol=1e-10)
    assert np.allclose(prof.iterates[1::2], hi, atol=1e-10)
    tau = np.array([0.2, 1.5, 2.7, 3.1])
    assert np.allclose(prof.activity(tau), [hi, lo, hi, lo], atol=1e-10)
    assert all(abs(d.mass - 1) < 1e-8 for d in prof.densities)


def test_limit_profile_contraction():
    m = RateModel.tanh_phi(0.5, 0.5)
    prof = delay.limit_profile(m, 0.2, 12, Grid(1e-2, 4000), with_densities=False)
    err = np.abs(np.array(prof.iterates) - 0.75)
    assert np.all(err[1:] <= 0.5 * err[:-1] + 1e-14)


def test_iterate_error_bound():
    C, D = delay.iterate_error_bound(0.0, 1.5, 0.5, 0.25, 4)
    assert np.allclose(C, 3.0) and np.allclose(D, 2.0)
    C, D = delay.iterate_error_bound(0.1, 1.5, 0.5, 0.25, 2)
    assert C[0] == pytest.approx(3.0) and C[1] == pytest.approx(6.9)
    assert D[1] == pytest.approx(2 + 2 * 0.1 * 3 / 0.25)
    with pytest.raises(ValueError):
        delay.iterate_error_bound(0.1, 1.5, 0.5, 0.5, 2)


def test_weak_nl_check():
    assert delay.weak_nl_check(RateModel.constant(1.0)) == delay.WeakNonlinearity(0.0, True, None, None)
    wk = delay.weak_nl_check(weak_model(), d=2.0)
    assert wk.omega == pytest.approx(0.5)
    assert wk.converges
    x0 = 2 * math.log(0.5 / (0.05 * 1.5))
    assert wk.x0 == pytest.approx(x0)
    assert wk.rate == pytest.approx(math.log(2) / (2 + x0))
    assert not delay.weak_nl_check(RateModel.tanh_phi(0.5, 1.5)).converges


@pytest.mark.parametrize("d", [1.0, 4.0])
def test_weak_nonlinearity_rate_and_envelopes(d):
    m = weak_model()
    g = Grid.for_model(m, 5e-2, x_max=40)
    ss = fixed_point_phi(m, g)
    n0 = project(m, g, lambda x: (x < 2).astype(float))
    lam = delay.weak_nl_check(m, d).rate
    _, tr = delay.run_delayed(m, n0, 0.2, d, 20 / lam, reference=ss.density)
    env = np.maximum.accumulate(np.abs(tr.I - ss.I_bar)[::-1])[::-1]
    assert decay_rate(tr.t, env) >= 0.9 * lam
    ex1, ex2 = delay.weak_nl_violations(tr, m, ss.I_bar, 0.2)
    assert ex1 <= 0 and ex2 <= 0


def test_period2_sup_errors_below_recursion():
    m = RateModel.tanh_phi(0.5, 1.5)
    g = Grid(2e-2, 2000)
    lo, _ = mapdyn.period2_points(m, g)
    N, d = 4, 20.0
    prof = delay.limit_profile(m, lo, N, g)
    _, tr = delay.run_delayed(m, stationary_density(m, lo, g), lo, d, N * d)
    alpha = m.r0 / 2
    C, _ = delay.iterate_error_bound(m.gamma_bar, m.rM, m.r0, alpha, N)
    s = tr.steps_per_delay
    for k in range(N):
        seg = slice(k * s, (k + 1) * s)
        local_t = tr.t[seg] - k * d
        sup = np.max(np.abs(tr.I[seg] - prof.iterates[k + 1]) * np.exp(alpha * local_t))
        assert sup <= C[k] * 1.05
