import math

import numpy as np
import pytest
from scipy.integrate import quad
from hypothesis import given, settings, strategies as st

from glblowup.evolve import Controls, run
from glblowup.field import FieldState, Params, make_grid, sample_profile
from glblowup.functionals import (identity_residuals, momentum, report, scaled_state, shifted,
                                  time_derivative, variance)
from glblowup._validation import ValidationError


def test_sech_functionals_closed_form():
    # sqrt(2) sech x: mass 4, |u'|^2 integral 4/3, |u|^4 integral 16/3
    g = make_grid("periodic1d", 1, 60.0, 4096)
    s = sample_profile("sech", {"c": math.sqrt(2.0)}, g)
    rep = report(s, 2.0, shift=-1.0)
    assert rep.mass == pytest.approx(4.0, rel=1e-12)
    assert rep.grad_sq == pytest.approx(4.0 / 3.0, rel=1e-10)
    assert rep.pot == pytest.approx(16.0 / 3.0, rel=1e-12)
    assert rep.energy == pytest.approx(2.0 / 3.0 - 4.0 / 3.0, rel=1e-10)
    assert rep.nehari_c == pytest.approx(0.0, abs=1e-10)
    assert rep.energy_c == pytest.approx(4.0 / 3.0, rel=1e-10)
    assert shifted(rep, -1.0) == pytest.approx((rep.energy_c, rep.nehari_c))


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_radial_gaussian_against_quad(dim):
    g = make_grid("radial", dim, 10.0, 4000)
    s = sample_profile("gaussian", {"c": 1.3, "sigma": 1.1}, g)
    rep = report(s, 2.0)
    area = {1: 2.0, 2: 2 * math.pi, 3: 4 * math.pi}[dim]
    u = lambda r: 1.3 * math.exp(-(r / 1.1) ** 2)  # noqa: E731
    du = lambda r: -2 * r / 1.1 ** 2 * u(r)  # noqa: E731
    w = lambda r: area * r ** (dim - 1)  # noqa: E731
    m = quad(lambda r: w(r) * u(r) ** 2, 0, 10)[0]
    gq = quad(lambda r: w(r) * du(r) ** 2, 0, 10)[0]
    p = quad(lambda r: w(r) * u(r) ** 4, 0, 10)[0]
    v = quad(lambda r: w(r) * r * r * u(r) ** 2, 0, 10)[0]
    assert rep.mass == pytest.approx(m, rel=1e-5)
    assert rep.grad_sq == pytest.approx(gq, rel=1e-5)
    assert rep.pot == pytest.approx(p, rel=1e-5)
    assert rep.variance == pytest.approx(v, rel=1e-5)
    assert rep.bca == pytest.approx(0.5 * gq - dim * 2 / 16 * p, rel=1e-4)


def test_momentum_of_chirp():
    # u = e^{-r^2} e^{i b r^2}: Im int conj(u) r u_r = 2 b int r^2 |u|^2
    g = make_grid("radial", 3, 10.0, 4000)
    b = 0.4
    r = g.radii
    s = FieldState(g, np.exp(-r ** 2 + 1j * b * r ** 2))
    assert momentum(s) == pytest.approx(-2 * b * variance(s), rel=1e-5)
    real = FieldState(g, np.exp(-r ** 2).astype(complex))
    assert momentum(real) == pytest.approx(0.0, abs=1e-14)


def test_periodic_variance_matches_r2_inside():
    g = make_grid("periodic1d", 1, 40.0, 2048)
    s = sample_profile("gaussian", {"c": 1.0}, g)
    assert variance(s) == pytest.approx(math.sqrt(math.pi / 2) / 4, rel=1e-8)


def test_time_derivative_closed_form():
    g = make_grid("periodic1d", 1, 40.0, 1024)
    s = sample_profile("gaussian", {"c": 1e-4}, g)
    p = Params(2.0, 0.5, 0.3)
    x = g.nodes
    lap = (4 * x ** 2 - 2) * s.values
    u = s.values
    exact = p.rotation * (lap + np.abs(u) ** 2 * u) + 0.5 * u
    assert np.max(np.abs(time_derivative(s, p) - exact)) < 1e-15


@settings(max_examples=20, deadline=None)
@given(mu=st.floats(0.5, 2.0), alpha=st.sampled_from([1.0, 2.0, 4.0]))
def test_scaling_law(mu, alpha):
    g = make_grid("radial", 2, 20.0, 800)
    s = sample_profile("gaussian", {"c": 1.0}, g)
    a, b = report(s, alpha), report(scaled_state(s, mu, alpha), alpha)
    N = 2
    assert b.mass == pytest.approx(mu ** (4 / alpha - N) * a.mass, rel=1e-12)
    assert b.grad_sq == pytest.approx(mu ** (4 / alpha + 2 - N) * a.grad_sq, rel=1e-12)


def test_identity_residuals_gl():
    g = make_grid("periodic1d", 1, 20.0, 512)
    s = sample_profile("gaussian", {"c": 1.0}, g)
    p = Params(2.0, 0.3, 0.4)
    traj = run(s, p, Controls(dt0=2e-4, t_budget=0.1, adaptive=False))
    res = identity_residuals(traj, p)
    assert res.max("mass_law") < 1e-5
    assert res.max("energy_law") < 1e-4


def test_identity_residuals_nls_exact_laws():
    g = make_grid("periodic1d", 1, 30.0, 1024)
    s = sample_profile("gaussian", {"c": 1.0}, g)
    p = Params(2.0, 0.2, variant="NLS")
    traj = run(s, p, Controls(dt0=2e-4, t_budget=0.1, adaptive=False))
    res = identity_residuals(traj, p)
    assert res.max("mass_exact") < 1e-10
    assert res.max("variance_law") < 1e-5
    assert res.max("momentum_law") < 1e-4


def test_identity_residuals_requires_reports():
    g = make_grid("periodic1d", 1, 20.0, 64)
    s = sample_profile("gaussian", {}, g)
    traj = run(s, Params(2.0), Controls(dt0=0.1, t_budget=0.1, adaptive=False))
    with pytest.raises(ValidationError):
        identity_residuals(traj, Params(2.0))
