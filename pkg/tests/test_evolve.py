import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from glblowup.evolve import (Controls, SubstepBlowup, apply_linear, apply_nonlinear,
                             escalating_thresholds, extrapolate_hitting_times, from_gl2_values,
                             run, run_to_blowup, strang_step, to_gl2_frame)
from glblowup.field import FieldState, Params, make_grid, sample_profile
from glblowup._validation import ValidationError


def heat_kernel_gaussian(r, dim, a):
    """Solution of u_t = e^{i theta} lap u from exp(-r^2) with a = e^{i theta} t."""
    return (1 + 4 * a) ** (-dim / 2) * np.exp(-r ** 2 / (1 + 4 * a))


@pytest.mark.parametrize("theta", [0.0, 0.7, math.pi / 2])
def test_periodic_linear_exact(theta):
    g = make_grid("periodic1d", 1, 40.0, 512)
    u0 = np.exp(-g.nodes ** 2)
    out = apply_linear(g, u0, 0.3, theta)
    exact = heat_kernel_gaussian(g.nodes, 1, complex(math.cos(theta), math.sin(theta)) * 0.3)
    assert np.max(np.abs(out - exact)) < 1e-12


@pytest.mark.parametrize("dim", [2, 3])
@pytest.mark.parametrize("method", ["expm", "crank_nicolson"])
def test_radial_linear_against_kernel(dim, method):
    g = make_grid("radial", dim, 12.0, 600)
    rot = complex(math.cos(0.5), math.sin(0.5))
    out = apply_linear(g, np.exp(-g.radii ** 2), 0.2, 0.5, method, cn_substeps=40)
    exact = heat_kernel_gaussian(g.radii, dim, rot * 0.2)
    # spatial error of the cell-centred grid at dr = 0.02
    assert np.max(np.abs(out - exact)) < 1e-4


def test_crank_nicolson_converges_to_expm():
    g = make_grid("radial", 2, 12.0, 300)
    u0 = np.exp(-g.radii ** 2)
    ref = apply_linear(g, u0, 0.2, 0.5, "expm")
    errs = [np.max(np.abs(apply_linear(g, u0, 0.2, 0.5, "crank_nicolson", cn_substeps=m) - ref))
            for m in (10, 20, 40)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.15)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.15)


@pytest.mark.parametrize("theta,gamma,rate", [(0.0, 0.0, 0.0), (0.4, -0.3, 0.0),
                                              (math.pi / 2, 0.2, 0.0), (0.3, 0.0, 0.5)])
def test_nonlinear_substep_against_ode(theta, gamma, rate):
    p = Params(2.0, gamma, theta, forcing_rate=rate)
    w0 = np.array([0.3 + 0.4j, 1.1, 0.05j])

    def rhs(t, y):
        w = y[:3] + 1j * y[3:]
        d = p.rotation * p.f(t) * np.abs(w) ** 2 * w + gamma * w
        return np.concatenate([d.real, d.imag])

    sol = solve_ivp(rhs, (0.1, 0.3), np.concatenate([w0.real, w0.imag]), rtol=1e-12,
                    atol=1e-14)
    exact = sol.y[:3, -1] + 1j * sol.y[3:, -1]
    assert np.max(np.abs(apply_nonlinear(w0, 0.1, 0.2, p) - exact)) < 1e-9


def test_substep_blowup_raised():
    p = Params(2.0)
    with pytest.raises(SubstepBlowup):
        apply_nonlinear(np.array([1.0 + 0j]), 0.0, 0.6, p)   # ODE blows up at t = 1/2


def test_strang_second_order():
    g = make_grid("periodic1d", 1, 20.0, 256)
    s = sample_profile("gaussian", {"c": 1.0}, g)
    p = Params(2.0, 0.2, 0.5)

    def integrate(n):
        st = s
        for _ in range(n):
            st = strang_step(st, 0.2 / n, p)
        return st.values

    ref = integrate(640)
    errs = [np.max(np.abs(integrate(n) - ref)) for n in (20, 40, 80)]
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.1)


def test_uniform_field_blowup_time():
    # spatially constant data: |u|^{-alpha} decreases at rate alpha, T = c^{-alpha}/alpha
    g = make_grid("periodic1d", 1, 10.0, 32)
    c = 1.5
    s = FieldState(g, np.full(g.n, c, dtype=complex))
    traj, verdict = run_to_blowup(s, Params(2.0), Controls(dt0=1e-3, t_budget=2.0,
                                                           leak_tol=None))
    assert traj.stop_reason == "sup_norm_threshold"
    assert verdict.blew_up
    assert verdict.t_estimate == pytest.approx(1 / (2 * c * c), rel=1e-4)
    lo, hi = verdict.t_bracket
    assert lo <= verdict.t_estimate <= hi


def test_aitken_exact_for_geometric():
    T, c, rho = 0.8, 0.3, 0.25
    times = [T - c * rho ** k for k in range(5)]
    v = extrapolate_hitting_times([1, 2, 4, 8, 16], times)
    assert v.blew_up and v.t_estimate == pytest.approx(T, rel=1e-12)
    bad = extrapolate_hitting_times([1, 2, 4], [0.1, 0.2, 0.4])
    assert not bad.blew_up


def test_escalating_thresholds():
    g = make_grid("periodic1d", 1, 10.0, 32)
    s = FieldState(g, np.full(g.n, 2.0, dtype=complex))
    assert escalating_thresholds(s) == (20.0, 40.0, 80.0, 160.0, 320.0)


def test_output_times_hit_exactly():
    g = make_grid("periodic1d", 1, 20.0, 128)
    s = sample_profile("gaussian", {}, g)
    times = tuple(np.round(np.arange(1, 11) * 0.01, 12))
    traj = run(s, Params(2.0, 0.1, 0.3), Controls(dt0=3e-3, t_budget=0.1, output_times=times))
    snap_t = [x.time for x in traj.snapshots]
    for t in times:
        assert min(abs(t - st) for st in snap_t) < 1e-14
    assert traj.stop_reason == "budget_reached"
    assert traj.t_end == pytest.approx(0.1, abs=1e-14)


def test_boundary_leak_detected():
    g = make_grid("radial", 1, 6.0, 200)
    s = sample_profile("gaussian", {"c": 0.1}, g)
    traj = run(s, Params(2.0), Controls(dt0=1e-2, t_budget=5.0, leak_tol=1e-6))
    assert traj.stop_reason == "boundary_leak"


def test_run_validation():
    g = make_grid("periodic1d", 1, 20.0, 64)
    s = sample_profile("gaussian", {"c": 3.0}, g)
    with pytest.raises(ValidationError):
        run(s, Params(2.0), Controls(sup_threshold=1.0))
    with pytest.raises(ValidationError):
        run(s, Params(2.0), Controls(dt0=-1.0))


def test_gl2_frame_round_trip():
    g = make_grid("periodic1d", 1, 20.0, 256)
    s = sample_profile("gaussian", {"c": 1.2}, g)
    p = Params(2.0, -0.5, 0.5)
    s2, p2, meta = to_gl2_frame(s, p)
    assert p2.variant == "GL2" and s2.grid.extent == pytest.approx(20.0 / meta["mu"])
    back = from_gl2_values(s2.values, 0.0, p)
    assert np.max(np.abs(back - s.values)) < 1e-14
    with pytest.raises(ValidationError):
        to_gl2_frame(s, Params(2.0, 0.5, 0.5))


def test_determinism():
    g = make_grid("periodic1d", 1, 20.0, 256)
    s = sample_profile("gaussian", {"c": 1.5}, g)
    p = Params(2.0, 0.1, 0.2)
    a = run(s, p, Controls(t_budget=0.05))
    b = run(s, p, Controls(t_budget=0.05))
    assert np.array_equal(a.final.values, b.final.values)
