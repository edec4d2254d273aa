"""Radial ground states of ``-lap Q - gamma Q = |Q|^alpha Q`` by shooting.

The radial ODE ``Q'' + (N-1)/r Q' + gamma Q + |Q|^alpha Q = 0`` is integrated
from ``Q(0) = eta``, ``Q'(0) = 0``.  The start is moved off the singular
point with the series ``Q(r) = eta + Q''(0) r^2 / 2``.  For ``gamma < 0`` the
two failure modes bracket the ground state:

* ``crosses_zero``: ``eta`` is too large, the profile overshoots through 0;
* ``diverges``: ``eta`` is too small, the profile turns back up while still
  positive (or exceeds ``10 eta``).

The mass, Dirichlet and potential integrals are accumulated along the
shot as extra ODE components, so the well depth and the Nehari residual do
not depend on a spatial grid.
"""

from dataclasses import dataclass, field as dc_field
import math

import numpy as np
from scipy.integrate import solve_ivp

from .field import FieldState, integrate, make_grid, sphere_measure, dirichlet_form
from ._validation import ValidationError

RTOL = 1e-12
ATOL = 1e-14
DECAY_TOL = 1e-12


@dataclass(frozen=True)
class ShotOutcome:
    kind: str           # crosses_zero | diverges | decayed | inconclusive
    eta: float
    r_event: float
    sign_changes: int = 0
    solution: object = dc_field(default=None, repr=False, compare=False)


def _series_start(eta, gamma, alpha, dim):
    q2 = (-gamma * eta - eta ** (alpha + 1)) / dim
    scale = 1.0 / math.sqrt(max(abs(gamma), eta ** alpha, 1e-300))
    r0 = 1e-5 * scale
    return r0, eta + 0.5 * q2 * r0 ** 2, q2 * r0


def _rhs(gamma, alpha, dim, with_integrals):
    area = sphere_measure(dim)

    def f(r, y):
        q, dq = y[0], y[1]
        aq = abs(q)
        d2 = -gamma * q - aq ** alpha * q - (dim - 1) * dq / r
        if not with_integrals:
            return (dq, d2)
        w = area * r ** (dim - 1)
        return (dq, d2, w * q * q, w * dq * dq, w * aq ** (alpha + 2))
    return f


def shoot(eta, gamma, alpha, dim, r_max=60.0, count_oscillations=False):
    """Integrate the radial ODE from ``Q(0) = eta`` and classify the outcome."""
    if not eta > 0:
        raise ValidationError("eta must be positive")
    if dim < 1:
        raise ValidationError("dim must be >= 1")
    r0, q0, dq0 = _series_start(eta, gamma, alpha, dim)

    def cross(r, y):
        return y[0]
    cross.terminal = not count_oscillations

    def blow(r, y):
        return abs(y[0]) - 10.0 * eta
    blow.terminal = True

    def turn(r, y):
        return y[1] if y[0] > 0 else -1.0
    turn.terminal = True
    turn.direction = 1

    def decay(r, y):
        return abs(y[0]) + abs(y[1]) - DECAY_TOL
    decay.terminal = True
    decay.direction = -1

    events = [cross, blow, decay] if count_oscillations else [cross, blow, turn, decay]
    sol = solve_ivp(_rhs(gamma, alpha, dim, False), (r0, r_max), (q0, dq0),
                    method="DOP853", rtol=RTOL, atol=ATOL, events=events,
                    dense_output=True)
    ev = sol.t_events
    if count_oscillations:
        n = len(ev[0])
        if len(ev[1]):
            return ShotOutcome("diverges", eta, float(ev[1][0]), n, sol)
        if len(ev[2]):
            return ShotOutcome("decayed", eta, float(ev[2][0]), n, sol)
        return ShotOutcome("inconclusive", eta, float(sol.t[-1]), n, sol)
    if len(ev[0]):
        return ShotOutcome("crosses_zero", eta, float(ev[0][0]), 1, sol)
    if len(ev[1]) or len(ev[2]):
        r = float(ev[1][0] if len(ev[1]) else ev[2][0])
        return ShotOutcome("diverges", eta, r, 0, sol)
    if len(ev[3]):
        return ShotOutcome("decayed", eta, float(ev[3][0]), 0, sol)
    return ShotOutcome("inconclusive", eta, float(sol.t[-1]), 0, sol)


@dataclass(frozen=True, eq=False)
class GroundState:
    gamma: float
    alpha: float
    dim: int
    eta0: float
    profile: FieldState = dc_field(repr=False)
    well_depth: float = 0.0
    nehari_residual: float = 0.0
    mass: float = 0.0
    grad_sq: float = 0.0
    pot: float = 0.0
    r_cut: float = 0.0
    eta_bracket: tuple = (0.0, 0.0)
    _dense: object = dc_field(default=None, repr=False)
    _tail: tuple = dc_field(default=(0.0, 0.0, 1.0), repr=False)

    def evaluate(self, r):
        """Sample ``Q`` at radii ``r`` (asymptotic exponential tail past ``r_cut``)."""
        r = np.abs(np.asarray(r, dtype=float))
        out = np.empty_like(r)
        inside = r <= self.r_cut
        r_start = self._dense.t_min
        ri = np.maximum(r[inside], r_start)
        vals = self._dense(ri)[0]
        near0 = r[inside] < r_start
        if np.any(near0):
            q2 = (-self.gamma * self.eta0 - self.eta0 ** (self.alpha + 1)) / self.dim
            vals = np.where(near0, self.eta0 + 0.5 * q2 * r[inside] ** 2, vals)
        out[inside] = vals
        q_c, r_c, k = self._tail
        ro = r[~inside]
        out[~inside] = q_c * (r_c / ro) ** ((self.dim - 1) / 2.0) * np.exp(-k * (ro - r_c))
        return out

    def metadata(self):
        return {"gamma": self.gamma, "alpha": self.alpha, "dim": self.dim,
                "eta0": self.eta0, "well_depth": self.well_depth,
                "nehari_residual": self.nehari_residual, "mass": self.mass,
                "grad_sq": self.grad_sq, "pot": self.pot, "r_cut": self.r_cut}


def _bracket(gamma, alpha, dim, r_max):
    base = (-gamma) ** (1.0 / alpha)
    lo = hi = None
    eta = base
    out = shoot(eta, gamma, alpha, dim, r_max)
    if out.kind == "crosses_zero":
        hi = eta
        while lo is None and eta > 1e-6:
            eta /= 2.0
            o = shoot(eta, gamma, alpha, dim, r_max)
            if o.kind == "diverges":
                lo = eta
            elif o.kind == "crosses_zero":
                hi = eta
    elif out.kind == "diverges":
        lo = eta
        while hi is None and eta < 1e6:
            eta *= 2.0
            o = shoot(eta, gamma, alpha, dim, r_max)
            if o.kind == "crosses_zero":
                hi = eta
            elif o.kind == "diverges":
                lo = eta
    if lo is None or hi is None:
        raise ValidationError(
            f"no shooting bracket in [1e-6, 1e6]: low={lo}, high={hi}, first={out.kind}")
    return lo, hi


def find_ground_state(gamma=-1.0, alpha=2.0, dim=1, tol=1e-13, r_max=None,
                      grid_extent=None, grid_n=4000):
    """Bisect on ``eta`` between a diverging and a zero-crossing shot.

    ``tol`` is the relative width at which bisection stops.  The returned
    profile is sampled on a radial grid of ``grid_n`` nodes.
    """
    if not gamma < 0:
        raise ValidationError("ground states require gamma < 0")
    if (dim - 2) * alpha >= 4:
        raise ValidationError("ground states require (dim - 2) * alpha < 4")
    k = math.sqrt(-gamma)
    if r_max is None:
        r_max = 80.0 / k
    lo, hi = _bracket(gamma, alpha, dim, r_max)
    while (hi - lo) > tol * hi:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        kind = shoot(mid, gamma, alpha, dim, r_max).kind
        if kind == "crosses_zero":
            hi = mid
        elif kind == "diverges":
            lo = mid
        else:
            break
    eta0 = 0.5 * (lo + hi)
    shot = shoot(lo, gamma, alpha, dim, r_max)
    sol = shot.solution
    # cut where Q is small but the two bracketing shots have not yet separated
    rr = np.linspace(sol.t[0], shot.r_event, 20001)
    q = sol.sol(rr)[0]
    dq = sol.sol(rr)[1]
    small = np.nonzero((q < 1e-7 * eta0) | (dq >= 0))[0]
    idx = small[0] if len(small) else len(rr) - 1
    # back off to where Q is still decreasing cleanly
    r_cut = float(rr[max(idx - 1, 1)])
    q_c = float(sol.sol(r_cut)[0])
    r0, q0, dq0 = _series_start(lo, gamma, alpha, dim)
    area = sphere_measure(dim)
    aug = solve_ivp(_rhs(gamma, alpha, dim, True), (r0, r_cut),
                    (q0, dq0, 0.0, 0.0, 0.0), method="DOP853", rtol=RTOL, atol=ATOL)
    # interior ball r < r0 and exponential tail beyond r_cut
    ball = area * r0 ** dim / dim
    tail = area * r_cut ** (dim - 1) * q_c ** 2 / (2.0 * k)
    mass = aug.y[2, -1] + ball * lo ** 2 + tail
    grad_sq = aug.y[3, -1] + k * k * tail
    pot = aug.y[4, -1] + ball * lo ** (alpha + 2)
    well = 0.5 * grad_sq - pot / (alpha + 2) - 0.5 * gamma * mass
    nehari = grad_sq - pot - gamma * mass
    if grid_extent is None:
        grid_extent = r_cut + 30.0 / k
    grid = make_grid("radial", dim, grid_extent, grid_n)
    gs = GroundState(gamma, alpha, dim, eta0, None, well, nehari, mass, grad_sq, pot,
                     r_cut, (lo, hi), sol.sol, (q_c, r_cut, k))
    profile = FieldState(grid, gs.evaluate(grid.nodes).astype(complex), 0.0)
    object.__setattr__(gs, "profile", profile)
    return gs


def scaled_ground_state(gs, gamma):
    """``Q_gamma(x) = (-gamma)^{1/alpha} Q_{-1}((-gamma)^{1/2} x)`` from ``Q_{-1}``."""
    if gs.gamma != -1.0:
        raise ValidationError("scaling starts from the gamma = -1 ground state")
    return find_ground_state(gamma, gs.alpha, gs.dim)


def well_depth_scaling(alpha, dim, gamma):
    """Exponent law ``E_gamma(Q_gamma) = (-gamma)^{1 + 2/alpha - N/2} E_{-1}(Q_{-1})``."""
    return (-gamma) ** (1.0 + 2.0 / alpha - dim / 2.0)


def _shifted_energy(grid, values, alpha, c):
    mod = np.abs(values)
    m = float(integrate(grid, mod ** 2))
    g = dirichlet_form(grid, values)
    p = float(integrate(grid, mod ** (alpha + 2)))
    return 0.5 * g - p / (alpha + 2) - 0.5 * c * m, g - p - c * m, (m, g, p)


def nehari_rescale(grid, values, alpha, gamma):
    """Scale ``w`` by ``t*`` so that ``I_gamma(t* w) = 0``."""
    _, _, (m, g, p) = _shifted_energy(grid, values, alpha, gamma)
    if p <= 0:
        raise ValidationError("cannot rescale the zero field onto the Nehari manifold")
    return ((g - gamma * m) / p) ** (1.0 / alpha) * values


def well_thresholds(gs, samples=None, tol=1e-3):
    """Well depth and a sampled check of the Nehari-manifold infimum.

    ``samples`` is an iterable of complex arrays on ``gs.profile.grid``.
    Each is rescaled onto ``I_gamma = 0`` and its ``E_gamma`` compared with
    the depth evaluated on the same grid.  Returns
    ``(well_depth, {"min_energy", "grid_depth", "passed", "count"})``.
    """
    grid = gs.profile.grid
    grid_depth, _, _ = _shifted_energy(grid, gs.profile.values, gs.alpha, gs.gamma)
    energies = []
    for w in samples or ():
        v = nehari_rescale(grid, np.asarray(w, dtype=complex), gs.alpha, gs.gamma)
        energies.append(_shifted_energy(grid, v, gs.alpha, gs.gamma)[0])
    min_e = min(energies) if energies else math.inf
    check = {"min_energy": min_e, "grid_depth": grid_depth,
             "passed": bool(min_e >= grid_depth * (1 - tol)), "count": len(energies)}
    return gs.well_depth, check


def shifted_functionals(gs, values):
    """``(E_gamma, I_gamma)`` of samples on the ground-state grid."""
    e, i, _ = _shifted_energy(gs.profile.grid, values, gs.alpha, gs.gamma)
    return e, i
