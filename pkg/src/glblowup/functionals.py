"""Scalar functionals of a field and residuals of their evolution laws.

All integrals use the grid quadrature.  On radial grids the Dirichlet
integral and the momentum live on cell faces, which makes the discrete
summation-by-parts identities exact; on periodic grids they are spectral.
Variance on a periodic grid uses the smooth truncation of ``|x|^2`` from
:func:`glblowup.cutoff.periodic_cutoff` because ``|x|^2`` is not periodic.
"""

from dataclasses import dataclass, asdict, field as dc_field
import math

import numpy as np

from .cutoff import periodic_cutoff
from .field import (PERIODIC, FieldState, dirichlet_form, gradient_pairing,
                    integrate, laplacian)
from ._validation import ValidationError, check_positive

REPORT_COLUMNS = ("time", "mass", "grad_sq", "pot", "energy", "nehari", "energy_c",
                  "nehari_c", "variance", "momentum", "bca", "sup_norm", "ut_sq")


@dataclass(frozen=True)
class FunctionalReport:
    time: float
    mass: float
    grad_sq: float
    pot: float
    energy: float
    nehari: float
    energy_c: float
    nehari_c: float
    variance: float
    momentum: float
    bca: float
    sup_norm: float
    ut_sq: float = math.nan   # ||u_t||_2^2 when the caller supplies the equation

    def as_row(self):
        return [getattr(self, c) for c in REPORT_COLUMNS]


def _variance_weights(grid):
    """Return ``(Psi at nodes, r -> Psi'(r)/2)`` for variance and momentum."""
    if grid.kind == PERIODIC:
        fam = periodic_cutoff(grid.extent)
        psi = fam.psi(grid.nodes)
        return psi, lambda x: 0.5 * fam.derivatives(x)["psi_r"]
    return grid.radii ** 2, lambda r: r


def variance(state):
    psi, _ = _variance_weights(state.grid)
    return float(integrate(state.grid, psi * np.abs(state.values) ** 2))


def momentum(state):
    """``Im int (x . grad conj(u)) u``, i.e. ``-Im int conj(u) r u_r``."""
    _, half_dpsi = _variance_weights(state.grid)
    return -gradient_pairing(state.grid, state.values, half_dpsi).imag


def time_derivative(state, params):
    """Right-hand side ``e^{i theta}(lap u + f |u|^alpha u) + g u`` of the equation."""
    u = state.values
    rhs = laplacian(state.grid, u) + params.f(state.time) * np.abs(u) ** params.alpha * u
    return params.rotation * rhs + params.linear_coefficient * u


def report(state, alpha, shift=0.0, params=None):
    """All scalar functionals of ``state``.

    ``shift`` is the constant ``c`` in ``E_c = E - (c/2) mass`` and
    ``I_c = I - c mass``.  When ``params`` is given, ``ut_sq`` holds the
    squared L2 norm of the equation's right-hand side.
    """
    alpha = check_positive(alpha, "alpha")
    grid, u = state.grid, state.values
    mod = np.abs(u)
    mass = float(integrate(grid, mod ** 2))
    grad_sq = dirichlet_form(grid, u)
    pot = float(integrate(grid, mod ** (alpha + 2)))
    energy = 0.5 * grad_sq - pot / (alpha + 2)
    nehari = grad_sq - pot
    N = grid.dim
    ut_sq = math.nan
    if params is not None:
        ut_sq = float(integrate(grid, np.abs(time_derivative(state, params)) ** 2))
    return FunctionalReport(
        time=state.time,
        mass=mass,
        grad_sq=grad_sq,
        pot=pot,
        energy=energy,
        nehari=nehari,
        energy_c=energy - 0.5 * shift * mass,
        nehari_c=nehari - shift * mass,
        variance=variance(state),
        momentum=momentum(state),
        bca=0.5 * grad_sq - N * alpha / (4 * (alpha + 2)) * pot,
        sup_norm=float(mod.max()),
        ut_sq=ut_sq,
    )


def shifted(rep, c):
    """``(E_c, I_c)`` of a report for another shift ``c``."""
    return rep.energy - 0.5 * c * rep.mass, rep.nehari - c * rep.mass


def scaled_state(state, mu, alpha, grid=None):
    """``mu^{2/alpha} u(mu x)`` sampled on ``grid`` (default: the grid scaled by 1/mu).

    On the default grid the samples are exactly the original samples times
    ``mu^{2/alpha}``.
    """
    from .field import make_grid
    if grid is None:
        src = state.grid
        grid = make_grid(src.kind, src.dim, src.extent / mu, src.n)
        vals = mu ** (2.0 / alpha) * state.values
    else:
        r = grid.nodes * mu
        src_nodes = state.grid.nodes
        vals = mu ** (2.0 / alpha) * (np.interp(r, src_nodes, state.values.real)
                                     + 1j * np.interp(r, src_nodes, state.values.imag))
    return FieldState(grid, vals, state.time)


# -- identity residuals -----------------------------------------------------

@dataclass
class ResidualReport:
    """Normalised residuals of the evolution laws on the report time grid."""

    times: np.ndarray
    mass_law: np.ndarray = None
    energy_law: np.ndarray = None
    mass_exact: np.ndarray = None
    variance_law: np.ndarray = None
    momentum_law: np.ndarray = None
    fallback_ut: bool = False
    flags: dict = dc_field(default_factory=dict)

    def max(self, name):
        arr = getattr(self, name)
        if arr is None or len(arr) == 0:
            return None
        return float(np.max(np.abs(arr)))

    def summary(self):
        return {k: self.max(k) for k in ("mass_law", "energy_law", "mass_exact",
                                         "variance_law", "momentum_law")}


def _series(reports, name):
    return np.array([getattr(r, name) for r in reports], dtype=float)


def _normalised(lhs, *terms):
    scale = max(np.max(np.abs(lhs)), *(np.max(np.abs(t)) for t in terms))
    resid = lhs - sum(terms)
    return resid / scale if scale > 0 else resid


def identity_residuals(traj, params, dim=None):
    """Residuals of the mass, energy, variance and momentum laws along ``traj``.

    Time derivatives are second-order finite differences on the (possibly
    non-uniform) report times; each residual is divided by the largest
    magnitude among its terms over the whole series.  Interior points only.
    """
    reports = list(traj.reports)
    if len(reports) < 3:
        raise ValidationError("identity_residuals needs at least 3 reports")
    t = _series(reports, "time")
    if np.any(np.diff(t) <= 0):
        raise ValidationError("report times must be strictly increasing")
    dim = traj.initial.grid.dim if dim is None else dim
    alpha, gamma = params.alpha, params.linear_coefficient.real
    c, s = math.cos(params.theta), math.sin(params.theta)
    if params.theta == math.pi / 2:
        c = 0.0
    mass = _series(reports, "mass")
    nehari = _series(reports, "nehari")
    energy = _series(reports, "energy")
    ut_sq = _series(reports, "ut_sq")
    fallback = bool(np.any(np.isnan(ut_sq)))
    inner = slice(1, -1)
    f = np.asarray(params.f(t), dtype=float) * np.ones_like(t)
    nehari_f = _series(reports, "grad_sq") - f * _series(reports, "pot")

    def ddt(y):
        return np.gradient(y, t, edge_order=2)[inner]

    out = ResidualReport(times=t[inner], fallback_ut=fallback)
    out.mass_law = _normalised(ddt(mass), 2 * gamma * mass[inner], -2 * c * nehari_f[inner])
    if params.variant == "GL" and params.forcing is None and params.forcing_rate == 0:
        if fallback:
            out.flags["energy_law"] = "skipped: no u_t data"
        else:
            lyap = energy - 0.5 * gamma * c * mass
            out.energy_law = _normalised(ddt(lyap), -c * ut_sq[inner],
                                         gamma * s * s * nehari[inner])
    if params.theta == math.pi / 2 and params.variant != "GL2":
        out.mass_exact = (mass - np.exp(2 * gamma * (t - t[0])) * mass[0]) / mass[0] \
            if mass[0] > 0 else mass.copy()
        var = _series(reports, "variance")
        mom = _series(reports, "momentum")
        grad_sq = _series(reports, "grad_sq")
        pot = _series(reports, "pot")
        out.variance_law = _normalised(ddt(var), -4 * mom[inner], 2 * gamma * var[inner])
        out.momentum_law = _normalised(
            ddt(mom), -2 * grad_sq[inner],
            dim * alpha / (alpha + 2) * f[inner] * pot[inner], 2 * gamma * mom[inner])
    return out
