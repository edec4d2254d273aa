"""Grids, quadrature, spatial derivatives and initial profiles.

Two kinds of grid are supported:

``radial``
    Radially symmetric fields in dimension ``dim``.  Nodes sit at cell
    centres ``r_i = (i + 1/2) dr`` with ``dr = R / n``; the quadrature weight of
    a node is the exact volume of its spherical shell, so constants integrate
    exactly.  The Laplacian is the conservative flux form, which is exactly
    self-adjoint for these weights.  ``u_r(0) = 0`` holds by reflection and
    ``u(R) = 0`` by an odd ghost node.  For ``dim = 1`` the surface measure is
    2, so radial integrals are full-line integrals of even functions.

``periodic1d``
    Uniform nodes on ``[-L/2, L/2)`` with trapezoid weights ``L / n`` and
    spectral differentiation.
"""

from dataclasses import dataclass, field as dc_field
from functools import cached_property
import math

import numpy as np
from scipy.linalg import eigh_tridiagonal

from ._validation import ValidationError, check_theta

RADIAL = "radial"
PERIODIC = "periodic1d"
KINDS = (RADIAL, PERIODIC)
MIN_NODES = 16


def sphere_measure(dim):
    """Surface measure of the unit sphere in R^dim (2 for dim = 1)."""
    return 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)


def _frozen(arr):
    arr = np.array(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Grid:
    kind: str
    dim: int
    extent: float
    n: int
    nodes: np.ndarray = dc_field(repr=False)
    weights: np.ndarray = dc_field(repr=False)

    @property
    def spacing(self):
        return self.extent / self.n

    @property
    def radii(self):
        """Distance of each node from the origin."""
        return self.nodes if self.kind == RADIAL else np.abs(self.nodes)

    @cached_property
    def faces(self):
        """Outer cell-face radii ``(i + 1) dr`` (radial grids only)."""
        return _frozen(self.spacing * np.arange(1, self.n + 1))

    @cached_property
    def face_areas(self):
        """Surface measure of each outer face times ``r^(dim-1)``."""
        return _frozen(sphere_measure(self.dim) * self.faces ** (self.dim - 1))

    @cached_property
    def wavenumbers(self):
        return _frozen(2.0 * np.pi * np.fft.fftfreq(self.n, d=self.spacing))

    @cached_property
    def laplacian_bands(self):
        """(lower, diag, upper) of the radial Laplacian matrix."""
        if self.kind != RADIAL:
            raise ValidationError("laplacian_bands is defined for radial grids")
        dr = self.spacing
        a = self.face_areas
        plus = a / (dr * self.weights)
        minus = np.zeros(self.n)
        minus[1:] = a[:-1] / (dr * self.weights[1:])
        diag = -plus - minus
        diag[-1] -= plus[-1]  # odd ghost node enforces u(R) = 0
        return _frozen(minus[1:]), _frozen(diag), _frozen(plus[:-1])

    @cached_property
    def laplacian_eigen(self):
        """Eigenpairs ``(lam, Q, sqrt_w)`` of the symmetrised radial Laplacian.

        ``L = W^{-1/2} Q diag(lam) Q^T W^{1/2}`` with ``W = diag(weights)``.
        """
        lower, diag, upper = self.laplacian_bands
        sqrt_w = np.sqrt(self.weights)
        off = upper * sqrt_w[:-1] / sqrt_w[1:]
        lam, vecs = eigh_tridiagonal(np.asarray(diag), off)
        return lam, vecs, sqrt_w

    def _key(self):
        return (self.kind, self.dim, float(self.extent), self.n)

    def __eq__(self, other):
        # nodes and weights are determined by the four defining fields
        if not isinstance(other, Grid):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        return (f"Grid(kind={self.kind!r}, dim={self.dim}, extent={self.extent}, "
                f"n={self.n})")


def make_grid(kind, dim, extent, n):
    """Build a uniform grid of ``n`` nodes."""
    if kind not in KINDS:
        raise ValidationError(f"unknown grid kind {kind!r}; expected one of {KINDS}")
    dim = int(dim)
    n = int(n)
    extent = float(extent)
    if dim < 1:
        raise ValidationError("dim must be >= 1")
    if n < MIN_NODES:
        raise ValidationError(f"n must be >= {MIN_NODES}, got {n}")
    if not (extent > 0 and math.isfinite(extent)):
        raise ValidationError("extent must be positive")
    h = extent / n
    if kind == PERIODIC:
        if dim != 1:
            raise ValidationError("periodic1d grids require dim = 1")
        nodes = -extent / 2 + h * np.arange(n)
        weights = np.full(n, h)
    else:
        nodes = h * (np.arange(n) + 0.5)
        edges = h * np.arange(n + 1)
        weights = sphere_measure(dim) / dim * np.diff(edges ** dim)
    return Grid(kind, dim, extent, n, _frozen(nodes), _frozen(weights))


def integrate(grid, samples):
    """Quadrature sum ``sum_i w_i f_i``; complex samples are allowed."""
    arr = np.asarray(samples)
    if arr.ndim != 1 or arr.shape[0] != grid.n:
        raise ValidationError(f"samples must have shape ({grid.n},), got {arr.shape}")
    return np.dot(grid.weights, arr)


@dataclass(frozen=True, eq=False)
class FieldState:
    grid: Grid
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        values = np.array(self.values, dtype=complex)
        if values.shape != (self.grid.n,):
            raise ValidationError(
                f"values must have shape ({self.grid.n},), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValidationError("FieldState samples must be finite")
        if self.time < 0:
            raise ValidationError("time must be >= 0")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "time", float(self.time))

    def replace(self, values=None, time=None):
        return FieldState(self.grid,
                          self.values if values is None else values,
                          self.time if time is None else time)

    @property
    def sup_norm(self):
        return float(np.max(np.abs(self.values)))

    @property
    def mass(self):
        return float(integrate(self.grid, np.abs(self.values) ** 2))


VARIANTS = ("GL", "GL2", "NLS")


@dataclass(frozen=True)
class Params:
    """Equation parameters.

    ``variant`` selects the linear term: ``GL`` uses ``gamma * u``; ``GL2``
    replaces it by ``-e^{i theta} v``; ``NLS`` is ``GL`` with theta pinned to
    pi/2.  The nonlinearity carries the prefactor ``f(t)``, which is
    ``exp(forcing_rate * t)`` unless a callable ``forcing`` is supplied.
    """

    alpha: float
    gamma: float = 0.0
    theta: float = 0.0
    variant: str = "GL"
    forcing_rate: float = 0.0
    forcing: object = None

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValidationError("alpha must be > 0")
        if self.variant not in VARIANTS:
            raise ValidationError(f"variant must be one of {VARIANTS}")
        theta = math.pi / 2 if self.variant == "NLS" else check_theta(self.theta)
        object.__setattr__(self, "theta", theta)
        if not math.isfinite(self.gamma):
            raise ValidationError("gamma must be finite")
        if self.forcing is not None and not callable(self.forcing):
            raise ValidationError("forcing must be callable")

    @property
    def rotation(self):
        """``e^{i theta}`` with the exact value 1j at theta = pi/2."""
        if self.theta == math.pi / 2:
            return 1j
        return complex(math.cos(self.theta), math.sin(self.theta))

    @property
    def linear_coefficient(self):
        """Coefficient ``g`` of the zeroth-order term ``g u``."""
        if self.variant == "GL2":
            return -self.rotation
        return complex(self.gamma, 0.0)

    def f(self, t):
        if self.forcing is not None:
            return self.forcing(t)
        return np.exp(self.forcing_rate * t)

    def f_prime(self, t, h=1e-6):
        if self.forcing is not None:
            return (self.forcing(t + h) - self.forcing(t - h)) / (2 * h)
        return self.forcing_rate * np.exp(self.forcing_rate * t)

    def v_frame(self):
        """Parameters for ``v = e^{-gamma t} u``: no linear term, ``f = e^{alpha gamma t}``."""
        if self.variant != "GL" and self.variant != "NLS":
            raise ValidationError("v_frame applies to GL and NLS parameters")
        return Params(self.alpha, 0.0, self.theta, self.variant,
                      forcing_rate=self.alpha * self.gamma)

    def as_dict(self):
        return {"alpha": self.alpha, "gamma": self.gamma, "theta": self.theta,
                "variant": self.variant, "forcing_rate": self.forcing_rate}


# -- derivatives -----------------------------------------------------------

def _ghosted(values):
    """Pad with the reflection ghost at r=0 and the odd ghost at r=R."""
    return np.concatenate(([values[0]], values, [-values[-1]]))


def laplacian(grid, values):
    if grid.kind == PERIODIC:
        k2 = grid.wavenumbers ** 2
        return np.fft.ifft(-k2 * np.fft.fft(values))
    lower, diag, upper = grid.laplacian_bands
    out = diag * values
    out[:-1] += upper * values[1:]
    out[1:] += lower * values[:-1]
    return out


def gradient(grid, values):
    """Nodal radial derivative (or d/dx on periodic grids)."""
    if grid.kind == PERIODIC:
        return np.fft.ifft(1j * grid.wavenumbers * np.fft.fft(values))
    g = _ghosted(values)
    return (g[2:] - g[:-2]) / (2.0 * grid.spacing)


def spatial_derivatives(state):
    """Return ``(grad, lap)`` sampled on the nodes of ``state.grid``."""
    return gradient(state.grid, state.values), laplacian(state.grid, state.values)


def face_differences(grid, values):
    """Forward differences ``(u_{i+1} - u_i) / dr`` on the outer faces."""
    g = np.concatenate((values, [-values[-1]]))
    return np.diff(g) / grid.spacing


def dirichlet_form(grid, values, weight=None):
    """``int W |grad u|^2`` with ``W`` a callable of the radius (default 1).

    On radial grids the integrand lives on cell faces, which makes
    ``dirichlet_form(u) == -Re int conj(u) lap(u)`` hold to roundoff.
    """
    if grid.kind == PERIODIC:
        dens = np.abs(gradient(grid, values)) ** 2
        if weight is not None:
            dens = dens * weight(grid.radii)
        return float(np.dot(grid.weights, dens))
    d = face_differences(grid, values)
    dens = np.abs(d) ** 2 * grid.face_areas * grid.spacing
    if weight is not None:
        dens = dens * weight(grid.faces)
    return float(np.sum(dens))


def gradient_pairing(grid, values, weight):
    """``int W(r) conj(u) d_r u`` for a radial weight ``W`` (complex result).

    For periodic grids the derivative is d/dx and ``W`` receives the signed
    coordinate.
    """
    if grid.kind == PERIODIC:
        du = gradient(grid, values)
        return complex(np.dot(grid.weights, weight(grid.nodes) * np.conj(values) * du))
    d = face_differences(grid, values)
    g = np.concatenate((values, [-values[-1]]))
    avg = 0.5 * (np.conj(g[:-1]) + np.conj(g[1:]))
    return complex(np.sum(grid.face_areas * grid.spacing * weight(grid.faces) * avg * d))


# -- initial profiles ------------------------------------------------------

PROFILE_FAMILIES = ("gaussian", "ring", "sech", "scaled_ground_state", "kaplan_weight")


def kaplan_weight(grid, lam):
    """Normalised weight ``lam^N psi(lam x)`` with ``psi ~ exp(-sqrt(N^2 + |x|^2))``."""
    N = grid.dim
    w = lam ** N * np.exp(-np.sqrt(N ** 2 + (lam * grid.radii) ** 2))
    return w / integrate(grid, w)


def sample_profile(family, params, grid):
    """Sample an initial profile at t = 0.

    ``params`` is a mapping of family parameters:

    * ``gaussian``: ``c``, ``sigma`` -- ``c exp(-|x|^2 / sigma^2)``
    * ``ring``: ``c``, ``r0``, ``sigma`` -- ``c exp(-(|x| - r0)^2 / sigma^2)``
    * ``sech``: ``c``, ``sigma`` -- ``c sech(|x| / sigma)``
    * ``scaled_ground_state``: ``lam``, ``ground_state`` -- ``lam Q(|x|)``
    * ``kaplan_weight``: ``lam``
    """
    params = dict(params or {})
    r = grid.radii
    if family == "gaussian":
        c = params.get("c", 1.0)
        sigma = params.get("sigma", 1.0)
        vals = c * np.exp(-(r / sigma) ** 2)
    elif family == "ring":
        c = params.get("c", 1.0)
        sigma = params.get("sigma", 1.0)
        vals = c * np.exp(-((r - params.get("r0", 1.0)) / sigma) ** 2)
    elif family == "sech":
        c = params.get("c", 1.0)
        vals = c / np.cosh(r / params.get("sigma", 1.0))
    elif family == "scaled_ground_state":
        q = params.get("ground_state")
        if q is None:
            raise ValidationError("scaled_ground_state requires a ground_state")
        vals = params.get("lam", 1.0) * q.evaluate(r)
    elif family == "kaplan_weight":
        vals = kaplan_weight(grid, params.get("lam", 1.0))
    else:
        raise ValidationError(
            f"unknown profile family {family!r}; expected one of {PROFILE_FAMILIES}")
    return FieldState(grid, np.asarray(vals, dtype=complex), 0.0)


def random_profile(grid, rng, n_bumps=3, max_radius=None, complex_phase=False):
    """Random superposition of Gaussian bumps and rings, used in test corpora."""
    r = grid.radii
    if max_radius is None:
        max_radius = 0.3 * grid.extent if grid.kind == RADIAL else 0.15 * grid.extent
    vals = np.zeros(grid.n, dtype=complex)
    for _ in range(n_bumps):
        amp = rng.uniform(0.2, 2.0)
        width = rng.uniform(0.3, 2.0)
        centre = rng.uniform(0.0, max_radius) if rng.random() < 0.5 else 0.0
        bump = amp * np.exp(-((r - centre) / width) ** 2)
        if complex_phase:
            bump = bump * np.exp(1j * rng.uniform(-1, 1) * r)
        vals += bump
    return FieldState(grid, vals, 0.0)
