"""Smooth truncations of ``|x|^2`` built from a bump function on (1, 2).

With ``h`` the normalised bump, ``H(t) = int_0^t h`` and ``S(t) = int_0^t s h``,

    zeta(t) = t - t H(t) + S(t),   zeta' = 1 - H,   zeta'' = -h,

so ``zeta(t) = t`` for ``t <= 1`` and ``zeta(t) = S(2)`` for ``t >= 2``.
``Psi_eps(r) = eps^-2 zeta(eps^2 r^2)`` equals ``r^2`` for ``r <= 1/eps``.
Its curvature defect is a perfect square: ``2 - Psi'' = gamma_eps^2`` with
``gamma_eps(r) = xi(eps^2 r^2)`` and ``xi(t) = sqrt(2 H(t) + 4 t h(t))``.
"""

from dataclasses import dataclass
from functools import lru_cache
import warnings

import numpy as np
from scipy.special import roots_legendre

_PANELS = 1024
_ORDER = 12


def _q(s):
    return (s - 1.0) * (2.0 - s)


def _bump_raw(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = (s > 1.0) & (s < 2.0)
    out[inside] = np.exp(-1.0 / _q(s[inside]))
    return out


@lru_cache(maxsize=1)
def _tables():
    """Panel-edge values of int h and int s h via composite Gauss-Legendre."""
    x, w = roots_legendre(_ORDER)
    edges = np.linspace(1.0, 2.0, _PANELS + 1)
    a, b = edges[:-1, None], edges[1:, None]
    s = 0.5 * (b - a) * x + 0.5 * (a + b)
    ws = 0.5 * (b - a) * w
    f = _bump_raw(s)
    norm = np.sum(ws * f)
    h_int = np.concatenate(([0.0], np.cumsum(np.sum(ws * f, axis=1)))) / norm
    sh_int = np.concatenate(([0.0], np.cumsum(np.sum(ws * s * f, axis=1)))) / norm
    return edges, h_int, sh_int, norm, x, w


def bump(s):
    """Normalised bump ``h`` and its first two derivatives."""
    s = np.asarray(s, dtype=float)
    norm = _tables()[3]
    h0 = _bump_raw(s) / norm
    h1 = np.zeros_like(s)
    h2 = np.zeros_like(s)
    inside = (s > 1.0) & (s < 2.0)
    si = s[inside]
    q = _q(si)
    dq = 3.0 - 2.0 * si
    g1 = dq / q ** 2                       # d/ds of -1/q
    g2 = -2.0 / q ** 2 - 2.0 * dq ** 2 / q ** 3
    h1[inside] = h0[inside] * g1
    h2[inside] = h0[inside] * (g1 ** 2 + g2)
    return h0, h1, h2


def bump_integrals(t):
    """``(int_0^t h, int_0^t s h)`` evaluated to near machine precision."""
    t = np.asarray(t, dtype=float)
    edges, h_int, sh_int, norm, x, w = _tables()
    tc = np.clip(t, 1.0, 2.0)
    k = np.clip(np.searchsorted(edges, tc, side="right") - 1, 0, _PANELS - 1)
    a = edges[k]
    half = 0.5 * (tc - a)
    s = half[..., None] * (x + 1.0) + a[..., None]
    f = _bump_raw(s) / norm
    partial_h = half * np.sum(w * f, axis=-1)
    partial_sh = half * np.sum(w * s * f, axis=-1)
    return h_int[k] + partial_h, sh_int[k] + partial_sh


def zeta_derivatives(t):
    """``zeta`` and its first four derivatives at ``t >= 0``."""
    t = np.asarray(t, dtype=float)
    H, S = bump_integrals(t)
    h0, h1, h2 = bump(t)
    return t - t * H + S, 1.0 - H, -h0, -h1, -h2


@dataclass(frozen=True)
class CutoffFamily:
    """The cutoff ``Psi_eps`` in dimension ``dim`` with radial evaluators."""

    epsilon: float
    dim: int

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")

    @property
    def M_plateau(self):
        return float(bump_integrals(2.0)[1])

    @staticmethod
    def h(s):
        return bump(s)[0]

    @staticmethod
    def zeta(t):
        return zeta_derivatives(t)[0]

    @staticmethod
    def xi(t):
        t = np.asarray(t, dtype=float)
        H, _ = bump_integrals(t)
        return np.sqrt(2.0 * H + 4.0 * t * bump(t)[0])

    def gamma_eps(self, r):
        e = self.epsilon
        return self.xi((e * np.asarray(r, dtype=float)) ** 2)

    def psi(self, r):
        e = self.epsilon
        return zeta_derivatives((e * np.asarray(r, dtype=float)) ** 2)[0] / e ** 2

    def derivatives(self, r):
        """Dictionary of ``psi, psi_r, psi_rr, lap, bilap`` at radii ``r``.

        ``psi_r`` is signed when ``r`` is a signed 1-D coordinate.
        """
        e, N = self.epsilon, self.dim
        r = np.asarray(r, dtype=float)
        t = (e * r) ** 2
        z0, z1, z2, z3, z4 = zeta_derivatives(t)
        lap = 2 * N * z1 + 4 * t * z2
        bilap = e ** 2 * (2 * N * ((2 * N + 4) * z2 + 4 * t * z3)
                          + 4 * t * ((2 * N + 8) * z3 + 4 * t * z4))
        return {
            "psi": z0 / e ** 2,
            "psi_r": 2 * r * z1,
            "psi_rr": 2 * z1 + 4 * t * z2,
            "lap": lap,
            "bilap": bilap,
        }

    def sup_norms(self, n=20001):
        """The four scaled sup norms whose sum is uniform in ``epsilon``."""
        e = self.epsilon
        r = np.linspace(0.0, 2.5 / e, n)
        d = self.derivatives(r)
        return (e ** 2 * np.max(np.abs(d["psi"])),
                e * np.max(np.abs(d["psi_r"])),
                np.max(np.abs(d["lap"])),
                e ** -2 * np.max(np.abs(d["bilap"])))


def build_cutoff(epsilon, dim):
    """Construct the cutoff family; ``dim = 1`` is allowed for identity checks only."""
    if dim < 2:
        warnings.warn("cutoff inequality requires dim >= 2; use for identity checks only",
                      stacklevel=2)
    return CutoffFamily(float(epsilon), int(dim))


def periodic_cutoff(period):
    """Cutoff whose plateau starts at the half period, so it is smooth on the torus."""
    return CutoffFamily(2.0 * np.sqrt(2.0) / period, 1)
