"""Truncated variance identities and the localized CKN-type estimate.

The cutoff family lives in :mod:`glblowup.cutoff` and is re-exported here.
"""

from dataclasses import dataclass
import math

import numpy as np

from .cutoff import (CutoffFamily, build_cutoff, bump_integrals, periodic_cutoff,
                     zeta_derivatives)
from .field import PERIODIC, RADIAL, FieldState, dirichlet_form, gradient_pairing, \
    integrate, make_grid, random_profile
from .functionals import time_derivative
from ._validation import ValidationError, check_positive

__all__ = ["CutoffFamily", "build_cutoff", "periodic_cutoff", "kappa", "delta_exponent",
           "ckn_lhs", "ckn_check", "ckn_corpus", "calibrate_ckn_const", "CKN_CONST",
           "CKN_MASS_BOUND", "VarianceSeries", "truncated_variance_series"]

# Frozen CKN constants keyed by (dim, alpha), valid for ||u||_2 <= CKN_MASS_BOUND.
# Produced by calibrate_ckn_const with its default corpus (seed 0, 10^4 fields).
CKN_MASS_BOUND = 1.0
CKN_CONST = {(2, 2.0): 4.0, (3, 2.0): 2.0, (2, 4.0): 16.0, (3, 4.0): 4.0}


def kappa(mu_tilde, epsilon, alpha, dim, const):
    """Remainder ``kappa(mu, eps)`` of the localized estimate.

    For ``alpha < 4``:
    ``C mu (eps^{N alpha/2} + (C mu eps^{2(N-1)})^{alpha/(4-alpha)}) + C eps^2``;
    for ``alpha = 4``: ``C mu eps^{2N} + C eps^2``.
    """
    mu_tilde = check_positive(mu_tilde, "mu_tilde")
    epsilon = check_positive(epsilon, "epsilon")
    if not 0 < alpha <= 4:
        raise ValidationError("kappa requires 0 < alpha <= 4")
    C, N = float(const), int(dim)
    if alpha == 4:
        return C * mu_tilde * epsilon ** (2 * N) + C * epsilon ** 2
    base = C * mu_tilde * epsilon ** (2 * (N - 1))
    if not base < 1:
        raise ValidationError(f"precondition C mu eps^(2(N-1)) < 1 violated ({base:.3g})")
    return (C * mu_tilde * (epsilon ** (N * alpha / 2.0) + base ** (alpha / (4.0 - alpha)))
            + C * epsilon ** 2)


def delta_exponent(lam, alpha, dim):
    """``alpha min(lam N / 2, (2(N-1) lam - 1)/(4 - alpha))``."""
    if alpha >= 4:
        return alpha * lam * dim / 2.0
    return alpha * min(lam * dim / 2.0, (2 * (dim - 1) * lam - 1) / (4.0 - alpha))


def _weights(grid, family):
    """Cutoff derivative arrays at nodes and faces of a radial grid."""
    d_node = family.derivatives(grid.radii)
    d_face = family.derivatives(grid.faces)
    return {
        "defect_face": 2.0 - d_face["psi_rr"],
        "lap_defect": 2.0 * family.dim - d_node["lap"],
        "bilap": d_node["bilap"],
    }


def _lhs_batch(grid, w, U, mu_tilde, alpha):
    U = np.atleast_2d(U)
    ghost = np.concatenate((U, -U[:, -1:]), axis=1)
    d = np.diff(ghost, axis=1) / grid.spacing
    kin = (np.abs(d) ** 2 * (grid.face_areas * grid.spacing * w["defect_face"])).sum(axis=1)
    mod = np.abs(U)
    pot = (mod ** (alpha + 2)) @ (grid.weights * w["lap_defect"])
    low = (mod ** 2) @ (grid.weights * w["bilap"])
    return -2.0 * kin + mu_tilde * pot - 0.5 * low


def ckn_lhs(state, family, mu_tilde, alpha):
    """``-2 int (2 - Psi'')|u_r|^2 + mu int (2N - lap Psi)|u|^{a+2} - 1/2 int |u|^2 bilap Psi``."""
    g = state.grid
    if g.kind != RADIAL:
        raise ValidationError("ckn_lhs requires a radial grid")
    if g.dim != family.dim:
        raise ValidationError("cutoff dimension does not match the grid")
    return float(_lhs_batch(g, _weights(g, family), state.values, mu_tilde, alpha)[0])


def ckn_check(state, family, mu_tilde, A, const, alpha):
    """Return ``(lhs, kappa, holds)`` for a radial field with ``||u||_2 <= A``."""
    if family.dim < 2:
        raise ValidationError("the localized estimate requires dim >= 2")
    if alpha > 4:
        raise ValidationError("the localized estimate requires alpha <= 4")
    norm = math.sqrt(state.mass)
    if norm > A * (1 + 1e-12):
        raise ValidationError(f"||u||_2 = {norm:.6g} exceeds A = {A}")
    lhs = ckn_lhs(state, family, mu_tilde, alpha)
    k = kappa(mu_tilde, family.epsilon, alpha, family.dim, const)
    return lhs, k, bool(lhs <= k)


def ckn_grid(epsilon, dim, n=4000):
    """Radial grid covering the cutoff transition with room to spare."""
    return make_grid(RADIAL, dim, max(4.0 / epsilon, 8.0), n)


def ckn_corpus(grid, epsilon, rng, count, A=CKN_MASS_BOUND):
    """Random radial fields with ``||u||_2 = A``.

    Half are generic bump mixtures; the other half are narrow rings placed
    in the transition band ``1/eps <= r <= sqrt(2)/eps`` where the
    estimate is tightest.
    """
    r = grid.radii
    out = np.empty((count, grid.n), dtype=complex)
    for i in range(count):
        if i % 2 == 0:
            v = random_profile(grid, rng, n_bumps=rng.integers(1, 4),
                               max_radius=2.0 / epsilon, complex_phase=True).values
        else:
            r0 = rng.uniform(0.8, 1.6) / epsilon
            width = rng.uniform(4 * grid.spacing, 0.5 / epsilon)
            v = np.exp(-((r - r0) / width) ** 2).astype(complex)
        out[i] = v * A / math.sqrt(float(np.real(integrate(grid, np.abs(v) ** 2))))
    return out


def calibrate_ckn_const(dim, alpha, A=CKN_MASS_BOUND, samples=10_000, seed=0,
                        mu_values=(0.5, 1.0, 2.0), max_power=20, n=4000):
    """Smallest power of two ``C`` for which the estimate holds on the corpus.

    For each candidate and each ``mu`` the cutoff scale is
    ``eps = (2 C mu)^{-1/(2(N-1))}``, which keeps the precondition at 1/2.
    Returns ``(C, worst_margin)``.
    """
    if dim < 2:
        raise ValidationError("calibration requires dim >= 2")
    per = max(1, samples // len(mu_values))
    for k in range(-4, max_power + 1):
        C = 2.0 ** k
        ok, worst = True, math.inf
        for j, mu in enumerate(mu_values):
            eps = (2.0 * C * mu) ** (-1.0 / (2 * (dim - 1)))
            fam = CutoffFamily(eps, dim)
            grid = ckn_grid(eps, dim, n)
            U = ckn_corpus(grid, eps, np.random.default_rng(seed + j), per, A)
            lhs = _lhs_batch(grid, _weights(grid, fam), U, mu, alpha)
            kap = kappa(mu, eps, alpha, dim, C)
            worst = min(worst, float(np.min(kap - lhs)))
            if np.any(lhs > kap):
                ok = False
                break
        if ok:
            return C, worst
    raise ValidationError("no constant up to 2^max_power passes the corpus")


# -- truncated variance identity --------------------------------------------

@dataclass(frozen=True)
class VarianceSeries:
    times: np.ndarray
    zeta: np.ndarray
    dzeta_formula: np.ndarray
    dzeta_fd: np.ndarray
    d2zeta_formula: np.ndarray
    d2zeta_fd: np.ndarray

    COLUMNS = ("t", "zeta", "dzeta_formula", "dzeta_fd", "d2zeta_formula", "d2zeta_fd",
               "resid_d1", "resid_d2")

    def residuals(self):
        """Relative mismatch of first and second derivatives at interior times."""
        inner = slice(1, -1)

        def rel(a, b):
            scale = np.max(np.abs(a[inner]))
            diff = np.abs(a - b)
            return diff / scale if scale > 0 else diff
        return rel(self.dzeta_formula, self.dzeta_fd), rel(self.d2zeta_formula, self.d2zeta_fd)

    def max_residuals(self):
        r1, r2 = self.residuals()
        return float(np.max(r1[1:-1])), float(np.max(r2[1:-1]))

    def rows(self):
        r1, r2 = self.residuals()
        cols = (self.times, self.zeta, self.dzeta_formula, self.dzeta_fd,
                self.d2zeta_formula, self.d2zeta_fd, r1, r2)
        return [list(map(float, row)) for row in zip(*cols)]


def _second_difference(t, y):
    out = np.full_like(y, np.nan)
    hm, hp = t[1:-1] - t[:-2], t[2:] - t[1:-1]
    out[1:-1] = 2.0 * ((y[2:] - y[1:-1]) / hp - (y[1:-1] - y[:-2]) / hm) / (hp + hm)
    return out


def _cutoff_arrays(grid, family):
    if grid.kind == PERIODIC:
        fam = family or periodic_cutoff(grid.extent)
        d = fam.derivatives(grid.nodes)
        return fam, d

    if family is None:
        raise ValidationError("radial grids need an explicit cutoff family")
    if family.dim != grid.dim:
        raise ValidationError("cutoff dimension does not match the grid")
    return family, family.derivatives(grid.radii)


def truncated_variance_series(traj, family=None, params=None):
    """Truncated variance, its derivatives by formula, and finite differences.

    The trajectory must solve ``v_t = e^{i theta}(lap v + f(t)|v|^alpha v)``,
    i.e. have no linear term; use ``Params.v_frame`` for gamma != 0.
    """
    params = params or traj.params
    if params.linear_coefficient != 0:
        raise ValidationError("truncated variance identity needs the v-frame (no linear term)")
    snaps = list(traj.snapshots)
    if len(snaps) < 5:
        raise ValidationError("need at least 5 snapshots")
    t = np.array([s.time for s in snaps])
    if np.any(np.diff(t) <= 0):
        raise ValidationError("snapshot times must increase")
    grid = snaps[0].grid
    fam, d = _cutoff_arrays(grid, family)
    psi, lap, bilap = d["psi"], d["lap"], d["bilap"]
    alpha = params.alpha
    theta = params.theta
    c = 0.0 if theta == math.pi / 2 else math.cos(theta)
    s = math.sin(theta)

    def psi_w(r):
        return fam.psi(r)

    def psi_rr_w(r):
        return fam.derivatives(r)["psi_rr"]

    def psi_r_w(r):
        return fam.derivatives(r)["psi_r"]

    n = len(snaps)
    zeta, d1, part2, bracket = (np.empty(n) for _ in range(4))
    for i, st in enumerate(snaps):
        v = st.values
        m2 = np.abs(v) ** 2
        pa = np.abs(v) ** (alpha + 2)
        f = float(params.f(st.time))
        fp = float(params.f_prime(st.time))
        kin_psi = dirichlet_form(grid, v, psi_w)
        pot_psi = float(np.real(integrate(grid, psi * pa)))
        lap_m = float(np.real(integrate(grid, lap * m2)))
        mom = gradient_pairing(grid, v, psi_r_w).imag
        zeta[i] = float(np.real(integrate(grid, psi * m2)))
        d1[i] = 2.0 * (c * (-kin_psi + f * pot_psi + 0.5 * lap_m) + s * mom)
        vt = time_derivative(st, params)
        vt_psi = float(np.real(integrate(grid, psi * np.abs(vt) ** 2)))
        static = (-0.5 * float(np.real(integrate(grid, bilap * m2)))
                  - alpha * f / (alpha + 2) * float(np.real(integrate(grid, lap * pa)))
                  + 2.0 * dirichlet_form(grid, v, psi_rr_w))
        part2[i] = static - 2 * c * c * vt_psi - 2 * fp / (alpha + 2) * c * pot_psi
        bracket[i] = -2 * kin_psi + (alpha + 4) / (alpha + 2) * f * pot_psi + lap_m
    dbracket = np.gradient(bracket, t, edge_order=2)
    d2 = 2.0 * (part2 + c * dbracket)
    d1_fd = np.gradient(zeta, t, edge_order=2)
    d2_fd = _second_difference(t, zeta)
    return VarianceSeries(t, zeta, d1, d1_fd, d2, d2_fd)


# -- cutoff invariant suite -------------------------------------------------

def cutoff_invariants(epsilon, dim, samples=10_000):
    """Worst violation of each pointwise cutoff invariant on ``samples`` radii.

    Every entry is zero (up to roundoff) when the invariant holds.
    """
    fam = CutoffFamily(float(epsilon), int(dim))
    r = np.linspace(0.0, 2.5 / fam.epsilon, samples)
    d = fam.derivatives(r)
    g2 = fam.gamma_eps(r) ** 2
    defect = 2 * dim - d["lap"]
    s = np.linspace(0.0, 3.0, samples)
    h = fam.h(s)
    z0, z1, z2, _, _ = zeta_derivatives(s)
    inner = r <= 1.0 / fam.epsilon
    return {
        "perfect_square": float(np.max(np.abs(2.0 - d["psi_rr"] - g2))),
        "lap_nonneg": float(max(0.0, -np.min(defect))),
        "lap_upper": float(max(0.0, np.max(defect - dim * g2))),
        "inner_identity": float(np.max(np.abs(d["psi"][inner] - r[inner] ** 2))
                                / max(1.0, np.max(r[inner] ** 2))),
        "psi_nonneg": float(max(0.0, -np.min(d["psi"]))),
        "h_nonneg": float(max(0.0, -np.min(h))),
        "h_support": float(np.max(np.abs(h[(s <= 1) | (s >= 2)]))),
        "h_mass": float(abs(bump_integrals(2.0)[0] - 1.0)),
        "zeta_inner": float(np.max(np.abs(z0[s <= 1] - s[s <= 1]))),
        "zeta_plateau": float(np.max(np.abs(z0[s >= 2] - fam.M_plateau))),
        "zeta_monotone": float(max(0.0, -np.min(z1))),
        "zeta_concave": float(max(0.0, np.max(z2))),
    }


def uniformity_spread(epsilons=(0.5, 0.1, 0.02), dim=2):
    """Relative spread of the scaled sup-norm sum across ``epsilons``."""
    sums = np.array([sum(CutoffFamily(e, dim).sup_norms()) for e in epsilons])
    return float((sums.max() - sums.min()) / sums.max()), sums


def kappa_scaling(dim, alpha, const, mu_grid=(1.0, 4.0, 16.0, 64.0), lam=None):
    """Check ``kappa <= C mu^{1 - delta}`` along ``eps = a mu^{-lam}``.

    ``lam`` defaults to the midpoint of ``(1/(2(N-1)), 1/2)``; ``a`` keeps
    the precondition at 1/2 for ``mu = 1``.  ``C`` is fitted at the smallest
    ``mu``.  Returns a dict with the per-point ratios and a ``holds`` flag.
    """
    if lam is None:
        lam = 0.5 * (1.0 / (2 * (dim - 1)) + 0.5)
    delta = delta_exponent(lam, alpha, dim)
    a = (2.0 * const) ** (-1.0 / (2 * (dim - 1)))
    mus = np.asarray(mu_grid, dtype=float)
    kap = np.array([kappa(m, a * m ** -lam, alpha, dim, const) for m in mus])
    C_fit = kap[0] / mus[0] ** (1 - delta)
    ratio = kap / (C_fit * mus ** (1 - delta))
    return {"lam": lam, "delta": delta, "a": a, "C_fit": float(C_fit),
            "kappa": kap.tolist(), "ratio": ratio.tolist(),
            "holds": bool(np.all(ratio <= 1 + 1e-12))}


def ckn_random_check(dim, alpha, const=None, count=200, seed=1, mu_values=(0.5, 1.0, 2.0),
                     A=CKN_MASS_BOUND):
    """Run :func:`ckn_check` on ``count`` random fields; returns ``(n_pass, worst_margin)``."""
    const = CKN_CONST[(dim, float(alpha))] if const is None else const
    rng = np.random.default_rng(seed)
    n_pass, worst = 0, math.inf
    for i in range(count):
        mu = mu_values[i % len(mu_values)]
        eps = (2.0 * const * mu) ** (-1.0 / (2 * (dim - 1)))
        fam = CutoffFamily(eps, dim)
        grid = ckn_grid(eps, dim, 2000)
        scale = rng.uniform(0.1, 1.0)
        vals = scale * ckn_corpus(grid, eps, rng, 1, A)[0]
        lhs, kap, ok = ckn_check(FieldState(grid, vals), fam, mu, A, const, alpha)
        n_pass += ok
        worst = min(worst, kap - lhs)
    return n_pass, worst


def cutoff_suite(epsilons=(0.5, 0.1, 0.02), dims=(2, 3), alpha=2.0, count=200, seed=1,
                     tol=1e-8):
    """Cutoff invariants, random CKN checks and kappa scaling in one report."""
    out = {"invariants": {}, "ckn": {}, "kappa": {}, "uniformity": {}}
    ok = True
    for N in dims:
        for e in epsilons:
            inv = cutoff_invariants(e, N)
            out["invariants"][f"N={N},eps={e}"] = inv
            ok &= all(v < tol for v in inv.values())
        spread, _ = uniformity_spread(epsilons, N)
        out["uniformity"][f"N={N}"] = spread
        ok &= spread < 0.05
        n_pass, worst = ckn_random_check(N, alpha, count=count, seed=seed)
        out["ckn"][f"N={N}"] = {"const": CKN_CONST[(N, float(alpha))], "passed": n_pass,
                                "count": count, "worst_margin": worst}
        ok &= n_pass == count
        ks = kappa_scaling(N, alpha, CKN_CONST[(N, float(alpha))])
        out["kappa"][f"N={N}"] = ks
        ok &= ks["holds"]
    out["passed"] = bool(ok)
    return out
