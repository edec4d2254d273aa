"""Blowup and global-existence criteria with closed-form time bounds.

Every criterion returns a :class:`CriterionVerdict`.  Hypotheses are strict
inequalities on discrete functionals; a value within ``SLACK`` of the
boundary counts as *not* satisfied.
"""

from dataclasses import dataclass, field as dc_field
import math

import numpy as np

from .field import FieldState, integrate, kaplan_weight, dirichlet_form
from .functionals import report, shifted
from ._validation import ValidationError, check_nonnegative_real

SLACK = 1e-10
BISECT_MAX = 1e3


@dataclass(frozen=True)
class CriterionVerdict:
    name: str
    applicable: bool
    prediction: str = "none"          # blowup | global | none
    t_upper: float = None
    t_lower: float = None
    details: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if not self.applicable and self.prediction != "none":
            raise ValueError("a non-applicable verdict must predict none")
        if self.t_upper is not None and self.prediction != "blowup":
            raise ValueError("t_upper requires a blowup prediction")

    def as_dict(self):
        def clean(v):
            if isinstance(v, float) and math.isinf(v):
                return "inf"
            if isinstance(v, (np.floating, np.integer)):
                return v.item()
            return v
        return {"name": self.name, "applicable": self.applicable,
                "prediction": self.prediction, "t_upper": clean(self.t_upper),
                "t_lower": clean(self.t_lower),
                "details": {k: clean(v) for k, v in self.details.items()}}


def _na(name, reason, **details):
    return CriterionVerdict(name, False, "none", None, None, {"reason": reason, **details})


def _cos(theta):
    return 0.0 if theta == math.pi / 2 else math.cos(theta)


def _negative(x):
    return x < -SLACK


# -- Kaplan -----------------------------------------------------------------

def kaplan_time(f0, alpha, gamma, lam):
    """Blowup time of ``f' = (gamma - lam^2 + f^alpha) f`` from ``f(0) = f0``."""
    a = lam * lam - gamma
    g0 = f0 ** alpha
    if g0 <= a:
        return math.inf
    if a == 0:
        return 1.0 / (alpha * g0)
    return -math.log1p(-a / g0) / (alpha * a)


def kaplan(state, gamma, lam, alpha):
    """Comparison with the pairing ``f(t) = int u psi_lambda`` (heat flow, u >= 0)."""
    name = "kaplan"
    if not lam > 0:
        raise ValidationError("lambda must be positive")
    if not check_nonnegative_real(state, atol=1e-14):
        return _na(name, "data must be real and nonnegative")
    psi = kaplan_weight(state.grid, lam)
    f0 = float(integrate(state.grid, state.values.real * psi))
    a = lam * lam - gamma
    details = {"f0": f0, "lambda": lam, "threshold": a}
    if f0 <= 0:
        return _na(name, "zero data", **details)
    if not f0 ** alpha - a > SLACK:
        return _na(name, "f(0)^alpha <= lambda^2 - gamma", **details)
    return CriterionVerdict(name, True, "blowup", kaplan_time(f0, alpha, gamma, lam),
                            None, details)


# -- smallness --------------------------------------------------------------

def smallness_threshold(sup0, alpha, theta, dim):
    """``-(1/alpha)(2c)^{alpha+1} ||u0||^alpha`` with ``c = cos(theta)^{-N/2}``."""
    c = math.cos(theta) ** (-dim / 2.0)
    return -(2.0 * c) ** (alpha + 1) * sup0 ** alpha / alpha


def smallness_global(state, params):
    name = "smallness_global"
    if params.theta >= math.pi / 2:
        raise ValidationError("smallness criterion requires theta < pi/2")
    sup0 = state.sup_norm
    N = state.grid.dim
    thr = smallness_threshold(sup0, params.alpha, params.theta, N)
    c = math.cos(params.theta) ** (-N / 2.0)
    details = {"threshold": thr, "envelope_prefactor": 2.0 * c * sup0,
               "envelope": "2 cos(theta)^(-N/2) exp(gamma t) ||u0||_inf"}
    if not params.gamma < 0:
        return _na(name, "gamma must be negative", **details)
    if not params.gamma < thr - SLACK * max(1.0, abs(thr)) and sup0 > 0:
        return _na(name, "gamma above threshold", **details)
    return CriterionVerdict(name, True, "global", None, math.inf, details)


def smallness_envelope(t, state, params):
    c = math.cos(params.theta) ** (-state.grid.dim / 2.0)
    return 2.0 * c * np.exp(params.gamma * np.asarray(t)) * state.sup_norm


# -- Levine-type upper bound ------------------------------------------------

def upper_bound_time(mass, energy, energy_shift, alpha, gamma, theta):
    """Three-branch upper bound; ``energy_shift`` is ``E_{gamma/cos(theta)}``."""
    c = math.cos(theta)
    if gamma > 0:
        return math.log1p(gamma * mass / ((alpha + 2) * (-energy) * c)) / (gamma * alpha)
    if gamma == 0:
        return mass / (alpha * (alpha + 2) * (-energy) * c)
    arg = -2 * gamma * mass / (2 * (alpha + 2) * (-energy_shift) * c - gamma * alpha * mass)
    return math.log1p(arg) / (-gamma * alpha)


def gamma_negative_cap(alpha, gamma):
    """Data-independent cap ``log((alpha+2)/alpha) / (-gamma alpha)``."""
    return math.log((alpha + 2) / alpha) / (-gamma * alpha)


def gl2_upper_bound_time(mass, energy_shift, alpha, theta):
    """Upper bound in the GL2 frame; ``energy_shift`` is ``E_{-1}``."""
    return math.log1p(2 * mass / (2 * (alpha + 2) * (-energy_shift) + alpha * mass)) \
        / (alpha * math.cos(theta))


def blowup_upper_bound(state, params):
    name = "blowup_upper_bound"
    if params.theta >= math.pi / 2:
        raise ValidationError("upper bound requires theta < pi/2")
    alpha, gamma, theta = params.alpha, params.gamma, params.theta
    rep = report(state, alpha)
    c = math.cos(theta)
    if params.variant == "GL2":
        e_shift, _ = shifted(rep, -1.0)
        details = {"mass": rep.mass, "energy": rep.energy, "energy_shifted": e_shift,
                   "cap": math.log((alpha + 2) / alpha) / (alpha * c)}
        if not _negative(e_shift):
            return _na(name, "E_{-1}(u0) >= 0", **details)
        return CriterionVerdict(name, True, "blowup",
                                gl2_upper_bound_time(rep.mass, e_shift, alpha, theta),
                                None, details)
    e_shift, _ = shifted(rep, gamma / c) if gamma < 0 else (rep.energy, None)
    details = {"mass": rep.mass, "energy": rep.energy, "energy_shifted": e_shift}
    if gamma >= 0 and not _negative(rep.energy):
        return _na(name, "E(u0) >= 0", **details)
    if gamma < 0 and not _negative(e_shift):
        return _na(name, "E_{gamma/cos theta}(u0) >= 0", **details)
    t = upper_bound_time(rep.mass, rep.energy, e_shift, alpha, gamma, theta)
    if gamma < 0:
        details["cap"] = gamma_negative_cap(alpha, gamma)
    return CriterionVerdict(name, True, "blowup", t, None, details)


# -- potential well ---------------------------------------------------------

def well_exponent(alpha, dim):
    return 1.0 + 2.0 / alpha - dim / 2.0


def potential_well_time(e_shift, depth, alpha, rate):
    """``(1/rate)[(alpha+4)[E]^+ / (depth - E) + log(2(alpha+2)/alpha)]``."""
    pos = max(e_shift, 0.0)
    return ((alpha + 4) * pos / (depth - e_shift)
            + math.log(2 * (alpha + 2) / alpha)) / rate


def grid_well_depth(Q, shift, grid):
    """``E_c(Q_c)`` with ``Q_c`` sampled on ``grid``.

    ``Q_c(x) = s^{1/alpha} Q(s^{1/2} x)`` with ``s = c / gamma_Q``.  Measuring
    the depth on the grid of the data cancels the common discretisation
    error, so data equal to ``Q_c`` sits exactly on the boundary.
    """
    s = shift / Q.gamma
    vals = s ** (1.0 / Q.alpha) * Q.evaluate(math.sqrt(s) * grid.radii)
    rep = report(FieldState(grid, vals.astype(complex)), Q.alpha)
    return float(shifted(rep, shift)[0])


def potential_well_bound(state, params, ground_state):
    """Potential-well bound for GL with gamma < 0, or for the GL2 frame.

    The hypothesis compares with the depth measured on the data grid (see
    :func:`grid_well_depth`); the continuum depth from the scaling law
    ``E_c(Q_c) = (c/g)^e E_g(Q_g)``, ``e = 1 + 2/alpha - N/2``, is reported
    alongside.
    """
    name = "potential_well_bound"
    alpha, N = params.alpha, state.grid.dim
    Q = ground_state
    if Q is None:
        raise ValidationError("potential_well_bound requires a ground state")
    if Q.alpha != alpha or Q.dim != N:
        raise ValidationError("ground state does not match (alpha, dim)")
    if (N - 2) * alpha >= 4:
        raise ValidationError("potential well requires (N - 2) alpha < 4")
    c = math.cos(params.theta)
    if params.variant == "GL2":
        shift, rate = -1.0, alpha * c
    else:
        if not params.gamma < 0:
            return _na(name, "gamma must be negative")
        if params.theta >= math.pi / 2:
            raise ValidationError("potential well requires theta < pi/2")
        shift, rate = params.gamma / c, -params.gamma * alpha
    depth_exact = float((shift / Q.gamma) ** well_exponent(alpha, N) * Q.well_depth)
    depth = grid_well_depth(Q, shift, state.grid)
    rep = report(state, alpha)
    e_c, i_c = shifted(rep, shift)
    details = {"shift": shift, "energy_shifted": e_c, "nehari_shifted": i_c,
               "well_depth": depth, "well_depth_exact": depth_exact}
    if not e_c < depth - SLACK * max(1.0, abs(depth)):
        return _na(name, "E_c(u0) >= well depth", **details)
    if not _negative(i_c):
        return _na(name, "I_c(u0) >= 0", **details)
    return CriterionVerdict(name, True, "blowup",
                            potential_well_time(e_c, depth, alpha, rate), None, details)


# -- Gagliardo-Nirenberg constant and lower bounds ------------------------

def gn_exponent(alpha, dim):
    """Exponent ``2 + 4 alpha / (4 - N alpha)`` on ``||w||_2``."""
    return 2.0 + 4.0 * alpha / (4.0 - dim * alpha)


def gn_ratio(mass, grad_sq, pot, alpha, dim):
    """``(P - G) / m^{1 + 2 alpha/(4 - N alpha)}`` for one field."""
    return (pot - grad_sq) / mass ** (0.5 * gn_exponent(alpha, dim))


def gn_scale_sup(mass, grad_sq, pot, alpha, dim):
    """Supremum of the ratio over the two-parameter family ``a w(x/s)``.

    The ratio is invariant under amplitude scaling once the width is
    optimised, and the width optimum is explicit.
    """
    if pot <= 0 or mass <= 0:
        return -math.inf
    if grad_sq <= 0:
        return math.inf
    p = dim * alpha / 2.0
    lam = (p * pot / (2.0 * grad_sq)) ** (1.0 / (2.0 - p))
    best = (1.0 - p / 2.0) * pot * lam ** p
    return best / mass ** (0.5 * gn_exponent(alpha, dim))


def gn_constant(alpha, dim, corpus, safety=1.05, floor=1e-6):
    """Corpus-validated constant ``A``.

    ``corpus`` is an iterable of :class:`FieldState`.  Each member is swept
    over amplitude and width analytically; the largest ratio, clamped below at
    ``floor``, is multiplied by ``safety``.
    """
    if not alpha < 4.0 / dim:
        raise ValidationError("gn_constant requires alpha < 4/dim")
    best = -math.inf
    for w in corpus:
        mod = np.abs(w.values)
        m = float(integrate(w.grid, mod ** 2))
        g = dirichlet_form(w.grid, w.values)
        p = float(integrate(w.grid, mod ** (alpha + 2)))
        best = max(best, gn_scale_sup(m, g, p, alpha, dim))
    return safety * max(best, floor)


def gn_holds(state, alpha, A):
    rep = report(state, alpha)
    rhs = rep.grad_sq + A * rep.mass ** (0.5 * gn_exponent(alpha, state.grid.dim))
    return rep.pot <= rhs * (1 + 1e-12), rep.pot, rhs


def lower_bound_time(mass, alpha, dim, gamma, theta, A):
    """Lower bound on the blowup time from the GN inequality (may be ``inf``)."""
    if mass == 0:
        return math.inf
    X = A * mass ** (2.0 * alpha / (4.0 - dim * alpha))
    c = math.cos(theta)
    k = (4.0 - dim * alpha) / (4.0 * alpha)
    if gamma == 0:
        return k / (X * c)
    if gamma < 0 and c <= -gamma / X:
        return math.inf
    return k / gamma * math.log1p(gamma / (X * c))


def gl2_lower_bound_time(mass, alpha, dim, theta, A):
    X = A * mass ** (2.0 * alpha / (4.0 - dim * alpha))
    if X <= 1:
        return math.inf
    return -(4.0 - dim * alpha) / (4.0 * alpha * math.cos(theta)) * math.log1p(-1.0 / X)


def global_lower_bound(state, params, A):
    name = "global_lower_bound"
    alpha, N = params.alpha, state.grid.dim
    if not alpha < 4.0 / N:
        raise ValidationError("lower bound requires alpha < 4/dim")
    if params.theta >= math.pi / 2:
        raise ValidationError("lower bound requires theta < pi/2")
    mass = report(state, alpha).mass
    if params.variant == "GL2":
        t = gl2_lower_bound_time(mass, alpha, N, params.theta, A)
    else:
        t = lower_bound_time(mass, alpha, N, params.gamma, params.theta, A)
    details = {"A": A, "mass": mass}
    if math.isinf(t):
        return CriterionVerdict(name, True, "global", None, math.inf, details)
    return CriterionVerdict(name, True, "none", None, t, details)


# -- NLS variance criteria ------------------------------------------------

def nls_rhs_gamma_nonneg(t, V, M, E, alpha, gamma):
    """``V - 4 t M + 16 E int_0^t int_0^s e^{alpha gamma sigma}``."""
    t = np.asarray(t, dtype=float)
    k = alpha * gamma
    if k == 0:
        dbl = 0.5 * t * t
    else:
        dbl = (np.expm1(k * t) - k * t) / k ** 2
    return V - 4 * t * M + 16 * E * dbl


def nls_constants(alpha, dim, gamma):
    """``(b, eta)`` of the gamma < 0 envelope."""
    b = -2.0 * gamma * (4.0 - (dim - 2) * alpha) / (dim * alpha - 4.0)
    eta = -4.0 * gamma * alpha / (dim * alpha - 4.0)
    return b, eta


def nls_rhs_gamma_neg(t, V, M, E, alpha, dim, gamma):
    """Envelope bounding ``e^{-bt} V(t)`` when gamma < 0."""
    t = np.asarray(t, dtype=float)
    _, eta = nls_constants(alpha, dim, gamma)
    et = np.exp(-eta * t)
    return V - 4 * (1 - et) / eta * M + 16 * (1 - (1 + eta * t) * et) / eta ** 2 * E


def first_root(fun, t_max=BISECT_MAX, samples=20001):
    """First sign change of ``fun`` on ``[0, t_max]`` refined by bisection."""
    ts = np.concatenate(([0.0], np.geomspace(1e-8, t_max, samples)))
    vals = fun(ts)
    neg = np.nonzero(vals < 0)[0]
    if len(neg) == 0:
        return None
    j = neg[0]
    if j == 0:
        return 0.0
    lo, hi = ts[j - 1], ts[j]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if fun(np.array([mid]))[0] < 0:
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    return float(hi)


def nls_condition(V, M, E, alpha, dim, gamma):
    """Left side of the gamma < 0 blowup condition."""
    k = (dim * alpha - 4.0) / (gamma * alpha)
    return V + k * M + k * k * E


def nls_variance_criteria(state, gamma, alpha, dim=None):
    name = "nls_variance"
    N = state.grid.dim if dim is None else dim
    rep = report(state, alpha)
    V, M, E = rep.variance, rep.momentum, rep.energy
    details = {"variance": V, "momentum": M, "energy": E}
    if not math.isfinite(V):
        raise ValidationError("variance is not finite")
    if N > 2 and not alpha < 4.0 / (N - 2):
        return _na(name, "alpha >= 4/(N-2)", **details)
    if gamma >= 0:
        if not alpha >= 4.0 / N:
            return _na(name, "alpha < 4/N", **details)
        if not _negative(E):
            return _na(name, "E(u0) >= 0", **details)
        t = first_root(lambda s: nls_rhs_gamma_nonneg(s, V, M, E, alpha, gamma))
        details["branch"] = "gamma>=0"
    else:
        if not alpha > 4.0 / N:
            return _na(name, "gamma < 0 branch needs alpha > 4/N", **details)
        cond = nls_condition(V, M, E, alpha, N, gamma)
        b, eta = nls_constants(alpha, N, gamma)
        details.update({"condition": cond, "b": b, "eta": eta, "branch": "gamma<0"})
        if not _negative(cond):
            return _na(name, "variance condition not met", **details)
        t = first_root(lambda s: nls_rhs_gamma_neg(s, V, M, E, alpha, N, gamma))
    if t is None:
        details["diagnostic"] = "no root in [0, 1e3]"
    return CriterionVerdict(name, True, "blowup", t, None, details)


# -- lemma constant and tau ----------------------------------------------

def lemma_constant(alpha):
    """``K = [1 - sqrt((alpha+4)/(2 alpha+4))]^{-1}``."""
    return 1.0 / (1.0 - math.sqrt((alpha + 4.0) / (2.0 * alpha + 4.0)))


def measure_tau(traj, gamma=None):
    """First time ``||v||_2^2 >= K ||u0||_2^2`` with ``v = e^{-gamma t} u``.

    Returns ``(tau, censored)``; when the level is never reached ``tau`` is
    the end of the run and ``censored`` is True.
    """
    params = traj.params
    gamma = params.gamma if gamma is None else gamma
    t = traj.times
    mass_v = traj.series("mass") * np.exp(-2 * gamma * t)
    level = lemma_constant(params.alpha) * mass_v[0]
    above = np.nonzero(mass_v >= level)[0]
    if len(above) == 0:
        return float(t[-1]), True
    j = above[0]
    if j == 0:
        return 0.0, False
    t0, t1, m0, m1 = t[j - 1], t[j], mass_v[j - 1], mass_v[j]
    return float(t0 + (t1 - t0) * (level - m0) / (m1 - m0)), False


CRITERIA = ("kaplan", "smallness_global", "blowup_upper_bound", "potential_well_bound",
            "global_lower_bound", "nls_variance")


def evaluate_all(state, params, ground_state=None, A=None, lam=1.0, names=None):
    """Every criterion in ``names`` (default all) whose preconditions hold for ``params``.

    ``ground_state`` enables the potential-well bound and ``A`` the lower
    bound; criteria whose inputs are missing are skipped.
    """
    names = CRITERIA if names is None else tuple(names)
    unknown = set(names) - set(CRITERIA)
    if unknown:
        raise ValidationError(f"unknown criteria {sorted(unknown)}; expected {CRITERIA}")
    out = []
    N, alpha = state.grid.dim, params.alpha
    if params.theta >= math.pi / 2:
        if "nls_variance" in names:
            out.append(nls_variance_criteria(state, params.gamma, alpha, N))
        return out
    gl = params.variant == "GL"
    if "kaplan" in names and gl and params.theta == 0:
        out.append(kaplan(state, params.gamma, lam, alpha))
    if "smallness_global" in names and gl:
        out.append(smallness_global(state, params))
    if "blowup_upper_bound" in names:
        out.append(blowup_upper_bound(state, params))
    if ("potential_well_bound" in names and ground_state is not None
            and (N - 2) * alpha < 4 and (not gl or params.gamma < 0)):
        out.append(potential_well_bound(state, params, ground_state))
    if "global_lower_bound" in names and A is not None and alpha < 4.0 / N:
        out.append(global_lower_bound(state, params, A))
    return out


def default_gn_corpus(alpha, dim, seed=0, n_random=64):
    """Gaussians, rings, sech profiles, the ground state and random mixtures.

    Amplitude and width are swept analytically inside :func:`gn_constant`,
    so one sample per shape suffices.
    """
    from .field import make_grid, sample_profile, random_profile
    from .groundstate import find_ground_state
    grid = make_grid("radial", dim, 60.0, 6000)
    corpus = [sample_profile("gaussian", {"c": 1.0, "sigma": s}, grid) for s in (0.5, 1, 2)]
    corpus += [sample_profile("ring", {"c": 1.0, "r0": r0, "sigma": 1.0}, grid)
               for r0 in (1.0, 3.0, 8.0)]
    corpus += [sample_profile("sech", {"c": 1.0, "sigma": s}, grid) for s in (0.5, 1, 2)]
    if (dim - 2) * alpha < 4:
        Q = find_ground_state(-1.0, alpha, dim)
        corpus.append(sample_profile("scaled_ground_state", {"ground_state": Q}, grid))
    rng = np.random.default_rng(seed)
    corpus += [random_profile(grid, rng, n_bumps=int(rng.integers(1, 4)), max_radius=10.0)
               for _ in range(n_random)]
    return corpus


_GN_CACHE = {}


def default_gn_constant(alpha, dim):
    """:func:`gn_constant` on :func:`default_gn_corpus` (cached per process)."""
    key = (float(alpha), int(dim))
    if key not in _GN_CACHE:
        _GN_CACHE[key] = gn_constant(alpha, dim, default_gn_corpus(alpha, dim))
    return _GN_CACHE[key]
