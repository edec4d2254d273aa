"""Strang-split time integration with exact substeps and blowup detection.

The equation ``u_t = e^{i theta}[lap u + f(t)|u|^alpha u] + g u`` is split into

* the linear flow ``u_t = e^{i theta} lap u``, solved exactly: a Fourier
  multiplier on periodic grids and the matrix exponential of the radial
  finite-difference Laplacian (via its cached eigendecomposition) on radial
  grids; Crank-Nicolson with sub-cycling is available for large radial grids;
* the pointwise flow ``w_t = e^{i theta} f(t)|w|^alpha w + g w``, solved in
  closed form.  With ``k = alpha Re(g)`` and ``G(h) = int_0^h f(t0+s) e^{k s} ds``
  the modulus is ``|w0| e^{Re(g) h} (1 - z)^{-1/alpha}`` with
  ``z = alpha cos(theta) G |w0|^alpha``, and the phase advances by
  ``sin(theta) G |w0|^alpha phi(z) + Im(g) h`` with ``phi(z) = -log(1-z)/z``.
"""

from dataclasses import dataclass, field as dc_field
import math

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import roots_legendre

from .field import PERIODIC, RADIAL, FieldState, Params, make_grid
from .functionals import report
from ._validation import ValidationError, check_positive

STOP_REASONS = ("budget_reached", "sup_norm_threshold", "dt_underflow", "boundary_leak")
EIGEN_MAX_NODES = 4096
LANDING_SLACK = 1e-6
_GL4 = roots_legendre(4)


class SubstepBlowup(ArithmeticError):
    """The pointwise modulus ODE blows up inside the requested substep."""

    def __init__(self, point, t_star):
        super().__init__(f"modulus blows up at node {point} near t={t_star:.6g}")
        self.point = point
        self.t_star = t_star


# -- substeps ---------------------------------------------------------------

def _rotation(theta):
    if theta == math.pi / 2:
        return 1j
    return complex(math.cos(theta), math.sin(theta))


def _crank_nicolson(grid, values, dt, rot, substeps):
    lower, diag, upper = grid.laplacian_bands
    h = dt / substeps
    ab = np.zeros((3, grid.n), dtype=complex)
    ab[0, 1:] = -0.5 * h * rot * upper
    ab[1, :] = 1.0 - 0.5 * h * rot * diag
    ab[2, :-1] = -0.5 * h * rot * lower
    u = np.array(values, dtype=complex)
    for _ in range(substeps):
        rhs = (1.0 + 0.5 * h * rot * diag) * u
        rhs[:-1] += 0.5 * h * rot * upper * u[1:]
        rhs[1:] += 0.5 * h * rot * lower * u[:-1]
        u = solve_banded((1, 1), ab, rhs)
    return u


def apply_linear(grid, values, dt, theta, method="auto", cn_substeps=None):
    """Advance ``values`` by ``dt`` under ``u_t = e^{i theta} lap u``."""
    rot = _rotation(theta)
    if dt == 0:
        return np.array(values, dtype=complex)
    if grid.kind == PERIODIC:
        mult = np.exp(-rot * grid.wavenumbers ** 2 * dt)
        return np.fft.ifft(mult * np.fft.fft(values))
    if method == "auto":
        method = "expm" if grid.n <= EIGEN_MAX_NODES else "crank_nicolson"
    if method == "expm":
        lam, vecs, sqrt_w = grid.laplacian_eigen
        # real eigenvectors: transform real and imaginary parts together
        x = np.asarray(values, dtype=complex) * sqrt_w
        coef = vecs.T @ np.stack((x.real, x.imag), axis=1)
        coef = (coef[:, 0] + 1j * coef[:, 1]) * np.exp(rot * lam * dt)
        y = vecs @ np.stack((coef.real, coef.imag), axis=1)
        return (y[:, 0] + 1j * y[:, 1]) / sqrt_w
    if method == "crank_nicolson":
        if cn_substeps is None:
            # keep dt / m comparable to dr so stiff modes are not overshot
            cn_substeps = max(1, int(math.ceil(dt / grid.spacing)))
        return _crank_nicolson(grid, values, dt, rot, cn_substeps)
    raise ValidationError(f"unknown radial method {method!r}")


def linear_substep(state, dt, theta, method="auto"):
    if dt < 0:
        raise ValidationError("dt must be >= 0")
    return FieldState(state.grid, apply_linear(state.grid, state.values, dt, theta, method),
                      state.time + dt)


def _expm1_ratio(x):
    """``(e^x - 1)/x`` with the removable singularity filled in."""
    if abs(x) < 1e-12:
        return 1.0 + 0.5 * x
    return math.expm1(x) / x


def forcing_integral(params, t0, h, k):
    """``int_0^h f(t0 + s) e^{k s} ds``."""
    if params.forcing is None:
        beta = params.forcing_rate
        return math.exp(beta * t0) * h * _expm1_ratio((beta + k) * h)
    x, w = _GL4
    s = 0.5 * h * (x + 1.0)
    return 0.5 * h * float(np.sum(w * np.asarray([params.forcing(t0 + si) for si in s])
                                  * np.exp(k * s)))


def apply_nonlinear(values, t0, h, params):
    """Exact pointwise flow of ``w' = e^{i theta} f(t)|w|^alpha w + g w`` over ``h``."""
    if h == 0:
        return np.array(values, dtype=complex)
    alpha = params.alpha
    rot = params.rotation
    g = params.linear_coefficient
    G = forcing_integral(params, t0, h, alpha * g.real)
    p = np.abs(values) ** alpha
    z = alpha * rot.real * G * p
    if rot.real > 0 and z.max(initial=0.0) >= 1.0:
        j = int(np.argmax(z))
        raise SubstepBlowup(j, t0 + h)
    small = np.abs(z) < 1e-8
    zs = np.where(small, 0.5, z)
    phi = np.where(small, 1.0 + 0.5 * z, -np.log1p(-zs) / zs)
    modulus = math.exp(g.real * h) * (1.0 - z) ** (-1.0 / alpha)
    phase = rot.imag * G * p * phi + g.imag * h
    return values * modulus * np.exp(1j * phase)


def nonlinear_substep(state, dt, params):
    vals = apply_nonlinear(state.values, state.time, dt, params)
    return FieldState(state.grid, vals, state.time + dt)


def strang_values(grid, values, t, dt, params, method="auto"):
    half = 0.5 * dt
    u = apply_nonlinear(values, t, half, params)
    u = apply_linear(grid, u, dt, params.theta, method)
    return apply_nonlinear(u, t + half, half, params)


def strang_step(state, dt, params, method="auto"):
    """Half nonlinear, full linear, half nonlinear substep."""
    if dt < 0:
        raise ValidationError("dt must be >= 0")
    if dt == 0:
        return state
    vals = strang_values(state.grid, state.values, state.time, dt, params, method)
    return FieldState(state.grid, vals, state.time + dt)


# -- runs -------------------------------------------------------------------

@dataclass(frozen=True)
class Controls:
    """Run controls.

    ``thresholds`` are sup-norm levels whose first hitting times are
    recorded (interpolated in ``|u|^-alpha``); ``output_times`` are times at
    which snapshots are taken exactly.  ``leak_tol=None`` disables the
    boundary alarm.  ``adaptive=False`` keeps ``dt = dt0``.
    """

    dt0: float = 1e-3
    sup_threshold: float = math.inf
    t_budget: float = 1.0
    snapshot_stride: int = 0
    dt_min: float = 1e-12
    c_dt: float = 0.1
    adaptive: bool = True
    output_times: tuple = ()
    thresholds: tuple = ()
    leak_fraction: float = 0.05
    leak_tol: float = 1e-8
    shift: float = 0.0
    record_ut: bool = True
    radial_method: str = "auto"
    max_steps: int = 10_000_000

    def as_dict(self):
        d = dict(self.__dict__)
        d["output_times"] = list(self.output_times)
        d["thresholds"] = list(self.thresholds)
        for k, v in d.items():
            if isinstance(v, float) and math.isinf(v):
                d[k] = "inf"
        return d


@dataclass(frozen=True, eq=False)
class Trajectory:
    params: Params
    initial: FieldState
    reports: tuple
    snapshots: tuple
    stop_reason: str
    t_end: float
    final: FieldState
    hitting_times: dict = dc_field(default_factory=dict)
    controls: Controls = None
    steps: int = 0

    @property
    def times(self):
        return np.array([r.time for r in self.reports])

    def series(self, name):
        return np.array([getattr(r, name) for r in self.reports])


def _outer_mask(grid, fraction):
    if grid.kind == RADIAL:
        return grid.nodes > (1.0 - fraction) * grid.extent
    return np.abs(grid.nodes) > (0.5 - fraction) * grid.extent


def _hit_time(t_a, s_a, t_b, s_b, level, alpha):
    ya, yb, y = s_a ** -alpha, s_b ** -alpha, level ** -alpha
    if ya == yb:
        return t_b
    return t_a + (t_b - t_a) * (ya - y) / (ya - yb)


def run(initial, params, controls=None):
    """Integrate from ``initial`` until a stop condition fires."""
    c = controls or Controls()
    check_positive(c.dt0, "dt0")
    if not initial.sup_norm < c.sup_threshold:
        raise ValidationError("sup_threshold must exceed the initial sup norm")
    grid = initial.grid
    alpha = params.alpha
    out_times = sorted(float(t) for t in c.output_times if 0 < t <= c.t_budget)
    levels = sorted(float(m) for m in c.thresholds if m > initial.sup_norm)
    hits = {}
    leak_mask = _outer_mask(grid, c.leak_fraction) if c.leak_tol is not None else None

    def make_report(state):
        return report(state, alpha, c.shift, params if c.record_ut else None)

    state = initial
    reports = [make_report(state)]
    snapshots = [state]
    t, u, sup = state.time, state.values, state.sup_norm
    t_end_target = initial.time + c.t_budget
    stop = None
    steps = 0
    while stop is None:
        remaining = t_end_target - t
        if remaining <= 1e-14 * max(1.0, abs(t_end_target)):
            stop = "budget_reached"
            break
        dt = c.dt0
        if c.adaptive and sup > 0:
            fmax = max(float(params.f(t)), float(params.f(t + c.dt0)))
            dt = min(dt, c.c_dt / (fmax * sup ** alpha))
        # absorb remainders below LANDING_SLACK * dt so rounding never leaves slivers
        if remaining <= dt * (1 + LANDING_SLACK):
            dt = remaining
        while out_times and out_times[0] <= t + 1e-14 * max(1.0, abs(t)):
            out_times.pop(0)
        landing = bool(out_times) and out_times[0] - t <= dt * (1 + LANDING_SLACK)
        if landing:
            dt = out_times[0] - t
        if dt < c.dt_min:
            stop = "dt_underflow"
            break
        while True:
            try:
                u_new = strang_values(grid, u, t, dt, params, c.radial_method)
                break
            except SubstepBlowup:
                dt *= 0.5
                landing = False
                if dt < c.dt_min:
                    u_new = None
                    break
        if u_new is None:
            stop = "dt_underflow"
            break
        if not np.all(np.isfinite(u_new)):
            stop = "dt_underflow"
            break
        t_prev, sup_prev = t, sup
        t = out_times.pop(0) if landing else t + dt
        u = u_new
        steps += 1
        state = FieldState(grid, u, t)
        rep = make_report(state)
        reports.append(rep)
        sup = rep.sup_norm
        if landing or (c.snapshot_stride and steps % c.snapshot_stride == 0):
            snapshots.append(state)
        while levels and sup >= levels[0]:
            hits[levels[0]] = _hit_time(t_prev, sup_prev, t, sup, levels[0], alpha)
            levels.pop(0)
        if sup >= c.sup_threshold:
            stop = "sup_norm_threshold"
        elif leak_mask is not None and rep.mass > 0:
            outer = float(np.dot(grid.weights[leak_mask], np.abs(u[leak_mask]) ** 2))
            if outer > c.leak_tol * rep.mass:
                stop = "boundary_leak"
        if stop is None and steps >= c.max_steps:
            stop = "budget_reached"
    if snapshots[-1] is not state:
        snapshots.append(state)
    return Trajectory(params=params, initial=initial, reports=tuple(reports),
                      snapshots=tuple(snapshots), stop_reason=stop, t_end=t,
                      final=state, hitting_times=hits, controls=c, steps=steps)


# -- blowup-time estimation -------------------------------------------------

@dataclass(frozen=True)
class BlowupVerdict:
    blew_up: bool
    t_estimate: float = None
    t_bracket: tuple = (None, None)
    thresholds_used: tuple = ()
    diagnostic: str = ""

    def as_dict(self):
        return {"blew_up": self.blew_up, "t_estimate": self.t_estimate,
                "t_bracket": list(self.t_bracket),
                "thresholds_used": list(self.thresholds_used),
                "diagnostic": self.diagnostic}


def _aitken(t0, t1, t2):
    d1, d2 = t1 - t0, t2 - t1
    denom = d2 - d1
    if denom == 0:
        return None
    return t2 - d2 * d2 / denom


def extrapolate_hitting_times(thresholds, times):
    """Fit ``t_k = T - c rho^k`` to the last three hitting times.

    The bracket is ``(t_K, T + |T - T'|)`` where ``T'`` is the same fit one
    level earlier (or 0 when only three levels exist).
    """
    m = np.asarray(thresholds, dtype=float)
    t = np.asarray(times, dtype=float)
    if len(t) < 3:
        return BlowupVerdict(False, diagnostic="fewer than 3 hitting times")
    if np.any(np.diff(m) <= 0) or np.any(np.diff(t) <= 0):
        return BlowupVerdict(False, thresholds_used=tuple(m),
                             diagnostic="hitting times not increasing")
    d = np.diff(t)
    if not (d[-1] < d[-2]):
        return BlowupVerdict(False, thresholds_used=tuple(m),
                             diagnostic="hitting-time increments not contracting")
    T = _aitken(*t[-3:])
    spread = 0.0
    if len(t) >= 4 and d[-2] < d[-3]:
        T_prev = _aitken(*t[-4:-1])
        spread = abs(T - T_prev)
    elif len(t) >= 4:
        spread = abs(T - t[-1])
    T = max(T, t[-1])
    return BlowupVerdict(True, float(T), (float(t[-1]), float(T + spread)), tuple(m))


def estimate_blowup_time(runs):
    """Blowup verdict from one trajectory with recorded hitting times, or a
    list of trajectories run to escalating sup-norm thresholds."""
    if isinstance(runs, Trajectory):
        hits = runs.hitting_times
        if runs.stop_reason != "sup_norm_threshold":
            return BlowupVerdict(False, thresholds_used=tuple(sorted(hits)),
                                 diagnostic=f"run stopped: {runs.stop_reason}")
        levels = sorted(hits)
        return extrapolate_hitting_times(levels, [hits[m] for m in levels])
    runs = list(runs)
    if any(r.stop_reason != "sup_norm_threshold" for r in runs):
        return BlowupVerdict(False, diagnostic="a run did not reach its threshold")
    runs.sort(key=lambda r: r.controls.sup_threshold)
    return extrapolate_hitting_times([r.controls.sup_threshold for r in runs],
                                     [r.t_end for r in runs])


def escalating_thresholds(initial, m0_factor=10.0, levels=5, ratio=2.0):
    """``M_k = M0 ratio^k`` with ``M0 = m0_factor * ||u0||_inf``."""
    m0 = m0_factor * initial.sup_norm
    return tuple(m0 * ratio ** k for k in range(levels))


def run_to_blowup(initial, params, controls=None, m0_factor=10.0, levels=5, ratio=2.0):
    """Single run to the top threshold, recording every lower hitting time."""
    base = controls or Controls()
    thr = escalating_thresholds(initial, m0_factor, levels, ratio)
    ctl = Controls(**{**base.__dict__, "thresholds": thr,
                      "sup_threshold": thr[-1]})
    traj = run(initial, params, ctl)
    return traj, estimate_blowup_time(traj)


# -- gamma < 0 rescaling ----------------------------------------------------

def gl2_scale(params):
    """``mu = (-gamma)^{-1/2} (cos theta)^{1/2}`` for the GL to GL2 transform."""
    if params.gamma >= 0:
        raise ValidationError("the GL2 transform requires gamma < 0")
    if params.theta >= math.pi / 2:
        raise ValidationError("the GL2 transform requires theta < pi/2")
    return math.sqrt(math.cos(params.theta) / -params.gamma)


def to_gl2_frame(state, params):
    """Rescale GL data to the GL2 frame.

    Returns ``(state, params, meta)``; ``meta['time_scale']`` maps GL time
    ``T`` to GL2 time ``S = time_scale * T`` and ``meta['mu']`` is the
    spatial scale.  The GL2 field at time ``S`` relates to the GL field by
    ``v(S, x) = e^{-i S sin(theta)} mu^{2/alpha} u(mu^2 S, mu x)``.
    """
    mu = gl2_scale(params)
    g = state.grid
    grid = make_grid(g.kind, g.dim, g.extent / mu, g.n)
    vals = mu ** (2.0 / params.alpha) * state.values
    new = FieldState(grid, vals, state.time / mu ** 2)
    p2 = Params(params.alpha, -1.0, params.theta, "GL2")
    return new, p2, {"mu": mu, "time_scale": 1.0 / mu ** 2}


def from_gl2_values(values, s, params_gl):
    """Map GL2 samples at time ``s`` back to ``u`` samples at ``T = mu^2 s``."""
    mu = gl2_scale(params_gl)
    return np.exp(1j * s * math.sin(params_gl.theta)) * values / mu ** (2.0 / params_gl.alpha)
