"""Estimator-style wrappers (``fit`` / ``predict`` / ``transform``).

They inherit ``get_params``/``set_params`` from scikit-learn's
``BaseEstimator``; constructor arguments are stored unchanged and all
validation happens in ``fit``.
"""

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .criteria import gn_constant, gn_exponent, default_gn_corpus
from .evolve import Controls, run, run_to_blowup
from .field import FieldState, Params
from .functionals import report
from .groundstate import find_ground_state, shoot
from .variance import calibrate_ckn_const
from ._validation import ValidationError


def _states(X):
    if isinstance(X, FieldState):
        return [X]
    X = list(X)
    if not all(isinstance(x, FieldState) for x in X):
        raise ValidationError("expected FieldState objects")
    return X


class GroundStateShooter(BaseEstimator, TransformerMixin):
    """Shooting solver for ``-Q'' - (N-1)/r Q' - gamma Q = Q^{alpha+1}``.

    ``fit`` computes the ground state; ``transform`` samples it at radii;
    ``predict`` classifies trial central values.
    """

    def __init__(self, gamma=-1.0, alpha=2.0, dim=1, tol=1e-13):
        self.gamma = gamma
        self.alpha = alpha
        self.dim = dim
        self.tol = tol

    def fit(self, X=None, y=None):
        self.ground_state_ = find_ground_state(self.gamma, self.alpha, self.dim, self.tol)
        self.eta0_ = self.ground_state_.eta0
        self.well_depth_ = self.ground_state_.well_depth
        return self

    def transform(self, X):
        check_is_fitted(self, "ground_state_")
        return self.ground_state_.evaluate(np.asarray(X, dtype=float))

    def predict(self, X):
        """Outcome labels (``crosses_zero`` / ``diverges`` / ...) for central values."""
        return np.array([shoot(float(e), self.gamma, self.alpha, self.dim).kind
                         for e in np.atleast_1d(X)])


class GNConstant(BaseEstimator):
    """Corpus-validated constant ``A`` in ``P <= G + A m^{1 + 2 alpha/(4 - N alpha)}``."""

    def __init__(self, alpha=2.0, dim=1, safety=1.05, floor=1e-6):
        self.alpha = alpha
        self.dim = dim
        self.safety = safety
        self.floor = floor

    def fit(self, X=None, y=None):
        corpus = default_gn_corpus(self.alpha, self.dim) if X is None else _states(X)
        self.A_ = gn_constant(self.alpha, self.dim, corpus, self.safety, self.floor)
        return self

    def margin(self, X):
        """``G + A m^p - P`` per state (nonnegative where the inequality holds)."""
        check_is_fitted(self, "A_")
        p = 0.5 * gn_exponent(self.alpha, self.dim)
        out = []
        for s in _states(X):
            r = report(s, self.alpha)
            out.append(r.grad_sq + self.A_ * r.mass ** p - r.pot)
        return np.array(out)

    def predict(self, X):
        m = self.margin(X)
        return m >= -1e-12 * np.maximum(1.0, np.abs(m))


class BlowupTimeEstimator(BaseEstimator):
    """Measured blowup time by single-run threshold escalation."""

    def __init__(self, alpha=2.0, gamma=0.0, theta=0.0, variant="GL", dt0=1e-3,
                 t_budget=10.0, m0_factor=10.0, levels=5, ratio=2.0, leak_tol=1e-8):
        self.alpha = alpha
        self.gamma = gamma
        self.theta = theta
        self.variant = variant
        self.dt0 = dt0
        self.t_budget = t_budget
        self.m0_factor = m0_factor
        self.levels = levels
        self.ratio = ratio
        self.leak_tol = leak_tol

    def _params(self):
        return Params(self.alpha, self.gamma, self.theta, self.variant)

    def fit(self, X, y=None):
        params = self._params()
        ctl = Controls(dt0=self.dt0, t_budget=self.t_budget, leak_tol=self.leak_tol)
        self.trajectories_, self.verdicts_ = [], []
        for s in _states(X):
            traj, verdict = run_to_blowup(s, params, ctl, self.m0_factor, self.levels,
                                          self.ratio)
            self.trajectories_.append(traj)
            self.verdicts_.append(verdict)
        return self

    def predict(self, X=None):
        """Estimated blowup times (``nan`` where no blowup was detected)."""
        if X is not None:
            self.fit(X)
        check_is_fitted(self, "verdicts_")
        return np.array([v.t_estimate if v.blew_up else math.nan for v in self.verdicts_])


class CKNCalibrator(BaseEstimator):
    """Smallest power-of-two constant passing the localized inequality on a corpus."""

    def __init__(self, dim=2, alpha=2.0, A=1.0, samples=10_000, seed=0):
        self.dim = dim
        self.alpha = alpha
        self.A = A
        self.samples = samples
        self.seed = seed

    def fit(self, X=None, y=None):
        self.const_, self.margin_ = calibrate_ckn_const(self.dim, self.alpha, self.A,
                                                        self.samples, self.seed)
        return self


class GLSolver(BaseEstimator, TransformerMixin):
    """Evolve states to ``t_budget``; ``transform`` returns final samples."""

    def __init__(self, alpha=2.0, gamma=0.0, theta=0.0, variant="GL", dt0=1e-3,
                 t_budget=1.0, sup_threshold=math.inf):
        self.alpha = alpha
        self.gamma = gamma
        self.theta = theta
        self.variant = variant
        self.dt0 = dt0
        self.t_budget = t_budget
        self.sup_threshold = sup_threshold

    def fit(self, X=None, y=None):
        self.params_ = Params(self.alpha, self.gamma, self.theta, self.variant)
        self.controls_ = Controls(dt0=self.dt0, t_budget=self.t_budget,
                                  sup_threshold=self.sup_threshold)
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        self.trajectories_ = [run(s, self.params_, self.controls_) for s in _states(X)]
        return np.stack([t.final.values for t in self.trajectories_])
