import math

import numpy as np
import pytest
from sklearn.base import clone

from glblowup.estimators import (BlowupTimeEstimator, CKNCalibrator, GLSolver, GNConstant,
                                 GroundStateShooter)
from glblowup.field import FieldState, make_grid, random_profile, sample_profile


def test_shooter():
    est = GroundStateShooter(alpha=2.0, dim=1).fit()
    assert est.eta0_ == pytest.approx(math.sqrt(2), rel=1e-8)
    x = np.array([0.0, 1.0])
    assert est.transform(x) == pytest.approx(math.sqrt(2) / np.cosh(x), rel=1e-6)
    assert list(est.predict([1.0, 2.0])) == ["diverges", "crosses_zero"]
    assert clone(est).get_params() == est.get_params()


def test_gn_constant_estimator():
    g = make_grid("radial", 1, 40.0, 2000)
    corpus = [sample_profile("sech", {"c": 1.0}, g)]
    est = GNConstant().fit(corpus)
    assert est.A_ / 1.05 == pytest.approx(1 / 12, rel=1e-4)
    held = [random_profile(g, np.random.default_rng(i)) for i in range(20)]
    assert est.predict(held).all()


def test_blowup_estimator_uniform_ode():
    g = make_grid("periodic1d", 1, 10.0, 32)
    s = FieldState(g, np.ones(g.n, dtype=complex))
    est = BlowupTimeEstimator(t_budget=2.0, leak_tol=None)
    assert est.predict([s])[0] == pytest.approx(0.5, abs=1e-3)


def test_solver_and_calibrator():
    g = make_grid("periodic1d", 1, 20.0, 128)
    s = sample_profile("gaussian", {"c": 0.1}, g)
    out = GLSolver(theta=math.pi / 2, variant="NLS", t_budget=0.1).fit().transform([s])
    assert out.shape == (1, 128)
    est = CKNCalibrator(dim=3, samples=30).fit()
    assert est.const_ <= 2.0
