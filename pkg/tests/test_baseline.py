import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from campdens.baseline import (
    FitConfig,
    HuberModel,
    fit_huber,
    huber_gradient,
    huber_loss,
    huber_objective,
    huber_psi,
    load_model,
    predict,
    save_model,
)
from campdens.errors import FitError

DELTA = 1.35


class TestLoss:
    def test_examples(self):
        assert huber_loss(0.0, DELTA) == 0.0
        assert huber_loss(DELTA, DELTA) == pytest.approx(0.5 * DELTA**2)
        assert huber_loss(2 * DELTA, DELTA) == pytest.approx(1.5 * DELTA**2)

    @given(st.floats(-1e6, 1e6), st.floats(0.01, 10))
    def test_symmetric(self, r, d):
        assert huber_loss(r, d) == huber_loss(-r, d)

    def test_continuous_at_delta(self):
        eps = 1e-9
        assert huber_loss(DELTA - eps, DELTA) == pytest.approx(huber_loss(DELTA + eps, DELTA), abs=1e-8)
        assert huber_psi(DELTA - eps, DELTA) == pytest.approx(huber_psi(DELTA + eps, DELTA), abs=1e-8)

    def test_vectorized(self):
        out = huber_loss(np.array([0.0, 1.0, -3.0]), 1.0)
        assert out.tolist() == [0.0, 0.5, 2.5]


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    x = rng.normal(size=300)
    y = 0.8 * x + rng.standard_t(2, size=300)
    h = 1e-6
    for _ in range(100):
        p = rng.normal(scale=2.0, size=2)
        g = huber_gradient(p, x, y, DELTA)
        fd = np.array(
            [
                (huber_objective(p + h * e, x, y, DELTA) - huber_objective(p - h * e, x, y, DELTA)) / (2 * h)
                for e in np.eye(2)
            ]
        )
        assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(g), 1e-3)


class TestFit:
    def test_noiseless_line(self):
        xs = np.arange(100.0)
        m = fit_huber(list(zip(xs, 2 * xs + 1)))
        assert m.slope == pytest.approx(2.0, abs=1e-3)
        assert m.intercept == pytest.approx(1.0, abs=1e-3)

    def test_matches_least_squares_on_clean_data(self):
        rng = np.random.default_rng(1)
        x = rng.uniform(0, 50, 400)
        y = 0.3 * x + 2 + rng.normal(scale=0.5, size=400)
        m = fit_huber(list(zip(x, y)))
        ls_slope, ls_int = np.polyfit(x, y, 1)
        assert m.slope == pytest.approx(ls_slope, rel=0.02)

    def test_robust_to_outliers(self):
        wins = 0
        for trial in range(20):
            rng = np.random.default_rng(100 + trial)
            x = rng.uniform(0, 100, 200)
            y = 0.25 * x + 3 + rng.normal(scale=1.0, size=200)
            bad = rng.choice(200, size=10, replace=False)
            y[bad] += rng.uniform(50, 150, size=10)
            huber = fit_huber(list(zip(x, y))).slope
            ls = np.polyfit(x, y, 1)[0]
            wins += abs(huber - 0.25) < abs(ls - 0.25)
        assert wins == 20

    def test_constant_feature(self):
        with pytest.raises(FitError, match="constant"):
            fit_huber([(5.0, 1.0), (5.0, 2.0), (5.0, 3.0)])

    def test_too_few_samples(self):
        with pytest.raises(FitError):
            fit_huber([(1.0, 2.0)])

    def test_constant_target(self):
        m = fit_huber([(1.0, 4.0), (2.0, 4.0), (3.0, 4.0)])
        assert m.slope == pytest.approx(0.0, abs=1e-9) and m.intercept == pytest.approx(4.0)

    def test_non_convergence_carries_objective(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(0, 10, 50)
        with pytest.raises(FitError) as info:
            fit_huber(list(zip(x, 3 * x + rng.normal(size=50))), FitConfig(max_iters=2))
        assert info.value.objective is not None and info.value.objective > 0

    def test_objective_monotone(self):
        rng = np.random.default_rng(3)
        x = rng.exponential(20, 500)
        y = 0.25 * x * (1 + rng.normal(scale=0.2, size=500))
        trace = []
        fit_huber(list(zip(x, y)), FitConfig(learning_rate=5.0), trace=trace)
        assert len(trace) > 2
        assert all(b <= a for a, b in zip(trace, trace[1:]))

    def test_unit_invariance(self):
        rng = np.random.default_rng(4)
        x = rng.exponential(20, 300)
        y = 0.25 * x + rng.normal(scale=2, size=300)
        m = fit_huber(list(zip(x, y)))
        cm = fit_huber(list(zip(x * 1e4, y)))
        assert cm.slope * 1e4 == pytest.approx(m.slope, rel=1e-6)
        assert cm.intercept == pytest.approx(m.intercept, rel=1e-6)

    def test_mean_point(self):
        rng = np.random.default_rng(5)
        x = rng.exponential(20, 400)
        y = 0.25 * x + 1 + rng.normal(scale=1.0, size=400)
        m = fit_huber(list(zip(x, y)))
        assert predict(m, x.mean()) == pytest.approx(y.mean(), rel=0.05)

    @pytest.mark.parametrize("field", ["delta", "max_iters", "tol", "learning_rate"])
    def test_config_positive(self, field):
        with pytest.raises(FitError):
            FitConfig(**{field: 0})


class TestPredict:
    def model(self, slope, intercept):
        return HuberModel(slope, intercept, DELTA, 0.0, 1.0, 0.0, 1.0)

    def test_affine(self):
        assert predict(self.model(2, 1), 10) == 21.0

    def test_clamped(self):
        assert predict(self.model(1, -5), 0) == 0.0

    def test_vector(self):
        assert predict(self.model(1, -5), np.array([0.0, 10.0])).tolist() == [0.0, 5.0]


def test_model_round_trip(tmp_path):
    rng = np.random.default_rng(6)
    x = rng.uniform(0, 10, 40)
    m = fit_huber(list(zip(x, 1.7 * x + rng.normal(size=40))))
    path = tmp_path / "model.json"
    save_model(path, m)
    assert load_model(path) == m
    assert set(json.loads(path.read_text())) == {
        "slope", "intercept", "delta", "feature_mean", "feature_std", "target_mean", "target_std",
    }


def test_load_model_rejects_garbage(tmp_path):
    path = tmp_path / "model.json"
    path.write_text(json.dumps({"slope": 1.0}))
    with pytest.raises(FitError, match="malformed"):
        load_model(path)
