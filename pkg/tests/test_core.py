import numpy as np
import pytest

from trajcert import (
    CertifiedPrediction,
    ClampBounds,
    ConfigError,
    MetricsReport,
    PredictionModes,
    Scene,
    SmoothingConfig,
    Trajectory,
    flatten,
    unflatten,
)


def test_flatten_ordering():
    t = Trajectory([(1.0, 2.0), (3.0, 4.0)])
    assert flatten(t).tolist() == [1.0, 2.0, 3.0, 4.0]


def test_flatten_single_point():
    assert flatten(Trajectory([(0.0, 0.0)])).tolist() == [0.0, 0.0]


def test_flatten_roundtrip_random():
    rng = np.random.default_rng(42)
    for _ in range(50):
        t = Trajectory(rng.normal(size=(rng.integers(1, 30), 2)))
        back = unflatten(flatten(t))
        assert np.array_equal(back.points, t.points)


def test_trajectory_rejects_nan_and_empty():
    with pytest.raises(ValueError):
        Trajectory([(np.nan, 0.0)])
    with pytest.raises(ValueError):
        Trajectory(np.zeros((0, 2)))
    with pytest.raises(ValueError):
        Trajectory([(np.inf, 1.0)])


def test_trajectory_is_immutable():
    t = Trajectory([(1.0, 2.0), (3.0, 4.0)])
    with pytest.raises(ValueError):
        t.points[0, 0] = 9.0


def _scene(t_obs=4, t_pred=3, n_neighbors=1):
    obs = Trajectory([(float(i), 0.0) for i in range(t_obs)])
    gt = Trajectory([(float(t_obs + i), 0.0) for i in range(t_pred)])
    nbs_obs = tuple(Trajectory([(float(i), 1.0) for i in range(t_obs)])
                    for _ in range(n_neighbors))
    nbs_gt = tuple(Trajectory([(float(t_obs + i), 1.0) for i in range(t_pred)])
                   for _ in range(n_neighbors))
    return Scene(scene_id=0, primary_obs=obs, primary_gt=gt,
                 neighbors_obs=nbs_obs, neighbors_gt=nbs_gt)


def test_scene_validation():
    s = _scene()
    assert s.t_obs == 4 and s.t_pred == 3 and s.n_neighbors == 1
    with pytest.raises(ValueError):
        Scene(scene_id=1, primary_obs=Trajectory([(0.0, 0.0)]),
              primary_gt=Trajectory([(1.0, 1.0)]))
    with pytest.raises(ValueError):
        Scene(scene_id=1, primary_obs=_scene().primary_obs,
              primary_gt=_scene().primary_gt,
              neighbors_obs=(_scene().primary_obs,), neighbors_gt=())


def test_prediction_modes_invariants():
    a = Trajectory([(0.0, 0.0), (1.0, 1.0)])
    b = Trajectory([(0.0, 0.0)])
    assert PredictionModes((a, a)).k == 2
    with pytest.raises(ValueError):
        PredictionModes((a, b))
    with pytest.raises(ValueError):
        PredictionModes(())


def test_smoothing_config_validation():
    clamp = ClampBounds(np.zeros(4), np.ones(4))
    SmoothingConfig(sigma=0.1, aggregator="mean", clamp=clamp)
    with pytest.raises(ConfigError):
        SmoothingConfig(sigma=0.1, aggregator="mean")
    with pytest.raises(ConfigError):
        SmoothingConfig(sigma=-1.0)
    with pytest.raises(ConfigError):
        SmoothingConfig(sigma=0.1, n_samples=0)
    with pytest.raises(ConfigError):
        SmoothingConfig(sigma=0.1, aggregator="mode")


def test_clamp_bounds_validation_and_json():
    with pytest.raises(ValueError):
        ClampBounds(np.ones(3), np.zeros(3))
    with pytest.raises(ValueError):
        ClampBounds(np.array([np.nan]), np.array([1.0]))
    cb = ClampBounds(np.array([-1.0, 0.5]), np.array([2.0, 0.5]))
    again = ClampBounds.from_json(cb.to_json())
    assert np.array_equal(again.l, cb.l) and np.array_equal(again.u, cb.u)


def test_certified_prediction_rejects_violations():
    cfg = SmoothingConfig(sigma=0.1)
    y = np.array([1.0, 2.0])
    CertifiedPrediction(y=y, lb=y - 1, ub=y + 1, config=cfg)
    with pytest.raises(ValueError):
        CertifiedPrediction(y=y, lb=y + 1e-9, ub=y + 1, config=cfg)
    with pytest.raises(ValueError):
        CertifiedPrediction(y=y, lb=y - 1, ub=y - 1e-9, config=cfg)


def test_metrics_report_validation():
    MetricsReport(ade=0.1, fde=0.2, abd=0.3, fbd=0.4, certified_ade=0.5,
                  certified_fde=0.6, col_rate=0.0, certified_col_rate=1.0, n_scenes=2)
    with pytest.raises(ValueError):
        MetricsReport(ade=-0.1, fde=0.2, abd=0.3, fbd=0.4, certified_ade=0.5,
                      certified_fde=0.6, col_rate=0.0, certified_col_rate=0.0, n_scenes=2)
    with pytest.raises(ValueError):
        MetricsReport(ade=0.1, fde=0.2, abd=0.3, fbd=0.4, certified_ade=0.5,
                      certified_fde=0.6, col_rate=1.5, certified_col_rate=0.0, n_scenes=2)
