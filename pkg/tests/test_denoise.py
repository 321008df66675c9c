import numpy as np
import pytest

from trajcert import ConfigError, DatasetSplit, DenoiserSpec, Scene, Trajectory, denoise
from trajcert.data import generate_synthetic
from trajcert.denoise import denoise_batch, residual_noise

ALL_KINDS = ["identity", "wiener", "moving_average", "polynomial"]


def _traj(rng, t=9):
    return Trajectory(rng.normal(size=(t, 2)))


def test_identity_returns_input():
    rng = np.random.default_rng(0)
    t = _traj(rng)
    assert np.array_equal(denoise(DenoiserSpec("identity"), t).points, t.points)


def test_wiener_constant_sequence_is_fixed_point():
    # zero variance everywhere -> nu = 0 -> output is the window mean = constant
    t = Trajectory([(3.5, -1.25)] * 9)
    out = denoise(DenoiserSpec("wiener"), t)
    assert np.allclose(out.points, t.points, atol=1e-12)


def test_polynomial_reproduces_quartic_exactly():
    ts = np.arange(9, dtype=float)
    q = ts**4 - 2 * ts**2 + 3
    out = denoise_batch(DenoiserSpec("polynomial", degree=4), q[None, :])
    assert np.max(np.abs(out - q)) < 1e-9


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_translation_equivariance(kind):
    rng = np.random.default_rng(7)
    spec = DenoiserSpec(kind)
    for _ in range(10):
        seq = rng.normal(size=(3, 9))
        c = rng.normal()
        base = denoise_batch(spec, seq)
        shifted = denoise_batch(spec, seq + c)
        assert np.allclose(shifted, base + c, atol=1e-9)


def test_moving_average_exact_on_affine_interior():
    ts = np.arange(11, dtype=float)
    seq = 2.5 * ts - 1.0
    out = denoise_batch(DenoiserSpec("moving_average", window=3), seq[None, :])[0]
    assert np.allclose(out[1:-1], seq[1:-1], atol=1e-12)


def test_polynomial_is_projection():
    rng = np.random.default_rng(3)
    spec = DenoiserSpec("polynomial", degree=4)
    seq = rng.normal(size=(4, 9))
    once = denoise_batch(spec, seq)
    twice = denoise_batch(spec, once)
    assert np.max(np.abs(twice - once)) < 1e-9


def test_window_and_degree_configuration_errors():
    t = Trajectory(np.zeros((5, 2)))
    with pytest.raises(ConfigError):
        denoise(DenoiserSpec("moving_average", window=7), t)
    with pytest.raises(ConfigError):
        denoise(DenoiserSpec("polynomial", degree=5), t)
    with pytest.raises(ConfigError):
        DenoiserSpec("wiener", window=4)
    with pytest.raises(ConfigError):
        DenoiserSpec("lowpass")


def test_wiener_noise_power_override():
    rng = np.random.default_rng(11)
    seq = rng.normal(size=(1, 9))
    # enormous declared noise floor -> every position collapses to the window mean
    out = denoise_batch(DenoiserSpec("wiener", noise_power=1e9), seq)
    mu = denoise_batch(DenoiserSpec("moving_average", window=5), seq)
    assert np.allclose(out, mu, atol=1e-12)


def test_residual_noise_identity_tracks_sigma():
    ds = generate_synthetic(150, seed=5)
    r = residual_noise(DenoiserSpec("identity"), ds, sigma=0.08, seed=1)
    assert abs(r - 0.08) <= 0.008


def test_residual_noise_wiener_beats_moving_average_at_midrange():
    ds = generate_synthetic(150, seed=5, n_neighbors=0)
    wie = residual_noise(DenoiserSpec("wiener"), ds, sigma=0.24, seed=1)
    ma = residual_noise(DenoiserSpec("moving_average"), ds, sigma=0.24, seed=1)
    assert wie < ma


def test_residual_noise_zero_for_exact_polynomial_fit():
    ts = np.arange(9, dtype=float)
    xs = 0.01 * ts**3 - 0.2 * ts + 1.0
    ys = -(0.005 * ts**4) + 0.1 * ts**2
    obs = Trajectory(np.stack([xs, ys], axis=1))
    gt = Trajectory([(9.0, 0.0)] * 12)
    ds = DatasetSplit((Scene(scene_id=0, primary_obs=obs, primary_gt=gt),),
                      source="fixture", t_obs=9, t_pred=12)
    r = residual_noise(DenoiserSpec("polynomial", degree=4), ds, sigma=0.0, seed=0)
    assert r < 1e-9


def test_residual_noise_rejects_empty_dataset():
    ds = generate_synthetic(1, seed=0)
    empty = DatasetSplit((), source="fixture", t_obs=9, t_pred=12)
    with pytest.raises(ValueError):
        residual_noise(DenoiserSpec("identity"), empty, sigma=0.1, seed=0)
    assert residual_noise(DenoiserSpec("identity"), ds, sigma=0.0, seed=0) == 0.0
