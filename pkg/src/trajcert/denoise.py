"""Observation denoisers applied channel-wise before prediction."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.ndimage import uniform_filter1d

from .core import ConfigError, Trajectory

IDENTITY = "identity"
WIENER = "wiener"
MOVING_AVERAGE = "moving_average"
POLYNOMIAL = "polynomial"

KINDS = (IDENTITY, WIENER, MOVING_AVERAGE, POLYNOMIAL)

_DEFAULT_WINDOW = {WIENER: 5, MOVING_AVERAGE: 3}


@dataclass(frozen=True)
class DenoiserSpec:
    """Configuration of one denoiser.

    window applies to wiener and moving_average (odd, >= 3), degree to
    polynomial, noise_power to wiener (defaults to the mean local variance
    of the channel when unset).
    """

    kind: str = IDENTITY
    window: int | None = None
    degree: int = 4
    noise_power: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown denoiser kind {self.kind!r}")
        if self.window is not None:
            if self.window < 3 or self.window % 2 == 0:
                raise ConfigError("window must be an odd integer >= 3")
        if self.degree < 0:
            raise ConfigError("polynomial degree must be >= 0")
        if self.noise_power is not None and self.noise_power < 0:
            raise ConfigError("noise_power must be >= 0")

    @property
    def effective_window(self) -> int:
        return self.window if self.window is not None else _DEFAULT_WINDOW.get(self.kind, 3)


@lru_cache(maxsize=None)
def _poly_projection(t: int, degree: int) -> np.ndarray:
    # Least-squares fit + evaluation at the same indices is a fixed linear
    # projection; a scaled abscissa keeps the Vandermonde well conditioned.
    x = np.linspace(-1.0, 1.0, t) if t > 1 else np.zeros(1)
    v = np.vander(x, degree + 1, increasing=True)
    return v @ np.linalg.pinv(v)


def _window_mean(arr: np.ndarray, window: int) -> np.ndarray:
    return uniform_filter1d(arr, size=window, axis=-1, mode="nearest")


def denoise_batch(spec: DenoiserSpec, arr: np.ndarray) -> np.ndarray:
    """Denoise a batch of same-length channels, shape (..., T) -> (..., T)."""
    arr = np.asarray(arr, dtype=np.float64)
    t = arr.shape[-1]
    if spec.kind == IDENTITY:
        return arr.copy()
    if spec.kind == POLYNOMIAL:
        if spec.degree >= t:
            raise ConfigError(f"polynomial degree {spec.degree} must be < sequence length {t}")
        return arr @ _poly_projection(t, spec.degree).T
    window = spec.effective_window
    if window > t:
        raise ConfigError(f"window {window} exceeds sequence length {t}")
    if spec.kind == MOVING_AVERAGE:
        return _window_mean(arr, window)
    # Wiener: local mean/variance statistics with replicated edges. Channels
    # are centered first so the variance never cancels at large coordinates.
    offset = arr.mean(axis=-1, keepdims=True)
    centered = arr - offset
    mu = _window_mean(centered, window)
    var = _window_mean(centered * centered, window) - mu * mu
    np.maximum(var, 0.0, out=var)
    if spec.noise_power is not None:
        nu = np.float64(spec.noise_power)
    else:
        nu = var.mean(axis=-1, keepdims=True)
    out = mu.copy()
    active = var > nu
    gain = np.zeros_like(var)
    np.divide(var - nu, var, out=gain, where=active)
    out += gain * (centered - mu)
    return out + offset


def denoise(spec: DenoiserSpec, obs: Trajectory) -> Trajectory:
    """Apply the denoiser independently to the x and y channels of one trajectory."""
    channels = np.stack([obs.xs, obs.ys])
    cleaned = denoise_batch(spec, channels)
    return Trajectory(cleaned.T)


def residual_noise(spec: DenoiserSpec, dataset, sigma: float, seed: int) -> float:
    """Mean RMS coordinate error of denoised noisy observations vs clean ones.

    Each scene's clean primary observation is perturbed once with
    N(0, sigma^2 I), denoised, and compared against the clean observation.
    """
    if sigma < 0:
        raise ConfigError("sigma must be >= 0")
    scenes = dataset.scenes
    if not scenes:
        raise ValueError("residual_noise requires a nonempty dataset")
    total = 0.0
    for i, scene in enumerate(scenes):
        clean = scene.primary_obs.points
        rng = np.random.default_rng(np.random.SeedSequence((seed & 0xFFFFFFFF, i)))
        noisy = clean + rng.normal(0.0, sigma, size=clean.shape) if sigma > 0 else clean
        cleaned = denoise_batch(spec, noisy.T)
        total += float(np.sqrt(np.mean((cleaned - clean.T) ** 2)))
    return total / len(scenes)
