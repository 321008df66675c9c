"""Monte-Carlo randomized smoothing with certified per-coordinate output bounds.

Mean smoothing clamps predictions into calibrated per-coordinate ranges and
bounds the smoothed value through the Gaussian CDF; median smoothing bounds it
by empirical quantiles at levels determined by the radius-to-sigma ratio. A
closed-form certifier for affine predictors provides an exact reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .core import (
    MEAN,
    MEDIAN,
    MIN_ADE,
    SCOPE_ALL,
    CertifiedPrediction,
    ClampBounds,
    ConfigError,
    Scene,
    SmoothingConfig,
    Trajectory,
    TrajcertError,
    flatten,
)
from .denoise import IDENTITY, DenoiserSpec, denoise_batch
from .predictors import (
    ExternalPredictor,
    LinearPredictorWeights,
    PredictorSpec,
    build_predictor,
)

_MASK64 = (1 << 64) - 1
_MIN_UNIFORM = 2.0**-54


class UnsupportedError(TrajcertError):
    """Requested an analytic shortcut outside its validity domain."""


def std_normal_cdf(x):
    """Standard Gaussian CDF (vectorized)."""
    return ndtr(x)


def std_normal_icdf(p):
    """Standard Gaussian inverse CDF; returns signed infinity at p in {0, 1}."""
    return ndtri(p)


class NoiseStream:
    """Reproducible Gaussian noise keyed by (master seed, scene id, sample index).

    Sample i of a scene occupies a fixed offset in a per-scene counter-based
    stream, so any worker can regenerate it independently of evaluation order.
    Variates are inverse-CDF transforms of the uniform stream.
    """

    def __init__(self, master_seed: int):
        self.master_seed = int(master_seed) & _MASK64

    def _bitgen(self, scene_id: int) -> np.random.PCG64:
        key = np.random.SeedSequence((self.master_seed, int(scene_id) & _MASK64))
        return np.random.PCG64(key)

    def matrix(self, scene_id: int, n: int, dim: int) -> np.ndarray:
        """Unit-variance noise for samples 0..n-1, shape (n, dim)."""
        gen = np.random.Generator(self._bitgen(scene_id))
        u = gen.random((n, dim))
        np.maximum(u, _MIN_UNIFORM, out=u)
        return ndtri(u)

    def sample(self, scene_id: int, sample_index: int, dim: int) -> np.ndarray:
        """The same row the full matrix would contain at sample_index."""
        bg = self._bitgen(scene_id)
        bg.advance(int(sample_index) * dim)
        u = np.random.Generator(bg).random(dim)
        np.maximum(u, _MIN_UNIFORM, out=u)
        return ndtri(u)


@dataclass(frozen=True)
class SampleBatch:
    """Flattened predictions for the n noise samples, after selection and clamping."""

    outputs: np.ndarray

    def __post_init__(self):
        out = np.asarray(self.outputs, dtype=np.float64)
        if out.ndim != 2 or out.shape[0] < 1:
            raise ValueError("sample batch must be a (n, m) matrix")
        if not np.all(np.isfinite(out)):
            raise ValueError("sample batch contains non-finite predictions")
        object.__setattr__(self, "outputs", out)

    @property
    def n(self) -> int:
        return self.outputs.shape[0]

    @property
    def m(self) -> int:
        return self.outputs.shape[1]


def _denoise_agents(denoiser: DenoiserSpec, obs: np.ndarray) -> np.ndarray:
    """Apply the denoiser channel-wise to flattened observations (..., 2*T)."""
    if denoiser.kind == IDENTITY:
        return obs
    t = obs.shape[-1] // 2
    pts = obs.reshape(obs.shape[:-1] + (t, 2))
    channels = np.swapaxes(pts, -1, -2)
    cleaned = denoise_batch(denoiser, channels)
    return np.swapaxes(cleaned, -1, -2).reshape(obs.shape)


def _select_best(preds: np.ndarray, gt_flat: np.ndarray, mode_select: str) -> np.ndarray:
    """Pick per sample the mode closest to ground truth, (B, k, m) -> (B, m)."""
    if preds.shape[1] == 1:
        return preds[:, 0, :]
    dx = preds[:, :, 0::2] - gt_flat[0::2]
    dy = preds[:, :, 1::2] - gt_flat[1::2]
    dist = np.hypot(dx, dy)
    score = dist.mean(axis=2) if mode_select == MIN_ADE else dist[:, :, -1]
    idx = np.argmin(score, axis=1)
    return preds[np.arange(preds.shape[0]), idx, :]


class ScenePipeline:
    """Perturb -> denoise -> predict -> select -> (clamp) for one scene.

    Evaluates batches of perturbed copies of the scene observation; reused by
    certification and by the falsification harness (common random numbers).
    """

    def __init__(self, scene: Scene, predictor, denoiser: DenoiserSpec,
                 config: SmoothingConfig, clamp: ClampBounds | None = None,
                 gt: Trajectory | None = None):
        self.scene = scene
        self.denoiser = denoiser
        self.config = config
        self.clamp = clamp if clamp is not None else config.clamp
        if config.aggregator == MEAN and self.clamp is None:
            raise ConfigError("mean aggregation requires clamp bounds")
        self._own_predictor = isinstance(predictor, PredictorSpec)
        self.predictor = (
            build_predictor(predictor, t_obs=scene.t_obs) if self._own_predictor else predictor
        )
        self.k = getattr(self.predictor, "k", None) or getattr(
            getattr(self.predictor, "spec", None), "k_modes", 1
        )
        gt = gt if gt is not None else scene.primary_gt
        self.gt_flat = flatten(gt)
        self.primary_clean = flatten(scene.primary_obs)
        self.neighbors_clean = (
            np.stack([flatten(nb) for nb in scene.neighbors_obs])
            if scene.neighbors_obs
            else np.zeros((0, self.primary_clean.size))
        )
        self.d_primary = self.primary_clean.size
        self.n_agents = 1 + self.neighbors_clean.shape[0]
        self.noise_dim = (
            self.d_primary * self.n_agents if config.scope == SCOPE_ALL else self.d_primary
        )
        self._needs_neighbors = isinstance(self.predictor, ExternalPredictor) or any(
            w.d != self.d_primary for w in getattr(self.predictor, "blocks", ())
        )
        self._clean_neighbors_denoised = None

    def close(self):
        if self._own_predictor:
            self.predictor.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _neighbor_inputs(self, b: int, noise: np.ndarray | None):
        if self.neighbors_clean.shape[0] == 0 or not self._needs_neighbors:
            return None
        if noise is None:
            if self._clean_neighbors_denoised is None:
                self._clean_neighbors_denoised = _denoise_agents(
                    self.denoiser, self.neighbors_clean
                )
            return np.broadcast_to(
                self._clean_neighbors_denoised,
                (b,) + self._clean_neighbors_denoised.shape,
            )
        perturbed = self.neighbors_clean[None, :, :] + noise.reshape(
            b, self.n_agents - 1, self.d_primary
        )
        return _denoise_agents(self.denoiser, perturbed)

    def evaluate(self, perturbed_primary: np.ndarray,
                 neighbor_noise: np.ndarray | None = None,
                 apply_clamp: bool | None = None) -> np.ndarray:
        """Run the pipeline on pre-perturbed primary observations, (B, d) -> (B, m)."""
        b = perturbed_primary.shape[0]
        denoised = _denoise_agents(self.denoiser, perturbed_primary)
        nbs = self._neighbor_inputs(b, neighbor_noise)
        kwargs = {}
        if isinstance(self.predictor, ExternalPredictor):
            kwargs["scene_id"] = self.scene.scene_id
            if nbs is None and self.neighbors_clean.shape[0]:
                nbs = self._neighbor_inputs(b, None)
        preds = self.predictor.predict_batch(denoised, nbs, **kwargs)
        if not np.all(np.isfinite(preds)):
            raise ValueError(f"predictor produced non-finite output (scene {self.scene.scene_id})")
        out = _select_best(preds, self.gt_flat, self.config.mode_select)
        clamp_now = self.config.aggregator == MEAN if apply_clamp is None else apply_clamp
        if clamp_now and self.clamp is not None:
            out = np.clip(out, self.clamp.l, self.clamp.u)
        return out

    def split_noise(self, noise: np.ndarray):
        """Split a joint noise matrix into primary and neighbor parts."""
        primary_part = noise[:, : self.d_primary]
        neighbor_part = (
            noise[:, self.d_primary:]
            if self.config.scope == SCOPE_ALL and self.n_agents > 1
            else None
        )
        return primary_part, neighbor_part

    def sample_noise(self) -> np.ndarray:
        cfg = self.config
        if cfg.sigma == 0.0:
            return np.zeros((cfg.n_samples, self.noise_dim))
        stream = NoiseStream(cfg.seed)
        return cfg.sigma * stream.matrix(self.scene.scene_id, cfg.n_samples, self.noise_dim)

    def sample_outputs(self) -> SampleBatch:
        noise = self.sample_noise()
        primary_noise, neighbor_noise = self.split_noise(noise)
        perturbed = self.primary_clean[None, :] + primary_noise
        return SampleBatch(self.evaluate(perturbed, neighbor_noise))


def sample_outputs(scene: Scene, predictor, denoiser: DenoiserSpec, config: SmoothingConfig,
                   clamp: ClampBounds | None = None, gt: Trajectory | None = None) -> SampleBatch:
    """Draw the n perturbed predictions feeding one certification."""
    with ScenePipeline(scene, predictor, denoiser, config, clamp=clamp, gt=gt) as pipe:
        return pipe.sample_outputs()


def _quantile_levels(config: SmoothingConfig) -> tuple[float, float]:
    if config.sigma == 0.0:
        return (0.0, 1.0) if config.radius > 0 else (0.5, 0.5)
    z = config.radius / config.sigma
    return float(ndtr(-z)), float(ndtr(z))


def median_smooth(batch: SampleBatch, config: SmoothingConfig) -> CertifiedPrediction:
    """Coordinate-wise median with quantile bounds at levels Phi(+-R/sigma)."""
    if config.aggregator != MEDIAN:
        raise ConfigError("median_smooth requires a median-aggregation config")
    lo, hi = _quantile_levels(config)
    q = np.quantile(batch.outputs, [lo, 0.5, hi], axis=0, method="linear")
    lb, y, ub = q[0], q[1], q[2]
    # Guard against interpolation rounding; mathematically lb <= y <= ub already.
    lb = np.minimum(lb, y)
    ub = np.maximum(ub, y)
    return CertifiedPrediction(y=y, lb=lb, ub=ub, config=config)


def mean_smooth(batch: SampleBatch, config: SmoothingConfig,
                clamp: ClampBounds | None = None) -> CertifiedPrediction:
    """Clamped sample mean with CDF-transform bounds over the clamp range."""
    if config.aggregator != MEAN:
        raise ConfigError("mean_smooth requires a mean-aggregation config")
    clamp = clamp if clamp is not None else config.clamp
    if clamp is None:
        raise ConfigError("mean smoothing requires clamp bounds")
    l, u = clamp.l, clamp.u
    y = np.clip(batch.outputs.mean(axis=0), l, u)
    if config.sigma == 0.0:
        return CertifiedPrediction(y=y, lb=y.copy(), ub=y.copy(), config=config)
    span = u - l
    degenerate = span == 0.0
    ratio = np.ones_like(y) * 0.5
    np.divide(y - l, span, out=ratio, where=~degenerate)
    np.clip(ratio, 0.0, 1.0, out=ratio)
    # eta is +-inf at the clamp edges; the CDF limits collapse the bounds there.
    with np.errstate(divide="ignore"):
        eta = config.sigma * ndtri(ratio)
    lb = l + span * ndtr((eta - config.radius) / config.sigma)
    ub = l + span * ndtr((eta + config.radius) / config.sigma)
    lb[degenerate] = l[degenerate]
    ub[degenerate] = l[degenerate]
    # Rounding guards only: containment l <= lb <= y <= ub <= u is exact math.
    lb = np.minimum(np.clip(lb, l, u), y)
    ub = np.maximum(np.clip(ub, l, u), y)
    return CertifiedPrediction(y=y, lb=lb, ub=ub, config=config)


def certify(scene: Scene, predictor, denoiser: DenoiserSpec, config: SmoothingConfig,
            clamp: ClampBounds | None = None, gt: Trajectory | None = None) -> CertifiedPrediction:
    """Full smoothed prediction with certified bounds for one scene."""
    with ScenePipeline(scene, predictor, denoiser, config, clamp=clamp, gt=gt) as pipe:
        batch = pipe.sample_outputs()
        if config.aggregator == MEAN:
            return mean_smooth(batch, config, clamp=pipe.clamp)
        return median_smooth(batch, config)


def _noised_column_norms(weights: LinearPredictorWeights, scene: Scene,
                         config: SmoothingConfig) -> np.ndarray:
    d_primary = 2 * scene.t_obs
    a = weights.matrix
    if config.scope == SCOPE_ALL or a.shape[1] <= d_primary:
        cols = a
    else:
        cols = a[:, :d_primary]
    return np.sqrt(np.sum(cols * cols, axis=1))


def analytic_certify_linear(weights: LinearPredictorWeights, scene: Scene,
                            config: SmoothingConfig,
                            denoiser: DenoiserSpec | None = None) -> CertifiedPrediction:
    """Exact infinite-sample median smoothing of an affine predictor.

    Output coordinate j of f(X + eps) is Gaussian with mean a_j . X + b_j and
    standard deviation sigma * ||a_j||, so the quantile bounds collapse to
    mu_j -+ ||a_j|| * R independently of sigma.
    """
    if denoiser is not None and denoiser.kind != IDENTITY:
        raise UnsupportedError("analytic certification supports only the identity denoiser")
    x = flatten(scene.primary_obs)
    if weights.d != x.size:
        joint = np.concatenate([x] + [flatten(nb) for nb in scene.neighbors_obs])
        if weights.d != joint.size:
            raise ConfigError(
                f"weights expect input dim {weights.d}, scene provides {x.size} or {joint.size}"
            )
        x = joint
    mu = weights.matrix @ x + weights.offset
    half_width = config.radius * _noised_column_norms(weights, scene, config)
    return CertifiedPrediction(y=mu, lb=mu - half_width, ub=mu + half_width, config=config)


class MonteCarloEvaluator:
    """Smoothed-value oracle sharing the certification noise (common random numbers)."""

    def __init__(self, scene: Scene, predictor, denoiser: DenoiserSpec,
                 config: SmoothingConfig, clamp: ClampBounds | None = None,
                 gt: Trajectory | None = None, chunk: int = 64):
        self.pipe = ScenePipeline(scene, predictor, denoiser, config, clamp=clamp, gt=gt)
        self.config = config
        self.chunk = chunk
        self.noise = self.pipe.sample_noise()
        self.primary_noise, self.neighbor_noise = self.pipe.split_noise(self.noise)

    @property
    def noise_dim(self) -> int:
        return self.pipe.noise_dim

    def close(self):
        self.pipe.close()

    def _aggregate(self, outputs: np.ndarray) -> np.ndarray:
        if self.config.aggregator == MEAN:
            y = outputs.mean(axis=1)
            return np.clip(y, self.pipe.clamp.l, self.pipe.clamp.u)
        return np.median(outputs, axis=1)

    def certified(self) -> CertifiedPrediction:
        """Certification from exactly the noise this evaluator reuses."""
        perturbed = self.pipe.primary_clean[None, :] + self.primary_noise
        batch = SampleBatch(self.pipe.evaluate(perturbed, self.neighbor_noise))
        if self.config.aggregator == MEAN:
            return mean_smooth(batch, self.config, clamp=self.pipe.clamp)
        return median_smooth(batch, self.config)

    def smoothed_batch(self, perturbations: np.ndarray) -> np.ndarray:
        """Smoothed outputs at X + r for each perturbation row, (B, d) -> (B, m)."""
        perturbations = np.atleast_2d(np.asarray(perturbations, dtype=np.float64))
        n = self.primary_noise.shape[0]
        m = 2 * self.pipe.scene.t_pred
        out = np.empty((perturbations.shape[0], m))
        for start in range(0, perturbations.shape[0], self.chunk):
            block = perturbations[start:start + self.chunk]
            b = block.shape[0]
            pr_pert = block[:, : self.pipe.d_primary]
            base = self.pipe.primary_clean[None, None, :] + pr_pert[:, None, :]
            perturbed = (base + self.primary_noise[None, :, :]).reshape(b * n, -1)
            nb_noise = None
            if self.neighbor_noise is not None:
                nb_pert = block[:, self.pipe.d_primary:].reshape(b, 1, -1)
                nb_noise = (nb_pert + self.neighbor_noise[None, :, :]).reshape(b * n, -1)
            vals = self.pipe.evaluate(perturbed, nb_noise)
            out[start:start + b] = self._aggregate(vals.reshape(b, n, m))
        return out

    def smoothed(self, perturbation: np.ndarray) -> np.ndarray:
        return self.smoothed_batch(perturbation[None, :])[0]


class AnalyticLinearEvaluator:
    """Exact smoothed-value oracle for affine predictors (identity denoiser)."""

    def __init__(self, weights: LinearPredictorWeights, scene: Scene, config: SmoothingConfig):
        self.weights = weights
        self.scene = scene
        self.config = config
        x = flatten(scene.primary_obs)
        if weights.d != x.size:
            x = np.concatenate([x] + [flatten(nb) for nb in scene.neighbors_obs])
        self.x = x
        self.d_primary = 2 * scene.t_obs
        self.noise_dim = (
            self.d_primary * (1 + scene.n_neighbors)
            if config.scope == SCOPE_ALL
            else self.d_primary
        )

    def close(self):
        pass

    def smoothed_batch(self, perturbations: np.ndarray) -> np.ndarray:
        perturbations = np.atleast_2d(np.asarray(perturbations, dtype=np.float64))
        full = np.zeros((perturbations.shape[0], self.x.size))
        usable = min(perturbations.shape[1], self.x.size)
        full[:, :usable] = perturbations[:, :usable]
        return (self.x[None, :] + full) @ self.weights.matrix.T + self.weights.offset

    def smoothed(self, perturbation: np.ndarray) -> np.ndarray:
        return self.smoothed_batch(perturbation[None, :])[0]
