"""Shared domain types: trajectories, scenes, smoothing configuration, certified outputs."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

MEAN = "mean"
MEDIAN = "median"
SCOPE_PRIMARY = "primary_agent"
SCOPE_ALL = "all_agents"
MIN_FDE = "min_fde"
MIN_ADE = "min_ade"

DEFAULT_T_OBS = 9
DEFAULT_T_PRED = 12
DEFAULT_N_SAMPLES = 100
DEFAULT_RADIUS = 0.1
SIGMA_RANGE = (0.08, 0.4)


class TrajcertError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(TrajcertError):
    """Invalid configuration of a predictor, denoiser or smoothing run."""


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"trajectory points must have shape (T, 2), got {arr.shape}")
    if arr.shape[0] < 1:
        raise ValueError("trajectory must contain at least one point")
    if not np.all(np.isfinite(arr)):
        raise ValueError("trajectory coordinates must be finite")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Trajectory:
    """An ordered sequence of (x, y) positions in meters at a fixed frame interval."""

    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", _as_points(self.points))

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def xs(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def ys(self) -> np.ndarray:
        return self.points[:, 1]

    def shifted(self, dx: float, dy: float) -> "Trajectory":
        return Trajectory(self.points + np.array([dx, dy]))

    def __eq__(self, other) -> bool:
        return isinstance(other, Trajectory) and np.array_equal(self.points, other.points)


def flatten(traj: Trajectory) -> np.ndarray:
    """Flatten to (x_1, y_1, ..., x_T, y_T)."""
    return np.asarray(traj.points, dtype=np.float64).reshape(-1).copy()


def unflatten(vec: Sequence[float]) -> Trajectory:
    """Inverse of :func:`flatten`."""
    arr = np.asarray(vec, dtype=np.float64)
    if arr.ndim != 1 or arr.size % 2 != 0 or arr.size == 0:
        raise ValueError(f"flattened trajectory must have even positive length, got {arr.shape}")
    return Trajectory(arr.reshape(-1, 2))


@dataclass(frozen=True)
class Scene:
    """One prediction instance: a primary agent plus neighbors, observation and future."""

    scene_id: int
    primary_obs: Trajectory
    primary_gt: Trajectory
    neighbors_obs: tuple = ()
    neighbors_gt: tuple = ()
    frame_interval: float = 0.4

    def __post_init__(self):
        object.__setattr__(self, "neighbors_obs", tuple(self.neighbors_obs))
        object.__setattr__(self, "neighbors_gt", tuple(self.neighbors_gt))
        if len(self.primary_obs) < 2:
            raise ValueError("observation must have at least 2 frames")
        if len(self.primary_gt) < 1:
            raise ValueError("ground-truth future must have at least 1 frame")
        if len(self.neighbors_obs) != len(self.neighbors_gt):
            raise ValueError("neighbors_obs and neighbors_gt must be parallel lists")
        for nb in self.neighbors_obs:
            if len(nb) != self.t_obs:
                raise ValueError("all neighbor observations must have length t_obs")
        for nb in self.neighbors_gt:
            if len(nb) != self.t_pred:
                raise ValueError("all neighbor futures must have length t_pred")

    @property
    def t_obs(self) -> int:
        return len(self.primary_obs)

    @property
    def t_pred(self) -> int:
        return len(self.primary_gt)

    @property
    def n_neighbors(self) -> int:
        return len(self.neighbors_obs)


@dataclass(frozen=True)
class PredictionModes:
    """k candidate future trajectories from a single predictor call."""

    modes: tuple

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))
        if len(self.modes) < 1:
            raise ValueError("at least one prediction mode is required")
        t = len(self.modes[0])
        if any(len(m) != t for m in self.modes):
            raise ValueError("all modes must share the same length")

    @property
    def k(self) -> int:
        return len(self.modes)

    @property
    def t_pred(self) -> int:
        return len(self.modes[0])


@dataclass(frozen=True)
class ClampBounds:
    """Per-coordinate output ranges [l_j, u_j] used by mean smoothing."""

    l: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        l = np.asarray(self.l, dtype=np.float64).copy()
        u = np.asarray(self.u, dtype=np.float64).copy()
        if l.shape != u.shape or l.ndim != 1:
            raise ValueError("clamp bounds l and u must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(l)) and np.all(np.isfinite(u))):
            raise ValueError("clamp bounds must be finite")
        if np.any(l > u):
            raise ValueError("clamp bounds require l_j <= u_j for every coordinate")
        l.setflags(write=False)
        u.setflags(write=False)
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "u", u)

    @property
    def m(self) -> int:
        return self.l.size

    def to_json(self) -> str:
        return json.dumps({"t_pred": self.m // 2, "l": self.l.tolist(), "u": self.u.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "ClampBounds":
        obj = json.loads(text)
        cb = cls(np.asarray(obj["l"], dtype=np.float64), np.asarray(obj["u"], dtype=np.float64))
        if "t_pred" in obj and cb.m != 2 * int(obj["t_pred"]):
            raise ValueError("clamp bounds length does not match declared t_pred")
        return cb


@dataclass(frozen=True)
class SmoothingConfig:
    """Full certification recipe: noise level, radius, sample count, aggregation."""

    sigma: float
    radius: float = DEFAULT_RADIUS
    n_samples: int = DEFAULT_N_SAMPLES
    aggregator: str = MEDIAN
    scope: str = SCOPE_PRIMARY
    mode_select: str = MIN_FDE
    seed: int = 0
    clamp: ClampBounds | None = None

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigError("sigma must be >= 0")
        if self.radius < 0:
            raise ConfigError("radius must be >= 0")
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        if self.aggregator not in (MEAN, MEDIAN):
            raise ConfigError(f"unknown aggregator {self.aggregator!r}")
        if self.scope not in (SCOPE_PRIMARY, SCOPE_ALL):
            raise ConfigError(f"unknown perturbation scope {self.scope!r}")
        if self.mode_select not in (MIN_FDE, MIN_ADE):
            raise ConfigError(f"unknown mode_select {self.mode_select!r}")
        if self.aggregator == MEAN and self.clamp is None:
            raise ConfigError("mean aggregation requires clamp bounds")

    def with_sigma(self, sigma: float) -> "SmoothingConfig":
        return replace(self, sigma=sigma)


@dataclass(frozen=True)
class CertifiedPrediction:
    """Smoothed output vector with per-coordinate certified lower/upper bounds."""

    y: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    config: SmoothingConfig

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64).copy()
        lb = np.asarray(self.lb, dtype=np.float64).copy()
        ub = np.asarray(self.ub, dtype=np.float64).copy()
        if not (y.shape == lb.shape == ub.shape) or y.ndim != 1:
            raise ValueError("y, lb, ub must be 1-D arrays of equal length")
        if not np.all(np.isfinite(y)):
            raise ValueError("smoothed output must be finite")
        if np.any(lb > y) or np.any(y > ub):
            raise ValueError("certified bounds must satisfy lb <= y <= ub in every coordinate")
        for a in (y, lb, ub):
            a.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "ub", ub)

    @property
    def m(self) -> int:
        return self.y.size

    @property
    def t_pred(self) -> int:
        return self.m // 2

    def trajectory(self) -> Trajectory:
        return unflatten(self.y)


@dataclass(frozen=True)
class MetricsReport:
    """Dataset-level accuracy and certified-robustness metrics."""

    ade: float
    fde: float
    abd: float
    fbd: float
    certified_ade: float
    certified_fde: float
    col_rate: float
    certified_col_rate: float
    n_scenes: int

    def __post_init__(self):
        for name in ("ade", "fde", "abd", "fbd", "certified_ade", "certified_fde"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("col_rate", "certified_col_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.n_scenes < 0:
            raise ValueError("n_scenes must be >= 0")

    def to_dict(self) -> dict:
        return {
            "ade": self.ade,
            "fde": self.fde,
            "abd": self.abd,
            "fbd": self.fbd,
            "certified_ade": self.certified_ade,
            "certified_fde": self.certified_fde,
            "col_rate": self.col_rate,
            "certified_col_rate": self.certified_col_rate,
            "n_scenes": self.n_scenes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())
