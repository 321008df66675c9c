"""Dataset parsing, synthetic scene generation, and clamp-bound calibration."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .core import ClampBounds, Scene, Trajectory, TrajcertError, flatten
from .denoise import DenoiserSpec
from .predictors import PredictorSpec, build_predictor
from .smoothing import _denoise_agents

SYNTHETIC_SOURCE = "synthetic"
DEFAULT_FRAME_INTERVAL = 0.1


class ParseError(TrajcertError):
    """A dataset line could not be parsed; carries the 1-based line number."""

    def __init__(self, line_no: int, msg: str):
        super().__init__(f"line {line_no}: {msg}")
        self.line_no = line_no


@dataclass(frozen=True)
class DatasetSplit:
    """A list of scenes sharing one (t_obs, t_pred) layout."""

    scenes: tuple
    source: str
    t_obs: int
    t_pred: int
    skipped: int = 0

    def __post_init__(self):
        object.__setattr__(self, "scenes", tuple(self.scenes))
        for scene in self.scenes:
            if scene.t_obs != self.t_obs or scene.t_pred != self.t_pred:
                raise ValueError(
                    f"scene {scene.scene_id} has layout ({scene.t_obs}, {scene.t_pred}), "
                    f"split requires ({self.t_obs}, {self.t_pred})"
                )

    def __len__(self) -> int:
        return len(self.scenes)


def _num(obj: dict, key: str, line_no: int) -> float:
    v = obj.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(float(v)):
        raise ParseError(line_no, f"field {key!r} must be a finite number, got {v!r}")
    return float(v)


def _intfield(obj: dict, key: str, line_no: int) -> int:
    v = obj.get(key)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ParseError(line_no, f"field {key!r} must be an integer, got {v!r}")
    return v


def load_trajnet(path, t_obs: int, t_pred: int,
                 frame_interval: float = 0.4) -> DatasetSplit:
    """Parse a newline-delimited JSON file of scene and track records.

    Each line holds either {"scene": {id, p, s, e}} or {"track": {f, p, x, y}}.
    A scene covers frames [s, s + t_obs + t_pred); its primary track must be
    present at every frame of that window, otherwise the scene is skipped and
    counted. Other pedestrians covering the full window become neighbors.
    """
    scene_records = []
    tracks: dict[int, dict[int, tuple[float, float]]] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as e:
                raise ParseError(line_no, f"malformed JSON ({e.msg})") from e
            if not isinstance(obj, dict) or len(obj) != 1:
                raise ParseError(line_no, "expected a single-key scene or track object")
            kind, body = next(iter(obj.items()))
            if kind == "scene":
                scene_records.append(
                    (
                        _intfield(body, "id", line_no),
                        _intfield(body, "p", line_no),
                        _intfield(body, "s", line_no),
                    )
                )
            elif kind == "track":
                f = _intfield(body, "f", line_no)
                p = _intfield(body, "p", line_no)
                x = _num(body, "x", line_no)
                y = _num(body, "y", line_no)
                tracks.setdefault(p, {})[f] = (x, y)
            else:
                raise ParseError(line_no, f"unknown record kind {kind!r}")

    window = t_obs + t_pred
    scenes = []
    skipped = 0
    for scene_id, primary_id, start in scene_records:
        frames = range(start, start + window)
        primary = tracks.get(primary_id, {})
        if not all(f in primary for f in frames):
            skipped += 1
            continue
        pts = np.array([primary[f] for f in frames])
        neighbors_obs = []
        neighbors_gt = []
        for ped_id in sorted(tracks):
            if ped_id == primary_id:
                continue
            track = tracks[ped_id]
            if not any(f in track for f in frames):
                continue
            if not all(f in track for f in frames):
                continue  # partial coverage: dropped from the scene
            npts = np.array([track[f] for f in frames])
            neighbors_obs.append(Trajectory(npts[:t_obs]))
            neighbors_gt.append(Trajectory(npts[t_obs:]))
        scenes.append(
            Scene(
                scene_id=scene_id,
                primary_obs=Trajectory(pts[:t_obs]),
                primary_gt=Trajectory(pts[t_obs:]),
                neighbors_obs=tuple(neighbors_obs),
                neighbors_gt=tuple(neighbors_gt),
                frame_interval=frame_interval,
            )
        )
    return DatasetSplit(tuple(scenes), source=str(path), t_obs=t_obs, t_pred=t_pred,
                        skipped=skipped)


def save_trajnet(split: DatasetSplit, path) -> None:
    """Serialize scenes back to the line-JSON format accepted by load_trajnet."""
    window = split.t_obs + split.t_pred
    stride = window + 10
    with open(path, "w", encoding="utf-8") as fh:
        ped_base = 0
        for idx, scene in enumerate(split.scenes):
            start = idx * stride
            primary_id = ped_base
            fh.write(json.dumps({"scene": {
                "id": scene.scene_id, "p": primary_id, "s": start, "e": start + window - 1,
            }}) + "\n")
            agents = [(primary_id, scene.primary_obs, scene.primary_gt)]
            for j, (nobs, ngt) in enumerate(zip(scene.neighbors_obs, scene.neighbors_gt)):
                agents.append((ped_base + 1 + j, nobs, ngt))
            for ped_id, obs, gt in agents:
                pts = np.concatenate([obs.points, gt.points])
                for off, (x, y) in enumerate(pts):
                    fh.write(json.dumps({"track": {
                        "f": start + off, "p": ped_id, "x": float(x), "y": float(y),
                    }}) + "\n")
            ped_base += 1 + len(scene.neighbors_obs)


def generate_synthetic(n_scenes: int, seed: int, t_obs: int = 9, t_pred: int = 12,
                       n_neighbors: int = 2, jitter: float = 0.0,
                       frame_interval: float = DEFAULT_FRAME_INTERVAL) -> DatasetSplit:
    """Deterministic synthetic scenes: constant velocity plus gentle sinusoidal sway.

    Ground truth continues the same motion model; jitter adds Gaussian noise to
    observations only. Speeds are sampled uniformly from [0.5, 2.0] m/s.
    """
    if n_scenes < 1:
        raise ValueError("n_scenes must be >= 1")
    window = t_obs + t_pred
    times = np.arange(window) * frame_interval
    scenes = []
    for idx in range(n_scenes):
        rng = np.random.default_rng(np.random.SeedSequence((int(seed) & 0xFFFFFFFF, idx)))

        def agent_track():
            start = rng.uniform(-20.0, 20.0, size=2)
            heading = rng.uniform(0.0, 2.0 * np.pi)
            speed = rng.uniform(0.5, 2.0)
            amp = rng.uniform(0.03, 0.12)
            omega = rng.uniform(0.2, 0.7)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            fwd = np.array([np.cos(heading), np.sin(heading)])
            lat = np.array([-fwd[1], fwd[0]])
            sway = amp * (np.sin(omega * times + phase) - np.sin(phase))
            pts = start[None, :] + np.outer(speed * times, fwd) + np.outer(sway, lat)
            obs = pts[:t_obs].copy()
            if jitter > 0:
                obs += rng.normal(0.0, jitter, size=obs.shape)
            return Trajectory(obs), Trajectory(pts[t_obs:])

        primary_obs, primary_gt = agent_track()
        neighbors_obs, neighbors_gt = [], []
        for _ in range(n_neighbors):
            nobs, ngt = agent_track()
            neighbors_obs.append(nobs)
            neighbors_gt.append(ngt)
        scenes.append(Scene(
            scene_id=idx,
            primary_obs=primary_obs,
            primary_gt=primary_gt,
            neighbors_obs=tuple(neighbors_obs),
            neighbors_gt=tuple(neighbors_gt),
            frame_interval=frame_interval,
        ))
    return DatasetSplit(tuple(scenes), source=SYNTHETIC_SOURCE, t_obs=t_obs, t_pred=t_pred)


def calibrate_clamp_bounds(train: DatasetSplit, predictor, denoiser: DenoiserSpec) -> ClampBounds:
    """Per-coordinate min/max of clean-input predictions over a training split.

    Predictions run through the denoiser first (the certified function is the
    composition); multi-modal predictors contribute every mode to the envelope.
    """
    if not train.scenes:
        raise ValueError("calibration requires a nonempty training split")
    owned = isinstance(predictor, PredictorSpec)
    pred = build_predictor(predictor, t_obs=train.t_obs) if owned else predictor
    lo = None
    hi = None
    try:
        for scene in train.scenes:
            x = _denoise_agents(denoiser, flatten(scene.primary_obs)[None, :])
            nbs = None
            if scene.neighbors_obs:
                nb = np.stack([flatten(t) for t in scene.neighbors_obs])
                nbs = _denoise_agents(denoiser, nb)[None, :, :]
            try:
                modes = pred.predict_batch(x, nbs)[0]
            except Exception as e:
                raise TrajcertError(f"predictor failed on scene {scene.scene_id}: {e}") from e
            mlo = modes.min(axis=0)
            mhi = modes.max(axis=0)
            lo = mlo if lo is None else np.minimum(lo, mlo)
            hi = mhi if hi is None else np.maximum(hi, mhi)
    finally:
        if owned:
            pred.close()
    return ClampBounds(lo, hi)
