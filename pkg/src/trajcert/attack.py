"""Bound falsification: gradient-free search for in-radius perturbations that
push the smoothed prediction outside its certified bounds."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import CertifiedPrediction, ConfigError

MAX_DEVIATION = "max_deviation"
BOUND_VIOLATION = "bound_violation"

_MASK32 = 0xFFFFFFFF


@dataclass(frozen=True)
class AttackConfig:
    """Search budget and objective for one falsification run."""

    radius: float
    restarts: int = 10
    iters: int = 50
    step: float | None = None
    seed: int = 0
    objective: str = BOUND_VIOLATION

    def __post_init__(self):
        if self.radius <= 0:
            raise ConfigError("attack radius must be > 0")
        if self.restarts < 1 or self.iters < 1:
            raise ConfigError("restarts and iters must be >= 1")
        if self.objective not in (MAX_DEVIATION, BOUND_VIOLATION):
            raise ConfigError(f"unknown attack objective {self.objective!r}")
        if self.step is not None and self.step <= 0:
            raise ConfigError("step must be > 0")

    @property
    def effective_step(self) -> float:
        return self.step if self.step is not None else self.radius / 10.0


@dataclass
class AttackReport:
    """Outcome of the falsification search on one scene."""

    scene_id: int
    objective: str
    best_value: float
    violated: bool
    perturbation: np.ndarray
    tolerance: float
    audit_value: float | None = None
    evaluations: int = 0

    def to_dict(self) -> dict:
        d = {
            "scene_id": self.scene_id,
            "objective": self.objective,
            "best_value": self.best_value,
            "violated": self.violated,
            "perturbation": np.asarray(self.perturbation).tolist(),
        }
        if self.audit_value is not None:
            d["audit_value"] = self.audit_value
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def project_l2(r: np.ndarray, radius: float) -> np.ndarray:
    """Scale r back onto the l2 ball of the given radius when it falls outside."""
    r = np.asarray(r, dtype=np.float64)
    norm = float(np.linalg.norm(r))
    if norm <= radius or norm == 0.0:
        return r.copy()
    return r * (radius / norm)


def _project_rows(r: np.ndarray, radius: float) -> np.ndarray:
    norms = np.linalg.norm(r, axis=1, keepdims=True)
    scale = np.where(norms > radius, radius / np.maximum(norms, 1e-300), 1.0)
    return r * scale


def _objective_values(kind: str, smoothed: np.ndarray, baseline: np.ndarray,
                      cp: CertifiedPrediction) -> np.ndarray:
    if kind == MAX_DEVIATION:
        return np.abs(smoothed - baseline[None, :]).max(axis=1)
    low = cp.lb[None, :] - smoothed
    high = smoothed - cp.ub[None, :]
    return np.maximum(low, high).max(axis=1)


def falsify(evaluator, cp: CertifiedPrediction, attack: AttackConfig,
            tolerance: float = 0.0, audit_evaluator=None) -> AttackReport:
    """Random-restart finite-difference ascent within the certification radius.

    Every candidate is projected onto the l2 ball before evaluation; smoothed
    values come from the evaluator, which shares the certification noise so the
    search objective is deterministic. A fresh-noise audit of the best point is
    reported separately when an audit evaluator is supplied.
    """
    if abs(attack.radius - cp.config.radius) > 1e-12:
        raise ConfigError(
            f"attack radius {attack.radius} must equal certification radius {cp.config.radius}"
        )
    dim = evaluator.noise_dim
    scene_id = getattr(getattr(evaluator, "scene", None), "scene_id", None)
    if scene_id is None:
        scene_id = getattr(getattr(evaluator, "pipe", None), "scene", None)
        scene_id = scene_id.scene_id if scene_id is not None else 0
    rng = np.random.default_rng(
        np.random.SeedSequence((attack.seed & _MASK32, int(scene_id) & _MASK32))
    )
    baseline = evaluator.smoothed_batch(np.zeros((1, dim)))[0]
    evals = 1

    def score(points: np.ndarray) -> np.ndarray:
        nonlocal evals
        evals += points.shape[0]
        return _objective_values(attack.objective, evaluator.smoothed_batch(points),
                                 baseline, cp)

    directions = rng.standard_normal((attack.restarts, dim))
    directions /= np.maximum(np.linalg.norm(directions, axis=1, keepdims=True), 1e-300)
    r = attack.radius * directions
    # score the unperturbed point too: a broken certificate fails already at r = 0
    initial = np.concatenate([np.zeros((1, dim)), r])
    values = score(initial)
    best_idx = int(np.argmax(values))
    best_value = float(values[best_idx])
    best_r = initial[best_idx].copy()

    step = attack.effective_step
    probe = step / 2.0
    for _ in range(attack.iters):
        u = rng.standard_normal((attack.restarts, dim))
        u /= np.maximum(np.linalg.norm(u, axis=1, keepdims=True), 1e-300)
        r_plus = _project_rows(r + probe * u, attack.radius)
        r_minus = _project_rows(r - probe * u, attack.radius)
        f_plus = score(r_plus)
        f_minus = score(r_minus)
        for cand_r, cand_f in ((r_plus, f_plus), (r_minus, f_minus)):
            i = int(np.argmax(cand_f))
            if cand_f[i] > best_value:
                best_value = float(cand_f[i])
                best_r = cand_r[i].copy()
        move = np.sign(f_plus - f_minus)[:, None] * u
        r = _project_rows(r + step * move, attack.radius)
    final = score(r)
    i = int(np.argmax(final))
    if final[i] > best_value:
        best_value = float(final[i])
        best_r = r[i].copy()

    violated = attack.objective == BOUND_VIOLATION and best_value > tolerance
    audit_value = None
    if audit_evaluator is not None:
        audit_smoothed = audit_evaluator.smoothed_batch(best_r[None, :])
        audit_baseline = audit_evaluator.smoothed_batch(np.zeros((1, dim)))[0]
        audit_value = float(
            _objective_values(attack.objective, audit_smoothed, audit_baseline, cp)[0]
        )
    return AttackReport(
        scene_id=int(scene_id),
        objective=attack.objective,
        best_value=best_value,
        violated=bool(violated),
        perturbation=best_r,
        tolerance=tolerance,
        audit_value=audit_value,
        evaluations=evals,
    )
