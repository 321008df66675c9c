"""Accuracy and certified-robustness metrics over certified predictions."""

from __future__ import annotations

import numpy as np

from .core import CertifiedPrediction, MetricsReport, Scene, Trajectory

DEFAULT_COLLISION_THRESHOLD = 0.1


def ade_fde(pred: Trajectory, gt: Trajectory) -> tuple[float, float]:
    """Average and final Euclidean displacement between prediction and ground truth."""
    if len(pred) != len(gt):
        raise ValueError(f"trajectory lengths differ: {len(pred)} vs {len(gt)}")
    d = np.hypot(pred.xs - gt.xs, pred.ys - gt.ys)
    return float(d.mean()), float(d[-1])


def bound_boxes(cp: CertifiedPrediction) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-timestep axis-aligned box edges (lbx, ubx, lby, uby), each of length T."""
    return cp.lb[0::2], cp.ub[0::2], cp.lb[1::2], cp.ub[1::2]


def abd_fbd(cp: CertifiedPrediction) -> tuple[float, float]:
    """Average and final distance from the prediction to the farthest corner of its box."""
    lbx, ubx, lby, uby = bound_boxes(cp)
    px, py = cp.y[0::2], cp.y[1::2]
    dx = np.maximum(px - lbx, ubx - px)
    dy = np.maximum(py - lby, uby - py)
    hd = np.hypot(dx, dy)
    return float(hd.mean()), float(hd[-1])


def certified_ade_fde(cp: CertifiedPrediction, gt: Trajectory) -> tuple[float, float]:
    """Worst-case ADE/FDE: distance from ground truth to the farthest box point."""
    if len(gt) != cp.t_pred:
        raise ValueError(f"ground truth length {len(gt)} does not match bounds {cp.t_pred}")
    lbx, ubx, lby, uby = bound_boxes(cp)
    dx = np.maximum(np.abs(gt.xs - lbx), np.abs(gt.xs - ubx))
    dy = np.maximum(np.abs(gt.ys - lby), np.abs(gt.ys - uby))
    d = np.hypot(dx, dy)
    return float(d.mean()), float(d[-1])


def scene_collides(scene: Scene, cp: CertifiedPrediction,
                   threshold: float = DEFAULT_COLLISION_THRESHOLD) -> tuple[bool, bool]:
    """Point-distance and box-containment collision flags for one scene."""
    px, py = cp.y[0::2], cp.y[1::2]
    lbx, ubx, lby, uby = bound_boxes(cp)
    col = False
    cert_col = False
    for nb in scene.neighbors_gt:
        t = min(len(nb), cp.t_pred)
        nx, ny = nb.xs[:t], nb.ys[:t]
        if np.any(np.hypot(nx - px[:t], ny - py[:t]) <= threshold):
            col = True
        inside = (lbx[:t] <= nx) & (nx <= ubx[:t]) & (lby[:t] <= ny) & (ny <= uby[:t])
        if np.any(inside):
            cert_col = True
        if col and cert_col:
            break
    return col, cert_col


def collision_rates(scenes, cps, threshold: float = DEFAULT_COLLISION_THRESHOLD
                    ) -> tuple[float, float]:
    """Fractions of scenes with a point collision / a neighbor inside the bound box."""
    if len(scenes) != len(cps):
        raise ValueError("scenes and predictions must be parallel")
    if not scenes:
        return 0.0, 0.0
    hits = bhits = 0
    for scene, cp in zip(scenes, cps):
        col, cert_col = scene_collides(scene, cp, threshold)
        hits += col
        bhits += cert_col
    return hits / len(scenes), bhits / len(scenes)


def evaluate_dataset(scenes, cps, threshold: float = DEFAULT_COLLISION_THRESHOLD
                     ) -> MetricsReport:
    """Aggregate all metrics over parallel lists of scenes and certified predictions."""
    if len(scenes) != len(cps):
        raise ValueError("scenes and predictions must be parallel")
    if not scenes:
        raise ValueError("cannot evaluate an empty dataset")
    ades, fdes, abds, fbds, cades, cfdes = [], [], [], [], [], []
    for scene, cp in zip(scenes, cps):
        a, f = ade_fde(cp.trajectory(), scene.primary_gt)
        ab, fb = abd_fbd(cp)
        ca, cf = certified_ade_fde(cp, scene.primary_gt)
        ades.append(a)
        fdes.append(f)
        abds.append(ab)
        fbds.append(fb)
        cades.append(ca)
        cfdes.append(cf)
    col, cert_col = collision_rates(scenes, cps, threshold)
    return MetricsReport(
        ade=float(np.mean(ades)),
        fde=float(np.mean(fdes)),
        abd=float(np.mean(abds)),
        fbd=float(np.mean(fbds)),
        certified_ade=float(np.mean(cades)),
        certified_fde=float(np.mean(cfdes)),
        col_rate=col,
        certified_col_rate=cert_col,
        n_scenes=len(scenes),
    )
