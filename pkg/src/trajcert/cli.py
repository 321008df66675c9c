"""Command-line entry point for certification, sweeps, attacks and benchmarks."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import shlex
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .attack import BOUND_VIOLATION, MAX_DEVIATION, AttackConfig, falsify
from .core import (
    MEAN,
    MEDIAN,
    MIN_ADE,
    MIN_FDE,
    SCOPE_ALL,
    SCOPE_PRIMARY,
    ClampBounds,
    ConfigError,
    SmoothingConfig,
    TrajcertError,
)
from .data import DatasetSplit, calibrate_clamp_bounds, generate_synthetic, load_trajnet
from .denoise import (
    IDENTITY,
    MOVING_AVERAGE,
    POLYNOMIAL,
    WIENER,
    DenoiserSpec,
    residual_noise,
)
from .metrics import evaluate_dataset
from .predictors import (
    CONSTANT_VELOCITY,
    EXTERNAL,
    LINEAR,
    LinearPredictorWeights,
    PredictorSpec,
    constant_velocity_weights,
)
from .smoothing import (
    AnalyticLinearEvaluator,
    MonteCarloEvaluator,
    analytic_certify_linear,
    certify,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VIOLATION = 3

_DENOISER_ALIASES = {
    "identity": IDENTITY,
    "wiener": WIENER,
    "ma": MOVING_AVERAGE,
    "moving_average": MOVING_AVERAGE,
    "poly": POLYNOMIAL,
    "polynomial": POLYNOMIAL,
}

AUDIT_SEED_OFFSET = 1_000_003


@dataclass
class ClaimedBounds:
    """Unvalidated bounds under falsification (possibly loaded from disk)."""

    lb: np.ndarray
    ub: np.ndarray
    config: SmoothingConfig


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _add_dataset_flags(p: argparse.ArgumentParser):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--data", help="line-JSON dataset file")
    src.add_argument("--synthetic", type=int, metavar="N", help="generate N synthetic scenes")
    p.add_argument("--t-obs", type=int, default=9)
    p.add_argument("--t-pred", type=int, default=12)
    p.add_argument("--neighbors", type=int, default=2, help="neighbors per synthetic scene")
    p.add_argument("--jitter", type=float, default=0.0, help="synthetic observation noise (m)")
    p.add_argument("--frame-interval", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)


def _add_model_flags(p: argparse.ArgumentParser):
    p.add_argument("--predictor", default="cv",
                   help="cv | linear:WEIGHTS.json | external:COMMAND")
    p.add_argument("--k", type=int, default=1, help="prediction modes")
    p.add_argument("--denoiser", default="identity",
                   choices=sorted(_DENOISER_ALIASES))
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--degree", type=int, default=4)
    p.add_argument("--noise-power", type=float, default=None)


def _add_smoothing_flags(p: argparse.ArgumentParser):
    p.add_argument("--aggregator", choices=[MEAN, MEDIAN], default=MEDIAN)
    p.add_argument("--sigma", type=float, default=0.08)
    p.add_argument("--radius", type=float, default=0.1)
    p.add_argument("--n", type=int, default=100, help="Monte-Carlo samples")
    p.add_argument("--scope", choices=["primary", "all"], default="primary")
    p.add_argument("--mode-select", choices=[MIN_FDE, MIN_ADE], default=MIN_FDE)
    p.add_argument("--clamp", help="clamp bounds JSON (required for mean)")
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajcert",
        description="Certified trajectory prediction via randomized smoothing",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("certify", help="certify every scene and report metrics")
    _add_dataset_flags(p)
    _add_model_flags(p)
    _add_smoothing_flags(p)
    p.add_argument("--threshold", type=float, default=0.1, help="collision threshold (m)")
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("sweep", help="sigma sweep producing a CSV of metrics")
    _add_dataset_flags(p)
    _add_model_flags(p)
    _add_smoothing_flags(p)
    p.add_argument("--sigmas", help="comma-separated sigma list")
    p.add_argument("--sigma-range", help="LO:HI:COUNT equally spaced sigmas")
    p.add_argument("--threshold", type=float, default=0.1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("attack", help="falsification campaign against certified bounds")
    _add_dataset_flags(p)
    _add_model_flags(p)
    _add_smoothing_flags(p)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--step", type=float, default=None)
    p.add_argument("--tolerance", type=float, default=0.0)
    p.add_argument("--objective", choices=[MAX_DEVIATION, BOUND_VIOLATION],
                   default=BOUND_VIOLATION)
    p.add_argument("--analytic", action="store_true",
                   help="use exact closed-form certification (linear predictors only)")
    p.add_argument("--bounds", help="attack bounds from a certify scenes.jsonl file")
    p.add_argument("--out", required=True)

    p = sub.add_parser("denoise-bench", help="residual-noise table for every denoiser")
    _add_dataset_flags(p)
    p.add_argument("--sigmas", default="0.08,0.24,0.40")
    p.add_argument("--window", type=int, default=None)
    p.add_argument("--degree", type=int, default=4)
    p.add_argument("--noise-power", type=float, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("calibrate", help="calibrate clamp bounds over a training split")
    _add_dataset_flags(p)
    _add_model_flags(p)
    p.add_argument("--out", required=True, help="output clamp JSON path")
    return parser


def _resolve_seed(args) -> int:
    env = os.environ.get("TRAJCERT_SEED")
    return int(env) if env is not None else args.seed


def _load_dataset(args, seed: int) -> DatasetSplit:
    if args.data is not None:
        split = load_trajnet(args.data, t_obs=args.t_obs, t_pred=args.t_pred)
        if split.skipped:
            print(f"trajcert: warning: skipped {split.skipped} scene(s) with "
                  "incomplete primary tracks", file=sys.stderr)
        return split
    if args.synthetic is None or args.synthetic < 1:
        raise ConfigError("--synthetic requires a positive scene count")
    return generate_synthetic(
        args.synthetic, seed=seed, t_obs=args.t_obs, t_pred=args.t_pred,
        n_neighbors=args.neighbors, jitter=args.jitter,
        frame_interval=args.frame_interval,
    )


def _parse_predictor(args) -> PredictorSpec:
    text = args.predictor
    if text == "cv":
        return PredictorSpec(kind=CONSTANT_VELOCITY, t_pred=args.t_pred, k_modes=args.k)
    if text.startswith("linear:"):
        path = text.split(":", 1)[1]
        with open(path, encoding="utf-8") as fh:
            weights = LinearPredictorWeights.from_json(fh.read())
        return PredictorSpec(kind=LINEAR, t_pred=args.t_pred, k_modes=args.k, weights=(weights,))
    if text.startswith("external:"):
        command = tuple(shlex.split(text.split(":", 1)[1]))
        return PredictorSpec(kind=EXTERNAL, t_pred=args.t_pred, k_modes=args.k, command=command)
    raise ConfigError(f"unknown predictor {text!r}")


def _parse_denoiser(args) -> DenoiserSpec:
    return DenoiserSpec(
        kind=_DENOISER_ALIASES[args.denoiser],
        window=args.window,
        degree=args.degree,
        noise_power=args.noise_power,
    )


def _smoothing_config(args, seed: int, sigma: float | None = None) -> SmoothingConfig:
    clamp = None
    if args.clamp:
        with open(args.clamp, encoding="utf-8") as fh:
            clamp = ClampBounds.from_json(fh.read())
    if args.aggregator == MEAN and clamp is None:
        raise ConfigError("mean aggregation requires --clamp bounds")
    scope = SCOPE_ALL if args.scope == "all" else SCOPE_PRIMARY
    return SmoothingConfig(
        sigma=args.sigma if sigma is None else sigma,
        radius=args.radius,
        n_samples=args.n,
        aggregator=args.aggregator,
        scope=scope,
        mode_select=args.mode_select,
        seed=seed,
        clamp=clamp,
    )


def _input_digests(args) -> dict:
    digests = {}
    for attr in ("data", "clamp", "bounds"):
        path = getattr(args, attr, None)
        if path:
            digests[path] = _sha256(path)
    if getattr(args, "predictor", "").startswith("linear:"):
        path = args.predictor.split(":", 1)[1]
        digests[path] = _sha256(path)
    return digests


def _write_manifest(out_dir: str, args, seed: int, started: float, name="manifest.json"):
    manifest = {
        "command": args.command,
        "config": {k: v for k, v in sorted(vars(args).items()) if k != "command"},
        "seed": seed,
        "version": __version__,
        "input_digests": _input_digests(args),
        "started_at": started,
        "finished_at": time.time(),
    }
    path = os.path.join(out_dir, name) if os.path.isdir(out_dir) else out_dir + ".manifest.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, default=str)
        fh.write("\n")


def _certify_dataset(dataset, predictor_spec, denoiser, config, workers: int):
    scenes = dataset.scenes

    def run_block(block):
        from .predictors import build_predictor

        predictor = build_predictor(predictor_spec, t_obs=dataset.t_obs)
        try:
            return [certify(s, predictor, denoiser, config) for s in block]
        finally:
            predictor.close()

    if workers <= 1 or len(scenes) < 2:
        return run_block(scenes)
    workers = min(workers, len(scenes))
    blocks = [scenes[i::workers] for i in range(workers)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(run_block, blocks))
    out = [None] * len(scenes)
    for widx, block_result in enumerate(results):
        for j, cp in enumerate(block_result):
            out[widx + j * workers] = cp
    return out


def cmd_certify(args) -> int:
    started = time.time()
    seed = _resolve_seed(args)
    dataset = _load_dataset(args, seed)
    if not dataset.scenes:
        raise ConfigError("dataset contains no usable scenes")
    predictor_spec = _parse_predictor(args)
    denoiser = _parse_denoiser(args)
    config = _smoothing_config(args, seed)
    cps = _certify_dataset(dataset, predictor_spec, denoiser, config, args.workers)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "scenes.jsonl"), "w", encoding="utf-8") as fh:
        for scene, cp in zip(dataset.scenes, cps):
            fh.write(json.dumps({
                "scene_id": scene.scene_id,
                "y": cp.y.tolist(),
                "lb": cp.lb.tolist(),
                "ub": cp.ub.tolist(),
            }) + "\n")
    report = evaluate_dataset(dataset.scenes, cps, threshold=args.threshold)
    with open(os.path.join(args.out, "metrics.json"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    _write_manifest(args.out, args, seed, started)
    return EXIT_OK


def _sweep_sigmas(args) -> list[float]:
    if args.sigmas:
        return [float(s) for s in args.sigmas.split(",") if s.strip()]
    if args.sigma_range:
        lo, hi, count = args.sigma_range.split(":")
        return np.linspace(float(lo), float(hi), int(count)).tolist()
    raise ConfigError("sweep requires --sigmas or --sigma-range")


def cmd_sweep(args) -> int:
    started = time.time()
    seed = _resolve_seed(args)
    dataset = _load_dataset(args, seed)
    if not dataset.scenes:
        raise ConfigError("dataset contains no usable scenes")
    predictor_spec = _parse_predictor(args)
    denoiser = _parse_denoiser(args)
    sigmas = _sweep_sigmas(args)
    os.makedirs(args.out, exist_ok=True)
    rows = []
    for sigma in sigmas:
        config = _smoothing_config(args, seed, sigma=sigma)
        cps = _certify_dataset(dataset, predictor_spec, denoiser, config, args.workers)
        report = evaluate_dataset(dataset.scenes, cps, threshold=args.threshold)
        rows.append((sigma, report.ade, report.fde, report.abd, report.fbd,
                     report.certified_ade, report.certified_fde))
    with open(os.path.join(args.out, "sweep.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sigma", "ade", "fde", "abd", "fbd", "cade", "cfde"])
        writer.writerows(rows)
    fdes = [r[2] for r in rows]
    fbds = [r[4] for r in rows]
    trends = {
        "fde_nondecreasing": all(b >= a for a, b in zip(fdes, fdes[1:])),
        "fbd_nonincreasing": all(b <= a for a, b in zip(fbds, fbds[1:])),
    }
    with open(os.path.join(args.out, "trends.json"), "w", encoding="utf-8") as fh:
        json.dump(trends, fh)
        fh.write("\n")
    _write_manifest(args.out, args, seed, started)
    return EXIT_OK


def _analytic_weights(predictor_spec: PredictorSpec, dataset) -> LinearPredictorWeights:
    if predictor_spec.kind == CONSTANT_VELOCITY:
        return constant_velocity_weights(dataset.t_obs, predictor_spec.t_pred)
    if predictor_spec.kind == LINEAR and len(predictor_spec.weights) == 1:
        return predictor_spec.weights[0]
    raise ConfigError("analytic certification requires a single-mode linear predictor")


def _load_bounds_file(path: str) -> dict:
    claims = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            claims[int(obj["scene_id"])] = (
                np.asarray(obj["lb"], dtype=np.float64),
                np.asarray(obj["ub"], dtype=np.float64),
            )
    return claims


def cmd_attack(args) -> int:
    started = time.time()
    seed = _resolve_seed(args)
    dataset = _load_dataset(args, seed)
    if not dataset.scenes:
        raise ConfigError("dataset contains no usable scenes")
    predictor_spec = _parse_predictor(args)
    denoiser = _parse_denoiser(args)
    config = _smoothing_config(args, seed)
    attack_cfg = AttackConfig(
        radius=config.radius, restarts=args.restarts, iters=args.iters,
        step=args.step, seed=seed, objective=args.objective,
    )
    if args.analytic:
        if denoiser.kind != IDENTITY:
            raise ConfigError("analytic attack path requires the identity denoiser")
        if predictor_spec.k_modes != 1:
            raise ConfigError("analytic attack path requires a single-mode predictor")
        if config.aggregator != MEDIAN:
            raise ConfigError("analytic certification corresponds to median aggregation")
        weights = _analytic_weights(predictor_spec, dataset)
    claims = _load_bounds_file(args.bounds) if args.bounds else None

    def attack_scene(scene):
        if args.analytic:
            evaluator = AnalyticLinearEvaluator(weights, scene, config)
            target = analytic_certify_linear(weights, scene, config)
            audit_evaluator = None
        else:
            evaluator = MonteCarloEvaluator(scene, predictor_spec, denoiser, config)
            target = evaluator.certified()
            audit_config = SmoothingConfig(
                sigma=config.sigma, radius=config.radius, n_samples=config.n_samples,
                aggregator=config.aggregator, scope=config.scope,
                mode_select=config.mode_select, seed=seed + AUDIT_SEED_OFFSET,
                clamp=config.clamp,
            )
            audit_evaluator = MonteCarloEvaluator(scene, predictor_spec, denoiser,
                                                  audit_config)
        if claims is not None:
            if scene.scene_id not in claims:
                raise ConfigError(f"bounds file lacks scene {scene.scene_id}")
            lb, ub = claims[scene.scene_id]
            target = ClaimedBounds(lb=lb, ub=ub, config=config)
        try:
            return falsify(evaluator, target, attack_cfg, tolerance=args.tolerance,
                           audit_evaluator=audit_evaluator)
        finally:
            evaluator.close()
            if audit_evaluator is not None:
                audit_evaluator.close()

    if args.workers > 1 and len(dataset.scenes) > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            reports = list(pool.map(attack_scene, dataset.scenes))
    else:
        reports = [attack_scene(scene) for scene in dataset.scenes]
    violations = sum(r.violated for r in reports)
    os.makedirs(args.out, exist_ok=True)
    campaign = {
        "objective": args.objective,
        "tolerance": args.tolerance,
        "n_scenes": len(dataset.scenes),
        "violations": int(violations),
        "reports": [r.to_dict() for r in reports],
    }
    with open(os.path.join(args.out, "attack.json"), "w", encoding="utf-8") as fh:
        json.dump(campaign, fh)
        fh.write("\n")
    _write_manifest(args.out, args, seed, started)
    return EXIT_VIOLATION if violations else EXIT_OK


def cmd_denoise_bench(args) -> int:
    started = time.time()
    seed = _resolve_seed(args)
    dataset = _load_dataset(args, seed)
    if not dataset.scenes:
        raise ConfigError("dataset contains no usable scenes")
    sigmas = [float(s) for s in args.sigmas.split(",") if s.strip()]
    kinds = [IDENTITY, POLYNOMIAL, MOVING_AVERAGE, WIENER]
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "denoise_bench.csv"), "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["denoiser", "sigma", "residual_noise"])
        for kind in kinds:
            spec = DenoiserSpec(kind=kind, window=args.window, degree=args.degree,
                                noise_power=args.noise_power)
            for sigma in sigmas:
                writer.writerow([kind, sigma, residual_noise(spec, dataset, sigma, seed)])
    _write_manifest(args.out, args, seed, started)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    started = time.time()
    seed = _resolve_seed(args)
    dataset = _load_dataset(args, seed)
    if not dataset.scenes:
        raise ConfigError("dataset contains no usable scenes")
    predictor_spec = _parse_predictor(args)
    denoiser = _parse_denoiser(args)
    bounds = calibrate_clamp_bounds(dataset, predictor_spec, denoiser)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(bounds.to_json() + "\n")
    _write_manifest(args.out, args, seed, started)
    return EXIT_OK


_COMMANDS = {
    "certify": cmd_certify,
    "sweep": cmd_sweep,
    "attack": cmd_attack,
    "denoise-bench": cmd_denoise_bench,
    "calibrate": cmd_calibrate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (TrajcertError, OSError, ValueError) as e:
        print(f"trajcert: error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
