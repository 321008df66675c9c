"""Trajectory predictors: analytic built-ins and a line-JSON external-process adapter."""

from __future__ import annotations

import json
import select
import subprocess
from dataclasses import dataclass

import numpy as np

from .core import ConfigError, PredictionModes, Trajectory, TrajcertError, unflatten

CONSTANT_VELOCITY = "constant_velocity"
LINEAR = "linear"
EXTERNAL = "external"

FAN_HALF_ANGLE_DEG = 30.0
HANDSHAKE_TIMEOUT_S = 5.0
RESPONSE_TIMEOUT_S = 30.0


class PredictorError(TrajcertError):
    """A predictor failed or an external process violated the wire protocol."""

    def __init__(self, msg: str, raw_line: str | None = None):
        super().__init__(msg if raw_line is None else f"{msg}: {raw_line!r}")
        self.raw_line = raw_line


@dataclass(frozen=True)
class LinearPredictorWeights:
    """Affine map from a flattened observation to a flattened future: y = A x + b."""

    matrix: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.matrix, dtype=np.float64).copy()
        b = np.asarray(self.offset, dtype=np.float64).copy()
        if a.ndim != 2 or b.ndim != 1 or a.shape[0] != b.size:
            raise ConfigError("weights require A of shape (m, D) and b of shape (m,)")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ConfigError("weights must be finite")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "matrix", a)
        object.__setattr__(self, "offset", b)

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    @property
    def d(self) -> int:
        return self.matrix.shape[1]

    def to_json(self) -> str:
        return json.dumps({"A": self.matrix.tolist(), "b": self.offset.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "LinearPredictorWeights":
        obj = json.loads(text)
        return cls(np.asarray(obj["A"], dtype=np.float64), np.asarray(obj["b"], dtype=np.float64))


def constant_velocity_weights(t_obs: int, t_pred: int, n_agents: int = 1) -> LinearPredictorWeights:
    """Weights reproducing the constant-velocity predictor as one affine map.

    Prediction step t reads only the last two observed primary positions:
    pred_t = p_0 + t * (p_0 - p_{ -1 }).
    """
    d = 2 * t_obs * n_agents
    m = 2 * t_pred
    a = np.zeros((m, d))
    for t in range(1, t_pred + 1):
        for c in (0, 1):
            row = 2 * (t - 1) + c
            a[row, 2 * (t_obs - 1) + c] = 1.0 + t
            a[row, 2 * (t_obs - 2) + c] = -float(t)
    return LinearPredictorWeights(a, np.zeros(m))


@dataclass(frozen=True)
class PredictorSpec:
    """Which predictor to run and how many output modes it produces."""

    kind: str = CONSTANT_VELOCITY
    t_pred: int = 12
    k_modes: int = 1
    weights: tuple = ()
    command: tuple = ()

    def __post_init__(self):
        if self.kind not in (CONSTANT_VELOCITY, LINEAR, EXTERNAL):
            raise ConfigError(f"unknown predictor kind {self.kind!r}")
        if self.k_modes < 1:
            raise ConfigError("k_modes must be >= 1")
        if self.t_pred < 1:
            raise ConfigError("t_pred must be >= 1")
        if self.kind == EXTERNAL and not self.command:
            raise ConfigError("external predictor requires a command")
        weights = self.weights
        if isinstance(weights, LinearPredictorWeights):
            weights = (weights,)
        object.__setattr__(self, "weights", tuple(weights))
        object.__setattr__(self, "command", tuple(self.command))
        if self.kind == LINEAR and self.weights and len(self.weights) not in (1, self.k_modes):
            raise ConfigError("linear predictor needs one weight block or one per mode")


def _fan_angles(k: int) -> np.ndarray:
    """Mode 1 keeps the heading; the rest fan over +-30 degrees."""
    if k == 1:
        return np.zeros(1)
    half = np.deg2rad(FAN_HALF_ANGLE_DEG)
    rest = np.linspace(-half, half, k - 1) if k > 2 else np.array([-half])
    return np.concatenate([[0.0], rest])


class ConstantVelocityPredictor:
    """Extrapolates the last observed velocity, optionally fanning extra modes."""

    def __init__(self, spec: PredictorSpec):
        self.spec = spec
        self.angles = _fan_angles(spec.k_modes)

    def predict_batch(self, primary: np.ndarray, neighbors=None) -> np.ndarray:
        primary = np.atleast_2d(np.asarray(primary, dtype=np.float64))
        if primary.shape[1] < 4:
            raise ConfigError("constant velocity needs at least two observed positions")
        t_pred = self.spec.t_pred
        p0 = primary[:, -2:]
        v = p0 - primary[:, -4:-2]
        steps = np.arange(1, t_pred + 1, dtype=np.float64)
        out = np.empty((primary.shape[0], len(self.angles), 2 * t_pred))
        for mi, theta in enumerate(self.angles):
            c, s = np.cos(theta), np.sin(theta)
            vr = np.stack([c * v[:, 0] - s * v[:, 1], s * v[:, 0] + c * v[:, 1]], axis=1)
            out[:, mi, 0::2] = p0[:, :1] + steps[None, :] * vr[:, :1]
            out[:, mi, 1::2] = p0[:, 1:] + steps[None, :] * vr[:, 1:]
        return out

    def close(self):
        pass


class LinearPredictor:
    """Applies per-mode affine weights to the flattened observation."""

    def __init__(self, spec: PredictorSpec):
        if not spec.weights:
            raise ConfigError("linear predictor requires weights")
        self.spec = spec
        self.blocks = spec.weights
        m = 2 * spec.t_pred
        for w in self.blocks:
            if w.m != m:
                raise ConfigError(f"weight rows {w.m} do not match 2*t_pred = {m}")

    def predict_batch(self, primary: np.ndarray, neighbors=None) -> np.ndarray:
        primary = np.atleast_2d(np.asarray(primary, dtype=np.float64))
        if neighbors is not None and len(neighbors):
            joint = np.concatenate(
                [primary] + [np.atleast_2d(nb) for nb in np.swapaxes(neighbors, 0, 1)], axis=1
            )
        else:
            joint = primary
        outs = []
        for w in self.blocks:
            if w.d == primary.shape[1]:
                x = primary
            elif w.d == joint.shape[1]:
                x = joint
            else:
                raise ConfigError(
                    f"weight columns {w.d} match neither primary dim {primary.shape[1]} "
                    f"nor joint dim {joint.shape[1]}"
                )
            outs.append(x @ w.matrix.T + w.offset)
        if len(outs) == 1 and self.spec.k_modes > 1:
            outs = outs * self.spec.k_modes
        return np.stack(outs, axis=1)

    def close(self):
        pass


class ExternalPredictor:
    """Client for a child process speaking newline-delimited JSON over stdio."""

    def __init__(self, command, t_obs: int, t_pred: int):
        self.command = list(command)
        self.t_obs = t_obs
        self.t_pred = t_pred
        self._next_id = 0
        try:
            self.proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as e:
            raise PredictorError(f"failed to start external predictor {self.command}: {e}") from e
        hello = self._read_line(HANDSHAKE_TIMEOUT_S, context="handshake")
        try:
            obj = json.loads(hello)
        except json.JSONDecodeError as e:
            self.close()
            raise PredictorError("malformed handshake", hello) from e
        if obj.get("type") != "hello":
            self.close()
            raise PredictorError("expected hello handshake", hello)
        if int(obj["t_obs"]) != t_obs or int(obj["t_pred"]) != t_pred:
            self.close()
            raise ConfigError(
                f"external predictor handshake declares t_obs={obj['t_obs']}, "
                f"t_pred={obj['t_pred']}; expected ({t_obs}, {t_pred})"
            )
        self.k = int(obj.get("k", 1))

    def _read_line(self, timeout: float, context: str) -> str:
        if self.proc.stdout is None:
            raise PredictorError("external predictor stdout closed")
        ready, _, _ = select.select([self.proc.stdout], [], [], timeout)
        if not ready:
            self.close()
            raise PredictorError(f"external predictor timed out during {context}")
        line = self.proc.stdout.readline()
        if line == "":
            self.close()
            raise PredictorError(f"external predictor exited during {context}")
        return line.rstrip("\n")

    def predict_points(self, primary_pts: np.ndarray, neighbor_pts, scene_id=None) -> np.ndarray:
        """One request/response round trip; returns modes of shape (k, 2*t_pred)."""
        if self.proc.poll() is not None:
            raise PredictorError("external predictor process is dead")
        self._next_id += 1
        req_id = self._next_id
        request = {
            "type": "predict",
            "id": req_id,
            "primary": np.asarray(primary_pts, dtype=float).tolist(),
            "neighbors": [np.asarray(nb, dtype=float).tolist() for nb in neighbor_pts],
        }
        where = f" (scene {scene_id})" if scene_id is not None else ""
        try:
            self.proc.stdin.write(json.dumps(request) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise PredictorError(f"external predictor pipe broken{where}") from e
        line = self._read_line(RESPONSE_TIMEOUT_S, context=f"prediction{where}")
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise PredictorError(f"malformed response{where}", line) from e
        if obj.get("type") == "error":
            raise PredictorError(f"external predictor reported an error{where}", line)
        if obj.get("type") != "prediction" or obj.get("id") != req_id:
            raise PredictorError(f"protocol violation{where}", line)
        modes = np.asarray(obj.get("modes"), dtype=np.float64)
        if modes.ndim != 3 or modes.shape[1] != self.t_pred or modes.shape[2] != 2:
            raise PredictorError(f"prediction has wrong shape {modes.shape}{where}", line)
        if not np.all(np.isfinite(modes)):
            raise PredictorError(f"prediction contains non-finite values{where}", line)
        return modes.reshape(modes.shape[0], -1)

    def predict_batch(self, primary: np.ndarray, neighbors=None, scene_id=None) -> np.ndarray:
        primary = np.atleast_2d(np.asarray(primary, dtype=np.float64))
        rows = []
        for i in range(primary.shape[0]):
            pts = primary[i].reshape(-1, 2)
            nbs = [] if neighbors is None else [nb.reshape(-1, 2) for nb in neighbors[i]]
            rows.append(self.predict_points(pts, nbs, scene_id=scene_id))
        return np.stack(rows, axis=0)

    def close(self):
        if getattr(self, "proc", None) is None:
            return
        try:
            if self.proc.poll() is None and self.proc.stdin:
                try:
                    self.proc.stdin.write(json.dumps({"type": "bye"}) + "\n")
                    self.proc.stdin.flush()
                except (BrokenPipeError, OSError):
                    pass
                self.proc.stdin.close()
            self.proc.wait(timeout=5.0)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def spawn_external(command, t_obs: int, t_pred: int) -> ExternalPredictor:
    """Start an external predictor process and complete its handshake."""
    return ExternalPredictor(command, t_obs=t_obs, t_pred=t_pred)


def build_predictor(spec: PredictorSpec, t_obs: int):
    """Instantiate the predictor behind a spec. External handles must be closed."""
    if spec.kind == CONSTANT_VELOCITY:
        return ConstantVelocityPredictor(spec)
    if spec.kind == LINEAR:
        return LinearPredictor(spec)
    return ExternalPredictor(spec.command, t_obs=t_obs, t_pred=spec.t_pred)


def predict(spec_or_predictor, primary_obs: Trajectory, neighbors_obs=()) -> PredictionModes:
    """Run one prediction; accepts a spec (built and torn down here) or a live predictor."""
    owned = isinstance(spec_or_predictor, PredictorSpec)
    predictor = (
        build_predictor(spec_or_predictor, t_obs=len(primary_obs))
        if owned
        else spec_or_predictor
    )
    try:
        primary = primary_obs.points.reshape(1, -1)
        if neighbors_obs:
            nbs = np.stack([nb.points.reshape(-1) for nb in neighbors_obs])[None, :, :]
        else:
            nbs = None
        modes = predictor.predict_batch(primary, nbs)[0]
        if not np.all(np.isfinite(modes)):
            raise PredictorError("predictor produced non-finite output")
        return PredictionModes(tuple(unflatten(m) for m in modes))
    finally:
        if owned:
            predictor.close()
