"""Simulated plant and reproducible candidate/measurement datasets.

Every episode draws from its own random stream keyed on
``(seed, episode_id)``, so any episode can be regenerated alone and in any
order.  Inputs and measurement noise use separate child streams: turning
outputs on does not change the sampled inputs.
"""

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_positive_int, check_postures, check_random_state
from .calibration import AXES, join_parameters
from .exceptions import DatasetError, InputError

FORMAT_VERSION = 1
UNIT_BOUNDS = ((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))
# pitch, yaw, roll in degrees
PHYSICAL_BOUNDS = ((-30.0, 30.0), (-25.0, 25.0), (-30.0, 30.0))
DEFAULT_NOISE = 0.01

_INPUT_STREAM = 0
_NOISE_STREAM = 1


@dataclass(frozen=True)
class PlantTruth:
    """Ground-truth scaling matrix, bias and per-axis noise level."""

    x_a: tuple
    x_b: tuple
    noise_sigma: tuple = (DEFAULT_NOISE,) * 3

    def __post_init__(self):
        x_a = np.asarray(self.x_a, dtype=float)
        x_b = np.asarray(self.x_b, dtype=float).reshape(-1)
        sigma = np.broadcast_to(np.asarray(self.noise_sigma, dtype=float), (3,))
        if x_a.shape != (3, 3) or x_b.shape != (3,):
            raise InputError("plant needs a 3x3 scaling matrix and a 3-vector bias")
        if not (np.all(np.isfinite(x_a)) and np.all(np.isfinite(x_b)) and np.all(np.isfinite(sigma))):
            raise InputError("plant parameters must be finite")
        if np.any(sigma < 0):
            raise InputError(f"noise_sigma must be non-negative, got {sigma.tolist()}")
        object.__setattr__(self, "x_a", tuple(map(tuple, x_a.tolist())))
        object.__setattr__(self, "x_b", tuple(x_b.tolist()))
        object.__setattr__(self, "noise_sigma", tuple(sigma.tolist()))

    @property
    def parameters(self):
        return join_parameters(self.x_a, self.x_b)

    def with_noise(self, sigma):
        return PlantTruth(self.x_a, self.x_b, np.broadcast_to(sigma, (3,)).tolist())

    def to_dict(self):
        return {"x_a": [list(r) for r in self.x_a], "x_b": list(self.x_b),
                "noise_sigma": list(self.noise_sigma)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["x_a"], d["x_b"], d.get("noise_sigma", (DEFAULT_NOISE,) * 3))

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def table1_plant(noise_sigma=0.0, cross_coupling=None):
    """Validation plant with per-axis scaling and bias.

    Pitch: scale 0.43, bias 3.1; yaw: scale 0.71, bias -5.8; roll: scale
    0.87, bias 2.41.  ``cross_coupling`` is an optional 3x3 matrix added to
    the diagonal scaling.
    """
    x_a = np.diag([0.43, 0.71, 0.87])
    if cross_coupling is not None:
        x_a = x_a + np.asarray(cross_coupling, dtype=float)
    return PlantTruth(x_a, (3.1, -5.8, 2.41), np.broadcast_to(noise_sigma, (3,)).tolist())


def identity_plant(noise_sigma=0.0):
    return PlantTruth(np.eye(3), (0.0, 0.0, 0.0), np.broadcast_to(noise_sigma, (3,)).tolist())


@dataclass(frozen=True)
class DatasetSpec:
    n_episodes: int = 1
    m_per_episode: int = 50
    bounds: tuple = UNIT_BOUNDS
    seed: int = 0
    with_outputs: bool = False

    def __post_init__(self):
        check_positive_int(self.n_episodes, "n_episodes", minimum=1)
        check_positive_int(self.m_per_episode, "m_per_episode", minimum=4)
        b = np.asarray(self.bounds, dtype=float)
        if b.shape != (3, 2) or not np.all(np.isfinite(b)):
            raise InputError(f"bounds must be three finite (lower, upper) pairs, got {self.bounds!r}")
        if np.any(b[:, 0] >= b[:, 1]):
            raise InputError(f"degenerate bounds (lower >= upper): {b.tolist()}")
        object.__setattr__(self, "bounds", tuple(map(tuple, b.tolist())))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "with_outputs", bool(self.with_outputs))

    @property
    def normalized(self):
        return self.bounds == UNIT_BOUNDS

    def to_dict(self):
        d = asdict(self)
        d["bounds"] = [list(b) for b in self.bounds]
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: d[k] for k in ("n_episodes", "m_per_episode", "bounds", "seed", "with_outputs") if k in d})


@dataclass
class EpisodeData:
    episode_id: int
    inputs: np.ndarray
    outputs: np.ndarray = None
    normalized: bool = True
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = check_postures(self.inputs, name="inputs", normalized=self.normalized)
        if self.outputs is not None:
            self.outputs = check_postures(self.outputs, name="outputs")
            if len(self.outputs) != len(self.inputs):
                raise InputError(f"episode {self.episode_id}: {len(self.inputs)} inputs vs {len(self.outputs)} outputs")

    @property
    def m(self):
        return len(self.inputs)

    def to_record(self):
        rec = {"episode_id": int(self.episode_id), "normalized": bool(self.normalized),
               "inputs": self.inputs.tolist()}
        if self.outputs is not None:
            rec["outputs"] = self.outputs.tolist()
        return rec

    @classmethod
    def from_record(cls, rec):
        return cls(int(rec["episode_id"]), np.asarray(rec["inputs"], dtype=float),
                   None if rec.get("outputs") is None else np.asarray(rec["outputs"], dtype=float),
                   bool(rec.get("normalized", True)))


def episode_rng(seed, episode_id, stream=_INPUT_STREAM):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(episode_id), int(stream)]))


def generate_candidates(spec, episode_id):
    """``spec.m_per_episode`` postures drawn uniformly within ``spec.bounds``."""
    b = np.asarray(spec.bounds)
    rng = episode_rng(spec.seed, episode_id, _INPUT_STREAM)
    return b[:, 0] + (b[:, 1] - b[:, 0]) * rng.random((spec.m_per_episode, 3))


def simulate_measure(plant, u, rng=None):
    """``X_A u + X_B + noise`` for one posture (3,) or a batch (n, 3)."""
    single = np.ndim(u) == 1
    U = check_postures(u)
    rng = check_random_state(rng)
    x_a = np.asarray(plant.x_a)
    Y = U @ x_a.T + np.asarray(plant.x_b)
    sigma = np.asarray(plant.noise_sigma)
    if np.any(sigma > 0):
        Y = Y + rng.standard_normal(U.shape) * sigma
    return Y[0] if single else Y


def generate_episode(spec, episode_id, plant=None):
    inputs = generate_candidates(spec, episode_id)
    outputs = None
    if spec.with_outputs:
        if plant is None:
            raise InputError("a plant is required to generate outputs")
        outputs = simulate_measure(plant, inputs, episode_rng(spec.seed, episode_id, _NOISE_STREAM))
    return EpisodeData(episode_id, inputs, outputs, spec.normalized)


def iter_episodes(spec, plant=None, start=0):
    for e in range(start, start + spec.n_episodes):
        yield generate_episode(spec, e, plant)


def _dump(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def make_dataset(spec, plant=None, path=None):
    """Generate ``spec.n_episodes`` episodes and write them as JSON lines.

    The first line is a header ``{format_version, spec, plant, plant_digest}``;
    each following line is one episode record.  Returns the episodes.
    """
    if spec.with_outputs and plant is None:
        raise InputError("with_outputs requires a plant")
    episodes = list(iter_episodes(spec, plant))
    if path is not None:
        write_dataset(path, episodes, spec, plant)
    return episodes


def write_dataset(path, episodes, spec=None, plant=None):
    path = Path(path)
    header = {
        "format_version": FORMAT_VERSION,
        "spec": None if spec is None else spec.to_dict(),
        "plant": None if plant is None else plant.to_dict(),
        "plant_digest": None if plant is None else plant.digest(),
    }
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            fh.write(_dump(header) + "\n")
            for ep in episodes:
                fh.write(_dump(ep.to_record()) + "\n")
    except OSError as exc:
        raise DatasetError(f"cannot write dataset {path}: {exc}") from exc
    return path


def read_dataset(path):
    """Return ``(header, episodes)`` from a JSON-lines dataset file."""
    path = Path(path)
    try:
        with path.open(encoding="utf-8") as fh:
            lines = [ln for ln in fh if ln.strip()]
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from exc
    if not lines:
        raise DatasetError(f"dataset {path} is empty")
    try:
        header = json.loads(lines[0])
        if header.get("format_version") != FORMAT_VERSION:
            raise DatasetError(f"{path}: unsupported format_version {header.get('format_version')!r}")
        episodes = [EpisodeData.from_record(json.loads(ln)) for ln in lines[1:]]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DatasetError(f"malformed dataset {path}: {exc}") from exc
    except InputError as exc:
        raise DatasetError(f"invalid episode in {path}: {exc}") from exc
    return header, episodes


def export_csv(path, episodes):
    """Flat per-posture CSV for plotting tools."""
    path = Path(path)
    with_outputs = any(ep.outputs is not None for ep in episodes)
    cols = ["episode_id", "index"] + [f"u_{a}" for a in AXES]
    if with_outputs:
        cols += [f"y_{a}" for a in AXES]
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for ep in episodes:
                for i, u in enumerate(ep.inputs):
                    row = [ep.episode_id, i] + [repr(float(v)) for v in u]
                    if with_outputs:
                        y = ep.outputs[i] if ep.outputs is not None else [float("nan")] * 3
                        row += [repr(float(v)) for v in y]
                    w.writerow(row)
    except OSError as exc:
        raise DatasetError(f"cannot write CSV {path}: {exc}") from exc
    return path


def file_digest(path):
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()
