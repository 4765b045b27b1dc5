"""Strategy comparisons and identification studies over episode datasets."""

import csv
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibration import AXES, N_PARAMS, assemble_design, condition_number, identify, predict
from .doe import (
    ENUMERATION_CAP,
    exchange_improve,
    exhaustive_select,
    greedy_select,
    make_selection,
    random_select,
)
from .exceptions import DatasetError, IdentifiabilityError, InputError

DEFAULT_RANDOM_REPEATS = 100
BUILTIN_STRATEGIES = ("ppo", "exhaustive", "greedy", "exchange", "random")
N_HIST_BINS = 30


def _random_rng(seed, episode_id, repeat):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(episode_id), int(repeat), 0x5E1]))


def _map(fn, items, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def select_for_episodes(strategy, episodes, *, k=4, policy=None, seed=0, repeats=1, threads=1,
                        cap=ENUMERATION_CAP, ppo_mode="greedy"):
    """Per-episode selections of one strategy.

    Returns a list (one entry per episode) of lists of
    :class:`~kroncal.doe.SubsetSelection`; only ``"random"`` yields more
    than one selection per episode (``repeats``).  Random draws are seeded
    by ``(seed, episode_id, repeat)`` so results do not depend on threading.
    """
    if strategy not in BUILTIN_STRATEGIES:
        raise InputError(f"unknown strategy {strategy!r}; expected one of {BUILTIN_STRATEGIES}")
    if strategy == "ppo":
        if policy is None:
            raise InputError("strategy 'ppo' needs a trained policy")
        from .rl.ppo import evaluate_policy
        res = evaluate_policy(policy, episodes, ppo_mode, seed=seed, k_select=k)
        return [[s] for s in res["selections"]]

    def run(ep):
        C = ep.inputs
        if strategy == "exhaustive":
            return [exhaustive_select(C, k, cap=cap)]
        if strategy == "greedy":
            return [greedy_select(C, k)]
        if strategy == "exchange":
            return [exchange_improve(C, greedy_select(C, k))]
        return [random_select(C, k, _random_rng(seed, ep.episode_id, r)) for r in range(repeats)]

    return _map(run, episodes, threads)


@dataclass
class StrategyReport:
    """Per-episode ``det(S)`` of one strategy.

    For strategies with several selections per episode (random repeats)
    ``det`` and ``logdet`` are the per-episode means over the repeats.
    """

    strategy: str
    episode_ids: list
    det: np.ndarray
    logdet: np.ndarray
    selections: list = field(default_factory=list)

    def __post_init__(self):
        self.det = np.asarray(self.det, dtype=float)
        self.logdet = np.asarray(self.logdet, dtype=float)

    @property
    def mean(self):
        return float(self.det.mean())

    @property
    def std(self):
        return float(self.det.std())

    @property
    def best_so_far(self):
        return np.maximum.accumulate(self.det)

    def log10_histogram(self, edges):
        return np.histogram(self.logdet / math.log(10.0), bins=edges)[0]

    def to_dict(self):
        return {
            "strategy": self.strategy,
            "episode_ids": [int(e) for e in self.episode_ids],
            "det": self.det.tolist(),
            "logdet": self.logdet.tolist(),
            "selections": ([[list(s.indices) for s in sels] for sels in self.selections]
                           if self.selections else getattr(self, "_raw_selections", [])),
            "mean": self.mean,
            "std": self.std,
            "best_so_far": self.best_so_far.tolist(),
        }

    @classmethod
    def from_dict(cls, d, episodes=None):
        sels = []
        if episodes is not None:
            by_id = {ep.episode_id: ep for ep in episodes}
            sels = [[make_selection(by_id[e].inputs, idx) for idx in group]
                    for e, group in zip(d["episode_ids"], d["selections"])]
        rep = cls(d["strategy"], list(d["episode_ids"]), d["det"], d["logdet"], sels)
        rep._raw_selections = d["selections"]
        return rep


def _require_outputs(episodes):
    if not episodes:
        raise InputError("dataset has no episodes")
    missing = [ep.episode_id for ep in episodes if ep.outputs is None]
    if missing:
        raise InputError(f"episodes without outputs: {missing[:5]}{'...' if len(missing) > 5 else ''}")


def compare_strategies(episodes, strategies=("ppo", "random"), *, repeats_for_random=DEFAULT_RANDOM_REPEATS,
                       k=4, policy=None, seed=0, threads=1, require_outputs=True):
    """One :class:`StrategyReport` per strategy, in the order given."""
    if require_outputs:
        _require_outputs(episodes)
    reports = []
    for name in strategies:
        per_ep = select_for_episodes(name, episodes, k=k, policy=policy, seed=seed,
                                     repeats=repeats_for_random if name == "random" else 1,
                                     threads=threads)
        det = [np.mean([s.det for s in sels]) for sels in per_ep]
        logdet = [np.mean([s.objective for s in sels]) for sels in per_ep]
        reports.append(StrategyReport(name, [ep.episode_id for ep in episodes], det, logdet, per_ep))
    return reports


def histogram_edges(reports, n_bins=N_HIST_BINS):
    vals = np.concatenate([r.logdet for r in reports]) / math.log(10.0)
    lo, hi = float(vals.min()), float(vals.max())
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, n_bins + 1)


@dataclass
class VarianceReport:
    """Cross-episode variance of the 12 identified parameters per strategy."""

    strategy: str
    variance: np.ndarray
    n_episodes: int
    n_failures: int
    estimates: np.ndarray = None

    def __post_init__(self):
        self.variance = np.asarray(self.variance, dtype=float)

    def to_dict(self):
        return {"strategy": self.strategy, "variance": self.variance.tolist(),
                "n_episodes": int(self.n_episodes), "n_failures": int(self.n_failures)}

    @classmethod
    def from_dict(cls, d):
        return cls(d["strategy"], d["variance"], d["n_episodes"], d["n_failures"])


def identify_selection(episode, selection):
    """``(x, condition_number)`` from the selected postures of an episode."""
    idx = np.asarray(selection.indices if hasattr(selection, "indices") else selection, dtype=int)
    U, Y = episode.inputs[idx], episode.outputs[idx]
    x = identify(U, Y)
    return x, condition_number(assemble_design(U))


def parameter_variance_study(episodes, strategies=("ppo", "random"), *, k=4, policy=None, seed=0,
                             threads=1, selections=None):
    """Identify X per episode from each strategy's subset; report variances.

    ``selections`` optionally maps strategy name to precomputed per-episode
    selections (as returned by :func:`select_for_episodes`); the first
    selection of each episode is used.  Rank-deficient subsets are counted
    as failures and left out of the variance.
    """
    _require_outputs(episodes)
    reports = []
    for name in strategies:
        per_ep = (selections or {}).get(name)
        if per_ep is None:
            per_ep = select_for_episodes(name, episodes, k=k, policy=policy, seed=seed, threads=threads)
        xs, failures = [], 0
        for ep, sels in zip(episodes, per_ep):
            try:
                xs.append(identify_selection(ep, sels[0])[0])
            except IdentifiabilityError:
                failures += 1
        X = np.array(xs).reshape(-1, N_PARAMS)
        var = X.var(axis=0, ddof=1) if len(X) > 1 else np.full(N_PARAMS, np.nan)
        reports.append(VarianceReport(name, var, len(X), failures, X))
    return reports


@dataclass
class PredictionReport:
    """Paired true/predicted output traces and per-axis RMSE."""

    label: str
    episode_ids: list
    y_true: np.ndarray
    y_pred: np.ndarray

    @property
    def rmse(self):
        err = (self.y_pred - self.y_true).reshape(-1, 3)
        return np.sqrt(np.mean(err ** 2, axis=0))

    @property
    def total_rmse(self):
        return float(np.sqrt(np.mean((self.y_pred - self.y_true) ** 2)))

    def to_dict(self):
        return {"label": self.label, "episode_ids": [int(e) for e in self.episode_ids],
                "y_true": self.y_true.tolist(), "y_pred": self.y_pred.tolist(),
                "rmse": self.rmse.tolist(), "total_rmse": self.total_rmse}

    @classmethod
    def from_dict(cls, d):
        return cls(d["label"], list(d["episode_ids"]), np.asarray(d["y_true"], dtype=float),
                   np.asarray(d["y_pred"], dtype=float))


def cross_episode_prediction(x_source, episodes, points_per_episode=8, label="x_source"):
    """Predict the first ``points_per_episode`` outputs of every episode."""
    _require_outputs(episodes)
    short = [ep.episode_id for ep in episodes if ep.m < points_per_episode]
    if short:
        raise InputError(f"episodes shorter than {points_per_episode} postures: {short[:5]}")
    y_true = np.stack([ep.outputs[:points_per_episode] for ep in episodes])
    y_pred = np.stack([predict(x_source, ep.inputs[:points_per_episode]) for ep in episodes])
    return PredictionReport(label, [ep.episode_id for ep in episodes], y_true, y_pred)


def worst_conditioned_subset(candidates, k=4, rank_tol=1e-10):
    """Full-rank ``k``-subset whose design matrix has the largest condition number.

    Returns ``(indices, condition_number)``; ties keep the lexicographically
    first subset.
    """
    C = np.asarray(candidates, dtype=float)
    blocks = assemble_design(C).reshape(len(C), 3, N_PARAMS)
    combos = np.array(list(itertools.combinations(range(len(C)), k)), dtype=np.int64)
    worst, worst_cond = None, -1.0
    for start in range(0, len(combos), 20000):
        chunk = combos[start:start + 20000]
        s = np.linalg.svd(blocks[chunk].reshape(len(chunk), -1, N_PARAMS), compute_uv=False)
        full = s[:, -1] > rank_tol * s[:, 0]
        if not np.any(full):
            continue
        cond = np.where(full, s[:, 0] / np.where(full, s[:, -1], 1.0), -np.inf)
        i = int(np.argmax(cond))
        if cond[i] > worst_cond:
            worst, worst_cond = tuple(int(v) for v in chunk[i]), float(cond[i])
    return worst, worst_cond


def _g(x):
    return format(float(x), ".17g")


def _write(path, writer_fn):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer_fn(fh)
    except OSError as exc:
        raise DatasetError(f"cannot write report {path}: {exc}") from exc
    return path


REPORT_KINDS = {StrategyReport: "strategy", VarianceReport: "variance", PredictionReport: "prediction"}


def emit_report(reports, path, format="csv"):
    """Write reports to ``path`` (a directory), one file per report kind.

    Returns the list of written files.
    """
    if not reports:
        raise InputError("no reports to write")
    if format not in ("csv", "json"):
        raise InputError(f"format must be 'csv' or 'json', got {format!r}")
    out = Path(path)
    groups = {}
    for r in reports:
        kind = REPORT_KINDS.get(type(r))
        if kind is None:
            raise InputError(f"cannot serialise {type(r).__name__}")
        groups.setdefault(kind, []).append(r)
    written = []
    for kind, reps in groups.items():
        target = out / f"{kind}_report.{format}"
        if format == "json":
            payload = {"kind": kind, "reports": [r.to_dict() for r in reps]}
            written.append(_write(target, lambda fh: fh.write(json.dumps(payload, sort_keys=True, indent=1))))
        else:
            written.append(_write(target, lambda fh, k=kind, rs=reps: _CSV_WRITERS[k](csv.writer(fh, lineterminator="\n"), rs)))
    return written


def _strategy_csv(w, reps):
    w.writerow(["episode_id", "strategy", "det_S", "logdet"])
    for r in reps:
        for e, d, ld in zip(r.episode_ids, r.det, r.logdet):
            w.writerow([int(e), r.strategy, _g(d), _g(ld)])


def _variance_csv(w, reps):
    w.writerow(["parameter_index", "strategy", "variance", "n_episodes", "n_failures"])
    for r in reps:
        for i, v in enumerate(r.variance):
            w.writerow([i, r.strategy, _g(v), r.n_episodes, r.n_failures])


def _prediction_csv(w, reps):
    w.writerow(["label", "episode_id", "point"] + [f"y_{a}" for a in AXES] + [f"y_est_{a}" for a in AXES])
    for r in reps:
        for e, yt, yp in zip(r.episode_ids, r.y_true, r.y_pred):
            for p in range(len(yt)):
                w.writerow([r.label, int(e), p] + [_g(v) for v in yt[p]] + [_g(v) for v in yp[p]])


_CSV_WRITERS = {"strategy": _strategy_csv, "variance": _variance_csv, "prediction": _prediction_csv}
_FROM_DICT = {"strategy": StrategyReport.from_dict, "variance": VarianceReport.from_dict,
              "prediction": PredictionReport.from_dict}


def read_report(path):
    """Load the reports of a JSON report file."""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
        return [_FROM_DICT[payload["kind"]](d) for d in payload["reports"]]
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise DatasetError(f"cannot read report {path}: {exc}") from exc
