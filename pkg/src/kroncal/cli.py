"""Command-line front-end.

Commands: ``gen``, ``train``, ``select``, ``identify``, ``eval`` and
``report``.  Each takes ``--config``, ``--preset``, ``--seed``,
``--threads`` and ``--out``; the effective configuration is written to
``<out>/<command>_config.json``.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as rc
from .calibration import N_PARAMS
from .evaluation import (
    BUILTIN_STRATEGIES,
    compare_strategies,
    cross_episode_prediction,
    emit_report,
    histogram_edges,
    identify_selection,
    parameter_variance_study,
    read_report,
    select_for_episodes,
)
from .exceptions import DatasetError, IdentifiabilityError, InputError, KroncalError
from .simulator import export_csv, file_digest, make_dataset, read_dataset

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_IDENTIFIABILITY = 4
EXIT_IO = 5

log = logging.getLogger("kroncal")


class UsageError(KroncalError):
    pass


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", type=Path, help="JSON run configuration")
    p.add_argument("--preset", choices=("desk", "paper"))
    p.add_argument("--seed", type=_seed)
    p.add_argument("--threads", type=_positive_int, default=1)
    p.add_argument("--out", type=Path, default=Path("out"))
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(prog="kroncal", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a simulated dataset")
    g.add_argument("--episodes", type=_positive_int)
    g.add_argument("--per-episode", type=_positive_int)
    g.add_argument("--with-outputs", action="store_true", default=None)
    g.add_argument("--bounds", choices=("unit", "physical"))
    g.add_argument("--noise", type=float, help="per-axis noise std of the plant")
    g.add_argument("--csv", action="store_true", help="also write a flat CSV export")

    t = sub.add_parser("train", parents=[common], help="train the PPO selector")
    t.add_argument("--episodes", type=_positive_int)
    t.add_argument("--hidden", type=_positive_int)

    s = sub.add_parser("select", parents=[common], help="select postures in every episode")
    s.add_argument("--dataset", type=Path, required=True)
    s.add_argument("--strategy", choices=BUILTIN_STRATEGIES)
    s.add_argument("--checkpoint", type=Path)
    s.add_argument("--repeats", type=_positive_int)
    s.add_argument("--k", type=_positive_int)

    i = sub.add_parser("identify", parents=[common], help="identify parameters from selections")
    i.add_argument("--dataset", type=Path, required=True)
    i.add_argument("--selections", type=Path, required=True)

    e = sub.add_parser("eval", parents=[common], help="comparison studies")
    e.add_argument("study", choices=("compare", "variance", "predict"))
    e.add_argument("--dataset", type=Path, required=True)
    e.add_argument("--strategies", default="ppo,random")
    e.add_argument("--checkpoint", type=Path)
    e.add_argument("--repeats", type=_positive_int, default=100)
    e.add_argument("--params", type=Path, help="parameters CSV (predict)")
    e.add_argument("--source-episode", type=int, help="episode whose parameters are used (predict)")
    e.add_argument("--source-strategy", help="strategy row to use from --params (predict)")
    e.add_argument("--points", type=_positive_int, default=8)
    e.add_argument("--format", choices=("csv", "json"), default="csv")

    r = sub.add_parser("report", parents=[common], help="summarise JSON report files")
    r.add_argument("inputs", nargs="+", type=Path)
    return parser


def _effective_config(args):
    cfg = rc.load_config(args.config, args.preset)
    if args.seed is not None:
        cfg["dataset"]["seed"] = args.seed
        cfg["train"]["seed"] = args.seed
    return cfg


def _echo(cfg, args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{args.command}_config.json"
    path.write_text(json.dumps(cfg, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _load_policy(path):
    from .rl.ppo import load_checkpoint
    if path is None:
        raise UsageError("strategy 'ppo' requires --checkpoint")
    return load_checkpoint(path)[0]


def _g(x):
    return format(float(x), ".17g")


def cmd_gen(args, cfg):
    ds = cfg["dataset"]
    if args.episodes is not None:
        ds["n_episodes"] = args.episodes
    if args.per_episode is not None:
        ds["m_per_episode"] = args.per_episode
    if args.with_outputs:
        ds["with_outputs"] = True
    if args.bounds:
        ds["bounds"] = args.bounds
    if args.noise is not None:
        cfg["plant"]["noise_sigma"] = [args.noise] * 3
    spec = rc.dataset_spec_from(cfg)
    plant = rc.plant_from(cfg) if spec.with_outputs else None
    path = Path(args.out) / "dataset.jsonl"
    episodes = make_dataset(spec, plant, path)
    if args.csv:
        export_csv(Path(args.out) / "dataset.csv", episodes)
    _echo(cfg, args)
    dim = 6 if spec.with_outputs else 3
    print(f"episodes={len(episodes)} postures={len(episodes) * spec.m_per_episode} "
          f"dim={dim} sha256={file_digest(path)} path={path}")
    return EXIT_OK


def cmd_train(args, cfg):
    import torch

    from .rl.ppo import save_checkpoint, train, write_learning_curve
    if args.episodes is not None:
        cfg["train"]["total_episodes"] = args.episodes
    if args.hidden is not None:
        cfg["train"]["hidden_dim"] = args.hidden
    try:
        tcfg = rc.train_config_from(cfg)
    except InputError as exc:
        raise UsageError(str(exc)) from exc
    torch.set_num_threads(args.threads)
    result = train(tcfg, log_every=50 if args.verbose else 0)
    out = Path(args.out)
    ckpt = save_checkpoint(out / "policy.json", result.model, tcfg, tcfg.total_episodes)
    curve = write_learning_curve(out / "learning_curve.csv", result.rewards)
    _echo(cfg, args)
    r = result.rewards
    n = min(1000, len(r))
    print(f"episodes={len(r)} first{n}_mean={r[:n].mean():.6f} last{n}_mean={r[-n:].mean():.6f} "
          f"checkpoint={ckpt} curve={curve} sha256={file_digest(ckpt)}")
    return EXIT_OK


SELECTION_COLUMNS = ["episode_id", "repeat", "strategy", "indices", "det_S", "logdet"]


def cmd_select(args, cfg):
    sel_cfg = cfg["select"]
    if args.strategy:
        sel_cfg["strategy"] = args.strategy
    if args.repeats:
        sel_cfg["repeats"] = args.repeats
    if args.k:
        sel_cfg["k"] = args.k
    strategy, k, repeats = sel_cfg["strategy"], int(sel_cfg["k"]), int(sel_cfg["repeats"])
    policy = _load_policy(args.checkpoint) if strategy == "ppo" else None
    _, episodes = read_dataset(args.dataset)
    per_ep = select_for_episodes(strategy, episodes, k=k, policy=policy, seed=cfg["dataset"]["seed"],
                                 repeats=repeats, threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "selections.csv"
    dets = []
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SELECTION_COLUMNS)
        for ep, sels in zip(episodes, per_ep):
            for r, s in enumerate(sels):
                w.writerow([ep.episode_id, r, strategy, " ".join(map(str, s.indices)), _g(s.det), _g(s.objective)])
            dets.append([s.det for s in sels])
    per_episode_mean = np.array([np.mean(d) for d in dets])
    summary = {"strategy": strategy, "k": k, "repeats": repeats, "n_episodes": len(episodes),
               "mean_det_S": float(per_episode_mean.mean()), "std_det_S": float(per_episode_mean.std()),
               "mean_logdet": float(np.mean([s.objective for sels in per_ep for s in sels]))}
    (out / "selections_summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    _echo(cfg, args)
    print(f"strategy={strategy} episodes={len(episodes)} rows={sum(len(s) for s in per_ep)} "
          f"mean_det_S={summary['mean_det_S']:.6g} path={path}")
    return EXIT_OK


def read_selections(path):
    try:
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise DatasetError(f"cannot read selections {path}: {exc}") from exc
    if rows and set(SELECTION_COLUMNS) - set(rows[0]):
        raise DatasetError(f"{path} is not a selections file")
    for row in rows:
        row["episode_id"] = int(row["episode_id"])
        row["repeat"] = int(row["repeat"])
        row["indices"] = [int(v) for v in row["indices"].split()]
    return rows


PARAM_COLUMNS = ["episode_id", "repeat", "strategy", "status"] + [f"x{i}" for i in range(N_PARAMS)] + ["condition_number"]


def cmd_identify(args, cfg):
    _, episodes = read_dataset(args.dataset)
    by_id = {ep.episode_id: ep for ep in episodes}
    rows = read_selections(args.selections)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "parameters.csv"
    n_ok = 0
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PARAM_COLUMNS)
        for row in rows:
            ep = by_id.get(row["episode_id"])
            if ep is None or ep.outputs is None:
                raise InputError(f"episode {row['episode_id']} missing or has no outputs")
            try:
                x, cond = identify_selection(ep, row["indices"])
            except IdentifiabilityError as exc:
                w.writerow([ep.episode_id, row["repeat"], row["strategy"], f"rank_deficient:{exc.rank}"]
                           + [""] * N_PARAMS + ["inf"])
                continue
            n_ok += 1
            w.writerow([ep.episode_id, row["repeat"], row["strategy"], "ok"] + [_g(v) for v in x] + [_g(cond)])
    _echo(cfg, args)
    print(f"rows={len(rows)} identified={n_ok} failed={len(rows) - n_ok} path={path}")
    if rows and n_ok == 0:
        return EXIT_IDENTIFIABILITY
    return EXIT_OK


def read_parameters(path):
    try:
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise DatasetError(f"cannot read parameters {path}: {exc}") from exc
    for row in rows:
        row["episode_id"] = int(row["episode_id"])
        if row["status"] == "ok":
            row["x"] = np.array([float(row[f"x{i}"]) for i in range(N_PARAMS)])
    return rows


def cmd_eval(args, cfg):
    _, episodes = read_dataset(args.dataset)
    out = Path(args.out)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    bad = [s for s in strategies if s not in BUILTIN_STRATEGIES]
    if bad:
        raise UsageError(f"unknown strategies {bad}; expected a subset of {BUILTIN_STRATEGIES}")
    policy = _load_policy(args.checkpoint) if "ppo" in strategies and args.study != "predict" else None
    seed = cfg["dataset"]["seed"]
    if args.study == "compare":
        reports = compare_strategies(episodes, strategies, repeats_for_random=args.repeats, policy=policy,
                                     seed=seed, threads=args.threads)
        files = emit_report(reports, out, args.format)
        edges = histogram_edges(reports)
        hist = {"log10_edges": edges.tolist(),
                "counts": {r.strategy: r.log10_histogram(edges).tolist() for r in reports},
                "summary": {r.strategy: {"mean_det_S": r.mean, "std_det_S": r.std,
                                         "std_logdet": float(r.logdet.std())} for r in reports}}
        (out / "strategy_histogram.json").write_text(json.dumps(hist, sort_keys=True, indent=1) + "\n")
        for r in reports:
            print(f"{r.strategy}: mean_det_S={r.mean:.6g} std_det_S={r.std:.6g}")
    elif args.study == "variance":
        reports = parameter_variance_study(episodes, strategies, policy=policy, seed=seed, threads=args.threads)
        files = emit_report(reports, out, args.format)
        for r in reports:
            print(f"{r.strategy}: n_episodes={r.n_episodes} n_failures={r.n_failures} "
                  f"mean_variance={np.nanmean(r.variance):.6g}")
    else:
        if args.params is None or args.source_episode is None:
            raise UsageError("predict needs --params and --source-episode")
        rows = [r for r in read_parameters(args.params) if r["episode_id"] == args.source_episode and "x" in r
                and (args.source_strategy is None or r["strategy"] == args.source_strategy)]
        if not rows:
            raise InputError(f"no identified parameters for episode {args.source_episode} in {args.params}")
        targets = [ep for ep in episodes if ep.episode_id != args.source_episode]
        label = f"{rows[0]['strategy']}@{args.source_episode}"
        report = cross_episode_prediction(rows[0]["x"], targets, args.points, label)
        files = emit_report([report], out, args.format)
        print(f"{label}: rmse={' '.join(_g(v) for v in report.rmse)} total_rmse={report.total_rmse:.6g}")
    _echo(cfg, args)
    print("wrote " + " ".join(str(f) for f in files))
    return EXIT_OK


def cmd_report(args, cfg):
    summary = {}
    for path in args.inputs:
        for rep in read_report(path):
            d = rep.to_dict()
            if "det" in d:
                summary.setdefault("strategy", {})[d["strategy"]] = {
                    "mean_det_S": d["mean"], "std_det_S": d["std"], "n_episodes": len(d["det"])}
            elif "variance" in d:
                summary.setdefault("variance", {})[d["strategy"]] = {
                    "mean_variance": float(np.nanmean(d["variance"])), "n_failures": d["n_failures"]}
            else:
                summary.setdefault("prediction", {})[d["label"]] = {"rmse": d["rmse"], "total_rmse": d["total_rmse"]}
    strat = summary.get("strategy", {})
    if "random" in strat:
        base = strat["random"]["mean_det_S"]
        for name, s in strat.items():
            s["ratio_to_random"] = s["mean_det_S"] / base if base > 0 else float("inf")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    text = json.dumps(summary, sort_keys=True, indent=2) + "\n"
    (out / "summary.json").write_text(text)
    _echo(cfg, args)
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "select": cmd_select, "identify": cmd_identify,
            "eval": cmd_eval, "report": cmd_report}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _effective_config(args)
        return COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"kroncal {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IdentifiabilityError as exc:
        print(f"kroncal {args.command}: {exc}", file=sys.stderr)
        return EXIT_IDENTIFIABILITY
    except DatasetError as exc:
        print(f"kroncal {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"kroncal {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InputError, KroncalError) as exc:
        print(f"kroncal {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
