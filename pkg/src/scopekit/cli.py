"""Single executable with subcommands for reproducible experiment pipelines.

Subcommands: ``gen`` (expert episode datasets), ``decompose`` (trajectory CSV
to wavelet/strided components), ``train`` (imitation training), ``eval``
(closed-loop scoring of a checkpoint), ``compare`` (multi-run report).

Exit codes: 0 success, 2 usage/config error, 3 runtime failure.  Every
subcommand is a pure function of its flags and seed; per-episode seeds are
split from the root seed with ``numpy.random.SeedSequence``, so ``--jobs``
changes scheduling but never output bytes.  Wall-clock goes to a separate
``timing.txt`` that is explicitly outside the reproducibility contract.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import multiprocessing
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .core import PlanConfig, load_trajectory_csv
from .evaluation import (
    REPORT_COLUMNS,
    compare_runs,
    load_scores_csv,
    score_episode,
    summarize,
    write_report_csv,
    write_scores_csv,
)
from .policy import LearnedPlanner, load_checkpoint, save_checkpoint
from .simulator import (
    ConfigError,
    ExpertPlanner,
    Scenario,
    ScenarioConfig,
    closed_loop_rollout,
    expert_rollout,
    sample_scenario,
    save_episode,
)
from .training import (
    TrainConfig,
    TrainingAborted,
    build_dataset,
    train_run,
    write_training_log,
)
from .simulator import load_episode
from .wavelet import decompose, downsample_within_horizon, reconstruct, save_pyramid, save_stack

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class CliError(Exception):
    def __init__(self, message, code=EXIT_CONFIG):
        super().__init__(message)
        self.code = code


def _config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _write_manifest(out_dir: Path, command: str, seed, config_obj, inputs,
                    outputs) -> None:
    manifest = {
        "format": "scopekit-manifest",
        "version": 1,
        "tool": f"scopekit {__version__}",
        "command": command,
        "seed": seed,
        "config_hash": _config_hash(config_obj),
        "inputs": sorted(str(p) for p in inputs),
        "outputs": sorted(str(p) for p in outputs),
    }
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _write_timing(out_dir: Path, started: float) -> None:
    # Deliberately not part of the manifest: wall-clock is the one
    # non-reproducible artifact.
    (out_dir / "timing.txt").write_text(
        f"wall_clock_seconds: {time.monotonic() - started:.3f}\n")


def _load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise CliError(f"file not found: {path}")
    except json.JSONDecodeError as exc:
        raise CliError(f"malformed JSON in {path}: {exc}")


def _scenario_config(path) -> ScenarioConfig:
    if path is None:
        cfg = ScenarioConfig()
    else:
        try:
            cfg = ScenarioConfig.from_dict(_load_json(path))
        except (TypeError, KeyError) as exc:
            raise CliError(f"bad scenario config: {exc}")
    try:
        cfg.validate()
    except ConfigError as exc:
        raise CliError(str(exc))
    return cfg


# ---------------------------------------------------------------------------
# gen


def _gen_one(task) -> str:
    root_seed, index, cfg_dict, out_dir, history_steps = task
    cfg = ScenarioConfig.from_dict(cfg_dict)
    scenario = sample_scenario(root_seed, index, cfg)
    log = expert_rollout(scenario, cfg.expert)
    ep_dir = Path(out_dir) / f"ep_{index:04d}"
    save_episode(log, ep_dir, history_steps)
    return ep_dir.name


def cmd_gen(args) -> int:
    started = time.monotonic()
    cfg = _scenario_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.scenarios == 0:
        print("warning: --scenarios 0 produces an empty dataset", file=sys.stderr)
    tasks = [(args.seed, i, cfg.to_dict(), str(out_dir), args.history)
             for i in range(args.scenarios)]
    if args.jobs > 1 and tasks:
        with multiprocessing.Pool(args.jobs) as pool:
            names = pool.map(_gen_one, tasks)
    else:
        names = [_gen_one(t) for t in tasks]
    _write_manifest(out_dir, "gen", args.seed, cfg.to_dict(),
                    inputs=[args.config] if args.config else [],
                    outputs=names)
    _write_timing(out_dir, started)
    print(f"generated {len(names)} expert episodes in {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# decompose


def cmd_decompose(args) -> int:
    started = time.monotonic()
    try:
        traj = load_trajectory_csv(args.input)
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read trajectory: {exc}")
    positions = traj.positions
    out_dir = Path(args.out)
    if args.mode == "dwt":
        divisor = 2 ** args.levels
        if positions.shape[0] % divisor != 0:
            raise CliError(
                f"trajectory length {positions.shape[0]} is not divisible by "
                f"{divisor} (levels={args.levels})"
            )
        pyramid = decompose(positions, args.levels)
        written = save_pyramid(pyramid, out_dir, ("px", "py"))
        if args.verify:
            err = float(np.abs(reconstruct(pyramid) - positions).max())
            print(f"round-trip max abs error: {err:.3e}")
    else:
        stack = downsample_within_horizon(positions, args.levels, args.horizon)
        written = save_stack(stack, out_dir, ("px", "py"))
        if args.verify:
            err = float(np.abs(stack.levels[0] - positions[: stack.levels[0].shape[0]]).max())
            print(f"level-1 prefix max abs error: {err:.3e}")
    _write_manifest(out_dir, "decompose", None,
                    {"levels": args.levels, "mode": args.mode,
                     "horizon": args.horizon},
                    inputs=[args.input], outputs=[p.name for p in written])
    _write_timing(out_dir, started)
    print(f"wrote {len(written)} component files to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def _load_episodes(data_dir) -> list:
    data_dir = Path(data_dir)
    ep_dirs = sorted(d for d in data_dir.glob("ep_*") if d.is_dir())
    if not ep_dirs:
        raise CliError(f"no episode directories under {data_dir}")
    return [load_episode(d) for d in ep_dirs]


def cmd_train(args) -> int:
    started = time.monotonic()
    try:
        cfg = TrainConfig.from_dict(_load_json(args.config))
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError(f"bad training config: {exc}")
    episodes = _load_episodes(args.data)
    dataset = build_dataset(episodes, cfg.stride, cfg.plan)
    if not dataset:
        raise CliError("dataset is empty (episodes shorter than the horizon?)")
    if cfg.batch_size > len(dataset):
        raise CliError(
            f"batch_size {cfg.batch_size} exceeds dataset size {len(dataset)}")

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_path = out_dir / "checkpoint.json"
    extra = {"plan": cfg.to_dict()["plan"], "train": cfg.to_dict()}
    try:
        result = train_run(cfg, dataset)
    except TrainingAborted as exc:
        pcfg = cfg.policy_config()
        save_checkpoint(ckpt_path, exc.params, pcfg, cfg.seed,
                        len(exc.log_rows), extra)
        write_training_log(exc.log_rows, out_dir / "train_log.csv")
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    save_checkpoint(ckpt_path, result.params, result.policy_config, cfg.seed,
                    result.steps, extra)
    write_training_log(result.log_rows, out_dir / "train_log.csv")
    _write_manifest(out_dir, "train", cfg.seed, cfg.to_dict(),
                    inputs=[args.config, args.data],
                    outputs=["checkpoint.json", "train_log.csv"])
    _write_timing(out_dir, started)
    print(f"trained {result.steps} steps -> {ckpt_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def _eval_one(task):
    (checkpoint, root_seed, index, scen_cfg_dict, replan, history) = task
    cfg = ScenarioConfig.from_dict(scen_cfg_dict)
    scenario = sample_scenario(root_seed, index, cfg)
    expert_log = expert_rollout(scenario, cfg.expert)
    if checkpoint == "expert":
        planner = ExpertPlanner(scenario, future_steps=80, params=cfg.expert)
    else:
        blob = load_checkpoint(checkpoint)
        if blob["kind"] == "expert":
            planner = ExpertPlanner(scenario, future_steps=80, params=cfg.expert)
        else:
            plan = PlanConfig(**blob["extra"].get("plan", {}))
            planner = LearnedPlanner(blob["params"], blob["config"], plan)
    log = closed_loop_rollout(planner, scenario, replan, history)
    score = score_episode(log, scenario, expert_log)
    return (scenario.key, score)


def cmd_eval(args) -> int:
    started = time.monotonic()
    cfg = _scenario_config(args.config)
    if args.checkpoint != "expert":
        try:
            load_checkpoint(args.checkpoint)
        except (OSError, ValueError, KeyError) as exc:
            raise CliError(f"cannot load checkpoint: {exc}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(args.checkpoint, args.seed, i, cfg.to_dict(), args.replan,
              args.history) for i in range(args.scenarios)]
    if args.jobs > 1 and tasks:
        with multiprocessing.Pool(args.jobs) as pool:
            results = pool.map(_eval_one, tasks)
    else:
        results = [_eval_one(t) for t in tasks]
    scores = dict(results)
    name = args.name or Path(args.checkpoint).stem
    write_scores_csv(scores, out_dir / "scores.csv")
    write_report_csv([summarize(name, scores)], out_dir / "report.csv")
    _write_manifest(out_dir, "eval", args.seed,
                    {"scenario": cfg.to_dict(), "checkpoint": str(args.checkpoint),
                     "replan": args.replan, "scenarios": args.scenarios},
                    inputs=[args.checkpoint] if args.checkpoint != "expert" else [],
                    outputs=["scores.csv", "report.csv"])
    _write_timing(out_dir, started)
    mean = summarize(name, scores)["mean_composite"] if scores else float("nan")
    print(f"evaluated {len(scores)} scenarios, mean composite {mean:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# compare


def cmd_compare(args) -> int:
    results = []
    for run_dir in args.runs:
        run_dir = Path(run_dir)
        scores_path = run_dir / "scores.csv"
        if not scores_path.exists():
            raise CliError(f"no scores.csv under {run_dir}")
        results.append((run_dir.name, load_scores_csv(scores_path)))
    try:
        rows = compare_runs(results)
    except ValueError as exc:
        raise CliError(str(exc))
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_report_csv(rows, out_path)
    for rank, row in enumerate(rows, start=1):
        print(f"{rank}. {row['config']}: composite "
              f"{row['mean_composite']:.4f} +- {row['std_composite']:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scopekit",
        description="Horizon-scoped trajectory supervision toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate expert demonstration episodes")
    p.add_argument("--scenarios", type=int, required=True, metavar="N")
    p.add_argument("--seed", type=int, required=True, metavar="S")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--config", metavar="FILE",
                   help="scenario config JSON (defaults used when omitted)")
    p.add_argument("--history", type=int, default=21,
                   help="history steps recorded in observations.csv")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel workers; outputs identical for any value")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("decompose", help="decompose a trajectory CSV")
    p.add_argument("--input", required=True, metavar="traj.csv")
    p.add_argument("--levels", type=int, required=True, metavar="N")
    p.add_argument("--mode", choices=("dwt", "dwh"), default="dwt",
                   help="wavelet pyramid or strided downsampling-within-horizon")
    p.add_argument("--horizon", type=int, default=10, metavar="H",
                   help="samples kept per level in dwh mode")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--verify", action="store_true",
                   help="reconstruct and print the max abs error")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("train", help="train a policy on expert episodes")
    p.add_argument("--config", required=True, metavar="FILE")
    p.add_argument("--data", required=True, metavar="DIR")
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="closed-loop evaluation of a checkpoint")
    p.add_argument("--checkpoint", required=True, metavar="FILE",
                   help='checkpoint JSON, or the literal "expert" for the oracle')
    p.add_argument("--scenarios", type=int, required=True, metavar="N")
    p.add_argument("--seed", type=int, required=True, metavar="S")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--config", metavar="FILE", help="scenario config JSON")
    p.add_argument("--replan", type=int, default=10,
                   help="steps executed between replans")
    p.add_argument("--history", type=int, default=21)
    p.add_argument("--name", help="config label used in reports")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="rank evaluation runs on a shared scenario set")
    p.add_argument("--runs", nargs="+", required=True, metavar="DIR")
    p.add_argument("--out", required=True, metavar="report.csv")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
