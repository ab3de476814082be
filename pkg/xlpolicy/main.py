#!/usr/bin/env python3
"""
Command-line runner for xlpolicy

Commands:
    gen-data    generate scripted-expert episodes
    train-bc    behavior cloning on an episode file
    train-ppo   PPO fine-tuning from a checkpoint (or --cold-start)
    eval        greedy evaluation of a checkpoint (or the scripted expert)
    bench       forward-pass latency of dense / sparse / lstm encoders

Usage:
    python -m xlpolicy gen-data --config configs/desk.yaml --episodes 200 --out runs/demo
    python -m xlpolicy train-bc --config configs/desk.yaml --out runs/demo
    python -m xlpolicy train-ppo --config configs/desk.yaml --in runs/demo/model.ckpt --out runs/ppo
    python -m xlpolicy eval --config configs/desk.yaml --in runs/ppo/model.ckpt --episodes 100
    python -m xlpolicy bench --config configs/desk.yaml --seq-lens 64 512 --modes dense sparse

Exit codes: 0 success, 2 usage / config / contract / file errors,
3 numeric divergence (the last good checkpoint is written first).
"""
import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from xlpolicy.agent import StreamingAgent
from xlpolicy.bench import BENCH_MODES, run_bench, write_bench_csv
from xlpolicy.checkpoint import load_checkpoint, save_checkpoint
from xlpolicy.config import RunConfig, get_settings, load_run_config
from xlpolicy.errors import (
    CheckpointFormatError,
    ConfigError,
    ContractError,
    DivergenceError,
    EpisodeFormatError,
    ExpertError,
    ShapeError,
)
from xlpolicy.evaluation import evaluate
from xlpolicy.files import atomic_write_text
from xlpolicy.learn.behavior_cloning import train_bc
from xlpolicy.learn.metrics import MetricsWriter
from xlpolicy.learn.ppo import train_ppo
from xlpolicy.models import MetricRow
from xlpolicy.network import XlPolicyNetwork
from xlpolicy.plotting import write_loss_curve
from xlpolicy.policy import ActionSpec
from xlpolicy.sim.dataset import gen_dataset, load_episodes
from xlpolicy.sim.expert import ExpertAgent
from xlpolicy.sim.world import DeskEnv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DIVERGED = 3

USAGE_ERRORS = (ConfigError, ContractError, ShapeError, EpisodeFormatError, CheckpointFormatError, OSError)


def print_header(text: str) -> None:
    """Print a formatted header."""
    print("\n" + "=" * 70)
    print(f"  {text}")
    print("=" * 70)


def print_success(text: str) -> None:
    """Print a success message."""
    print(f"✅ {text}")


def print_info(text: str) -> None:
    """Print an info message."""
    print(f"ℹ️  {text}")


def print_error(text: str) -> None:
    """Print an error message."""
    print(f"❌ {text}")


def configure_logging() -> None:
    settings = get_settings()
    logging.basicConfig(level=getattr(logging, settings.log_level.upper(), logging.INFO), format=settings.log_format)


# ============================================================================
# Artifacts
# ============================================================================

def metrics_path(config: RunConfig, phase: str) -> Path:
    return Path(config.paths.output_dir) / f"metrics_{phase}.csv"


def write_training_artifacts(config: RunConfig, model: XlPolicyNetwork, rows: Sequence[MetricRow],
                             phase: str) -> Path:
    """Checkpoint, metrics CSV and loss-curve SVG for one training phase"""
    out_dir = Path(config.paths.output_dir)
    checkpoint = save_checkpoint(config.paths.resolve("checkpoint"), model)
    metrics = MetricsWriter(rows).write(metrics_path(config, phase))
    plot = write_loss_curve(out_dir / f"loss_{phase}.svg", rows, title=f"{phase} losses")
    print_info(f"Checkpoint: {checkpoint}")
    print_info(f"Metrics:    {metrics} ({len(rows)} rows)")
    print_info(f"Loss curve: {plot}")
    return checkpoint


def _save_last_good(config: RunConfig, model: XlPolicyNetwork, error: DivergenceError) -> None:
    path = config.paths.resolve("checkpoint")
    save_checkpoint(path, model, error.last_good_state)
    print_info(f"Last good checkpoint written to {path}")


# ============================================================================
# Commands
# ============================================================================

def cmd_gen_data(config: RunConfig, args: argparse.Namespace) -> int:
    print_header("GENERATE EXPERT EPISODES")
    if args.episodes is None or args.episodes < 1:
        print_error(f"--episodes must be at least 1, got {args.episodes}")
        return EXIT_USAGE
    spec = ActionSpec.from_config(config.actions)
    out_path = config.paths.resolve("dataset")
    print_info(f"Generating {args.episodes} episodes over tasks {config.sim.tasks} (seed {config.seed})...")
    try:
        episodes = gen_dataset(out_path, args.episodes, config.sim.tasks, config.seed, config.sim, spec)
    except ExpertError as e:
        print_error(f"Expert failed: {e}")
        return EXIT_USAGE
    print_success("Dataset written!")
    print(f"   - Episodes: {len(episodes)}")
    print(f"   - Mean length: {np.mean([len(e) for e in episodes]):.2f}")
    print(f"   - File: {out_path}")
    return EXIT_OK


def cmd_train_bc(config: RunConfig, args: argparse.Namespace) -> int:
    print_header("BEHAVIOR CLONING")
    dataset_path = Path(args.input) if args.input else config.paths.resolve("dataset")
    print_info(f"Loading episodes from {dataset_path}...")
    episodes = load_episodes(dataset_path, config.sim.lidar_max_range_m)
    model = XlPolicyNetwork(config, ActionSpec.from_config(config.actions))
    print_info(f"Training on {len(episodes)} episodes ({model.num_parameters()} parameters)...")
    try:
        stream = MetricsWriter(stream_path=metrics_path(config, "bc"))
        model, rows = train_bc(episodes, model, config.train, seed=config.seed, metrics=stream)
    except DivergenceError as e:
        print_error(f"Training diverged: {e} {e.diagnostics}")
        _save_last_good(config, model, e)
        return EXIT_DIVERGED
    print_success(f"Behavior cloning complete ({len(rows)} batches)")
    write_training_artifacts(config, model, rows, "bc")
    return EXIT_OK


def cmd_train_ppo(config: RunConfig, args: argparse.Namespace) -> int:
    print_header("PPO FINE-TUNING")
    if args.input:
        print_info(f"Loading checkpoint {args.input}...")
        model = load_checkpoint(args.input, config)
    elif args.cold_start:
        print_info("Cold start from freshly initialized parameters")
        model = XlPolicyNetwork(config, ActionSpec.from_config(config.actions))
    else:
        print_error("train-ppo needs --in <checkpoint> or --cold-start")
        return EXIT_USAGE

    env = DeskEnv(config.sim, model.spec)
    print_info(f"{config.train.ppo_iterations} iterations of {config.train.rollout_steps} rollout steps...")
    try:
        stream = MetricsWriter(stream_path=metrics_path(config, "ppo"))
        model, rows = train_ppo(env, model, config.train, seed=config.seed, metrics=stream)
    except DivergenceError as e:
        print_error(f"Training diverged: {e} {e.diagnostics}")
        _save_last_good(config, model, e)
        return EXIT_DIVERGED
    print_success(f"PPO complete ({len(rows)} batches)")
    write_training_artifacts(config, model, rows, "ppo")
    return EXIT_OK


def cmd_eval(config: RunConfig, args: argparse.Namespace) -> int:
    print_header("EVALUATION")
    n_episodes = 100 if args.episodes is None else args.episodes
    if n_episodes < 1:
        print_error(f"--episodes must be at least 1, got {n_episodes}")
        return EXIT_USAGE
    if args.expert:
        spec = ActionSpec.from_config(config.actions)
        agent = ExpertAgent(spec)
        print_info("Evaluating the scripted expert")
    elif args.input:
        model = load_checkpoint(args.input, config)
        spec = model.spec
        agent = StreamingAgent(model, config.train.segment_len)
        print_info(f"Evaluating checkpoint {args.input}")
    else:
        print_error("eval needs --in <checkpoint> or --expert")
        return EXIT_USAGE

    report = evaluate(agent, config, spec, n_episodes, seed=config.seed)
    path = atomic_write_text(Path(config.paths.output_dir) / "eval.json", report.model_dump_json(indent=2) + "\n")
    print_success("Evaluation complete!")
    print(f"   - Episodes: {report.episodes}")
    print(f"   - Success rate: {report.success_rate:.2%}")
    print(f"   - Accuracy: {report.accuracy:.2%}")
    print(f"   - Mean return: {report.mean_return:.4f}")
    for task, task_report in report.per_task.items():
        print(f"   - {task}: success {task_report.success_rate:.2%}, accuracy {task_report.accuracy:.2%}")
    print_info(f"Report: {path}")
    return EXIT_OK


def cmd_bench(config: RunConfig, args: argparse.Namespace) -> int:
    print_header("LATENCY BENCHMARK")
    print_info(f"Modes {args.modes}, lengths {args.seq_lens}")
    rows = run_bench(config, args.seq_lens, args.modes)
    path = write_bench_csv(Path(config.paths.output_dir) / "bench.csv", rows)
    print_success("Benchmark complete!")
    for row in rows:
        print(f"   - {row.mode:>6} T={row.seq_len:<5} mean {row.mean_s:.6f}s  p95 {row.p95_s:.6f}s")
    print_info(f"CSV: {path}")
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train-bc": cmd_train_bc,
    "train-ppo": cmd_train_ppo,
    "eval": cmd_eval,
    "bench": cmd_bench,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xlpolicy",
        description="Transformer-XL policies learned from demonstrations",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", help="Run config YAML (defaults when omitted)")
        cmd.add_argument("--out", help="Output directory (overrides paths.output_dir)")
        cmd.add_argument("--seed", type=int, help="Overrides the config seed")
        if name in ("train-bc", "train-ppo", "eval"):
            cmd.add_argument("--in", dest="input", help="Input episode file (train-bc) or checkpoint")
        if name in ("gen-data", "eval"):
            cmd.add_argument("--episodes", type=int, help="Number of episodes")
        if name == "train-ppo":
            cmd.add_argument("--cold-start", action="store_true", help="Start PPO without a checkpoint")
        if name == "eval":
            cmd.add_argument("--expert", action="store_true", help="Evaluate the scripted expert")
        if name == "bench":
            cmd.add_argument("--seq-lens", type=int, nargs="+", default=[64, 128, 256, 512])
            cmd.add_argument("--modes", nargs="+", choices=BENCH_MODES, default=["dense", "sparse"])
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    configure_logging()
    try:
        config = load_run_config(args.config)
        if args.seed is not None and args.seed < 0:
            raise ConfigError(f"--seed must be non-negative, got {args.seed}")
        output_dir = args.out
        if output_dir is None and args.config is None:
            output_dir = get_settings().output_dir
        config = config.with_overrides(seed=args.seed, output_dir=output_dir)
        return COMMANDS[args.command](config, args)
    except USAGE_ERRORS as e:
        print_error(f"{type(e).__name__}: {e}")
        logger.error(f"{args.command} failed: {e}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
