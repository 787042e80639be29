"""Command line interface: train, sweep, ablate and eval.

Exit codes are 0 on success, 1 on invalid input (config, condition, environment,
checkpoint) and 2 on any other failure.
"""

import argparse
import logging
import os
import sys
from dataclasses import asdict
from typing import List

import numpy as np
import pandas as pd

from marlcpc.__version__ import __version__
from marlcpc.checkpoint import Checkpoint, loadCheckpoint
from marlcpc.config import (
    ABLATION_MODES,
    ABLATION_TRIALS,
    EVAL_EPISODES,
    applyOverrides,
    defaultConfig,
    getPreset,
    readConfig,
)
from marlcpc.envs import makeEnv
from marlcpc.errors import (
    CheckpointError,
    ConditionError,
    ConfigError,
    ContractError,
    EnvironmentNameError,
)
from marlcpc.evaluate import evaluate, messageAgreement, stateMessages
from marlcpc.stats import summarizeSamples
from marlcpc.sweep import readManifest, runSweep
from marlcpc.train import trainRun
from marlcpc.utils import configureLogging, seedStreams

logger = logging.getLogger("marlcpc.cli")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
VALIDATION_ERRORS = (
    ConfigError,
    ConditionError,
    EnvironmentNameError,
    CheckpointError,
    ContractError,
)
ABLATION_COLUMNS = [
    "mode",
    "condition",
    "env",
    "trials",
    "iqm",
    "ci_lo",
    "ci_hi",
    "mean",
]


def cmd_train(args: argparse.Namespace) -> int:
    if args.config:
        config = readConfig(args.config, preset=args.preset)
    else:
        config = defaultConfig(env=args.env, condition=args.condition)
        if args.preset:
            config = applyOverrides(config, getPreset(args.preset))
    overrides = dict()
    if args.env:
        overrides["env"] = args.env
    if args.condition:
        overrides["condition"] = args.condition
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.budget is not None:
        overrides["budget"] = args.budget
    if args.out:
        overrides["output_dir"] = args.out
    config = applyOverrides(config, overrides)
    config.validate()
    output_dir = trainRun(config, config.output_dir or None, quiet=args.quiet)
    print(output_dir)
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    manifest = readManifest(args.manifest)
    summary = runSweep(manifest, jobs=args.jobs, quiet=args.quiet)
    print(summary)
    return EXIT_OK


def ablationReport(
    checkpoint: Checkpoint, modes: List[str], trials: int, seed: int
) -> pd.DataFrame:
    """Evaluates a frozen checkpoint under each ablation mode.

    Every mode starts from the same evaluation stream, so the episodes differ
    only in the delivered messages.

    Returns:
        a frame with the ablation.csv columns, one row per mode.
    """
    config = checkpoint.config
    rows = list()
    for mode in modes:
        rng = seedStreams(seed)["eval"]
        record = evaluate(
            checkpoint.bundles,
            lambda r: makeEnv(config, r),
            trials,
            mode,
            rng=rng,
            seed=config.seed,
            iteration=checkpoint.iteration,
            env_steps=checkpoint.env_steps,
        )
        point = summarizeSamples(
            record.episode_welfare,
            "welfare",
            config.condition,
            config.env,
            checkpoint.env_steps,
            config.resamples,
            config.confidence,
            np.random.default_rng(seed),
        )
        rows.append(
            {
                "mode": mode,
                "condition": config.condition,
                "env": config.env,
                "trials": trials,
                "iqm": point.iqm,
                "ci_lo": point.ci_lo,
                "ci_hi": point.ci_hi,
                "mean": record.welfare,
            }
        )
    return pd.DataFrame(rows, columns=ABLATION_COLUMNS)


def cmd_ablate(args: argparse.Namespace) -> int:
    checkpoint = loadCheckpoint(args.checkpoint)
    if not checkpoint.bundles[0].communicates:
        raise ConditionError(
            f"Cannot ablate messages of a {checkpoint.config.condition} checkpoint"
        )
    modes = list(ABLATION_MODES)
    if args.mode and args.mode != "none":
        modes = ["none", args.mode]
    seed = checkpoint.config.seed if args.seed is None else args.seed
    report = ablationReport(checkpoint, modes, args.trials, seed)
    out = args.out or os.path.join(os.path.dirname(args.checkpoint), "ablation.csv")
    report.to_csv(out, index=False)
    print(report.to_string(index=False))
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    checkpoint = loadCheckpoint(args.checkpoint)
    config = checkpoint.config
    seed = config.seed if args.seed is None else args.seed

    def make_env(rng):
        return makeEnv(config, rng)

    record = evaluate(
        checkpoint.bundles,
        make_env,
        args.episodes,
        rng=seedStreams(seed)["eval"],
        seed=config.seed,
        iteration=checkpoint.iteration,
        env_steps=checkpoint.env_steps,
    )
    summary = {k: v for k, v in asdict(record).items() if k != "episode_welfare"}
    summary["returns"] = [round(float(r), 6) for r in record.returns]
    for key, value in summary.items():
        print(f"{key}: {value}")

    if checkpoint.bundles[0].communicates:
        states, messages = stateMessages(
            checkpoint.bundles, make_env, args.episodes, seedStreams(seed)["eval"]
        )
        n_states = int(states.max()) + 1
        table = messageAgreement(states, messages, n_states, config.trainer.K)
        frame = pd.DataFrame(table, columns=[f"m{k}" for k in range(table.shape[1])])
        frame.index.name = "state"
        print("message given state:")
        print(frame.round(3).to_string())
    return EXIT_OK


def buildParser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="marlcpc",
        description="Reward-independent emergent communication experiments",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="no progress bars")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="train one run")
    train.add_argument("--config", help="INI run config file")
    train.add_argument("--env", help="environment, when no config file is passed")
    train.add_argument("--condition", help="agent condition")
    train.add_argument("--preset", help="named preset applied beneath the config file")
    train.add_argument("--seed", type=int)
    train.add_argument("--budget", type=int, help="episodes (bandit) or steps")
    train.add_argument("--out", help="output directory")
    train.set_defaults(func=cmd_train)

    sweep = commands.add_parser("sweep", help="run a manifest of runs and summarize")
    sweep.add_argument("--manifest", required=True, help="JSON sweep manifest")
    sweep.add_argument("--jobs", type=int, default=1, help="worker processes")
    sweep.set_defaults(func=cmd_sweep)

    ablate = commands.add_parser("ablate", help="evaluate a checkpoint under ablations")
    ablate.add_argument("--checkpoint", required=True)
    ablate.add_argument("--mode", choices=ABLATION_MODES)
    ablate.add_argument("--trials", type=int, default=ABLATION_TRIALS)
    ablate.add_argument("--seed", type=int, help="evaluation seed")
    ablate.add_argument("--out", help="ablation report path")
    ablate.set_defaults(func=cmd_ablate)

    evaluation = commands.add_parser("eval", help="evaluate a checkpoint")
    evaluation.add_argument("--checkpoint", required=True)
    evaluation.add_argument("--episodes", type=int, default=EVAL_EPISODES)
    evaluation.add_argument("--seed", type=int, help="evaluation seed")
    evaluation.set_defaults(func=cmd_eval)
    return parser


def main(argv: List[str] = None) -> int:
    parser = buildParser()
    args = parser.parse_args(argv)
    configureLogging(args.verbose)
    if args.command == "train" and not args.config and not args.env:
        parser.error("train needs --config or --env")
    if args.command == "train" and not args.config:
        args.condition = args.condition or "cpc"
    try:
        return args.func(args)
    except VALIDATION_ERRORS as e:
        logger.error(f"{type(e).__name__}: {e.args[0] if e.args else e}")
        return EXIT_VALIDATION
    except Exception as e:
        logger.exception(f"Run failed: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
