"""The collect / minibatch / update training loop and its on-disk artifacts."""

import logging
import os
from dataclasses import dataclass, field
from typing import Iterator, List, Optional

import numpy as np
import pandas as pd
from tqdm import tqdm

from marlcpc.agents import AgentBundle, buildAgents
from marlcpc.BanditCPC import banditUpdate, collectEpisodes
from marlcpc.checkpoint import saveCheckpoint
from marlcpc.config import RunConfig, defaultOutputDir
from marlcpc.envs import EnvPool, makeEnv, makeEnvs
from marlcpc.errors import ConditionError
from marlcpc.evaluate import AblationMode, RunRecord, byMode, evaluate
from marlcpc.IPPOCPC import (
    RolloutWorkers,
    collectRollout,
    episodeStats,
    ppoUpdate,
)
from marlcpc.utils import seedStreams, spawnGenerators

logger = logging.getLogger("marlcpc.train")

METRIC_COLUMNS = [
    "seed",
    "condition",
    "env",
    "iteration",
    "env_steps",
    "episodes",
    "train_welfare",
    "train_episode_length",
    "rl_loss_0",
    "rl_loss_1",
    "cpc_0",
    "cpc_1",
    "kl_0",
    "kl_1",
    "entropy_0",
    "entropy_1",
    "return_0",
    "return_1",
    "welfare",
    "episode_length",
]
DONE_MARKER = "done"
METRICS_FILE = "metrics.csv"
CONFIG_FILE = "config.resolved"
FINAL_CHECKPOINT = "final.ckpt"


@dataclass
class TrainingState:
    """Agents and counters of a run in progress.

    Attributes:
        config: the run configuration.
        bundles: the agents being trained.
        streams: the run's named random streams (from seedStreams).
        iteration: completed training iterations.
        env_steps: environment steps consumed.
        episodes: episodes finished during training.
        last_record: the most recent evaluation.
    """

    config: RunConfig
    bundles: List[AgentBundle]
    streams: dict
    iteration: int = 0
    env_steps: int = 0
    episodes: int = 0
    last_record: Optional[RunRecord] = field(default=None, repr=False)


def isBandit(config: RunConfig) -> bool:
    return config.env in ("bandit", "bandit-coop")


def numIterations(config: RunConfig) -> int:
    """Training iterations that fit in the budget.

    The bandit budget counts episodes (bandit_batch per iteration), the observer
    budget counts environment steps (n_workers * steps_per_worker per iteration).
    """
    trainer = config.trainer
    per_iteration = trainer.bandit_batch if isBandit(config) else trainer.rollout_steps
    return trainer.budget // per_iteration


def isEvalPoint(config: RunConfig, iteration: int) -> bool:
    """Evaluation happens before training, every eval_interval, and at the end."""
    final = numIterations(config)
    return iteration == 0 or iteration == final or iteration % config.eval_interval == 0


def initialState(config: RunConfig) -> TrainingState:
    """Builds fresh agents from the run seed."""
    streams = seedStreams(config.seed)
    env = makeEnv(config, streams["env"])
    bundles = buildAgents(config, env, streams["init"])
    return TrainingState(config=config, bundles=bundles, streams=streams)


def metricsRow(
    state: TrainingState, train: dict = None, record: RunRecord = None
) -> dict:
    """Builds one metrics.csv row. Missing values are left as NaN."""
    config = state.config
    row = {column: np.nan for column in METRIC_COLUMNS}
    row.update(
        seed=config.seed,
        condition=config.condition,
        env=config.env,
        iteration=state.iteration,
        env_steps=state.env_steps,
        episodes=state.episodes,
    )
    for source in (train, record.row() if record is not None else None):
        if source:
            row.update({k: v for k, v in source.items() if k in row})
    return row


def runTraining(config: RunConfig, state: TrainingState = None) -> Iterator[dict]:
    """Trains agents and yields one metrics row per iteration.

    The first row (iteration 0) is the evaluation of the untrained agents. The
    stream is deterministic given the config, including seed and worker count.

    Args:
        config: a validated RunConfig.
        state: an existing TrainingState to continue. a fresh one by default.

    Yields:
        rows: dicts keyed by METRIC_COLUMNS. state.bundles hold the agents after
            the yielded iteration.
    """
    config.validate()
    ablation = byMode(config.ablation)
    state = state if state is not None else initialState(config)
    if ablation != AblationMode.NONE and not state.bundles[0].communicates:
        raise ConditionError(f"Cannot ablate messages of a {config.condition} run")
    streams = state.streams
    trainer = config.trainer
    n_iterations = numIterations(config)

    def make_env(rng):
        return makeEnv(config, rng)

    def evaluation() -> RunRecord:
        record = evaluate(
            state.bundles,
            make_env,
            config.eval_episodes,
            ablation,
            rng=streams["eval"],
            seed=config.seed,
            iteration=state.iteration,
            env_steps=state.env_steps,
        )
        state.last_record = record
        return record

    if isBandit(config):
        pool = EnvPool([make_env(streams["env"]) for _ in range(trainer.bandit_batch)])
    else:
        base = int(streams["rollout"].integers(2**63))
        children = spawnGenerators(base, 2 * trainer.n_workers)
        envs = makeEnvs(config, children[: trainer.n_workers])
        workers = RolloutWorkers(envs, children[trainer.n_workers :])

    if state.iteration == 0:
        yield metricsRow(state, record=evaluation())

    while state.iteration < n_iterations:
        if isBandit(config):
            batch = collectEpisodes(state.bundles, pool, streams["rollout"])
            metrics = banditUpdate(state.bundles, batch, trainer, streams["update"])
            state.env_steps += len(batch)
            state.episodes += len(batch)
        else:
            batch = collectRollout(state.bundles, workers, trainer.steps_per_worker)
            batch.computeAdvantages(trainer.gamma, trainer.gae_lambda)
            completed = workers.pool.drain()
            metrics = ppoUpdate(state.bundles, batch, trainer, streams["update"])
            metrics.update(episodeStats(completed))
            state.env_steps += batch.n_steps
            state.episodes += len(completed)
        state.iteration += 1

        record = evaluation() if isEvalPoint(config, state.iteration) else None
        if record is not None:
            logger.info(
                f"{config.env}/{config.condition} seed {config.seed} "
                f"iteration {state.iteration}/{n_iterations}: "
                f"welfare={record.welfare:.3f} length={record.episode_length:.1f}"
            )
        yield metricsRow(state, train=metrics, record=record)


def trainRun(config: RunConfig, output_dir: str = None, quiet: bool = False) -> str:
    """Runs training and writes every artifact of a run.

    Writes config.resolved before training, appends to metrics.csv after every
    iteration, saves checkpoint-<iteration>.ckpt every checkpoint_interval
    iterations, then final.ckpt and a done marker.

    Args:
        config: a validated RunConfig.
        output_dir: the run directory. defaults to defaultOutputDir(config).
        quiet: disable the progress bar.

    Returns:
        the output directory.
    """
    output_dir = output_dir or defaultOutputDir(config)
    os.makedirs(output_dir, exist_ok=True)
    marker = os.path.join(output_dir, DONE_MARKER)
    if os.path.exists(marker):
        os.remove(marker)
    with open(os.path.join(output_dir, CONFIG_FILE), "w") as f:
        f.write(config.resolved())

    state = initialState(config)
    metrics_path = os.path.join(output_dir, METRICS_FILE)
    progress = tqdm(
        total=numIterations(config) + 1,
        desc=f"{config.env}/{config.condition}/seed{config.seed}",
        disable=True if quiet else None,
    )
    with open(metrics_path, "w", newline="") as f:
        for k, row in enumerate(runTraining(config, state)):
            frame = pd.DataFrame([row], columns=METRIC_COLUMNS)
            frame.to_csv(f, header=(k == 0), index=False)
            f.flush()
            progress.update(1)
            if state.iteration and state.iteration % config.checkpoint_interval == 0:
                path = os.path.join(output_dir, f"checkpoint-{state.iteration}.ckpt")
                saveCheckpoint(
                    path, state.bundles, config, state.iteration, state.env_steps
                )
    progress.close()

    final = os.path.join(output_dir, FINAL_CHECKPOINT)
    saveCheckpoint(final, state.bundles, config, state.iteration, state.env_steps)
    with open(marker, "w") as f:
        f.write(f"{state.iteration}\n")
    logger.info(f"Finished {config.env}/{config.condition}: {output_dir}")
    return output_dir


def isComplete(output_dir: str) -> bool:
    """Whether a run directory holds a finished run."""
    return os.path.isfile(os.path.join(output_dir, DONE_MARKER))
