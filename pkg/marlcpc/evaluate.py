"""Evaluation of frozen agents, with optional message ablations."""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from marlcpc.agents import AgentBundle, decide
from marlcpc.CPC import JointMessage
from marlcpc.envs import BanditEnv, Env, ObserverEnv
from marlcpc.errors import ConditionError, ContractError
from marlcpc.utils import onehot

logger = logging.getLogger("marlcpc.evaluate")


class AblationMode(str, Enum):
    NONE = "none"
    RANDOM = "random"
    ZERO = "zero"


def byMode(name: str) -> AblationMode:
    """Returns the AblationMode for a mode name, raising ConditionError otherwise."""
    try:
        return AblationMode(name)
    except ValueError:
        supported = ", ".join(m.value for m in AblationMode)
        raise ConditionError(f"Invalid ablation mode: {name}. Supported: {supported}")


@dataclass
class RunRecord:
    """Metrics of one evaluation point.

    Attributes:
        seed: the run seed.
        iteration: the training iteration evaluated.
        env_steps: environment steps consumed by training so far.
        condition: the agent condition.
        returns: (n_agents,) mean per-agent episode returns.
        welfare: the sum of the per-agent mean returns.
        episode_length: mean episode length.
        episode_welfare: per-episode welfare, one entry per trial.
    """

    seed: int
    iteration: int
    env_steps: int
    condition: str
    returns: np.ndarray
    welfare: float
    episode_length: float
    episode_welfare: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def row(self) -> dict:
        """Flat columns for metrics.csv."""
        row = {f"return_{i}": float(r) for i, r in enumerate(self.returns)}
        row["welfare"] = self.welfare
        row["episode_length"] = self.episode_length
        return row


def applyAblation(
    mode: AblationMode, joint: JointMessage, rng: np.random.Generator
) -> JointMessage:
    """Replaces the delivered message blocks of a JointMessage.

    Random replaces every block with a uniformly drawn one-hot. Zero replaces
    every block with the all-zero vector, which is not a valid one-hot. The
    per-agent Message records are left as sent.

    Args:
        mode: the AblationMode.
        joint: the delivered joint message.
        rng: the evaluation stream.

    Returns:
        a new JointMessage (or `joint` itself for AblationMode.NONE).
    """
    mode = byMode(mode)
    if mode == AblationMode.NONE:
        return joint
    batch, width = joint.vector.shape
    n_blocks = width // joint.K
    if mode == AblationMode.ZERO:
        vector = np.zeros_like(joint.vector)
    else:
        symbols = rng.integers(0, joint.K, size=(batch, n_blocks))
        vector = onehot(symbols, joint.K).reshape(batch, width)
    return JointMessage(vector=vector, messages=joint.messages, K=joint.K)


def evaluate(
    bundles: Sequence[AgentBundle],
    make_env: Callable[[np.random.Generator], Env],
    n_episodes: int,
    ablation: AblationMode = AblationMode.NONE,
    rng: np.random.Generator = None,
    seed: int = 0,
    iteration: int = 0,
    env_steps: int = 0,
) -> RunRecord:
    """Plays n_episodes with sampled policies, without updating any parameter.

    Episodes run in lock-step, one environment each, until every one ends.

    Args:
        bundles: the frozen agents.
        make_env: builds one environment from a random stream.
        n_episodes: the number of test episodes.
        ablation: the message intervention applied to every exchange.
        rng: the evaluation stream, for environments, actions and ablations.
        seed, iteration, env_steps: copied into the RunRecord.

    Returns:
        a RunRecord.
    """
    if n_episodes < 1:
        raise ContractError("evaluate needs at least one episode")
    ablation = byMode(ablation)
    if ablation != AblationMode.NONE and not bundles[0].communicates:
        raise ConditionError(
            f"Cannot ablate messages of a {bundles[0].condition.value} run"
        )
    if rng is None:
        rng = np.random.default_rng(seed)

    intervene = None
    if ablation != AblationMode.NONE:
        intervene = lambda joint: applyAblation(ablation, joint, rng)  # noqa: E731

    envs = [make_env(rng) for _ in range(n_episodes)]
    observations = [env.reset() for env in envs]
    n_agents = len(bundles)
    returns = np.zeros((n_episodes, n_agents))
    lengths = np.zeros(n_episodes, dtype=np.int64)
    active = list(range(n_episodes))
    while active:
        stacked = [
            np.stack([observations[k][i] for k in active]) for i in range(n_agents)
        ]
        decision = decide(bundles, stacked, rng, intervene=intervene)
        still = list()
        for row, k in enumerate(active):
            result = envs[k].step(decision.actions[row])
            returns[k] += result.rewards
            lengths[k] += 1
            observations[k] = result.observations
            if not result.done:
                still.append(k)
        active = still

    mean_returns = returns.mean(axis=0)
    record = RunRecord(
        seed=seed,
        iteration=iteration,
        env_steps=env_steps,
        condition=bundles[0].condition.value,
        returns=mean_returns,
        welfare=float(mean_returns.sum()),
        episode_length=float(lengths.mean()),
        episode_welfare=returns.sum(axis=1),
    )
    logger.debug(
        f"evaluation ({ablation.value}): welfare={record.welfare:.3f} "
        f"length={record.episode_length:.1f}"
    )
    return record


def hiddenState(env: Env) -> int:
    """The part of the state only one agent observes: the bandit arm or reward cell."""
    if isinstance(env, BanditEnv):
        return env.true_state
    if isinstance(env, ObserverEnv):
        return env.reward_cell
    raise ContractError(f"No hidden state defined for {type(env).__name__}")


def stateMessages(
    bundles: Sequence[AgentBundle],
    make_env: Callable[[np.random.Generator], Env],
    n_episodes: int,
    rng: np.random.Generator,
) -> tuple:
    """Records the message the informed agent sends at the start of episodes.

    The informed agent is the bandit's informed agent, or agent A in the observer.

    Returns:
        states: (n_episodes,) hidden states.
        messages: (n_episodes,) symbols sent by the informed agent.
    """
    if not bundles[0].communicates:
        raise ConditionError(f"A {bundles[0].condition.value} run sends no messages")
    envs = [make_env(rng) for _ in range(n_episodes)]
    observations = [env.reset() for env in envs]
    stacked = [np.stack([o[i] for o in observations]) for i in range(len(bundles))]
    decision = decide(bundles, stacked, rng)
    informed = np.array([getattr(env, "informed_agent", 0) for env in envs])
    states = np.array([hiddenState(env) for env in envs])
    messages = decision.messages[np.arange(n_episodes), informed]
    return states, messages


def messageAgreement(
    states: np.ndarray, messages: np.ndarray, n_states: int, K: int
) -> np.ndarray:
    """Empirical distribution of messages given the hidden state.

    Args:
        states: (n,) hidden states in [0, n_states).
        messages: (n,) message symbols in [0, K).
        n_states: the number of hidden states.
        K: the vocabulary size.

    Returns:
        an (n_states, K) table whose visited rows sum to 1. unvisited rows are 0.
    """
    states = np.asarray(states, dtype=np.int64)
    messages = np.asarray(messages, dtype=np.int64)
    if states.shape != messages.shape:
        raise ContractError("states and messages must align")
    counts = np.zeros((n_states, K))
    np.add.at(counts, (states, messages), 1.0)
    totals = counts.sum(axis=1, keepdims=True)
    return np.divide(counts, totals, out=np.zeros_like(counts), where=totals > 0)
