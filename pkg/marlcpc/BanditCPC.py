"""Bandit-CPC: reward-weighted log-likelihood plus the CPC objective.

Each agent independently maximizes

    J_i = E[r_i * log pi_i(a_i | z_i, m)] + J_CPC,i

over minibatches of completed single-step episodes.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from marlcpc import autodiff as ad
from marlcpc.agents import AgentBundle, decide, evaluateActions
from marlcpc.CPC import cpcObjective, jointFromIndices
from marlcpc.config import TrainerConfig
from marlcpc.envs import EnvPool
from marlcpc.errors import ContractError, NumericalError
from marlcpc.networks import ascend

logger = logging.getLogger("marlcpc.BanditCPC")


@dataclass
class EpisodeBatch:
    """A batch of completed single-step episodes.

    Attributes:
        observations: per-agent (batch, obs_dim) observations.
        actions: (batch, n_agents) actions.
        rewards: (batch, n_agents) rewards.
        messages: (batch, n_agents) message symbols, or None when silent.
        received: per-agent received message vectors (None when silent).
        shared_x: the joint observation under the shared condition.
        z: per-agent encoder representations recorded when acting (None outside
            the cpc condition).
    """

    observations: list
    actions: np.ndarray
    rewards: np.ndarray
    messages: Optional[np.ndarray]
    received: list
    shared_x: Optional[np.ndarray]
    z: list

    def __len__(self) -> int:
        return len(self.actions)

    def subset(self, rows: np.ndarray) -> "EpisodeBatch":
        """Returns the episodes at the given row indices."""
        return EpisodeBatch(
            observations=[x[rows] for x in self.observations],
            actions=self.actions[rows],
            rewards=self.rewards[rows],
            messages=None if self.messages is None else self.messages[rows],
            received=[None if r is None else r[rows] for r in self.received],
            shared_x=None if self.shared_x is None else self.shared_x[rows],
            z=[None if z is None else z[rows] for z in self.z],
        )


def collectEpisodes(
    bundles: Sequence[AgentBundle], pool: EnvPool, rng: np.random.Generator
) -> EpisodeBatch:
    """Plays one episode in every environment of a pool.

    Args:
        bundles: one AgentBundle per agent.
        pool: an EnvPool of bandit environments.
        rng: the rollout stream.

    Returns:
        the EpisodeBatch, one row per environment.
    """
    observations = pool.reset()
    decision = decide(bundles, observations, rng)
    _, rewards, dones = pool.step(list(decision.actions.T), auto_reset=False)
    if not np.all(dones):
        raise ContractError("Bandit episodes must end after one step")
    return EpisodeBatch(
        observations=observations,
        actions=decision.actions,
        rewards=rewards,
        messages=decision.messages,
        received=decision.received,
        shared_x=decision.shared_x,
        z=decision.z,
    )


def banditObjective(bundle: AgentBundle, batch: EpisodeBatch):
    """Builds one agent's combined objective on a minibatch.

    Returns:
        objective: the scalar node J_RL + J_CPC.
        components: floats "rl", "cpc", "kl", "reconstruction" and "entropy".
    """
    i = bundle.index
    x = batch.observations[i]
    logprob, entropy, _ = evaluateActions(
        bundle,
        x,
        batch.actions[:, i],
        received=batch.received[i],
        shared_x=batch.shared_x,
        message_index=None if batch.messages is None else batch.messages[:, i],
        z=batch.z[i],
    )
    rl = ad.mean(batch.rewards[:, i] * logprob)
    components = {"rl": float(rl.value), "entropy": float(entropy.value.mean())}
    objective = rl
    if bundle.cpc is not None:
        joint = jointFromIndices(batch.messages, bundle.K)
        cpc, diagnostics = cpcObjective(bundle.cpc, x, joint)
        objective = rl + cpc
        components["cpc"] = float(cpc.value)
        components.update(diagnostics)
    return objective, components


def banditUpdate(
    bundles: Sequence[AgentBundle],
    batch: EpisodeBatch,
    config: TrainerConfig,
    rng: np.random.Generator,
) -> dict:
    """Updates every agent independently on a batch of episodes.

    Each agent takes n_epochs passes over n_minibatches shuffled minibatches.

    Args:
        bundles: one AgentBundle per agent.
        batch: the completed episodes.
        config: trainer hyperparameters.
        rng: the update stream, used for minibatch shuffling.

    Returns:
        metrics: per-agent means of the loss components ("rl_loss_0", "cpc_0",
            "kl_0", "entropy_0", ...) and the batch "train_welfare".
    """
    if len(batch) == 0:
        raise ContractError("Cannot update on an empty batch")
    n_minibatches = min(config.n_minibatches, len(batch))
    metrics = dict()
    for bundle in bundles:
        history = list()
        params = bundle.parameters()
        for _ in range(config.n_epochs):
            for rows in np.array_split(rng.permutation(len(batch)), n_minibatches):
                try:
                    objective, components = banditObjective(bundle, batch.subset(rows))
                except NumericalError as e:
                    raise NumericalError(f"agent {bundle.index} bandit update: {e}")
                ascend(
                    params,
                    bundle.optimizer,
                    objective,
                    context=f"agent {bundle.index}",
                    components=components,
                )
                history.append(components)
        metrics.update(agentMetrics(bundle.index, history))

    metrics["train_welfare"] = float(batch.rewards.sum(axis=1).mean())
    metrics["train_episode_length"] = 1.0
    logger.debug(f"bandit update: {metrics}")
    return metrics


def agentMetrics(index: int, history: List[dict]) -> dict:
    """Averages minibatch components into per-agent metrics columns.

    The rl column holds the minimized loss -J_RL, the cpc column the J_CPC value.
    """
    names = {"rl": "rl_loss", "cpc": "cpc", "kl": "kl", "entropy": "entropy"}
    metrics = dict()
    for key, column in names.items():
        values = [h[key] for h in history if key in h]
        if key == "rl":
            values = [-v for v in values]
        metrics[f"{column}_{index}"] = float(np.mean(values)) if values else np.nan
    return metrics
