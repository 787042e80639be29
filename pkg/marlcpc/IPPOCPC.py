"""IPPO-CPC: independent PPO with a CPC communication head per agent.

Each agent runs its own clipped-surrogate PPO update on its own experience,
adding its CPC objective on the same minibatch. No parameters or critics are
shared between agents.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from marlcpc import autodiff as ad
from marlcpc.agents import AgentBundle, decide, evaluateActions, valueEstimates
from marlcpc.BanditCPC import agentMetrics
from marlcpc.CPC import cpcObjective, jointFromIndices
from marlcpc.config import TrainerConfig
from marlcpc.envs import Env, EnvPool
from marlcpc.errors import ContractError, NumericalError
from marlcpc.networks import ascend

logger = logging.getLogger("marlcpc.IPPOCPC")


@dataclass
class GaeResult:
    """Advantages and value targets aligned to the rewards they came from."""

    advantages: np.ndarray
    targets: np.ndarray


def computeGAE(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    gamma: float,
    lam: float,
) -> GaeResult:
    """Generalized advantage estimation over a time-major segment.

    A_t = delta_t + gamma * lam * (1 - done_t) * A_{t+1}, with
    delta_t = r_t + gamma * (1 - done_t) * V_{t+1} - V_t. Value targets are A_t + V_t.

    Args:
        rewards: (T, ...) rewards.
        values: (T + 1, ...) value estimates, the last entry bootstrapping the
            segment end.
        dones: (T, ...) episode-end flags, leading dims matching rewards.
        gamma: discount factor.
        lam: GAE mixing parameter.

    Returns:
        a GaeResult with arrays shaped like rewards.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    T = len(rewards)
    if len(values) != T + 1 or len(dones) != T:
        raise ContractError(
            f"Expected {T + 1} values and {T} dones, got {len(values)} and {len(dones)}"
        )
    if values.shape[1:] != rewards.shape[1:]:
        raise ContractError(
            f"Value shape {values.shape} does not match {rewards.shape}"
        )
    while dones.ndim < rewards.ndim:
        dones = dones[..., None]

    advantages = np.zeros_like(rewards)
    last = np.zeros_like(rewards[0]) if T else 0.0
    for t in reversed(range(T)):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * values[t + 1] * live - values[t]
        last = delta + gamma * lam * live * last
        advantages[t] = last
    return GaeResult(advantages=advantages, targets=advantages + values[:-1])


@dataclass
class AgentSamples:
    """One agent's flattened transitions, ready for minibatching."""

    x: np.ndarray
    actions: np.ndarray
    logprobs: np.ndarray
    values: np.ndarray
    advantages: np.ndarray
    targets: np.ndarray
    messages: Optional[np.ndarray]
    received: Optional[np.ndarray]
    shared_x: Optional[np.ndarray]
    z: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.actions)

    def subset(self, rows: np.ndarray) -> "AgentSamples":
        picked = dict()
        for name, value in vars(self).items():
            picked[name] = None if value is None else value[rows]
        return AgentSamples(**picked)


@dataclass
class RolloutBatch:
    """Time-major experience from lock-step workers.

    Attributes:
        observations: per-agent (T, W, obs_dim) observations.
        actions: (T, W, N) actions.
        logprobs: (T, W, N) behaviour log-probabilities.
        values: (T + 1, W, N) value estimates, bootstrapped at the segment end.
        rewards: (T, W, N) rewards.
        dones: (T, W) episode-end flags (the step cap counts as an end).
        messages: (T, W, N) message symbols, or None when silent.
        received: per-agent (T, W, width) received vectors, or None.
        shared_x: (T, W, sum of obs dims) joint observations, or None.
        z: per-agent (T, W, cpc_hidden) encoder representations recorded when
            acting, or None.
        advantages: (T, W, N), filled by computeAdvantages.
        targets: (T, W, N), filled by computeAdvantages.
    """

    observations: list
    actions: np.ndarray
    logprobs: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    messages: Optional[np.ndarray]
    received: list
    shared_x: Optional[np.ndarray]
    z: list = None
    advantages: np.ndarray = None
    targets: np.ndarray = None

    @property
    def n_steps(self) -> int:
        return self.actions.shape[0] * self.actions.shape[1]

    def computeAdvantages(self, gamma: float, lam: float) -> None:
        result = computeGAE(self.rewards, self.values, self.dones, gamma, lam)
        self.advantages = result.advantages
        self.targets = result.targets

    def agent(self, i: int) -> AgentSamples:
        """Flattens agent i's transitions, worker by worker."""
        if self.advantages is None:
            raise ContractError("Advantages are computed after the batch is complete")

        def flat(a):
            if a is None:
                return None
            a = np.swapaxes(a, 0, 1)
            return a.reshape((a.shape[0] * a.shape[1],) + a.shape[2:])

        return AgentSamples(
            x=flat(self.observations[i]),
            actions=flat(self.actions[..., i]),
            logprobs=flat(self.logprobs[..., i]),
            values=flat(self.values[:-1, :, i]),
            advantages=flat(self.advantages[..., i]),
            targets=flat(self.targets[..., i]),
            messages=flat(self.messages),
            received=flat(self.received[i]),
            shared_x=flat(self.shared_x),
            z=None if self.z is None else flat(self.z[i]),
        )


class RolloutWorkers:
    """Environments that each own a random stream, stepped in lock-step.

    Worker k's environment and action draws use only stream k, and results are
    merged in worker order.

    Attributes:
        pool: the EnvPool holding one environment per worker.
        rngs: one numpy Generator per worker.
    """

    def __init__(self, envs: Sequence[Env], rngs: Sequence[np.random.Generator]):
        if len(envs) != len(rngs):
            raise ContractError("Each rollout worker needs its own random stream")
        self.pool = EnvPool(envs)
        self.rngs = list(rngs)

    def __len__(self) -> int:
        return len(self.pool)

    def collect(self, bundles: Sequence[AgentBundle], steps: int) -> RolloutBatch:
        """Gathers `steps` transitions from every worker.

        Args:
            bundles: one AgentBundle per agent, read but never modified.
            steps: steps per worker.

        Returns:
            a RolloutBatch with advantages not yet computed. its last value row
            comes from valueEstimates, which draws from no stream.
        """
        if steps < 1:
            raise ContractError("Rollouts need at least one step per worker")
        if self.pool.observations is None:
            self.pool.reset()
        n_agents = len(bundles)
        observations = [list() for _ in range(n_agents)]
        received = [list() for _ in range(n_agents)]
        encoded = [list() for _ in range(n_agents)]
        actions, logprobs, values, rewards, dones = [], [], [], [], []
        messages, shared = [], []

        for _ in range(steps):
            current = self.pool.observations
            decision = decide(bundles, current, self.rngs)
            for i in range(n_agents):
                observations[i].append(current[i])
                received[i].append(decision.received[i])
                encoded[i].append(decision.z[i])
            actions.append(decision.actions)
            logprobs.append(decision.logprobs)
            values.append(decision.values)
            messages.append(decision.messages)
            shared.append(decision.shared_x)
            _, reward, done = self.pool.step(list(decision.actions.T))
            rewards.append(reward)
            dones.append(done)

        values.append(valueEstimates(bundles, self.pool.observations))

        def stack(items):
            return None if items[0] is None else np.stack(items)

        return RolloutBatch(
            observations=[np.stack(o) for o in observations],
            actions=np.stack(actions),
            logprobs=np.stack(logprobs),
            values=np.stack(values),
            rewards=np.stack(rewards),
            dones=np.stack(dones),
            messages=stack(messages),
            received=[stack(r) for r in received],
            shared_x=stack(shared),
            z=[stack(z) for z in encoded],
        )


def collectRollout(
    bundles: Sequence[AgentBundle], workers: RolloutWorkers, steps: int
) -> RolloutBatch:
    """Gathers one iteration of experience from every worker."""
    return workers.collect(bundles, steps)


def ppoObjective(bundle: AgentBundle, samples: AgentSamples, config: TrainerConfig):
    """Builds one agent's PPO objective plus its CPC objective on a minibatch.

    Returns:
        objective: the scalar node J_pi - c1 * J_V + c2 * H + J_CPC.
        components: floats "rl", "policy", "value", "entropy", "approx_kl",
            "clip_fraction", and the CPC terms under the cpc condition.
    """
    logprob, entropy, value = evaluateActions(
        bundle,
        samples.x,
        samples.actions,
        received=samples.received,
        shared_x=samples.shared_x,
        message_index=(
            None if samples.messages is None else samples.messages[:, bundle.index]
        ),
        z=samples.z,
    )
    advantages = samples.advantages
    if config.normalize_advantages and len(advantages) > 1:
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)

    eps = config.clip_epsilon
    ratio = ad.exp(logprob - samples.logprobs)
    clipped = ad.clip(ratio, 1 - eps, 1 + eps)
    surrogate = ad.minimum(ratio * advantages, clipped * advantages)
    policy = ad.mean(surrogate)
    value_loss = ad.mean(ad.square(value - samples.targets))
    mean_entropy = ad.mean(entropy)
    rl = policy - config.value_coef * value_loss + config.entropy_coef * mean_entropy

    components = {
        "rl": float(rl.value),
        "policy": float(policy.value),
        "value": float(value_loss.value),
        "entropy": float(mean_entropy.value),
        "approx_kl": float(np.mean(samples.logprobs - logprob.value)),
        "clip_fraction": float(np.mean(np.abs(ratio.value - 1) > eps)),
    }
    objective = rl
    if bundle.cpc is not None:
        joint = jointFromIndices(samples.messages, bundle.K)
        cpc, diagnostics = cpcObjective(bundle.cpc, samples.x, joint)
        objective = rl + cpc
        components["cpc"] = float(cpc.value)
        components.update(diagnostics)
    return objective, components


def ppoUpdate(
    bundles: Sequence[AgentBundle],
    batch: RolloutBatch,
    config: TrainerConfig,
    rng: np.random.Generator,
) -> dict:
    """Runs n_epochs of minibatch PPO for every agent independently.

    Args:
        bundles: one AgentBundle per agent.
        batch: a RolloutBatch with advantages computed.
        config: trainer hyperparameters.
        rng: the update stream, used for minibatch shuffling.

    Returns:
        metrics: per-agent means of the loss components plus approximate KL and
            clip fraction.

    Raises:
        NumericalError: when any loss becomes NaN or infinite.
    """
    metrics = dict()
    for bundle in bundles:
        samples = batch.agent(bundle.index)
        if len(samples) == 0:
            raise ContractError("Cannot update on an empty batch")
        n_minibatches = min(config.n_minibatches, len(samples))
        params = bundle.parameters()
        history = list()
        for _ in range(config.n_epochs):
            for rows in np.array_split(rng.permutation(len(samples)), n_minibatches):
                try:
                    objective, components = ppoObjective(
                        bundle, samples.subset(rows), config
                    )
                except NumericalError as e:
                    raise NumericalError(f"agent {bundle.index} ppo update: {e}")
                ascend(
                    params,
                    bundle.optimizer,
                    objective,
                    context=f"agent {bundle.index}",
                    components=components,
                )
                history.append(components)
        metrics.update(agentMetrics(bundle.index, history))
        for key in ("approx_kl", "clip_fraction"):
            metrics[f"{key}_{bundle.index}"] = float(np.mean([h[key] for h in history]))
    logger.debug(f"ppo update: {metrics}")
    return metrics


def episodeStats(completed: List[tuple]) -> dict:
    """Mean welfare and length of finished training episodes."""
    if not completed:
        return {"train_welfare": np.nan, "train_episode_length": np.nan}
    welfare = [float(np.sum(returns)) for returns, _ in completed]
    lengths = [length for _, length in completed]
    return {
        "train_welfare": float(np.mean(welfare)),
        "train_episode_length": float(np.mean(lengths)),
    }
