"""Two-agent environments with factorized observations and per-agent rewards."""

from dataclasses import dataclass, field
from typing import List, Sequence, Tuple, Union

import numpy as np

from marlcpc.config import GRID_SIZE, OBSERVER_MAX_STEPS, RunConfig
from marlcpc.errors import ContractError, EnvironmentNameError
from marlcpc.utils import onehot

LEFT = 0
RIGHT = 1

# observer actions of the mobile agent, cells indexed row-major
UP, DOWN, WEST, EAST, STAY, DIG = range(6)
OBSERVER_ACTIONS = ("up", "down", "left", "right", "stay", "dig")
MOVES = {UP: (-1, 0), DOWN: (1, 0), WEST: (0, -1), EAST: (0, 1), STAY: (0, 0)}

BANDIT_CORRECT = 1.0
BANDIT_WRONG = -0.1
OBSERVER_FOUND = 1.0
OBSERVER_PENALTY = -0.01


@dataclass
class StepResult:
    """The outcome of one environment step.

    Attributes:
        observations: one observation vector per agent.
        rewards: (n_agents,) rewards.
        done: whether the episode ended.
        info: holds "episode_length" (and "success") on termination.
    """

    observations: List[np.ndarray]
    rewards: np.ndarray
    done: bool
    info: dict = field(default_factory=dict)


class BanditEnv:
    """Single-step contextual bandit where only one agent sees the state.

    Attributes:
        true_state: LEFT or RIGHT, drawn uniformly every episode.
        informed_agent: the agent observing the state this episode.
        cooperative: reward both agents only when both choose correctly.
        fixed_informed: pin the informed agent instead of resampling it.
    """

    n_agents = 2
    obs_dims = (2, 2)
    n_actions = (2, 2)

    def __init__(
        self,
        cooperative: bool = False,
        informed_agent: int = None,
        rng: np.random.Generator = None,
        seed: int = None,
    ):
        if informed_agent not in (None, 0, 1):
            raise ContractError(
                f"informed_agent must be 0, 1 or None: {informed_agent}"
            )
        self.cooperative = cooperative
        self.fixed_informed = informed_agent
        self.rng = rng if rng is not None else np.random.default_rng(seed)
        self.true_state = LEFT
        self.informed_agent = 0 if informed_agent is None else informed_agent

    def observe(self) -> List[np.ndarray]:
        observations = [np.zeros(2), np.zeros(2)]
        observations[self.informed_agent] = onehot(self.true_state, 2)
        return observations

    def reset(self) -> List[np.ndarray]:
        self.true_state = int(self.rng.integers(2))
        if self.fixed_informed is None:
            self.informed_agent = int(self.rng.integers(2))
        return self.observe()

    def step(self, actions: Sequence[int]) -> StepResult:
        if len(actions) != self.n_agents:
            raise ContractError(f"Expected {self.n_agents} actions, got {len(actions)}")
        for action in actions:
            if action not in (LEFT, RIGHT):
                raise ContractError(f"Invalid bandit action: {action}")
        correct = np.array([a == self.true_state for a in actions])
        if self.cooperative:
            correct[:] = correct.all()
        rewards = np.where(correct, BANDIT_CORRECT, BANDIT_WRONG)
        info = {"episode_length": 1, "success": bool(correct.all())}
        return StepResult(self.observe(), rewards, True, info)


def moveCell(cell: int, action: int, size: int = GRID_SIZE) -> int:
    """Returns the cell reached by an action, clamped at the grid borders."""
    row, col = divmod(cell, size)
    drow, dcol = MOVES.get(action, (0, 0))
    row = min(max(row + drow, 0), size - 1)
    col = min(max(col + dcol, 0), size - 1)
    return row * size + col


class ObserverEnv:
    """Gridworld where a stationary observer sees the buried reward.

    Agent A observes the reward cell and has one dummy action. Agent B observes
    its own position and must walk to the reward cell and dig.

    Attributes:
        reward_cell: the cell holding the reward, 0..size**2 - 1.
        agent_b_pos: the cell agent B stands on.
        step_count: steps taken this episode.
        max_steps: the episode cap, reached episodes count as done.
    """

    n_agents = 2

    def __init__(
        self,
        size: int = GRID_SIZE,
        max_steps: int = OBSERVER_MAX_STEPS,
        rng: np.random.Generator = None,
        seed: int = None,
    ):
        if max_steps < 1:
            raise ContractError("max_steps must be positive")
        self.size = size
        self.n_cells = size * size
        self.max_steps = max_steps
        self.obs_dims = (self.n_cells, self.n_cells)
        self.n_actions = (1, len(OBSERVER_ACTIONS))
        self.rng = rng if rng is not None else np.random.default_rng(seed)
        self.reward_cell = 0
        self.agent_b_pos = 0
        self.step_count = 0

    def observe(self) -> List[np.ndarray]:
        return [
            onehot(self.reward_cell, self.n_cells),
            onehot(self.agent_b_pos, self.n_cells),
        ]

    def reset(self) -> List[np.ndarray]:
        self.reward_cell = int(self.rng.integers(self.n_cells))
        self.agent_b_pos = int(self.rng.integers(self.n_cells))
        self.step_count = 0
        return self.observe()

    def step(self, actions: Sequence[int]) -> StepResult:
        if len(actions) != self.n_agents:
            raise ContractError(f"Expected {self.n_agents} actions, got {len(actions)}")
        dummy, action = int(actions[0]), int(actions[1])
        if dummy != 0:
            raise ContractError(f"Agent A has a single action, got {dummy}")
        if not 0 <= action < len(OBSERVER_ACTIONS):
            raise ContractError(f"Invalid observer action: {action}")

        self.step_count += 1
        found = action == DIG and self.agent_b_pos == self.reward_cell
        if action != DIG:
            self.agent_b_pos = moveCell(self.agent_b_pos, action, self.size)
        rewards = np.array([0.0, OBSERVER_FOUND if found else OBSERVER_PENALTY])
        done = found or self.step_count >= self.max_steps
        info = dict()
        if done:
            info = {"episode_length": self.step_count, "success": found}
        return StepResult(self.observe(), rewards, done, info)


Env = Union[BanditEnv, ObserverEnv]


def byName(name: str, **kwargs) -> Env:
    """Builds an environment from its name.

    Args:
        name: the environment name (from marlcpc.listEnvironments()).
        **kwargs: passed to the environment constructor.

    Returns:
        a fresh environment instance.
    """
    lookup = {
        "bandit": lambda: BanditEnv(cooperative=False, **kwargs),
        "bandit-coop": lambda: BanditEnv(cooperative=True, **kwargs),
        "observer": lambda: ObserverEnv(**kwargs),
    }
    try:
        return lookup[name]()
    except KeyError:
        supported = ", ".join(lookup.keys())
        raise EnvironmentNameError(f"Invalid env: {name}. Supported: {supported}")


def makeEnv(config: RunConfig, rng: np.random.Generator) -> Env:
    """Builds the environment a run config describes."""
    if config.env == "observer":
        return byName(config.env, max_steps=config.max_steps, rng=rng)
    informed = None if config.informed_agent == "random" else int(config.informed_agent)
    return byName(config.env, informed_agent=informed, rng=rng)


def makeEnvs(config: RunConfig, rngs: Sequence[np.random.Generator]) -> List[Env]:
    """Builds one environment per random stream."""
    return [makeEnv(config, rng) for rng in rngs]


class EnvPool:
    """Steps a list of same-kind environments in lock-step, resetting on done.

    Observations are returned stacked per agent, as (n_envs, obs_dim) arrays.

    Attributes:
        envs: the environments, stepped in list order.
        returns: running per-agent returns of the current episodes.
        lengths: running episode lengths.
        completed: (returns, length) of every finished episode, in finish order.
    """

    def __init__(self, envs: Sequence[Env]):
        if len(envs) == 0:
            raise ContractError("EnvPool needs at least one environment")
        self.envs = list(envs)
        self.n_agents = self.envs[0].n_agents
        self.obs_dims = self.envs[0].obs_dims
        self.n_actions = self.envs[0].n_actions
        self.returns = np.zeros((len(self.envs), self.n_agents))
        self.lengths = np.zeros(len(self.envs), dtype=np.int64)
        self.completed = list()
        self.observations = None

    def __len__(self) -> int:
        return len(self.envs)

    def _stack(self, per_env: Sequence[List[np.ndarray]]) -> List[np.ndarray]:
        return [
            np.stack([obs[agent] for obs in per_env]) for agent in range(self.n_agents)
        ]

    def reset(self) -> List[np.ndarray]:
        self.returns[:] = 0.0
        self.lengths[:] = 0
        self.observations = self._stack([env.reset() for env in self.envs])
        return self.observations

    def step(
        self, actions: Sequence[np.ndarray], auto_reset: bool = True
    ) -> Tuple[List[np.ndarray], np.ndarray, np.ndarray]:
        """Steps every environment.

        Args:
            actions: one (n_envs,) int array per agent.
            auto_reset: reset finished environments and return their new first
                observations.

        Returns:
            observations: per-agent (n_envs, obs_dim) arrays after the step.
            rewards: (n_envs, n_agents) rewards.
            dones: (n_envs,) episode-end flags.
        """
        if len(actions) != self.n_agents:
            raise ContractError(f"Expected actions for {self.n_agents} agents")
        per_env, rewards, dones = list(), list(), list()
        for k, env in enumerate(self.envs):
            result = env.step([int(a[k]) for a in actions])
            self.returns[k] += result.rewards
            self.lengths[k] += 1
            if result.done:
                self.completed.append((self.returns[k].copy(), int(self.lengths[k])))
                self.returns[k] = 0.0
                self.lengths[k] = 0
            observations = result.observations
            if result.done and auto_reset:
                observations = env.reset()
            per_env.append(observations)
            rewards.append(result.rewards)
            dones.append(result.done)
        self.observations = self._stack(per_env)
        return self.observations, np.array(rewards), np.array(dones)

    def drain(self) -> List[Tuple[np.ndarray, int]]:
        """Returns and clears the finished-episode records."""
        completed, self.completed = self.completed, list()
        return completed
