"""Utility functions for naming experiments, seeding and encoding symbols."""

import logging
from typing import List

import numpy as np

from marlcpc.config import ABLATION_MODES, COMMUNICATING, CONDITIONS, ENVIRONMENTS
from marlcpc.errors import ConditionError, ContractError, EnvironmentNameError

logger = logging.getLogger("marlcpc")


def listConditions() -> list:
    """Returns a list of the supported agent conditions.

    Returns:
        conditions: the condition names used throughout this package.
    """
    return list(CONDITIONS)


def validateCondition(condition: str) -> None:
    """Verify a string condition is valid, raise an error otherwise.

    Args:
        condition: the name of the condition (from marlcpc.listConditions()).

    Raises:
        ConditionError: when an invalid condition name is passed
    """
    supported = listConditions()
    if condition not in supported:
        raise ConditionError(
            f"Invalid condition: {condition}. Supported: {', '.join(supported)}"
        )


def isCommunicating(condition: str) -> bool:
    """Returns whether agents under a condition exchange messages."""
    validateCondition(condition)
    return condition in COMMUNICATING


def listEnvironments() -> list:
    """Returns a list of the supported environment names.

    Returns:
        environments: the environment names used throughout this package.
    """
    return list(ENVIRONMENTS)


def validateEnvironment(env: str) -> None:
    """Verify a string environment name is valid, raise an error otherwise.

    Args:
        env: the name of the environment (from marlcpc.listEnvironments()).

    Raises:
        EnvironmentNameError: when an invalid environment name is passed
    """
    supported = listEnvironments()
    if env not in supported:
        raise EnvironmentNameError(
            f"Invalid env: {env}. Supported: {', '.join(supported)}"
        )


def listAblationModes() -> list:
    """Returns the message ablation modes applied at evaluation time."""
    return list(ABLATION_MODES)


def onehot(indices: np.ndarray, K: int) -> np.ndarray:
    """Encodes integer symbols as one-hot rows.

    Args:
        indices: integer array of symbols in [0, K).
        K: the vocabulary size.

    Returns:
        a float array with a trailing axis of length K.
    """
    indices = np.asarray(indices, dtype=np.int64)
    if np.any(indices < 0) or np.any(indices >= K):
        raise ContractError(f"Symbols must lie in [0, {K})")
    return np.eye(K, dtype=np.float64)[indices]


def spawnGenerators(seed: int, n: int) -> List[np.random.Generator]:
    """Creates n independent random streams from one seed.

    Args:
        seed: the root seed.
        n: the number of streams.

    Returns:
        generators: a list of numpy Generators, identical across calls.
    """
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.default_rng(child) for child in children]


def seedStreams(seed: int) -> dict:
    """Returns the named random streams of a run.

    Evaluation draws never touch the training streams.

    Args:
        seed: the run seed.

    Returns:
        a dict of numpy Generators keyed by "init", "env", "rollout", "update"
            and "eval".
    """
    names = ("init", "env", "rollout", "update", "eval")
    return dict(zip(names, spawnGenerators(seed, len(names))))


def configureLogging(verbose: bool = False) -> None:
    """Sets up the package logger for command line use."""
    level = logging.DEBUG if verbose else logging.INFO
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter("%(asctime)s %(name)s: %(message)s"))
    logger.handlers = [handler]
    logger.setLevel(level)


def sampleCategorical(probs: np.ndarray, rng) -> np.ndarray:
    """Draws one symbol per row of a (batch, K) probability array.

    Args:
        probs: rows of categorical probabilities.
        rng: the random stream to draw from, or a sequence of streams holding one
            generator per row (rollout workers).

    Returns:
        indices: an int array of shape (batch,).
    """
    probs = np.atleast_2d(probs)
    cdf = np.cumsum(probs, axis=-1)
    if isinstance(rng, (list, tuple)):
        if len(rng) != probs.shape[0]:
            raise ContractError("Expected one random stream per row")
        u = np.array([g.random() for g in rng])
    else:
        u = rng.random(probs.shape[0])
    u = u * cdf[:, -1]
    indices = (cdf > u[:, None]).argmax(axis=-1)
    return indices.astype(np.int64)
