"""Functions for reading and writing agent checkpoints.

A checkpoint holds, in order:

    magic bytes | uint32 header length | JSON header | float64 blocks

The JSON header (sorted keys) describes the run (condition, env, seed,
iteration, the resolved config text) and lists every block with its shape.
Blocks are little-endian 64-bit floats: for each agent, every parameter, then
the Adam first and second moments of every parameter.
"""

import json
import os
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from marlcpc.agents import AgentBundle, buildAgents
from marlcpc.config import RunConfig, parseConfig
from marlcpc.envs import makeEnv
from marlcpc.errors import CheckpointError

MAGIC = b"MARLCPC\x00"
FORMAT_VERSION = 1
BLOCK_DTYPE = np.dtype("<f8")
LENGTH_DTYPE = np.dtype("<u4")


@dataclass
class Checkpoint:
    """A loaded checkpoint.

    Attributes:
        config: the run configuration the agents were trained with.
        bundles: the restored agents, parameters and optimizer state included.
        iteration: the training iteration the checkpoint was taken at.
        env_steps: environment steps consumed by training so far.
    """

    config: RunConfig
    bundles: List[AgentBundle]
    iteration: int
    env_steps: int


def check_file(path: str) -> bool:
    """Verifies whether a file exists and can be read.

    Args:
        path: the file path to check.

    Returns:
        file status.
    """
    return os.path.isfile(path) and os.access(path, os.R_OK)


def _blocks(bundles: Sequence[AgentBundle]) -> list:
    """Returns (name, array) pairs in file order."""
    blocks = list()
    for bundle in bundles:
        prefix = f"agent{bundle.index}"
        params = bundle.parameters()
        for k, p in enumerate(params):
            blocks.append((f"{prefix}/param{k}", p.value))
        for k, m in enumerate(bundle.optimizer.m):
            blocks.append((f"{prefix}/adam_m{k}", m))
        for k, v in enumerate(bundle.optimizer.v):
            blocks.append((f"{prefix}/adam_v{k}", v))
    return blocks


def saveCheckpoint(
    path: str,
    bundles: Sequence[AgentBundle],
    config: RunConfig,
    iteration: int = 0,
    env_steps: int = 0,
) -> None:
    """Writes agents and their optimizer state to a checkpoint file.

    Args:
        path: the output file path.
        bundles: the agents to save.
        config: the run configuration, stored as resolved config text.
        iteration: the training iteration.
        env_steps: environment steps consumed by training so far.
    """
    blocks = _blocks(bundles)
    header = {
        "version": FORMAT_VERSION,
        "condition": config.condition,
        "env": config.env,
        "seed": config.seed,
        "iteration": int(iteration),
        "env_steps": int(env_steps),
        "config": config.resolved(),
        "adam_steps": [b.optimizer.step for b in bundles],
        "blocks": [[name, list(array.shape)] for name, array in blocks],
    }
    encoded = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(np.array([len(encoded)], dtype=LENGTH_DTYPE).tobytes())
        f.write(encoded)
        for _, array in blocks:
            f.write(np.ascontiguousarray(array, dtype=BLOCK_DTYPE).tobytes())


class _Reader:
    """Sequential reader that names the field being read on failure."""

    def __init__(self, data: bytes, path: str):
        self.data = data
        self.path = path
        self.offset = 0

    def take(self, n: int, field: str) -> bytes:
        if self.offset + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated while reading {field}")
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk


def loadCheckpoint(path: str) -> Checkpoint:
    """Reads a checkpoint and rebuilds its agents.

    Args:
        path: the checkpoint file path.

    Returns:
        a Checkpoint with bit-exact parameters and optimizer state.

    Raises:
        CheckpointError: when the file is missing, of another version, truncated
            or otherwise corrupted. the message names the field being read.
    """
    if not check_file(path):
        raise CheckpointError(f"Unable to read checkpoint: {path}")
    with open(path, "rb") as f:
        reader = _Reader(f.read(), path)

    if reader.take(len(MAGIC), "magic") != MAGIC:
        raise CheckpointError(f"{path}: not a marlcpc checkpoint (bad magic)")
    raw_length = reader.take(LENGTH_DTYPE.itemsize, "header length")
    length = int(np.frombuffer(raw_length, LENGTH_DTYPE)[0])
    try:
        header = json.loads(reader.take(length, "header").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupted header ({e})")
    for key in ("version", "config", "iteration", "env_steps", "adam_steps", "blocks"):
        if key not in header:
            raise CheckpointError(f"{path}: header is missing {key}")
    if header["version"] != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: version {header['version']} is not supported "
            f"(expected {FORMAT_VERSION})"
        )

    try:
        config = parseConfig(header["config"], source=f"{path}:config")
    except KeyError as e:
        raise CheckpointError(f"{path}: invalid config ({e.args[0]})")
    rng = np.random.default_rng(config.seed)
    bundles = buildAgents(config, makeEnv(config, rng), rng)
    expected = _blocks(bundles)
    if [name for name, _ in expected] != [name for name, _ in header["blocks"]]:
        raise CheckpointError(f"{path}: block layout does not match {config.condition}")

    values = list()
    for (name, template), (_, shape) in zip(expected, header["blocks"]):
        if tuple(shape) != template.shape:
            raise CheckpointError(
                f"{path}: {name} has shape {shape}, expected {template.shape}"
            )
        n_bytes = int(np.prod(shape, dtype=np.int64)) * BLOCK_DTYPE.itemsize
        raw = reader.take(n_bytes, name)
        block = np.frombuffer(raw, dtype=BLOCK_DTYPE).reshape(shape)
        values.append(block.astype(np.float64))
    if reader.offset != len(reader.data):
        raise CheckpointError(f"{path}: trailing data after the last block")

    cursor = iter(values)
    for bundle, step in zip(bundles, header["adam_steps"]):
        for p in bundle.parameters():
            p.value = next(cursor)
        bundle.optimizer.m = [next(cursor) for _ in bundle.optimizer.m]
        bundle.optimizer.v = [next(cursor) for _ in bundle.optimizer.v]
        bundle.optimizer.step = int(step)

    iteration, env_steps = int(header["iteration"]), int(header["env_steps"])
    return Checkpoint(config, bundles, iteration, env_steps)
