"""Experiment sweeps over conditions and seeds, with IQM/CI aggregation.

A manifest is a JSON file:

    {
        "env": "bandit",
        "preset": "bandit",
        "conditions": ["no-comm", "message", "cpc", "shared"],
        "seeds": [0, 1, 2, 3, 4, 5, 6, 7, 8, 9],
        "overrides": {"budget": 30000},
        "metrics": ["welfare", "episode_length"],
        "output_dir": "runs/bandit-sweep"
    }

Only "conditions" and "seeds" are required.
"""

import json
import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List

import numpy as np
import pandas as pd
from tqdm import tqdm

from marlcpc.config import (
    CONFIDENCE,
    RESAMPLES,
    RunConfig,
    applyOverrides,
    defaultConfig,
    getPreset,
    outputRoot,
)
from marlcpc.errors import ConfigError
from marlcpc.stats import summarize, toFrame
from marlcpc.train import METRICS_FILE, isComplete, trainRun

logger = logging.getLogger("marlcpc.sweep")

SUMMARY_FILE = "summary.csv"
MANIFEST_KEYS = (
    "env",
    "preset",
    "conditions",
    "seeds",
    "overrides",
    "metrics",
    "output_dir",
)


@dataclass
class ExperimentManifest:
    """The runs of a sweep and how to aggregate them.

    Attributes:
        runs: one RunConfig per (condition, seed), each with its own output_dir.
        metrics: the evaluation columns summarized into summary.csv.
        output_dir: the sweep directory holding run directories and the summary.
    """

    runs: List[RunConfig]
    metrics: List[str] = field(default_factory=lambda: ["welfare", "episode_length"])
    output_dir: str = ""

    def validate(self) -> None:
        seen = dict()
        for run in self.runs:
            run.validate()
            key = (run.env, run.condition, run.seed)
            if key in seen:
                raise ConfigError(
                    f"Duplicate seed {run.seed} for {run.env}/{run.condition}"
                )
            seen[key] = run
        if not self.runs:
            raise ConfigError("A manifest needs at least one run")


def runDirectory(output_dir: str, config: RunConfig) -> str:
    name = f"{config.env}-{config.condition}-seed{config.seed}"
    return os.path.join(output_dir, name)


def buildManifest(entries: dict) -> ExperimentManifest:
    """Expands a manifest dict into one RunConfig per condition and seed.

    Args:
        entries: parsed manifest JSON.

    Returns:
        a validated ExperimentManifest.
    """
    unknown = set(entries) - set(MANIFEST_KEYS)
    if unknown:
        raise ConfigError(f"Unknown manifest key(s): {', '.join(sorted(unknown))}")
    for key in ("conditions", "seeds"):
        if not entries.get(key):
            raise ConfigError(f"Manifest is missing {key}")
    seeds = [int(seed) for seed in entries["seeds"]]
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"Manifest seeds must be distinct: {seeds}")

    env = entries.get("env", "bandit")
    output_dir = entries.get("output_dir") or os.path.join(outputRoot(), f"{env}-sweep")
    runs = list()
    for condition in entries["conditions"]:
        for seed in seeds:
            config = defaultConfig(env=env, condition=condition, seed=seed)
            if entries.get("preset"):
                config = applyOverrides(config, getPreset(entries["preset"]))
            config = applyOverrides(config, entries.get("overrides", {}))
            config = replace(config, output_dir=runDirectory(output_dir, config))
            runs.append(config)

    manifest = ExperimentManifest(
        runs=runs,
        metrics=list(entries.get("metrics", ["welfare", "episode_length"])),
        output_dir=output_dir,
    )
    manifest.validate()
    return manifest


def readManifest(path: str) -> ExperimentManifest:
    """Reads a JSON sweep manifest."""
    with open(path, "r") as f:
        try:
            entries = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid manifest JSON ({e})")
    return buildManifest(entries)


def _runOne(config: RunConfig) -> str:
    return trainRun(config, config.output_dir, quiet=True)


def runSweep(
    manifest: ExperimentManifest,
    jobs: int = 1,
    quiet: bool = False,
    resamples: int = RESAMPLES,
    confidence: float = CONFIDENCE,
) -> str:
    """Runs every incomplete run of a manifest, then writes summary.csv.

    Runs whose directory already holds a finished run are skipped. Failed runs
    are reported with a warning and left out of the summary.

    Args:
        manifest: the sweep to run.
        jobs: the number of worker processes. 1 runs sequentially.
        quiet: disable the progress bar.
        resamples: bootstrap resamples per summary point.
        confidence: the interval's coverage.

    Returns:
        the path of the summary file.
    """
    os.makedirs(manifest.output_dir, exist_ok=True)
    pending = [run for run in manifest.runs if not isComplete(run.output_dir)]
    skipped = len(manifest.runs) - len(pending)
    if skipped:
        logger.info(f"Skipping {skipped} completed run(s)")

    failures = dict()
    disable = True if quiet else None
    progress = tqdm(total=len(pending), desc="sweep", disable=disable)
    if jobs > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {pool.submit(_runOne, run): run for run in pending}
            for future, run in futures.items():
                try:
                    future.result()
                except Exception as e:
                    failures[run.output_dir] = e
                progress.update(1)
    else:
        for run in pending:
            try:
                _runOne(run)
            except Exception as e:
                failures[run.output_dir] = e
            progress.update(1)
    progress.close()

    for path, error in failures.items():
        warnings.warn(f"Run failed and is excluded from the summary: {path} ({error})")

    frames = list()
    for run in manifest.runs:
        if run.output_dir in failures or not isComplete(run.output_dir):
            continue
        frames.append(pd.read_csv(os.path.join(run.output_dir, METRICS_FILE)))
    summary_path = os.path.join(manifest.output_dir, SUMMARY_FILE)
    if frames:
        metrics = pd.concat(frames, ignore_index=True)
        points = summarize(
            metrics, manifest.metrics, resamples, confidence, np.random.default_rng(0)
        )
    else:
        warnings.warn("No completed runs to summarize")
        points = []
    toFrame(points).to_csv(summary_path, index=False)
    logger.info(f"Wrote {len(points)} summary rows to {summary_path}")
    return summary_path
