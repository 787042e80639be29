"""Aggregate statistics over runs: interquartile mean and bootstrapped intervals."""

import warnings
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, List, Sequence, Tuple

import numpy as np
import pandas as pd

from marlcpc.config import CONFIDENCE, RESAMPLES
from marlcpc.errors import ContractError

SUMMARY_COLUMNS = [
    "metric",
    "condition",
    "env",
    "steps",
    "iqm",
    "ci_lo",
    "ci_hi",
    "n_runs",
]


def iqm(samples: Sequence[float]) -> float:
    """Interquartile mean with fractional trimming.

    Sorted sample k covers the interval [k, k + 1] of the rank axis. The middle
    band [n / 4, 3n / 4] is kept, and each sample is weighted by its overlap with
    that band, so boundary samples get partial weight when n is not divisible
    by 4.

    Args:
        samples: one or more finite values.

    Returns:
        the interquartile mean.
    """
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    n = len(x)
    if n == 0:
        raise ContractError("iqm needs at least one sample")
    low, high = 0.25 * n, 0.75 * n
    ranks = np.arange(n)
    weights = np.clip(np.minimum(ranks + 1, high) - np.maximum(ranks, low), 0.0, 1.0)
    return float(np.dot(weights, x) / (high - low))


def bootstrapCI(
    samples: Sequence[float],
    statistic: Callable[[np.ndarray], float] = iqm,
    resamples: int = RESAMPLES,
    confidence: float = CONFIDENCE,
    rng: np.random.Generator = None,
    seed: int = None,
) -> Tuple[float, float]:
    """Percentile bootstrap confidence interval of a statistic.

    Args:
        samples: two or more values, e.g. one final score per run.
        statistic: maps a 1-d array to a float.
        resamples: number of bootstrap resamples.
        confidence: the interval's coverage.
        rng: random stream for resampling. takes precedence over `seed`.
        seed: seed for a fresh generator when `rng` is not passed.

    Returns:
        (lower, upper) percentiles of the resampled statistic.
    """
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if len(samples) < 2:
        raise ContractError("bootstrapCI needs at least two samples")
    if not 0 < confidence < 1:
        raise ContractError(f"confidence must lie in (0, 1): {confidence}")
    if rng is None:
        rng = np.random.default_rng(seed)

    draws = rng.integers(0, len(samples), size=(resamples, len(samples)))
    estimates = np.array([statistic(samples[row]) for row in draws])
    alpha = 1.0 - confidence
    lower, upper = np.percentile(estimates, [100 * alpha / 2, 100 * (1 - alpha / 2)])
    return float(lower), float(upper)


@dataclass
class SummaryPoint:
    """The IQM and interval of one metric over runs at one evaluation point."""

    metric: str
    condition: str
    env: str
    steps: int
    iqm: float
    ci_lo: float
    ci_hi: float
    n_runs: int
    resamples: int = RESAMPLES
    confidence: float = CONFIDENCE


def summarizeSamples(
    samples: Sequence[float],
    metric: str,
    condition: str,
    env: str,
    steps: int,
    resamples: int = RESAMPLES,
    confidence: float = CONFIDENCE,
    rng: np.random.Generator = None,
) -> SummaryPoint:
    """Builds a SummaryPoint, leaving the interval empty below two samples."""
    samples = np.asarray(samples, dtype=np.float64)
    samples = samples[np.isfinite(samples)]
    center = iqm(samples)
    if len(samples) < 2:
        warnings.warn(
            f"{metric} of {condition}/{env} at {steps} steps has {len(samples)} "
            "sample(s); confidence interval left empty"
        )
        lower, upper = np.nan, np.nan
    else:
        lower, upper = bootstrapCI(samples, iqm, resamples, confidence, rng=rng)
    return SummaryPoint(
        metric, condition, env, int(steps), center, lower, upper, len(samples),
        resamples, confidence,
    )


def summarize(
    metrics: pd.DataFrame,
    metric_names: Iterable[str] = ("welfare", "episode_length"),
    resamples: int = RESAMPLES,
    confidence: float = CONFIDENCE,
    rng: np.random.Generator = None,
) -> List[SummaryPoint]:
    """Aggregates per-run evaluation rows into SummaryPoints.

    Rows are grouped by (condition, env, env_steps). Rows with an empty metric
    (iterations without evaluation) are skipped.

    Args:
        metrics: concatenated metrics.csv frames of many runs.
        metric_names: the evaluation columns to summarize.
        resamples: number of bootstrap resamples.
        confidence: the interval's coverage.
        rng: random stream for resampling, shared across groups in sorted order.

    Returns:
        SummaryPoints sorted by metric, condition, env and steps.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    points = list()
    for metric in metric_names:
        evaluated = metrics.dropna(subset=[metric])
        groups = evaluated.groupby(["condition", "env", "env_steps"], sort=True)
        for (condition, env, steps), group in groups:
            points.append(
                summarizeSamples(
                    group[metric].to_numpy(),
                    metric,
                    condition,
                    env,
                    steps,
                    resamples,
                    confidence,
                    rng,
                )
            )
    return points


def toFrame(points: Sequence[SummaryPoint]) -> pd.DataFrame:
    """Converts SummaryPoints to a frame with the summary.csv columns."""
    frame = pd.DataFrame([asdict(p) for p in points])
    if frame.empty:
        return pd.DataFrame(columns=SUMMARY_COLUMNS)
    return frame[SUMMARY_COLUMNS]
