import numpy as np
import pandas as pd
import pytest

from marlcpc import stats
from marlcpc.errors import ContractError

seed = 17
resamples = 500


def fractional_iqm(samples):
    x = np.sort(samples)
    n = len(x)
    low, high = n / 4, 3 * n / 4
    total = 0.0
    for k, value in enumerate(x):
        overlap = min(k + 1, high) - max(k, low)
        total += max(overlap, 0.0) * value
    return total / (high - low)


def test_iqm():
    assert stats.iqm(np.arange(1, 9)) == 4.5
    assert stats.iqm([2.5] * 7) == 2.5
    assert stats.iqm([3.0]) == 3.0
    with pytest.raises(ContractError):
        stats.iqm([])


def test_iqm_fractional_weights():
    rng = np.random.default_rng(seed)
    for n in (5, 10, 13):
        samples = rng.normal(size=n)
        assert np.isclose(stats.iqm(samples), fractional_iqm(samples))
    samples = np.arange(10.0)
    assert np.isclose(stats.iqm(samples), 4.5)
    assert np.isclose(stats.iqm(samples + 3.0), 7.5)


def test_iqm_ignores_tails():
    samples = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 1000.0])
    assert stats.iqm(samples) == 4.5


def test_bootstrapCI_constant():
    lower, upper = stats.bootstrapCI([0.9] * 10, resamples=resamples, seed=seed)
    assert np.isclose(lower, 0.9) and np.isclose(upper, 0.9)


def test_bootstrapCI_ordering_and_seeding():
    samples = np.random.default_rng(seed).normal(size=30)
    first = stats.bootstrapCI(samples, resamples=resamples, seed=seed)
    second = stats.bootstrapCI(samples, resamples=resamples, seed=seed)
    assert first == second
    assert first[0] <= stats.iqm(samples) <= first[1]
    lower, upper = stats.bootstrapCI(samples, stats.iqm, resamples, 0.5, seed=seed)
    assert first[0] <= lower <= upper <= first[1]


def test_bootstrapCI_coverage():
    rng = np.random.default_rng(seed)
    covered = 0
    reps = 200
    for _ in range(reps):
        samples = rng.normal(size=50)
        lower, upper = stats.bootstrapCI(samples, np.mean, 400, 0.95, rng=rng)
        covered += lower <= 0.0 <= upper
    assert covered / reps >= 0.9


def test_bootstrapCI_errors():
    with pytest.raises(ContractError):
        stats.bootstrapCI([1.0])
    with pytest.raises(ContractError):
        stats.bootstrapCI([1.0, 2.0], confidence=1.0)


def test_summarizeSamples_single_run():
    with pytest.warns(UserWarning):
        point = stats.summarizeSamples([0.7], "welfare", "cpc", "bandit", 256)
    assert point.iqm == 0.7
    assert np.isnan(point.ci_lo) and np.isnan(point.ci_hi)
    assert point.n_runs == 1


def test_summarize():
    rows = list()
    for run in range(4):
        for steps in (0, 256):
            rows.append(
                {
                    "seed": run,
                    "condition": "cpc",
                    "env": "bandit",
                    "env_steps": steps,
                    "welfare": float(run + steps / 256),
                    "episode_length": 1.0,
                }
            )
    rows.append({"seed": 0, "condition": "cpc", "env": "bandit", "env_steps": 128})
    frame = pd.DataFrame(rows)
    points = stats.summarize(frame, resamples=resamples)
    assert len(points) == 4
    welfare = [p for p in points if p.metric == "welfare"]
    assert [p.steps for p in welfare] == [0, 256]
    assert welfare[1].iqm == 2.5
    assert all(p.n_runs == 4 for p in points)

    table = stats.toFrame(points)
    assert list(table.columns) == stats.SUMMARY_COLUMNS
    assert list(stats.toFrame([]).columns) == stats.SUMMARY_COLUMNS
