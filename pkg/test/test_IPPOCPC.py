import numpy as np
import pytest

from marlcpc import IPPOCPC, agents
from marlcpc import autodiff as ad
from marlcpc.config import applyOverrides, defaultConfig
from marlcpc.envs import ObserverEnv
from marlcpc.errors import ContractError
from marlcpc.utils import spawnGenerators

seed = 21
gamma = 0.99
n_workers = 2
steps = 16


def nested_sum_gae(rewards, values, dones, gamma, lam):
    T = len(rewards)
    advantages = np.zeros(T)
    for t in range(T):
        coef = 1.0
        for u in range(t, T):
            delta = rewards[u] + gamma * values[u + 1] * (1 - dones[u]) - values[u]
            advantages[t] += coef * delta
            if dones[u]:
                break
            coef *= gamma * lam
    return advantages


def test_computeGAE_one_step():
    rng = np.random.default_rng(seed)
    rewards = rng.normal(size=10)
    values = rng.normal(size=11)
    dones = np.zeros(10)
    result = IPPOCPC.computeGAE(rewards, values, dones, gamma, 0.0)
    deltas = rewards + gamma * values[1:] - values[:-1]
    assert np.allclose(result.advantages, deltas, atol=1e-12)
    assert np.allclose(result.targets, deltas + values[:-1], atol=1e-12)


def test_computeGAE_monte_carlo():
    rewards = np.array([1.0, 0.0, 2.0, 1.0, 3.0])
    dones = np.array([0, 0, 1, 0, 0])
    result = IPPOCPC.computeGAE(rewards, np.zeros(6), dones, gamma, 1.0)
    expected = [1 + gamma**2 * 2, gamma * 2, 2.0, 1 + gamma * 3, 3.0]
    assert np.allclose(result.advantages, expected, atol=1e-12)
    assert np.allclose(result.targets, expected, atol=1e-12)


def test_computeGAE_nested_sum_oracle():
    rng = np.random.default_rng(seed)
    for _ in range(100):
        T = int(rng.integers(1, 101))
        lam = float(rng.random())
        rewards = rng.normal(size=T)
        values = rng.normal(size=T + 1)
        dones = (rng.random(T) < 0.1).astype(float)
        result = IPPOCPC.computeGAE(rewards, values, dones, gamma, lam)
        oracle = nested_sum_gae(rewards, values, dones, gamma, lam)
        assert np.allclose(result.advantages, oracle, atol=1e-10, rtol=0)


def test_computeGAE_batched_and_errors():
    rng = np.random.default_rng(seed)
    rewards = rng.normal(size=(20, 3, 2))
    values = rng.normal(size=(21, 3, 2))
    dones = (rng.random((20, 3)) < 0.1).astype(float)
    result = IPPOCPC.computeGAE(rewards, values, dones, gamma, 0.95)
    for w in range(3):
        for i in range(2):
            oracle = nested_sum_gae(
                rewards[:, w, i], values[:, w, i], dones[:, w], gamma, 0.95
            )
            assert np.allclose(result.advantages[:, w, i], oracle, atol=1e-10)
    with pytest.raises(ContractError):
        IPPOCPC.computeGAE(rewards, values[:-1], dones, gamma, 0.95)


def setup(condition, overrides=None):
    config = defaultConfig("observer", condition, seed=seed)
    config = applyOverrides(config, {"max_steps": 8, **(overrides or {})})
    children = spawnGenerators(seed, 2 * n_workers)
    envs = [ObserverEnv(max_steps=8, rng=rng) for rng in children[:n_workers]]
    workers = IPPOCPC.RolloutWorkers(envs, children[n_workers:])
    bundles = agents.buildAgents(config, workers.pool, np.random.default_rng(seed))
    return config, bundles, workers


def test_RolloutWorkers_collect():
    _, bundles, workers = setup("cpc")
    batch = workers.collect(bundles, steps)
    assert batch.actions.shape == (steps, n_workers, 2)
    assert batch.values.shape == (steps + 1, n_workers, 2)
    assert batch.rewards.shape == (steps, n_workers, 2)
    assert batch.dones.shape == (steps, n_workers)
    assert batch.messages.shape == (steps, n_workers, 2)
    assert batch.received[0].shape == (steps, n_workers, 40)
    assert batch.n_steps == steps * n_workers
    assert batch.dones.any()
    assert np.all(batch.rewards[..., 0] == 0)

    with pytest.raises(ContractError):
        batch.agent(0)
    batch.computeAdvantages(gamma, 0.95)
    samples = batch.agent(1)
    assert len(samples) == steps * n_workers
    assert np.array_equal(samples.actions[:steps], batch.actions[:, 0, 1])
    assert np.array_equal(samples.x[steps], batch.observations[1][0, 1])


def test_RolloutWorkers_deterministic():
    first = setup("message")
    second = setup("message")
    a = first[2].collect(first[1], steps)
    b = IPPOCPC.collectRollout(second[1], second[2], steps)
    assert np.array_equal(a.actions, b.actions)
    assert np.array_equal(a.messages, b.messages)
    assert np.array_equal(a.rewards, b.rewards)


def make_samples(bundle, log_ratio, advantage, n=6):
    rng = np.random.default_rng(seed)
    x = np.eye(16)[rng.integers(16, size=n)]
    actions = rng.integers(6, size=n)
    logprob, _, value = agents.evaluateActions(bundle, x, actions)
    return IPPOCPC.AgentSamples(
        x=x,
        actions=actions,
        logprobs=logprob.value - log_ratio,
        values=value.value,
        advantages=np.full(n, advantage),
        targets=value.value,
        messages=None,
        received=None,
        shared_x=None,
    )


def test_ppoObjective_unit_ratio():
    config, bundles, _ = setup("no-comm", {"normalize_advantages": False})
    samples = make_samples(bundles[1], 0.0, 0.7)
    _, components = IPPOCPC.ppoObjective(bundles[1], samples, config.trainer)
    assert np.isclose(components["policy"], 0.7)
    assert components["clip_fraction"] == 0.0
    assert np.isclose(components["approx_kl"], 0.0)
    assert np.isclose(components["value"], 0.0)


def test_ppoObjective_clipping():
    config, bundles, _ = setup("no-comm", {"normalize_advantages": False})
    optimistic = make_samples(bundles[1], np.log(1.5), 1.0)
    _, components = IPPOCPC.ppoObjective(bundles[1], optimistic, config.trainer)
    assert np.isclose(components["policy"], 1.2)
    assert components["clip_fraction"] == 1.0

    pessimistic = make_samples(bundles[1], np.log(0.5), -1.0)
    _, components = IPPOCPC.ppoObjective(bundles[1], pessimistic, config.trainer)
    assert np.isclose(components["policy"], -0.8)


def test_ppoUpdate():
    config, bundles, workers = setup("cpc", {"n_epochs": 2})
    batch = workers.collect(bundles, steps)
    batch.computeAdvantages(gamma, 0.95)
    rng = np.random.default_rng(0)
    metrics = IPPOCPC.ppoUpdate(bundles, batch, config.trainer, rng)
    for i in range(2):
        for key in ("rl_loss", "cpc", "kl", "entropy", "approx_kl", "clip_fraction"):
            assert np.isfinite(metrics[f"{key}_{i}"])
        assert bundles[i].optimizer.step == 2 * config.trainer.n_minibatches


def test_ppoUpdate_is_independent():
    config, bundles, workers = setup("shared", {"n_epochs": 1})
    batch = workers.collect(bundles, steps)
    batch.computeAdvantages(gamma, 0.95)
    untouched = [p.value.copy() for p in bundles[0].parameters()]
    IPPOCPC.ppoUpdate(bundles[1:], batch, config.trainer, np.random.default_rng(0))
    after = [p.value for p in bundles[0].parameters()]
    assert all(np.array_equal(a, b) for a, b in zip(untouched, after))


def test_episodeStats():
    completed = [(np.array([0.0, 0.9]), 11), (np.array([0.0, -0.1]), 11)]
    stats = IPPOCPC.episodeStats(completed)
    assert np.isclose(stats["train_welfare"], 0.4)
    assert stats["train_episode_length"] == 11
    assert np.isnan(IPPOCPC.episodeStats([])["train_welfare"])


def test_ppoObjective_finite_differences():
    config, bundles, _ = setup("no-comm")
    bundle = bundles[1]
    rng = np.random.default_rng(seed)
    n = 12
    x = np.eye(16)[rng.integers(16, size=n)]
    actions = rng.integers(6, size=n)
    logprob, _, value = agents.evaluateActions(bundle, x, actions)
    log_ratio = np.tile([0.1, 0.5, -0.5, -0.05], n // 4)
    samples = IPPOCPC.AgentSamples(
        x=x,
        actions=actions,
        logprobs=logprob.value - log_ratio,
        values=value.value,
        advantages=rng.normal(size=n),
        targets=value.value + rng.normal(size=n),
        messages=None,
        received=None,
        shared_x=None,
    )
    objective, components = IPPOCPC.ppoObjective(bundle, samples, config.trainer)
    assert 0 < components["clip_fraction"] < 1
    assert components["value"] > 0
    ad.backward(objective)

    def evaluate():
        return float(IPPOCPC.ppoObjective(bundle, samples, config.trainer)[0].value)

    h = 1e-5
    for param in bundle.rl_parameters():
        flat = param.value.reshape(-1)
        analytic = param.grad.reshape(-1)
        for k in rng.choice(flat.size, min(5, flat.size), replace=False):
            original = flat[k]
            flat[k] = original + h
            up = evaluate()
            flat[k] = original - h
            down = evaluate()
            flat[k] = original
            numeric = (up - down) / (2 * h)
            scale = abs(numeric) + abs(analytic[k])
            assert abs(numeric - analytic[k]) < 1e-4 * scale + 1e-9


def test_ppoObjective_replays_recorded_z():
    config, bundles, workers = setup("cpc")
    batch = workers.collect(bundles, steps)
    batch.computeAdvantages(gamma, 0.95)
    samples = batch.agent(1)
    assert samples.z.shape == (steps * n_workers, 64)
    for weight in bundles[1].cpc.encoder.weights:
        weight.value = weight.value + 0.5
    _, components = IPPOCPC.ppoObjective(bundles[1], samples, config.trainer)
    assert np.isclose(components["approx_kl"], 0.0, atol=1e-12)
    assert components["clip_fraction"] == 0.0


def test_bootstrap_draws_no_random_numbers():
    _, bundles, workers = setup("cpc")
    batch = workers.collect(bundles, steps)
    states = [g.bit_generator.state for g in workers.rngs]
    values = agents.valueEstimates(bundles, workers.pool.observations)
    assert [g.bit_generator.state for g in workers.rngs] == states
    assert np.allclose(batch.values[-1], values, atol=1e-12)
