import numpy as np
import pytest

from marlcpc import autodiff as ad
from marlcpc.errors import ContractError, NumericalError
from marlcpc.networks import AdamState, Mlp, adamStep, ascend, zeroGrad

seed = 7


def test_Mlp():
    net = Mlp([4, 64, 64, 3], "tanh", seed=seed)
    assert net.n_inputs == 4
    assert net.n_outputs == 3
    assert len(net.parameters()) == 6
    for bias in net.biases:
        assert np.all(bias.value == 0)
    bound = 1 / np.sqrt(64)
    assert np.abs(net.weights[1].value).max() <= bound

    batch = net(np.ones((5, 4)))
    single = net(np.ones(4))
    assert batch.shape == (5, 3)
    assert single.shape == (3,)
    assert np.allclose(batch.value[0], single.value)


def test_Mlp_seeding():
    a = Mlp([2, 8, 1], "gelu", seed=seed)
    b = Mlp([2, 8, 1], "gelu", seed=seed)
    for p, q in zip(a.parameters(), b.parameters()):
        assert np.array_equal(p.value, q.value)


def test_Mlp_output_gain():
    small = Mlp([4, 64, 64, 3], "tanh", seed=seed, output_gain=0.01)
    plain = Mlp([4, 64, 64, 3], "tanh", seed=seed)
    assert np.allclose(small.weights[-1].value, 0.01 * plain.weights[-1].value)
    assert np.array_equal(small.weights[0].value, plain.weights[0].value)
    assert np.abs(small(np.ones((5, 4))).value).max() <= 64 * 0.01 / 8


def test_Mlp_errors():
    with pytest.raises(ContractError):
        Mlp([4])
    with pytest.raises(ContractError):
        Mlp([4, 2], "relu")
    with pytest.raises(ContractError):
        Mlp([4, 2], seed=seed)(np.ones((3, 5)))
    with pytest.raises(ContractError):
        Mlp([4, 2], output_gain=0.0)


def test_adamStep_first_step():
    w = ad.parameter([0.0])
    state = AdamState([w], learning_rate=0.1)
    adamStep([w], state, grads=[np.array([1.0])])
    assert state.step == 1
    assert np.isclose(w.value[0], -0.1, atol=1e-8)


def test_adamStep_converges():
    w = ad.parameter([0.0])
    state = AdamState([w], learning_rate=0.1)
    for _ in range(100):
        loss = ad.total(ad.square(w - 3.0))
        zeroGrad([w])
        ad.backward(loss)
        adamStep([w], state)
    assert abs(w.value[0] - 3.0) < 0.1


def test_adamStep_errors():
    w = ad.parameter([0.0, 1.0])
    state = AdamState([w], learning_rate=0.1)
    with pytest.raises(ContractError):
        adamStep([w, w], state)
    with pytest.raises(NumericalError):
        adamStep([w], state, grads=[np.array([np.nan, 0.0])])
    assert state.step == 0


def test_ascend():
    w = ad.parameter([1.0])
    state = AdamState([w], learning_rate=0.01)
    w.grad = np.array([100.0])
    objective = ad.total(w * 2.0)
    ascend([w], state, objective)
    assert np.allclose(w.grad, [-2.0])
    assert w.value[0] > 1.0
