"""Multilayer perceptrons and the Adam optimizer, built on the autodiff engine."""

from typing import List, Sequence, Union

import numpy as np

from marlcpc import autodiff as ad
from marlcpc.config import ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON
from marlcpc.errors import ContractError, NumericalError

ACTIVATIONS = {
    "tanh": ad.tanh,
    "gelu": ad.gelu,
}


class Mlp:
    """A fully connected network with a linear output layer.

    Attributes:
        layer_sizes: input size, hidden sizes, then output size.
        activation: the hidden-layer nonlinearity ("tanh" or "gelu").
        weights: (fan_in, fan_out) parameter nodes, one per layer.
        biases: (fan_out,) parameter nodes, one per layer.
    """

    layer_sizes: list
    activation: str
    weights: list
    biases: list

    def __init__(
        self,
        layer_sizes: Sequence[int],
        activation: str = "tanh",
        rng: np.random.Generator = None,
        seed: int = None,
        output_gain: float = 1.0,
    ):
        """Builds the layers with uniform fan-in initialization and zero biases.

        Args:
            layer_sizes: at least two positive integers, [n_inputs, ..., n_outputs].
            activation: the hidden-layer nonlinearity ("tanh" or "gelu").
            rng: generator used for initialization. takes precedence over `seed`.
            seed: seed for a fresh generator when `rng` is not passed.
            output_gain: scale of the output layer's initial weights.
        """
        layer_sizes = [int(size) for size in layer_sizes]
        if len(layer_sizes) < 2 or min(layer_sizes) < 1:
            raise ContractError(f"Invalid layer sizes: {layer_sizes}")
        if activation not in ACTIVATIONS:
            supported = ", ".join(ACTIVATIONS.keys())
            raise ContractError(
                f"Invalid activation: {activation}. Supported: {supported}"
            )
        if output_gain <= 0:
            raise ContractError(f"output_gain must be positive: {output_gain}")
        if rng is None:
            rng = np.random.default_rng(seed)

        self.layer_sizes = layer_sizes
        self.activation = activation
        self.weights = list()
        self.biases = list()
        n_layers = len(layer_sizes) - 1
        for i, (fan_in, fan_out) in enumerate(zip(layer_sizes[:-1], layer_sizes[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            if i == n_layers - 1:
                bound *= output_gain
            self.weights.append(
                ad.parameter(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            )
            self.biases.append(ad.parameter(np.zeros(fan_out)))

    @property
    def n_inputs(self) -> int:
        return self.layer_sizes[0]

    @property
    def n_outputs(self) -> int:
        return self.layer_sizes[-1]

    def parameters(self) -> List[ad.DiffNode]:
        """Returns the weight and bias nodes, layer by layer."""
        params = list()
        for weight, bias in zip(self.weights, self.biases):
            params.extend([weight, bias])
        return params

    def layers(self, x: Union[np.ndarray, ad.DiffNode]) -> List[ad.DiffNode]:
        """Runs the network and returns every layer's output.

        Args:
            x: a (batch, n_inputs) array or node.

        Returns:
            post-activation hidden layers followed by the linear output layer.
        """
        h = ad.asNode(x)
        if h.value.ndim != 2 or h.shape[1] != self.n_inputs:
            raise ContractError(
                f"Mlp expects input of shape (batch, {self.n_inputs}), got {h.shape}"
            )
        activate = ACTIVATIONS[self.activation]
        outputs = list()
        n_layers = len(self.weights)
        for i, (weight, bias) in enumerate(zip(self.weights, self.biases)):
            h = ad.matmul(h, weight) + bias
            if i < n_layers - 1:
                h = activate(h)
            outputs.append(h)
        return outputs

    def forward(self, x: Union[np.ndarray, ad.DiffNode]) -> ad.DiffNode:
        """Computes the network output.

        A 1-d input is treated as a single sample and gives a 1-d output.

        Args:
            x: a (n_inputs,) or (batch, n_inputs) array or node.

        Returns:
            the output node, (n_outputs,) or (batch, n_outputs).
        """
        node = ad.asNode(x)
        if node.value.ndim == 1:
            out = self.layers(ad.reshape(node, (1, -1)))[-1]
            return ad.reshape(out, (self.n_outputs,))
        return self.layers(node)[-1]

    __call__ = forward


def forwardMlp(net: Mlp, x: Union[np.ndarray, ad.DiffNode]) -> ad.DiffNode:
    """Runs an Mlp forward pass, wiring the output into the current graph."""
    return net.forward(x)


class AdamState:
    """Adam moment estimates for a fixed list of parameters.

    Attributes:
        m: first-moment accumulators, one per parameter.
        v: second-moment accumulators, one per parameter.
        step: number of updates applied.
        learning_rate: the step size.
        beta1: first-moment decay.
        beta2: second-moment decay.
        epsilon: denominator offset.
    """

    m: list
    v: list
    step: int
    learning_rate: float
    beta1: float
    beta2: float
    epsilon: float

    def __init__(
        self,
        params: Sequence[ad.DiffNode],
        learning_rate: float,
        beta1: float = ADAM_BETA1,
        beta2: float = ADAM_BETA2,
        epsilon: float = ADAM_EPSILON,
    ):
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]
        self.step = 0
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon


def adamStep(
    params: Sequence[ad.DiffNode],
    state: AdamState,
    grads: Sequence[np.ndarray] = None,
) -> None:
    """Applies one Adam descent update in place.

    Args:
        params: parameter nodes, in the order the state was built with.
        state: the AdamState for these parameters.
        grads: gradients to descend. defaults to each parameter's .grad.

    Raises:
        ContractError: when params and state do not line up.
        NumericalError: when any gradient is NaN or infinite.
    """
    if grads is None:
        grads = [p.grad for p in params]
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ContractError("Adam state was built for a different parameter list")
    for p, m, g in zip(params, state.m, grads):
        if m.shape != p.value.shape or g.shape != p.value.shape:
            raise ContractError(f"Adam shape mismatch for parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericalError("Adam received a non-finite gradient")

    state.step += 1
    correction1 = 1.0 - state.beta1**state.step
    correction2 = 1.0 - state.beta2**state.step
    for p, m, v, g in zip(params, state.m, state.v, grads):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / correction1
        v_hat = v / correction2
        p.value = p.value - state.learning_rate * m_hat / (
            np.sqrt(v_hat) + state.epsilon
        )


def zeroGrad(params: Sequence[ad.DiffNode]) -> None:
    """Clears the accumulated gradients of a list of parameters."""
    for p in params:
        p.zero_grad()


def ascend(
    params: Sequence[ad.DiffNode],
    state: AdamState,
    objective: ad.DiffNode,
    context: str = "",
    components: dict = None,
) -> None:
    """Takes one Adam step up a scalar objective.

    Args:
        params: every parameter the objective may depend on.
        state: the AdamState for these parameters.
        objective: the scalar node to maximize.
        context: names the update in error messages (e.g. the agent).
        components: named loss terms, reported when the objective is not finite.

    Raises:
        NumericalError: when the objective or a gradient is NaN or infinite.
    """
    if not np.all(np.isfinite(objective.value)):
        dump = ", ".join(f"{k}={v}" for k, v in (components or {}).items())
        raise NumericalError(f"Non-finite objective {context}: {dump}")
    zeroGrad(params)
    ad.backward(-objective)
    adamStep(params, state)
