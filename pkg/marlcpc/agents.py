"""Agent architectures: what each policy and value network sees per condition.

| condition | policy/value input                 | messages                     |
|-----------|------------------------------------|------------------------------|
| no-comm   | x_i                                | none                         |
| message   | x_i + incoming (N-1)*K one-hots    | sampled from a policy head   |
| cpc       | sg(z_i) + joint N*K message        | sampled from the CPC encoder |
| shared    | x_0 + ... + x_N                    | none                         |
"""

from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from marlcpc import autodiff as ad
from marlcpc.CPC import CpcHead, JointMessage, Message, joinMessages, sampleMessage
from marlcpc.config import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_EPSILON,
    BETA,
    CPC_HIDDEN_UNITS,
    HIDDEN_UNITS,
    POLICY_OUTPUT_GAIN,
    PROB_FLOOR,
    RunConfig,
)
from marlcpc.errors import ConditionError, ContractError
from marlcpc.networks import AdamState, Mlp
from marlcpc.utils import sampleCategorical


class AgentCondition(str, Enum):
    NO_COMM = "no-comm"
    MESSAGE = "message"
    CPC = "cpc"
    SHARED = "shared"


def byCondition(name: str) -> AgentCondition:
    """Returns the AgentCondition for a condition name.

    Args:
        name: the condition name (from marlcpc.listConditions()).

    Raises:
        ConditionError: when an invalid condition name is passed
    """
    try:
        return AgentCondition(name)
    except ValueError:
        supported = ", ".join(c.value for c in AgentCondition)
        raise ConditionError(f"Invalid condition: {name}. Supported: {supported}")


def inputDim(
    condition: AgentCondition,
    obs_dims: Sequence[int],
    agent: int,
    K: int,
    cpc_hidden: int = CPC_HIDDEN_UNITS,
) -> int:
    """Returns the policy and value input width of an agent under a condition."""
    n_agents = len(obs_dims)
    widths = {
        AgentCondition.NO_COMM: obs_dims[agent],
        AgentCondition.MESSAGE: obs_dims[agent] + (n_agents - 1) * K,
        AgentCondition.CPC: cpc_hidden + n_agents * K,
        AgentCondition.SHARED: sum(obs_dims),
    }
    return widths[condition]


class AgentBundle:
    """One agent's networks and optimizer state. Agents never share parameters.

    Attributes:
        index: the agent's position in the joint message.
        condition: the agent's AgentCondition.
        policy: 2 x hidden Tanh Mlp with a small initial output layer. its outputs
            are the action logits, followed by K message logits under the
            message condition.
        value: 2 x hidden Tanh Mlp with a scalar output.
        cpc: the CpcHead under the cpc condition, otherwise None.
        optimizer: Adam state over every parameter of the bundle.
    """

    def __init__(
        self,
        index: int,
        condition: AgentCondition,
        obs_dims: Sequence[int],
        n_actions: int,
        K: int,
        learning_rate: float,
        hidden: int = HIDDEN_UNITS,
        cpc_hidden: int = CPC_HIDDEN_UNITS,
        beta: float = BETA,
        decoder_scope: str = "joint",
        prob_floor: float = PROB_FLOOR,
        straight_through: str = "softmax",
        adam_beta1: float = ADAM_BETA1,
        adam_beta2: float = ADAM_BETA2,
        adam_epsilon: float = ADAM_EPSILON,
        rng: np.random.Generator = None,
        seed: int = None,
    ):
        if rng is None:
            rng = np.random.default_rng(seed)
        self.index = index
        self.condition = byCondition(condition)
        self.n_agents = len(obs_dims)
        self.obs_dims = tuple(int(d) for d in obs_dims)
        self.obs_dim = self.obs_dims[index]
        self.n_actions = int(n_actions)
        self.K = int(K)
        self.n_messages = self.K if self.condition == AgentCondition.MESSAGE else 0
        self.input_dim = inputDim(self.condition, self.obs_dims, index, K, cpc_hidden)

        outputs = self.n_actions + self.n_messages
        self.policy = Mlp(
            [self.input_dim, hidden, hidden, outputs],
            "tanh",
            rng=rng,
            output_gain=POLICY_OUTPUT_GAIN,
        )
        self.value = Mlp([self.input_dim, hidden, hidden, 1], "tanh", rng=rng)
        self.cpc = None
        if self.condition == AgentCondition.CPC:
            self.cpc = CpcHead(
                self.obs_dim,
                self.n_agents,
                K,
                agent_index=index,
                hidden=cpc_hidden,
                beta=beta,
                decoder_scope=decoder_scope,
                prob_floor=prob_floor,
                straight_through=straight_through,
                rng=rng,
            )
        self.optimizer = AdamState(
            self.parameters(), learning_rate, adam_beta1, adam_beta2, adam_epsilon
        )

    def __repr__(self) -> str:
        return (
            f"AgentBundle(index={self.index}, condition={self.condition.value}, "
            f"input_dim={self.input_dim}, n_actions={self.n_actions})"
        )

    @property
    def communicates(self) -> bool:
        return self.condition in (AgentCondition.MESSAGE, AgentCondition.CPC)

    @property
    def received_dim(self) -> int:
        """Width of the message vector this agent receives."""
        if self.condition == AgentCondition.MESSAGE:
            return (self.n_agents - 1) * self.K
        if self.condition == AgentCondition.CPC:
            return self.n_agents * self.K
        return 0

    def rl_parameters(self) -> List[ad.DiffNode]:
        return self.policy.parameters() + self.value.parameters()

    def parameters(self) -> List[ad.DiffNode]:
        params = self.rl_parameters()
        if self.cpc is not None:
            params += self.cpc.parameters()
        return params


def buildAgents(config: RunConfig, env, rng: np.random.Generator) -> List[AgentBundle]:
    """Builds one AgentBundle per agent of an environment.

    Args:
        config: the run configuration.
        env: an environment (or EnvPool) exposing obs_dims and n_actions.
        rng: the initialization stream. agents are built in index order.

    Returns:
        bundles: a list of AgentBundles.
    """
    trainer = config.trainer
    condition = byCondition(config.condition)
    bundles = list()
    for i in range(env.n_agents):
        bundle = AgentBundle(
            i,
            condition,
            env.obs_dims,
            env.n_actions[i],
            trainer.K,
            trainer.learning_rate,
            hidden=trainer.hidden,
            cpc_hidden=trainer.cpc_hidden,
            beta=trainer.beta,
            decoder_scope=trainer.decoder_scope,
            prob_floor=trainer.prob_floor,
            straight_through=trainer.straight_through,
            adam_beta1=trainer.adam_beta1,
            adam_beta2=trainer.adam_beta2,
            adam_epsilon=trainer.adam_epsilon,
            rng=rng,
        )
        expected = inputDim(condition, env.obs_dims, i, trainer.K, trainer.cpc_hidden)
        if bundle.policy.n_inputs != expected or bundle.value.n_inputs != expected:
            raise ContractError(
                f"Agent {i} input width {bundle.policy.n_inputs} != {expected}"
            )
        bundles.append(bundle)
    return bundles


def categoricalEntropy(logits: ad.DiffNode) -> ad.DiffNode:
    """Per-row entropy of a categorical given its logits."""
    logp = ad.logSoftmax(logits)
    return -ad.total(ad.softmax(logits) * logp, axis=1)


def messageLogits(bundle: AgentBundle, x: np.ndarray) -> ad.DiffNode:
    """Message-head logits, read from a pass with the incoming block zeroed."""
    x = _batch(x, bundle.obs_dim)
    silent = np.zeros((len(x), bundle.received_dim))
    outputs = bundle.policy.forward(np.concatenate([x, silent], axis=1))
    return ad.columns(outputs, bundle.n_actions, bundle.n_actions + bundle.n_messages)


def _batch(x: np.ndarray, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ContractError(f"Expected inputs of width {dim}, got {x.shape}")
    return x


def speak(
    bundle: AgentBundle, x: np.ndarray, rng: np.random.Generator
) -> Tuple[Optional[Message], Optional[np.ndarray]]:
    """Samples an agent's outgoing message for a batch of observations.

    Returns:
        message: the sampled Message, or None for silent conditions.
        z: the CPC encoder representation under the cpc condition, else None.
    """
    if bundle.condition == AgentCondition.CPC:
        return sampleMessage(bundle.cpc, x, rng)
    if bundle.condition == AgentCondition.MESSAGE:
        logp = ad.logSoftmax(messageLogits(bundle, x)).value
        index = sampleCategorical(np.exp(logp), rng)
        logprob = logp[np.arange(len(index)), index]
        return Message.fromIndex(index, bundle.K, logprob=logprob), None
    return None, None


def messageExchange(
    messages: Sequence[Message], condition: AgentCondition = AgentCondition.CPC
) -> List[JointMessage]:
    """Delivers messages to every agent.

    Under the cpc condition every agent receives the full fixed-order
    concatenation, its own message included. Under the message condition each
    agent receives only the other agents' messages, in agent order.

    Args:
        messages: one Message per agent.
        condition: the communicating condition of the run.

    Returns:
        one JointMessage per agent.
    """
    if byCondition(condition) != AgentCondition.MESSAGE:
        joint = joinMessages(messages)
        return [joint for _ in messages]
    received = list()
    for i in range(len(messages)):
        others = [m for j, m in enumerate(messages) if j != i]
        if others:
            received.append(joinMessages(others))
        else:
            batch = len(messages[i])
            empty = np.zeros((batch, 0))
            received.append(JointMessage(empty, [], messages[i].K))
    return received


def policyInput(
    bundle: AgentBundle,
    x: np.ndarray,
    received: np.ndarray = None,
    shared_x: np.ndarray = None,
    z: np.ndarray = None,
) -> ad.DiffNode:
    """Assembles the policy and value input of an agent.

    Under the cpc condition z_i enters as a constant, so RL losses never reach the
    CPC parameters. Replays pass the z recorded when the action was sampled. It
    is only recomputed from the current encoder when none is given.

    Args:
        bundle: the agent.
        x: (batch, obs_dim) own observations.
        received: (batch, received_dim) message vector for communicating agents.
        shared_x: (batch, sum of obs dims) joint observation under shared.
        z: (batch, cpc_hidden) recorded encoder representation under cpc.

    Returns:
        a (batch, input_dim) node.
    """
    x = _batch(x, bundle.obs_dim)
    condition = bundle.condition
    if condition == AgentCondition.SHARED:
        if shared_x is None:
            raise ContractError("The shared condition needs the joint observation")
        return ad.asNode(_batch(shared_x, bundle.input_dim))
    if condition == AgentCondition.NO_COMM:
        return ad.asNode(x)
    if received is None:
        raise ContractError(f"The {condition.value} condition needs received messages")
    received = _batch(received, bundle.received_dim)
    if len(received) != len(x):
        raise ContractError("Observation and message batches differ in length")
    if condition == AgentCondition.MESSAGE:
        return ad.asNode(np.concatenate([x, received], axis=1))
    if z is None:
        _, encoded = bundle.cpc.encode(x)
        z = encoded.value
    z = _batch(z, bundle.cpc.encoder.layer_sizes[1])
    if len(z) != len(x):
        raise ContractError("Observation and encoder batches differ in length")
    return ad.asNode(np.concatenate([z, received], axis=1))


def policyHeads(
    bundle: AgentBundle,
    x: np.ndarray,
    received: np.ndarray = None,
    shared_x: np.ndarray = None,
    z: np.ndarray = None,
) -> Tuple[ad.DiffNode, ad.DiffNode]:
    """Runs the action head and value network.

    Returns:
        action_logits: a (batch, n_actions) node.
        value: a (batch,) node.
    """
    inputs = policyInput(bundle, x, received, shared_x, z)
    outputs = bundle.policy.forward(inputs)
    if bundle.n_messages:
        outputs = ad.columns(outputs, 0, bundle.n_actions)
    value = ad.reshape(bundle.value.forward(inputs), (inputs.shape[0],))
    return outputs, value


@dataclass
class ActResult:
    """One agent's choice for a batch of observations.

    Attributes:
        action: (batch,) sampled actions.
        message: the agent's own Message, or None.
        logprob: (batch,) log-probability of the action, plus that of the message
            under the message condition.
        value: (batch,) value estimates.
        z: (batch, hidden) CPC encoder representation the action was drawn with,
            or None.
    """

    action: np.ndarray
    message: Optional[Message]
    logprob: np.ndarray
    value: np.ndarray
    z: Optional[np.ndarray]


def act(
    bundle: AgentBundle,
    x: np.ndarray,
    incoming: JointMessage = None,
    rng: np.random.Generator = None,
    message: Message = None,
    z: np.ndarray = None,
    shared_x: np.ndarray = None,
) -> ActResult:
    """Samples an action after messages have been exchanged.

    Args:
        bundle: the agent.
        x: (batch, obs_dim) own observations.
        incoming: what the agent received from messageExchange.
        rng: the random stream to draw from.
        message: the agent's own message, from speak.
        z: the agent's encoder representation, from speak.
        shared_x: the joint observation under the shared condition.

    Returns:
        an ActResult.
    """
    if bundle.communicates and message is None:
        raise ContractError(
            f"The {bundle.condition.value} condition speaks before it acts"
        )
    received = incoming.vector if incoming is not None else None
    logits, value = policyHeads(bundle, x, received, shared_x, z)
    logp = ad.logSoftmax(logits).value
    action = sampleCategorical(np.exp(logp), rng)
    logprob = logp[np.arange(len(action)), action]
    if bundle.condition == AgentCondition.MESSAGE:
        logprob = logprob + message.logprob
    return ActResult(action, message, logprob, value.value, z)


def evaluateActions(
    bundle: AgentBundle,
    x: np.ndarray,
    actions: np.ndarray,
    received: np.ndarray = None,
    shared_x: np.ndarray = None,
    message_index: np.ndarray = None,
    z: np.ndarray = None,
) -> Tuple[ad.DiffNode, ad.DiffNode, ad.DiffNode]:
    """Replays stored choices under the current parameters.

    Args:
        bundle: the agent.
        x: (batch, obs_dim) own observations.
        actions: (batch,) stored actions.
        received: stored received message vectors.
        shared_x: stored joint observations under the shared condition.
        message_index: (batch,) stored own messages under the message condition.
        z: (batch, cpc_hidden) encoder representations recorded under cpc.

    Returns:
        logprob: (batch,) node, action plus message head under the message
            condition.
        entropy: (batch,) node, summed over the action and message heads.
        value: (batch,) node.
    """
    logits, value = policyHeads(bundle, x, received, shared_x, z)
    logprob = ad.take(ad.logSoftmax(logits), actions)
    entropy = categoricalEntropy(logits)
    if bundle.condition == AgentCondition.MESSAGE:
        if message_index is None:
            raise ContractError("The message condition replays its own messages")
        message_logits = messageLogits(bundle, x)
        logprob = logprob + ad.take(ad.logSoftmax(message_logits), message_index)
        entropy = entropy + categoricalEntropy(message_logits)
    return logprob, entropy, value


@dataclass
class Decision:
    """Every agent's choices for one lock-step batch.

    Attributes:
        actions: (batch, n_agents) actions.
        logprobs: (batch, n_agents) behaviour log-probabilities.
        values: (batch, n_agents) value estimates.
        messages: (batch, n_agents) message symbols, or None when silent.
        received: per-agent received message vectors (None when silent).
        shared_x: the joint observation, or None.
        z: per-agent (batch, cpc_hidden) encoder representations (None outside
            the cpc condition).
    """

    actions: np.ndarray
    logprobs: np.ndarray
    values: np.ndarray
    messages: Optional[np.ndarray]
    received: list
    shared_x: Optional[np.ndarray]
    z: list


def _checkBundles(bundles: Sequence[AgentBundle], observations) -> AgentCondition:
    condition = bundles[0].condition
    if any(b.condition != condition for b in bundles):
        raise ConditionError("All agents in a run share one condition")
    if len(observations) != len(bundles):
        raise ContractError(f"Expected observations for {len(bundles)} agents")
    return condition


def _sharedObservation(condition: AgentCondition, observations) -> np.ndarray:
    if condition != AgentCondition.SHARED:
        return None
    return np.concatenate([np.atleast_2d(x) for x in observations], axis=1)


def decide(
    bundles: Sequence[AgentBundle],
    observations: Sequence[np.ndarray],
    rng: np.random.Generator,
    intervene: Callable[[JointMessage], JointMessage] = None,
) -> Decision:
    """Runs speak, exchange and act for every agent, in agent order.

    Args:
        bundles: one AgentBundle per agent, sharing a condition.
        observations: per-agent (batch, obs_dim) observations.
        rng: the random stream to draw from.
        intervene: optional map applied to every delivered JointMessage.

    Returns:
        a Decision.
    """
    condition = _checkBundles(bundles, observations)
    spoken = [speak(b, x, rng) for b, x in zip(bundles, observations)]
    messages = None
    delivered = [None] * len(bundles)
    if bundles[0].communicates:
        own = [message for message, _ in spoken]
        delivered = messageExchange(own, condition)
        if intervene is not None:
            delivered = [intervene(joint) for joint in delivered]
        messages = np.stack([m.index for m in own], axis=1)
    shared_x = _sharedObservation(condition, observations)

    results = [
        act(b, x, delivered[i], rng, spoken[i][0], spoken[i][1], shared_x)
        for i, (b, x) in enumerate(zip(bundles, observations))
    ]
    return Decision(
        actions=np.stack([r.action for r in results], axis=1),
        logprobs=np.stack([r.logprob for r in results], axis=1),
        values=np.stack([r.value for r in results], axis=1),
        messages=messages,
        received=[j.vector if j is not None else None for j in delivered],
        shared_x=shared_x,
        z=[r.z for r in results],
    )


def modalMessage(bundle: AgentBundle, x: np.ndarray) -> Tuple[Message, np.ndarray]:
    """The most probable outgoing message of a communicating agent, and its z."""
    if bundle.condition == AgentCondition.CPC:
        logits, z = bundle.cpc.encode(x)
        z = z.value
    else:
        logits, z = messageLogits(bundle, x), None
    index = np.argmax(logits.value, axis=1)
    return Message.fromIndex(index, bundle.K), z


def valueEstimates(
    bundles: Sequence[AgentBundle], observations: Sequence[np.ndarray]
) -> np.ndarray:
    """Value estimates of every agent, drawing no random numbers.

    Communicating agents exchange their modal messages in place of sampled ones.

    Returns:
        a (batch, n_agents) array.
    """
    condition = _checkBundles(bundles, observations)
    delivered = [None] * len(bundles)
    z = [None] * len(bundles)
    if bundles[0].communicates:
        modal = [modalMessage(b, x) for b, x in zip(bundles, observations)]
        delivered = messageExchange([m for m, _ in modal], condition)
        z = [encoded for _, encoded in modal]
    shared_x = _sharedObservation(condition, observations)
    values = list()
    for i, (bundle, x) in enumerate(zip(bundles, observations)):
        received = delivered[i].vector if delivered[i] is not None else None
        _, value = policyHeads(bundle, x, received, shared_x, z[i])
        values.append(value.value)
    return np.stack(values, axis=1)
