"""Collective predictive coding heads for reward-independent message learning.

Each agent owns an encoder Q(m_i | x_i) over K discrete symbols and a decoder
P(x_i | m) that reconstructs its own observation from the concatenated joint
message. Maximizing each agent's objective

    J_CPC = log P(x_i | m) - beta * KL(Q(m_i | x_i) || P(m_i))

independently maximizes a lower bound on the joint observation likelihood of
all agents.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from marlcpc import autodiff as ad
from marlcpc.config import (
    BETA,
    CPC_HIDDEN_UNITS,
    PROB_FLOOR,
    STRAIGHT_THROUGH_MODES,
)
from marlcpc.errors import ContractError
from marlcpc.networks import Mlp
from marlcpc.utils import onehot, sampleCategorical


class FlatPrior:
    """Uniform prior P(m_i) = 1/K over message symbols."""

    def __init__(self, K: int):
        self.K = K

    def logprob(self, indices: np.ndarray) -> np.ndarray:
        return np.full(np.shape(indices), -np.log(self.K))

    def prob(self, indices: np.ndarray) -> np.ndarray:
        return np.full(np.shape(indices), 1.0 / self.K)

    def probs(self) -> np.ndarray:
        return np.full(self.K, 1.0 / self.K)


@dataclass
class Message:
    """A batch of one agent's discrete messages.

    Attributes:
        index: (batch,) symbols in [0, K).
        onehot: (batch, K) one-hot encodings.
        logprob: (batch,) log Q(m_i | x_i) at sampling time.
        K: the vocabulary size.
    """

    index: np.ndarray
    onehot: np.ndarray
    logprob: np.ndarray
    K: int

    @classmethod
    def fromIndex(cls, index: np.ndarray, K: int, logprob: np.ndarray = None):
        index = np.atleast_1d(np.asarray(index, dtype=np.int64))
        if logprob is None:
            logprob = np.zeros(index.shape)
        return cls(index=index, onehot=onehot(index, K), logprob=logprob, K=K)

    def __len__(self) -> int:
        return len(self.index)


@dataclass
class JointMessage:
    """The fixed-order concatenation of every agent's message.

    Attributes:
        vector: (batch, N * K) concatenated one-hot blocks.
        messages: the per-agent Message records, in agent order.
        K: the vocabulary size.
    """

    vector: np.ndarray
    messages: list
    K: int

    @property
    def n_agents(self) -> int:
        return len(self.messages)

    def block(self, agent: int) -> slice:
        """Returns the column slice holding one agent's message."""
        return slice(agent * self.K, (agent + 1) * self.K)


def joinMessages(messages: Sequence[Message]) -> JointMessage:
    """Concatenates per-agent messages in agent order.

    Args:
        messages: one Message per agent, sharing K and batch size.

    Returns:
        the JointMessage with an (batch, N * K) vector.
    """
    if len(messages) == 0:
        raise ContractError("At least one message is required")
    K = messages[0].K
    if any(m.K != K for m in messages) or len({len(m) for m in messages}) != 1:
        raise ContractError("Messages must share the vocabulary and batch size")
    vector = np.concatenate([m.onehot for m in messages], axis=-1)
    return JointMessage(vector=vector, messages=list(messages), K=K)


def jointFromIndices(indices: np.ndarray, K: int) -> JointMessage:
    """Rebuilds a JointMessage from stored (batch, n_agents) symbols."""
    indices = np.atleast_2d(np.asarray(indices, dtype=np.int64))
    return joinMessages([Message.fromIndex(column, K) for column in indices.T])


class CpcHead:
    """One agent's encoder, decoder and prior.

    Attributes:
        encoder: |x_i| -> hidden (GELU) -> K logits. its hidden layer is z_i.
        decoder: N*K (or K) -> hidden (GELU) -> |x_i| Bernoulli logits.
        prior: the message prior.
        beta: weight of the KL term.
        agent_index: which block of the joint message this agent owns.
        decoder_scope: "joint" decodes from every message, "own" from m_i alone.
        straight_through: how the sampled message carries encoder gradients,
            "softmax" or "broadcast" (see straightThrough).
    """

    def __init__(
        self,
        obs_dim: int,
        n_agents: int,
        K: int,
        agent_index: int = 0,
        hidden: int = CPC_HIDDEN_UNITS,
        beta: float = BETA,
        prior: FlatPrior = None,
        decoder_scope: str = "joint",
        prob_floor: float = PROB_FLOOR,
        straight_through: str = "softmax",
        rng: np.random.Generator = None,
        seed: int = None,
    ):
        if not 0 <= agent_index < n_agents:
            raise ContractError(f"agent_index {agent_index} outside {n_agents} agents")
        if decoder_scope not in ("joint", "own"):
            raise ContractError(f"Invalid decoder scope: {decoder_scope}")
        if straight_through not in STRAIGHT_THROUGH_MODES:
            raise ContractError(f"Invalid straight-through mode: {straight_through}")
        if rng is None:
            rng = np.random.default_rng(seed)

        self.obs_dim = obs_dim
        self.n_agents = n_agents
        self.K = K
        self.agent_index = agent_index
        self.beta = beta
        self.prior = prior if prior is not None else FlatPrior(K)
        self.decoder_scope = decoder_scope
        self.prob_floor = prob_floor
        self.straight_through = straight_through
        decoder_dim = n_agents * K if decoder_scope == "joint" else K
        self.encoder = Mlp([obs_dim, hidden, K], activation="gelu", rng=rng)
        self.decoder = Mlp([decoder_dim, hidden, obs_dim], activation="gelu", rng=rng)

    def parameters(self) -> List[ad.DiffNode]:
        return self.encoder.parameters() + self.decoder.parameters()

    def encode(self, x: np.ndarray) -> Tuple[ad.DiffNode, ad.DiffNode]:
        """Runs the encoder.

        Args:
            x: (batch, obs_dim) observations.

        Returns:
            logits: (batch, K) message logits.
            z: (batch, hidden) post-activation hidden layer.
        """
        z, logits = self.encoder.layers(_batch(x, self.obs_dim))
        return logits, z

    def probs(self, x: np.ndarray) -> np.ndarray:
        """Returns Q(m_i | x_i) as a (batch, K) array."""
        logits, _ = self.encode(x)
        return ad.softmax(logits).value


def _batch(x: np.ndarray, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != dim:
        raise ContractError(f"Expected observations of width {dim}, got {x.shape}")
    return x


def sampleMessage(
    head: CpcHead, x: np.ndarray, rng: np.random.Generator
) -> Tuple[Message, np.ndarray]:
    """Samples m_i ~ Q(m_i | x_i) for a batch of observations.

    Args:
        head: the agent's CPC head.
        x: (batch, obs_dim) or (obs_dim,) observations.
        rng: the random stream to draw from.

    Returns:
        message: the sampled Message with its log-probabilities.
        z: (batch, hidden) encoder representation of x.
    """
    logits, z = head.encode(x)
    logp = ad.logSoftmax(logits).value
    index = sampleCategorical(np.exp(logp), rng)
    logprob = logp[np.arange(len(index)), index]
    return Message.fromIndex(index, head.K, logprob=logprob), z.value


def ownLogProb(head: CpcHead, x: np.ndarray, index: np.ndarray) -> ad.DiffNode:
    """log Q(m_i | x_i) of given symbols under the current encoder, floored."""
    logits, _ = head.encode(x)
    logq = ad.take(ad.logSoftmax(logits), index)
    return ad.clip(logq, np.log(head.prob_floor), 0.0)


def straightThrough(
    msg: Message, head: CpcHead, x: np.ndarray, logq: ad.DiffNode = None
) -> ad.DiffNode:
    """The straight-through message node, exactly the one-hot in the forward pass.

    Under the head's "softmax" mode the node is m + Q - sg[Q] with Q the full
    (batch, K) encoder distribution, so the decoder's gradient with respect to
    every symbol reaches the encoder. Under "broadcast" it is m + log Q - sg[log Q],
    the scalar log-probability of the sampled symbol added to all K components.

    Args:
        msg: the message sampled from this head on x.
        head: the agent's CPC head.
        x: the observations the message was sampled from.
        logq: a precomputed ownLogProb node, reused by the broadcast mode.

    Returns:
        a (batch, K) node.
    """
    if head.straight_through == "softmax":
        logits, _ = head.encode(x)
        q = ad.softmax(logits)
        return ad.add(msg.onehot, q - ad.stopGradient(q))
    if logq is None:
        logq = ownLogProb(head, x, msg.index)
    delta = logq - ad.stopGradient(logq)
    return ad.add(msg.onehot, ad.reshape(delta, (len(msg), 1)))


def decoderInput(
    head: CpcHead, joint: JointMessage, own: ad.DiffNode
) -> ad.DiffNode:
    """Builds the decoder input with this agent's block replaced by `own`.

    Every other agent's block enters as a constant.
    """
    if head.decoder_scope == "own":
        return own
    if joint.vector.shape[1] != head.n_agents * head.K:
        raise ContractError(
            f"Joint message width {joint.vector.shape[1]} != {head.n_agents * head.K}"
        )
    block = joint.block(head.agent_index)
    pieces = list()
    if block.start > 0:
        pieces.append(joint.vector[:, : block.start])
    pieces.append(own)
    if block.stop < joint.vector.shape[1]:
        pieces.append(joint.vector[:, block.stop :])
    return ad.concat(pieces, axis=1)


def klEstimate(q_prob, p_prob):
    """Sampled KL estimate (kappa - 1) - log(kappa) with kappa = q / p.

    Args:
        q_prob: Q(m_i | x_i) of the sampled message, in (0, 1].
        p_prob: P(m_i) of the sampled message, in (0, 1].

    Returns:
        the non-negative estimate, a float or array matching the inputs.
    """
    q_prob = np.asarray(q_prob, dtype=np.float64)
    p_prob = np.asarray(p_prob, dtype=np.float64)
    for name, value in (("q_prob", q_prob), ("p_prob", p_prob)):
        if np.any(value <= 0) or np.any(value > 1):
            raise ContractError(f"{name} must lie in (0, 1]")
    kappa = q_prob / p_prob
    estimate = (kappa - 1.0) - np.log(kappa)
    return float(estimate) if estimate.ndim == 0 else estimate


def klEstimateNode(logq: ad.DiffNode, logp: np.ndarray) -> ad.DiffNode:
    """Differentiable klEstimate from log-probabilities."""
    log_kappa = logq - logp
    return ad.exp(log_kappa) - 1.0 - log_kappa


def exactKL(q_probs: np.ndarray, p_probs: np.ndarray) -> np.ndarray:
    """Textbook KL(Q || P) over the last axis, reported as a diagnostic."""
    q_probs = np.asarray(q_probs, dtype=np.float64)
    p_probs = np.asarray(p_probs, dtype=np.float64)
    terms = np.where(q_probs > 0, q_probs * np.log(q_probs / p_probs), 0.0)
    return terms.sum(axis=-1)


def bernoulliLogLikelihood(logits: ad.DiffNode, x: np.ndarray) -> ad.DiffNode:
    """Independent-Bernoulli log P(x | logits), summed per row."""
    terms = x * ad.logSigmoid(logits) + (1.0 - x) * ad.logSigmoid(-logits)
    return ad.total(terms, axis=1)


def cpcTerms(
    head: CpcHead,
    x: np.ndarray,
    decoder_input: ad.DiffNode,
    msg: Message,
    logq: ad.DiffNode = None,
) -> dict:
    """Per-sample reconstruction and KL nodes of the CPC objective.

    Returns:
        a dict of (batch,) nodes: "reconstruction", "kl" and "objective".
    """
    x = _batch(x, head.obs_dim)
    if logq is None:
        logq = ownLogProb(head, x, msg.index)
    logits = head.decoder.forward(decoder_input)
    if logits.shape != x.shape:
        raise ContractError(f"Decoder output {logits.shape} != observations {x.shape}")
    reconstruction = bernoulliLogLikelihood(logits, x)
    kl = klEstimateNode(logq, head.prior.logprob(msg.index))
    objective = reconstruction - head.beta * kl
    return {"reconstruction": reconstruction, "kl": kl, "objective": objective}


def cpcLoss(
    head: CpcHead,
    x: np.ndarray,
    decoder_input: ad.DiffNode,
    msg: Message,
    logq: ad.DiffNode = None,
) -> ad.DiffNode:
    """Batch-mean J_CPC = log P(x_i | m) - beta * KLestimate, to maximize.

    Args:
        head: agent i's CPC head.
        x: agent i's observations.
        decoder_input: the joint message with agent i's block replaced by its
            straight-through node (see decoderInput).
        msg: agent i's sampled messages.
        logq: a precomputed ownLogProb node, reused when given.

    Returns:
        a scalar node.
    """
    return ad.mean(cpcTerms(head, x, decoder_input, msg, logq)["objective"])


def cpcObjective(
    head: CpcHead, x: np.ndarray, joint: JointMessage
) -> Tuple[ad.DiffNode, dict]:
    """Builds agent i's full CPC graph from stored observations and messages.

    Only agent i's own message is a function of its parameters; all other blocks
    of the joint message are detached.

    Args:
        head: agent i's CPC head.
        x: (batch, obs_dim) observations of agent i.
        joint: the joint messages exchanged at sampling time.

    Returns:
        objective: the scalar batch-mean J_CPC node.
        diagnostics: batch means of "reconstruction", "kl" and "exact_kl".
    """
    x = _batch(x, head.obs_dim)
    msg = joint.messages[head.agent_index]
    logq = ownLogProb(head, x, msg.index)
    own = straightThrough(msg, head, x, logq=logq)
    terms = cpcTerms(head, x, decoderInput(head, joint, own), msg, logq=logq)
    objective = ad.mean(terms["objective"])
    diagnostics = {
        "reconstruction": float(terms["reconstruction"].value.mean()),
        "kl": float(terms["kl"].value.mean()),
        "exact_kl": float(exactKL(head.probs(x), head.prior.probs()).mean()),
    }
    return objective, diagnostics
