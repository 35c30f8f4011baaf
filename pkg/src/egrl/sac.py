"""Soft actor-critic for the multi-discrete mapping action space.

Critics are twin graph networks that read node features concatenated with a
6-wide action encoding per node and mean-pool to one Q value. They learn from
clipped-noise one-hot versions of stored actions. The actor is updated with
the expected-value form for discrete actions: its probability tensor is fed
to the critics directly, so the gradient is exact.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import gnn
from .gnn import ACTION_DIM, GnnConfig, GnnParams, GraphInput, GraphNet
from .hwsim import MappingDecision
from .replay import Transition
from .workload import N_FEATURES

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SacConfig:
    critic_lr: float = 1e-3
    actor_lr: float = 1e-3
    alpha: float = 0.05
    gamma: float = 0.99
    tau: float = 1e-3
    batch_size: int = 24
    reward_scale: float = 5.0
    noise_sigma: float = 0.1
    noise_clip: float = 0.3


class Adam:
    def __init__(self, size: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray, maximize: bool = False) -> np.ndarray:
        if maximize:
            grad = -grad
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def critic_net(config: GnnConfig) -> GraphNet:
    key = ("critic", config)
    if key not in gnn._NETS:
        gnn._NETS[key] = GraphNet(config, N_FEATURES + ACTION_DIM, 1, pooled=True)
    return gnn._NETS[key]


@dataclass
class Critics:
    """Two online Q networks and their target copies, as flat vectors."""

    config: GnnConfig
    q: list[np.ndarray]
    target: list[np.ndarray]

    @classmethod
    def init(cls, config: GnnConfig, rng: np.random.Generator) -> "Critics":
        net = critic_net(config)
        q = [net.init(rng), net.init(rng)]
        return cls(config, q, [v.copy() for v in q])

    @property
    def net(self) -> GraphNet:
        return critic_net(self.config)

    def copy(self) -> "Critics":
        return Critics(self.config, [v.copy() for v in self.q], [v.copy() for v in self.target])


def one_hot(a: MappingDecision) -> np.ndarray:
    out = np.zeros((a.n_nodes, 2, 3))
    np.put_along_axis(out, a.levels[..., None], 1.0, axis=-1)
    return out


def smooth_action(a: MappingDecision, sigma: float, c: float, rng: np.random.Generator) -> np.ndarray:
    """One-hot action plus Gaussian noise clipped to ``[-c, c]``, shape ``(N, 2, 3)``."""
    if c <= 0:
        raise ValueError("clip bound c must be positive")
    hot = one_hot(a)
    if sigma == 0:
        return hot
    return hot + np.clip(rng.normal(0.0, sigma, size=hot.shape), -c, c)


def q_values(net: GraphNet, theta: np.ndarray, gi: GraphInput, actions: np.ndarray):
    """Q for a batch of ``(B, N, 2, 3)`` action encodings on one graph."""
    B = actions.shape[0]
    x = np.concatenate([np.broadcast_to(gi.x, (B,) + gi.x.shape), actions.reshape(B, gi.n_nodes, ACTION_DIM)], axis=-1)
    out, cache = net.forward(theta, gi, x)
    return out[:, 0], cache


def bellman_target(reward, done, next_q1, next_q2, next_entropy, alpha, gamma, reward_scale):
    """``scale * r`` plus, for non-terminal steps, ``gamma * min(Q1', Q2') + alpha * H``."""
    reward = np.asarray(reward, dtype=np.float64)
    live = 1.0 - np.asarray(done, dtype=np.float64)
    boot = gamma * np.minimum(next_q1, next_q2) + alpha * np.asarray(next_entropy, dtype=np.float64)
    return reward_scale * reward + live * boot


def critic_target(
    transitions: list[Transition],
    policy: GnnParams,
    critics: Critics,
    inputs: dict[str, GraphInput],
    cfg: SacConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Bellman targets ``y`` for a batch; the next state is the same static graph."""
    r = np.array([t.reward for t in transitions])
    done = np.array([t.done for t in transitions], dtype=bool)
    nq1 = np.zeros(len(transitions))
    nq2 = np.zeros(len(transitions))
    ent = np.zeros(len(transitions))
    for i in np.flatnonzero(~done):
        gi = inputs[transitions[i].workload_id]
        out = gnn.forward(policy, gi)
        a_next = gnn.sample_action(out, "stochastic", rng)
        enc = one_hot(a_next)[None]
        nq1[i] = q_values(critics.net, critics.target[0], gi, enc)[0][0]
        nq2[i] = q_values(critics.net, critics.target[1], gi, enc)[0][0]
        ent[i] = gnn.log_prob_and_entropy(out, a_next)[1]
    return bellman_target(r, done, nq1, nq2, ent, cfg.alpha, cfg.gamma, cfg.reward_scale)


def _groups(transitions: list[Transition]) -> dict[str, list[int]]:
    out: dict[str, list[int]] = {}
    for i, t in enumerate(transitions):
        out.setdefault(t.workload_id, []).append(i)
    return out


def soft_update(target: np.ndarray, online: np.ndarray, tau: float) -> np.ndarray:
    if target.shape != online.shape:
        raise ValueError(f"layout mismatch: {target.shape} vs {online.shape}")
    return tau * online + (1.0 - tau) * target


@dataclass
class SacLearner:
    """Policy, twin critics, optimizer state and the graphs it can see."""

    policy: GnnParams
    critics: Critics
    cfg: SacConfig
    inputs: dict[str, GraphInput]
    rng: np.random.Generator
    critic_opt: list[Adam] = field(init=False)
    actor_opt: Adam = field(init=False)
    n_updates: int = 0

    def __post_init__(self):
        n = self.critics.net.n_params
        self.critic_opt = [Adam(n, self.cfg.critic_lr), Adam(n, self.cfg.critic_lr)]
        self.actor_opt = Adam(self.policy.vector.size, self.cfg.actor_lr)

    @classmethod
    def create(cls, config: GnnConfig, cfg: SacConfig, inputs: dict[str, GraphInput], rng: np.random.Generator):
        policy = gnn.init_params(config, rng)
        critics = Critics.init(config, rng)
        return cls(policy=policy, critics=critics, cfg=cfg, inputs=inputs, rng=rng)

    def update_critics(self, batch: list[Transition]) -> float:
        """One Adam step on the mean squared Bellman error of both heads; returns the summed loss."""
        if not batch:
            raise ValueError("empty batch")
        y = critic_target(batch, self.policy, self.critics, self.inputs, self.cfg, self.rng)
        net = self.critics.net
        grads = [np.zeros(net.n_params), np.zeros(net.n_params)]
        loss = 0.0
        B = len(batch)
        for wid, idx in _groups(batch).items():
            gi = self.inputs[wid]
            acts = np.stack([smooth_action(batch[i].action, self.cfg.noise_sigma, self.cfg.noise_clip, self.rng) for i in idx])
            for j in range(2):
                q, cache = q_values(net, self.critics.q[j], gi, acts)
                err = q - y[idx]
                loss += float((err**2).sum()) / B
                g, _ = net.backward(self.critics.q[j], gi, cache, (2.0 * err / B)[:, None])
                grads[j] += g
        if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
            raise FloatingPointError(f"non-finite critic loss {loss!r} at update {self.n_updates}")
        for j in range(2):
            self.critics.q[j] = self.critic_opt[j].step(self.critics.q[j], grads[j])
        return loss

    def actor_objective(self, batch: list[Transition]) -> tuple[float, np.ndarray]:
        """Mean over the batch of ``min_j Q_j(s, pi(s)) + alpha * H(pi(s))`` and its gradient."""
        if not batch:
            raise ValueError("empty batch")
        net = self.critics.net
        total = 0.0
        grad = np.zeros_like(self.policy.vector)
        B = len(batch)
        for wid, idx in _groups(batch).items():
            gi = self.inputs[wid]
            out = gnn.forward(self.policy, gi)
            probs = out.probs
            qs = [q_values(net, self.critics.q[j], gi, probs[None]) for j in range(2)]
            j = 0 if qs[0][0][0] <= qs[1][0][0] else 1
            q, cache = qs[j]
            _, ent = gnn.log_prob_and_entropy(out, gnn.sample_action(out, "greedy"))
            weight = len(idx) / B
            total += weight * (float(q[0]) + self.cfg.alpha * ent)
            _, g_x = net.backward(self.critics.q[j], gi, cache, np.ones((1, 1)))
            g_probs = g_x[0, :, N_FEATURES:].reshape(probs.shape) + self.cfg.alpha * gnn.entropy_grad(probs)
            g_logits = gnn.softmax_backward(probs, g_probs)
            grad += weight * gnn.backward(self.policy, gi, g_logits, out)
        return total, grad

    def update_actor(self, batch: list[Transition]) -> float:
        """One Adam ascent step on the actor objective; returns the loss (its negative)."""
        obj, grad = self.actor_objective(batch)
        if not np.isfinite(obj) or not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite actor objective {obj!r} at update {self.n_updates}")
        self.policy = GnnParams(self.policy.config, self.actor_opt.step(self.policy.vector, grad, maximize=True))
        return -obj

    def update_targets(self) -> None:
        for j in range(2):
            self.critics.target[j] = soft_update(self.critics.target[j], self.critics.q[j], self.cfg.tau)

    def step(self, batch: list[Transition]) -> tuple[float, float]:
        closs = self.update_critics(batch)
        aloss = self.update_actor(batch)
        self.update_targets()
        self.n_updates += 1
        return closs, aloss
