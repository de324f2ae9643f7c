"""Soft actor-critic: tanh-squashed Gaussian policy, twin critics, fixed temperature."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..env import ActionSpaceSpec
from ..nn import Optimizer, soft_blend
from .base import Agent, AgentConfig, Batch, BoxMap, check_finite, mlp

LOG_STD_MIN = -5.0  # sigma floor exp(-5) ~ 6.7e-3 guards against variance collapse
LOG_STD_MAX = 2.0
HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)
LOG2 = np.log(2.0)


def gaussian_entropy(log_std: np.ndarray) -> float:
    """Differential entropy of a diagonal Gaussian: sum(0.5 * ln(2 pi e) + log_std)."""
    log_std = np.asarray(log_std, dtype=float)
    return float(np.sum(0.5 * np.log(2.0 * np.pi * np.e) + log_std))


def log1m_tanh2(u: np.ndarray) -> np.ndarray:
    """log(1 - tanh(u)^2) without cancellation for large |u|."""
    return 2.0 * (LOG2 - u - np.logaddexp(0.0, -2.0 * u))


@dataclass
class SacConfig(AgentConfig):
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    alpha: float = 0.2

    def __post_init__(self):
        super().__post_init__()
        if self.alpha < 0:
            raise ValueError("entropy coefficient must be >= 0")


class SacAgent(Agent):
    algorithm = "sac"

    def __init__(self, obs_dim: int, space: ActionSpaceSpec, config: SacConfig | None = None,
                 seed: int = 0):
        config = config or SacConfig()
        super().__init__(obs_dim, space, config, seed)
        if space.is_discrete:
            raise ValueError("SAC needs a continuous-valued action space")
        self.box = BoxMap(space)
        k = self.k = space.dim
        self.actor = mlp([obs_dim, *config.hidden, 2 * k], seed=self.rng, final_scale=3e-3)
        self.critics = [mlp([obs_dim + k, *config.hidden, 1], seed=self.rng, final_scale=3e-3)
                        for _ in range(2)]
        self.critic_targets = [q.copy() for q in self.critics]
        self.actor_opt = Optimizer("adam", config.actor_lr)
        self.critic_opts = [Optimizer("adam", config.critic_lr) for _ in range(2)]

    def _heads(self, s):
        out = self.actor.forward(s)
        mu, log_std = out[..., :self.k], out[..., self.k:]
        return mu, log_std

    def sample(self, s: np.ndarray, noise: np.ndarray | None = None):
        """Reparameterized draw: returns (a in [-1,1]^k, log-density, parts for backprop)."""
        mu, log_std = self._heads(s)
        ls = np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)
        sigma = np.exp(ls)
        if noise is None:
            noise = self.rng.standard_normal(mu.shape)
        u = mu + sigma * noise
        a = np.tanh(u)
        logp = np.sum(-0.5 * noise ** 2 - ls - HALF_LOG_2PI - log1m_tanh2(u), axis=-1)
        return a, logp, (log_std, sigma, noise)

    def act(self, obs: np.ndarray, explore: bool = False) -> np.ndarray:
        if explore:
            a, _, _ = self.sample(obs)
        else:
            mu, _ = self._heads(obs)
            a = np.tanh(mu)
        return self.box.to_env(a)

    def encode_action(self, action) -> np.ndarray:
        return self.box.to_norm(action)

    def soft_targets(self, batch: Batch, noise: np.ndarray | None = None) -> np.ndarray:
        """Soft backup r + gamma * (min_i Q_i(s', a') - alpha * log pi(a'|s')), a' ~ pi(s')."""
        c = self.config
        critics = self.critic_targets if c.use_target else self.critics
        a2, logp2, _ = self.sample(batch.s2, noise)
        x2 = np.hstack([batch.s2, a2])
        q_min = np.minimum(critics[0].forward(x2)[:, 0], critics[1].forward(x2)[:, 0])
        soft_value = q_min - c.alpha * logp2
        return c.reward_scale * batch.r + c.gamma * (1.0 - batch.done) * soft_value

    def actor_gradient(self, s: np.ndarray, noise: np.ndarray | None = None):
        """Gradient of mean(alpha * log pi(a|s) - min_i Q_i(s, a)) through the
        reparameterized sample; returns (grad, objective, entropy estimate)."""
        c = self.config
        n = len(s)
        a, logp, (log_std, sigma, eps) = self.sample(s, noise)
        x = np.hstack([s, a])
        q_vals = [q.forward(x)[:, 0] for q in self.critics]
        pick_first = q_vals[0] <= q_vals[1]
        q_min = np.where(pick_first, q_vals[0], q_vals[1])
        dq_da = np.zeros_like(a)
        for i, q in enumerate(self.critics):
            rows = pick_first if i == 0 else ~pick_first
            if rows.any():
                up = np.zeros((n, 1))
                up[rows, 0] = 1.0
                _, dx = q.backward(x, up, wrt_input=True)
                dq_da += dx[:, self.obs_dim:]
        # d log pi / du from the squash correction is 2 * tanh(u) = 2a
        d_u = (c.alpha * 2.0 * a - dq_da * (1.0 - a * a)) / n
        d_mu = d_u
        inside = (log_std > LOG_STD_MIN) & (log_std < LOG_STD_MAX)
        d_ls = (d_u * sigma * eps - c.alpha / n) * inside
        grad = self.actor.backward(s, np.hstack([d_mu, d_ls]))
        objective = float(np.mean(q_min - c.alpha * logp))
        return grad, objective, float(-np.mean(logp))

    def learn(self, batch: Batch) -> dict:
        c = self.config
        y = self.soft_targets(batch)
        x = np.hstack([batch.s, batch.a])
        losses = []
        for q, opt in zip(self.critics, self.critic_opts):
            err = q.forward(x)[:, 0] - y
            losses.append(check_finite(float(0.5 * np.mean(err ** 2)), "critic loss"))
            opt.step(q.params, q.backward(x, (err / len(y))[:, None]))

        grad, objective, entropy = self.actor_gradient(batch.s)
        check_finite(objective, "actor objective")
        self.actor_opt.step(self.actor.params, grad)
        if c.use_target:
            for tgt, q in zip(self.critic_targets, self.critics):
                soft_blend(tgt, q, c.tau)
        return {"critic_loss_1": losses[0], "critic_loss_2": losses[1],
                "actor_objective": objective, "entropy": entropy}

    def networks(self):
        return {"actor": self.actor, "critic_1": self.critics[0], "critic_2": self.critics[1],
                "critic_1_target": self.critic_targets[0],
                "critic_2_target": self.critic_targets[1]}

    def schedule_state(self) -> dict:
        return {"alpha": self.config.alpha, "episodes": self.episodes}


def sac_update(agent: SacAgent, batch: Batch):
    agent.updates += 1
    out = agent.learn(batch)
    return (out["critic_loss_1"], out["critic_loss_2"]), out["actor_objective"], out["entropy"]


def sac_act(agent: SacAgent, obs: np.ndarray, explore: bool) -> np.ndarray:
    return agent.act(obs, explore)
