"""Deterministic policy gradient actor-critic with decaying exploration noise."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..env import ActionSpaceSpec
from ..nn import Optimizer, soft_blend
from .base import Agent, AgentConfig, Batch, BoxMap, check_finite, mlp


@dataclass
class DdpgConfig(AgentConfig):
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    # exploration scale in normalized action units ([-1, 1] per dimension)
    noise_initial: float = 0.2
    noise_decay: float = 0.998

    def __post_init__(self):
        super().__post_init__()
        if not 0.0 < self.noise_decay < 1.0:
            raise ValueError("noise_decay must lie in (0, 1)")
        if self.noise_initial < 0:
            raise ValueError("noise_initial must be >= 0")


class DdpgAgent(Agent):
    algorithm = "ddpg"

    def __init__(self, obs_dim: int, space: ActionSpaceSpec, config: DdpgConfig | None = None,
                 seed: int = 0):
        config = config or DdpgConfig()
        super().__init__(obs_dim, space, config, seed)
        if space.is_discrete:
            raise ValueError("DDPG needs a continuous-valued action space")
        self.box = BoxMap(space)
        k = space.dim
        self.actor = mlp([obs_dim, *config.hidden, k], "tanh", seed=self.rng, final_scale=3e-3)
        self.critic = mlp([obs_dim + k, *config.hidden, 1], seed=self.rng, final_scale=3e-3)
        self.actor_target = self.actor.copy()
        self.critic_target = self.critic.copy()
        self.actor_opt = Optimizer("adam", config.actor_lr)
        self.critic_opt = Optimizer("adam", config.critic_lr)

    @property
    def noise_scale(self) -> float:
        """Exploration scale after ``episodes`` decays: noise_initial * noise_decay**episodes."""
        return self.config.noise_initial * self.config.noise_decay ** self.episodes

    def policy(self, obs: np.ndarray) -> np.ndarray:
        """Normalized deterministic action in [-1, 1]^k."""
        return self.actor.forward(obs)

    def act(self, obs: np.ndarray, explore: bool = False) -> np.ndarray:
        a = self.policy(obs)
        if explore:
            xi = self.noise_scale
            a = a + xi * self.rng.standard_normal(a.shape)
        return self.box.to_env(np.clip(a, -1.0, 1.0))

    def encode_action(self, action) -> np.ndarray:
        return self.box.to_norm(action)

    def critic_targets(self, batch: Batch) -> np.ndarray:
        c = self.config
        actor = self.actor_target if c.use_target else self.actor
        critic = self.critic_target if c.use_target else self.critic
        a2 = actor.forward(batch.s2)
        q2 = critic.forward(np.hstack([batch.s2, a2]))[:, 0]
        return c.reward_scale * batch.r + c.gamma * (1.0 - batch.done) * q2

    def actor_gradient(self, s: np.ndarray) -> tuple[np.ndarray, float]:
        """Gradient of the negated mean critic value at a = mu(s), and that mean value."""
        n = len(s)
        a = self.actor.forward(s)
        x = np.hstack([s, a])
        q = self.critic.forward(x)[:, 0]
        _, dx = self.critic.backward(x, np.full((n, 1), 1.0 / n), wrt_input=True)
        dq_da = dx[:, self.obs_dim:]
        grad = self.actor.backward(s, -dq_da)
        return grad, float(q.mean())

    def learn(self, batch: Batch) -> dict:
        c = self.config
        y = self.critic_targets(batch)
        x = np.hstack([batch.s, batch.a])
        q = self.critic.forward(x)[:, 0]
        err = q - y
        critic_loss = check_finite(float(0.5 * np.mean(err ** 2)), "critic loss")
        grad = self.critic.backward(x, (err / len(y))[:, None])
        self.critic_opt.step(self.critic.params, grad)

        actor_grad, objective = self.actor_gradient(batch.s)
        check_finite(objective, "actor objective")
        self.actor_opt.step(self.actor.params, actor_grad)

        if c.use_target:
            soft_blend(self.critic_target, self.critic, c.tau)
            soft_blend(self.actor_target, self.actor, c.tau)
        return {"critic_loss": critic_loss, "actor_objective": objective}

    def networks(self):
        return {"actor": self.actor, "critic": self.critic,
                "actor_target": self.actor_target, "critic_target": self.critic_target}

    def schedule_state(self) -> dict:
        return {"noise_scale": self.noise_scale, "episodes": self.episodes}


def ddpg_update(agent: DdpgAgent, batch: Batch) -> tuple[float, float]:
    agent.updates += 1
    out = agent.learn(batch)
    return out["critic_loss"], out["actor_objective"]


def ddpg_act(agent: DdpgAgent, obs: np.ndarray, explore: bool) -> np.ndarray:
    return agent.act(obs, explore)
