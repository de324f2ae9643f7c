"""Deep Q-network over a discrete setpoint grid."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..env import ActionSpaceSpec
from ..nn import Optimizer
from .base import Agent, AgentConfig, Batch, check_finite, mlp


@dataclass
class DqnConfig(AgentConfig):
    lr: float = 1e-3
    optimizer: str = "adam"
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_episodes: int = 1000
    # "soft" blends with tau every update; "hard" copies every target_period updates
    target_update: str = "hard"
    target_period: int = 500

    def __post_init__(self):
        super().__post_init__()
        for e in (self.epsilon_start, self.epsilon_end):
            if not 0.0 <= e <= 1.0:
                raise ValueError("epsilon must lie in [0, 1]")
        if self.target_update not in ("soft", "hard"):
            raise ValueError("target_update must be 'soft' or 'hard'")


class DqnAgent(Agent):
    algorithm = "dqn"

    def __init__(self, obs_dim: int, space: ActionSpaceSpec, config: DqnConfig | None = None,
                 seed: int = 0):
        config = config or DqnConfig()
        super().__init__(obs_dim, space, config, seed)
        if not space.is_discrete:
            raise ValueError("DQN needs a discrete action space")
        self.n_actions = space.cardinality
        self.q = mlp([obs_dim, *config.hidden, self.n_actions], seed=self.rng)
        self.q_target = self.q.copy()
        self.opt = Optimizer(config.optimizer, config.lr)

    @property
    def epsilon(self) -> float:
        c = self.config
        if self.episodes >= c.epsilon_decay_episodes:
            return c.epsilon_end
        frac = self.episodes / c.epsilon_decay_episodes
        return c.epsilon_start + frac * (c.epsilon_end - c.epsilon_start)

    def q_values(self, obs: np.ndarray) -> np.ndarray:
        return self.q.forward(obs)

    def act(self, obs: np.ndarray, explore: bool = False) -> int:
        if explore and self.rng.random() < self.epsilon:
            return int(self.rng.integers(self.n_actions))
        # argmax returns the lowest index among ties
        return int(np.argmax(self.q.forward(obs)))

    def encode_action(self, action) -> int:
        return int(action)

    def td_targets(self, batch: Batch) -> np.ndarray:
        c = self.config
        net = self.q_target if c.use_target else self.q
        next_max = net.forward(batch.s2).max(axis=1)
        return c.reward_scale * batch.r + c.gamma * (1.0 - batch.done) * next_max

    def learn(self, batch: Batch) -> dict:
        y = self.td_targets(batch)
        q = self.q.forward(batch.s)
        rows = np.arange(len(y))
        a = batch.a.astype(int)
        err = q[rows, a] - y
        loss = check_finite(float(0.5 * np.mean(err ** 2)), "TD loss")
        upstream = np.zeros_like(q)
        upstream[rows, a] = err / len(y)
        grad = self.q.backward(batch.s, upstream)
        self.opt.step(self.q.params, grad)
        self._sync_target()
        return {"td_loss": loss}

    def _sync_target(self):
        c = self.config
        if c.target_update == "soft":
            self.q_target.params *= 1.0 - c.tau
            self.q_target.params += c.tau * self.q.params
        elif self.updates % c.target_period == 0:
            self.q_target.params[:] = self.q.params

    def networks(self):
        return {"q": self.q, "q_target": self.q_target}

    def schedule_state(self) -> dict:
        return {"epsilon": self.epsilon, "episodes": self.episodes}


def dqn_update(agent: DqnAgent, batch: Batch) -> float:
    agent.updates += 1
    return agent.learn(batch)["td_loss"]


def dqn_act(agent: DqnAgent, obs: np.ndarray, explore: bool) -> int:
    return agent.act(obs, explore)
