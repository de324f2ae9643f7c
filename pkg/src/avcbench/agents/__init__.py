from .base import Agent, AgentConfig, Batch, NonFiniteLossError
from .buffer import EmptyBufferError, ReplayBuffer, buffer_push, buffer_sample
from .ddpg import DdpgAgent, DdpgConfig, ddpg_act, ddpg_update
from .dqn import DqnAgent, DqnConfig, dqn_act, dqn_update
from .sac import SacAgent, SacConfig, gaussian_entropy, sac_act, sac_update

AGENTS = {"dqn": (DqnAgent, DqnConfig), "ddpg": (DdpgAgent, DdpgConfig),
          "sac": (SacAgent, SacConfig)}


def make_agent(algorithm: str, obs_dim: int, space, config=None, seed: int = 0) -> Agent:
    cls, cfg_cls = AGENTS[algorithm]
    return cls(obs_dim, space, config or cfg_cls(), seed=seed)


__all__ = [
    "AGENTS", "Agent", "AgentConfig", "Batch", "DdpgAgent", "DdpgConfig", "DqnAgent",
    "DqnConfig", "EmptyBufferError", "NonFiniteLossError", "ReplayBuffer", "SacAgent",
    "SacConfig", "buffer_push", "buffer_sample", "ddpg_act", "ddpg_update", "dqn_act",
    "dqn_update", "gaussian_entropy", "make_agent", "sac_act", "sac_update",
]
