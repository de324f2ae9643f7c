"""Pieces shared by the three agents: batches, configs, and the act/learn contract."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import NamedTuple

import numpy as np

from ..env import ActionSpaceSpec
from ..nn import Mlp, ShapeMismatchError, load_checkpoints, save_checkpoints
from .buffer import ReplayBuffer


class NonFiniteLossError(FloatingPointError):
    pass


class Batch(NamedTuple):
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s2: np.ndarray
    done: np.ndarray

    @classmethod
    def stack(cls, items) -> "Batch":
        s, a, r, s2, d = zip(*items)
        return cls(np.array(s, dtype=float), np.array(a), np.array(r, dtype=float),
                   np.array(s2, dtype=float), np.array(d, dtype=float))


@dataclass
class AgentConfig:
    gamma: float = 0.99
    batch_size: int = 64
    hidden: tuple[int, ...] = (64, 64)
    tau: float = 0.005
    # rewards are multiplied by this before entering any regression target
    reward_scale: float = 0.01
    use_target: bool = True
    buffer_capacity: int = 100_000
    warmup: int = 500

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        self.hidden = tuple(int(h) for h in self.hidden)

    def items(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def check_finite(value: float, what: str) -> float:
    if not np.isfinite(value):
        raise NonFiniteLossError(f"non-finite {what}: {value}")
    return value


class Agent:
    """Contract used by the harness.

    ``act`` returns an action in the environment's encoding, ``remember`` stores a
    transition, ``update`` performs one gradient step once warm, and ``end_episode``
    advances per-episode schedules (epsilon, noise).
    """
    algorithm = "base"

    def __init__(self, obs_dim: int, space: ActionSpaceSpec, config: AgentConfig, seed: int):
        self.obs_dim = obs_dim
        self.space = space
        self.config = config
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.buffer = ReplayBuffer(config.buffer_capacity)
        self.episodes = 0
        self.updates = 0

    # subclasses implement these
    def act(self, obs: np.ndarray, explore: bool):
        raise NotImplementedError

    def encode_action(self, action) -> np.ndarray | int:
        raise NotImplementedError

    def learn(self, batch: Batch) -> dict:
        raise NotImplementedError

    def networks(self) -> dict[str, Mlp]:
        raise NotImplementedError

    def schedule_state(self) -> dict:
        return {}

    def remember(self, s, action, r: float, s2, done: bool) -> None:
        self.buffer.push((np.asarray(s, dtype=float), self.encode_action(action), float(r),
                          np.asarray(s2, dtype=float), bool(done)))

    def ready(self) -> bool:
        return len(self.buffer) >= max(self.config.warmup, 1)

    def update(self) -> dict | None:
        if not self.ready():
            return None
        batch = Batch.stack(self.buffer.sample(self.config.batch_size, self.rng))
        self.updates += 1
        return self.learn(batch)

    def end_episode(self) -> None:
        self.episodes += 1

    def save(self, path: str | Path) -> None:
        save_checkpoints(self.networks(), path)

    def load(self, path: str | Path) -> None:
        stored = load_checkpoints(path)
        for name, net in self.networks().items():
            if name not in stored:
                raise ValueError(f"checkpoint lacks network {name!r}")
            if stored[name].layer_sizes != net.layer_sizes:
                raise ShapeMismatchError(
                    f"{name}: checkpoint {stored[name].layer_sizes} != agent {net.layer_sizes}")
            net.set_params(stored[name].params)


def mlp(sizes, output_activation="linear", seed=None, final_scale=None) -> Mlp:
    acts = ["relu"] * (len(sizes) - 2) + [output_activation]
    return Mlp(sizes, acts, seed=seed, final_scale=final_scale)


class BoxMap:
    """Affine map between [-1, 1]^k and the action space's vector bounds."""

    def __init__(self, space: ActionSpaceSpec):
        self.low, self.high = space.vector_bounds()
        self.mid = 0.5 * (self.low + self.high)
        self.half = 0.5 * (self.high - self.low)

    def to_env(self, a_norm: np.ndarray) -> np.ndarray:
        return np.clip(self.mid + self.half * a_norm, self.low, self.high)

    def to_norm(self, a_env) -> np.ndarray:
        a_env = np.asarray(a_env, dtype=float)
        safe = np.where(self.half > 0, self.half, 1.0)
        return np.clip((a_env - self.mid) / safe, -1.0, 1.0)
