from __future__ import annotations

from typing import Any

import numpy as np


class EmptyBufferError(RuntimeError):
    pass


class ReplayBuffer:
    """Fixed-capacity FIFO store with uniform sampling (with replacement)."""

    def __init__(self, capacity: int = 100_000):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.items: list[Any] = []
        self.cursor = 0

    def __len__(self):
        return len(self.items)

    def push(self, item: Any) -> None:
        if len(self.items) < self.capacity:
            self.items.append(item)
        else:
            self.items[self.cursor] = item
        self.cursor = (self.cursor + 1) % self.capacity

    def sample(self, n: int, rng: np.random.Generator | int) -> list[Any]:
        if not self.items:
            raise EmptyBufferError("cannot sample from an empty buffer")
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        idx = rng.integers(0, len(self.items), size=n)
        return [self.items[i] for i in idx]


def buffer_push(buffer: ReplayBuffer, t: Any) -> None:
    buffer.push(t)


def buffer_sample(buffer: ReplayBuffer, n: int, seed) -> list[Any]:
    return buffer.sample(n, seed)
