"""Ring-buffer experience replay with seeded uniform sampling."""

from __future__ import annotations

import numpy as np

from ..errors import InsufficientSamples
from .env import Transition


class ReplayBuffer:
    def __init__(self, capacity: int = 10_000,
                 rng: np.random.Generator | None = None):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._store: list[Transition] = []
        self._cursor = 0

    def __len__(self) -> int:
        return len(self._store)

    def push(self, transition: Transition) -> None:
        if len(self._store) < self.capacity:
            self._store.append(transition)
        else:
            # Full: overwrite the oldest slot.
            self._store[self._cursor] = transition
        self._cursor = (self._cursor + 1) % self.capacity

    def sample(self, batch_size: int) -> list[Transition]:
        """Uniform draw without replacement within the batch."""
        if batch_size > len(self._store):
            raise InsufficientSamples(
                f"requested {batch_size} of {len(self._store)} stored")
        idx = self.rng.choice(len(self._store), size=batch_size, replace=False)
        return [self._store[int(i)] for i in idx]
