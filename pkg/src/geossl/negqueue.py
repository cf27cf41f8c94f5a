"""Fixed-capacity FIFO store of unit-norm key embeddings.

Backed by a preallocated ring buffer. The trainer is the single owner and
mutator; `snapshot` hands out an oldest-first copy that later enqueues can
never alter.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, ValidationError

_UNIT_TOL = 1e-6


class NegativeQueue:
    def __init__(self, capacity: int, dim: int):
        if capacity < 1:
            raise ConfigurationError("queue capacity must be >= 1")
        if dim < 1:
            raise ConfigurationError("queue dim must be >= 1")
        self._storage = np.zeros((capacity, dim), dtype=np.float64)
        self._capacity = int(capacity)
        self._dim = int(dim)
        self._head = 0   # index of the oldest entry
        self._fill = 0

    @property
    def capacity(self) -> int:
        return self._capacity

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def fill(self) -> int:
        return self._fill

    def enqueue_batch(self, keys: np.ndarray) -> None:
        """Append rows in order; evict oldest entries beyond capacity."""
        keys = np.asarray(keys, dtype=np.float64)
        if keys.ndim != 2 or keys.shape[1] != self._dim:
            raise ValidationError(
                f"expected keys of shape (b, {self._dim}), got {keys.shape}"
            )
        b = keys.shape[0]
        if b == 0:
            return
        if b > self._capacity:
            raise ConfigurationError(
                f"batch of {b} keys exceeds queue capacity {self._capacity}"
            )
        norms = np.linalg.norm(keys, axis=1)
        if np.any(np.abs(norms - 1.0) > _UNIT_TOL):
            worst = float(np.max(np.abs(norms - 1.0)))
            raise ValidationError(
                f"queue keys must be unit-norm within {_UNIT_TOL}; worst deviation {worst:.3e}"
            )
        start = (self._head + self._fill) % self._capacity
        idx = (start + np.arange(b)) % self._capacity
        self._storage[idx] = keys
        evicted = max(0, self._fill + b - self._capacity)
        self._fill = min(self._fill + b, self._capacity)
        self._head = (self._head + evicted) % self._capacity

    def snapshot(self) -> np.ndarray:
        """Copy of current entries, oldest first, shape (fill, dim)."""
        if self._fill == 0:
            raise ValidationError(
                "negative queue is empty; enqueue at least one key batch before "
                "taking a snapshot (pretraining warms the queue on its first iteration)"
            )
        idx = (self._head + np.arange(self._fill)) % self._capacity
        return self._storage[idx].copy()

    @classmethod
    def from_entries(cls, entries: np.ndarray, capacity: int) -> "NegativeQueue":
        """Rebuild a queue from an oldest-first snapshot (checkpoint restore)."""
        entries = np.asarray(entries, dtype=np.float64)
        if entries.ndim != 2:
            raise ValidationError(f"entries must be 2-D, got shape {entries.shape}")
        q = cls(capacity, entries.shape[1])
        if entries.shape[0] > capacity:
            raise ConfigurationError("more entries than capacity")
        if entries.shape[0]:
            q._storage[: entries.shape[0]] = entries
            q._fill = entries.shape[0]
        return q
