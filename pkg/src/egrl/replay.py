"""Shared cyclic replay buffer."""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass

import numpy as np

from .hwsim import MappingDecision

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Transition:
    """One 1-step episode: the workload is the state, the mapping the action."""

    workload_id: str
    action: MappingDecision
    reward: float
    done: bool = True

    def to_record(self) -> dict:
        return {
            "workload_id": self.workload_id,
            "action": self.action.flat().tolist(),
            "reward": self.reward,
            "done": self.done,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Transition":
        return cls(rec["workload_id"], MappingDecision(rec["action"]), float(rec["reward"]), bool(rec["done"]))


class ReplayBuffer:
    """Fixed-capacity FIFO store; the oldest transition is overwritten first.

    ``push`` is safe to call from several evaluator threads; sampling is
    meant for the single learner between evaluation waves.
    """

    def __init__(self, capacity: int = 100_000):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        self._data: list[Transition] = []
        self._next = 0
        self.n_pushed = 0
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._data)

    def push(self, t: Transition) -> None:
        with self._lock:
            if len(self._data) < self.capacity:
                self._data.append(t)
            else:
                self._data[self._next] = t
            self._next = (self._next + 1) % self.capacity
            self.n_pushed += 1

    def contents(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        if len(self._data) < self.capacity:
            return list(self._data)
        return self._data[self._next :] + self._data[: self._next]

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        """Uniform sample without replacement."""
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if batch_size > len(self._data):
            raise ValueError(f"cannot sample {batch_size} transitions from a buffer holding {len(self._data)}")
        idx = rng.choice(len(self._data), size=batch_size, replace=False)
        return [self._data[i] for i in idx]

    def dump(self, path) -> None:
        doc = {
            "schema": SCHEMA_VERSION,
            "capacity": self.capacity,
            "n_pushed": self.n_pushed,
            "transitions": [t.to_record() for t in self.contents()],
        }
        with open(path, "w") as fh:
            json.dump(doc, fh)

    @classmethod
    def restore(cls, path) -> "ReplayBuffer":
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("schema") != SCHEMA_VERSION:
            raise ValueError(f"unsupported replay-buffer schema {doc.get('schema')!r}")
        buf = cls(doc["capacity"])
        for rec in doc["transitions"]:
            buf.push(Transition.from_record(rec))
        buf.n_pushed = int(doc["n_pushed"])
        return buf
