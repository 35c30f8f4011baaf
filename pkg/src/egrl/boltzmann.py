"""Stateless Boltzmann chromosome policies.

A genome holds unnormalized priors ``(N, 2, 3)`` and a temperature per
node-tensor ``(N, 2)``. Acting never looks at the workload graph: each
node-tensor draws a level from ``softmax(prior / T)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .gnn import PROB_FLOOR, CheckpointError, categorical
from .hwsim import MappingDecision

T_MIN = 1e-3
T_MAX = 10.0

CHECKPOINT_MAGIC = b"EGRLBLZ\x00"
CHECKPOINT_SCHEMA = 1


@dataclass
class BoltzmannGenome:
    priors: np.ndarray
    temperatures: np.ndarray

    def __post_init__(self):
        self.priors = np.asarray(self.priors, dtype=np.float64)
        self.temperatures = np.asarray(self.temperatures, dtype=np.float64)
        n = self.priors.shape[0]
        if self.priors.shape != (n, 2, 3) or self.temperatures.shape != (n, 2):
            raise ValueError(f"priors must be (N, 2, 3) and temperatures (N, 2); got {self.priors.shape}, {self.temperatures.shape}")
        if not np.all(np.isfinite(self.priors)):
            raise ValueError("priors must be finite")
        if np.any(self.temperatures <= 0):
            raise ValueError("temperatures must be positive")

    @property
    def n_nodes(self) -> int:
        return self.priors.shape[0]

    @classmethod
    def random(cls, n_nodes: int, rng: np.random.Generator, prior_scale: float = 1.0, dram_bias: float = 0.0):
        priors = rng.normal(0.0, prior_scale, size=(n_nodes, 2, 3))
        priors[..., 0] += dram_bias
        return cls(priors, np.ones((n_nodes, 2)))

    def copy(self) -> "BoltzmannGenome":
        return BoltzmannGenome(self.priors.copy(), self.temperatures.copy())

    def to_vector(self) -> np.ndarray:
        """Priors followed by temperatures, the layout crossover cuts through."""
        return np.concatenate([self.priors.ravel(), self.temperatures.ravel()])

    @classmethod
    def from_vector(cls, vec: np.ndarray, n_nodes: int) -> "BoltzmannGenome":
        k = n_nodes * 6
        temps = np.clip(vec[k:], T_MIN, T_MAX)
        return cls(vec[:k].reshape(n_nodes, 2, 3), temps.reshape(n_nodes, 2))

    def probs(self) -> np.ndarray:
        return boltzmann_probs(self.priors, self.temperatures[..., None])


def boltzmann_probs(priors, temperature) -> np.ndarray:
    """``exp(prior / T)`` normalized over the last axis; broadcasts over leading axes."""
    temperature = np.asarray(temperature, dtype=np.float64)
    if np.any(temperature <= 0):
        raise ValueError("temperature must be positive")
    z = np.asarray(priors, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    w = np.exp(z)
    return w / w.sum(axis=-1, keepdims=True)


def act(genome: BoltzmannGenome, rng: np.random.Generator) -> MappingDecision:
    return MappingDecision(categorical(genome.probs(), rng))


def seed_from_gnn(genome: BoltzmannGenome, gnn_probs: np.ndarray, one_hot: bool = False) -> BoltzmannGenome:
    """Re-encode a GNN posterior as priors, with unit temperature.

    With ``one_hot`` the prior encodes only the GNN's argmax choice.
    """
    gnn_probs = np.asarray(gnn_probs, dtype=np.float64)
    if gnn_probs.shape != genome.priors.shape:
        raise ValueError(f"shape mismatch: genome {genome.priors.shape}, probs {gnn_probs.shape}")
    if one_hot:
        hot = np.zeros_like(gnn_probs)
        np.put_along_axis(hot, gnn_probs.argmax(axis=-1)[..., None], 1.0, axis=-1)
        gnn_probs = hot
    priors = np.log(np.maximum(gnn_probs, PROB_FLOOR))
    return BoltzmannGenome(priors, np.ones(genome.temperatures.shape))


def entropy(probs: np.ndarray) -> np.ndarray:
    p = np.maximum(probs, PROB_FLOOR)
    return -(probs * np.log(p)).sum(axis=-1)


# header: 8-byte magic, 2 little-endian int64 (schema, N); then float64 priors and temperatures
_HEADER = struct.Struct("<8s2q")


def save_genome(genome: BoltzmannGenome, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_SCHEMA, genome.n_nodes))
        fh.write(genome.to_vector().astype("<f8").tobytes())


def load_genome(path) -> BoltzmannGenome:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise CheckpointError("truncated genome header")
        magic, schema, n = _HEADER.unpack(head)
        if magic != CHECKPOINT_MAGIC or schema != CHECKPOINT_SCHEMA:
            raise CheckpointError("not a Boltzmann genome checkpoint")
        data = np.frombuffer(fh.read(), dtype="<f8").astype(np.float64)
    if data.size != n * 8:
        raise CheckpointError(f"genome checkpoint holds {data.size} values, expected {n * 8}")
    return BoltzmannGenome(data[: n * 6].reshape(n, 2, 3), data[n * 6 :].reshape(n, 2))
