"""Simulated three-level memory accelerator.

Tensors are indexed ``2*i`` (weights of node ``i``) and ``2*i + 1``
(activation of node ``i``). Liveness is measured in execution steps, one step
per node in topological order:

* a weight tensor is loaded at its node's step and stays resident to the end;
* an activation is live from its producer's step to its last consumer's step.

Latency is a serial per-node roofline, ``max(compute, memory)`` summed over
the execution order. Input activations are read from the level the producer
assigned them to.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .workload import COL, OP_IDS, WorkloadGraph

logger = logging.getLogger(__name__)

DRAM, LLC, SRAM = 0, 1, 2
LEVEL_NAMES = ("DRAM", "LLC", "SRAM")

DEFAULT_COMPUTE_RATE = 1e12
DESK_COMPUTE_RATE = 3e10


class HardwareConfigError(ValueError):
    pass


class InvalidMappingError(ValueError):
    """A mapping that violates capacity was passed where a valid one is required."""


@dataclass(frozen=True)
class MemoryLevel:
    name: str
    capacity: int
    bandwidth: float

    def __post_init__(self):
        if self.capacity <= 0 or self.bandwidth <= 0:
            raise HardwareConfigError(f"{self.name}: capacity and bandwidth must be positive")


@dataclass(frozen=True)
class HardwareModel:
    """Ordered memory levels (DRAM, LLC, SRAM) plus a compute rate in ops/s."""

    levels: tuple[MemoryLevel, MemoryLevel, MemoryLevel]
    compute_rate: float = DEFAULT_COMPUTE_RATE

    def __post_init__(self):
        if len(self.levels) != 3:
            raise HardwareConfigError("exactly three memory levels are supported")
        names = tuple(lv.name for lv in self.levels)
        if names != LEVEL_NAMES:
            raise HardwareConfigError(f"levels must be ordered {LEVEL_NAMES}, got {names}")
        caps = [lv.capacity for lv in self.levels]
        bws = [lv.bandwidth for lv in self.levels]
        if not caps[0] > caps[1] > caps[2]:
            raise HardwareConfigError("capacities must strictly decrease DRAM > LLC > SRAM")
        if not bws[0] < bws[1] < bws[2]:
            raise HardwareConfigError("bandwidths must strictly increase DRAM < LLC < SRAM")
        if self.compute_rate <= 0:
            raise HardwareConfigError("compute_rate must be positive")

    @property
    def capacities(self) -> np.ndarray:
        return np.array([lv.capacity for lv in self.levels], dtype=np.int64)

    @property
    def bandwidths(self) -> np.ndarray:
        return np.array([lv.bandwidth for lv in self.levels], dtype=np.float64)

    @classmethod
    def build(cls, capacities, bandwidths, compute_rate=DEFAULT_COMPUTE_RATE) -> "HardwareModel":
        levels = tuple(MemoryLevel(n, int(c), float(b)) for n, c, b in zip(LEVEL_NAMES, capacities, bandwidths))
        return cls(levels=levels, compute_rate=float(compute_rate))

    @classmethod
    def default(cls) -> "HardwareModel":
        """Full-size chip: 32 GB / 24 MB / 4 MB, bandwidth ratios 1 : 10 : 100."""
        return cls.build((32 * 10**9, 24 * 10**6, 4 * 10**6), (1e9, 1e10, 1e11), DEFAULT_COMPUTE_RATE)

    @classmethod
    def desk(cls) -> "HardwareModel":
        """Laptop-scale chip for the synthetic workloads.

        Capacities are scaled down 1000x so the graphs contend for space. The
        compute rate is lowered to 3e10 ops/s so that, as on the real chip,
        convolutions are compute-bound once their tensors sit in fast memory
        and only slow placements turn them memory-bound.
        """
        return cls.build((32 * 10**6, 24 * 10**3, 4 * 10**3), (1e9, 1e10, 1e11), DESK_COMPUTE_RATE)

    @classmethod
    def preset(cls, name: str) -> "HardwareModel":
        try:
            return {"default": cls.default, "desk": cls.desk}[name]()
        except KeyError:
            raise HardwareConfigError(f"unknown hardware preset {name!r}") from None

    def to_dict(self) -> dict:
        return {
            "levels": [
                {"name": lv.name, "capacity_bytes": lv.capacity, "bandwidth_bytes_per_s": lv.bandwidth}
                for lv in self.levels
            ],
            "compute_rate": self.compute_rate,
        }

    @classmethod
    def from_dict(cls, doc) -> "HardwareModel":
        if isinstance(doc, str):
            return cls.preset(doc)
        try:
            unknown = set(doc) - {"levels", "compute_rate", "preset"}
            if unknown:
                raise HardwareConfigError(f"unknown hardware key(s): {sorted(unknown)}")
            if "preset" in doc:
                return cls.preset(doc["preset"])
            levels = []
            for lv in doc["levels"]:
                extra = set(lv) - {"name", "capacity_bytes", "bandwidth_bytes_per_s"}
                if extra:
                    raise HardwareConfigError(f"unknown memory-level key(s): {sorted(extra)}")
                levels.append(MemoryLevel(lv["name"], int(lv["capacity_bytes"]), float(lv["bandwidth_bytes_per_s"])))
            return cls(levels=tuple(levels), compute_rate=float(doc.get("compute_rate", DEFAULT_COMPUTE_RATE)))
        except (KeyError, TypeError) as exc:
            raise HardwareConfigError(f"malformed hardware config: {exc!r}") from None


# --------------------------------------------------------------------------
# mappings


class MappingDecision:
    """Per-node memory levels for the weight (column 0) and activation (column 1)."""

    __slots__ = ("levels",)

    def __init__(self, levels):
        arr = np.array(levels, dtype=np.int64)
        if arr.ndim == 1:
            if arr.size % 2:
                raise ValueError("flat mapping must have even length 2N")
            arr = arr.reshape(-1, 2)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ValueError(f"mapping must have shape (N, 2), got {arr.shape}")
        if arr.size and (arr.min() < 0 or arr.max() > 2):
            raise ValueError("mapping entries must be in {0, 1, 2}")
        arr.setflags(write=False)
        self.levels = arr

    @classmethod
    def from_vectors(cls, weight_mem, act_mem) -> "MappingDecision":
        return cls(np.stack([np.asarray(weight_mem), np.asarray(act_mem)], axis=1))

    @classmethod
    def uniform(cls, n: int, level: int) -> "MappingDecision":
        return cls(np.full((n, 2), level))

    @property
    def weight_mem(self) -> np.ndarray:
        return self.levels[:, 0]

    @property
    def act_mem(self) -> np.ndarray:
        return self.levels[:, 1]

    @property
    def n_nodes(self) -> int:
        return self.levels.shape[0]

    def flat(self) -> np.ndarray:
        return self.levels.reshape(-1)

    def canonical(self, g: WorkloadGraph) -> "MappingDecision":
        """Weight entries of weight-less nodes are irrelevant; pin them to DRAM."""
        lv = self.levels.copy()
        lv[g.weight_bytes == 0, 0] = DRAM
        return MappingDecision(lv)

    def to_list(self) -> list[list[int]]:
        return self.levels.tolist()

    def __eq__(self, other):
        if not isinstance(other, MappingDecision):
            return NotImplemented
        return np.array_equal(self.levels, other.levels)

    def __hash__(self):
        return hash(self.levels.tobytes())

    def __repr__(self):
        return f"MappingDecision(weight_mem={self.weight_mem.tolist()}, act_mem={self.act_mem.tolist()})"


@dataclass(frozen=True)
class Violation:
    step: int
    node: int
    level: int
    overflow: int


@dataclass
class EvalResult:
    valid: bool
    epsilon: float
    reward: float
    rectified: MappingDecision
    latency: float | None = None
    omega: float | None = None
    proposed: MappingDecision | None = field(default=None, repr=False)

    def speedup(self, baseline_latency: float) -> float:
        """Compiler latency over agent latency; 0 marks an invalid mapping."""
        return baseline_latency / self.latency if self.valid else 0.0

    def to_record(self) -> dict:
        return {
            "valid": self.valid,
            "epsilon": self.epsilon,
            "latency": self.latency,
            "omega": self.omega,
            "reward": self.reward,
        }


# --------------------------------------------------------------------------
# per-graph tensor layout


@dataclass(frozen=True)
class _Layout:
    n: int
    order: np.ndarray
    nbytes: np.ndarray  # (2N,)
    start: np.ndarray  # (2N,) first live step
    end: np.ndarray  # (2N,) last live step
    total_bytes: int
    ops: np.ndarray  # (N,) compute operations per node
    pred_idx: np.ndarray  # (N, max_in_degree), -1 padded
    weightless: np.ndarray  # (N,) bool


def node_ops(g: WorkloadGraph) -> np.ndarray:
    f = g.features
    op = f[:, COL["op_id"]]
    conv = f[:, COL["ofm_size"]] * f[:, COL["kernel_x"]] * f[:, COL["kernel_y"]] * f[:, COL["ifm_z"]]
    fc = f[:, COL["ifm_size"]] * f[:, COL["ofm_size"]]
    return np.where(op == OP_IDS["conv"], conv, np.where(op == OP_IDS["fc"], fc, f[:, COL["ofm_size"]])).astype(
        np.float64
    )


def layout(g: WorkloadGraph) -> _Layout:
    cached = g.__dict__.get("_hw_layout")
    if cached is not None:
        return cached
    n = g.n_nodes
    pos = g.position
    nbytes = np.zeros(2 * n, dtype=np.int64)
    nbytes[0::2] = g.weight_bytes
    nbytes[1::2] = g.activation_bytes
    start = np.repeat(pos, 2)
    end = np.empty(2 * n, dtype=np.int64)
    end[0::2] = n - 1
    for i in range(n):
        end[2 * i + 1] = max([pos[i]] + [pos[j] for j in g.succs[i]])
    max_deg = max(1, max(len(p) for p in g.preds))
    pred_idx = np.full((n, max_deg), -1, dtype=np.int64)
    for i, p in enumerate(g.preds):
        pred_idx[i, : len(p)] = p
    lay = _Layout(
        n=n,
        order=np.asarray(g.order, dtype=np.int64),
        nbytes=nbytes,
        start=start,
        end=end,
        total_bytes=int(nbytes.sum()),
        ops=node_ops(g),
        pred_idx=pred_idx,
        weightless=g.weight_bytes == 0,
    )
    object.__setattr__(g, "_hw_layout", lay)
    return lay


def _usage(lay: _Layout, tensor_levels: np.ndarray) -> np.ndarray:
    """Live bytes per (level, step) as a (3, N) int64 array."""
    n = lay.n
    w = np.bincount(tensor_levels * (n + 1) + lay.start, weights=lay.nbytes, minlength=3 * (n + 1))
    w -= np.bincount(tensor_levels * (n + 1) + lay.end + 1, weights=lay.nbytes, minlength=3 * (n + 1))
    return np.cumsum(w.reshape(3, n + 1), axis=1)[:, :n].round().astype(np.int64)


def _check_shape(g: WorkloadGraph, m: MappingDecision):
    if m.n_nodes != g.n_nodes:
        raise ValueError(f"mapping has {m.n_nodes} nodes, workload has {g.n_nodes}")


# --------------------------------------------------------------------------
# operations


def check_capacity(g: WorkloadGraph, hw: HardwareModel, m: MappingDecision) -> list[Violation]:
    """Every (step, level) whose live bytes exceed the level's capacity."""
    _check_shape(g, m)
    lay = layout(g)
    usage = _usage(lay, m.canonical(g).flat())
    over = usage - hw.capacities[:, None]
    out = []
    for level, step in zip(*np.nonzero(over > 0)):
        out.append(Violation(step=int(step), node=int(lay.order[step]), level=int(level), overflow=int(over[level, step])))
    out.sort(key=lambda v: (v.step, -v.level))
    return out


def compiler_map(g: WorkloadGraph, hw: HardwareModel) -> MappingDecision:
    """Greedy fastest-first placement in execution order, weights before activations."""
    lay = layout(g)
    caps = hw.capacities
    usage = np.zeros((3, lay.n), dtype=np.int64)
    levels = np.zeros(2 * lay.n, dtype=np.int64)
    for node in lay.order:
        for t in (2 * node, 2 * node + 1):
            b = lay.nbytes[t]
            if b == 0:
                continue
            s, e = lay.start[t], lay.end[t] + 1
            for level in (SRAM, LLC, DRAM):
                if usage[level, s:e].max() + b <= caps[level]:
                    usage[level, s:e] += b
                    levels[t] = level
                    break
            else:
                raise HardwareConfigError(f"DRAM cannot hold tensor {t} ({b} bytes) of node {node}")
    return MappingDecision(levels)


def rectify(g: WorkloadGraph, hw: HardwareModel, m: MappingDecision) -> tuple[MappingDecision, float]:
    """Spill offending tensors to slower memory until the mapping fits.

    At the earliest violated step (fastest violated level first) the largest
    live tensor on that level moves one level down; size ties go to the lower
    node index, and a weight before its node's activation. Returns the
    rectified mapping and the fraction of mappable bytes that moved.
    """
    _check_shape(g, m)
    lay = layout(g)
    proposed = m.canonical(g).flat()
    levels = proposed.copy()
    caps = hw.capacities[:, None]
    usage = _usage(lay, levels)
    while True:
        over = usage > caps
        if not over.any():
            break
        step = int(np.argmax(over.any(axis=0)))
        level = int(np.nonzero(over[:, step])[0].max())
        if level == DRAM:
            raise HardwareConfigError(f"DRAM overflows at step {step}; enlarge its capacity")
        live = (lay.start <= step) & (lay.end >= step) & (levels == level) & (lay.nbytes > 0)
        cand = np.flatnonzero(live)
        victim = cand[np.argmax(lay.nbytes[cand])]  # argmax returns the first, i.e. lowest index
        s, e = lay.start[victim], lay.end[victim] + 1
        b = lay.nbytes[victim]
        usage[level, s:e] -= b
        usage[level - 1, s:e] += b
        levels[victim] = level - 1
    moved = int(lay.nbytes[levels != proposed].sum())
    epsilon = moved / lay.total_bytes if lay.total_bytes else 0.0
    return MappingDecision(levels), epsilon


def latency_batch(g: WorkloadGraph, hw: HardwareModel, tensor_levels: np.ndarray) -> np.ndarray:
    """Latency of each row of an ``(M, 2N)`` array of tensor levels (no validity check)."""
    lay = layout(g)
    lv = np.atleast_2d(tensor_levels)
    inv_bw = 1.0 / hw.bandwidths
    w_time = lay.nbytes[0::2] * inv_bw[lv[:, 0::2]]
    a_time = lay.nbytes[1::2] * inv_bw[lv[:, 1::2]]
    mem = w_time.copy()
    for k in range(lay.pred_idx.shape[1]):
        p = lay.pred_idx[:, k]
        mem += np.where(p >= 0, a_time[:, np.maximum(p, 0)], 0.0)
    mem += a_time
    term = np.maximum(lay.ops / hw.compute_rate, mem)
    # sequential accumulation in execution order, so every caller gets identical bits
    return np.cumsum(term[:, lay.order], axis=1)[:, -1]


def simulate_latency(g: WorkloadGraph, hw: HardwareModel, m: MappingDecision, check: bool = True) -> float:
    """Seconds to run one single-batch inference under a valid mapping."""
    _check_shape(g, m)
    if check:
        bad = check_capacity(g, hw, m)
        if bad:
            raise InvalidMappingError(f"mapping violates capacity: {bad[0]}")
    return float(latency_batch(g, hw, m.canonical(g).flat())[0])


def compute_reward(
    g: WorkloadGraph,
    hw: HardwareModel,
    m: MappingDecision,
    omega_baseline: float,
    invalid_penalty: float = 1.0,
) -> EvalResult:
    """Score a proposed mapping.

    Valid proposals are run and rewarded ``(omega / omega_baseline) ** 2``;
    proposals the rectifier had to change are not run and get
    ``-invalid_penalty * epsilon``.
    """
    if omega_baseline <= 0:
        raise ValueError("omega_baseline must be positive")
    rectified, eps = rectify(g, hw, m)
    if eps == 0.0:
        lat = simulate_latency(g, hw, rectified, check=False)
        omega = 1.0 / lat
        return EvalResult(True, 0.0, (omega / omega_baseline) ** 2, rectified, lat, omega, proposed=m)
    return EvalResult(False, eps, -invalid_penalty * eps, rectified, None, None, proposed=m)


def baseline_latency(g: WorkloadGraph, hw: HardwareModel) -> float:
    return simulate_latency(g, hw, compiler_map(g, hw))
