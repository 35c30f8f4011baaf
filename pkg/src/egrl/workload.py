"""Featured DAG representation of DNN workloads.

A workload is a directed acyclic graph whose nodes are operational layers.
Every node carries 19 integer features; edges carry none, because all the
outgoing edges of a node denote the same output tensor.

Synthetic generators stand in for real model extraction. They are
deterministic in ``(kind, n_nodes, seed)`` and size tensors at "desk" scale
(hundreds to a few thousand bytes per tensor) so that the weights of a
57-node graph overflow the combined SRAM+LLC of the desk hardware preset
several times over.
"""

from __future__ import annotations

import heapq
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

SCHEMA_VERSION = 1

FEATURE_NAMES = (
    "op_id",
    "weight_size",
    "ifm_x",
    "ifm_y",
    "ifm_z",
    "ofm_x",
    "ofm_y",
    "ofm_z",
    "ifm_size",
    "ofm_size",
    "n_ops_left",
    "n_w_left",
    "groups",
    "kernel_x",
    "kernel_y",
    "stride",
    "pad",
    "dilation",
    "batch",
)
N_FEATURES = len(FEATURE_NAMES)
COL = {name: i for i, name in enumerate(FEATURE_NAMES)}

OP_IDS = {"conv": 0, "fc": 1, "pool": 2, "add": 3, "concat": 4, "norm": 5, "act": 6, "embed": 7}
OP_NAMES = {v: k for k, v in OP_IDS.items()}

# bytes per activation element
ELEMENT_WIDTH = 1

GENERATOR_KINDS = ("chain", "resnet_like", "bert_like")


class WorkloadError(ValueError):
    """Raised for malformed workloads. ``node`` is the offending index, if any."""

    def __init__(self, message: str, node: int | None = None):
        if node is not None:
            message = f"node {node}: {message}"
        super().__init__(message)
        self.node = node


def _topological_order(n: int, edges) -> list[int]:
    # Kahn's algorithm with ties broken by lowest index
    indeg = [0] * n
    succ: list[list[int]] = [[] for _ in range(n)]
    for s, d in edges:
        succ[s].append(d)
        indeg[d] += 1
    heap = [i for i in range(n) if indeg[i] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        i = heapq.heappop(heap)
        order.append(i)
        for j in succ[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                heapq.heappush(heap, j)
    if len(order) != n:
        stuck = min(i for i in range(n) if indeg[i] > 0)
        raise WorkloadError("cycle detected", node=stuck)
    return order


@dataclass(frozen=True, eq=False)
class WorkloadGraph:
    """Immutable featured DAG.

    ``features`` is an ``(N, 19)`` int64 array in :data:`FEATURE_NAMES` order.
    ``edges`` is a sorted tuple of ``(src, dst)`` pairs. Use
    :meth:`from_layers` to build a graph with derived features filled in; the
    plain constructor validates that stored derived features are consistent.
    """

    name: str
    features: np.ndarray
    edges: tuple[tuple[int, int], ...]
    order: tuple[int, ...] = field(init=False)
    preds: tuple[tuple[int, ...], ...] = field(init=False)
    succs: tuple[tuple[int, ...], ...] = field(init=False)

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.int64)
        if feats.ndim != 2 or feats.shape[1] != N_FEATURES:
            raise WorkloadError(f"features must have shape (N, {N_FEATURES}), got {feats.shape}")
        n = feats.shape[0]
        if n < 1:
            raise WorkloadError("a workload needs at least one node")
        edges = tuple(sorted({(int(s), int(d)) for s, d in self.edges}))
        for s, d in edges:
            if not (0 <= s < n and 0 <= d < n):
                raise WorkloadError(f"edge ({s}, {d}) out of range", node=s if not 0 <= s < n else d)
            if s == d:
                raise WorkloadError("self-loop", node=s)
        order = _topological_order(n, edges)
        preds: list[list[int]] = [[] for _ in range(n)]
        succs: list[list[int]] = [[] for _ in range(n)]
        for s, d in edges:
            preds[d].append(s)
            succs[s].append(d)
        feats.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "order", tuple(order))
        object.__setattr__(self, "preds", tuple(tuple(p) for p in preds))
        object.__setattr__(self, "succs", tuple(tuple(s) for s in succs))
        self._check_features()

    def _check_features(self):
        f = self.features
        expected = _derived_columns(f, self.order)
        for i in range(self.n_nodes):
            if f[i, COL["weight_size"]] < 0:
                raise WorkloadError("negative weight_size", node=i)
            if min(f[i, COL["ifm_x"]:COL["ofm_z"] + 1]) < 0:
                raise WorkloadError("negative feature map extent", node=i)
            for name, col in expected.items():
                if f[i, COL[name]] != col[i]:
                    raise WorkloadError(
                        f"inconsistent {name}: stored {f[i, COL[name]]}, expected {col[i]}", node=i
                    )

    @classmethod
    def from_layers(cls, name: str, layers: list[dict], edges) -> "WorkloadGraph":
        """Build a graph from per-layer dicts, computing every derived feature.

        Each layer dict needs ``op`` (name or id), ``weight_size``, ``ifm``
        and ``ofm`` (3-tuples); convolution parameters default to 0.
        """
        n = len(layers)
        feats = np.zeros((n, N_FEATURES), dtype=np.int64)
        for i, layer in enumerate(layers):
            op = layer["op"]
            feats[i, COL["op_id"]] = OP_IDS[op] if isinstance(op, str) else int(op)
            feats[i, COL["weight_size"]] = int(layer.get("weight_size", 0))
            feats[i, COL["ifm_x"]:COL["ifm_z"] + 1] = layer["ifm"]
            feats[i, COL["ofm_x"]:COL["ofm_z"] + 1] = layer["ofm"]
            for key in ("groups", "kernel_x", "kernel_y", "stride", "pad", "dilation"):
                feats[i, COL[key]] = int(layer.get(key, 0))
        order = _topological_order(n, edges)
        for key, col in _derived_columns(feats, order).items():
            feats[:, COL[key]] = col
        return cls(name=name, features=feats, edges=tuple(edges))

    @property
    def n_nodes(self) -> int:
        return self.features.shape[0]

    @property
    def weight_bytes(self) -> np.ndarray:
        return self.features[:, COL["weight_size"]]

    @property
    def activation_bytes(self) -> np.ndarray:
        return self.features[:, COL["ofm_size"]] * ELEMENT_WIDTH

    @property
    def position(self) -> np.ndarray:
        """Execution step of each node (inverse of ``order``)."""
        pos = np.empty(self.n_nodes, dtype=np.int64)
        pos[list(self.order)] = np.arange(self.n_nodes)
        return pos

    @property
    def action_space_log10(self) -> float:
        return 2 * self.n_nodes * math.log10(3)

    def feature(self, name: str) -> np.ndarray:
        return self.features[:, COL[name]]

    def canonical(self) -> "WorkloadGraph":
        """Relabel nodes so that index order equals topological order."""
        order = list(self.order)
        if order == list(range(self.n_nodes)):
            return self
        new_index = {old: new for new, old in enumerate(order)}
        edges = [(new_index[s], new_index[d]) for s, d in self.edges]
        return WorkloadGraph(self.name, self.features[order], tuple(edges))

    def permuted(self, perm) -> "WorkloadGraph":
        """Graph with node ``i`` moved to index ``perm[i]``."""
        perm = np.asarray(perm)
        inv = np.argsort(perm)
        edges = [(int(perm[s]), int(perm[d])) for s, d in self.edges]
        return WorkloadGraph(self.name, self.features[inv], tuple(edges))

    def __eq__(self, other):
        if not isinstance(other, WorkloadGraph):
            return NotImplemented
        return (
            self.name == other.name
            and self.edges == other.edges
            and np.array_equal(self.features, other.features)
        )

    def __hash__(self):
        return hash((self.name, self.edges, self.features.tobytes()))

    def __repr__(self):
        return f"WorkloadGraph(name={self.name!r}, n_nodes={self.n_nodes}, n_edges={len(self.edges)})"


def _derived_columns(feats: np.ndarray, order) -> dict[str, np.ndarray]:
    n = feats.shape[0]
    pos = np.empty(n, dtype=np.int64)
    pos[list(order)] = np.arange(n)
    has_w = (feats[:, COL["weight_size"]] > 0).astype(np.int64)
    # weighted nodes strictly after each position in execution order
    w_in_order = has_w[list(order)]
    after = np.concatenate([np.cumsum(w_in_order[::-1])[::-1][1:], [0]])
    return {
        "ifm_size": feats[:, COL["ifm_x"]] * feats[:, COL["ifm_y"]] * feats[:, COL["ifm_z"]],
        "ofm_size": feats[:, COL["ofm_x"]] * feats[:, COL["ofm_y"]] * feats[:, COL["ofm_z"]],
        "n_ops_left": n - 1 - pos,
        "n_w_left": after[pos],
        "batch": np.ones(n, dtype=np.int64),
    }


# --------------------------------------------------------------------------
# file format


def workload_to_dict(g: WorkloadGraph) -> dict:
    g = g.canonical()
    return {
        "schema": SCHEMA_VERSION,
        "name": g.name,
        "nodes": [dict(zip(FEATURE_NAMES, map(int, row))) for row in g.features],
        "edges": [[s, d] for s, d in g.edges],
    }


def workload_from_dict(doc: dict) -> WorkloadGraph:
    if not isinstance(doc, dict):
        raise WorkloadError("workload document must be a mapping")
    for key in ("schema", "name", "nodes", "edges"):
        if key not in doc:
            raise WorkloadError(f"missing field {key!r}")
    if doc["schema"] != SCHEMA_VERSION:
        raise WorkloadError(f"unsupported schema {doc['schema']!r}")
    rows = []
    for i, node in enumerate(doc["nodes"]):
        if not isinstance(node, dict) or set(node) != set(FEATURE_NAMES):
            raise WorkloadError("node record must have exactly the 19 feature fields", node=i)
        try:
            rows.append([int(node[k]) for k in FEATURE_NAMES])
        except (TypeError, ValueError) as exc:
            raise WorkloadError(f"non-integer feature ({exc})", node=i) from None
    edges = []
    for e in doc["edges"]:
        if not (isinstance(e, (list, tuple)) and len(e) == 2):
            raise WorkloadError(f"edge must be a [src, dst] pair, got {e!r}")
        edges.append((int(e[0]), int(e[1])))
    feats = np.array(rows, dtype=np.int64).reshape(len(rows), N_FEATURES)
    return WorkloadGraph(name=str(doc["name"]), features=feats, edges=tuple(edges))


def save_workload(g: WorkloadGraph, path) -> None:
    with open(path, "w") as fh:
        json.dump(workload_to_dict(g), fh, indent=1)
        fh.write("\n")


def load_workload(path) -> WorkloadGraph:
    if not os.path.exists(path):
        raise WorkloadError(f"no such workload file: {path}")
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise WorkloadError(f"not a valid workload document: {exc}") from None
    return workload_from_dict(doc)


# --------------------------------------------------------------------------
# features


@dataclass(frozen=True)
class Normalizer:
    """Per-column standardization; columns with zero spread map to 0."""

    mean: np.ndarray
    std: np.ndarray

    def apply(self, g_or_features) -> np.ndarray:
        raw = g_or_features.features if isinstance(g_or_features, WorkloadGraph) else g_or_features
        raw = np.asarray(raw, dtype=np.float64)
        live = self.std > 0
        out = np.zeros_like(raw)
        out[:, live] = (raw[:, live] - self.mean[live]) / self.std[live]
        return out


def feature_matrix(g: WorkloadGraph, normalizer: Normalizer | None = None):
    """Return ``(X, normalizer)`` where ``X`` is the standardized ``(N, 19)`` matrix.

    Passing a normalizer fitted on another graph replays that scaling, which is
    how zero-shot transfer feeds a new topology to a trained policy.
    """
    raw = g.features.astype(np.float64)
    if normalizer is None:
        mean = raw.mean(axis=0)
        std = raw.std(axis=0)
        # relative threshold: integer columns that are constant give exact 0
        std = np.where(std > 1e-12 * np.maximum(1.0, np.abs(mean)), std, 0.0)
        normalizer = Normalizer(mean=mean, std=std)
    x = normalizer.apply(raw)
    if not np.all(np.isfinite(x)):
        raise WorkloadError("non-finite normalized features")
    return x, normalizer


# --------------------------------------------------------------------------
# synthetic generators


def _log_uniform_int(rng, lo, hi):
    return int(round(math.exp(rng.uniform(math.log(lo), math.log(hi)))))


def _conv(rng, ifm, cout, k, stride=1, groups=1):
    x, y, z = ifm
    ox, oy = max(1, -(-x // stride)), max(1, -(-y // stride))
    return {
        "op": "conv",
        "weight_size": k * k * (z // groups) * cout,
        "ifm": (x, y, z),
        "ofm": (ox, oy, cout),
        "groups": groups,
        "kernel_x": k,
        "kernel_y": k,
        "stride": stride,
        "pad": k // 2,
        "dilation": 1,
    }


def _fc(ifm, cout):
    return {"op": "fc", "weight_size": int(np.prod(ifm)) * cout, "ifm": ifm, "ofm": (1, 1, cout)}


def _plain(op, ifm, ofm=None, weight_size=0):
    return {"op": op, "weight_size": weight_size, "ifm": ifm, "ofm": ofm if ofm is not None else ifm}


def _chain(n, rng):
    layers, edges = [], []
    shape = (8, 8, _log_uniform_int(rng, 8, 24))
    for i in range(n):
        layer = _conv(rng, shape, _log_uniform_int(rng, 8, 32), k=int(rng.choice([1, 3])))
        layers.append(layer)
        shape = layer["ofm"]
        if i:
            edges.append((i - 1, i))
    return layers, edges


# feature-map side, stem width range, width growth per downsampling, width cap;
# sized so the totals overflow the desk preset's SRAM + LLC several times
RESNET_SPATIAL = 8
RESNET_STEM_WIDTH = (12, 24)
RESNET_GROWTH = 1.6
RESNET_MAX_WIDTH = 96


def _resnet_like(n, rng):
    """Stem, bottleneck blocks (1x1, 3x3, 1x1, add with skip edge), pool + fc."""
    layers, edges = [], []

    def push(layer, *srcs):
        layers.append(layer)
        idx = len(layers) - 1
        edges.extend((s, idx) for s in srcs)
        return idx

    spatial = RESNET_SPATIAL
    width = _log_uniform_int(rng, *RESNET_STEM_WIDTH)
    cur = push(_conv(rng, (spatial, spatial, 3), width, k=3))
    shape = layers[cur]["ofm"]
    tail = min(2, n - 1)
    body = n - 1 - tail
    n_blocks, leftover = divmod(body, 4)
    for b in range(n_blocks):
        stride = 2 if b and b % max(1, n_blocks // 3) == 0 and shape[0] > 2 else 1
        if stride == 2:
            width = min(RESNET_MAX_WIDTH, int(width * RESNET_GROWTH))
        mid = max(2, _log_uniform_int(rng, width / 2.5, width / 1.2))
        block_in = cur
        a = push(_conv(rng, shape, mid, k=1, stride=stride), cur)
        c = push(_conv(rng, layers[a]["ofm"], mid, k=3), a)
        e = push(_conv(rng, layers[c]["ofm"], width, k=1), c)
        out_shape = layers[e]["ofm"]
        # the skip edge reads the block input directly
        cur = push(_plain("add", out_shape), e, block_in)
        shape = out_shape
    for _ in range(leftover):
        if rng.uniform() < 0.5:
            cur = push(_plain("act", shape), cur)
        else:
            cur = push(_plain("norm", shape, weight_size=2 * shape[2]), cur)
    if tail >= 1:
        cur = push(_plain("pool", shape, (1, 1, shape[2])), cur)
        shape = (1, 1, shape[2])
    if tail >= 2:
        push(_fc(shape, _log_uniform_int(rng, 16, 64)), cur)
    return layers, edges


def _bert_like(n, rng):
    """Embedding, then blocks with a fan-out-2 attention branch and residual add."""
    layers, edges = [], []

    def push(layer, *srcs):
        layers.append(layer)
        idx = len(layers) - 1
        edges.extend((s, idx) for s in srcs)
        return idx

    seq = 8
    d = _log_uniform_int(rng, 24, 64)
    cur = push({"op": "embed", "weight_size": 64 * d, "ifm": (seq, 1, 1), "ofm": (seq, 1, d)})
    shape = (seq, 1, d)
    # block: q, k (fan-out from block input), concat, proj, add(residual), norm
    pattern = ("q", "k", "concat", "proj", "add", "norm")
    while len(layers) < n:
        block_in = cur
        q = k = cat = proj = None
        for step in pattern:
            if len(layers) >= n:
                break
            if step == "q":
                q = push(_dense(shape, _log_uniform_int(rng, d / 2, d)), block_in)
                cur = q
            elif step == "k":
                k = push(_dense(shape, _log_uniform_int(rng, d / 2, d)), block_in)
                cur = k
            elif step == "concat":
                qz, kz = layers[q]["ofm"][2], layers[k]["ofm"][2]
                cat = push(_plain("concat", (seq, 1, qz + kz), (seq, 1, qz + kz)), q, k)
                cur = cat
            elif step == "proj":
                proj = push(_dense(layers[cat]["ofm"], d), cat)
                cur = proj
            elif step == "add":
                cur = push(_plain("add", shape), proj, block_in)
            else:
                cur = push(_plain("norm", shape, weight_size=2 * d), cur)
    return layers, edges


def _dense(ifm, cout):
    # token-wise linear layer: weights (z_in x cout), output keeps the token axis
    x, y, z = ifm
    return {"op": "fc", "weight_size": z * cout, "ifm": ifm, "ofm": (x, y, cout)}


_GENERATORS = {"chain": _chain, "resnet_like": _resnet_like, "bert_like": _bert_like}

WORKLOAD_PRESETS = {"resnet50": ("resnet_like", 57), "resnet101": ("resnet_like", 108), "bert": ("bert_like", 376)}


def generate_synthetic(kind: str, n_nodes: int, seed: int = 0) -> WorkloadGraph:
    """Deterministic synthetic workload of exactly ``n_nodes`` nodes."""
    if kind not in _GENERATORS:
        raise ValueError(f"unknown workload kind {kind!r}; expected one of {GENERATOR_KINDS}")
    if n_nodes < 1:
        raise ValueError("n_nodes must be >= 1")
    rng = np.random.default_rng([int(seed), GENERATOR_KINDS.index(kind), int(n_nodes)])
    layers, edges = _GENERATORS[kind](int(n_nodes), rng)
    assert len(layers) == n_nodes, (kind, n_nodes, len(layers))
    return WorkloadGraph.from_layers(f"{kind}_{n_nodes}_s{seed}", layers, edges)
