"""Attention message-passing network over workload graphs, in plain numpy.

Architecture (hidden size ``H``, depth ``D``, ``A`` heads)::

    h0      = tanh(X @ W_in + b_in)
    z       = h @ W_l                           # per-layer H -> H update weights
    score   = leaky_relu(att_dst . z_i + att_src . z_j), j in N(i) + {i}
    m_i     = concat_heads(sum_j softmax_j(score) z_j)
    h'      = h + tanh(m + b_l)                 # residual
    out     = h_D @ W_out + b_out               # per node, or after mean pooling

``N(i)`` holds both in- and out-neighbours; with ``A = 0`` attention is
replaced by a plain mean over the neighbourhood. Parameters live in one flat
float64 vector whose layout is fixed by :meth:`GraphNet.param_shapes`:
``in.W, in.b``, then per layer ``W, att_src, att_dst, b`` (attention vectors
absent when ``A = 0``), then ``out.W, out.b``. Gradients use the same layout.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .hwsim import MappingDecision
from .workload import N_FEATURES, Normalizer, WorkloadGraph, feature_matrix

N_LEVELS = 3
N_TENSORS = 2
ACTION_DIM = N_TENSORS * N_LEVELS
PROB_FLOOR = 1e-12
NEGATIVE_SLOPE = 0.2

CHECKPOINT_MAGIC = b"EGRLGNN\x00"
CHECKPOINT_SCHEMA = 1


class CheckpointError(ValueError):
    """Unreadable checkpoint or one whose architecture does not match its payload."""


@dataclass(frozen=True)
class GnnConfig:
    hidden: int = 128
    depth: int = 4
    heads: int = 4

    def __post_init__(self):
        if self.hidden < 1 or self.depth < 0 or self.heads < 0:
            raise ValueError("hidden >= 1, depth >= 0 and heads >= 0 required")
        if self.heads and self.hidden % self.heads:
            raise ValueError(f"hidden size {self.hidden} not divisible by {self.heads} heads")

    @classmethod
    def desk(cls) -> "GnnConfig":
        return cls(hidden=32, depth=2, heads=2)


@dataclass(frozen=True)
class GraphInput:
    """Normalized node features plus the neighbourhood structure.

    Neighbourhoods include a self-loop, so every node receives at least one
    message. ``dst``/``src`` list the directed message edges grouped by
    destination (``dst_start`` marks each group); ``by_src`` regroups the
    same edges by source for the backward scatter.
    """

    x: np.ndarray
    mask: np.ndarray
    mean_agg: np.ndarray  # row-normalized mask, used when heads == 0
    dst: np.ndarray
    src: np.ndarray
    dst_start: np.ndarray
    by_src: np.ndarray
    src_start: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.x.shape[0]


def _structure(mask: np.ndarray) -> dict:
    dst, src = np.nonzero(mask)  # row-major, so already grouped by destination
    dst_start = np.searchsorted(dst, np.arange(mask.shape[0]))
    by_src = np.argsort(src, kind="stable")
    src_start = np.searchsorted(src[by_src], np.arange(mask.shape[0]))
    return dict(dst=dst, src=src, dst_start=dst_start, by_src=by_src, src_start=src_start)


def prepare(g: WorkloadGraph, normalizer: Normalizer | None = None) -> GraphInput:
    if normalizer is None:
        cached = g.__dict__.get("_gnn_input")
        if cached is not None:
            return cached
    x, _ = feature_matrix(g, normalizer)
    n = g.n_nodes
    mask = np.eye(n, dtype=bool)
    for s, d in g.edges:
        mask[s, d] = mask[d, s] = True
    gi = GraphInput(x=x, mask=mask, mean_agg=mask / mask.sum(axis=1, keepdims=True), **_structure(mask))
    if normalizer is None:
        object.__setattr__(g, "_gnn_input", gi)
    return gi


class GraphNet:
    """Shape bookkeeping plus forward/backward for one network family member."""

    def __init__(self, config: GnnConfig, in_features: int, out_features: int, pooled: bool = False):
        self.config = config
        self.in_features = in_features
        self.out_features = out_features
        self.pooled = pooled
        self._shapes = self.param_shapes()
        self._offsets = {}
        off = 0
        for name, shape in self._shapes:
            size = int(np.prod(shape))
            self._offsets[name] = (off, off + size, shape)
            off += size
        self.n_params = off

    def param_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        H, A = self.config.hidden, self.config.heads
        shapes = [("in.W", (self.in_features, H)), ("in.b", (H,))]
        for l in range(self.config.depth):
            shapes.append((f"l{l}.W", (H, H)))
            if A:
                shapes += [(f"l{l}.att_src", (A, H // A)), (f"l{l}.att_dst", (A, H // A))]
            shapes.append((f"l{l}.b", (H,)))
        shapes += [("out.W", (H, self.out_features)), ("out.b", (self.out_features,))]
        return shapes

    def views(self, theta: np.ndarray) -> dict[str, np.ndarray]:
        if theta.shape != (self.n_params,):
            raise ValueError(f"parameter vector has length {theta.size}, expected {self.n_params}")
        return {k: theta[a:b].reshape(s) for k, (a, b, s) in self._offsets.items()}

    def init(self, rng: np.random.Generator) -> np.ndarray:
        """Uniform in +-1/sqrt(fan_in) for every tensor."""
        theta = np.empty(self.n_params)
        H = self.config.hidden
        for name, (a, b, shape) in self._offsets.items():
            if name == "in.W" or name == "in.b":
                fan_in = self.in_features
            elif ".att_" in name:
                fan_in = shape[1]
            else:
                fan_in = H
            bound = 1.0 / np.sqrt(fan_in)
            theta[a:b] = rng.uniform(-bound, bound, size=b - a)
        return theta

    # ------------------------------------------------------------------

    def forward(self, theta: np.ndarray, gi: GraphInput, x: np.ndarray | None = None):
        """Run the network on a batch of node-feature tensors.

        ``x`` defaults to the graph's own features; otherwise it is
        ``(B, N, in_features)``. Returns ``(out, cache)`` where ``out`` is
        ``(B, N, out_features)`` or ``(B, out_features)`` when pooled.
        """
        p = self.views(theta)
        if x is None:
            x = gi.x[None]
        B, N, _ = x.shape
        H, A = self.config.hidden, self.config.heads
        h = np.tanh(x @ p["in.W"] + p["in.b"])
        cache = {"x": x, "h0": h, "layers": []}
        for l in range(self.config.depth):
            z = h @ p[f"l{l}.W"]
            if A:
                dh = H // A
                zt = z.reshape(B, N, A, dh).transpose(0, 2, 1, 3)  # (B, A, N, dh)
                s_dst = zt @ p[f"l{l}.att_dst"][None, :, :, None]  # (B, A, N, 1)
                s_src = zt @ p[f"l{l}.att_src"][None, :, :, None]
                # one score per message edge, softmax within each destination group
                e = s_dst[..., gi.dst, 0] + s_src[..., gi.src, 0]  # (B, A, E)
                le = np.maximum(e, NEGATIVE_SLOPE * e)  # leaky ReLU, valid for slope < 1
                le -= np.maximum.reduceat(le, gi.dst_start, axis=-1)[..., gi.dst]
                w = np.exp(le, out=le)
                alpha = w / np.add.reduceat(w, gi.dst_start, axis=-1)[..., gi.dst]
                # aggregation as a dense batched matmul, which beats gathering per edge
                att = np.zeros((B, A, N, N))
                att[..., gi.dst, gi.src] = alpha
                m = (att @ zt).transpose(0, 2, 1, 3).reshape(B, N, H)
                lc = {"h": h, "zt": zt, "e": e, "alpha": alpha, "att": att}
            else:
                m = gi.mean_agg @ z
                lc = {"h": h}
            t = np.tanh(m + p[f"l{l}.b"])
            lc["t"] = t
            cache["layers"].append(lc)
            h = h + t
        cache["hD"] = h
        if self.pooled:
            out = h.mean(axis=1) @ p["out.W"] + p["out.b"]
        else:
            out = h @ p["out.W"] + p["out.b"]
        return out, cache

    def backward(self, theta: np.ndarray, gi: GraphInput, cache, g_out: np.ndarray):
        """Reverse-mode gradient of ``sum(g_out * out)``.

        Returns ``(g_theta, g_x)`` with ``g_theta`` in the flat layout and
        ``g_x`` shaped like the input features.
        """
        p = self.views(theta)
        grad = np.zeros_like(theta)
        gp = self.views(grad)
        H, A = self.config.hidden, self.config.heads
        hD = cache["hD"]
        B, N, _ = hD.shape
        if self.pooled:
            pooled = hD.mean(axis=1)
            gp["out.W"][:] = pooled.T @ g_out
            gp["out.b"][:] = g_out.sum(axis=0)
            g_h = np.broadcast_to((g_out @ p["out.W"].T)[:, None, :] / N, hD.shape).copy()
        else:
            gp["out.W"][:] = hD.reshape(-1, H).T @ g_out.reshape(-1, self.out_features)
            gp["out.b"][:] = g_out.reshape(-1, self.out_features).sum(axis=0)
            g_h = g_out @ p["out.W"].T
        for l in reversed(range(self.config.depth)):
            lc = cache["layers"][l]
            h_in = lc["h"]
            g_u = g_h * (1.0 - lc["t"] ** 2)
            gp[f"l{l}.b"][:] = g_u.sum(axis=(0, 1))
            if A:
                dh = H // A
                zt, alpha, e = lc["zt"], lc["alpha"], lc["e"]
                g_mt = g_u.reshape(B, N, A, dh).transpose(0, 2, 1, 3)
                g_alpha = (g_mt @ zt.transpose(0, 1, 3, 2))[..., gi.dst, gi.src]  # (B, A, E)
                g_zt = lc["att"].transpose(0, 1, 3, 2) @ g_mt
                dot = np.add.reduceat(g_alpha * alpha, gi.dst_start, axis=-1)[..., gi.dst]
                g_le = alpha * (g_alpha - dot)
                g_e = np.where(e > 0, g_le, NEGATIVE_SLOPE * g_le)
                g_sd = np.add.reduceat(g_e, gi.dst_start, axis=-1)  # (B, A, N)
                g_ss = np.add.reduceat(g_e[..., gi.by_src], gi.src_start, axis=-1)
                att_dst, att_src = p[f"l{l}.att_dst"], p[f"l{l}.att_src"]
                gp[f"l{l}.att_dst"][:] = np.einsum("ban,band->ad", g_sd, zt)
                gp[f"l{l}.att_src"][:] = np.einsum("ban,band->ad", g_ss, zt)
                g_zt = g_zt + g_sd[..., None] * att_dst[None, :, None, :] + g_ss[..., None] * att_src[None, :, None, :]
                g_z = g_zt.transpose(0, 2, 1, 3).reshape(B, N, H)
            else:
                g_z = gi.mean_agg.T @ g_u
            gp[f"l{l}.W"][:] = h_in.reshape(-1, H).T @ g_z.reshape(-1, H)
            g_h = g_h + g_z @ p[f"l{l}.W"].T
        g_a = g_h * (1.0 - cache["h0"] ** 2)
        x = cache["x"]
        gp["in.W"][:] = x.reshape(-1, self.in_features).T @ g_a.reshape(-1, H)
        gp["in.b"][:] = g_a.sum(axis=(0, 1))
        g_x = g_a @ p["in.W"].T
        return grad, g_x


# --------------------------------------------------------------------------
# the policy


@dataclass
class GnnParams:
    """A policy network: its configuration plus the flat parameter vector."""

    config: GnnConfig
    vector: np.ndarray

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64)
        n = policy_net(self.config).n_params
        if self.vector.shape != (n,):
            raise ValueError(f"parameter vector has length {self.vector.size}, expected {n}")

    @property
    def net(self) -> GraphNet:
        return policy_net(self.config)

    def copy(self) -> "GnnParams":
        return GnnParams(self.config, self.vector.copy())


_NETS: dict = {}


def policy_net(config: GnnConfig) -> GraphNet:
    key = ("policy", config)
    if key not in _NETS:
        _NETS[key] = GraphNet(config, N_FEATURES, ACTION_DIM)
    return _NETS[key]


def param_count(config: GnnConfig) -> int:
    return policy_net(config).n_params


def init_params(config: GnnConfig, rng: np.random.Generator) -> GnnParams:
    return GnnParams(config, policy_net(config).init(rng))


def flatten(params: GnnParams) -> np.ndarray:
    return params.vector.copy()


def unflatten(vector, config: GnnConfig) -> GnnParams:
    vector = np.asarray(vector, dtype=np.float64)
    n = param_count(config)
    if vector.shape != (n,):
        raise ValueError(f"expected a vector of length {n}, got shape {vector.shape}")
    return GnnParams(config, vector.copy())


@dataclass
class PolicyOutput:
    logits: np.ndarray  # (N, 2, 3)
    probs: np.ndarray  # (N, 2, 3)
    _cache: dict | None = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return self.logits.shape[0]

    @classmethod
    def from_logits(cls, logits) -> "PolicyOutput":
        logits = np.asarray(logits, dtype=np.float64)
        return cls(logits=logits, probs=softmax(logits))

    @classmethod
    def from_probs(cls, probs) -> "PolicyOutput":
        probs = np.asarray(probs, dtype=np.float64)
        return cls(logits=np.log(np.maximum(probs, PROB_FLOOR)), probs=probs)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    w = np.exp(z)
    return w / w.sum(axis=-1, keepdims=True)


def _as_input(g) -> GraphInput:
    return g if isinstance(g, GraphInput) else prepare(g)


def forward(params: GnnParams, g) -> PolicyOutput:
    """Per-node categorical distributions over memory levels for both tensors."""
    gi = _as_input(g)
    if not np.all(np.isfinite(gi.x)):
        raise ValueError("non-finite node features")
    out, cache = params.net.forward(params.vector, gi)
    logits = out[0].reshape(gi.n_nodes, N_TENSORS, N_LEVELS)
    return PolicyOutput(logits=logits, probs=softmax(logits), _cache=cache)


def backward(params: GnnParams, g, adjoint: np.ndarray, out: PolicyOutput | None = None) -> np.ndarray:
    """Gradient of ``sum(adjoint * logits)`` with respect to the flat parameters."""
    gi = _as_input(g)
    if out is None or out._cache is None:
        out = forward(params, gi)
    adj = np.asarray(adjoint, dtype=np.float64).reshape(1, gi.n_nodes, ACTION_DIM)
    grad, _ = params.net.backward(params.vector, gi, out._cache, adj)
    return grad


def sample_action(out: PolicyOutput, mode: str = "greedy", rng: np.random.Generator | None = None) -> MappingDecision:
    if mode == "greedy":
        return MappingDecision(np.argmax(out.probs, axis=-1))
    if mode != "stochastic":
        raise ValueError(f"unknown sampling mode {mode!r}")
    if rng is None:
        raise ValueError("stochastic sampling needs a generator")
    return MappingDecision(categorical(out.probs, rng))


def categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Independent draws along the last axis by inverse CDF."""
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1])[..., None] * cdf[..., -1:]
    return np.minimum((u >= cdf).sum(axis=-1), probs.shape[-1] - 1)


def log_prob_and_entropy(out: PolicyOutput, a: MappingDecision) -> tuple[float, float]:
    """Summed log-probability of ``a`` and the mean per-tensor entropy."""
    p = np.maximum(out.probs, PROB_FLOOR)
    logp = np.log(p)
    chosen = np.take_along_axis(logp, a.levels[..., None], axis=-1)[..., 0]
    entropy = -(out.probs * logp).sum(axis=-1)
    return float(chosen.sum()), float(entropy.mean())


def entropy_grad(probs: np.ndarray) -> np.ndarray:
    """d(mean entropy)/d(probs), with the same floor as :func:`log_prob_and_entropy`."""
    n_dists = probs.shape[0] * probs.shape[1]
    return -(np.log(np.maximum(probs, PROB_FLOOR)) + 1.0) / n_dists


def softmax_backward(probs: np.ndarray, g_probs: np.ndarray) -> np.ndarray:
    return probs * (g_probs - (g_probs * probs).sum(axis=-1, keepdims=True))


# --------------------------------------------------------------------------
# checkpoints: 8-byte magic, 5 little-endian int64 (schema, H, D, A, count), float64 data

_HEADER = struct.Struct("<8s5q")


def save_params(params: GnnParams, path) -> None:
    c = params.config
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_SCHEMA, c.hidden, c.depth, c.heads, params.vector.size))
        fh.write(params.vector.astype("<f8").tobytes())


def load_params(path) -> GnnParams:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise CheckpointError("truncated checkpoint header")
        magic, schema, hidden, depth, heads, count = _HEADER.unpack(head)
        if magic != CHECKPOINT_MAGIC or schema != CHECKPOINT_SCHEMA:
            raise CheckpointError("not a policy checkpoint (bad magic or schema)")
        config = GnnConfig(hidden=hidden, depth=depth, heads=heads)
        if count != param_count(config):
            raise CheckpointError(f"checkpoint declares {count} parameters, architecture needs {param_count(config)}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != count:
        raise CheckpointError(f"checkpoint holds {data.size} values, header says {count}")
    return GnnParams(config, data.astype(np.float64))
