"""
Permutation-equivariant velocity field V(t, x) with hand-written reverse mode.

Each point is described by its coordinates, its ``k_local`` nearest-neighbour distances and the
mean and covariance of the whole cloud. Those per-point features pass through a residual MLP
conditioned on a sinusoidal time embedding, then through one multi-head self-attention block
(no positional encoding) with a feed-forward layer, and finally a linear map to R^d. Every stage
acts on points independently or symmetrically, so permuting the input columns permutes the
output columns the same way.

Tokens are handled internally as (N, features) arrays; clouds enter and leave as d x N.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, List, Tuple

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import softmax

from wow_flow.errors import ShapeError
from wow_flow.measures import PointCloud
from wow_flow.utils.seeding import SeedLike, as_generator

__all__ = [
    "NetConfig",
    "VelocityNet",
    "AdamState",
    "Params",
    "feature_width",
    "features",
    "time_embedding",
    "param_shapes",
    "init_params",
    "init_net",
    "forward",
    "forward_with_cache",
    "backward",
    "adam_step",
    "parameter_vector",
    "params_from_vector",
    "circles_net_config",
    "mnist_net_config",
]

Params = Dict[str, np.ndarray]

ARCHITECTURES = ("mlp_attention",)


@dataclass(frozen=True)
class NetConfig:
    """
    Hyperparameters of the velocity field.

    Attributes:
        dim: Ambient dimension d.
        k_local: Nearest-neighbour distances per point.
        mlp_layers: Residual MLP blocks.
        hidden_width: MLP width (blocks expand to twice this width internally).
        attn_heads: Attention heads.
        attn_dim: Attention model width; must be divisible by ``attn_heads``.
        time_embed_dim: Sinusoidal embedding size E (even).
        time_freq_min: Lowest embedding frequency.
        time_freq_max: Highest embedding frequency.
        architecture: Model family name.
    """

    dim: int = 2
    k_local: int = 8
    mlp_layers: int = 3
    hidden_width: int = 64
    attn_heads: int = 4
    attn_dim: int = 32
    time_embed_dim: int = 32
    time_freq_min: float = 1.0
    time_freq_max: float = 1000.0
    architecture: str = "mlp_attention"

    def __post_init__(self):
        for name in ("dim", "k_local", "mlp_layers", "hidden_width", "attn_heads", "attn_dim", "time_embed_dim"):
            if getattr(self, name) < 1:
                raise ShapeError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.attn_dim % self.attn_heads:
            raise ShapeError(f"attn_dim {self.attn_dim} is not divisible by attn_heads {self.attn_heads}")
        if self.time_embed_dim % 2:
            raise ShapeError(f"time_embed_dim must be even, got {self.time_embed_dim}")
        if self.architecture not in ARCHITECTURES:
            raise ShapeError(f"unknown architecture '{self.architecture}'")

    # integer and float fields in checkpoint order
    INT_FIELDS = ("dim", "k_local", "mlp_layers", "hidden_width", "attn_heads", "attn_dim", "time_embed_dim")
    FLOAT_FIELDS = ("time_freq_min", "time_freq_max")

    @property
    def head_dim(self) -> int:
        return self.attn_dim // self.attn_heads


def circles_net_config(dim: int = 2) -> NetConfig:
    return NetConfig(dim=dim, mlp_layers=3, hidden_width=64)


def mnist_net_config(dim: int = 2) -> NetConfig:
    return NetConfig(dim=dim, mlp_layers=4, hidden_width=256)


def feature_width(cfg: NetConfig) -> int:
    d = cfg.dim
    return d + cfg.k_local + d + d * (d + 1) // 2


def features(c: PointCloud, k_local: int) -> np.ndarray:
    """
    Per-point features, one row per point.

    Row i holds the coordinates of point i, its ``k_local`` smallest distances to the other
    points in ascending order, the cloud mean and the upper triangle (row-major) of the
    population covariance.

    Raises:
        ShapeError: If the cloud has no more than ``k_local`` points.
    """
    if c.count <= k_local:
        raise ShapeError(f"cloud has {c.count} points, needs more than k_local={k_local}")
    points = c.points
    dist = cdist(points, points)
    np.fill_diagonal(dist, np.inf)
    local = np.sort(dist, axis=1)[:, :k_local]

    mean = points.mean(axis=0)
    centered = points - mean
    cov = centered.T @ centered / c.count
    upper = cov[np.triu_indices(c.dim)]

    count = c.count
    return np.hstack([points, local, np.tile(mean, (count, 1)), np.tile(upper, (count, 1))])


def time_embedding(t: float, cfg: NetConfig) -> np.ndarray:
    """Sinusoidal embedding [sin(w t), cos(w t)] with geometrically spaced w."""
    freqs = np.geomspace(cfg.time_freq_min, cfg.time_freq_max, cfg.time_embed_dim // 2)
    return np.concatenate([np.sin(freqs * t), np.cos(freqs * t)])


def param_shapes(cfg: NetConfig) -> List[Tuple[str, Tuple[int, ...]]]:
    """Parameter names and shapes in their fixed order."""
    f, h, e, a, d = feature_width(cfg), cfg.hidden_width, cfg.time_embed_dim, cfg.attn_dim, cfg.dim
    shapes = [("embed.W", (f, h)), ("embed.b", (h,))]
    for layer in range(cfg.mlp_layers):
        shapes += [
            (f"block{layer}.W1", (h, 2 * h)),
            (f"block{layer}.b1", (2 * h,)),
            (f"block{layer}.T", (e, 2 * h)),
            (f"block{layer}.W2", (2 * h, h)),
            (f"block{layer}.b2", (h,)),
        ]
    shapes += [
        ("proj.W", (h, a)),
        ("proj.b", (a,)),
        ("attn.Wq", (a, a)),
        ("attn.Wk", (a, a)),
        ("attn.Wv", (a, a)),
        ("attn.Wo", (a, a)),
        ("attn.bo", (a,)),
        ("ffn.W1", (a, 4 * a)),
        ("ffn.b1", (4 * a,)),
        ("ffn.W2", (4 * a, a)),
        ("ffn.b2", (a,)),
        ("out.W", (a, d)),
        ("out.b", (d,)),
    ]
    return shapes


def init_params(cfg: NetConfig, seed: SeedLike = None, zero_output: bool = True) -> Params:
    """
    He-style uniform fan-in initialization; biases start at zero.

    Args:
        cfg: Network configuration.
        seed: Seed or generator.
        zero_output: Start the output layer at zero so the initial field vanishes.
    """
    rng = as_generator(seed)
    params: Params = {}
    for name, shape in param_shapes(cfg):
        if len(shape) == 1:
            params[name] = np.zeros(shape)
        elif name == "out.W" and zero_output:
            params[name] = np.zeros(shape)
        else:
            limit = np.sqrt(6.0 / shape[0])
            params[name] = rng.uniform(-limit, limit, size=shape)
    return params


@dataclass
class VelocityNet:
    """A network configuration with its parameter tensors."""

    config: NetConfig
    params: Params = field(default_factory=dict)

    def __post_init__(self):
        expected = dict(param_shapes(self.config))
        if set(self.params) != set(expected):
            missing = sorted(set(expected) - set(self.params))
            extra = sorted(set(self.params) - set(expected))
            raise ShapeError(f"parameter set mismatch (missing {missing}, unexpected {extra})")
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise ShapeError(f"{name} has shape {self.params[name].shape}, expected {shape}")

    @property
    def parameter_count(self) -> int:
        return int(sum(value.size for value in self.params.values()))

    def __call__(self, t: float, c: PointCloud) -> np.ndarray:
        return forward(self, t, c)

    def with_params(self, params: Params) -> "VelocityNet":
        return replace(self, params=params)


def init_net(cfg: NetConfig, seed: SeedLike = None, zero_output: bool = True) -> VelocityNet:
    return VelocityNet(cfg, init_params(cfg, seed, zero_output))


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _split_heads(x: np.ndarray, heads: int) -> np.ndarray:
    count, width = x.shape
    return x.reshape(count, heads, width // heads).transpose(1, 0, 2)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    heads, count, width = x.shape
    return x.transpose(1, 0, 2).reshape(count, heads * width)


def forward_with_cache(net: VelocityNet, t: float, c: PointCloud) -> Tuple[np.ndarray, dict]:
    """Velocity (d x N) plus the activations ``backward`` needs."""
    cfg, p = net.config, net.params
    if c.dim != cfg.dim:
        raise ShapeError(f"cloud dim {c.dim} != network dim {cfg.dim}")

    x = features(c, cfg.k_local)
    gamma = time_embedding(t, cfg)
    cache = {"x": x, "gamma": gamma, "blocks": []}

    h = x @ p["embed.W"] + p["embed.b"]
    for layer in range(cfg.mlp_layers):
        z = h @ p[f"block{layer}.W1"] + p[f"block{layer}.b1"] + gamma @ p[f"block{layer}.T"]
        act = _relu(z)
        cache["blocks"].append((h, z, act))
        h = h + act @ p[f"block{layer}.W2"] + p[f"block{layer}.b2"]
    cache["h"] = h

    proj = h @ p["proj.W"] + p["proj.b"]
    heads = cfg.attn_heads
    q = _split_heads(proj @ p["attn.Wq"], heads)
    k = _split_heads(proj @ p["attn.Wk"], heads)
    v = _split_heads(proj @ p["attn.Wv"], heads)
    scale = 1.0 / np.sqrt(cfg.head_dim)
    att = softmax(q @ k.transpose(0, 2, 1) * scale, axis=-1)
    o = _merge_heads(att @ v)
    u = proj + o @ p["attn.Wo"] + p["attn.bo"]
    cache.update(proj=proj, q=q, k=k, v=v, att=att, o=o, u=u, scale=scale)

    zf = u @ p["ffn.W1"] + p["ffn.b1"]
    af = _relu(zf)
    y = u + af @ p["ffn.W2"] + p["ffn.b2"]
    cache.update(zf=zf, af=af, y=y)

    out = y @ p["out.W"] + p["out.b"]
    return out.T, cache


def forward(net: VelocityNet, t: float, c: PointCloud) -> np.ndarray:
    """
    Evaluate V(t, c).

    Returns:
        np.ndarray: Velocity matrix of shape d x N.

    Raises:
        ShapeError: If the cloud does not fit the network.
    """
    return forward_with_cache(net, t, c)[0]


def backward(net: VelocityNet, cache: dict, upstream: np.ndarray) -> Params:
    """
    Parameter gradients of <upstream, V(t, c)> for the forward pass stored in ``cache``.

    Args:
        net: The network used for the forward pass.
        cache: Activations from ``forward_with_cache``.
        upstream: d x N gradient with respect to the output velocity.

    Returns:
        Params: One gradient per parameter, same names and shapes.
    """
    cfg, p = net.config, net.params
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (cfg.dim, cache["x"].shape[0]):
        raise ShapeError(f"upstream gradient shape {upstream.shape} does not match output")
    grads: Params = {}

    d_out = upstream.T
    grads["out.W"] = cache["y"].T @ d_out
    grads["out.b"] = d_out.sum(axis=0)
    d_y = d_out @ p["out.W"].T

    grads["ffn.W2"] = cache["af"].T @ d_y
    grads["ffn.b2"] = d_y.sum(axis=0)
    d_zf = (d_y @ p["ffn.W2"].T) * (cache["zf"] > 0)
    grads["ffn.W1"] = cache["u"].T @ d_zf
    grads["ffn.b1"] = d_zf.sum(axis=0)
    d_u = d_y + d_zf @ p["ffn.W1"].T

    grads["attn.Wo"] = cache["o"].T @ d_u
    grads["attn.bo"] = d_u.sum(axis=0)
    d_o = _split_heads(d_u @ p["attn.Wo"].T, cfg.attn_heads)
    att, q, k, v, scale = cache["att"], cache["q"], cache["k"], cache["v"], cache["scale"]
    d_att = d_o @ v.transpose(0, 2, 1)
    d_v = att.transpose(0, 2, 1) @ d_o
    d_scores = att * (d_att - np.sum(d_att * att, axis=-1, keepdims=True)) * scale
    d_q = _merge_heads(d_scores @ k)
    d_k = _merge_heads(d_scores.transpose(0, 2, 1) @ q)
    d_v = _merge_heads(d_v)
    proj = cache["proj"]
    grads["attn.Wq"] = proj.T @ d_q
    grads["attn.Wk"] = proj.T @ d_k
    grads["attn.Wv"] = proj.T @ d_v
    d_proj = d_u + d_q @ p["attn.Wq"].T + d_k @ p["attn.Wk"].T + d_v @ p["attn.Wv"].T

    grads["proj.W"] = cache["h"].T @ d_proj
    grads["proj.b"] = d_proj.sum(axis=0)
    d_h = d_proj @ p["proj.W"].T

    gamma = cache["gamma"]
    for layer in reversed(range(cfg.mlp_layers)):
        h_in, z, act = cache["blocks"][layer]
        grads[f"block{layer}.W2"] = act.T @ d_h
        grads[f"block{layer}.b2"] = d_h.sum(axis=0)
        d_z = (d_h @ p[f"block{layer}.W2"].T) * (z > 0)
        grads[f"block{layer}.W1"] = h_in.T @ d_z
        grads[f"block{layer}.b1"] = d_z.sum(axis=0)
        grads[f"block{layer}.T"] = np.outer(gamma, d_z.sum(axis=0))
        d_h = d_h + d_z @ p[f"block{layer}.W1"].T

    grads["embed.W"] = cache["x"].T @ d_h
    grads["embed.b"] = d_h.sum(axis=0)
    return {name: grads[name] for name, _ in param_shapes(cfg)}


@dataclass
class AdamState:
    """
    Adam moments and hyperparameters.

    Attributes:
        lr: Step size.
        beta1: First-moment decay.
        beta2: Second-moment decay.
        eps: Denominator floor.
        step: Number of updates applied so far.
        m: First moments, one per parameter.
        v: Second moments, one per parameter.
    """

    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: Params, lr: float = 5e-4, **kwargs) -> "AdamState":
        zeros = {name: np.zeros_like(value) for name, value in params.items()}
        return cls(lr=lr, m=zeros, v={name: value.copy() for name, value in zeros.items()}, **kwargs)


def adam_step(state: AdamState, params: Params, grads: Params) -> Tuple[Params, AdamState]:
    """
    One bias-corrected Adam update.

    Returns:
        Tuple[Params, AdamState]: New parameters and new state; inputs are left untouched.

    Raises:
        ShapeError: If gradients, moments and parameters disagree in names or shapes.
    """
    if not state.m:
        state = AdamState.for_params(params, state.lr, beta1=state.beta1, beta2=state.beta2, eps=state.eps)
    if set(grads) != set(params) or set(state.m) != set(params):
        raise ShapeError("gradients, moments and parameters must share names")

    step = state.step + 1
    correction1 = 1.0 - state.beta1**step
    correction2 = 1.0 - state.beta2**step
    new_params: Params = {}
    new_m: Params = {}
    new_v: Params = {}
    for name, value in params.items():
        grad = grads[name]
        if grad.shape != value.shape or state.m[name].shape != value.shape:
            raise ShapeError(f"shape mismatch for {name}: {grad.shape} vs {value.shape}")
        new_m[name] = state.beta1 * state.m[name] + (1.0 - state.beta1) * grad
        new_v[name] = state.beta2 * state.v[name] + (1.0 - state.beta2) * grad * grad
        m_hat = new_m[name] / correction1
        v_hat = new_v[name] / correction2
        new_params[name] = value - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_params, replace(state, step=step, m=new_m, v=new_v)


def parameter_vector(params: Params, cfg: NetConfig) -> np.ndarray:
    """All parameters flattened in the fixed order."""
    return np.concatenate([params[name].ravel() for name, _ in param_shapes(cfg)])


def params_from_vector(vector: np.ndarray, cfg: NetConfig) -> Params:
    vector = np.asarray(vector, dtype=np.float64).ravel()
    needed = sum(int(np.prod(shape)) for _, shape in param_shapes(cfg))
    if vector.size != needed:
        raise ShapeError(f"vector has {vector.size} entries, network needs {needed}")
    params: Params = {}
    offset = 0
    for name, shape in param_shapes(cfg):
        size = int(np.prod(shape))
        params[name] = vector[offset:offset + size].reshape(shape).copy()
        offset += size
    return params

