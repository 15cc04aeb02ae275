"""Convolutional Q-network with hand-written backpropagation.

Layout is NHWC throughout. Architecture:

    1x1 merge conv -> ReLU
    [3x3 conv (same padding) -> ReLU -> 2x2 max-pool] for each body width
    [3x3 conv -> ReLU] * extra_blocks
    flatten -> [dense -> ReLU -> dropout] for each hidden width -> dense (n_actions)
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..actions import N_ACTIONS


@dataclass(frozen=True)
class QNetworkConfig:
    input_shape: tuple = (64, 64, 12)
    merge_filters: int = 16
    conv_filters: tuple = (32, 64, 64)
    fc_units: tuple = (512, 128)
    dropout: float = 0.5
    n_actions: int = N_ACTIONS
    extra_blocks: int = 0

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "conv_filters", tuple(int(v) for v in self.conv_filters))
        object.__setattr__(self, "fc_units", tuple(int(v) for v in self.fc_units))
        h, w, c = self.input_shape
        pool = 2 ** len(self.conv_filters)
        if h % pool or w % pool:
            raise ValueError(f"input {h}x{w} is not divisible by the total pooling factor {pool}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @property
    def flat_size(self) -> int:
        h, w, _ = self.input_shape
        pool = 2 ** len(self.conv_filters)
        last = self.conv_filters[-1] if self.conv_filters else self.merge_filters
        return (h // pool) * (w // pool) * last

    def param_shapes(self) -> dict[str, tuple]:
        shapes = {}
        c = self.input_shape[2]
        shapes["merge.W"] = (c, self.merge_filters)
        shapes["merge.b"] = (self.merge_filters,)
        c = self.merge_filters
        for i, f in enumerate(self.conv_filters):
            shapes[f"conv{i}.W"] = (3, 3, c, f)
            shapes[f"conv{i}.b"] = (f,)
            c = f
        for i in range(self.extra_blocks):
            shapes[f"extra{i}.W"] = (3, 3, c, c)
            shapes[f"extra{i}.b"] = (c,)
        n = self.flat_size
        for i, u in enumerate(self.fc_units):
            shapes[f"fc{i}.W"] = (n, u)
            shapes[f"fc{i}.b"] = (u,)
            n = u
        shapes["out.W"] = (n, self.n_actions)
        shapes["out.b"] = (self.n_actions,)
        return shapes

    def n_params(self) -> int:
        return int(sum(np.prod(s) for s in self.param_shapes().values()))

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def init_params(config: QNetworkConfig, rng: np.random.Generator, dtype=np.float32) -> dict[str, np.ndarray]:
    """He-normal weights, zero biases."""
    params = {}
    for name, shape in config.param_shapes().items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            fan_in = int(np.prod(shape[:-1]))
            params[name] = (rng.normal(size=shape) * np.sqrt(2.0 / fan_in)).astype(dtype)
    return params


def zeros_like_params(params):
    return {k: np.zeros_like(v) for k, v in params.items()}


# --- layer primitives ----------------------------------------------------


def _im2col3(x):
    """(B, H, W, C) -> (B*H*W, 9*C) patches for a 3x3 same-padded conv."""
    b, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = np.empty((b, h, w, 3, 3, c), dtype=x.dtype)
    for i in range(3):
        for j in range(3):
            cols[:, :, :, i, j, :] = xp[:, i : i + h, j : j + w, :]
    return cols.reshape(b * h * w, 9 * c)


def _col2im3(dcols, shape):
    b, h, w, c = shape
    dcols = dcols.reshape(b, h, w, 3, 3, c)
    dxp = np.zeros((b, h + 2, w + 2, c), dtype=dcols.dtype)
    for i in range(3):
        for j in range(3):
            dxp[:, i : i + h, j : j + w, :] += dcols[:, :, :, i, j, :]
    return dxp[:, 1:-1, 1:-1, :]


def conv3x3_forward(x, W, b):
    bsz, h, w, _ = x.shape
    cols = _im2col3(x)
    out = cols @ W.reshape(-1, W.shape[-1]) + b
    return out.reshape(bsz, h, w, -1), cols


def conv3x3_backward(dout, cols, x_shape, W):
    f = W.shape[-1]
    d2 = dout.reshape(-1, f)
    dW = (cols.T @ d2).reshape(W.shape)
    db = d2.sum(axis=0)
    dx = _col2im3(d2 @ W.reshape(-1, f).T, x_shape)
    return dx, dW, db


def maxpool2_forward(x):
    """2x2 max-pool; ``idx`` records which window element (0..3, row-major) won, first max on ties."""
    a, b, c, d = x[:, 0::2, 0::2], x[:, 0::2, 1::2], x[:, 1::2, 0::2], x[:, 1::2, 1::2]
    m = np.maximum(np.maximum(a, b), np.maximum(c, d))
    idx = np.where(a == m, 0, np.where(b == m, 1, np.where(c == m, 2, 3))).astype(np.int8)
    return m, idx


def maxpool2_backward(dout, idx, x_shape):
    dx = np.zeros(x_shape, dtype=dout.dtype)
    zero = dout.dtype.type(0)
    dx[:, 0::2, 0::2] = np.where(idx == 0, dout, zero)
    dx[:, 0::2, 1::2] = np.where(idx == 1, dout, zero)
    dx[:, 1::2, 0::2] = np.where(idx == 2, dout, zero)
    dx[:, 1::2, 1::2] = np.where(idx == 3, dout, zero)
    return dx


# --- network -------------------------------------------------------------


def _dropout_mask(rng, shape, p, dtype):
    if rng is None or p <= 0.0:
        return None
    keep = 1.0 - p
    return ((rng.random(shape) < keep) / keep).astype(dtype)


def forward(params, config: QNetworkConfig, obs, dropout_rng=None, return_cache=False):
    """Action values ``(B, n_actions)`` for observations ``(B, H, W, C)`` or a single ``(H, W, C)``.

    Dropout is applied only when ``dropout_rng`` is given.
    """
    x = np.asarray(obs, dtype=params["out.W"].dtype)
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.shape[1:] != config.input_shape:
        raise ValueError(f"observation shape {x.shape[1:]} does not match network input {config.input_shape}")
    cache = []
    b, h, w, c = x.shape
    # 1x1 merge conv is a per-pixel dense layer
    z = x.reshape(-1, c) @ params["merge.W"] + params["merge.b"]
    a = np.maximum(z, 0).reshape(b, h, w, -1)
    cache.append(("merge", x, z))
    for i in range(len(config.conv_filters)):
        z, cols = conv3x3_forward(a, params[f"conv{i}.W"], params[f"conv{i}.b"])
        r = np.maximum(z, 0)
        pooled, idx = maxpool2_forward(r)
        cache.append((f"conv{i}", a.shape, cols, z, idx))
        a = pooled
    for i in range(config.extra_blocks):
        z, cols = conv3x3_forward(a, params[f"extra{i}.W"], params[f"extra{i}.b"])
        cache.append((f"extra{i}", a.shape, cols, z))
        a = np.maximum(z, 0)
    feat_shape = a.shape
    a = a.reshape(b, -1)
    for i in range(len(config.fc_units)):
        z = a @ params[f"fc{i}.W"] + params[f"fc{i}.b"]
        r = np.maximum(z, 0)
        mask = _dropout_mask(dropout_rng, r.shape, config.dropout, r.dtype)
        out = r if mask is None else r * mask
        cache.append((f"fc{i}", a, z, mask))
        a = out
    q = a @ params["out.W"] + params["out.b"]
    cache.append(("out", a))
    if single:
        q = q[0]
    if return_cache:
        return q, (cache, feat_shape)
    return q


def backward(params, config: QNetworkConfig, dq, cache):
    """Gradients of a scalar with respect to every parameter, given ``dq = dL/dq``."""
    layers, feat_shape = cache
    grads = {}
    _, a = layers[-1]
    grads["out.W"] = a.T @ dq
    grads["out.b"] = dq.sum(axis=0)
    da = dq @ params["out.W"].T
    k = len(layers) - 2
    for i in reversed(range(len(config.fc_units))):
        _, a_in, z, mask = layers[k]
        k -= 1
        if mask is not None:
            da = da * mask
        dz = da * (z > 0)
        grads[f"fc{i}.W"] = a_in.T @ dz
        grads[f"fc{i}.b"] = dz.sum(axis=0)
        da = dz @ params[f"fc{i}.W"].T
    da = da.reshape(feat_shape)
    for i in reversed(range(config.extra_blocks)):
        _, x_shape, cols, z = layers[k]
        k -= 1
        dz = da * (z > 0)
        da, grads[f"extra{i}.W"], grads[f"extra{i}.b"] = conv3x3_backward(dz, cols, x_shape, params[f"extra{i}.W"])
    for i in reversed(range(len(config.conv_filters))):
        _, x_shape, cols, z, idx = layers[k]
        k -= 1
        dr = maxpool2_backward(da, idx, z.shape)
        dz = dr * (z > 0)
        da, grads[f"conv{i}.W"], grads[f"conv{i}.b"] = conv3x3_backward(dz, cols, x_shape, params[f"conv{i}.W"])
    _, x, z = layers[k]
    dz = da.reshape(z.shape) * (z > 0)
    grads["merge.W"] = x.reshape(-1, x.shape[-1]).T @ dz
    grads["merge.b"] = dz.sum(axis=0)
    return grads


def loss_and_gradients(params, config: QNetworkConfig, obs, actions, targets, dropout_rng=None):
    """Mean squared TD error over the batch and its parameter gradients.

    Only the taken action's output receives gradient; ``targets`` are constants.
    """
    actions = np.asarray(actions, dtype=int)
    targets = np.asarray(targets, dtype=float)
    obs = np.asarray(obs)
    if obs.ndim != 4 or len(actions) != len(obs) or len(targets) != len(obs):
        raise ValueError(
            f"batch shapes disagree: obs {obs.shape}, actions {actions.shape}, targets {targets.shape}"
        )
    q, cache = forward(params, config, obs, dropout_rng=dropout_rng, return_cache=True)
    rows = np.arange(len(actions))
    q_taken = q[rows, actions].astype(float)
    diff = targets - q_taken
    loss = float(np.mean(diff * diff))
    dq = np.zeros_like(q)
    dq[rows, actions] = (-2.0 * diff / len(actions)).astype(q.dtype)
    return loss, backward(params, config, dq, cache)


def global_norm(grads) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))


def clip_by_global_norm(grads, max_norm: float):
    norm = global_norm(grads)
    if max_norm is None or norm <= max_norm or norm == 0.0:
        return grads, norm
    scale = max_norm / norm
    return {k: (g * scale).astype(g.dtype) for k, g in grads.items()}, norm


class Adam:
    """Adam with bias correction, updating parameter arrays in place."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = zeros_like_params(params)
        self.v = zeros_like_params(params)
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            params[k] -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(params[k].dtype)
