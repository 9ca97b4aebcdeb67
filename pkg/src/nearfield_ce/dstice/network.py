"""LSTM encoder and batch-normalized fully connected head.

Weights live in a flat ``dict[str, ndarray]`` so the optimizer, gradient
check and checkpoint code can treat every tensor uniformly. Gate tensors are
stacked on a leading axis in the order ``(input, forget, output, candidate)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

GATES = ("i", "f", "o", "c")
N_OUT = 5


@dataclass(frozen=True)
class NetworkConfig:
    input_dim: int
    n_l: int = 64
    n_f: int = 64
    n_m: int = 2
    n_lstm_layers: int = 1
    r_max_m: float = 20.0
    leaky_slope: float = 0.1
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5

    def __post_init__(self):
        if min(self.input_dim, self.n_l, self.n_f, self.n_lstm_layers) < 1 or self.n_m < 0:
            raise ValueError("network widths must be >= 1")
        if not self.r_max_m > 0:
            raise ValueError("r_max_m must be positive")
        if not 0 < self.bn_momentum < 1:
            raise ValueError("bn_momentum must lie in (0, 1)")


@dataclass
class NetworkParams:
    weights: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray]  # batch-norm running mean / variance
    input_scale: float = 1.0

    def copy(self) -> "NetworkParams":
        return NetworkParams({k: v.copy() for k, v in self.weights.items()},
                             {k: v.copy() for k, v in self.buffers.items()},
                             self.input_scale)

    def n_weights(self) -> int:
        return sum(v.size for v in self.weights.values())


@dataclass
class CellState:
    c: np.ndarray
    z: np.ndarray


def init_params(cfg: NetworkConfig, rng: np.random.Generator, input_scale: float = 1.0,
                forget_bias: float = 1.0) -> NetworkParams:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases except the forget gate."""

    def uni(shape, fan_in):
        bound = 1.0 / math.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    w: dict[str, np.ndarray] = {}
    buf: dict[str, np.ndarray] = {}
    n_in = cfg.input_dim
    for j in range(cfg.n_lstm_layers):
        w[f"lstm{j}.W"] = uni((4, cfg.n_l, n_in), n_in)
        w[f"lstm{j}.U"] = uni((4, cfg.n_l, cfg.n_l), cfg.n_l)
        b = np.zeros((4, cfg.n_l))
        b[1] = forget_bias
        w[f"lstm{j}.b"] = b
        n_in = cfg.n_l
    for i in range(cfg.n_m + 1):
        fan = cfg.n_l if i == 0 else cfg.n_f
        w[f"fc{i}.W"] = uni((cfg.n_f, fan), fan)
        w[f"fc{i}.b"] = np.zeros(cfg.n_f)
        w[f"bn{i}.gamma"] = np.ones(cfg.n_f)
        w[f"bn{i}.beta"] = np.zeros(cfg.n_f)
        buf[f"bn{i}.mean"] = np.zeros(cfg.n_f)
        buf[f"bn{i}.var"] = np.ones(cfg.n_f)
    w["out.W"] = uni((N_OUT, cfg.n_f), cfg.n_f)
    w["out.b"] = np.zeros(N_OUT)
    return NetworkParams(w, buf, input_scale)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def leaky_relu(x, slope=0.1):
    return np.maximum(slope * x, x)


# ---------------------------------------------------------------------------
# LSTM


def lstm_step(x: np.ndarray, prev: CellState, params: NetworkParams, layer: int = 0) -> CellState:
    """One LSTM cell update; ``x`` may be a vector or a ``(batch, in)`` array."""
    c, z, _ = _lstm_step(x, prev.c, prev.z, params.weights, layer)
    return CellState(c, z)


def _lstm_step(x, c_prev, z_prev, w, layer):
    W, U, b = w[f"lstm{layer}.W"], w[f"lstm{layer}.U"], w[f"lstm{layer}.b"]
    n = U.shape[1]
    a = x @ W.reshape(4 * n, -1).T + z_prev @ U.reshape(4 * n, n).T + b.ravel()
    a = a.reshape(a.shape[:-1] + (4, n))
    i, f, o = sigmoid(a[..., 0, :]), sigmoid(a[..., 1, :]), sigmoid(a[..., 2, :])
    g = np.tanh(a[..., 3, :])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    z = o * tc
    return c, z, (x, c_prev, z_prev, i, f, o, g, tc)


def _lstm_backward(dz_seq, caches, w, layer, grads):
    """BPTT through one layer. Returns the gradient with respect to the layer input."""
    W, U = w[f"lstm{layer}.W"], w[f"lstm{layer}.U"]
    n = U.shape[1]
    w_flat, u_flat = W.reshape(4 * n, -1), U.reshape(4 * n, n)
    dW = np.zeros_like(w_flat)
    dU = np.zeros_like(u_flat)
    db = np.zeros(4 * n)
    n_steps = dz_seq.shape[1]
    dx_seq = np.zeros(dz_seq.shape[:2] + (w_flat.shape[1],))
    dz_next = np.zeros_like(dz_seq[:, 0])
    dc_next = np.zeros_like(dz_seq[:, 0])
    for l in reversed(range(n_steps)):
        x, c_prev, z_prev, i, f, o, g, tc = caches[l]
        dz = dz_seq[:, l] + dz_next
        do = dz * tc
        dc = dc_next + dz * o * (1.0 - tc * tc)
        di, df, dg = dc * g, dc * c_prev, dc * i
        da = np.concatenate([di * i * (1.0 - i), df * f * (1.0 - f), do * o * (1.0 - o),
                             dg * (1.0 - g * g)], axis=-1)
        dW += da.T @ x
        dU += da.T @ z_prev
        db += da.sum(axis=0)
        dz_next = da @ u_flat
        dc_next = dc * f
        dx_seq[:, l] = da @ w_flat
    grads[f"lstm{layer}.W"] = dW.reshape(W.shape)
    grads[f"lstm{layer}.U"] = dU.reshape(U.shape)
    grads[f"lstm{layer}.b"] = db.reshape(4, n)
    return dx_seq


def lstm_sequence(x_seq: np.ndarray, params: NetworkParams, cfg: NetworkConfig):
    """Run the (possibly stacked) LSTM over ``x_seq`` of shape ``(batch, L, in)`` from a zero state.

    Returns the top-layer outputs ``(batch, L, n_l)`` and per-layer caches.
    """
    h = x_seq
    all_caches = []
    for j in range(cfg.n_lstm_layers):
        batch, n_steps = h.shape[:2]
        c = np.zeros((batch, cfg.n_l))
        z = np.zeros((batch, cfg.n_l))
        out = np.empty((batch, n_steps, cfg.n_l))
        caches = []
        for l in range(n_steps):
            c, z, cache = _lstm_step(h[:, l], c, z, params.weights, j)
            out[:, l] = z
            caches.append(cache)
        all_caches.append(caches)
        h = out
    return h, all_caches


# ---------------------------------------------------------------------------
# FC head


def fc_head(z: np.ndarray, params: NetworkParams, cfg: NetworkConfig, mode: str = "infer",
            return_cache: bool = False):
    """Map LSTM outputs ``(N, n_l)`` to tanh-bounded estimates ``(N, 5)``.

    In ``mode="train"`` batch statistics over the ``N`` rows are used and the
    updated running statistics are returned alongside (the input ``params``
    is not modified). ``mode="infer"`` uses the running statistics.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"unknown mode {mode!r}")
    w = params.weights
    z = np.atleast_2d(z)
    if mode == "train" and z.shape[0] < 2:
        raise ValueError("train-mode batch normalization needs at least two rows")
    h = z
    caches = []
    new_buffers = {}
    for i in range(cfg.n_m + 1):
        pre = h @ w[f"fc{i}.W"].T + w[f"fc{i}.b"]
        if mode == "train":
            mean = pre.mean(axis=0)
            var = pre.var(axis=0)
            m = cfg.bn_momentum
            new_buffers[f"bn{i}.mean"] = m * params.buffers[f"bn{i}.mean"] + (1 - m) * mean
            new_buffers[f"bn{i}.var"] = m * params.buffers[f"bn{i}.var"] + (1 - m) * var
        else:
            mean = params.buffers[f"bn{i}.mean"]
            var = params.buffers[f"bn{i}.var"]
        inv_std = 1.0 / np.sqrt(var + cfg.bn_eps)
        xhat = (pre - mean) * inv_std
        bn = w[f"bn{i}.gamma"] * xhat + w[f"bn{i}.beta"]
        caches.append((h, xhat, inv_std, bn))
        h = leaky_relu(bn, cfg.leaky_slope)
    out = np.tanh(h @ w["out.W"].T + w["out.b"])
    if return_cache:
        return out, new_buffers, (caches, h, out)
    return out


def _fc_backward(d_out, cache, params, cfg, mode, grads):
    """Reverse pass of ``fc_head`` given the gradient w.r.t. its (tanh) outputs."""
    caches, h_last, out = cache
    w = params.weights
    d_pre = d_out * (1.0 - out * out)
    grads["out.W"] = d_pre.T @ h_last
    grads["out.b"] = d_pre.sum(axis=0)
    dh = d_pre @ w["out.W"]
    for i in reversed(range(cfg.n_m + 1)):
        h_in, xhat, inv_std, bn = caches[i]
        dbn = dh * np.where(bn > 0, 1.0, cfg.leaky_slope)
        grads[f"bn{i}.gamma"] = (dbn * xhat).sum(axis=0)
        grads[f"bn{i}.beta"] = dbn.sum(axis=0)
        dxhat = dbn * w[f"bn{i}.gamma"]
        if mode == "train":
            dpre = inv_std * (dxhat - dxhat.mean(axis=0) - xhat * (dxhat * xhat).mean(axis=0))
        else:
            dpre = dxhat * inv_std
        grads[f"fc{i}.W"] = dpre.T @ h_in
        grads[f"fc{i}.b"] = dpre.sum(axis=0)
        dh = dpre @ w[f"fc{i}.W"]
    return dh


def outputs_to_params(out: np.ndarray, r_max: float) -> np.ndarray:
    """``(..., 5)`` tanh outputs to physical ``(theta_r, phi_r, theta_t, phi_t, r)``."""
    est = np.array(out, dtype=float, copy=True)
    est[..., 4] = r_max * (out[..., 4] + 1.0) / 2.0
    return est


def params_to_outputs(est: np.ndarray, r_max: float) -> np.ndarray:
    out = np.array(est, dtype=float, copy=True)
    out[..., 4] = 2.0 * est[..., 4] / r_max - 1.0
    return out


@dataclass
class ForwardResult:
    estimates: np.ndarray  # (batch, L, 5) physical units
    new_buffers: dict = field(default_factory=dict)
    cache: tuple | None = None


def network_forward(x_seq: np.ndarray, params: NetworkParams, cfg: NetworkConfig,
                    mode: str = "infer", keep_cache: bool = False) -> ForwardResult:
    """Prepared inputs ``(batch, L, input_dim)`` -> large-scale estimates ``(batch, L, 5)``."""
    x_seq = np.asarray(x_seq, float)
    if x_seq.ndim == 2:
        x_seq = x_seq[None]
    batch, n_steps = x_seq.shape[:2]
    z_top, lstm_caches = lstm_sequence(x_seq, params, cfg)
    out, new_buf, fc_cache = fc_head(z_top.reshape(batch * n_steps, cfg.n_l), params, cfg, mode,
                                     return_cache=True)
    est = outputs_to_params(out, cfg.r_max_m).reshape(batch, n_steps, N_OUT)
    cache = (lstm_caches, fc_cache, batch, n_steps) if keep_cache else None
    return ForwardResult(est, new_buf, cache)


def network_backward(d_est: np.ndarray, fwd: ForwardResult, params: NetworkParams,
                     cfg: NetworkConfig, mode: str) -> dict[str, np.ndarray]:
    """Gradients of a scalar w.r.t. every weight, given its gradient w.r.t. the estimates."""
    lstm_caches, fc_cache, batch, n_steps = fwd.cache
    d_out = np.array(d_est.reshape(batch * n_steps, N_OUT), copy=True)
    d_out[:, 4] *= cfg.r_max_m / 2.0
    grads: dict[str, np.ndarray] = {}
    dz = _fc_backward(d_out, fc_cache, params, cfg, mode, grads)
    dz = dz.reshape(batch, n_steps, cfg.n_l)
    for j in reversed(range(cfg.n_lstm_layers)):
        dz = _lstm_backward(dz, lstm_caches[j], params.weights, j, grads)
    return grads
