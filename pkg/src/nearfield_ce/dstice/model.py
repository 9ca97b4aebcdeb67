"""End-to-end estimator: measurements -> large-scale parameters -> gain -> channel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..array_channel import LargeScaleParams
from ..pilot import MeasurementBlock
from .gain import EstimatorContext, channel_loss, estimate_gains
from .network import NetworkConfig, NetworkParams, network_backward, network_forward


@dataclass(frozen=True)
class SequenceData:
    """Sequences of ``L`` blocks: prepared inputs, raw measurements and true channels."""

    x: np.ndarray  # (S, L, 2KMT) real, unscaled
    y: np.ndarray  # (S, L, K, T, M) complex
    h: np.ndarray  # (S, L, K, n_r, n_t) complex

    def __len__(self):
        return self.x.shape[0]

    def take(self, idx) -> "SequenceData":
        return SequenceData(self.x[idx], self.y[idx], self.h[idx])


def split_real(stacked: np.ndarray) -> np.ndarray:
    """``[Re(y); Im(y)]`` along the last axis."""
    s = np.asarray(stacked)
    return np.concatenate([s.real, s.imag], axis=-1).astype(float)


def merge_real(vec: np.ndarray) -> np.ndarray:
    v = np.asarray(vec, float)
    half = v.shape[-1] // 2
    return v[..., :half] + 1j * v[..., half:]


def input_scale_from(stacked_train: np.ndarray) -> float:
    """``1 / sqrt(mean |y|^2)`` over all training measurements."""
    power = float(np.mean(np.abs(stacked_train) ** 2))
    return 1.0 / np.sqrt(power) if power > 0 else 1.0


def prepare_input(m: MeasurementBlock | np.ndarray, scale: float = 1.0) -> np.ndarray:
    stacked = m.stacked if isinstance(m, MeasurementBlock) else m
    return scale * split_real(stacked)


def forward(x_seq: np.ndarray, params: NetworkParams, cfg: NetworkConfig,
            mode: str = "infer") -> np.ndarray:
    """Estimates ``(batch, L, 5)`` for unscaled real inputs ``(batch, L, 2KMT)``."""
    return network_forward(np.asarray(x_seq) * params.input_scale, params, cfg, mode).estimates


def forward_params(x_seq: np.ndarray, params: NetworkParams,
                   cfg: NetworkConfig) -> list[LargeScaleParams]:
    """Inference on a single sequence ``(L, 2KMT)`` returning one parameter set per block."""
    est = forward(np.asarray(x_seq)[None], params, cfg, "infer")[0]
    return [LargeScaleParams.from_array(e) for e in est]


def estimate_channels(data: SequenceData, params: NetworkParams, cfg: NetworkConfig,
                      ctx: EstimatorContext, sys) -> np.ndarray:
    """Full two-stage estimate ``(S, L, K, n_r, n_t)`` in inference mode."""
    from .gain import reconstruct

    est = forward(data.x, params, cfg, "infer")
    n_seq, n_blk = est.shape[:2]
    flat = est.reshape(-1, 5)
    y = data.y.reshape((-1,) + data.y.shape[2:])
    alpha = estimate_gains(y, flat, ctx)
    h_hat = reconstruct(flat, alpha, sys)
    return h_hat.reshape((n_seq, n_blk) + h_hat.shape[1:])


def _flatten(data: SequenceData):
    y = data.y.reshape((-1,) + data.y.shape[2:])
    h = data.h.reshape((-1,) + data.h.shape[2:])
    return y, h


def loss(data: SequenceData, params: NetworkParams, cfg: NetworkConfig, ctx: EstimatorContext,
         mode: str = "train", alpha_override=None) -> float:
    """Mean over sequences of ``(1/L) sum_l sum_k ||H - H_hat||_F^2``."""
    fwd = network_forward(data.x * params.input_scale, params, cfg, mode)
    y, h = _flatten(data)
    scale = 1.0 / y.shape[0]
    val, _, _ = channel_loss(fwd.estimates.reshape(-1, 5), y, h, ctx, scale,
                             alpha_override=alpha_override, need_grad=False)
    return val


def loss_and_grad(data: SequenceData, params: NetworkParams, cfg: NetworkConfig,
                  ctx: EstimatorContext, mode: str = "train", detach_gain: bool = False,
                  alpha_override=None):
    """Loss, gradient for every weight tensor, updated BN buffers and the gain estimates."""
    fwd = network_forward(data.x * params.input_scale, params, cfg, mode, keep_cache=True)
    y, h = _flatten(data)
    scale = 1.0 / y.shape[0]
    val, d_est, alpha = channel_loss(fwd.estimates.reshape(-1, 5), y, h, ctx, scale,
                                     detach_gain=detach_gain, alpha_override=alpha_override)
    grads = network_backward(d_est, fwd, params, cfg, mode)
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in {name}")
    return val, grads, fwd.new_buffers, alpha
