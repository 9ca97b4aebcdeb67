"""Central finite-difference check of the hand-derived reverse pass."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..array_channel import ArrayGeometry, SystemConfig, draw_alpha, synth_channels_batch
from ..pilot import PilotConfig, build_codebooks, complex_noise, noiseless_measurements, stack
from .gain import EstimatorContext
from .model import SequenceData, loss, loss_and_grad, split_real
from .network import NetworkConfig, NetworkParams, init_params


@dataclass(frozen=True)
class TinyProblem:
    data: SequenceData
    net_cfg: NetworkConfig
    params: NetworkParams
    ctx: EstimatorContext


@dataclass(frozen=True)
class GradCheckResult:
    n_coords: int
    worst_rel: float  # over coordinates where either value exceeds ``atol``
    worst_abs: float  # over the remaining (numerically zero) coordinates
    worst_name: str

    def passed(self, rtol: float = 1e-4, atol: float = 1e-8) -> bool:
        return self.worst_rel < rtol and self.worst_abs < atol


def tiny_problem(seed: int = 0, batch: int = 4, n_blocks: int = 2) -> TinyProblem:
    """N_T = 4 (2x2), N_R = 2, K = 2, M = 3, T = 2, n_l = n_f = 3, one hidden layer.

    The subcarrier spacing and distances are chosen so that every term of
    the loss, including the distance-dependent phase rotation, has an
    appreciable derivative.
    """
    rng = np.random.default_rng(seed)
    sys = SystemConfig(1e12, 1e9, ArrayGeometry.half_wave(2, 2, 1e12),
                       ArrayGeometry.half_wave(2, 1, 1e12), 2)
    pilot = PilotConfig(2, 3, 2, 10.0)
    books = build_codebooks(sys, pilot)
    ctx = EstimatorContext.build(sys, books, pilot)
    shape = (batch, n_blocks)
    params = np.stack([rng.uniform(-0.8, 0.8, shape), rng.uniform(-0.5, 0.5, shape),
                       rng.uniform(-0.8, 0.8, shape), rng.uniform(-0.5, 0.5, shape),
                       rng.uniform(0.05, 0.3, shape)], axis=-1)
    h = synth_channels_batch(sys, params, draw_alpha(rng, shape))
    y = noiseless_measurements(h, books, pilot.symbols)
    y = y + complex_noise(rng, y.shape, 0.1)
    x = split_real(stack(y))
    net_cfg = NetworkConfig(input_dim=x.shape[-1], n_l=3, n_f=3, n_m=1, r_max_m=0.4)
    return TinyProblem(SequenceData(x, y, h), net_cfg, init_params(net_cfg, rng), ctx)


def check_gradients(prob: TinyProblem, detach_gain: bool = False, step: float = 1e-5,
                    atol: float = 1e-8) -> GradCheckResult:
    """Compare every weight coordinate's analytic gradient with a central difference.

    With ``detach_gain`` the finite differences hold the gain at its
    unperturbed estimate, matching the reverse pass.
    """
    data, cfg, ctx = prob.data, prob.net_cfg, prob.ctx
    params = prob.params.copy()
    _, grads, _, alpha = loss_and_grad(data, params, cfg, ctx, "train", detach_gain)
    override = alpha if detach_gain else None
    worst_rel, worst_abs, worst_name, n = 0.0, 0.0, "", 0
    for name, w in params.weights.items():
        for idx in np.ndindex(w.shape):
            old = w[idx]
            w[idx] = old + step
            j_plus = loss(data, params, cfg, ctx, "train", override)
            w[idx] = old - step
            j_minus = loss(data, params, cfg, ctx, "train", override)
            w[idx] = old
            fd = (j_plus - j_minus) / (2 * step)
            an = float(grads[name][idx])
            n += 1
            big = max(abs(fd), abs(an))
            if big < atol:
                worst_abs = max(worst_abs, abs(fd - an))
                continue
            rel = abs(fd - an) / big
            if rel > worst_rel:
                worst_rel, worst_name = rel, f"{name}{list(idx)}"
    return GradCheckResult(n, worst_rel, worst_abs, worst_name)
