"""Adam training loop with a windowed fractional-change stopping rule."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .gain import EstimatorContext
from .model import SequenceData, input_scale_from, loss, merge_real
from .model import loss_and_grad
from .network import NetworkConfig, NetworkParams, init_params

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    def __init__(self, iteration: int, detail: str = ""):
        super().__init__(f"non-finite loss at iteration {iteration}{': ' + detail if detail else ''}")
        self.iteration = iteration


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 32
    max_iters: int = 20000
    eps_converge: float = 1e-4
    window: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    detach_gain: bool = False
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1 or self.window < 1 or self.max_iters < 0:
            raise ValueError("batch_size, window must be >= 1 and max_iters >= 0")
        if not self.eps_converge > 0:
            raise ValueError("eps_converge must be positive")


@dataclass
class TrainResult:
    params: NetworkParams
    losses: list[float]
    smoothed: list[float] = field(default_factory=list)  # one per completed window
    val_losses: list[float] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0


class Adam:
    def __init__(self, shapes: dict[str, tuple], lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros(s) for k, s in shapes.items()}
        self.v = {k: np.zeros(s) for k, s in shapes.items()}
        self.t = 0

    def step(self, weights: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k in sorted(weights):
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            weights[k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def converged(prev: float, cur: float, eps: float) -> bool:
    """Absolute fractional change ``|cur - prev| / prev < eps``."""
    return abs(cur - prev) < eps * abs(prev)


def _batches(n: int, size: int, rng: np.random.Generator):
    size = min(size, n)
    while True:
        perm = rng.permutation(n)
        for start in range(0, n - size + 1, size):
            yield np.sort(perm[start:start + size])


def train(data: SequenceData, net_cfg: NetworkConfig, train_cfg: TrainConfig,
          ctx: EstimatorContext, val_data: SequenceData | None = None,
          params: NetworkParams | None = None, on_window=None) -> TrainResult:
    """Train from ``params`` (fresh initialization when None) on ``data``.

    The per-iteration minibatch losses are averaged over non-overlapping
    windows of ``train_cfg.window`` iterations; training stops at the end of
    the first window whose average differs from the previous window's (for
    the first window: the initial minibatch loss) by a fractional amount
    below ``eps_converge``, or after ``max_iters``.
    ``on_window(iteration, params, result)`` is called after every window.
    """
    rng = np.random.default_rng(train_cfg.seed)
    if params is None:
        scale = input_scale_from(merge_real(data.x))
        params = init_params(net_cfg, rng, input_scale=scale)
    else:
        params = params.copy()
    opt = Adam({k: v.shape for k, v in params.weights.items()}, train_cfg.learning_rate,
               train_cfg.beta1, train_cfg.beta2, train_cfg.adam_eps)
    batches = _batches(len(data), train_cfg.batch_size, rng)
    result = TrainResult(params, [])
    window_sum = 0.0
    for it in range(train_cfg.max_iters):
        batch = data.take(next(batches))
        try:
            val, grads, new_buf, _ = loss_and_grad(batch, params, net_cfg, ctx, "train",
                                                   train_cfg.detach_gain)
        except FloatingPointError as exc:
            raise TrainingDiverged(it, str(exc)) from exc
        if not np.isfinite(val):
            raise TrainingDiverged(it)
        result.losses.append(val)
        params.buffers.update(new_buf)
        opt.step(params.weights, grads)
        window_sum += val
        if (it + 1) % train_cfg.window == 0:
            result.smoothed.append(window_sum / train_cfg.window)
            window_sum = 0.0
            if val_data is not None:
                result.val_losses.append(loss(val_data, params, net_cfg, ctx, "infer"))
            if on_window is not None:
                on_window(it + 1, params, result)
            prev = result.smoothed[-2] if len(result.smoothed) > 1 else result.losses[0]
            cur = result.smoothed[-1]
            log.debug("iter %d smoothed loss %.6g", it + 1, cur)
            if converged(prev, cur, train_cfg.eps_converge):
                result.converged = True
                break
    result.iterations = len(result.losses)
    return result


def smooth_history(losses, window: int = 100) -> list[tuple[int, float]]:
    """``(start_iteration, mean loss)`` for consecutive windows (last one may be partial)."""
    losses = np.asarray(losses, float)
    return [(i, float(losses[i:i + window].mean())) for i in range(0, len(losses), window)]
