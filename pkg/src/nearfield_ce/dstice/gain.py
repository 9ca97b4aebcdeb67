"""Path-gain estimation, parametric reconstruction and the Frobenius loss.

Complex gradients follow the paired-real convention
``grad_z = dJ/dRe(z) + 1j * dJ/dIm(z)`` so that ``dJ = Re(conj(grad_z) dz)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..array_channel import LargeScaleParams, SystemConfig, synth_channels_batch
from ..pilot import Codebooks, MeasurementBlock, PilotConfig


@dataclass(frozen=True)
class EstimatorContext:
    """Constants shared by every block: codebooks, pilots and array index grids."""

    fs: np.ndarray  # (K, n_t, M)  F S[k]
    w: np.ndarray  # (n_r, T)
    omega: np.ndarray  # (K,) 2 pi k f_s / c
    ue_xy: tuple[np.ndarray, np.ndarray]
    bs_xy: tuple[np.ndarray, np.ndarray]
    d_ue: float
    d_bs: float

    @classmethod
    def build(cls, sys: SystemConfig, books: Codebooks, cfg: PilotConfig) -> "EstimatorContext":
        fs = books.precoder_f[None, :, :] * cfg.symbols[:, None, :]
        return cls(fs, books.combiner_w, sys.delay_rate(), sys.ue_array.element_indices(),
                   sys.bs_array.element_indices(), sys.ue_array.spacing_d,
                   sys.bs_array.spacing_d)


def _check_visible(den: np.ndarray, ctx: EstimatorContext) -> None:
    # ``den`` is bounded by n_r T n_t sum_k ||F S[k]||^2; treat 1e-20 of that as zero
    bound = len(ctx.ue_xy[0]) * ctx.w.shape[1] * len(ctx.bs_xy[0]) * ctx.fs[..., 0, :].size
    if np.any(den <= 1e-20 * bound):
        raise ValueError("estimated beams are orthogonal to every pilot beam")


def _phase_and_partials(r, th, ph, xy, d):
    x, y = xy
    r = r[:, None]
    proj = x * th[:, None] + y * ph[:, None]
    quad = x * x + y * y - proj * proj
    psi = np.pi * (-proj + d / (2.0 * r) * quad)
    common = -np.pi * d / r * proj
    d_th = -np.pi * x + common * x
    d_ph = -np.pi * y + common * y
    d_r = -np.pi * d / (2.0 * r * r) * quad
    return psi, d_th, d_ph, d_r


def channel_loss(est: np.ndarray, y: np.ndarray, h: np.ndarray, ctx: EstimatorContext,
                 scale: float, detach_gain: bool = False, alpha_override=None,
                 need_grad: bool = True):
    """Loss ``scale * sum ||H[k] - H_hat[k]||_F^2`` over blocks, with its gradient.

    Parameters
    ----------
    est : (N, 5) large-scale estimates ``(theta_r, phi_r, theta_t, phi_t, r)``.
    y : (N, K, T, M) measurements.
    h : (N, K, n_r, n_t) true channels.
    detach_gain : treat the gain estimate as a constant in the reverse pass.
    alpha_override : use these gains instead of the closed-form estimate.

    Returns
    -------
    loss, d_est (N, 5) or None, alpha (N,)
    """
    th_r, ph_r, th_t, ph_t, r = est.T
    psi_r, dthr, dphr, drr = _phase_and_partials(r, th_r, ph_r, ctx.ue_xy, ctx.d_ue)
    psi_t, dtht, dpht, drt = _phase_and_partials(r, th_t, ph_t, ctx.bs_xy, ctx.d_bs)
    u = np.exp(1j * psi_r)
    v = np.exp(1j * psi_t)
    p = np.exp(-1j * r[:, None] * ctx.omega)

    g = u @ ctx.w.conj()  # W^H u
    q = np.einsum("bn,knm->bkm", v.conj(), ctx.fs)  # (F S[k])^T conj(v)
    yq = np.einsum("bktm,bkm->bkt", y, q.conj())
    c = np.einsum("bt,bkt->bk", g.conj(), yq)
    num = np.sum(p.conj() * c, axis=1)
    gg = np.sum(np.abs(g) ** 2, axis=1)
    qq = np.sum(np.abs(q) ** 2, axis=(1, 2))
    den = gg * qq
    _check_visible(den, ctx)
    alpha = num / den if alpha_override is None else np.asarray(alpha_override, complex)

    s = alpha[:, None] * p
    h_hat = s[:, :, None, None] * (u[:, None, :, None] * v.conj()[:, None, None, :])
    err = h - h_hat
    loss = scale * float(np.sum(err.real ** 2 + err.imag ** 2))
    if not np.isfinite(loss):
        raise FloatingPointError("non-finite loss")
    if not need_grad:
        return loss, None, alpha

    gh = -2.0 * scale * err
    gv_h = np.einsum("bkij,bj->bki", gh, v)  # G_k v
    grad_s = np.einsum("bi,bki->bk", u.conj(), gv_h)
    grad_u = np.einsum("bk,bki->bi", s.conj(), gv_h)
    grad_v = np.einsum("bk,bkij,bi->bj", s, gh.conj(), u)
    grad_alpha = np.sum(p.conj() * grad_s, axis=1)
    grad_p = alpha.conj()[:, None] * grad_s

    if not detach_gain and alpha_override is None:
        grad_num = grad_alpha / den
        d_den = -np.real(grad_alpha.conj() * alpha) / den
        grad_c = p * grad_num[:, None]
        grad_p = grad_p + c * grad_num.conj()[:, None]
        grad_g = np.einsum("bkt,bk->bt", yq, grad_c.conj()) + (2.0 * d_den * qq)[:, None] * g
        ytg = np.einsum("bktm,bt->bkm", y, g.conj())
        grad_q = ytg * grad_c.conj()[:, :, None] + (2.0 * d_den * gg)[:, None, None] * q
        grad_u = grad_u + grad_g @ ctx.w.T
        grad_v = grad_v + np.einsum("knm,bkm->bn", ctx.fs, grad_q.conj())

    d_r = np.sum(np.real(grad_p.conj() * (-1j * ctx.omega) * p), axis=1)
    d_psi_r = -np.imag(grad_u.conj() * u)
    d_psi_t = -np.imag(grad_v.conj() * v)
    d_est = np.stack([
        np.sum(d_psi_r * dthr, axis=1),
        np.sum(d_psi_r * dphr, axis=1),
        np.sum(d_psi_t * dtht, axis=1),
        np.sum(d_psi_t * dpht, axis=1),
        d_r + np.sum(d_psi_r * drr, axis=1) + np.sum(d_psi_t * drt, axis=1),
    ], axis=1)
    return loss, d_est, alpha


# ---------------------------------------------------------------------------
# single-block API


def estimate_gain(measurement: MeasurementBlock, large: LargeScaleParams, books: Codebooks,
                  cfg: PilotConfig, sys: SystemConfig) -> complex:
    """Joint least-squares path gain across all pilot subcarriers for given geometry."""
    return estimate_gains(measurement.y_per_subcarrier[None], large.as_array()[None],
                          EstimatorContext.build(sys, books, cfg))[0]


def estimate_gains(y: np.ndarray, est: np.ndarray, ctx: EstimatorContext) -> np.ndarray:
    """Vectorized gain estimate for ``y`` ``(N, K, T, M)`` and ``est`` ``(N, 5)``."""
    th_r, ph_r, th_t, ph_t, r = np.asarray(est, float).T
    u = np.exp(1j * _phase_and_partials(r, th_r, ph_r, ctx.ue_xy, ctx.d_ue)[0])
    v = np.exp(1j * _phase_and_partials(r, th_t, ph_t, ctx.bs_xy, ctx.d_bs)[0])
    p = np.exp(-1j * r[:, None] * ctx.omega)
    g = u @ ctx.w.conj()
    q = np.einsum("bn,knm->bkm", v.conj(), ctx.fs)
    num = np.einsum("bk,bt,bktm,bkm->b", p.conj(), g.conj(), y, q.conj())
    den = np.sum(np.abs(g) ** 2, axis=1) * np.sum(np.abs(q) ** 2, axis=(1, 2))
    _check_visible(den, ctx)
    return num / den


def reconstruct(large: LargeScaleParams | np.ndarray, alpha, sys: SystemConfig) -> np.ndarray:
    """Channel matrices ``(..., K, n_r, n_t)`` from estimated parameters."""
    est = large.as_array() if isinstance(large, LargeScaleParams) else np.asarray(large, float)
    return synth_channels_batch(sys, est, np.asarray(alpha, complex))
