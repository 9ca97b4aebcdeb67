"""Estimation metrics: normalized MSE and uncoded QPSK bit error rate."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erfc

from ..pilot import noise_variance


def nmse(h_true: np.ndarray, h_est: np.ndarray) -> float:
    """Mean over all leading axes of ``||H - H_hat||_F^2 / ||H||_F^2``."""
    h_true = np.asarray(h_true)
    h_est = np.asarray(h_est)
    if h_true.shape != h_est.shape:
        raise ValueError(f"shape mismatch {h_true.shape} vs {h_est.shape}")
    power = np.sum(np.abs(h_true) ** 2, axis=(-2, -1))
    if np.any(power == 0):
        raise ValueError("true channel has zero norm")
    err = np.sum(np.abs(h_true - h_est) ** 2, axis=(-2, -1))
    return float(np.mean(err / power))


def q_function(x):
    return 0.5 * erfc(np.asarray(x, float) / math.sqrt(2.0))


def qpsk_ber_analytic(gain_sq: float, noise_var: float) -> float:
    """Gray-coded QPSK bit error rate ``Q(sqrt(|g|^2 / s2))`` for a unit-energy symbol."""
    return float(q_function(math.sqrt(gain_sq / noise_var)))


def _gray_qpsk(bits: np.ndarray) -> np.ndarray:
    return ((1 - 2 * bits[..., 0]) + 1j * (1 - 2 * bits[..., 1])) / math.sqrt(2.0)


def qpsk_ber(h_true: np.ndarray, h_est: np.ndarray, snr_db: float, n_symbols: int,
             rng: np.random.Generator) -> float:
    """Rank-1 link with beams from the principal singular pair of ``h_est``.

    For every channel matrix in the (possibly batched) inputs, ``n_symbols``
    Gray-coded QPSK symbols pass through ``u^H (H_true v s + n)`` with
    ``n ~ CN(0, s2 I)``; the receiver divides by the estimated effective gain
    ``u^H H_est v`` and takes hard decisions.
    """
    if n_symbols < 1:
        raise ValueError("n_symbols must be >= 1")
    h_true = np.asarray(h_true, complex)
    h_est = np.asarray(h_est, complex)
    if h_true.shape != h_est.shape:
        raise ValueError(f"shape mismatch {h_true.shape} vs {h_est.shape}")
    mats_t = h_true.reshape((-1,) + h_true.shape[-2:])
    mats_e = h_est.reshape((-1,) + h_est.shape[-2:])
    u, s, vh = np.linalg.svd(mats_e)
    u1, v1 = u[:, :, 0], vh[:, 0, :].conj()
    g_true = np.einsum("bi,bij,bj->b", u1.conj(), mats_t, v1)
    g_est = s[:, 0].astype(complex)
    g_est[g_est == 0] = 1.0

    var = noise_variance(snr_db)
    n_mat = len(mats_t)
    bits = rng.integers(0, 2, size=(n_mat, n_symbols, 2))
    sym = _gray_qpsk(bits)
    noise = math.sqrt(var / 2.0) * (rng.standard_normal((n_mat, n_symbols))
                                    + 1j * rng.standard_normal((n_mat, n_symbols)))
    # u1 is unit norm, so u1^H n is again CN(0, s2)
    eq = (g_true[:, None] * sym + noise) / g_est[:, None]
    decided = np.stack([eq.real < 0, eq.imag < 0], axis=-1).astype(int)
    return float(np.mean(decided != bits))
