"""Baseline channel estimators: LS, LMMSE and OMP over a far-field angular dictionary."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import solve_triangular

from .array_channel import ArrayGeometry, SystemConfig, far_steering
from .pilot import cosine_grid, unvec


@dataclass(frozen=True)
class LinearEstimate:
    h: np.ndarray  # (..., K, n_r, n_t)
    underdetermined: bool = False
    rank_deficient: bool = False


def _split_subcarriers(y_stacked: np.ndarray, n_k: int) -> np.ndarray:
    y = np.asarray(y_stacked)
    return y.reshape(y.shape[:-1] + (n_k, -1))


def ls_filters(psi: np.ndarray) -> tuple[np.ndarray, bool, bool]:
    """Pseudo-inverses of the per-subcarrier system matrices plus (underdetermined, rank-deficient)."""
    psi = np.asarray(psi)
    n_meas, n_unk = psi.shape[-2:]
    ranks = np.linalg.matrix_rank(psi)
    rank_def = bool(np.any(ranks < min(n_meas, n_unk)))
    return np.linalg.pinv(psi), n_meas < n_unk, rank_def


def ls_estimate(y_stacked: np.ndarray, psi: np.ndarray, n_r: int, n_t: int) -> LinearEstimate:
    """Least-squares (minimum-norm when underdetermined) estimate of every ``H[k]``.

    ``psi`` holds the ``K`` system matrices, shape ``(K, M*T, n_t*n_r)``;
    ``y_stacked`` may carry leading batch dimensions.
    """
    pinv, under, rank_def = ls_filters(psi)
    y = _split_subcarriers(y_stacked, psi.shape[0])
    h_vec = np.einsum("knm,...km->...kn", pinv, y)
    return LinearEstimate(unvec(h_vec, n_r, n_t), under, rank_def)


def empirical_covariance(h: np.ndarray) -> np.ndarray:
    """Sample second moment ``E[vec(H[k]) vec(H[k])^H]`` over leading axis of ``(S, K, n_r, n_t)``."""
    h = np.asarray(h)
    v = np.swapaxes(h, -1, -2).reshape(h.shape[0], h.shape[1], -1)
    return np.einsum("ski,skj->kij", v, v.conj()) / h.shape[0]


def lmmse_filters(psi: np.ndarray, cov: np.ndarray, noise_var: float) -> np.ndarray:
    """Wiener matrices ``R Psi^H (Psi R Psi^H + s2 I)^-1`` per subcarrier."""
    psi = np.asarray(psi)
    cov = np.broadcast_to(cov, (psi.shape[0],) + psi.shape[-1:] * 2)
    out = []
    for p, r in zip(psi, cov):
        if not np.allclose(r, r.conj().T, atol=1e-10 * max(1.0, np.abs(r).max())):
            raise ValueError("covariance is not Hermitian")
        ev = np.linalg.eigvalsh(r)
        if ev[0] < -1e-9 * max(1.0, ev[-1]):
            raise ValueError(f"covariance is not positive semidefinite (min eigenvalue {ev[0]:.3e})")
        rp = r @ p.conj().T
        gram = p @ rp + noise_var * np.eye(p.shape[0])
        # x = rp gram^-1  <=>  gram^H x^H = rp^H
        out.append(np.linalg.lstsq(gram.conj().T, rp.conj().T, rcond=None)[0].conj().T)
    return np.stack(out)


def lmmse_estimate(y_stacked: np.ndarray, psi: np.ndarray, cov: np.ndarray, noise_var: float,
                   n_r: int, n_t: int) -> LinearEstimate:
    filt = lmmse_filters(psi, cov, noise_var)
    y = _split_subcarriers(y_stacked, psi.shape[0])
    h_vec = np.einsum("knm,...km->...kn", filt, y)
    return LinearEstimate(unvec(h_vec, n_r, n_t))


# ---------------------------------------------------------------------------
# sparse recovery


@dataclass(frozen=True)
class AngularDictionary:
    grid_size: int
    quantized_angles: np.ndarray  # (W, 4): theta_r, phi_r, theta_t, phi_t
    atoms: np.ndarray  # (n_t*n_r, W)


def _side_grid(geom: ArrayGeometry, oversample: int) -> np.ndarray:
    th = cosine_grid(oversample * geom.n_h)
    ph = cosine_grid(oversample * geom.n_v) if geom.n_v > 1 else np.zeros(1)
    return np.array(list(itertools.product(th, ph)))


@lru_cache(maxsize=32)
def _dictionary_cached(bs: ArrayGeometry, ue: ArrayGeometry, oversample: int) -> AngularDictionary:
    g_r, g_t = _side_grid(ue, oversample), _side_grid(bs, oversample)
    angles = np.array([(*ar, *at) for at in g_t for ar in g_r])
    return _atoms(bs, ue, angles)


def _atoms(bs: ArrayGeometry, ue: ArrayGeometry, angles: np.ndarray) -> AngularDictionary:
    a_r = far_steering(angles[:, 0], angles[:, 1], ue)
    a_t = far_steering(angles[:, 2], angles[:, 3], bs)
    # vec(a_r a_t^H) = conj(a_t) kron a_r
    atoms = (a_t.conj()[:, :, None] * a_r[:, None, :]).reshape(len(angles), -1).T
    atoms.setflags(write=False)
    return AngularDictionary(len(angles), angles, atoms)


def build_dictionary(sys: SystemConfig, oversample: int = 1,
                     angles: np.ndarray | None = None) -> AngularDictionary:
    """Far-field dictionary on a uniform direction-cosine grid.

    ``oversample=1`` is critical sampling (``W = n_t * n_r``). Explicit
    ``angles`` rows ``(theta_r, phi_r, theta_t, phi_t)`` override the grid.
    """
    if angles is not None:
        angles = np.atleast_2d(np.asarray(angles, float))
        if len(angles) < 1:
            raise ValueError("need at least one atom")
        return _atoms(sys.bs_array, sys.ue_array, angles)
    if oversample < 1:
        raise ValueError("oversample must be >= 1")
    return _dictionary_cached(sys.bs_array, sys.ue_array, oversample)


def mutual_coherence(matrix: np.ndarray) -> float:
    a = np.asarray(matrix)
    if a.ndim != 2 or a.shape[1] < 2:
        raise ValueError("need a matrix with at least two columns")
    norms = np.linalg.norm(a, axis=0)
    if np.any(norms == 0):
        raise ValueError("matrix has a zero column")
    g = np.abs(a.conj().T @ a) / np.outer(norms, norms)
    np.fill_diagonal(g, 0.0)
    return float(min(g.max(), 1.0))


@dataclass
class SparseEstimate:
    support: list[int]
    gains: np.ndarray  # length W, nonzero only on support
    residual_norm: float
    residual_history: list[float] = field(default_factory=list)
    singular: bool = False


def omp(y: np.ndarray, phi: np.ndarray, sparsity: int, tol: float = 1e-12) -> SparseEstimate:
    """Orthogonal matching pursuit with incrementally updated Cholesky factors.

    Atoms are selected by normalized correlation with the residual; columns
    whose norm is below ``1e-10`` of the largest (numerically zero, e.g.
    directions the pilot beams cannot see) are never selected and exact ties
    go to the lowest index.
    """
    if sparsity < 1:
        raise ValueError("sparsity must be >= 1")
    y = np.asarray(y, complex)
    phi = np.asarray(phi, complex)
    n_atoms = phi.shape[1]
    norms = np.linalg.norm(phi, axis=0)
    usable = norms > 1e-10 * norms.max() if n_atoms else norms > 0
    inv_norms = np.where(usable, 1.0 / np.where(usable, norms, 1.0), 0.0)

    support: list[int] = []
    chol = np.zeros((0, 0), complex)
    x = np.zeros(0, complex)
    residual = y.copy()
    history = [float(np.linalg.norm(residual))]
    singular = False
    for _ in range(min(sparsity, int(usable.sum()))):
        if history[-1] < tol:
            break
        corr = np.abs(phi.conj().T @ residual) * inv_norms
        corr[support] = -1.0
        j = int(np.argmax(corr))
        col = phi[:, j]
        if support:
            b = phi[:, support].conj().T @ col
            w = solve_triangular(chol, b, lower=True)
            s2 = float(np.real(np.vdot(col, col)) - np.real(np.vdot(w, w)))
        else:
            w = np.zeros(0, complex)
            s2 = float(np.real(np.vdot(col, col)))
        if s2 <= 1e-12 * norms[j] ** 2:
            singular = True
            break
        n = len(support)
        new = np.zeros((n + 1, n + 1), complex)
        new[:n, :n] = chol
        new[n, :n] = w.conj()
        new[n, n] = np.sqrt(s2)
        chol = new
        support.append(j)
        sub = phi[:, support]
        z = solve_triangular(chol, sub.conj().T @ y, lower=True)
        x = solve_triangular(chol.conj().T, z, lower=False)
        residual = y - sub @ x
        history.append(float(np.linalg.norm(residual)))

    gains = np.zeros(n_atoms, complex)
    gains[support] = x
    return SparseEstimate(support, gains, history[-1], history, singular)


def cs_omp_estimate(y_stacked: np.ndarray, psi: np.ndarray, dictionary: AngularDictionary,
                    sparsity: int, n_r: int, n_t: int) -> np.ndarray:
    """Per-subcarrier OMP channel estimate ``vec(H[k]) ~ A g[k]``.

    ``y_stacked`` is ``(..., K*M*T)``; returns ``(..., K, n_r, n_t)``.
    """
    n_k = psi.shape[0]
    y = _split_subcarriers(y_stacked, n_k)
    lead = y.shape[:-2]
    flat = y.reshape((-1,) + y.shape[-2:])
    sensing = [p @ dictionary.atoms for p in psi]
    out = np.empty((flat.shape[0], n_k, n_t * n_r), complex)
    for i, yi in enumerate(flat):
        for k in range(n_k):
            est = omp(yi[k], sensing[k], sparsity)
            out[i, k] = dictionary.atoms @ est.gains
    return unvec(out, n_r, n_t).reshape(lead + (n_k, n_r, n_t))
