"""Beam codebooks, pilot measurements ``Y[k] = W^H H[k] F S[k] + N[k]`` and stacking."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .array_channel import ArrayGeometry, ChannelBlock, SystemConfig, far_steering


@dataclass(frozen=True)
class PilotConfig:
    k_subcarriers: int
    m_frames: int
    t_subframes: int
    snr_db: float = 10.0
    pilot_symbols: np.ndarray | None = None  # (K, M), unit modulus; None means all-ones

    def __post_init__(self):
        if min(self.k_subcarriers, self.m_frames, self.t_subframes) < 1:
            raise ValueError("K, M and T must all be >= 1")
        if self.pilot_symbols is not None:
            s = np.asarray(self.pilot_symbols)
            if s.shape != (self.k_subcarriers, self.m_frames):
                raise ValueError(f"pilot_symbols must be (K, M), got {s.shape}")
            if np.max(np.abs(np.abs(s) - 1.0)) > 1e-12:
                raise ValueError("pilot symbols must have unit modulus")

    @property
    def symbols(self) -> np.ndarray:
        if self.pilot_symbols is None:
            return np.ones((self.k_subcarriers, self.m_frames), complex)
        return np.asarray(self.pilot_symbols, complex)

    @property
    def noise_var(self) -> float:
        return noise_variance(self.snr_db)

    def with_snr(self, snr_db: float) -> "PilotConfig":
        return PilotConfig(self.k_subcarriers, self.m_frames, self.t_subframes, snr_db,
                           self.pilot_symbols)

    @staticmethod
    def qpsk_symbols(k: int, m: int, rng: np.random.Generator) -> np.ndarray:
        return np.exp(1j * (np.pi / 4 + np.pi / 2 * rng.integers(0, 4, size=(k, m))))


@dataclass(frozen=True)
class Codebooks:
    precoder_f: np.ndarray  # (n_t, M)
    combiner_w: np.ndarray  # (n_r, T)

    def __post_init__(self):
        for name, mat in (("precoder", self.precoder_f), ("combiner", self.combiner_w)):
            norms = np.linalg.norm(mat, axis=0)
            if np.max(np.abs(norms - 1.0)) > 1e-9:
                raise ValueError(f"{name} columns must have unit norm")


@dataclass(frozen=True)
class MeasurementBlock:
    y_per_subcarrier: np.ndarray  # (K, T, M)
    stacked: np.ndarray  # (K*M*T,)
    noise_var: float


def noise_variance(snr_db: float, signal_power: float = 1.0) -> float:
    """Per-antenna noise power for a given SNR.

    The reference signal power is the per-antenna received power averaged
    over beams and over the channel ensemble. With ``E|alpha|^2 = 1``, unit
    norm beams and unit-modulus steering vectors it equals 1.
    """
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return signal_power * 10.0 ** (-snr_db / 10.0)


def _grid_split(n_beams: int, geom: ArrayGeometry) -> tuple[int, int]:
    if geom.n_v == 1:
        return n_beams, 1
    target = geom.n_h / geom.n_v
    divisors = [d for d in range(1, n_beams + 1) if n_beams % d == 0]
    n_v = min(divisors, key=lambda d: (abs(n_beams / d / d - target), d))
    return n_beams // n_v, n_v


def cosine_grid(n: int) -> np.ndarray:
    """``-1 + 2m/n`` for ``m = 1..n``: uniform direction cosines on (-1, 1]."""
    return -1.0 + 2.0 * np.arange(1, n + 1) / n


def beam_grid(n_beams: int, geom: ArrayGeometry) -> np.ndarray:
    """Unit-norm far-field beams on a uniform direction-cosine grid, shape ``(size, n_beams)``."""
    n_h, n_v = _grid_split(n_beams, geom)
    th, ph = np.meshgrid(cosine_grid(n_h), cosine_grid(n_v) if n_v > 1 else [0.0],
                         indexing="ij")
    beams = far_steering(th.ravel(), ph.ravel(), geom).T
    return beams / math.sqrt(geom.size)


def build_codebooks(sys: SystemConfig, cfg: PilotConfig) -> Codebooks:
    if cfg.m_frames > sys.n_t:
        warnings.warn(f"M={cfg.m_frames} exceeds N_T={sys.n_t}; precoder columns repeat "
                      "directions", stacklevel=2)
    if cfg.t_subframes > sys.n_r:
        warnings.warn(f"T={cfg.t_subframes} exceeds N_R={sys.n_r}", stacklevel=2)
    return Codebooks(beam_grid(cfg.m_frames, sys.bs_array),
                     beam_grid(cfg.t_subframes, sys.ue_array))


def stack(y_per_subcarrier: np.ndarray) -> np.ndarray:
    """Concatenate column-major ``vec(Y[k])`` over subcarriers; works on leading batch dims."""
    y = np.asarray(y_per_subcarrier)
    return np.swapaxes(y, -1, -2).reshape(y.shape[:-3] + (-1,))


def unstack(stacked: np.ndarray, k: int, m: int, t: int) -> np.ndarray:
    s = np.asarray(stacked)
    return np.swapaxes(s.reshape(s.shape[:-1] + (k, m, t)), -1, -2)


def noiseless_measurements(h: np.ndarray, books: Codebooks, symbols: np.ndarray) -> np.ndarray:
    """``W^H H[k] F S[k]`` for ``h`` of shape ``(..., K, n_r, n_t)`` -> ``(..., K, T, M)``."""
    fs = books.precoder_f[None, :, :] * symbols[:, None, :]  # (K, n_t, M)
    wh = books.combiner_w.conj().T
    return np.einsum("tr,...krn,knm->...ktm", wh, h, fs, optimize=True)


def complex_noise(rng: np.random.Generator, shape, var: float) -> np.ndarray:
    scale = math.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def measure(channel: ChannelBlock, books: Codebooks, cfg: PilotConfig,
            rng: np.random.Generator, signal_power: float = 1.0) -> MeasurementBlock:
    h = np.asarray(channel.h_per_subcarrier)
    n_r, n_t = books.combiner_w.shape[0], books.precoder_f.shape[0]
    if h.shape != (cfg.k_subcarriers, n_r, n_t):
        raise ValueError(f"channel shape {h.shape} does not match "
                         f"(K={cfg.k_subcarriers}, n_r={n_r}, n_t={n_t})")
    if books.precoder_f.shape[1] != cfg.m_frames or books.combiner_w.shape[1] != cfg.t_subframes:
        raise ValueError("codebook sizes do not match (M, T)")
    var = noise_variance(cfg.snr_db, signal_power)
    y = noiseless_measurements(h, books, cfg.symbols)
    if var > 0:
        y = y + complex_noise(rng, y.shape, var)
    return MeasurementBlock(y, stack(y), var)


def system_matrix(books: Codebooks, cfg: PilotConfig, k: int) -> np.ndarray:
    """``(F S[k])^T kron W^H``: maps column-major ``vec(H[k])`` to ``vec(Y[k])`` (k 1-based)."""
    if not 1 <= k <= cfg.k_subcarriers:
        raise ValueError(f"subcarrier index {k} outside 1..{cfg.k_subcarriers}")
    fs = books.precoder_f * cfg.symbols[k - 1][None, :]
    return np.kron(fs.T, books.combiner_w.conj().T)


def system_matrices(books: Codebooks, cfg: PilotConfig) -> np.ndarray:
    return np.stack([system_matrix(books, cfg, k) for k in range(1, cfg.k_subcarriers + 1)])


def vec(h: np.ndarray) -> np.ndarray:
    """Column-major vectorization of the trailing two axes."""
    h = np.asarray(h)
    return np.swapaxes(h, -1, -2).reshape(h.shape[:-2] + (-1,))


def unvec(v: np.ndarray, n_r: int, n_t: int) -> np.ndarray:
    v = np.asarray(v)
    return np.swapaxes(v.reshape(v.shape[:-1] + (n_t, n_r)), -1, -2)
