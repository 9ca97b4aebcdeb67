"""Trajectory datasets and their binary container.

Container layout (little-endian)::

    magic   8 bytes  b"NFCEDS\\x00\\x01"
    version u32
    hash    16 bytes ASCII config hash
    count   u32      number of tensors
    per tensor: name_len u16, name utf-8, dtype u8, ndim u8, dims u64 * ndim, raw data

Signals (measurements, channels, gains) are complex64; geometry and SNR are
float64 so that the ground truth is not quantized.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..array_channel import Trajectory, large_scale_at, synth_channels_batch
from ..dstice.model import SequenceData, split_real
from ..pilot import build_codebooks, noise_variance, noiseless_measurements, stack
from .config import ExperimentConfig

MAGIC = b"NFCEDS\x00\x01"
VERSION = 1
_DTYPES = {1: np.dtype("<c8"), 2: np.dtype("<f8")}
_CODES = {v: k for k, v in _DTYPES.items()}
SPLITS = ("train", "val", "test")


class DatasetError(OSError):
    pass


def stream(seed: int, trial: int, purpose: str) -> np.random.Generator:
    """Independent generator for one (trial, purpose) pair of a master seed."""
    key = zlib.crc32(purpose.encode())
    return np.random.default_rng(np.random.SeedSequence([seed, trial, key]))


@dataclass(frozen=True)
class Split:
    y: np.ndarray  # (S, L, K, T, M) complex64
    h: np.ndarray  # (S, L, K, n_r, n_t) complex64
    params: np.ndarray  # (S, L, 5) float64
    alpha: np.ndarray  # (S, L) complex64
    snr_db: np.ndarray  # (S,) float64

    def __len__(self):
        return self.y.shape[0]

    def sequence_data(self) -> SequenceData:
        y = self.y.astype(complex)
        return SequenceData(split_real(stack(y)), y, self.h.astype(complex))


@dataclass(frozen=True)
class Dataset:
    config_hash: str
    splits: dict[str, Split]

    def __getitem__(self, name: str) -> Split:
        return self.splits[name]


def sample_start_positions(rng: np.random.Generator, n: int, r_min: float, r_max: float):
    """Uniform over the half-annulus ``r_min <= r <= r_max``, ``z > 0``, of the x-z plane."""
    r = np.sqrt(rng.uniform(r_min ** 2, r_max ** 2, n))
    beta = rng.uniform(-math.pi / 2, math.pi / 2, n)
    return np.stack([r * np.sin(beta), np.zeros(n), r * np.cos(beta)], axis=1)


def sample_geometry(cfg: ExperimentConfig, n: int, rng: np.random.Generator) -> np.ndarray:
    """Large-scale parameters ``(n, L, 5)`` of ``n`` random straight-line trajectories."""
    tc = cfg.trajectory
    starts = sample_start_positions(rng, n, tc.min_radius_m, tc.radius_m)
    heading = rng.uniform(0.0, 2 * math.pi, n)
    yaw = rng.uniform(-tc.ue_yaw_max_rad, tc.ue_yaw_max_rad, n)
    out = np.empty((n, tc.n_blocks, 5))
    for i in range(n):
        traj = Trajectory(tuple(starts[i]), tc.speed_mps,
                          (math.sin(heading[i]), 0.0, math.cos(heading[i])),
                          tc.beam_interval_s, float(yaw[i]))
        for b in range(tc.n_blocks):
            out[i, b] = large_scale_at(traj, b + 1).as_array()
    return out


def gen_split(cfg: ExperimentConfig, n: int, seed: int, trial: int, purpose: str,
              snr_db) -> Split:
    """Draw ``n`` sequences. ``snr_db`` is a scalar or a ``(lo, hi)`` range sampled per sequence.

    Geometry, gains and the unit-variance noise come from separate streams, so
    test sets at different SNRs share the same channels and noise shape.
    """
    sys = cfg.system_config()
    pc = cfg.pilot_config()
    books = build_codebooks(sys, pc)
    params = sample_geometry(cfg, n, stream(seed, trial, purpose + "/geometry"))
    g_rng = stream(seed, trial, purpose + "/gain")
    alpha = (g_rng.standard_normal(params.shape[:2])
             + 1j * g_rng.standard_normal(params.shape[:2])) / math.sqrt(2.0)
    h = synth_channels_batch(sys, params, alpha)
    y0 = noiseless_measurements(h, books, pc.symbols)
    n_rng = stream(seed, trial, purpose + "/noise")
    unit = (n_rng.standard_normal(y0.shape) + 1j * n_rng.standard_normal(y0.shape)) / math.sqrt(2.0)
    if np.ndim(snr_db) == 0:
        snr = np.full(n, float(snr_db))
    else:
        lo, hi = snr_db
        snr = stream(seed, trial, purpose + "/snr").uniform(lo, hi, n)
    sigma = np.sqrt([noise_variance(s) for s in snr]).reshape((n,) + (1,) * (y0.ndim - 1))
    y = y0 + sigma * unit
    return Split(y.astype(np.complex64), h.astype(np.complex64), params,
                 alpha.astype(np.complex64), snr)


def gen_dataset(cfg: ExperimentConfig, seed: int | None = None) -> Dataset:
    seed = cfg.seed if seed is None else seed
    sizes = cfg.dataset
    snr_range = tuple(cfg.pilot.train_snr_db)
    mid = 0.5 * (snr_range[0] + snr_range[1])
    splits = {
        "train": gen_split(cfg, sizes.train, seed, 0, "train", snr_range),
        "val": gen_split(cfg, sizes.val, seed, 0, "val", snr_range),
        "test": gen_split(cfg, sizes.test, seed, 0, "test", mid),
    }
    return Dataset(cfg.config_hash(), splits)


# ---------------------------------------------------------------------------
# binary container


def _tensors(ds: Dataset):
    for name in SPLITS:
        sp = ds.splits[name]
        yield f"{name}.y", sp.y.astype(_DTYPES[1])
        yield f"{name}.h", sp.h.astype(_DTYPES[1])
        yield f"{name}.alpha", sp.alpha.astype(_DTYPES[1])
        yield f"{name}.params", sp.params.astype(_DTYPES[2])
        yield f"{name}.snr_db", sp.snr_db.astype(_DTYPES[2])


def to_bytes(ds: Dataset) -> bytes:
    items = list(_tensors(ds))
    parts = [MAGIC, struct.pack("<I", VERSION), ds.config_hash.encode("ascii").ljust(16)[:16],
             struct.pack("<I", len(items))]
    for name, arr in items:
        raw = name.encode()
        parts.append(struct.pack("<HBB", len(raw), _CODES[arr.dtype], arr.ndim) + raw)
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


def from_bytes(buf: bytes) -> Dataset:
    if buf[:8] != MAGIC:
        raise DatasetError("not a dataset file (bad magic bytes)")
    (version,) = struct.unpack_from("<I", buf, 8)
    if version != VERSION:
        raise DatasetError(f"unsupported dataset version {version}")
    config_hash = buf[12:28].decode("ascii").strip()
    (count,) = struct.unpack_from("<I", buf, 28)
    pos = 32
    tensors = {}
    for _ in range(count):
        n_name, code, ndim = struct.unpack_from("<HBB", buf, pos)
        pos += 4
        name = buf[pos:pos + n_name].decode()
        pos += n_name
        shape = struct.unpack_from(f"<{ndim}Q", buf, pos)
        pos += 8 * ndim
        dtype = _DTYPES[code]
        nbytes = dtype.itemsize * math.prod(shape)
        if pos + nbytes > len(buf):
            raise DatasetError(f"truncated tensor {name!r}")
        tensors[name] = np.frombuffer(buf, dtype, math.prod(shape), pos).reshape(shape).copy()
        pos += nbytes
    splits = {s: Split(tensors[f"{s}.y"], tensors[f"{s}.h"], tensors[f"{s}.params"],
                       tensors[f"{s}.alpha"], tensors[f"{s}.snr_db"]) for s in SPLITS}
    return Dataset(config_hash, splits)


def save_dataset(ds: Dataset, path) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(to_bytes(ds))
    except OSError as exc:
        raise DatasetError(f"cannot write dataset to {path}: {exc}") from exc


def load_dataset(path) -> Dataset:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from exc
    return from_bytes(buf)
