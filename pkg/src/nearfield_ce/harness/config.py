"""Experiment configuration: JSON in, frozen dataclasses out.

Every section is optional in the JSON document; omitted keys take the
desk-scale defaults below. Unknown keys raise :class:`ConfigError`.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from ..array_channel import ArrayGeometry, SystemConfig
from ..dstice.network import NetworkConfig
from ..dstice.train import TrainConfig
from ..pilot import PilotConfig

METHODS = ("ls", "lmmse", "cs_omp", "dstice")
METRICS = ("nmse", "ber")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SystemSection:
    carrier_hz: float = 1e12
    subcarrier_spacing_hz: float = 120e3
    bs_array: tuple[int, int] = (16, 1)
    ue_array: tuple[int, int] = (4, 1)
    n_subcarriers_pilot: int = 2


@dataclass(frozen=True)
class PilotSection:
    m_frames: int = 8
    t_subframes: int = 4
    pilot_type: str = "ones"  # or "qpsk"
    train_snr_db: tuple[float, float] = (0.0, 20.0)  # uniform range for training data


@dataclass(frozen=True)
class TrajectorySection:
    speed_mps: float = 3.0 / 3.6
    beam_interval_s: float = 20e-3
    n_blocks: int = 5
    radius_m: float = 10.0
    min_radius_m: float = 0.5
    ue_yaw_max_rad: float = math.pi / 2


@dataclass(frozen=True)
class NetworkSection:
    n_l: int = 64
    n_f: int = 64
    n_m: int = 2
    n_lstm_layers: int = 1
    r_max_m: float = 20.0


@dataclass(frozen=True)
class TrainingSection:
    learning_rate: float = 1e-4
    batch_size: int = 32
    max_iters: int = 20000
    eps_converge: float = 1e-4
    window: int = 100
    detach_gain: bool = False


@dataclass(frozen=True)
class DatasetSection:
    train: int = 2000
    val: int = 200
    test: int = 200


@dataclass(frozen=True)
class OmpSection:
    sparsity: int = 3
    oversample: int = 1


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemSection = field(default_factory=SystemSection)
    pilot: PilotSection = field(default_factory=PilotSection)
    trajectory: TrajectorySection = field(default_factory=TrajectorySection)
    network: NetworkSection = field(default_factory=NetworkSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    dataset: DatasetSection = field(default_factory=DatasetSection)
    omp: OmpSection = field(default_factory=OmpSection)
    snr_grid_db: tuple[float, ...] = (0.0, 10.0, 20.0)
    pilot_ratios: tuple[float, ...] = (0.125, 0.25, 0.5, 1.0)
    ratio_snr_db: float = 15.0
    methods: tuple[str, ...] = METHODS
    metrics: tuple[str, ...] = ("nmse",)
    trials: int = 1
    seed: int = 0
    ber_symbols: int = 100
    checkpoint: str | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.snr_grid_db:
            raise ConfigError("snr_grid_db must not be empty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; choose from {METHODS}")
        bad = [m for m in self.metrics if m not in METRICS]
        if bad or not self.metrics:
            raise ConfigError(f"metrics must be a non-empty subset of {METRICS}")
        if self.pilot.pilot_type not in ("ones", "qpsk"):
            raise ConfigError(f"unknown pilot_type {self.pilot.pilot_type!r}")
        if self.trajectory.n_blocks < 1:
            raise ConfigError("n_blocks must be >= 1")
        if not 0 <= self.trajectory.min_radius_m < self.trajectory.radius_m:
            raise ConfigError("need 0 <= min_radius_m < radius_m")
        for name in ("train", "val", "test"):
            if getattr(self.dataset, name) < 0:
                raise ConfigError("dataset sizes must be non-negative")

    # -- derived objects ---------------------------------------------------

    def system_config(self) -> SystemConfig:
        s = self.system
        return SystemConfig(
            carrier_hz=s.carrier_hz,
            subcarrier_spacing_hz=s.subcarrier_spacing_hz,
            bs_array=ArrayGeometry.half_wave(*s.bs_array, s.carrier_hz),
            ue_array=ArrayGeometry.half_wave(*s.ue_array, s.carrier_hz),
            n_subcarriers_pilot=s.n_subcarriers_pilot,
        )

    def pilot_config(self, snr_db: float = 10.0) -> PilotConfig:
        import numpy as np

        k, m = self.system.n_subcarriers_pilot, self.pilot.m_frames
        symbols = None
        if self.pilot.pilot_type == "qpsk":
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0x51]))
            symbols = PilotConfig.qpsk_symbols(k, m, rng)
        return PilotConfig(k, m, self.pilot.t_subframes, snr_db, symbols)

    def network_config(self) -> NetworkConfig:
        s = self.system
        n = self.network
        return NetworkConfig(
            input_dim=2 * s.n_subcarriers_pilot * self.pilot.m_frames * self.pilot.t_subframes,
            n_l=n.n_l, n_f=n.n_f, n_m=n.n_m, n_lstm_layers=n.n_lstm_layers, r_max_m=n.r_max_m)

    def train_config(self) -> TrainConfig:
        return TrainConfig(seed=self.seed, **dataclasses.asdict(self.training))

    def with_pilots(self, m_frames: int, t_subframes: int) -> "ExperimentConfig":
        return dataclasses.replace(
            self, pilot=dataclasses.replace(self.pilot, m_frames=m_frames, t_subframes=t_subframes))

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def config_hash(self) -> str:
        """SHA-256 prefix of the canonical (key-sorted) JSON form."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        return _build(cls, doc, "config")


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _build(cls, doc, where: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where}: expected an object, got {type(doc).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - set(fields))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    kwargs = {}
    for name, value in doc.items():
        default = fields[name].default_factory() if fields[name].default_factory is not \
            dataclasses.MISSING else fields[name].default
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{where}.{name}")
        elif isinstance(default, tuple):
            if not isinstance(value, list):
                raise ConfigError(f"{where}.{name}: expected a list")
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(doc)


def write_snapshot(cfg: ExperimentConfig, out_dir) -> Path:
    path = Path(out_dir) / "resolved_config.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    return path
