"""Monte Carlo evaluation of the estimators and resumable CSV sweeps."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..classical import build_dictionary, cs_omp_estimate, empirical_covariance, lmmse_estimate
from ..classical import ls_estimate
from ..dstice import checkpoint
from ..dstice.gain import EstimatorContext
from ..dstice.model import estimate_channels
from ..dstice.train import smooth_history
from ..pilot import build_codebooks, noise_variance, stack, system_matrices
from .config import ConfigError, ExperimentConfig
from .dataset import Split, gen_split, stream
from .metrics import qpsk_ber

HEADER = ("method", "snr_db", "metric", "value", "std", "trials", "seed", "config_hash")


@dataclass(frozen=True)
class ResultRow:
    method: str
    snr_db: float
    metric: str
    value: float
    std: float
    trials: int
    seed: int
    config_hash: str

    def key(self) -> tuple[str, str, str]:
        return self.method, _fmt(self.snr_db), self.metric

    def cells(self) -> list[str]:
        return [self.method, _fmt(self.snr_db), self.metric, _fmt(self.value), _fmt(self.std),
                str(self.trials), str(self.seed), self.config_hash]


def _fmt(x: float) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# estimators


class Evaluator:
    """Runs every configured method on a test split; caches per-config constants."""

    def __init__(self, cfg: ExperimentConfig, cov_h: np.ndarray | None = None):
        self.cfg = cfg
        self.sys = cfg.system_config()
        self.pilot = cfg.pilot_config()
        self.books = build_codebooks(self.sys, self.pilot)
        self.psi = system_matrices(self.books, self.pilot)
        self._cov_h = cov_h
        self._cov = None
        self._net = None
        self._dict = None

    def covariance(self) -> np.ndarray:
        if self._cov is None:
            h = self._cov_h
            if h is None:
                cfg = self.cfg
                h = gen_split(cfg, max(cfg.dataset.train, 1), cfg.seed, 0, "train",
                              tuple(cfg.pilot.train_snr_db)).h
            h = np.asarray(h, complex)
            self._cov = empirical_covariance(h.reshape((-1,) + h.shape[-3:]))
        return self._cov

    def network(self):
        if self._net is None:
            path = self.cfg.checkpoint
            if path is None:
                raise ConfigError("method 'dstice' needs a checkpoint")
            path = path.format(m_frames=self.pilot.m_frames, t_subframes=self.pilot.t_subframes)
            if not os.path.exists(path):
                raise ConfigError(f"checkpoint {path} does not exist")
            net_cfg, params, _ = checkpoint.load(path)
            if net_cfg.input_dim != self.cfg.network_config().input_dim:
                raise ConfigError(f"checkpoint {path} expects input_dim {net_cfg.input_dim}, "
                                  f"config gives {self.cfg.network_config().input_dim}")
            self._net = (net_cfg, params)
        return self._net

    def estimate(self, method: str, split: Split) -> np.ndarray:
        """Channel estimates with the shape of ``split.h``."""
        y = split.y.astype(complex)
        stacked = stack(y)
        n_r, n_t = self.sys.n_r, self.sys.n_t
        if method == "ls":
            return ls_estimate(stacked, self.psi, n_r, n_t).h
        if method == "lmmse":
            var = noise_variance(float(split.snr_db[0]))
            if not np.all(split.snr_db == split.snr_db[0]):
                raise ValueError("LMMSE evaluation needs a single SNR per split")
            return lmmse_estimate(stacked, self.psi, self.covariance(), var, n_r, n_t).h
        if method == "cs_omp":
            if self._dict is None:
                self._dict = build_dictionary(self.sys, self.cfg.omp.oversample)
            return cs_omp_estimate(stacked, self.psi, self._dict, self.cfg.omp.sparsity, n_r, n_t)
        if method == "dstice":
            net_cfg, params = self.network()
            ctx = EstimatorContext.build(self.sys, self.books, self.pilot)
            return estimate_channels(split.sequence_data(), params, net_cfg, ctx, self.sys)
        raise ValueError(f"unknown method {method!r}")


def per_sequence_nmse(h_true: np.ndarray, h_est: np.ndarray) -> np.ndarray:
    """NMSE per sequence, averaged over its blocks and subcarriers."""
    h_true = np.asarray(h_true, complex)
    power = np.sum(np.abs(h_true) ** 2, axis=(-2, -1))
    if np.any(power == 0):
        raise ValueError("true channel has zero norm")
    err = np.sum(np.abs(h_true - h_est) ** 2, axis=(-2, -1)) / power
    return err.reshape(err.shape[0], -1).mean(axis=1)


def evaluate_point(ev: Evaluator, methods, metrics, snr_db: float, ber_snr_db: float,
                   label: str = "") -> list[tuple[str, str, float, float]]:
    """``(method, metric, mean, std)`` over all trials at one grid point.

    Trials share geometry across SNRs (the test stream does not depend on the
    SNR) and every method sees the same measurements.
    """
    cfg = ev.cfg
    per = {(m, k): [] for m in methods for k in metrics}
    for trial in range(cfg.trials):
        split = gen_split(cfg, cfg.dataset.test, cfg.seed, trial, "test", snr_db)
        h = split.h.astype(complex)
        for method in methods:
            est = ev.estimate(method, split)
            if not np.all(np.isfinite(est)):
                raise FloatingPointError(f"{method} produced non-finite estimates")
            if "nmse" in metrics:
                per[method, "nmse"].append(per_sequence_nmse(h, est))
            if "ber" in metrics:
                rng = stream(cfg.seed, trial, f"ber{label}@{ber_snr_db!r}")
                per[method, "ber"].append(np.array([
                    qpsk_ber(h[i], est[i], ber_snr_db, cfg.ber_symbols, rng)
                    for i in range(len(h))]))
    out = []
    for method in methods:
        for metric in metrics:
            vals = np.concatenate(per[method, metric])
            out.append((method, metric, float(vals.mean()), float(vals.std())))
    return out


# ---------------------------------------------------------------------------
# CSV persistence


class ResultWriter:
    """Single appender: flushes every row; existing rows of the same config are kept."""

    def __init__(self, path, config_hash: str):
        self.path = Path(path)
        self.done: set[tuple[str, str, str]] = set()
        if self.path.exists() and self.path.stat().st_size > 0:
            with self.path.open(newline="") as fh:
                rows = list(csv.reader(fh))
            if tuple(rows[0]) != HEADER:
                raise ConfigError(f"{self.path} has an unexpected header")
            for row in rows[1:]:
                if row[7] != config_hash:
                    raise ConfigError(f"{self.path} holds results of config {row[7]}, "
                                      f"not {config_hash}")
                self.done.add((row[0], row[1], row[2]))
            self._fh = self.path.open("a", newline="")
            self._csv = csv.writer(self._fh)
        else:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = self.path.open("w", newline="")
            self._csv = csv.writer(self._fh)
            self._csv.writerow(HEADER)
            self._fh.flush()

    def has(self, method: str, snr_db: float, metric: str) -> bool:
        return (method, _fmt(snr_db), metric) in self.done

    def write(self, row: ResultRow) -> None:
        self._csv.writerow(row.cells())
        self._fh.flush()
        self.done.add(row.key())

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def pilot_dims(cfg: ExperimentConfig, ratio: float) -> tuple[int, int]:
    """``(M, T)`` with ``MT / (N_R N_T)`` closest to ``ratio``.

    Only ``M <= N_T`` and ``T <= N_R`` are considered; among equally close
    products the one nearest the configured ``M : T`` aspect wins (then the
    larger ``T``), which scales both dimensions roughly proportionally.
    """
    n = cfg.system_config()
    target = ratio * n.n_r * n.n_t
    aspect = math.log(cfg.pilot.m_frames / cfg.pilot.t_subframes)
    pairs = [(m, t) for m in range(1, n.n_t + 1) for t in range(1, n.n_r + 1)]
    return min(pairs, key=lambda mt: (abs(mt[0] * mt[1] - target),
                                      round(abs(math.log(mt[0] / mt[1]) - aspect), 12), -mt[1]))


def run_sweep(cfg: ExperimentConfig, kind: str, out_path) -> Path:
    """Append one row per (grid point, method, metric) to ``out_path``; resumes if present."""
    if kind not in ("snr", "pilot_ratio"):
        raise ValueError(f"unknown sweep kind {kind!r}")
    h = cfg.config_hash()
    with ResultWriter(out_path, h) as writer:
        if kind == "snr":
            ev = Evaluator(cfg)
            for snr in cfg.snr_grid_db:
                todo = [m for m in cfg.methods
                        if not all(writer.has(m, snr, k) for k in cfg.metrics)]
                if not todo:
                    continue
                for method, metric, mean, std in evaluate_point(ev, todo, cfg.metrics, snr, snr):
                    if not writer.has(method, snr, metric):
                        writer.write(ResultRow(method, snr, metric, mean, std, cfg.trials,
                                               cfg.seed, h))
        else:
            snr = cfg.ratio_snr_db
            n = cfg.system_config()
            for ratio in cfg.pilot_ratios:
                m, t = pilot_dims(cfg, ratio)
                sub = cfg.with_pilots(m, t)
                achieved = m * t / (n.n_r * n.n_t)
                names = {k: f"{k}@pilot_ratio={achieved:.4f}" for k in cfg.metrics}
                todo = [x for x in cfg.methods
                        if not all(writer.has(x, snr, names[k]) for k in cfg.metrics)]
                if not todo:
                    continue
                ev = Evaluator(sub)
                for method, metric, mean, std in evaluate_point(ev, todo, cfg.metrics, snr, snr,
                                                                label=f"/{m}x{t}"):
                    if not writer.has(method, snr, names[metric]):
                        writer.write(ResultRow(method, snr, names[metric], mean, std,
                                               cfg.trials, cfg.seed, h))
    return Path(out_path)


def evaluate_split(cfg: ExperimentConfig, split: Split, out_path, cov_h=None) -> Path:
    """One row per method and metric for a stored test split (single SNR)."""
    snrs = np.unique(split.snr_db)
    if len(snrs) != 1:
        raise ValueError("test split must have a single SNR")
    snr = float(snrs[0])
    ev = Evaluator(cfg, cov_h)
    h = split.h.astype(complex)
    with ResultWriter(out_path, cfg.config_hash()) as writer:
        for method in cfg.methods:
            est = ev.estimate(method, split)
            if not np.all(np.isfinite(est)):
                raise FloatingPointError(f"{method} produced non-finite estimates")
            for metric in cfg.metrics:
                if writer.has(method, snr, metric):
                    continue
                if metric == "nmse":
                    vals = per_sequence_nmse(h, est)
                else:
                    rng = stream(cfg.seed, 0, f"ber@{snr!r}")
                    vals = np.array([qpsk_ber(h[i], est[i], snr, cfg.ber_symbols, rng)
                                     for i in range(len(h))])
                writer.write(ResultRow(method, snr, metric, float(vals.mean()),
                                       float(vals.std()), 1, cfg.seed, cfg.config_hash()))
    return Path(out_path)


def loss_trace_report(history, out_path, window: int = 100) -> Path:
    """CSV of ``(iteration, smoothed_loss)`` at every ``window`` iterations."""
    history = list(history)
    if not history:
        raise ValueError("empty loss history")
    path = Path(out_path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("iteration", "smoothed_loss"))
        for it, val in smooth_history(history, window):
            w.writerow((it, _fmt(val)))
    return path


__all__ = ["HEADER", "ResultRow", "Evaluator", "evaluate_point", "run_sweep", "evaluate_split",
           "loss_trace_report", "pilot_dims", "per_sequence_nmse", "ResultWriter"]
