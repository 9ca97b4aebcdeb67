"""Flop counts of D-STiCE, OMP-based compressed sensing and a CNN estimator.

All counts are exact Python integers. The CS count has a rational bracket
which is rounded half-up to an integer before multiplying by ``KLMT``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields, replace
from fractions import Fraction
from pathlib import Path

# Printed values of the published comparison for (N_T, N_R) = (16,4), (32,4), (32,8).
PRINTED = {
    "dstice": (3.34e8, 3.34e8, 3.34e8),
    "cs": (4.96e8, 8.51e8, 1.30e9),
    "cnn": (1.19e9, 3.11e9, 6.74e9),
}
ANTENNA_COLUMNS = ((16, 4), (32, 4), (32, 8))
REPORT_HEADER = ("method", "n_t", "n_r", "formula_flops", "printed_flops", "ratio")


@dataclass(frozen=True)
class FlopsConfig:
    k_sub: int = 64
    l_blocks: int = 10
    n_l: int = 500
    n_m: int = 2
    n_f: int = 500
    p_paths: int = 3
    w_grid: int = 64
    m_frames: int = 8
    t_subframes: int = 2
    cnn_c1: int = 64
    cnn_c2: int = 3
    cnn_c3: int = 10
    n_t: int = 16
    n_r: int = 4

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ValueError(f"{f.name} must be a non-negative integer, got {v!r}")

    @classmethod
    def caption(cls, n_t: int, n_r: int) -> "FlopsConfig":
        """Reference parameters with ``W = N_T N_R``, ``M = N_T/2``, ``T = N_R/2``."""
        return cls(w_grid=n_t * n_r, m_frames=n_t // 2, t_subframes=n_r // 2, n_t=n_t, n_r=n_r)


def dstice_flops(c: FlopsConfig) -> int:
    L, nl, nf = c.l_blocks, c.n_l, c.n_f
    kmt = c.k_sub * c.m_frames * c.t_subframes
    return (16 * L * nl * nl + 2 * c.n_m * nf * nf + (16 * L * kmt + 26 * L) * nl
            + (5 * c.n_m + 2 * nl + 8 * c.p_paths + 5) * nf)


def cs_bracket(p: int, w: int) -> Fraction:
    p = Fraction(p)
    return 2 * p * w + p ** 4 / 12 + Fraction(5, 18) * p ** 3 + Fraction(47, 36) * p ** 2 + p


def cs_flops(c: FlopsConfig) -> int:
    bracket = math.floor(cs_bracket(c.p_paths, c.w_grid) + Fraction(1, 2))
    return bracket * c.k_sub * c.l_blocks * c.m_frames * c.t_subframes


def cnn_flops(c: FlopsConfig) -> int:
    c1, c2, c3 = c.cnn_c1, c.cnn_c2, c.cnn_c3
    return (8 * c1 * c2 ** 2 + 2 * c1 ** 2 * c2 ** 2 * c3) * c.k_sub * c.l_blocks * c.n_r * c.n_t


FUNCTIONS = {"dstice": dstice_flops, "cs": cs_flops, "cnn": cnn_flops}


@dataclass(frozen=True)
class ReportRow:
    method: str
    n_t: int
    n_r: int
    formula_flops: int
    printed_flops: float
    ratio: float  # formula / printed


def comparison_report(base: FlopsConfig | None = None,
                  columns=ANTENNA_COLUMNS) -> list[ReportRow]:
    """Formula counts next to the published cells, one row per method and antenna pair.

    ``base`` overrides the non-antenna parameters; ``W``, ``M`` and ``T`` are
    always re-derived from each antenna pair.
    """
    rows = []
    for method, fn in FUNCTIONS.items():
        for n_t, n_r in columns:
            cfg = FlopsConfig.caption(n_t, n_r)
            if base is not None:
                cfg = replace(base, w_grid=cfg.w_grid, m_frames=cfg.m_frames,
                              t_subframes=cfg.t_subframes, n_t=n_t, n_r=n_r)
            value = fn(cfg)
            printed = math.nan
            if (n_t, n_r) in ANTENNA_COLUMNS:
                printed = PRINTED[method][ANTENNA_COLUMNS.index((n_t, n_r))]
            rows.append(ReportRow(method, n_t, n_r, value, printed, value / printed))
    return rows


def write_report(rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_HEADER)
        for r in rows:
            w.writerow([r.method, r.n_t, r.n_r, r.formula_flops, f"{r.printed_flops:.3g}",
                        f"{r.ratio:.6g}"])
    return path
