"""Array geometry, far/near-field steering vectors and parametric LoS channels.

Conventions used throughout the package:

* Channel matrices are ``(n_r, n_t)``: receive rows, transmit columns.
* Steering vectors are unnormalized (unit-modulus entries).
* Element ``(x, y)`` (1-based in formulas) is stored at flat index
  ``(x - 1) * n_v + (y - 1)``, matching ``kron(a_x, a_y)``. The reference
  antenna is flat index 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SPEED_OF_LIGHT = 2.99792458e8


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform planar array with ``n_h x n_v`` elements and spacing ``spacing_d`` (m)."""

    n_h: int
    n_v: int = 1
    spacing_d: float = 1.49896229e-4  # half wavelength at 1 THz

    def __post_init__(self):
        if self.n_h < 1 or self.n_v < 1:
            raise ValueError(f"antenna counts must be >= 1, got ({self.n_h}, {self.n_v})")
        if not self.spacing_d > 0:
            raise ValueError(f"spacing_d must be positive, got {self.spacing_d}")

    @property
    def size(self) -> int:
        return self.n_h * self.n_v

    def element_indices(self) -> tuple[np.ndarray, np.ndarray]:
        """0-based ``(x - 1, y - 1)`` index arrays in storage order."""
        xx, yy = np.meshgrid(np.arange(self.n_h), np.arange(self.n_v), indexing="ij")
        return xx.ravel().astype(float), yy.ravel().astype(float)

    @classmethod
    def half_wave(cls, n_h: int, n_v: int, carrier_hz: float) -> "ArrayGeometry":
        return cls(n_h, n_v, SPEED_OF_LIGHT / carrier_hz / 2.0)


@dataclass(frozen=True)
class SystemConfig:
    carrier_hz: float
    subcarrier_spacing_hz: float
    bs_array: ArrayGeometry
    ue_array: ArrayGeometry
    n_subcarriers_pilot: int
    light_speed: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if not self.carrier_hz > 0:
            raise ValueError("carrier_hz must be positive")
        if not self.subcarrier_spacing_hz > 0:
            raise ValueError("subcarrier_spacing_hz must be positive")
        if self.n_subcarriers_pilot < 1:
            raise ValueError("need at least one pilot subcarrier")

    @property
    def wavelength(self) -> float:
        return self.light_speed / self.carrier_hz

    @property
    def n_t(self) -> int:
        return self.bs_array.size

    @property
    def n_r(self) -> int:
        return self.ue_array.size

    @property
    def k_sub(self) -> int:
        return self.n_subcarriers_pilot

    def delay_rate(self) -> np.ndarray:
        """Per-subcarrier ``2*pi*k*f_s/c`` for ``k = 1..K`` (rad per metre)."""
        k = np.arange(1, self.k_sub + 1)
        return 2.0 * np.pi * k * self.subcarrier_spacing_hz / self.light_speed

    @classmethod
    def default(cls, n_t=(16, 1), n_r=(4, 1), k_sub=2, carrier_hz=1e12,
                subcarrier_spacing_hz=120e3) -> "SystemConfig":
        return cls(
            carrier_hz=carrier_hz,
            subcarrier_spacing_hz=subcarrier_spacing_hz,
            bs_array=ArrayGeometry.half_wave(*n_t, carrier_hz),
            ue_array=ArrayGeometry.half_wave(*n_r, carrier_hz),
            n_subcarriers_pilot=k_sub,
        )


@dataclass(frozen=True)
class LargeScaleParams:
    """Direction cosines of both link ends and the BS-UE distance."""

    theta_r: float
    phi_r: float
    theta_t: float
    phi_t: float
    r_m: float

    def __post_init__(self):
        vals = (self.theta_r, self.phi_r, self.theta_t, self.phi_t, self.r_m)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite large-scale parameters: {vals}")
        if not self.r_m > 0:
            raise ValueError(f"distance must be positive, got {self.r_m}")

    def as_array(self) -> np.ndarray:
        return np.array([self.theta_r, self.phi_r, self.theta_t, self.phi_t, self.r_m])

    @classmethod
    def from_array(cls, a) -> "LargeScaleParams":
        return cls(*(float(v) for v in a))


@dataclass(frozen=True)
class SmallScaleParams:
    alpha: complex

    def __post_init__(self):
        if not np.isfinite(self.alpha):
            raise ValueError(f"non-finite path gain {self.alpha}")


@dataclass(frozen=True)
class ChannelBlock:
    h_per_subcarrier: np.ndarray  # (K, n_r, n_t)
    truth_large: LargeScaleParams
    truth_small: SmallScaleParams
    block_index: int = 1


@dataclass(frozen=True)
class Trajectory:
    """Straight-line UE motion at constant speed, one position per beam-coherence block.

    ``ue_yaw_rad`` rotates the UE array away from facing the BS at the start
    position (rotation about the axis normal to the plane of motion).
    """

    start_position: tuple[float, float, float]
    velocity_mps: float = 3.0 / 3.6
    heading: tuple[float, float, float] = (1.0, 0.0, 0.0)
    beam_interval_s: float = 20e-3
    ue_yaw_rad: float = 0.0
    plane_normal: tuple[float, float, float] = (0.0, 1.0, 0.0)

    def __post_init__(self):
        if self.velocity_mps < 0:
            raise ValueError("velocity must be non-negative")
        if abs(np.linalg.norm(self.heading) - 1.0) > 1e-9:
            raise ValueError(f"heading must have unit norm, got {self.heading}")

    def position(self, block: int) -> np.ndarray:
        if block < 1:
            raise ValueError(f"block index is 1-based, got {block}")
        step = self.velocity_mps * self.beam_interval_s * (block - 1)
        return np.asarray(self.start_position, float) + step * np.asarray(self.heading, float)


@dataclass(frozen=True)
class MultipathConfig:
    n_paths: int = 3
    power_gain_p0: float = 1.0
    center_freq_f: float = 28e9
    distance_R: float = 10.0


# ---------------------------------------------------------------------------
# geometry primitives


def direction_cosines(theta_az: float, theta_el: float) -> tuple[float, float]:
    st = np.sin(theta_el)
    return np.cos(theta_az) * st, np.sin(theta_az) * st


def far_steering(theta, phi, geom: ArrayGeometry) -> np.ndarray:
    """Planar-wave response ``kron(a_x(theta), a_y(phi))``.

    ``theta``/``phi`` may be arrays of equal shape ``S``; the result then has
    shape ``S + (n_h * n_v,)``.
    """
    x, y = geom.element_indices()
    theta = np.asarray(theta, float)[..., None]
    phi = np.asarray(phi, float)[..., None]
    return np.exp(-1j * np.pi * (x * theta + y * phi))


def _near_phase(r, theta, phi, geom: ArrayGeometry) -> np.ndarray:
    """Per-element phase ``pi * dr_taylor / d`` (broadcast over leading dims)."""
    x, y = geom.element_indices()
    r = np.asarray(r, float)[..., None]
    theta = np.asarray(theta, float)[..., None]
    phi = np.asarray(phi, float)[..., None]
    proj = x * theta + y * phi
    curv = geom.spacing_d / (2.0 * r) * (x * x + y * y - proj * proj)
    return np.pi * (-proj + curv)


def delta_r(r: float, theta_az: float, theta_el: float, x: int, y: int, d: float,
            mode: str = "taylor") -> float:
    """Path-length difference between element ``(x, y)`` (1-based) and the reference.

    ``mode="exact"`` evaluates the square-root distance, ``mode="taylor"`` the
    second-order expansion used by the channel model.
    """
    if not r > 0:
        raise ValueError(f"r must be positive, got {r}")
    if x < 1 or y < 1:
        raise ValueError("element indices are 1-based")
    theta, phi = direction_cosines(theta_az, theta_el)
    dx, dy = (x - 1) * d, (y - 1) * d
    if mode == "exact":
        # r_xy^2 - r^2 written out to avoid cancellation in sqrt(...) - r
        diff_sq = -2.0 * r * (dx * theta + dy * phi) + dx * dx + dy * dy
        r_xy = math.sqrt(r * r + diff_sq)
        return diff_sq / (r_xy + r)
    if mode == "taylor":
        proj = dx * theta + dy * phi
        return -proj + (dx * dx + dy * dy - proj * proj) / (2.0 * r)
    raise ValueError(f"unknown mode {mode!r}")


def near_steering(r, theta, phi, geom: ArrayGeometry) -> np.ndarray:
    """Spherical-wave response ``D(r, theta, phi) @ a_far(theta, phi)``."""
    if np.any(np.asarray(r) <= 0):
        raise ValueError("r must be positive")
    return np.exp(1j * _near_phase(r, theta, phi, geom))


def rayleigh_distance(geom: ArrayGeometry, wavelength: float) -> float:
    if not wavelength > 0:
        raise ValueError("wavelength must be positive")
    d = geom.spacing_d
    aperture_sq = ((geom.n_h - 1) * d) ** 2 + ((geom.n_v - 1) * d) ** 2
    return 2.0 * aperture_sq / wavelength


# ---------------------------------------------------------------------------
# channel synthesis


def _check_finite(*vals):
    for v in vals:
        if not np.all(np.isfinite(v)):
            raise ValueError(f"non-finite channel parameter {v}")


def synth_channel(sys: SystemConfig, large: LargeScaleParams, small: SmallScaleParams,
                  k: int) -> np.ndarray:
    """Near-field LoS channel ``H[k]`` of shape ``(n_r, n_t)`` for subcarrier ``k`` (1-based)."""
    if not 1 <= k <= sys.k_sub:
        raise ValueError(f"subcarrier index {k} outside 1..{sys.k_sub}")
    _check_finite(large.as_array(), small.alpha)
    a_r = near_steering(large.r_m, large.theta_r, large.phi_r, sys.ue_array)
    a_t = near_steering(large.r_m, large.theta_t, large.phi_t, sys.bs_array)
    rot = np.exp(-2j * np.pi * large.r_m / sys.light_speed * k * sys.subcarrier_spacing_hz)
    return small.alpha * rot * np.outer(a_r, a_t.conj())


def synth_channels_batch(sys: SystemConfig, params: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Vectorized ``synth_channel`` over all subcarriers.

    ``params`` has shape ``S + (5,)`` ordered ``(theta_r, phi_r, theta_t, phi_t, r)``
    and ``alpha`` shape ``S``; returns ``S + (K, n_r, n_t)``.
    """
    params = np.asarray(params, float)
    _check_finite(params, alpha)
    th_r, ph_r, th_t, ph_t, r = np.moveaxis(params, -1, 0)
    a_r = near_steering(r, th_r, ph_r, sys.ue_array)
    a_t = near_steering(r, th_t, ph_t, sys.bs_array)
    rot = np.exp(-1j * r[..., None] * sys.delay_rate())
    gain = np.asarray(alpha)[..., None] * rot
    return gain[..., None, None] * (a_r[..., None, :, None] * a_t.conj()[..., None, None, :])


def channel_block(sys: SystemConfig, large: LargeScaleParams, small: SmallScaleParams,
                  block_index: int = 1) -> ChannelBlock:
    h = np.stack([synth_channel(sys, large, small, k) for k in range(1, sys.k_sub + 1)])
    return ChannelBlock(h, large, small, block_index)


# ---------------------------------------------------------------------------
# UE motion


def _ue_frame(traj: Trajectory) -> np.ndarray:
    """Columns are the UE array's local x, y, z axes in BS coordinates.

    Local z (boresight) faces the BS from the start position, local y is the
    plane normal, then the frame is yawed about local y.
    """
    p0 = np.asarray(traj.start_position, float)
    z = -p0 / np.linalg.norm(p0)
    n = np.asarray(traj.plane_normal, float)
    y = n - (n @ z) * z
    if np.linalg.norm(y) < 1e-12:
        y = np.array([0.0, 1.0, 0.0]) if abs(z[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
        y = y - (y @ z) * z
    y = y / np.linalg.norm(y)
    x = np.cross(y, z)
    c, s = math.cos(traj.ue_yaw_rad), math.sin(traj.ue_yaw_rad)
    x, z = c * x - s * z, s * x + c * z
    return np.column_stack([x, y, z])


def large_scale_at(traj: Trajectory, block: int) -> LargeScaleParams:
    """Geometry of block ``block`` (1-based). BS array lies in its x-y plane at the origin."""
    p = traj.position(block)
    r = float(np.linalg.norm(p))
    if r < 1e-9:
        raise ValueError(f"UE position {p} coincides with the BS")
    u_bs = p / r
    u_ue = _ue_frame(traj).T @ (-u_bs)
    return LargeScaleParams(float(u_ue[0]), float(u_ue[1]), float(u_bs[0]), float(u_bs[1]), r)


def draw_alpha(rng: np.random.Generator, size=None):
    return (rng.standard_normal(size) + 1j * rng.standard_normal(size)) / math.sqrt(2.0)


def evolve_trajectory(traj: Trajectory, sys: SystemConfig, block: int,
                      rng: np.random.Generator) -> tuple[LargeScaleParams, SmallScaleParams]:
    """Large-scale geometry of block ``block`` and a fresh CN(0, 1) path gain."""
    return large_scale_at(traj, block), SmallScaleParams(complex(draw_alpha(rng)))


def temporal_correlation(p1: LargeScaleParams, p2: LargeScaleParams, geom: ArrayGeometry,
                         side: str = "t") -> float:
    """Normalized inner product of the near-field steering vectors of two blocks.

    ``side`` selects the transmit (``"t"``) or receive (``"r"``) angles.
    """
    if side == "t":
        a1 = near_steering(p1.r_m, p1.theta_t, p1.phi_t, geom)
        a2 = near_steering(p2.r_m, p2.theta_t, p2.phi_t, geom)
    else:
        a1 = near_steering(p1.r_m, p1.theta_r, p1.phi_r, geom)
        a2 = near_steering(p2.r_m, p2.theta_r, p2.phi_r, geom)
    val = abs(np.vdot(a1, a2)) / (np.linalg.norm(a1) * np.linalg.norm(a2))
    return float(min(val, 1.0))


# ---------------------------------------------------------------------------
# narrowband far-field multipath generator


def farfield_multipath(cfg: MultipathConfig, n_t: int, rng: np.random.Generator,
                       angles=None, gains=None) -> np.ndarray:
    """``sqrt(n_t/L) * sum_l rho_l a(theta_l)`` with ``a`` normalized by ``1/n_t``.

    Path phases ``theta_l`` are uniform on ``[-pi, pi)`` and gains
    ``rho_l ~ CN(0, P0 / (f^2 R^2))`` unless given explicitly.
    """
    if cfg.n_paths < 1:
        raise ValueError("need at least one path")
    n_paths = cfg.n_paths
    if angles is None:
        angles = rng.uniform(-np.pi, np.pi, n_paths)
    if gains is None:
        var = cfg.power_gain_p0 / (cfg.center_freq_f ** 2 * cfg.distance_R ** 2)
        gains = math.sqrt(var) * draw_alpha(rng, n_paths)
    angles = np.asarray(angles, float)
    n = np.arange(n_t)
    resp = np.exp(1j * np.outer(angles, n)) / n_t
    return math.sqrt(n_t / n_paths) * (np.asarray(gains) @ resp)
